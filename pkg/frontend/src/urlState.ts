/**
 * Encodes the design form in the URL query string so a configured explorer
 * can be shared as a link. Uses history.replaceState to avoid polluting the
 * back stack while the user tunes inputs.
 */

import { NUMERIC_FIELDS, type DesignForm } from "./form";

export function readFormFromUrl(
  defaults: DesignForm,
  search: string = window.location.search,
): DesignForm {
  const params = new URLSearchParams(search);
  const form: DesignForm = { ...defaults };
  for (const key of NUMERIC_FIELDS) {
    const raw = params.get(key);
    if (raw === null) continue;
    const value = Number(raw);
    if (Number.isFinite(value)) {
      form[key] = value;
    }
  }
  const mode = params.get("mode");
  if (mode === "absolute" || mode === "relative") {
    form.mode = mode;
  }
  return form;
}

export function writeFormToUrl(form: DesignForm): void {
  const url = new URL(window.location.href);
  for (const key of NUMERIC_FIELDS) {
    url.searchParams.set(key, String(form[key]));
  }
  url.searchParams.set("mode", form.mode);
  window.history.replaceState(null, "", url.toString());
}
