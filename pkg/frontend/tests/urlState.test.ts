import { describe, expect, it } from "vitest";

import { DEFAULT_FORM } from "../src/form";
import { readFormFromUrl, writeFormToUrl } from "../src/urlState";

describe("readFormFromUrl", () => {
  it("returns the defaults for an empty query", () => {
    expect(readFormFromUrl(DEFAULT_FORM, "")).toEqual(DEFAULT_FORM);
  });

  it("overrides only the fields present", () => {
    const form = readFormFromUrl(DEFAULT_FORM, "?n1=80&rho=0.3&mode=relative");
    expect(form.n1).toBe(80);
    expect(form.rho).toBe(0.3);
    expect(form.mode).toBe("relative");
    expect(form.n2).toBe(DEFAULT_FORM.n2);
    expect(form.target).toBe(DEFAULT_FORM.target);
  });

  it("ignores unparseable or unknown values", () => {
    const form = readFormFromUrl(DEFAULT_FORM, "?n1=banana&mode=sideways&junk=1");
    expect(form).toEqual(DEFAULT_FORM);
  });
});

describe("writeFormToUrl", () => {
  it("round trips through the location query string", () => {
    const form = { ...DEFAULT_FORM, n1: 64, d: 0.45, mode: "relative" as const };
    writeFormToUrl(form);
    expect(readFormFromUrl(DEFAULT_FORM, window.location.search)).toEqual(form);
  });

  it("uses replaceState so the history stack does not grow", () => {
    const depth = window.history.length;
    writeFormToUrl({ ...DEFAULT_FORM, n2: 75 });
    writeFormToUrl({ ...DEFAULT_FORM, n2: 76 });
    expect(window.history.length).toBe(depth);
  });
});
