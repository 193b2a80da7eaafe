/**
 * Mounts the power explorer: a design form on the left, the curves and
 * minimal-remeasurement highlight on the right. Every displayed power value
 * comes from the service payload; the app itself only validates inputs,
 * schedules requests, and renders what it received.
 */

import { curveToCsv, isMonotoneNonDecreasing, renderChartSvg } from "./curve";
import {
  DEFAULT_FORM,
  NUMERIC_FIELDS,
  type DesignForm,
  type NumericField,
} from "./form";
import { PowerExplorer, type ExplorerOptions, type ExplorerState } from "./store";
import { writeFormToUrl } from "./urlState";

const FIELD_LABELS: Record<NumericField, string> = {
  n1: "controls in batch 1 (n1)",
  n2: "cases in batch 2 (n2)",
  rho: "between-batch correlation (rho)",
  d: "effect size (d)",
  alpha: "significance level (alpha)",
  sigma1: "control noise SD (sigma1)",
  target: "target power",
};

const FIELD_STEPS: Record<NumericField, string> = {
  n1: "1",
  n2: "1",
  rho: "0.05",
  d: "0.05",
  alpha: "0.01",
  sigma1: "0.1",
  target: "0.05",
};

export interface AppOptions extends ExplorerOptions {
  form?: DesignForm;
  /** Mirror the form into the URL query string (on by default). */
  syncUrl?: boolean;
}

function fieldRow(name: NumericField, value: number): string {
  return `
    <label class="field">
      <span class="field-name">${FIELD_LABELS[name]}</span>
      <input type="number" step="${FIELD_STEPS[name]}" data-field="${name}" value="${value}" />
      <span class="field-error" data-error-for="${name}" hidden></span>
    </label>`;
}

function buildDom(root: HTMLElement, form: DesignForm): void {
  root.innerHTML = `
    <main class="explorer">
      <h1>Remeasurement power explorer</h1>
      <p class="intro">
        Plan how many batch-1 controls to remeasure in batch 2. Adjust the
        design below; curves and answers refresh as you type.
      </p>
      <div class="layout">
        <form class="design-form" autocomplete="off">
          ${NUMERIC_FIELDS.map((name) => fieldRow(name, form[name])).join("")}
          <label class="field">
            <span class="field-name">target mode</span>
            <select data-field="mode">
              <option value="absolute">absolute power</option>
              <option value="relative">fraction of optimal power</option>
            </select>
            <span class="field-error" data-error-for="mode" hidden></span>
          </label>
          <button type="button" data-testid="export-csv" disabled>Export curve CSV</button>
        </form>
        <section class="results">
          <div class="banner loading" data-testid="loading" hidden>computing&hellip;</div>
          <div class="banner error" data-testid="failure" hidden></div>
          <div class="banner warning" data-testid="unachievable" hidden></div>
          <div class="banner notice" data-testid="flat-notice" hidden></div>
          <div class="banner error" data-testid="integrity-warning" hidden></div>
          <div class="highlight-text" data-testid="highlight"></div>
          <div class="chart" data-testid="chart"></div>
          <div class="summary" data-testid="summary"></div>
        </section>
      </div>
    </main>`;
  const select = root.querySelector<HTMLSelectElement>('select[data-field="mode"]')!;
  select.value = form.mode;
}

function show(el: HTMLElement, text?: string): void {
  el.hidden = false;
  if (text !== undefined) el.textContent = text;
}

function hide(el: HTMLElement): void {
  el.hidden = true;
}

function renderFieldErrors(root: HTMLElement, state: ExplorerState): void {
  const messages = new Map<string, string>();
  for (const err of state.serverErrors) {
    messages.set(err.field, err.message);
  }
  for (const [field, message] of Object.entries(state.fieldErrors)) {
    messages.set(field, message as string);
  }
  root.querySelectorAll<HTMLElement>("[data-error-for]").forEach((span) => {
    const field = span.dataset.errorFor!;
    const message = messages.get(field);
    if (message) {
      show(span, message);
    } else {
      hide(span);
    }
  });
}

function highlightFor(state: ExplorerState): { value: number | null; text: string } {
  const response = state.response;
  if (response === null || response.target === null) {
    return { value: null, text: "" };
  }
  if (response.mode === "relative") {
    const m = response.min_remeasured_relative;
    return m === null
      ? { value: null, text: "no remeasurement count reaches the relative target" }
      : {
          value: m,
          text: `n1' = ${m} is the smallest remeasurement count reaching ${response.target} of the optimal power`,
        };
  }
  const m = response.min_remeasured_absolute;
  return m === null
    ? { value: null, text: "no remeasurement count reaches the absolute target" }
    : {
        value: m,
        text: `n1' = ${m} is the smallest remeasurement count reaching absolute power ${response.target}`,
      };
}

function render(root: HTMLElement, state: ExplorerState): void {
  const el = <T extends HTMLElement>(selector: string): T =>
    root.querySelector<T>(selector)!;
  renderFieldErrors(root, state);

  const loading = el<HTMLElement>('[data-testid="loading"]');
  state.loading ? show(loading) : hide(loading);

  const failure = el<HTMLElement>('[data-testid="failure"]');
  state.failure !== null ? show(failure, state.failure) : hide(failure);

  const unachievable = el<HTMLElement>('[data-testid="unachievable"]');
  if (state.unachievable !== null) {
    show(unachievable, `target unachievable, max power = ${state.unachievable.toFixed(3)}`);
  } else {
    hide(unachievable);
  }

  const flat = el<HTMLElement>('[data-testid="flat-notice"]');
  // Requests for d = 0 omit the target, so a null target echo marks the
  // response as belonging to the zero-effect form, not a stale predecessor.
  if (state.form.d === 0 && state.response !== null && state.response.target === null) {
    show(
      flat,
      `no detectable effect: with d = 0 the curve stays flat at alpha = ${state.form.alpha}`,
    );
  } else {
    hide(flat);
  }

  const integrity = el<HTMLElement>('[data-testid="integrity-warning"]');
  const chart = el<HTMLElement>('[data-testid="chart"]');
  const highlightText = el<HTMLElement>('[data-testid="highlight"]');
  const summary = el<HTMLElement>('[data-testid="summary"]');
  const exportBtn = el<HTMLButtonElement>('[data-testid="export-csv"]');

  if (state.response === null) {
    hide(integrity);
    exportBtn.disabled = true;
    return;
  }

  const curve = state.response.curve;
  const monotone =
    isMonotoneNonDecreasing(curve.map((p) => p.absolute_power)) &&
    isMonotoneNonDecreasing(curve.map((p) => p.relative_power));
  if (!monotone) {
    show(
      integrity,
      "data integrity warning: the received power curve is not monotone non-decreasing; refusing to plot it",
    );
    chart.innerHTML = "";
    highlightText.textContent = "";
    summary.textContent = "";
    exportBtn.disabled = true;
    return;
  }
  hide(integrity);

  const highlight = highlightFor(state);
  highlightText.textContent = highlight.text;
  chart.innerHTML = renderChartSvg(curve, highlight.value);
  summary.textContent = `optimal power with every control remeasured: ${state.response.optimal_power.toFixed(3)}`;
  exportBtn.disabled = false;
}

function parseInputValue(input: HTMLInputElement): number {
  return input.value.trim() === "" ? Number.NaN : Number(input.value);
}

export function initApp(root: HTMLElement, options: AppOptions = {}): PowerExplorer {
  const form = options.form ?? DEFAULT_FORM;
  buildDom(root, form);
  const syncUrl = options.syncUrl ?? true;

  const explorer = new PowerExplorer(form, (state) => render(root, state), {
    fetcher: options.fetcher,
    debounceMs: options.debounceMs,
  });

  root.querySelectorAll<HTMLInputElement>("input[data-field]").forEach((input) => {
    input.addEventListener("input", () => {
      const field = input.dataset.field as NumericField;
      explorer.setField(field, parseInputValue(input));
      if (syncUrl && Object.keys(explorer.state.fieldErrors).length === 0) {
        writeFormToUrl(explorer.state.form);
      }
    });
  });
  const select = root.querySelector<HTMLSelectElement>('select[data-field="mode"]')!;
  select.addEventListener("change", () => {
    explorer.setField("mode", select.value as DesignForm["mode"]);
    if (syncUrl) writeFormToUrl(explorer.state.form);
  });

  const exportBtn = root.querySelector<HTMLButtonElement>('[data-testid="export-csv"]')!;
  exportBtn.addEventListener("click", () => {
    const response = explorer.state.response;
    if (response === null || typeof URL.createObjectURL !== "function") return;
    const blob = new Blob([curveToCsv(response.curve)], { type: "text/csv" });
    const anchor = document.createElement("a");
    anchor.href = URL.createObjectURL(blob);
    anchor.download = "power_curve.csv";
    anchor.click();
    URL.revokeObjectURL(anchor.href);
  });

  explorer.start();
  return explorer;
}
