/**
 * Form-to-service state machine.
 *
 * Edits are debounced so a burst of keystrokes produces one request, and every
 * request carries a monotonically increasing token. A response is applied only
 * if its token is still the newest, so a slow earlier response can never
 * overwrite a later one; the superseded request is also aborted as a courtesy
 * to the network layer.
 */

import { ApiError, fetchPower } from "./api";
import { formToRequest, validateForm, type DesignForm } from "./form";
import type { FieldError, PowerRequest, PowerResponse } from "./types";

export interface ExplorerState {
  form: DesignForm;
  /** Client-side validation messages keyed by field name. */
  fieldErrors: Partial<Record<keyof DesignForm, string>>;
  /** Field-level messages from a 400 response. */
  serverErrors: FieldError[];
  /** Maximum achievable power reported by a 422 response, else null. */
  unachievable: number | null;
  /** Last accepted service payload; every rendered number comes from here. */
  response: PowerResponse | null;
  loading: boolean;
  /** Network or unexpected-status message, else null. */
  failure: string | null;
}

export type Fetcher = (
  request: PowerRequest,
  signal?: AbortSignal,
) => Promise<PowerResponse>;

export interface ExplorerOptions {
  fetcher?: Fetcher;
  debounceMs?: number;
}

export class PowerExplorer {
  readonly state: ExplorerState;
  private readonly fetcher: Fetcher;
  private readonly debounceMs: number;
  private readonly onChange: (state: ExplorerState) => void;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private requestSeq = 0;
  private controller: AbortController | null = null;

  constructor(
    form: DesignForm,
    onChange: (state: ExplorerState) => void,
    options: ExplorerOptions = {},
  ) {
    this.onChange = onChange;
    this.fetcher = options.fetcher ?? fetchPower;
    this.debounceMs = options.debounceMs ?? 250;
    this.state = {
      form: { ...form },
      fieldErrors: validateForm(form),
      serverErrors: [],
      unachievable: null,
      response: null,
      loading: false,
      failure: null,
    };
  }

  /** Renders the initial state and, if the form is valid, fetches immediately. */
  start(): void {
    this.emit();
    if (Object.keys(this.state.fieldErrors).length === 0) {
      void this.send();
    }
  }

  setField<K extends keyof DesignForm>(name: K, value: DesignForm[K]): void {
    this.state.form[name] = value;
    this.state.fieldErrors = validateForm(this.state.form);
    this.state.serverErrors = [];
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (Object.keys(this.state.fieldErrors).length === 0) {
      this.timer = setTimeout(() => {
        this.timer = null;
        void this.send();
      }, this.debounceMs);
    }
    this.emit();
  }

  private async send(): Promise<void> {
    const token = ++this.requestSeq;
    this.controller?.abort();
    this.controller = new AbortController();
    this.state.loading = true;
    this.emit();
    try {
      const response = await this.fetcher(
        formToRequest(this.state.form),
        this.controller.signal,
      );
      if (token !== this.requestSeq) return; // superseded while in flight
      this.state.response = response;
      this.state.unachievable = null;
      this.state.serverErrors = [];
      this.state.failure = null;
    } catch (err) {
      if (token !== this.requestSeq) return;
      if (err instanceof ApiError && err.status === 400) {
        this.state.serverErrors = err.fieldErrors;
      } else if (err instanceof ApiError && err.status === 422) {
        this.state.unachievable = err.maxAchievablePower;
      } else if ((err as Error).name === "AbortError") {
        return;
      } else {
        this.state.failure = (err as Error).message;
      }
    } finally {
      if (token === this.requestSeq) {
        this.state.loading = false;
        this.emit();
      }
    }
  }

  private emit(): void {
    this.onChange(this.state);
  }
}
