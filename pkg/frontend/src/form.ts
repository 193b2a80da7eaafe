/**
 * Design form state and client-side validation.
 *
 * The validation rules mirror the service's own request invariants so that
 * obviously bad inputs never leave the browser; the service remains the
 * authority and its field-level errors are displayed when they disagree.
 */

import type { PowerRequest } from "./types";

export interface DesignForm {
  n1: number;
  n2: number;
  rho: number;
  d: number;
  alpha: number;
  sigma1: number;
  target: number;
  mode: "absolute" | "relative";
}

export const DEFAULT_FORM: DesignForm = {
  n1: 50,
  n2: 50,
  rho: 0.6,
  d: 0.6,
  alpha: 0.05,
  sigma1: 1.0,
  target: 0.8,
  mode: "absolute",
};

export const NUMERIC_FIELDS = [
  "n1",
  "n2",
  "rho",
  "d",
  "alpha",
  "sigma1",
  "target",
] as const;

export type NumericField = (typeof NUMERIC_FIELDS)[number];

/** Returns one message per invalid field; an empty object means the form may be sent. */
export function validateForm(form: DesignForm): Partial<Record<keyof DesignForm, string>> {
  const errors: Partial<Record<keyof DesignForm, string>> = {};
  if (!Number.isInteger(form.n1) || form.n1 < 1) {
    errors.n1 = "n1 must be an integer of at least 1";
  }
  if (!Number.isInteger(form.n2) || form.n2 < 2) {
    errors.n2 = "n2 must be an integer of at least 2";
  }
  if (!Number.isFinite(form.rho) || Math.abs(form.rho) >= 1) {
    errors.rho = "rho must lie strictly between -1 and 1";
  }
  if (!Number.isFinite(form.d)) {
    errors.d = "d must be a finite number";
  }
  if (!Number.isFinite(form.alpha) || form.alpha <= 0 || form.alpha >= 1) {
    errors.alpha = "alpha must lie strictly between 0 and 1";
  }
  if (!Number.isFinite(form.sigma1) || form.sigma1 <= 0) {
    errors.sigma1 = "sigma1 must be positive";
  }
  if (!Number.isFinite(form.target) || form.target <= 0 || form.target >= 1) {
    errors.target = "target must lie strictly between 0 and 1";
  }
  if (form.mode !== "absolute" && form.mode !== "relative") {
    errors.mode = "mode must be 'absolute' or 'relative'";
  }
  return errors;
}

/**
 * Builds the request body for a valid form. With d = 0 there is no effect to
 * detect, so the target is omitted and the plain curve is requested instead
 * of a minimal-remeasurement answer.
 */
export function formToRequest(form: DesignForm): PowerRequest {
  const request: PowerRequest = {
    n1: form.n1,
    n2: form.n2,
    rho: form.rho,
    d: form.d,
    alpha: form.alpha,
    sigma1: form.sigma1,
    mode: form.mode,
  };
  if (form.d !== 0) {
    request.target = form.target;
  }
  return request;
}
