/**
 * Wire types for the power service. Field names are snake_case to match the
 * JSON payloads exactly; the app never reshapes service data.
 */

export interface PowerRequest {
  n1: number;
  n2: number;
  rho: number;
  d: number;
  alpha: number;
  sigma1: number;
  n1_prime_min?: number;
  n1_prime_max?: number;
  target?: number;
  mode: "absolute" | "relative";
}

export interface CurvePoint {
  n1_prime: number;
  absolute_power: number;
  relative_power: number;
  oracle_sd: number;
}

export interface PowerResponse {
  curve: CurvePoint[];
  optimal_power: number;
  min_remeasured_absolute: number | null;
  min_remeasured_relative: number | null;
  target: number | null;
  mode: string | null;
}

export interface FieldError {
  field: string;
  message: string;
}
