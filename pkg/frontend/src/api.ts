/**
 * Client for POST /api/power. Non-2xx statuses become ApiError values that
 * carry the service's structured payloads: field-level messages for 400 and
 * the maximum achievable power for 422.
 */

import type { FieldError, PowerRequest, PowerResponse } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly fieldErrors: FieldError[] = [],
    readonly maxAchievablePower: number | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

let apiBase = "";

/** Points the client at another origin (used by tests; default is same-origin). */
export function setApiBase(base: string): void {
  apiBase = base;
}

export async function fetchPower(
  request: PowerRequest,
  signal?: AbortSignal,
): Promise<PowerResponse> {
  const response = await fetch(`${apiBase}/api/power`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
    signal,
  });
  if (response.status === 400) {
    const body = await response.json();
    throw new ApiError(400, "invalid request", body.errors ?? []);
  }
  if (response.status === 422) {
    const body = await response.json();
    throw new ApiError(
      422,
      body.error ?? "target unachievable",
      [],
      body.max_achievable_power ?? null,
    );
  }
  if (!response.ok) {
    throw new ApiError(response.status, `service error (status ${response.status})`);
  }
  return response.json();
}
