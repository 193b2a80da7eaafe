/**
 * Pure helpers for the received power curve: integrity checking, CSV export,
 * and SVG chart markup. All values plotted or exported come verbatim from the
 * service payload; nothing here computes power.
 */

import type { CurvePoint } from "./types";

/** True when the sequence never decreases beyond the slack. */
export function isMonotoneNonDecreasing(values: number[], slack = 1e-9): boolean {
  for (let i = 1; i < values.length; i++) {
    if (values[i] < values[i - 1] - slack) return false;
  }
  return true;
}

export function curveToCsv(curve: CurvePoint[]): string {
  const lines = ["n1_prime,absolute_power,relative_power,oracle_sd"];
  for (const point of curve) {
    lines.push(
      `${point.n1_prime},${point.absolute_power},${point.relative_power},${point.oracle_sd}`,
    );
  }
  return lines.join("\n") + "\n";
}

const WIDTH = 640;
const HEIGHT = 360;
const PAD = 44;

function xScale(curve: CurvePoint[]): (m: number) => number {
  const lo = curve[0].n1_prime;
  const hi = curve[curve.length - 1].n1_prime;
  const span = Math.max(hi - lo, 1);
  return (m) => PAD + ((m - lo) / span) * (WIDTH - 2 * PAD);
}

function yScale(power: number): number {
  return HEIGHT - PAD - power * (HEIGHT - 2 * PAD);
}

function polyline(curve: CurvePoint[], pick: (p: CurvePoint) => number, cls: string): string {
  const x = xScale(curve);
  const points = curve
    .map((p) => `${x(p.n1_prime).toFixed(2)},${yScale(pick(p)).toFixed(2)}`)
    .join(" ");
  return `<polyline class="${cls}" fill="none" points="${points}" />`;
}

/**
 * Renders both power curves with a vertical highlight at the minimal
 * remeasurement count for the active mode, if one was supplied.
 */
export function renderChartSvg(curve: CurvePoint[], highlight: number | null): string {
  if (curve.length === 0) return "";
  const x = xScale(curve);
  const parts: string[] = [
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="power versus remeasured controls">`,
  ];
  for (const tick of [0, 0.25, 0.5, 0.75, 1]) {
    const y = yScale(tick).toFixed(2);
    parts.push(`<line class="grid" x1="${PAD}" y1="${y}" x2="${WIDTH - PAD}" y2="${y}" />`);
    parts.push(`<text class="tick" x="${PAD - 6}" y="${y}" text-anchor="end">${tick}</text>`);
  }
  const lo = curve[0].n1_prime;
  const hi = curve[curve.length - 1].n1_prime;
  const step = Math.max(1, Math.round((hi - lo) / 8));
  for (let m = lo; m <= hi; m += step) {
    parts.push(
      `<text class="tick" x="${x(m).toFixed(2)}" y="${HEIGHT - PAD + 16}" text-anchor="middle">${m}</text>`,
    );
  }
  if (highlight !== null && highlight >= lo && highlight <= hi) {
    const hx = x(highlight).toFixed(2);
    parts.push(
      `<line class="highlight" data-testid="highlight-line" x1="${hx}" y1="${PAD}" x2="${hx}" y2="${HEIGHT - PAD}" />`,
    );
    parts.push(
      `<text class="highlight-label" x="${hx}" y="${PAD - 8}" text-anchor="middle">n1' = ${highlight}</text>`,
    );
  }
  parts.push(polyline(curve, (p) => p.absolute_power, "curve-absolute"));
  parts.push(polyline(curve, (p) => p.relative_power, "curve-relative"));
  parts.push(
    `<text class="legend curve-absolute-label" x="${PAD}" y="${PAD - 24}">absolute power</text>`,
  );
  parts.push(
    `<text class="legend curve-relative-label" x="${PAD + 150}" y="${PAD - 24}">relative power</text>`,
  );
  parts.push(`<text class="axis-label" x="${WIDTH / 2}" y="${HEIGHT - 6}" text-anchor="middle">remeasured controls (n1')</text>`);
  parts.push("</svg>");
  return parts.join("");
}
