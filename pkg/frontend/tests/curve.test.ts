import { describe, expect, it } from "vitest";

import { curveToCsv, isMonotoneNonDecreasing, renderChartSvg } from "../src/curve";
import type { CurvePoint } from "../src/types";
import defaultResponse from "./fixtures/default_response.json";

const SAMPLE: CurvePoint[] = [
  { n1_prime: 2, absolute_power: 0.17, relative_power: 0.2, oracle_sd: 0.59 },
  { n1_prime: 3, absolute_power: 0.23, relative_power: 0.27, oracle_sd: 0.49 },
  { n1_prime: 4, absolute_power: 0.28, relative_power: 0.33, oracle_sd: 0.43 },
];

describe("isMonotoneNonDecreasing", () => {
  it("accepts non-decreasing sequences and tiny wiggles within slack", () => {
    expect(isMonotoneNonDecreasing([0.1, 0.1, 0.2, 0.9])).toBe(true);
    expect(isMonotoneNonDecreasing([0.1, 0.1 - 1e-12, 0.2])).toBe(true);
    expect(isMonotoneNonDecreasing([])).toBe(true);
    expect(isMonotoneNonDecreasing([0.4])).toBe(true);
  });

  it("rejects a real dip", () => {
    expect(isMonotoneNonDecreasing([0.1, 0.3, 0.2])).toBe(false);
  });

  it("accepts the service curve fixture", () => {
    const absolute = defaultResponse.curve.map((p) => p.absolute_power);
    const relative = defaultResponse.curve.map((p) => p.relative_power);
    expect(isMonotoneNonDecreasing(absolute)).toBe(true);
    expect(isMonotoneNonDecreasing(relative)).toBe(true);
  });
});

describe("curveToCsv", () => {
  it("writes a header plus one row per point, verbatim values", () => {
    expect(curveToCsv(SAMPLE)).toBe(
      "n1_prime,absolute_power,relative_power,oracle_sd\n" +
        "2,0.17,0.2,0.59\n" +
        "3,0.23,0.27,0.49\n" +
        "4,0.28,0.33,0.43\n",
    );
  });
});

describe("renderChartSvg", () => {
  it("renders both curves and the highlight marker", () => {
    const svg = renderChartSvg(SAMPLE, 3);
    expect(svg).toContain("curve-absolute");
    expect(svg).toContain("curve-relative");
    expect(svg).toContain('data-testid="highlight-line"');
    expect(svg).toContain("n1' = 3");
  });

  it("omits the highlight when none is given", () => {
    const svg = renderChartSvg(SAMPLE, null);
    expect(svg).not.toContain("highlight-line");
  });

  it("returns empty markup for an empty curve", () => {
    expect(renderChartSvg([], null)).toBe("");
  });
});
