import { describe, expect, it } from "vitest";

import { barWidth, pct, riskColor, signedPct } from "../src/format.js";

describe("formatting", () => {
  it("renders probabilities as percents", () => {
    expect(pct(0.1234)).toBe("12.3%");
    expect(pct(1)).toBe("100.0%");
    expect(pct(0)).toBe("0.0%");
  });

  it("signed percents carry an explicit sign", () => {
    expect(signedPct(0.05)).toBe("+5.0%");
    expect(signedPct(-0.05)).toBe("−5.0%");
  });

  it("risk colors sweep from green to red", () => {
    expect(riskColor(0)).toBe("hsl(120, 70%, 42%)");
    expect(riskColor(1)).toBe("hsl(0, 70%, 42%)");
    expect(riskColor(2)).toBe("hsl(0, 70%, 42%)"); // clamped
  });

  it("bar widths never vanish entirely", () => {
    expect(barWidth(0)).toBe("0.50%");
    expect(barWidth(0.5)).toBe("50.00%");
  });
});
