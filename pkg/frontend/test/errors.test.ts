/** Error translation: malformed inputs produce typed codes, never crashes. */

import { describe, expect, it } from "vitest";

import { BridgeError, PruneBridge, flatBuffer } from "../src/index.js";
import { randomAttention, randomTokens } from "./fixtures.js";

const bridge = new PruneBridge();

function codeOf(fn: () => unknown): string {
  try {
    fn();
  } catch (error) {
    expect(error).toBeInstanceOf(BridgeError);
    return (error as BridgeError).code;
  }
  throw new Error("expected a BridgeError");
}

describe("error translation", () => {
  it("rejects buffers whose length disagrees with the shape", () => {
    expect(codeOf(() => flatBuffer(new Float32Array(5), 2, 2))).toBe("shape_mismatch");
    const map = randomAttention(4, 1, 1.0, 1);
    const lying = { ...map, rows: 8 };
    expect(codeOf(() => bridge.score(lying))).toBe("shape_mismatch");
  });

  it("rejects score/token length mismatches", () => {
    const tokens = randomTokens(16, 2, 2);
    const code = codeOf(() =>
      bridge.pruneRecover(tokens, Float64Array.from([1, 2]), 0.5, null, "zeropad"),
    );
    expect(code).toBe("shape_mismatch");
  });

  it("rejects non-square attention for similarity copy", () => {
    const tokens = randomTokens(16, 2, 3);
    const attn = randomAttention(8, 1, 1.0, 4);
    const scores = Float64Array.from({ length: 16 }, () => 1);
    expect(codeOf(() => bridge.pruneRecover(tokens, scores, 0.5, attn, "simcopy"))).toBe(
      "shape_mismatch",
    );
  });

  it("translates native validation errors with their stable codes", () => {
    // rows that do not sum to one reach the toolkit and come back typed
    const bad = flatBuffer(Float32Array.from([0.7, 0.2, 0.5, 0.5]), 2, 2);
    expect(codeOf(() => bridge.score(bad))).toBe("row_sum_out_of_tolerance");
  });

  it("translates ratio range errors", () => {
    const tokens = randomTokens(4, 1, 5);
    const scores = Float64Array.from([1, 2, 3, 4]);
    expect(codeOf(() => bridge.pruneRecover(tokens, scores, 1.5, null, "zeropad"))).toBe(
      "ratio_out_of_range",
    );
  });

  it("translates infeasible budgets", () => {
    expect(codeOf(() => bridge.solveBudget(0.1))).toBe("target_below_floor");
  });

  it("solves a feasible budget", () => {
    const result = bridge.solveBudget(4.1, { tau: 15, policy: "FL" });
    expect(result.ratio).toBeGreaterThanOrEqual(0.58);
    expect(result.ratio).toBeLessThanOrEqual(0.68);
    expect(Math.abs(result.averageFlops - 4.1e12)).toBeLessThanOrEqual(0.005 * 4.1e12);
    expect(result.savingVsFull).toBeGreaterThan(0.3);
  });
});
