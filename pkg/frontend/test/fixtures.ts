/** Seeded random fixtures shared by the bridge tests. */

import { FlatBuffer, flatBuffer } from "../src/io.js";

/** mulberry32: tiny deterministic PRNG, plenty for test fixtures. */
export function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function normal(next: () => number): number {
  const u = Math.max(next(), 1e-12);
  const v = next();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
}

/** Row-stochastic softmax maps, stored as float32 like every boundary buffer. */
export function randomAttention(
  n: number,
  heads: number,
  concentration: number,
  seed: number,
): FlatBuffer {
  const next = rng(seed);
  const data = new Float32Array(heads * n * n);
  for (let h = 0; h < heads; h += 1) {
    for (let i = 0; i < n; i += 1) {
      const logits = Array.from({ length: n }, () => concentration * normal(next));
      const peak = Math.max(...logits);
      const exp = logits.map((z) => Math.exp(z - peak));
      const total = exp.reduce((a, b) => a + b, 0);
      for (let j = 0; j < n; j += 1) {
        data[h * n * n + i * n + j] = Math.fround(exp[j] / total);
      }
    }
  }
  return flatBuffer(data, n, n, heads);
}

export function randomTokens(rows: number, cols: number, seed: number): FlatBuffer {
  const next = rng(seed);
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i += 1) {
    data[i] = Math.fround(normal(next));
  }
  return flatBuffer(data, rows, cols);
}

/** Exact nested-array views (f32 widens to f64 losslessly). */
export function matrixOf(buffer: FlatBuffer, head = 0): number[][] {
  const out: number[][] = [];
  for (let i = 0; i < buffer.rows; i += 1) {
    const offset = head * buffer.rows * buffer.cols + i * buffer.cols;
    out.push(Array.from(buffer.data.subarray(offset, offset + buffer.cols)));
  }
  return out;
}

export function headsOf(buffer: FlatBuffer): number[][][] {
  return Array.from({ length: buffer.heads }, (_, h) => matrixOf(buffer, h));
}
