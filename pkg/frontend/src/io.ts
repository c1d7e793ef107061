/** File codecs for the toolkit's exchange formats. */

import { readFileSync, writeFileSync } from "node:fs";
import { BridgeError } from "./errors.js";

/** Contiguous float32 buffer plus its shape; copied at every boundary. */
export interface FlatBuffer {
  data: Float32Array;
  rows: number;
  cols: number;
  heads: number;
}

export interface MaskDescriptor {
  total: number;
  ratio: number;
  retained: number[];
}

export function flatBuffer(
  data: Float32Array | number[],
  rows: number,
  cols: number,
  heads = 1,
): FlatBuffer {
  const copy = Float32Array.from(data);
  const buffer = { data: copy, rows, cols, heads };
  checkShape(buffer);
  return buffer;
}

export function checkShape(buffer: FlatBuffer): void {
  const { data, rows, cols, heads } = buffer;
  if (
    !Number.isInteger(rows) ||
    !Number.isInteger(cols) ||
    !Number.isInteger(heads) ||
    rows < 1 ||
    cols < 1 ||
    heads < 1
  ) {
    throw new BridgeError("shape_mismatch", `bad shape ${heads}x${rows}x${cols}`);
  }
  if (data.length !== rows * cols * heads) {
    throw new BridgeError(
      "shape_mismatch",
      `buffer holds ${data.length} floats, shape promises ${heads * rows * cols}`,
    );
  }
}

/** Raw little-endian f32 file plus the JSON sidecar the CLI expects. */
export function writeMatrix(path: string, buffer: FlatBuffer): void {
  checkShape(buffer);
  // Float32Array is little-endian on every Node-supported platform
  writeFileSync(path, Buffer.from(buffer.data.buffer, 0, buffer.data.byteLength));
  writeFileSync(
    `${path}.json`,
    JSON.stringify({ rows: buffer.rows, cols: buffer.cols, heads: buffer.heads }),
  );
}

export function readMatrix(path: string, metaPath?: string): FlatBuffer {
  const meta = JSON.parse(readFileSync(metaPath ?? `${path}.json`, "utf-8")) as {
    rows: number;
    cols: number;
    heads?: number;
  };
  const raw = readFileSync(path);
  const data = new Float32Array(raw.buffer, raw.byteOffset, raw.byteLength / 4);
  return flatBuffer(data, meta.rows, meta.cols, meta.heads ?? 1);
}

export function parseScoresCsv(text: string): Float64Array {
  const rows = text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0 && !line.startsWith("index"));
  return Float64Array.from(rows, (line) => {
    const cells = line.split(",");
    return Number(cells[cells.length - 1]);
  });
}

export function writeScoresCsv(path: string, values: Float64Array | number[]): void {
  const lines = ["index,value"];
  Array.from(values).forEach((v, i) => lines.push(`${i},${exactDecimal(v)}`));
  writeFileSync(path, lines.join("\n") + "\n");
}

/** Shortest decimal that round-trips the exact binary64 value. */
function exactDecimal(v: number): string {
  return Object.is(v, -0) ? "-0" : String(v);
}

export function readMask(path: string): MaskDescriptor {
  const doc = JSON.parse(readFileSync(path, "utf-8")) as MaskDescriptor;
  return { total: doc.total, ratio: doc.ratio, retained: [...doc.retained] };
}

export function readFileText(path: string): string {
  return readFileSync(path, "utf-8");
}
