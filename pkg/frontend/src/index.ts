/**
 * Binding to the attnprune toolkit for JS-hosted pipeline hooks.
 *
 * Buffers are copied at the boundary (float32 + shape descriptor), the
 * toolkit runs out of process behind its CLI and file formats, and native
 * errors surface as {@link BridgeError} with the toolkit's stable code
 * strings. The protocol is versioned by a single integer ABI tag.
 */

import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BridgeError } from "./errors.js";
import {
  FlatBuffer,
  MaskDescriptor,
  checkShape,
  flatBuffer,
  parseScoresCsv,
  readFileText,
  readMask,
  readMatrix,
  writeMatrix,
  writeScoresCsv,
} from "./io.js";
import { RunnerOptions, runCli } from "./proc.js";

export { BridgeError } from "./errors.js";
export { FlatBuffer, MaskDescriptor, flatBuffer } from "./io.js";

/** Protocol tag this binding speaks; must match `attnprune --abi`. */
export const ABI_VERSION = 1;

export type MapperKind = "self" | "entropy" | "hardclip" | "softclip" | "power";

export interface MapperSpec {
  kind: MapperKind;
  eta?: number;
  alpha?: number;
  beta?: number;
}

export type RecoveryMethod = "simcopy" | "zeropad" | "bicubic" | "directcopy";

export interface PruneRecoverResult {
  tokens: FlatBuffer;
  mask: MaskDescriptor;
}

export interface BudgetOptions {
  resolution?: number;
  tau?: number;
  steps?: number;
  policy?: string;
  topology?: string;
  pruneBeforeFf?: boolean;
}

export interface BudgetResult {
  ratio: number;
  averageFlops: number;
  fullFlops: number;
  savingVsFull: number;
}

export interface GridShape {
  height?: number;
  width?: number;
}

export class PruneBridge {
  private readonly runner: RunnerOptions | undefined;
  private verifiedAbi = false;

  constructor(options?: RunnerOptions) {
    this.runner = options;
  }

  /** Queries the toolkit's ABI tag, failing fast on a mismatch. */
  abiVersion(): number {
    const tag = Number(this.run(["--abi"]).trim());
    if (!Number.isInteger(tag)) {
      throw new BridgeError("cli_unavailable", "ABI probe returned no integer");
    }
    return tag;
  }

  /**
   * Importance scores for an attention map or head stack.
   *
   * Multi-head buffers are scored per head and RMS-aggregated, matching
   * the native multi-head path.
   */
  score(map: FlatBuffer, mapper: MapperSpec = { kind: "self" }): Float64Array {
    checkShape(map);
    this.ensureAbi();
    return this.withWorkdir((dir) => {
      const mapPath = join(dir, "map.f32");
      writeMatrix(mapPath, map);
      const out = join(dir, "scores.csv");
      const args = [
        "score",
        "--map", mapPath,
        "--meta", `${mapPath}.json`,
        "--mapper", mapper.kind,
        "--out", out,
      ];
      if (mapper.eta !== undefined) args.push("--eta", String(mapper.eta));
      if (mapper.alpha !== undefined) args.push("--alpha", String(mapper.alpha));
      if (mapper.beta !== undefined) args.push("--beta", String(mapper.beta));
      this.run(args);
      return parseScoresCsv(readFileText(out));
    });
  }

  /**
   * Top-k prune + recover round trip: returns the rebuilt complete token
   * grid and the mask that produced it. `attn` is required for `simcopy`
   * (the head-averaged pre-pruning self-attention map); `directcopy`
   * falls back to the input tokens as the cached values.
   */
  pruneRecover(
    tokens: FlatBuffer,
    scores: Float64Array | number[],
    ratio: number,
    attn: FlatBuffer | null,
    method: RecoveryMethod,
    grid?: GridShape,
  ): PruneRecoverResult {
    checkShape(tokens);
    if (tokens.heads !== 1) {
      throw new BridgeError("shape_mismatch", "token grids are single-head");
    }
    const total = tokens.rows;
    if (scores.length !== total) {
      throw new BridgeError(
        "shape_mismatch",
        `${scores.length} scores for ${total} tokens`,
      );
    }
    if (method === "simcopy") {
      if (!attn) {
        throw new BridgeError("config_invalid", "simcopy needs an attention map");
      }
      checkShape(attn);
      if (attn.rows !== total || attn.cols !== total) {
        throw new BridgeError(
          "shape_mismatch",
          `attention is ${attn.rows}x${attn.cols}, tokens need ${total}x${total}`,
        );
      }
    }
    this.ensureAbi();
    return this.withWorkdir((dir) => {
      const scoresPath = join(dir, "scores.csv");
      writeScoresCsv(scoresPath, scores);
      const maskPath = join(dir, "mask.json");
      this.run([
        "mask",
        "--scores", scoresPath,
        "--ratio", String(ratio),
        "--out", maskPath,
      ]);
      const mask = readMask(maskPath);
      // row gather at the boundary: pure selection, bit-exact
      const prunedData = new Float32Array(mask.retained.length * tokens.cols);
      mask.retained.forEach((tokenIndex, row) => {
        prunedData.set(
          tokens.data.subarray(tokenIndex * tokens.cols, (tokenIndex + 1) * tokens.cols),
          row * tokens.cols,
        );
      });
      const prunedPath = join(dir, "pruned.f32");
      writeMatrix(prunedPath, flatBuffer(prunedData, mask.retained.length, tokens.cols));
      const outPath = join(dir, "full.f32");
      const args = [
        "recover",
        "--method", method,
        "--pruned", prunedPath,
        "--mask", maskPath,
        "--out", outPath,
      ];
      if (grid?.height !== undefined && grid?.width !== undefined) {
        args.push("--height", String(grid.height), "--width", String(grid.width));
      }
      if (method === "simcopy" && attn) {
        const attnPath = join(dir, "attn.f32");
        writeMatrix(attnPath, attn);
        args.push("--attn", attnPath);
      }
      if (method === "directcopy") {
        const cachedPath = join(dir, "cached.f32");
        writeMatrix(cachedPath, tokens);
        args.push("--cached", cachedPath);
      }
      this.run(args);
      return { tokens: readMatrix(outPath), mask };
    });
  }

  /** Solves a per-step FLOPs budget (in TFLOPs) into a pruning ratio. */
  solveBudget(targetTflops: number, options?: BudgetOptions): BudgetResult {
    this.ensureAbi();
    return this.withWorkdir((dir) => {
      const out = join(dir, "profile.json");
      const args = [
        "profile",
        "--topology", options?.topology ?? "default",
        "--resolution", String(options?.resolution ?? 1024),
        "--target-tflops", String(targetTflops),
        "--tau", String(options?.tau ?? 0),
        "--steps", String(options?.steps ?? 50),
        "--policy", options?.policy ?? "FL",
        "--out", out,
      ];
      if (options?.pruneBeforeFf) args.push("--prune-before-ff");
      this.run(args);
      const doc = JSON.parse(readFileText(out)) as {
        ratio: number;
        average_step_flops: number;
        full_step_flops: number;
        saving_vs_full: number;
      };
      return {
        ratio: doc.ratio,
        averageFlops: doc.average_step_flops,
        fullFlops: doc.full_step_flops,
        savingVsFull: doc.saving_vs_full,
      };
    });
  }

  private ensureAbi(): void {
    if (this.verifiedAbi) return;
    const tag = this.abiVersion();
    if (tag !== ABI_VERSION) {
      throw new BridgeError(
        "abi_mismatch",
        `toolkit speaks ABI ${tag}, binding expects ${ABI_VERSION}`,
      );
    }
    this.verifiedAbi = true;
  }

  private run(args: string[]): string {
    return runCli(args, this.runner);
  }

  private withWorkdir<T>(body: (dir: string) => T): T {
    const dir = mkdtempSync(join(tmpdir(), "attnprune-"));
    try {
      return body(dir);
    } finally {
      rmSync(dir, { recursive: true, force: true });
    }
  }
}
