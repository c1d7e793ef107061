/** CLI process runner with error-code translation. */

import { spawnSync } from "node:child_process";
import { BridgeError } from "./errors.js";

const ERROR_LINE = /error\[([a-z0-9_]+)\]:\s*(.*)/;

export interface RunnerOptions {
  /** Command prefix for the toolkit CLI; default `python3 -m attnprune`. */
  command?: string[];
}

export function defaultCommand(): string[] {
  const env = process.env.ATTNPRUNE_CLI;
  if (env) return env.split(" ").filter((part) => part.length > 0);
  return ["python3", "-m", "attnprune"];
}

export function runCli(args: string[], options?: RunnerOptions): string {
  const command = options?.command ?? defaultCommand();
  const result = spawnSync(command[0], [...command.slice(1), ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (result.error) {
    throw new BridgeError("cli_unavailable", String(result.error));
  }
  if (result.status !== 0) {
    const match = ERROR_LINE.exec(result.stderr ?? "");
    if (match) {
      throw new BridgeError(match[1], match[2]);
    }
    throw new BridgeError(
      result.status === 3 ? "infeasible_budget" : "validation",
      `CLI exited ${result.status}: ${result.stderr}`,
    );
  }
  return result.stdout ?? "";
}
