#!/usr/bin/env node
/** Bridge CLI: `bridge <expand|embed|gen-negatives> --config <file>`.
 *
 * Exit codes: 0 success, 1 bad arguments/config, 2 runtime failure.
 */

import { readFileSync } from "node:fs";
import { exportEmbeddings } from "./embeddings.js";
import { trainAndGenerateExpansions } from "./expand.js";
import { generateNegatives } from "./negatives.js";

const USAGE = "usage: bridge <expand|embed|gen-negatives> --config <file.json>";

function loadConfig(argv: string[]): Record<string, unknown> {
  const flag = argv.indexOf("--config");
  if (flag === -1 || flag + 1 >= argv.length) {
    throw new UsageError(USAGE);
  }
  const path = argv[flag + 1];
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new UsageError(`cannot read config ${path}: ${(err as Error).message}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new UsageError(`${path}: config must be a JSON object`);
  }
  return parsed as Record<string, unknown>;
}

class UsageError extends Error {}

function requireKeys(config: Record<string, unknown>, keys: string[]): void {
  const missing = keys.filter((k) => typeof config[k] !== "string");
  if (missing.length > 0) {
    throw new UsageError(`config is missing string keys: ${missing.join(", ")}`);
  }
}

export function main(argv: string[]): number {
  try {
    const command = argv[0];
    switch (command) {
      case "expand": {
        const config = loadConfig(argv);
        requireKeys(config, ["dialogues", "collection", "output"]);
        const result = trainAndGenerateExpansions(config as never);
        console.log(
          `wrote ${result.responses} expansion entries ` +
            `(${result.predictionsPerResponse} predictions each, mode ${result.mode})`,
        );
        return 0;
      }
      case "embed": {
        const config = loadConfig(argv);
        requireKeys(config, ["input", "kind", "output"]);
        const result = exportEmbeddings(config as never);
        console.log(`wrote ${result.rows} embeddings at dim ${result.dim} (${result.model})`);
        return 0;
      }
      case "gen-negatives": {
        const config = loadConfig(argv);
        requireKeys(config, ["dialogues", "collection", "output"]);
        const result = generateNegatives(config as never);
        console.log(
          `generated ${result.generated}/${result.contexts} negatives ` +
            `(${result.dropped} dropped)`,
        );
        return 0;
      }
      default:
        throw new UsageError(USAGE);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return err instanceof UsageError ? 1 : 2;
  }
}

process.exit(main(process.argv.slice(2)));
