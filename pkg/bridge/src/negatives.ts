/** Generated negative responses, one per dialogue context.
 *
 * The generator is trained on (context -> ground-truth response) pairs from
 * the given dialogue file and then asked for a fresh response to each
 * context. Output follows the engine's generated-negatives JSONL schema;
 * empty generations are dropped and flagged.
 */

import { contextText, readCollection, readDialogues, writeJsonl } from "./data.js";
import { CountGenerator } from "./generator.js";
import { seededRand } from "./rng.js";

export interface GenNegativesConfig {
  dialogues: string;
  collection: string; // supplies response texts for training pairs
  output: string;
  topK?: number;
  epochs?: number;
  maxLength?: number;
  seed?: number;
}

export interface GenNegativesResult {
  contexts: number;
  generated: number;
  dropped: number;
}

export function generateNegatives(cfg: GenNegativesConfig): GenNegativesResult {
  const seed = cfg.seed ?? 0;
  const dialogues = readDialogues(cfg.dialogues);
  const collection = readCollection(cfg.collection);
  const byId = new Map(collection.map((p) => [p.id, p]));

  const pairs = [];
  for (const d of dialogues) {
    const response = byId.get(d.response_id);
    if (!response) continue;
    pairs.push({ source: contextText(d), target: response.text });
  }
  if (pairs.length === 0) {
    throw new Error("no (context, response) training pairs could be built");
  }
  const generator = new CountGenerator({
    topK: cfg.topK ?? 10,
    epochs: cfg.epochs,
    maxLength: cfg.maxLength,
  });
  generator.train(pairs);

  let dropped = 0;
  const rows = [];
  for (const d of dialogues) {
    const rand = seededRand(seed, `negatives:${d.id}`);
    const text = generator.generate(contextText(d), rand);
    if (text.trim().length === 0) {
      dropped += 1;
      console.warn(`empty generation for context ${d.id}; omitted`);
      continue;
    }
    rows.push({ context_id: d.id, text });
  }
  writeJsonl(cfg.output, rows);
  return { contexts: dialogues.length, generated: rows.length, dropped };
}
