/** Response-to-context expansion generation.
 *
 * Trains the generator on (ground-truth response -> dialogue context)
 * pairs, or (response -> last utterance) in last_utterance mode, then
 * emits predictions for every response in the collection in the engine's
 * expansion JSONL schema.
 */

import { contextText, lastUtteranceText, readCollection, readDialogues, writeJsonl } from "./data.js";
import { CountGenerator } from "./generator.js";
import { seededRand } from "./rng.js";

export type ExpansionMode = "full_context" | "last_utterance";

export interface ExpandConfig {
  dialogues: string;
  collection: string;
  output: string;
  mode?: ExpansionMode;
  numPredictions?: number;
  topK?: number;
  epochs?: number;
  learningRate?: number;
  weightDecay?: number;
  batchSize?: number;
  maxLength?: number;
  seed?: number;
}

export interface ExpandResult {
  responses: number;
  predictionsPerResponse: number;
  emptyEntries: number;
  mode: ExpansionMode;
}

const MAX_PREDICTIONS = 5;

export function trainAndGenerateExpansions(cfg: ExpandConfig): ExpandResult {
  const mode = cfg.mode ?? "full_context";
  const numPredictions = cfg.numPredictions ?? 3;
  if (numPredictions < 1 || numPredictions > MAX_PREDICTIONS) {
    throw new Error(`numPredictions must be in 1..${MAX_PREDICTIONS}`);
  }
  const seed = cfg.seed ?? 0;
  const dialogues = readDialogues(cfg.dialogues);
  const collection = readCollection(cfg.collection);
  const byId = new Map(collection.map((p) => [p.id, p]));

  const pairs = [];
  for (const d of dialogues) {
    const response = byId.get(d.response_id);
    if (!response) continue; // dialogue references an id outside this slice
    pairs.push({
      source: response.text,
      target: mode === "last_utterance" ? lastUtteranceText(d) : contextText(d),
    });
  }
  const generator = new CountGenerator({
    topK: cfg.topK ?? 10,
    epochs: cfg.epochs,
    learningRate: cfg.learningRate,
    weightDecay: cfg.weightDecay,
    batchSize: cfg.batchSize,
    maxLength: cfg.maxLength,
  });
  generator.train(pairs);

  let emptyEntries = 0;
  const rows = collection.map((passage) => {
    if (!generator.trained) {
      emptyEntries += 1;
      return { id: passage.id, predictions: [] as string[] };
    }
    const rand = seededRand(seed, `expand:${passage.id}`);
    const predictions = [];
    for (let n = 0; n < numPredictions; n++) {
      predictions.push(generator.generate(passage.text, rand));
    }
    return { id: passage.id, predictions };
  });
  if (emptyEntries > 0) {
    console.warn(`no training pairs: ${emptyEntries} empty prediction entries`);
  }
  writeJsonl(cfg.output, rows);
  return {
    responses: rows.length,
    predictionsPerResponse: numPredictions,
    emptyEntries,
    mode,
  };
}
