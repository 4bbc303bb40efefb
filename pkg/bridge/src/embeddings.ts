/** Mean-pooled embedding export in the engine's DVEC format.
 *
 * The built-in "hash-<dim>" model derives each token's vector procedurally
 * from a 64-bit hash, then mean-pools over tokens: deterministic, no
 * weights to download, identical texts give identical rows. Other model
 * ids would require bundled checkpoints and are rejected by name.
 */

import { contextWithSeparators, readCollection, readDialogues } from "./data.js";
import { writeDvec } from "./dvec.js";
import { tokenize } from "./generator.js";
import { fnv1a64, splitmix64, toUnit } from "./rng.js";

export interface EmbedConfig {
  input: string;
  kind: "collection" | "contexts";
  output: string;
  model?: string; // "hash-<dim>", default hash-64
}

export interface EmbedResult {
  rows: number;
  dim: number;
  model: string;
}

export function parseModelDim(model: string): number {
  const match = /^hash-(\d+)$/.exec(model);
  if (!match) {
    throw new Error(`model backend not bundled: ${model}`);
  }
  const dim = Number(match[1]);
  if (dim < 1 || dim > 4096) throw new Error(`unsupported dimension: ${dim}`);
  return dim;
}

export function embedText(text: string, dim: number): Float32Array {
  const tokens = tokenize(text);
  const vector = new Float32Array(dim);
  if (tokens.length === 0) return vector;
  const scale = 1.0 / Math.sqrt(dim);
  for (const token of tokens) {
    const h = fnv1a64(token);
    for (let j = 0; j < dim; j++) {
      const value = toUnit(splitmix64(h ^ BigInt(j * 0x9e37)));
      vector[j] += (value - 0.5) * scale;
    }
  }
  for (let j = 0; j < dim; j++) vector[j] /= tokens.length;
  return vector;
}

export function exportEmbeddings(cfg: EmbedConfig): EmbedResult {
  const model = cfg.model ?? "hash-64";
  const dim = parseModelDim(model);
  let ids: string[];
  let texts: string[];
  if (cfg.kind === "collection") {
    const passages = readCollection(cfg.input);
    ids = passages.map((p) => p.id);
    texts = passages.map((p) => p.text);
  } else {
    const dialogues = readDialogues(cfg.input);
    ids = dialogues.map((d) => d.id);
    texts = dialogues.map((d) => contextWithSeparators(d));
  }
  const matrix = new Float32Array(ids.length * dim);
  for (let i = 0; i < texts.length; i++) {
    matrix.set(embedText(texts[i], dim), i * dim);
  }
  writeDvec(cfg.output, { ids, dim, matrix });
  return { rows: ids.length, dim, model };
}
