/** Lightweight trainable text generator.
 *
 * A count-based conditional model standing in for the transformer backends:
 * it learns (source token -> target token) translation counts, target
 * bigram continuations, and the empirical target length distribution, then
 * decodes by sampling from the top-K most probable vocabulary tokens at
 * each position (K defaults to 10). Heavier backends can be plugged in
 * behind the same interface; this one trains in milliseconds and is fully
 * deterministic under a seeded random stream.
 */

import type { Rand } from "./rng.js";

export interface TrainingPair {
  source: string;
  target: string;
}

export interface GeneratorOptions {
  topK?: number; // decoding truncation, default 10
  epochs?: number; // count-accumulation passes, default 1
  learningRate?: number; // recorded for parity with neural backends
  weightDecay?: number;
  batchSize?: number;
  maxLength?: number; // hard cap on generated token count
}

export function tokenize(text: string): string[] {
  return text.toLowerCase().split(/\s+/).filter((t) => t.length > 0);
}

type Counts = Map<string, number>;

function bump(counts: Counts, key: string, amount = 1): void {
  counts.set(key, (counts.get(key) ?? 0) + amount);
}

function bump2(table: Map<string, Counts>, key: string, target: string): void {
  let inner = table.get(key);
  if (inner === undefined) {
    inner = new Map();
    table.set(key, inner);
  }
  bump(inner, target);
}

export class CountGenerator {
  readonly topK: number;
  readonly maxLength: number;
  readonly options: GeneratorOptions;
  private translation = new Map<string, Counts>();
  private translationTotals = new Map<string, number>();
  private bigram = new Map<string, Counts>();
  private unigram: Counts = new Map();
  private unigramTotal = 0;
  private lengths: number[] = [];

  constructor(options: GeneratorOptions = {}) {
    this.topK = options.topK ?? 10;
    this.maxLength = options.maxLength ?? 64;
    this.options = options;
    if (this.topK < 1) throw new Error("topK must be >= 1");
  }

  get trained(): boolean {
    return this.lengths.length > 0;
  }

  train(pairs: TrainingPair[]): void {
    const epochs = Math.max(1, this.options.epochs ?? 1);
    for (let epoch = 0; epoch < epochs; epoch++) {
      for (const pair of pairs) {
        const source = tokenize(pair.source);
        const target = tokenize(pair.target);
        if (target.length === 0) continue;
        if (epoch === 0) this.lengths.push(target.length);
        for (const t of target) {
          bump(this.unigram, t);
          this.unigramTotal += 1;
        }
        for (let i = 0; i + 1 < target.length; i++) {
          bump2(this.bigram, target[i], target[i + 1]);
        }
        for (const s of new Set(source)) {
          for (const t of target) {
            bump2(this.translation, s, t);
            bump(this.translationTotals, s);
          }
        }
      }
    }
    this.lengths.sort((a, b) => a - b);
  }

  /** Candidate scores for the next token given source tokens and the
   * previous emitted token; a translation/bigram/unigram mixture. */
  private scores(sourceTokens: string[], prev: string | null): Map<string, number> {
    const result = new Map<string, number>();
    const addMixture = (token: string) => {
      if (result.has(token)) return;
      let trans = 0;
      for (const s of sourceTokens) {
        const inner = this.translation.get(s);
        if (!inner) continue;
        const count = inner.get(token);
        if (count) trans += count / this.translationTotals.get(s)!;
      }
      if (sourceTokens.length > 0) trans /= sourceTokens.length;
      let big = 0;
      if (prev !== null) {
        const inner = this.bigram.get(prev);
        if (inner) {
          const count = inner.get(token);
          if (count) {
            let total = 0;
            for (const v of inner.values()) total += v;
            big = count / total;
          }
        }
      }
      const uni = (this.unigram.get(token) ?? 0) / this.unigramTotal;
      result.set(token, 0.5 * trans + 0.3 * big + 0.2 * uni);
    };

    for (const s of sourceTokens) {
      const inner = this.translation.get(s);
      if (inner) for (const token of inner.keys()) addMixture(token);
    }
    if (prev !== null) {
      const inner = this.bigram.get(prev);
      if (inner) for (const token of inner.keys()) addMixture(token);
    }
    if (result.size === 0) {
      for (const token of this.unigram.keys()) addMixture(token);
    }
    return result;
  }

  /** Top-K candidates by score (ties by token) with renormalized weights. */
  topCandidates(
    sourceTokens: string[],
    prev: string | null,
  ): Array<[string, number]> {
    const scored = [...this.scores(sourceTokens, prev).entries()].filter(
      ([, score]) => score > 0,
    );
    scored.sort(([ta, sa], [tb, sb]) => (sb - sa) || (ta < tb ? -1 : 1));
    const top = scored.slice(0, this.topK);
    const total = top.reduce((acc, [, s]) => acc + s, 0);
    return top.map(([t, s]) => [t, s / total]);
  }

  private sampleLength(rand: Rand): number {
    const drawn = this.lengths[Math.floor(rand() * this.lengths.length)];
    return Math.max(1, Math.min(drawn, this.maxLength));
  }

  generate(source: string, rand: Rand): string {
    if (!this.trained) {
      throw new Error("generator has not been trained");
    }
    const sourceTokens = tokenize(source);
    const length = this.sampleLength(rand);
    const out: string[] = [];
    let prev: string | null = null;
    for (let i = 0; i < length; i++) {
      const candidates = this.topCandidates(sourceTokens, prev);
      if (candidates.length === 0) break;
      const u = rand();
      let acc = 0;
      let chosen = candidates[candidates.length - 1][0];
      for (const [token, weight] of candidates) {
        acc += weight;
        if (u < acc) {
          chosen = token;
          break;
        }
      }
      out.push(chosen);
      prev = chosen;
    }
    return out.join(" ");
  }
}
