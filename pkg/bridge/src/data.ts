/** JSONL data files shared with the retrieval engine. */

import { readFileSync, writeFileSync } from "node:fs";

export interface Utterance {
  text: string;
  speaker: string;
}

export interface Dialogue {
  id: string;
  utterances: Utterance[];
  response_id: string;
}

export interface Passage {
  id: string;
  text: string;
  expansions?: string[];
}

export function readJsonl<T>(path: string): T[] {
  const rows: T[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    try {
      rows.push(JSON.parse(line) as T);
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: invalid JSON`);
    }
  }
  return rows;
}

export function writeJsonl(path: string, rows: unknown[]): void {
  writeFileSync(path, rows.map((r) => JSON.stringify(r)).join("\n") + "\n");
}

export function readDialogues(path: string): Dialogue[] {
  const dialogues = readJsonl<Dialogue>(path);
  for (const d of dialogues) {
    if (!d.id || !Array.isArray(d.utterances) || d.utterances.length === 0) {
      throw new Error(`${path}: dialogue ${d.id ?? "?"} has no utterances`);
    }
  }
  return dialogues;
}

export function readCollection(path: string): Passage[] {
  const passages = readJsonl<Passage>(path);
  const seen = new Set<string>();
  for (const p of passages) {
    if (typeof p.id !== "string" || typeof p.text !== "string") {
      throw new Error(`${path}: passage with missing id or text`);
    }
    if (seen.has(p.id)) throw new Error(`${path}: duplicate passage id ${p.id}`);
    seen.add(p.id);
  }
  return passages;
}

/** Plain-text rendering of a whole dialogue context. */
export function contextText(d: Dialogue): string {
  return d.utterances.map((u) => u.text).join(" ");
}

export function lastUtteranceText(d: Dialogue): string {
  return d.utterances[d.utterances.length - 1].text;
}

/**
 * Context rendering with separator tokens, mirroring the engine's query
 * encoding: [U] ends every non-final utterance, [T] follows at speaker
 * changes.
 */
export function contextWithSeparators(d: Dialogue): string {
  const parts: string[] = [];
  for (let i = 0; i < d.utterances.length; i++) {
    parts.push(d.utterances[i].text);
    if (i + 1 < d.utterances.length) {
      parts.push("[U]");
      if (d.utterances[i + 1].speaker !== d.utterances[i].speaker) {
        parts.push("[T]");
      }
    }
  }
  return parts.join(" ");
}
