/** Labeled JSONL loading: {"text": ..., "label": "relevant"|"irrelevant"} per line. */

import { readFileSync } from 'node:fs';
import type { Example } from './split.js';

export function loadLabeledJsonl(path: string): Example[] {
  const out: Example[] = [];
  const lines = readFileSync(path, 'utf-8').split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path} line ${i + 1}: not JSON (${(err as Error).message})`);
    }
    const { text, label } = row as { text?: unknown; label?: unknown };
    if (typeof text !== 'string' || (label !== 'relevant' && label !== 'irrelevant')) {
      throw new Error(`${path} line ${i + 1}: want {"text": string, "label": "relevant"|"irrelevant"}`);
    }
    out.push({ text, label });
  }
  if (out.length === 0) {
    throw new Error(`${path}: no examples`);
  }
  return out;
}

export function assertBothLabels(data: readonly Example[]): void {
  const labels = new Set(data.map((e) => e.label));
  if (labels.size < 2) {
    throw new Error(`dataset has a single class (${[...labels].join(', ')}); need both labels`);
  }
}
