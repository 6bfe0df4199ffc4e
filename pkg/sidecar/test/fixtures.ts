/** Synthetic separable corpus: disjoint vocabularies per class. */

import { writeFileSync } from 'node:fs';
import { rng, shuffled, type Example } from '../src/split.js';

const THREAT = [
  'exploit', 'ransomware', 'botnet', 'phishing', 'stealer', 'payload',
  'dropper', 'backdoor', 'implant', 'breach', 'loader', 'beacon',
];

const BENIGN = [
  'recipe', 'holiday', 'football', 'garden', 'music', 'weather',
  'travel', 'coffee', 'painting', 'novel', 'cinema', 'picnic',
];

export function separableRows(n: number, seed: number): Example[] {
  const random = rng(seed);
  const pick = (pool: readonly string[]) => pool[Math.floor(random() * pool.length)];
  const rows: Example[] = [];
  for (let i = 0; i < n; i++) {
    const relevant = i % 2 === 0;
    const pool = relevant ? THREAT : BENIGN;
    const length = 4 + Math.floor(random() * 5);
    const words: string[] = [];
    for (let w = 0; w < length; w++) words.push(pick(pool));
    rows.push({ text: words.join(' '), label: relevant ? 'relevant' : 'irrelevant' });
  }
  return shuffled(rows, random);
}

export function writeJsonl(path: string, rows: readonly Example[]): void {
  writeFileSync(path, rows.map((row) => JSON.stringify(row)).join('\n') + '\n');
}
