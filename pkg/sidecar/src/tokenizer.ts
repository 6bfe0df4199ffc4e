/**
 * Uncased word-level tokenizer. Callers are expected to feed text that
 * already went through the primary pipeline's preprocess step, so
 * splitting on whitespace is enough; lowercasing here keeps the model
 * honest about its "uncased" name either way.
 */

export const PAD = 0;
export const UNK = 1;

export interface Encoded {
  ids: Int32Array;
  mask: Float32Array;
}

export class Tokenizer {
  readonly index: Map<string, number>;

  constructor(index: Map<string, number>) {
    this.index = index;
  }

  get vocabSize(): number {
    return this.index.size + 2; // + PAD, UNK
  }

  static fit(texts: readonly string[], maxVocab = 4000): Tokenizer {
    const counts = new Map<string, number>();
    for (const text of texts) {
      for (const token of tokens(text)) {
        counts.set(token, (counts.get(token) ?? 0) + 1);
      }
    }
    // frequent first, ties alphabetic so the mapping is reproducible
    const ranked = [...counts.entries()]
      .sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : 1))
      .slice(0, maxVocab);
    const index = new Map<string, number>();
    ranked.forEach(([token], i) => index.set(token, i + 2));
    return new Tokenizer(index);
  }

  encode(text: string, maxLen: number): Encoded {
    const ids = new Int32Array(maxLen).fill(PAD);
    const mask = new Float32Array(maxLen).fill(0);
    const parts = tokens(text);
    for (let i = 0; i < Math.min(parts.length, maxLen); i++) {
      ids[i] = this.index.get(parts[i]) ?? UNK;
      mask[i] = 1;
    }
    if (parts.length === 0) {
      mask[0] = 1; // all-pad attention would divide by zero downstream
    }
    return { ids, mask };
  }

  toJSON(): Record<string, number> {
    return Object.fromEntries(this.index);
  }

  static fromJSON(obj: Record<string, number>): Tokenizer {
    return new Tokenizer(new Map(Object.entries(obj)));
  }
}

function tokens(text: string): string[] {
  return text.toLowerCase().split(/\s+/).filter(Boolean);
}
