import { describe, expect, it } from 'vitest';
import { PAD, Tokenizer, UNK } from '../src/tokenizer.js';

describe('Tokenizer', () => {
  it('assigns ids by frequency then alphabetically', () => {
    const tok = Tokenizer.fit(['b a a', 'c b a']);
    // a:3 b:2 c:1
    const enc = tok.encode('a b c', 8);
    expect(Array.from(enc.ids.slice(0, 3))).toEqual([2, 3, 4]);
  });

  it('maps unseen words to UNK and pads to length', () => {
    const tok = Tokenizer.fit(['alpha beta']);
    const enc = tok.encode('alpha zzz', 4);
    expect(enc.ids[1]).toBe(UNK);
    expect(enc.ids[2]).toBe(PAD);
    expect(enc.ids[3]).toBe(PAD);
    expect(Array.from(enc.mask)).toEqual([1, 1, 0, 0]);
  });

  it('lowercases and truncates to maxLen', () => {
    const tok = Tokenizer.fit(['one two three four']);
    const enc = tok.encode('ONE TWO THREE FOUR', 2);
    expect(enc.ids.length).toBe(2);
    expect(Array.from(enc.mask)).toEqual([1, 1]);
    expect(enc.ids[0]).not.toBe(UNK);
  });

  it('keeps one mask slot on empty text so pooling stays finite', () => {
    const tok = Tokenizer.fit(['word']);
    const enc = tok.encode('', 4);
    expect(Array.from(enc.mask)).toEqual([1, 0, 0, 0]);
    expect(enc.ids[0]).toBe(PAD);
  });

  it('caps the vocabulary', () => {
    const texts = Array.from({ length: 50 }, (_, i) => `w${i}`);
    const tok = Tokenizer.fit(texts, 10);
    expect(tok.vocabSize).toBe(10 + 2);
  });

  it('round-trips through JSON', () => {
    const tok = Tokenizer.fit(['threat actor dropped payload', 'benign chatter']);
    const back = Tokenizer.fromJSON(tok.toJSON());
    const a = tok.encode('threat payload unknown', 6);
    const b = back.encode('threat payload unknown', 6);
    expect(Array.from(a.ids)).toEqual(Array.from(b.ids));
    expect(Array.from(a.mask)).toEqual(Array.from(b.mask));
  });
});
