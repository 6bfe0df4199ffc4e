/**
 * Seeded 70/10/20 split with the same allocation rules as the primary
 * package: sizes are floor allocations topped up by largest remainder,
 * remainder ties broken in (train, val, test) order; stratified mode
 * splits each label group separately and concatenates.
 */

export interface Example {
  text: string;
  label: 'relevant' | 'irrelevant';
}

export interface Split<T> {
  train: T[];
  val: T[];
  test: T[];
}

/** mulberry32: tiny deterministic PRNG, good enough for shuffling. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function shuffled<T>(items: readonly T[], random: () => number): T[] {
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export function allocate(n: number, fractions: readonly number[]): number[] {
  const exact = fractions.map((f) => f * n);
  const sizes = exact.map(Math.floor);
  let leftover = n - sizes.reduce((a, b) => a + b, 0);
  const order = exact
    .map((value, index) => ({ remainder: value - sizes[index], index }))
    .sort((a, b) => b.remainder - a.remainder || a.index - b.index);
  for (let k = 0; k < leftover; k++) {
    sizes[order[k].index] += 1;
  }
  return sizes;
}

function cut<T>(items: readonly T[], random: () => number): Split<T> {
  const pool = shuffled(items, random);
  const [nTrain, nVal] = allocate(pool.length, [0.7, 0.1, 0.2]);
  return {
    train: pool.slice(0, nTrain),
    val: pool.slice(nTrain, nTrain + nVal),
    test: pool.slice(nTrain + nVal),
  };
}

export function split<T extends Example>(
  data: readonly T[],
  seed: number,
  stratified = true,
): Split<T> {
  if (data.length < 10) {
    throw new Error(`need at least 10 examples to split, got ${data.length}`);
  }
  const random = rng(seed);
  if (!stratified) {
    return cut(data, random);
  }
  const groups = new Map<string, T[]>();
  for (const example of data) {
    const bucket = groups.get(example.label) ?? [];
    bucket.push(example);
    groups.set(example.label, bucket);
  }
  const result: Split<T> = { train: [], val: [], test: [] };
  for (const label of [...groups.keys()].sort()) {
    const part = cut(groups.get(label)!, random);
    result.train.push(...part.train);
    result.val.push(...part.val);
    result.test.push(...part.test);
  }
  return result;
}
