/**
 * Evaluation bookkeeping matching the primary package: confusion rows
 * are actual, columns predicted, class order (irrelevant, relevant);
 * per-class F1 is 2TP/(2TP+FP+FN) and 0 when that denominator is 0.
 */

export interface MetricsReport {
  accuracy: number;
  f1_class0: number; // irrelevant
  f1_class1: number; // relevant
  confusion: [[number, number], [number, number]];
}

export function confusionMatrix(
  actual: readonly number[],
  predicted: readonly number[],
): [[number, number], [number, number]] {
  const m: [[number, number], [number, number]] = [
    [0, 0],
    [0, 0],
  ];
  for (let i = 0; i < actual.length; i++) {
    m[actual[i]][predicted[i]] += 1;
  }
  return m;
}

export function reportFromConfusion(m: [[number, number], [number, number]]): MetricsReport {
  const n = m[0][0] + m[0][1] + m[1][0] + m[1][1];
  if (n === 0) {
    throw new Error('empty confusion matrix');
  }
  const f1 = (cls: 0 | 1): number => {
    const tp = m[cls][cls];
    const fp = m[1 - cls][cls];
    const fn = m[cls][1 - cls];
    const denominator = 2 * tp + fp + fn;
    return denominator === 0 ? 0 : (2 * tp) / denominator;
  };
  return {
    accuracy: (m[0][0] + m[1][1]) / n,
    f1_class0: f1(0),
    f1_class1: f1(1),
    confusion: m,
  };
}
