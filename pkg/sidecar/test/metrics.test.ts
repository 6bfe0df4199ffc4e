import { describe, expect, it } from 'vitest';
import { confusionMatrix, reportFromConfusion } from '../src/metrics.js';

describe('confusionMatrix', () => {
  it('puts actual on rows and predicted on columns', () => {
    // one irrelevant->relevant mistake, one relevant->irrelevant mistake
    const m = confusionMatrix([0, 0, 1, 1, 1], [0, 1, 1, 1, 0]);
    expect(m).toEqual([
      [1, 1],
      [1, 2],
    ]);
  });
});

describe('reportFromConfusion', () => {
  it('computes accuracy and per-class F1', () => {
    const report = reportFromConfusion([
      [8, 2],
      [1, 9],
    ]);
    expect(report.accuracy).toBeCloseTo(17 / 20, 12);
    // class 0: tp=8 fp=1 fn=2
    expect(report.f1_class0).toBeCloseTo(16 / 19, 12);
    // class 1: tp=9 fp=2 fn=1
    expect(report.f1_class1).toBeCloseTo(18 / 21, 12);
  });

  it('reports 0 for an undefined F1 instead of NaN', () => {
    const report = reportFromConfusion([
      [5, 0],
      [0, 0],
    ]);
    expect(report.f1_class0).toBe(1);
    expect(report.f1_class1).toBe(0);
    expect(report.accuracy).toBe(1);
  });

  it('rejects an empty matrix', () => {
    expect(() =>
      reportFromConfusion([
        [0, 0],
        [0, 0],
      ]),
    ).toThrow(/empty/);
  });
});
