/**
 * Fine-tune a relevance model on labeled JSONL and write the model
 * directory plus a metrics report computed on the held-out test split.
 *
 * The 70/10/20 split, the confusion layout, and the F1 definitions all
 * match the primary package so reports are comparable across scorers.
 */

import * as tf from '@tensorflow/tfjs';
import { writeFileSync } from 'node:fs';
import { join } from 'node:path';
import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';
import { assertBothLabels, loadLabeledJsonl } from './data.js';
import { confusionMatrix, reportFromConfusion, type MetricsReport } from './metrics.js';
import { LABELS, PRESETS, TinyTransformer } from './model.js';
import { rng, shuffled, split, type Example } from './split.js';
import { Tokenizer } from './tokenizer.js';

export interface TrainRunConfig {
  modelName: string;
  epochs: number;
  learningRate: number;
  maxSeqLen: number;
  seed: number;
  datasetPath: string;
  outDir: string;
  batchSize: number;
}

export const DEFAULTS = {
  modelName: 'uncased-base',
  epochs: 3,
  learningRate: 2e-5,
  maxSeqLen: 128,
  seed: 0,
  batchSize: 16,
} as const;

const CLASS_INDEX: Record<Example['label'], number> = { irrelevant: 0, relevant: 1 };

function batchTensors(
  batch: readonly Example[],
  tokenizer: Tokenizer,
  maxLen: number,
): { ids: tf.Tensor2D; mask: tf.Tensor2D; labels: tf.Tensor1D } {
  const n = batch.length;
  const ids = new Int32Array(n * maxLen);
  const mask = new Float32Array(n * maxLen);
  const labels = new Int32Array(n);
  batch.forEach((example, i) => {
    const encoded = tokenizer.encode(example.text, maxLen);
    ids.set(encoded.ids, i * maxLen);
    mask.set(encoded.mask, i * maxLen);
    labels[i] = CLASS_INDEX[example.label];
  });
  return {
    ids: tf.tensor2d(ids, [n, maxLen], 'int32'),
    mask: tf.tensor2d(mask, [n, maxLen]),
    labels: tf.tensor1d(labels, 'int32'),
  };
}

function predictions(
  model: TinyTransformer,
  tokenizer: Tokenizer,
  examples: readonly Example[],
): number[] {
  const out: number[] = [];
  for (let start = 0; start < examples.length; start += 64) {
    const chunk = examples.slice(start, start + 64);
    const encoded = chunk.map((e) => tokenizer.encode(e.text, model.config.maxSeqLen));
    const probs = model.probRelevant(encoded);
    for (const p of probs) out.push(p >= 0.5 ? 1 : 0);
  }
  return out;
}

export async function finetune(config: TrainRunConfig): Promise<MetricsReport> {
  if (config.maxSeqLen < 16) {
    throw new Error(`max sequence length must be >= 16, got ${config.maxSeqLen}`);
  }
  const preset = PRESETS[config.modelName];
  if (!preset) {
    throw new Error(
      `unknown model name ${config.modelName}; available: ${Object.keys(PRESETS).join(', ')}`,
    );
  }
  await tf.setBackend('cpu');
  await tf.ready();

  const data = loadLabeledJsonl(config.datasetPath);
  assertBothLabels(data);
  const parts = split(data, config.seed);
  const tokenizer = Tokenizer.fit(parts.train.map((e) => e.text));
  const model = TinyTransformer.fresh({
    ...preset,
    modelName: config.modelName,
    maxSeqLen: config.maxSeqLen,
    vocabSize: tokenizer.vocabSize,
    seed: config.seed,
    labels: LABELS,
  });

  const optimizer = tf.train.adam(config.learningRate);
  const epochRandom = rng(config.seed + 0x9e37);
  for (let epoch = 0; epoch < config.epochs; epoch++) {
    const order = shuffled(parts.train, epochRandom);
    let lossSum = 0;
    let steps = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize);
      const cost = optimizer.minimize(
        () => {
          const { ids, mask, labels } = batchTensors(batch, tokenizer, config.maxSeqLen);
          const logits = model.forward(ids, mask);
          return tf.losses.softmaxCrossEntropy(tf.oneHot(labels, 2), logits) as tf.Scalar;
        },
        true,
        model.trainables(),
      );
      lossSum += cost!.dataSync()[0];
      cost!.dispose();
      steps += 1;
    }
    console.error(
      `epoch ${epoch + 1}/${config.epochs} loss ${(lossSum / Math.max(steps, 1)).toFixed(4)}`,
    );
  }
  optimizer.dispose();

  const actual = parts.test.map((e) => CLASS_INDEX[e.label]);
  const predicted = predictions(model, tokenizer, parts.test);
  const report = reportFromConfusion(confusionMatrix(actual, predicted));

  model.save(config.outDir, tokenizer);
  writeFileSync(join(config.outDir, 'metrics.json'), JSON.stringify(report, null, 2) + '\n');
  return report;
}

export function configFromArgv(argv: string[]): TrainRunConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: 'string' },
      out: { type: 'string' },
      'model-name': { type: 'string', default: DEFAULTS.modelName },
      epochs: { type: 'string', default: String(DEFAULTS.epochs) },
      lr: { type: 'string', default: String(DEFAULTS.learningRate) },
      'max-seq-len': { type: 'string', default: String(DEFAULTS.maxSeqLen) },
      seed: { type: 'string', default: String(DEFAULTS.seed) },
      'batch-size': { type: 'string', default: String(DEFAULTS.batchSize) },
    },
  });
  if (!values.dataset || !values.out) {
    throw new Error('usage: finetune --dataset data.jsonl --out model_dir [--model-name NAME] [--epochs N] [--lr F] [--max-seq-len N] [--seed N] [--batch-size N]');
  }
  return {
    modelName: values['model-name']!,
    epochs: Number(values.epochs),
    learningRate: Number(values.lr),
    maxSeqLen: Number(values['max-seq-len']),
    seed: Number(values.seed),
    batchSize: Number(values['batch-size']),
    datasetPath: values.dataset,
    outDir: values.out,
  };
}

const isMain =
  typeof process.argv[1] === 'string' &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (isMain) {
  // tfjs chats on console.log; keep stdout for the metrics line only
  console.log = console.error;
  finetune(configFromArgv(process.argv.slice(2)))
    .then((report) => {
      process.stdout.write(JSON.stringify(report) + '\n');
    })
    .catch((err) => {
      console.error(`finetune: ${(err as Error).message}`);
      process.exit(1);
    });
}
