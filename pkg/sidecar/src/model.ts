/**
 * A small transformer encoder built directly on tensor ops: token and
 * position embeddings, masked multi-head self attention, feed-forward
 * blocks with layer norm residuals, masked mean pooling, and a two-way
 * softmax head in (irrelevant, relevant) class order.
 *
 * Weights live in plain named variables and serialize to JSON, which
 * keeps the on-disk model a readable artifact instead of an opaque
 * binary. All initialization is driven by one seeded PRNG stream so a
 * fixed seed reproduces the run bit for bit on the CPU backend.
 */

import * as tf from '@tensorflow/tfjs';
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';
import { rng } from './split.js';
import { Tokenizer, type Encoded } from './tokenizer.js';

export interface ModelSpec {
  dModel: number;
  heads: number;
  blocks: number;
  ffnDim: number;
}

// the "uncased" family: same architecture, growing capacity
export const PRESETS: Record<string, ModelSpec> = {
  'uncased-tiny': { dModel: 32, heads: 2, blocks: 1, ffnDim: 64 },
  'uncased-small': { dModel: 64, heads: 4, blocks: 2, ffnDim: 128 },
  'uncased-base': { dModel: 128, heads: 4, blocks: 2, ffnDim: 256 },
};

export interface ModelConfig extends ModelSpec {
  modelName: string;
  maxSeqLen: number;
  vocabSize: number;
  seed: number;
  labels: [string, string];
}

export const LABELS: [string, string] = ['irrelevant', 'relevant'];

type WeightsJson = Record<string, { shape: number[]; data: number[] }>;

export class TinyTransformer {
  readonly config: ModelConfig;
  readonly vars = new Map<string, tf.Variable>();

  private constructor(config: ModelConfig) {
    this.config = config;
  }

  /** Fresh seeded weights. */
  static fresh(config: ModelConfig): TinyTransformer {
    const model = new TinyTransformer(config);
    const random = rng(config.seed);
    // Box-Muller over the shared stream
    let spare: number | null = null;
    const normal = (): number => {
      if (spare !== null) {
        const v = spare;
        spare = null;
        return v;
      }
      let u = 0;
      let v = 0;
      while (u === 0) u = random();
      while (v === 0) v = random();
      const radius = Math.sqrt(-2.0 * Math.log(u));
      spare = radius * Math.sin(2.0 * Math.PI * v);
      return radius * Math.cos(2.0 * Math.PI * v);
    };
    const init = (name: string, shape: number[], std?: number, constant?: number) => {
      const size = shape.reduce((a, b) => a * b, 1);
      const data = new Float32Array(size);
      if (constant === undefined) {
        const scale = std ?? Math.sqrt(2.0 / (shape[0] + shape[shape.length - 1]));
        for (let i = 0; i < size; i++) data[i] = normal() * scale;
      } else {
        data.fill(constant);
      }
      // engine-level names are process-global and collide across model
      // instances; the map key is the only name we need
      model.vars.set(name, tf.variable(tf.tensor(data, shape), true));
    };

    const { dModel, ffnDim, vocabSize, maxSeqLen, blocks } = config;
    init('emb', [vocabSize, dModel], 0.02);
    init('pos', [maxSeqLen, dModel], 0.02);
    for (let b = 0; b < blocks; b++) {
      for (const proj of ['wq', 'wk', 'wv', 'wo']) init(`b${b}.${proj}`, [dModel, dModel]);
      init(`b${b}.ln1g`, [dModel], undefined, 1);
      init(`b${b}.ln1b`, [dModel], undefined, 0);
      init(`b${b}.w1`, [dModel, ffnDim]);
      init(`b${b}.b1`, [ffnDim], undefined, 0);
      init(`b${b}.w2`, [ffnDim, dModel]);
      init(`b${b}.b2`, [dModel], undefined, 0);
      init(`b${b}.ln2g`, [dModel], undefined, 1);
      init(`b${b}.ln2b`, [dModel], undefined, 0);
    }
    init('head.w', [dModel, 2]);
    init('head.b', [2], undefined, 0);
    return model;
  }

  trainables(): tf.Variable[] {
    return [...this.vars.values()];
  }

  private layerNorm(x: tf.Tensor, gamma: tf.Variable, beta: tf.Variable): tf.Tensor {
    const { mean, variance } = tf.moments(x, -1, true);
    return tf.add(tf.mul(tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, 1e-5))), gamma), beta);
  }

  /** ids [B,L] int32, mask [B,L] float -> logits [B,2]. */
  forward(ids: tf.Tensor2D, mask: tf.Tensor2D): tf.Tensor2D {
    const { dModel, heads, blocks } = this.config;
    const headDim = dModel / heads;
    const v = (name: string) => this.vars.get(name)!;
    const [batch, seqLen] = ids.shape;

    return tf.tidy(() => {
      const positions = tf.slice(v('pos') as tf.Tensor2D, [0, 0], [seqLen, dModel]);
      let x = tf.add(tf.gather(v('emb'), ids), positions); // [B,L,D]
      // keys that are padding get a large negative bias before softmax
      const attnBias = tf.mul(tf.sub(1, mask.reshape([batch, 1, 1, seqLen])), -1e9);

      for (let b = 0; b < blocks; b++) {
        const toHeads = (w: string) =>
          tf
            .matMul(x.reshape([batch * seqLen, dModel]), v(`b${b}.${w}`) as tf.Tensor2D)
            .reshape([batch, seqLen, heads, headDim])
            .transpose([0, 2, 1, 3]); // [B,H,L,h]
        const q = toHeads('wq');
        const k = toHeads('wk');
        const val = toHeads('wv');
        const scores = tf.add(
          tf.div(tf.matMul(q, k, false, true), Math.sqrt(headDim)),
          attnBias,
        );
        const context = tf
          .matMul(tf.softmax(scores), val) // [B,H,L,h]
          .transpose([0, 2, 1, 3])
          .reshape([batch * seqLen, dModel]);
        const attended = tf
          .matMul(context, v(`b${b}.wo`) as tf.Tensor2D)
          .reshape([batch, seqLen, dModel]);
        x = this.layerNorm(tf.add(x, attended), v(`b${b}.ln1g`), v(`b${b}.ln1b`));

        const hidden = tf.relu(
          tf.add(tf.matMul(x.reshape([batch * seqLen, dModel]), v(`b${b}.w1`) as tf.Tensor2D), v(`b${b}.b1`)),
        );
        const ffn = tf
          .add(tf.matMul(hidden, v(`b${b}.w2`) as tf.Tensor2D), v(`b${b}.b2`))
          .reshape([batch, seqLen, dModel]);
        x = this.layerNorm(tf.add(x, ffn), v(`b${b}.ln2g`), v(`b${b}.ln2b`));
      }

      const expanded = mask.reshape([batch, seqLen, 1]);
      const pooled = tf.div(
        tf.sum(tf.mul(x, expanded), 1),
        tf.sum(expanded, 1),
      ); // [B,D]
      return tf.add(tf.matMul(pooled as tf.Tensor2D, v('head.w') as tf.Tensor2D), v('head.b')) as tf.Tensor2D;
    });
  }

  /** P(relevant) for a batch of encoded texts. */
  probRelevant(encoded: readonly Encoded[]): Float32Array {
    const maxLen = this.config.maxSeqLen;
    const batch = encoded.length;
    const ids = new Int32Array(batch * maxLen);
    const mask = new Float32Array(batch * maxLen);
    encoded.forEach((e, i) => {
      ids.set(e.ids, i * maxLen);
      mask.set(e.mask, i * maxLen);
    });
    return tf.tidy(() => {
      const idsT = tf.tensor2d(ids, [batch, maxLen], 'int32');
      const maskT = tf.tensor2d(mask, [batch, maxLen]);
      const probs = tf.softmax(this.forward(idsT, maskT));
      return tf.slice(probs, [0, 1], [batch, 1]).dataSync() as Float32Array;
    });
  }

  save(dir: string, tokenizer: Tokenizer): void {
    mkdirSync(dir, { recursive: true });
    const weights: WeightsJson = {};
    for (const [name, variable] of this.vars) {
      weights[name] = {
        shape: variable.shape.slice(),
        data: Array.from(variable.dataSync()),
      };
    }
    writeFileSync(join(dir, 'config.json'), JSON.stringify(this.config, null, 2) + '\n');
    writeFileSync(join(dir, 'vocab.json'), JSON.stringify(tokenizer.toJSON()) + '\n');
    writeFileSync(join(dir, 'weights.json'), JSON.stringify(weights) + '\n');
  }

  static load(dir: string): { model: TinyTransformer; tokenizer: Tokenizer } {
    const config = JSON.parse(readFileSync(join(dir, 'config.json'), 'utf-8')) as ModelConfig;
    const vocab = JSON.parse(readFileSync(join(dir, 'vocab.json'), 'utf-8'));
    const weights = JSON.parse(readFileSync(join(dir, 'weights.json'), 'utf-8')) as WeightsJson;
    const model = new TinyTransformer(config);
    for (const [name, { shape, data }] of Object.entries(weights)) {
      model.vars.set(name, tf.variable(tf.tensor(data, shape), true));
    }
    return { model, tokenizer: Tokenizer.fromJSON(vocab) };
  }
}
