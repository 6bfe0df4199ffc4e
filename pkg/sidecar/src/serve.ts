/**
 * Long-running scorer speaking newline-delimited JSON over stdio or a
 * local TCP socket. One {"ready": true} line announces the server;
 * each {"id", "text"} request gets exactly one {"id", "prob_relevant"}
 * response; a line that cannot be used produces {"id": null, "error"}
 * and the stream keeps going. Requests are handled sequentially per
 * connection; the model is read-only after load.
 */

// repoint console.log before tf loads: stdout belongs to the protocol
console.log = console.error;

import { createInterface } from 'node:readline';
import { createServer } from 'node:net';
import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';
import type { Tokenizer } from './tokenizer.js';
import type { TinyTransformer } from './model.js';

export interface Scorer {
  (text: string): number;
}

export function makeScorer(model: TinyTransformer, tokenizer: Tokenizer): Scorer {
  return (text) => model.probRelevant([tokenizer.encode(text, model.config.maxSeqLen)])[0];
}

export function handleLine(line: string, score: Scorer): string | null {
  if (!line.trim()) return null;
  let request: unknown;
  try {
    request = JSON.parse(line);
  } catch {
    return JSON.stringify({ id: null, error: 'malformed request' });
  }
  const { id, text } = (request ?? {}) as { id?: unknown; text?: unknown };
  if (id === undefined || id === null) {
    return JSON.stringify({ id: null, error: 'request has no id' });
  }
  if (typeof text !== 'string') {
    return JSON.stringify({ id, error: 'text must be a string' });
  }
  return JSON.stringify({ id, prob_relevant: score(text) });
}

async function main(): Promise<void> {
  const { values } = parseArgs({
    args: process.argv.slice(2),
    options: {
      model: { type: 'string' },
      port: { type: 'string' },
      host: { type: 'string', default: '127.0.0.1' },
    },
  });
  if (!values.model) {
    throw new Error('usage: serve --model model_dir [--port N [--host H]]');
  }
  const tf = await import('@tensorflow/tfjs');
  await tf.setBackend('cpu');
  await tf.ready();
  const { TinyTransformer } = await import('./model.js');
  const { model, tokenizer } = TinyTransformer.load(values.model);
  const score = makeScorer(model, tokenizer);
  const ready = JSON.stringify({ ready: true }) + '\n';

  if (values.port === undefined) {
    process.stdout.write(ready);
    const lines = createInterface({ input: process.stdin });
    for await (const line of lines) {
      const response = handleLine(line, score);
      if (response !== null) process.stdout.write(response + '\n');
    }
    return;
  }

  const server = createServer((socket) => {
    socket.write(ready);
    const lines = createInterface({ input: socket });
    lines.on('line', (line) => {
      const response = handleLine(line, score);
      if (response !== null) socket.write(response + '\n');
    });
    socket.on('error', () => socket.destroy());
  });
  const port = Number(values.port);
  server.listen(port, values.host, () => {
    const address = server.address();
    const bound = typeof address === 'object' && address ? address.port : port;
    console.error(`listening on ${values.host}:${bound}`);
  });
}

const isMain =
  typeof process.argv[1] === 'string' &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (isMain) {
  main().catch((err) => {
    console.error(`serve: ${(err as Error).message}`);
    process.exit(1);
  });
}
