import { createWriteStream } from 'node:fs';

import { quantizeGroups } from './quantize';
import { ModelDims } from './types';

export const MAGIC = 'LAMF';
export const VERSION = 1;
export const HEADER_SIZE = 256;

export function packHeader(cfg: ModelDims): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt32LE(VERSION, 4);
  const fields = [
    cfg.dim,
    cfg.hidden_dim,
    cfg.n_layers,
    cfg.n_heads,
    cfg.n_kv_heads,
    cfg.vocab_size,
    cfg.seq_len,
    cfg.gs,
  ];
  fields.forEach((value, i) => buf.writeInt32LE(value, 8 + 4 * i));
  buf.writeUInt8(cfg.shared_classifier ? 1 : 0, 8 + 4 * fields.length);
  return buf;
}

function floatBytes(arr: Float32Array): Buffer {
  // Node runs on little-endian platforms; Float32Array bytes are the wire format
  return Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength);
}

export function quantizedBytes(data: Float32Array, gs: number): Buffer[] {
  const q = quantizeGroups(data, gs);
  return [
    Buffer.from(q.values.buffer, q.values.byteOffset, q.values.byteLength),
    floatBytes(q.scales),
  ];
}

export interface ResolvedWeights {
  tokenEmbedding: Float32Array; // (vocab, dim) row-major
  attNorms: Float32Array[]; // one (dim,) per layer
  ffnNorms: Float32Array[];
  finalNorm: Float32Array;
  layerMatrices: Float32Array[][]; // [layer][wq, wk, wv, wo, w1, w2, w3]
  classifier?: Float32Array; // absent when shared with the embeddings
}

/**
 * Write the LAMF container: 256-byte header, FP32 norm sections (att norms
 * per layer, ffn norms per layer, final norm), then quantized tensors as
 * [INT8 values][FP32 scales]: embeddings, per-layer matrices, classifier.
 */
export async function writeModel(
  cfg: ModelDims,
  weights: ResolvedWeights,
  outPath: string,
): Promise<void> {
  const out = createWriteStream(outPath);
  const write = (chunk: Buffer) =>
    new Promise<void>((resolve, reject) =>
      out.write(chunk, (err) => (err ? reject(err) : resolve())),
    );
  await write(packHeader(cfg));
  for (const norm of weights.attNorms) await write(floatBytes(norm));
  for (const norm of weights.ffnNorms) await write(floatBytes(norm));
  await write(floatBytes(weights.finalNorm));
  for (const chunk of quantizedBytes(weights.tokenEmbedding, cfg.gs)) await write(chunk);
  for (const matrices of weights.layerMatrices) {
    for (const matrix of matrices) {
      for (const chunk of quantizedBytes(matrix, cfg.gs)) await write(chunk);
    }
  }
  if (!cfg.shared_classifier && weights.classifier) {
    for (const chunk of quantizedBytes(weights.classifier, cfg.gs)) await write(chunk);
  }
  await new Promise<void>((resolve, reject) =>
    out.end((err?: Error | null) => (err ? reject(err) : resolve())),
  );
}
