import { readFileSync } from 'node:fs';

import { ExportError } from './types';

export interface TensorView {
  shape: number[];
  data: Float32Array;
}

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

/**
 * Read an FP32 safetensors file: u64 little-endian header length, a JSON
 * header mapping tensor names to dtype/shape/data_offsets, then raw data.
 */
export function readSafetensors(path: string): Map<string, TensorView> {
  const buf = readFileSync(path);
  if (buf.length < 8) {
    throw new ExportError(`${path}: too short for a safetensors header`);
  }
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (8 + headerLen > buf.length) {
    throw new ExportError(`${path}: header length ${headerLen} overruns the file`);
  }
  const header = JSON.parse(buf.subarray(8, 8 + headerLen).toString('utf-8')) as Record<
    string,
    HeaderEntry
  >;
  const dataStart = 8 + headerLen;
  const tensors = new Map<string, TensorView>();
  for (const [name, entry] of Object.entries(header)) {
    if (name === '__metadata__') continue;
    if (entry.dtype !== 'F32') {
      throw new ExportError(`${path}: tensor ${name} has dtype ${entry.dtype}, need F32`);
    }
    const [start, end] = entry.data_offsets;
    const numel = entry.shape.reduce((a, b) => a * b, 1);
    if (end - start !== 4 * numel || dataStart + end > buf.length) {
      throw new ExportError(`${path}: tensor ${name} has inconsistent offsets`);
    }
    // slice copies into a fresh (aligned) ArrayBuffer
    const bytes = buf.subarray(dataStart + start, dataStart + end);
    const aligned = new ArrayBuffer(bytes.length);
    new Uint8Array(aligned).set(bytes);
    tensors.set(name, { shape: entry.shape, data: new Float32Array(aligned) });
  }
  return tensors;
}
