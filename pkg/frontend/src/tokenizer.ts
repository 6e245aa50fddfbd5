import { readFileSync, writeFileSync } from 'node:fs';

import { ExportError } from './types';

interface VocabDoc {
  bos_id: number;
  eos_id: number;
  tokens: { score: number; bytes_b64: string }[];
}

/**
 * Convert a JSON vocabulary into the binary tokenizer format:
 * u32 token_count | u32 bos_id | u32 eos_id, then per token
 * f32 score | u32 byte_length | raw bytes (all little-endian).
 */
export function writeTokenizer(vocabJsonPath: string, outPath: string): void {
  const doc = JSON.parse(readFileSync(vocabJsonPath, 'utf-8')) as VocabDoc;
  if (!Array.isArray(doc.tokens) || doc.tokens.length === 0) {
    throw new ExportError(`${vocabJsonPath}: no tokens`);
  }
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.writeUInt32LE(doc.tokens.length, 0);
  head.writeUInt32LE(doc.bos_id, 4);
  head.writeUInt32LE(doc.eos_id, 8);
  chunks.push(head);
  for (const token of doc.tokens) {
    const bytes = Buffer.from(token.bytes_b64, 'base64');
    const entry = Buffer.alloc(8);
    entry.writeFloatLE(token.score, 0);
    entry.writeUInt32LE(bytes.length, 4);
    chunks.push(entry, bytes);
  }
  writeFileSync(outPath, Buffer.concat(chunks));
}
