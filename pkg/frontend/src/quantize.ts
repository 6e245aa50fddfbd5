import { ExportError } from './types';

export interface Quantized {
  values: Int8Array;
  scales: Float32Array;
}

/**
 * Group-wise symmetric INT8 quantization, matching the engine bit for bit.
 *
 * Per group of `gs` values: scale = 2*max(|r|)/255 evaluated in FP32 as
 * (max/255)*2 (all-zero or underflowed groups fall back to scale 1.0), then
 * each value becomes round-half-away-from-zero(r/scale) clamped to
 * [-128, 127]. Every arithmetic step is rounded through Math.fround so the
 * result equals a float32 implementation exactly.
 */
export function quantizeGroups(data: Float32Array, gs: number): Quantized {
  if (gs < 1 || data.length === 0 || data.length % gs !== 0) {
    throw new ExportError(`length ${data.length} is not a positive multiple of ${gs}`);
  }
  const groups = data.length / gs;
  const values = new Int8Array(data.length);
  const scales = new Float32Array(groups);
  for (let g = 0; g < groups; g++) {
    const base = g * gs;
    let maxAbs = 0;
    for (let k = 0; k < gs; k++) {
      const a = Math.abs(data[base + k]);
      if (!Number.isFinite(a)) {
        throw new ExportError(`non-finite value in group ${g}`);
      }
      if (a > maxAbs) maxAbs = a;
    }
    let scale = Math.fround(Math.fround(maxAbs / 255) * 2);
    if (scale === 0) scale = 1;
    scales[g] = scale;
    for (let k = 0; k < gs; k++) {
      const ratio = Math.fround(data[base + k] / scale);
      const shifted = Math.fround(ratio + (ratio < 0 ? -0.5 : 0.5));
      let q = Math.trunc(shifted);
      if (q > 127) q = 127;
      if (q < -128) q = -128;
      values[base + k] = q;
    }
  }
  return { values, scales };
}
