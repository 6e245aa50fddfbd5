export interface ModelDims {
  dim: number;
  hidden_dim: number;
  n_layers: number;
  n_heads: number;
  n_kv_heads: number;
  vocab_size: number;
  seq_len: number;
  gs: number;
  shared_classifier: boolean;
}

/** Per-layer matrix roles in on-disk order. */
export const LAYER_MATRIX_ROLES = ['wq', 'wk', 'wv', 'wo', 'w1', 'w2', 'w3'] as const;
export type LayerMatrixRole = (typeof LAYER_MATRIX_ROLES)[number];
export type LayerRole = LayerMatrixRole | 'att_norm' | 'ffn_norm';

export interface Manifest {
  source: string;
  vocabulary: string;
  group_size: number;
  config: ModelDims;
  tensors: {
    token_embedding: string;
    final_norm: string;
    classifier?: string;
    layers: Record<string, string>; // role -> name template with {layer}
  };
}

export class ManifestError extends Error {}
export class ExportError extends Error {}

export function kvDim(cfg: ModelDims): number {
  return (cfg.dim * cfg.n_kv_heads) / cfg.n_heads;
}

/** Expected (rows, cols) of each per-layer matrix role. */
export function layerMatrixShape(cfg: ModelDims, role: LayerMatrixRole): [number, number] {
  switch (role) {
    case 'wq':
    case 'wo':
      return [cfg.dim, cfg.dim];
    case 'wk':
    case 'wv':
      return [kvDim(cfg), cfg.dim];
    case 'w1':
    case 'w3':
      return [cfg.hidden_dim, cfg.dim];
    case 'w2':
      return [cfg.dim, cfg.hidden_dim];
  }
}
