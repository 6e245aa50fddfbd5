import { readFileSync } from 'node:fs';
import { dirname, resolve } from 'node:path';

import { writeModel, ResolvedWeights } from './lamf';
import { readSafetensors, TensorView } from './safetensors';
import { writeTokenizer } from './tokenizer';
import {
  LAYER_MATRIX_ROLES,
  Manifest,
  ManifestError,
  ExportError,
  layerMatrixShape,
} from './types';

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((x, i) => x === b[i]);
}

function take(
  tensors: Map<string, TensorView>,
  name: string,
  role: string,
  shape: number[],
): Float32Array {
  const view = tensors.get(name);
  if (!view) {
    throw new ManifestError(`missing tensor for role ${role}: ${name}`);
  }
  if (!sameShape(view.shape, shape)) {
    throw new ExportError(
      `${role} (${name}): expected shape [${shape}], got [${view.shape}]`,
    );
  }
  return view.data;
}

export function loadManifest(path: string): Manifest {
  const doc = JSON.parse(readFileSync(path, 'utf-8')) as Manifest;
  for (const key of ['source', 'vocabulary', 'config', 'tensors'] as const) {
    if (!(key in doc)) throw new ManifestError(`manifest lacks "${key}"`);
  }
  return doc;
}

export async function runExport(
  manifestPath: string,
  outModel: string,
  outTokenizer: string | null,
): Promise<void> {
  const manifest = loadManifest(manifestPath);
  const cfg = manifest.config;
  const root = dirname(resolve(manifestPath));
  const tensors = readSafetensors(resolve(root, manifest.source));
  const names = manifest.tensors;

  const weights: ResolvedWeights = {
    tokenEmbedding: take(tensors, names.token_embedding, 'token_embedding', [
      cfg.vocab_size,
      cfg.dim,
    ]),
    finalNorm: take(tensors, names.final_norm, 'final_norm', [cfg.dim]),
    attNorms: [],
    ffnNorms: [],
    layerMatrices: [],
  };
  if (!cfg.shared_classifier) {
    if (!names.classifier) {
      throw new ManifestError('missing tensor for role classifier');
    }
    weights.classifier = take(tensors, names.classifier, 'classifier', [
      cfg.vocab_size,
      cfg.dim,
    ]);
  }
  for (let layer = 0; layer < cfg.n_layers; layer++) {
    const named = (role: string) => {
      const template = names.layers[role];
      if (!template) throw new ManifestError(`missing tensor for role ${role}`);
      return template.replaceAll('{layer}', String(layer));
    };
    weights.attNorms.push(
      take(tensors, named('att_norm'), `layer ${layer} att_norm`, [cfg.dim]),
    );
    weights.ffnNorms.push(
      take(tensors, named('ffn_norm'), `layer ${layer} ffn_norm`, [cfg.dim]),
    );
    weights.layerMatrices.push(
      LAYER_MATRIX_ROLES.map((role) =>
        take(tensors, named(role), `layer ${layer} ${role}`, layerMatrixShape(cfg, role)),
      ),
    );
  }

  if (outTokenizer) {
    writeTokenizer(resolve(root, manifest.vocabulary), outTokenizer);
  }
  return writeModel(cfg, weights, outModel);
}
