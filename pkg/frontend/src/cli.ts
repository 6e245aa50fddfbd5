#!/usr/bin/env node
/**
 * Checkpoint exporter: safetensors weights + JSON vocabulary -> LAMF model
 * and tokenizer files.
 *
 * Usage:
 *   lamf-export --manifest <manifest.json> --out-model <model.lamf>
 *               [--out-tokenizer <tokenizer.bin>]
 *
 * The manifest names the source files, the model dimensions, the group
 * size, and the mapping from checkpoint tensor names (with a {layer}
 * placeholder) onto model roles.
 */

import { runExport } from './export';
import { ExportError, ManifestError } from './types';

interface Args {
  manifest?: string;
  outModel?: string;
  outTokenizer?: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {};
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--manifest':
      case '-m':
        args.manifest = argv[++i];
        break;
      case '--out-model':
      case '-o':
        args.outModel = argv[++i];
        break;
      case '--out-tokenizer':
      case '-t':
        args.outTokenizer = argv[++i];
        break;
      case '--help':
      case '-h':
        console.log(
          'usage: lamf-export --manifest <manifest.json> --out-model <model.lamf> ' +
            '[--out-tokenizer <tokenizer.bin>]',
        );
        process.exit(0);
        break;
      default:
        console.error(`unknown argument: ${argv[i]}`);
        process.exit(2);
    }
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  if (!args.manifest || !args.outModel) {
    console.error('error: --manifest and --out-model are required (--help for usage)');
    process.exit(2);
  }
  try {
    await runExport(args.manifest, args.outModel, args.outTokenizer ?? null);
    console.log(`wrote ${args.outModel}`);
    if (args.outTokenizer) console.log(`wrote ${args.outTokenizer}`);
  } catch (err) {
    const clean =
      err instanceof ManifestError ||
      err instanceof ExportError ||
      err instanceof SyntaxError || // malformed JSON
      (err instanceof Error && 'code' in err); // fs errors (ENOENT, EACCES, ...)
    if (clean) {
      console.error(`error: ${(err as Error).message}`);
      process.exit(1);
    }
    throw err;
  }
}

main();
