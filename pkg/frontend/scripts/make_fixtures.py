"""Build the exporter test fixtures with the primary implementation.

Writes into the target directory:
  checkpoint/     safetensors weights + vocab.json + manifest.json
  reference.lamf  the primary writer's output for the same weights
  reference.tok   the primary tokenizer writer's output
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from lamf.config import ModelConfig  # noqa: E402
from lamf.modelfile import gen_synthetic, write_model  # noqa: E402
from lamf.textio import synthetic_vocab, write_vocab  # noqa: E402

from exporter_fixtures import write_checkpoint_bundle  # noqa: E402


def main(out_dir: str):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ModelConfig(dim=64, hidden_dim=128, n_layers=2, n_heads=4, n_kv_heads=2,
                      vocab_size=512, seq_len=32, gs=32)
    weights = gen_synthetic(cfg, seed=77)
    vocab = synthetic_vocab(cfg.vocab_size)
    write_model(cfg, weights, out / "reference.lamf")
    write_vocab(vocab, out / "reference.tok")
    write_checkpoint_bundle(cfg, weights, vocab, out / "checkpoint")
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "test/.fixtures")
