"""Builds an ecosystem-style checkpoint bundle for exporter testing.

The bundle is a directory holding a safetensors weight file with
HuggingFace-Llama tensor names, a JSON vocabulary, and a manifest that maps
tensor names onto the model roles the exporter needs. Both the Python
acceptance test and the TypeScript exporter's own tests consume it.
"""

import base64
import json
import struct
from pathlib import Path

import numpy as np

LAYER_NAME_TEMPLATES = {
    "wq": "model.layers.{layer}.self_attn.q_proj.weight",
    "wk": "model.layers.{layer}.self_attn.k_proj.weight",
    "wv": "model.layers.{layer}.self_attn.v_proj.weight",
    "wo": "model.layers.{layer}.self_attn.o_proj.weight",
    "w1": "model.layers.{layer}.mlp.gate_proj.weight",
    "w2": "model.layers.{layer}.mlp.down_proj.weight",
    "w3": "model.layers.{layer}.mlp.up_proj.weight",
    "att_norm": "model.layers.{layer}.input_layernorm.weight",
    "ffn_norm": "model.layers.{layer}.post_attention_layernorm.weight",
}


def write_safetensors(tensors: dict, path):
    """Minimal safetensors writer: u64 header length, JSON header, raw data."""
    header = {}
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        blob = arr.astype("<f4").tobytes()
        header[name] = {"dtype": "F32", "shape": list(arr.shape),
                        "data_offsets": [offset, offset + len(blob)]}
        blobs.append(blob)
        offset += len(blob)
    head = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def write_checkpoint_bundle(config, weights, vocab, out_dir):
    """Emit weights.safetensors + vocab.json + manifest.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tensors = {"model.embed_tokens.weight": weights.token_embedding,
               "model.norm.weight": weights.final_norm}
    if not config.shared_classifier:
        tensors["lm_head.weight"] = weights.classifier
    for l in range(config.n_layers):
        for role, template in LAYER_NAME_TEMPLATES.items():
            tensors[template.format(layer=l)] = getattr(weights, role)[l]
    write_safetensors(tensors, out_dir / "weights.safetensors")

    vocab_doc = {
        "bos_id": vocab.bos_id,
        "eos_id": vocab.eos_id,
        "tokens": [{"score": float(score),
                    "bytes_b64": base64.b64encode(tok).decode("ascii")}
                   for tok, score in zip(vocab.tokens, vocab.scores)],
    }
    (out_dir / "vocab.json").write_text(json.dumps(vocab_doc))

    manifest = {
        "source": "weights.safetensors",
        "vocabulary": "vocab.json",
        "group_size": config.gs,
        "config": {
            "dim": config.dim, "hidden_dim": config.hidden_dim,
            "n_layers": config.n_layers, "n_heads": config.n_heads,
            "n_kv_heads": config.n_kv_heads, "vocab_size": config.vocab_size,
            "seq_len": config.seq_len, "gs": config.gs,
            "shared_classifier": config.shared_classifier,
        },
        "tensors": {
            "token_embedding": "model.embed_tokens.weight",
            "final_norm": "model.norm.weight",
            **({} if config.shared_classifier else {"classifier": "lm_head.weight"}),
            "layers": LAYER_NAME_TEMPLATES,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out_dir
