#!/usr/bin/env python3
"""Convert a Hugging Face ViT checkpoint directory into a VITW0001 weight file.

usage: convert_checkpoint.py CHECKPOINT_DIR OUTPUT.vitw [--with-head]

CHECKPOINT_DIR holds config.json plus model.safetensors or pytorch_model.bin.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np


def load_state(ckpt: Path) -> dict:
    st = ckpt / "model.safetensors"
    if st.exists():
        from safetensors.numpy import load_file

        return dict(load_file(str(st)))
    binary = ckpt / "pytorch_model.bin"
    if binary.exists():
        import torch

        state = torch.load(str(binary), map_location="cpu")
        return {k: v.float().numpy() for k, v in state.items()}
    sys.exit(f"no model.safetensors or pytorch_model.bin in {ckpt}")


def strip_prefix(state: dict) -> dict:
    # ViTForImageClassification nests the encoder under "vit."
    out = {}
    for k, v in state.items():
        out[k[4:] if k.startswith("vit.") else k] = v
    return out


def convert(state: dict, cfg: dict, with_head: bool):
    d = cfg["hidden_size"]
    p = cfg["patch_size"]
    c = cfg.get("num_channels", 3)
    tensors = []

    def add(name, arr):
        tensors.append((name, np.ascontiguousarray(arr, dtype="<f4")))

    def linear(w_name, b_name, prefix):
        # torch Linear stores [out, in]
        add(w_name, state[prefix + ".weight"].T)
        add(b_name, state[prefix + ".bias"])

    conv = state["embeddings.patch_embeddings.projection.weight"]  # [D, C, P, P]
    add("patch_embed.weight", conv.reshape(d, c * p * p).T)
    cls = state["embeddings.cls_token"].reshape(d)
    pos = state["embeddings.position_embeddings"].reshape(-1, d).copy()
    # The conv bias is folded into every patch position.
    pos[1:] += state["embeddings.patch_embeddings.projection.bias"]
    add("cls_token", cls)
    add("pos_embed", pos)

    for i in range(cfg["num_hidden_layers"]):
        hf = f"encoder.layer.{i}"
        ours = f"layer.{i}"
        add(f"{ours}.norm1.scale", state[f"{hf}.layernorm_before.weight"])
        add(f"{ours}.norm1.shift", state[f"{hf}.layernorm_before.bias"])
        for short, name in (("q", "query"), ("k", "key"), ("v", "value")):
            linear(f"{ours}.attn.w{short}", f"{ours}.attn.b{short}", f"{hf}.attention.attention.{name}")
        linear(f"{ours}.attn.wo", f"{ours}.attn.bo", f"{hf}.attention.output.dense")
        add(f"{ours}.norm2.scale", state[f"{hf}.layernorm_after.weight"])
        add(f"{ours}.norm2.shift", state[f"{hf}.layernorm_after.bias"])
        linear(f"{ours}.mlp.w1", f"{ours}.mlp.b1", f"{hf}.intermediate.dense")
        linear(f"{ours}.mlp.w2", f"{ours}.mlp.b2", f"{hf}.output.dense")

    add("norm.scale", state["layernorm.weight"])
    add("norm.shift", state["layernorm.bias"])

    num_classes = 0
    if with_head and "classifier.weight" in state:
        head = state["classifier.weight"].T
        add("head.weight", head)
        num_classes = head.shape[1]

    config = {
        "image_size": cfg["image_size"],
        "patch_size": p,
        "channels": c,
        "hidden_dim": d,
        "num_layers": cfg["num_hidden_layers"],
        "num_heads": cfg["num_attention_heads"],
        "mlp_dim": cfg["intermediate_size"],
        "num_classes": num_classes,
        "layer_norm_eps": cfg.get("layer_norm_eps", 1e-12),
    }
    return tensors, config


def write_vitw(path: Path, tensors, config):
    header = {"__metadata__": {"format": "vitclust-weights", "config": config}}
    offset = 0
    for name, arr in tensors:
        header[name] = {"dtype": "float32", "shape": list(arr.shape), "offset": offset}
        offset += arr.nbytes
    text = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(b"VITW0001")
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for _, arr in tensors:
            f.write(arr.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint", type=Path)
    ap.add_argument("output", type=Path)
    ap.add_argument("--with-head", action="store_true", help="keep the classification head (bias is dropped)")
    args = ap.parse_args()

    cfg = json.loads((args.checkpoint / "config.json").read_text())
    state = strip_prefix(load_state(args.checkpoint))
    tensors, config = convert(state, cfg, args.with_head)
    write_vitw(args.output, tensors, config)
    print(f"wrote {args.output} ({len(tensors)} tensors)")


if __name__ == "__main__":
    main()
