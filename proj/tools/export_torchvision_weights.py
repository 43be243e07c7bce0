#!/usr/bin/env python3
"""Export torchvision backbones to the SFTB tensor archive read by surfake.

Two uses:
  * --pretrained: download ImageNet weights and register them under
    <out>/registry.json for `train --pretrained`.
  * --parity: write randomly initialised weights, a random input and the
    reference logits of a two-class head, for forward-pass parity tests.
"""

import argparse
import hashlib
import json
import pathlib
import struct
import sys

import torch
import torchvision

ARCHS = {
    "resnet50": ("resnet50", "fc"),
    "mobilenetv2": ("mobilenet_v2", "classifier.1"),
    "efficientnet_b0": ("efficientnet_b0", "classifier.1"),
}


def write_sftb(path, tensors):
    with open(path, "wb") as f:
        f.write(b"SFTB")
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            t = tensors[name].detach().to(torch.float32).contiguous().cpu()
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            for d in t.shape:
                f.write(struct.pack("<I", d))
            f.write(t.numpy().astype("<f4").tobytes())


def state_of(model):
    return {k: v for k, v in model.state_dict().items() if not k.endswith("num_batches_tracked")}


def build(arch, pretrained):
    name, head = ARCHS[arch]
    weights = "DEFAULT" if pretrained else None
    model = getattr(torchvision.models, name)(weights=weights)
    parent = model
    parts = head.split(".")
    for p in parts[:-1]:
        parent = getattr(parent, p) if not p.isdigit() else parent[int(p)]
    old = parent[int(parts[-1])] if parts[-1].isdigit() else getattr(parent, parts[-1])
    new = torch.nn.Linear(old.in_features, 2)
    if parts[-1].isdigit():
        parent[int(parts[-1])] = new
    else:
        setattr(parent, parts[-1], new)
    return model


def export_pretrained(arch, out):
    model = build(arch, pretrained=True)
    path = out / f"{arch}.sftb"
    write_sftb(path, state_of(model))
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    registry_path = out / "registry.json"
    registry = json.loads(registry_path.read_text()) if registry_path.exists() else {}
    registry[arch] = {"path": path.name, "sha256": digest}
    registry_path.write_text(json.dumps(registry, indent=2) + "\n")


def export_parity(arch, out, seed):
    torch.manual_seed(seed)
    model = build(arch, pretrained=False)
    # Non-trivial running statistics so eval-mode batch norm is exercised.
    for m in model.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            m.running_mean.uniform_(-0.1, 0.1)
            m.running_var.uniform_(0.5, 1.5)
            m.weight.data.uniform_(0.5, 1.5)
            m.bias.data.uniform_(-0.1, 0.1)
    model.eval()
    x = torch.randn(1, 3, 224, 224)
    with torch.no_grad():
        y = model(x)
    write_sftb(out / f"{arch}_weights.sftb", state_of(model))
    write_sftb(out / f"{arch}_io.sftb", {"input": x, "logits": y})


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--arch", choices=sorted(ARCHS), required=True, action="append")
    ap.add_argument("--out", type=pathlib.Path, required=True)
    mode = ap.add_mutually_exclusive_group(required=True)
    mode.add_argument("--pretrained", action="store_true")
    mode.add_argument("--parity", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for arch in args.arch:
        if args.pretrained:
            export_pretrained(arch, args.out)
        else:
            export_parity(arch, args.out, args.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
