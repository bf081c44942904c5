#!/usr/bin/env python3
"""Re-save PyTorch weight files in the zip format the C++ loader reads.

Legacy pickled checkpoints (torch < 1.6) and full-module pickles are rewritten as a flat
state dict of tensors. LPIPS `lin` files and DISTS alpha/beta files go through unchanged
apart from the container format.

    convert_weights.py vgg16-397923af.pth vgg16.pt
    convert_weights.py --prefix features. vgg16_bn_features.pth out.pt
"""
import argparse
import sys

import torch


def flatten(obj, prefix=""):
    if isinstance(obj, torch.nn.Module):
        obj = obj.state_dict()
    if isinstance(obj, torch.Tensor):
        return {prefix.rstrip("."): obj}
    if isinstance(obj, dict):
        out = {}
        for key, value in obj.items():
            out.update(flatten(value, f"{prefix}{key}."))
        return out
    return {}


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("source")
    parser.add_argument("target")
    parser.add_argument("--prefix", default="", help="keep only keys starting with this prefix")
    parser.add_argument("--list", action="store_true", help="print keys and shapes")
    args = parser.parse_args()

    loaded = torch.load(args.source, map_location="cpu", weights_only=False)
    if isinstance(loaded, dict) and "state_dict" in loaded:
        loaded = loaded["state_dict"]
    tensors = {k: v.contiguous() for k, v in flatten(loaded).items() if k.startswith(args.prefix)}
    if not tensors:
        sys.exit(f"no tensors found in {args.source}")
    if args.list:
        for key, value in tensors.items():
            print(key, tuple(value.shape))
    torch.save(tensors, args.target, _use_new_zipfile_serialization=True)
    print(f"wrote {len(tensors)} tensors to {args.target}")


if __name__ == "__main__":
    main()
