#!/usr/bin/env python3
"""Convert torchvision's ImageNet VGG-19 into a VGGW file.

    python tools/vgg19_to_vggw.py vgg19.vggw
    export SMOKESTYLE_VGG19_WEIGHTS=$PWD/vgg19.vggw

Needs torch and torchvision; the weights are fetched by torchvision on first
use. Pass --random to write an untrained network (for testing the format
offline).
"""

import argparse
import struct

import torch
import torchvision

# torchvision normalizes [0, 1] pixels with these statistics.
MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)


def convolutions(random: bool):
    weights = None if random else torchvision.models.VGG19_Weights.IMAGENET1K_V1
    model = torchvision.models.vgg19(weights=weights).eval()
    return [m for m in model.features if isinstance(m, torch.nn.Conv2d)]


def write(path: str, convs) -> None:
    with open(path, "wb") as f:
        f.write(b"VGGW")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<7f", 1.0, *MEAN, *STD))
        f.write(struct.pack("<I", len(convs)))
        for conv in convs:
            w = conv.weight.detach().to(torch.float32).contiguous()
            b = conv.bias.detach().to(torch.float32).contiguous()
            out_ch, in_ch, kh, kw = w.shape
            assert (kh, kw) == (3, 3)
            f.write(struct.pack("<II", in_ch, out_ch))
            f.write(w.numpy().astype("<f4").tobytes())
            f.write(b.numpy().astype("<f4").tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("output")
    parser.add_argument("--random", action="store_true", help="untrained weights, no download")
    parser.add_argument("--seed", type=int, default=0, help="torch seed for --random")
    args = parser.parse_args()
    torch.manual_seed(args.seed)
    write(args.output, convolutions(args.random))


if __name__ == "__main__":
    main()
