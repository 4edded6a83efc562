"""Small convolutional backbone emitting two feature scales.

A stand-in for a pretrained deep backbone that honors the same output shape
contract: given a square RGB crop, produce x1 (c1, h1, w1) and x2 (c2, h2, w2)
with h1 = 2*h2. Built from stride-2 conv / GroupNorm / ReLU stages whose
channel widths double up to c1, plus one extra stage down to (c2, h2, w2).
"""
from __future__ import annotations

import torch
from torch import nn

from ..errors import ShapeError
from .config import BackboneSpec


def _stage(c_in: int, c_out: int) -> nn.Sequential:
    groups = 8 if c_out % 8 == 0 else 1
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
        nn.GroupNorm(groups, c_out),
        nn.ReLU(inplace=True),
    )


class ConvBackbone(nn.Module):
    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        n_stages = (spec.input_size // spec.h1).bit_length() - 1
        widths = [max(8, spec.c1 >> (n_stages - 1 - i)) for i in range(n_stages)]
        widths[-1] = spec.c1
        stages = []
        c_in = 3
        for c_out in widths:
            stages.append(_stage(c_in, c_out))
            c_in = c_out
        self.scale1 = nn.Sequential(*stages)
        self.scale2 = _stage(spec.c1, spec.c2)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        if images.shape[-2] != self.spec.input_size or images.shape[-1] != self.spec.input_size:
            raise ShapeError(
                f"expected {self.spec.input_size}x{self.spec.input_size} input, "
                f"got {images.shape[-2]}x{images.shape[-1]}"
            )
        x1 = self.scale1(images)
        x2 = self.scale2(x1)
        return x1, x2
