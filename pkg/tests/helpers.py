"""Independent oracles used by the test suite.

These deliberately avoid the library's code paths: the border enumerator is a
double loop, the reference generator forward is a plain zero-padded conv
pipeline reading the generator's parameters, and gradients come from central
finite differences.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor


def naive_border_cells(side: int) -> list[tuple[int, int]]:
    """Clockwise-from-top-left border cells of a side x side frame, by
    exhaustive scan: top row, right column, bottom row, left column."""
    cells = []
    for c in range(side):
        cells.append((0, c))
    for r in range(1, side - 1):
        cells.append((r, side - 1))
    for c in range(side - 1, -1, -1):
        cells.append((side - 1, c))
    for r in range(side - 2, 0, -1):
        cells.append((r, 0))
    return cells


def naive_extract_ring(frame: Tensor) -> Tensor:
    """Ring of a (C, S, S) frame via per-cell indexing."""
    cells = naive_border_cells(frame.shape[-1])
    return torch.stack([frame[..., r, c] for r, c in cells], dim=-1)


def naive_apply_ring(feature: Tensor, ring: Tensor) -> Tensor:
    """(C, N, N) + (C, 4N+4) -> (C, N+2, N+2) via per-cell writes."""
    n = feature.shape[-1]
    out = feature.new_zeros(*feature.shape[:-2], n + 2, n + 2)
    out[..., 1:-1, 1:-1] = feature
    for k, (r, c) in enumerate(naive_border_cells(n + 2)):
        out[..., r, c] = ring[..., k]
    return out


def reference_forward(generator, w_plus: Tensor) -> Tensor:
    """No-port forward pass: constant input, plain zero padding everywhere.

    Reads the generator's parameters but re-implements the pipeline, so it
    catches wiring mistakes in the ported synthesis path.
    """
    cfg = generator.config
    syn = generator.synthesis
    if w_plus.ndim == 2:
        w_plus = w_plus.unsqueeze(0)
    b = w_plus.shape[0]
    x = syn.const_input.unsqueeze(0).expand(b, -1, -1, -1).clone()
    layer = 0
    for n in cfg.resolutions:
        if n != cfg.base_resolution:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        block = getattr(syn, f"res{n}")
        for conv in (block.conv0, block.conv1):
            y = F.conv2d(F.pad(x, (1, 1, 1, 1)), conv.weight)
            y = y + conv.bias.view(1, -1, 1, 1)
            y = F.leaky_relu(y, 0.2)
            y = y - y.mean(dim=(2, 3), keepdim=True)
            y = y / torch.sqrt(y.pow(2).mean(dim=(2, 3), keepdim=True) + 1e-8)
            style = F.linear(w_plus[:, layer], conv.style.weight, conv.style.bias)
            scale, shift = style.view(b, 2, -1, 1, 1).unbind(1)
            x = y * (scale + 1) + shift
            layer += 1
    img = F.conv2d(x, syn.torgb.weight) + syn.torgb.bias.view(1, -1, 1, 1)
    return torch.tanh(img)


def fd_gradient(fn, x: Tensor, eps: float = 1e-5) -> Tensor:
    """Central finite-difference gradient of a scalar function, element-wise."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(fn(x).detach())
        flat[i] = orig - eps
        lo = float(fn(x).detach())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: Tensor, b: Tensor) -> float:
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def autograd_gradient(fn, x: Tensor) -> Tensor:
    x = x.detach().clone().requires_grad_(True)
    value = fn(x)
    (grad,) = torch.autograd.grad(value, x)
    return grad.detach()
