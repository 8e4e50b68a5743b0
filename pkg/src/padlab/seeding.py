"""Deterministic sub-seed derivation.

Everything that samples (batch order, latent draws, init) derives its seed
from (root seed, purpose, step) through SHA-256, so any step of a run can be
reproduced in isolation and resumed runs need no RNG state in checkpoints.
"""

from __future__ import annotations

import hashlib

import torch


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary repr-able parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def torch_generator(*parts) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(derive_seed(*parts))
    return g
