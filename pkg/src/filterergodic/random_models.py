"""Random model generators for experiments and property tests."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import HmmModel


def random_positive_model(p: int, q: int, rng, floor: float = 0.05) -> HmmModel:
    """Random model whose observation matrices are all entrywise positive."""
    raw = rng.uniform(floor, 1.0, (q, p, p))
    raw /= raw.sum(axis=(0, 2))[None, :, None]
    # exact row sums: push the rounding residue into the largest entry of each row
    resid = 1.0 - raw.sum(axis=(0, 2))
    for i in range(p):
        y, j = np.unravel_index(np.argmax(raw[:, i, :]), (q, p))
        raw[y, i, j] += resid[i]
    return HmmModel.from_matrices(raw)


def random_model(p: int, q: int, rng, sparsity: float = 0.3) -> HmmModel:
    """Random model with some zero entries; retried until valid."""
    for _ in range(1000):
        raw = rng.uniform(0, 1, (q, p, p)) * (rng.uniform(size=(q, p, p)) > sparsity)
        tot = raw.sum(axis=(0, 2))
        if np.any(tot == 0):
            continue
        raw /= tot[None, :, None]
        resid = 1.0 - raw.sum(axis=(0, 2))
        for i in range(p):
            y, j = np.unravel_index(np.argmax(raw[:, i, :]), (q, p))
            raw[y, i, j] += resid[i]
        try:
            return HmmModel.from_matrices(raw)
        except ValidationError:
            continue
    raise RuntimeError("could not draw a valid random model")
