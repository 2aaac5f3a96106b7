"""Re-verification of certified verdicts from first principles.

Nothing here reuses the search code: supports, minors, kernel pushes and
ranks are recomputed with plain loops or different numerical routes, so a
bug in a checker cannot also hide in its audit.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations, product

import numpy as np

from .model import HmmModel
from .simplex_kernel import AtomicMeasure, wasserstein1

AUDIT_INVARIANT_TOL = 1e-12


def raw_product(model: HmmModel, word) -> np.ndarray:
    A = np.eye(model.p)
    for y in word:
        A = A @ model.obs_matrices[int(y)]
        top = A.max()
        if top > 0:
            A = A / top
    return A


def subrectangular_brute(A) -> bool:
    """Nonzero, and ``A[i,j] > 0`` and ``A[k,l] > 0`` force ``A[i,l] > 0`` and ``A[k,j] > 0``."""
    S = np.asarray(A) > 0
    n, m = S.shape
    if not S.any():
        return False
    for i, j, k, l in product(range(n), range(m), range(n), range(m)):
        if S[i, j] and S[k, l] and not (S[i, l] and S[k, j]):
            return False
    return True


def rank_one_by_minors(A) -> bool:
    """Nonzero and every 2x2 minor is exactly zero (rational arithmetic)."""
    A = np.asarray(A, dtype=float)
    if not A.any():
        return False
    F = [[Fraction(float(v)) for v in row] for row in A]
    for i, k in combinations(range(A.shape[0]), 2):
        for j, l in combinations(range(A.shape[1]), 2):
            if F[i][j] * F[k][l] - F[i][l] * F[k][j] != 0:
                return False
    return True


def is_primitive(P) -> bool:
    """Wielandt: an irreducible ``p x p`` matrix is aperiodic iff its
    ``(p - 1)^2 + 1``-th power is entrywise positive."""
    S = (np.asarray(P) > 0).astype(np.int64)
    p = S.shape[0]
    R = np.eye(p, dtype=np.int64)
    for _ in range((p - 1) ** 2 + 1):
        R = ((R @ S) > 0).astype(np.int64)
    return bool(R.all())


def nondegenerate_brute(model: HmmModel) -> bool:
    p, q = model.p, model.q
    for i in range(p):
        for j in range(p):
            if model.transition[i, j] > 0:
                for y in range(q):
                    if not model.obs_matrices[y, i, j] > 0:
                        return False
    return True


def observable_by_enumeration(model: HmmModel) -> bool:
    """Rank of the likelihood vectors ``M(w) 1`` over all words of length
    ``< p`` equals ``p``."""
    vecs = [np.ones(model.p)]
    frontier = [np.ones(model.p)]
    for _ in range(model.p - 1):
        frontier = [model.obs_matrices[y] @ v for v in frontier for y in range(model.q)]
        vecs.extend(frontier)
        if len(vecs) > 20000:
            break
    return int(np.linalg.matrix_rank(np.array(vecs), tol=1e-9)) == model.p


def push_by_loops(model: HmmModel, measure: AtomicMeasure) -> AtomicMeasure:
    atoms = {}
    for loc, w in zip(measure.locations, measure.weights):
        for y in range(model.q):
            row = [sum(loc[i] * model.obs_matrices[y, i, j] for i in range(model.p))
                   for j in range(model.p)]
            mass = sum(row)
            if mass <= 0:
                continue
            post = tuple(v / mass for v in row)
            key = tuple(round(v, 9) for v in post)
            if key in atoms:
                old_loc, old_w = atoms[key]
                atoms[key] = (old_loc, old_w + w * mass)
            else:
                atoms[key] = (post, w * mass)
    keys = sorted(atoms)
    locs = np.array([atoms[k][0] for k in keys])
    ws = np.array([atoms[k][1] for k in keys])
    return AtomicMeasure(locs, ws / ws.sum())


def invariance_residual(model: HmmModel, measure: AtomicMeasure) -> float:
    return wasserstein1(measure, push_by_loops(model, measure))


def audit_verdict(model: HmmModel, verdict) -> list:
    """Re-check every certificate of a certified verdict.

    Returns a list of ``(route, passed, detail)``; an empty list means the
    verdict carried nothing to audit.
    """
    out = []
    for cert in verdict.certificates:
        route = cert["route"]
        if route == "nondegenerate-aperiodic":
            ok = nondegenerate_brute(model) and is_primitive(model.transition)
            out.append((route, ok, "pairwise positivity and Wielandt primitivity"))
        elif route == "observable":
            out.append((route, observable_by_enumeration(model), "likelihood-vector rank"))
        elif route == "subrectangular-product":
            A = raw_product(model, cert["word_indices"])
            ok = subrectangular_brute(A) and is_primitive(model.transition)
            out.append((route, ok, f"word {cert['word_indices']}"))
        elif route == "rank-one-product":
            A = raw_product(model, cert["word_indices"])
            out.append((route, rank_one_by_minors(A), f"word {cert['word_indices']}"))
        elif route == "two-invariant-measures":
            ms = [AtomicMeasure.from_dict(d) for d in cert["measures"]]
            res = [invariance_residual(model, m) for m in ms]
            dist = wasserstein1(ms[0], ms[1])
            ok = all(r <= AUDIT_INVARIANT_TOL for r in res) and dist > AUDIT_INVARIANT_TOL
            out.append((route, ok, f"residuals {res}, distance {dist}"))
        else:
            out.append((route, False, "unknown route"))
    return out
