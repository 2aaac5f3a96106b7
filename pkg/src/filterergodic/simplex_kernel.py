"""Finitely supported measures on the simplex and the exact filter kernel.

The filter kernel sends a prior ``mu`` to the random posterior
``mu M(y) / mu M(y) 1``, drawn with probability ``mu M(y) 1``.  On atomic
measures this is a finite computation: every atom splits into at most
``q`` atoms, and coincident atoms are merged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import AtomBudgetExceeded, DimensionMismatch
from .filtering import make_rng
from .model import HmmModel, as_simplex

MERGE_TOL = 1e-9
ATOM_BUDGET = 10**5
EXACT_W1_MAX_ATOMS = 64
ORDER_SLACK = 1e-10
FAMILY_SEED = 0xC0FFEE
FAMILY_SIZE = 200


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Probability measure ``sum_k w_k delta_{x_k}`` on the simplex.

    Atoms are stored sorted lexicographically by location so that equal
    measures have equal representations.
    """

    locations: np.ndarray  # (k, p)
    weights: np.ndarray  # (k,)

    def __len__(self):
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def to_dict(self):
        return {
            "atoms": [
                {"location": loc.tolist(), "weight": float(w)}
                for loc, w in zip(self.locations, self.weights)
            ]
        }

    @classmethod
    def from_dict(cls, doc) -> "AtomicMeasure":
        atoms = doc["atoms"]
        if not atoms:
            raise ValueError("an atomic measure needs at least one atom")
        locs = [as_simplex(a["location"]) for a in atoms]
        w = np.array([float(a["weight"]) for a in atoms])
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("atom weights must be positive and sum to 1")
        return make_measure(np.array(locs), w)


def make_measure(locations, weights, tol: float = MERGE_TOL,
                 budget: int = ATOM_BUDGET) -> AtomicMeasure:
    """Merge atoms closer than ``tol`` (L1), drop zero weights, sort."""
    X = np.array(locations, dtype=float, ndmin=2)
    w = np.array(weights, dtype=float).reshape(-1)
    keep = w > 0
    X, w = X[keep], w[keep]
    while len(w) > 1:
        pairs = cKDTree(X).query_pairs(tol, p=1, output_type="ndarray")
        if not len(pairs):
            break
        n = len(w)
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        ncomp, labels = connected_components(graph, directed=False)
        W = np.bincount(labels, weights=w, minlength=ncomp)
        Xs = np.zeros((ncomp, X.shape[1]))
        np.add.at(Xs, labels, X * w[:, None])
        X, w = Xs / W[:, None], W
    if len(w) > budget:
        raise AtomBudgetExceeded(f"{len(w)} atoms exceed the budget of {budget}")
    order = np.lexsort(X.T[::-1])
    X, w = X[order], w[order]
    w = w / w.sum()
    X.flags.writeable = False
    w.flags.writeable = False
    return AtomicMeasure(X, w)


def dirac_at(mu) -> AtomicMeasure:
    """Point mass at the prior ``mu``."""
    mu = as_simplex(mu)
    return make_measure(mu[None], [1.0])


def spread(mu) -> AtomicMeasure:
    """``sum_x mu_x delta_{delta_x}``: mass ``mu_x`` at each vertex."""
    mu = as_simplex(mu)
    idx = np.flatnonzero(mu > 0)
    return make_measure(np.eye(mu.size)[idx], mu[idx])


def mixture(measures, coefs=None) -> AtomicMeasure:
    if coefs is None:
        coefs = np.full(len(measures), 1.0 / len(measures))
    X = np.vstack([m.locations for m in measures])
    w = np.concatenate([c * m.weights for c, m in zip(coefs, measures)])
    return make_measure(X, w)


def kernel_push(model: HmmModel, measure: AtomicMeasure,
                budget: int = ATOM_BUDGET) -> AtomicMeasure:
    """One application of the filter kernel, computed exactly."""
    if measure.dim != model.p:
        raise DimensionMismatch("measure and model dimensions differ")
    # (k, q, p): unnormalized posteriors for every atom and symbol
    U = np.einsum("ki,yij->kyj", measure.locations, model.obs_matrices)
    mass = U.sum(axis=2)
    k_idx, y_idx = np.nonzero(mass > 0)
    m = mass[k_idx, y_idx]
    X = U[k_idx, y_idx] / m[:, None]
    w = measure.weights[k_idx] * m
    return make_measure(X, w, budget=budget)


def barycenter(measure: AtomicMeasure) -> np.ndarray:
    return measure.weights @ measure.locations


def moments(measure: AtomicMeasure) -> np.ndarray:
    """All moments of degree <= 2 of the coordinates: ``E[mu_i]`` followed by
    ``E[mu_i mu_j]`` for ``i <= j``."""
    X, w = measure.locations, measure.weights
    first = w @ X
    second = np.einsum("k,ki,kj->ij", w, X, X)
    iu = np.triu_indices(X.shape[1])
    return np.concatenate([first, second[iu]])


def _same(a: AtomicMeasure, b: AtomicMeasure) -> bool:
    return (
        a.locations.shape == b.locations.shape
        and np.array_equal(a.locations, b.locations)
        and np.array_equal(a.weights, b.weights)
    )


def wasserstein1(a: AtomicMeasure, b: AtomicMeasure) -> float:
    """Optimal transport cost between atomic measures.

    The ground metric is ``d(mu, nu) = sum_i |mu_i - nu_i| / 2``, the
    largest difference ``|mu(A) - nu(A)|`` over events ``A``.
    """
    if _same(a, b):
        return 0.0
    C = 0.5 * np.abs(a.locations[:, None, :] - b.locations[None, :, :]).sum(axis=2)
    if len(a) == 1:
        return float(C[0] @ b.weights)
    if len(b) == 1:
        return float(C[:, 0] @ a.weights)
    n, m = C.shape
    # transport plan T (n x m), row sums a.w, column sums b.w
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([a.weights, b.weights])
    res = linprog(C.ravel(), A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0))


def measure_distance(a: AtomicMeasure, b: AtomicMeasure) -> float:
    """W1 when both supports are small, else max moment difference."""
    if a.dim != b.dim:
        raise DimensionMismatch("measures live on different simplices")
    if len(a) <= EXACT_W1_MAX_ATOMS and len(b) <= EXACT_W1_MAX_ATOMS:
        return wasserstein1(a, b)
    return float(np.abs(moments(a) - moments(b)).max())


# ---------------------------------------------------------------------------
# convex order
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexTestFamily:
    """Max-of-affine functions ``f(mu) = max_k (c_k . mu + b_k)``.

    ``coefs`` has shape ``(F, K, p)`` and ``offsets`` ``(F, K)``; functions
    with fewer than ``K`` pieces repeat their first piece.
    """

    coefs: np.ndarray
    offsets: np.ndarray

    @classmethod
    def random(cls, p: int, size: int = FAMILY_SIZE, max_pieces: int = 4,
               seed: int = FAMILY_SEED) -> "ConvexTestFamily":
        rng = make_rng(seed)
        coefs = rng.uniform(-1, 1, (size, max_pieces, p))
        offsets = rng.uniform(-1, 1, (size, max_pieces))
        pieces = rng.integers(1, max_pieces + 1, size)
        for f, k in enumerate(pieces):
            coefs[f, k:] = coefs[f, 0]
            offsets[f, k:] = offsets[f, 0]
        return cls(coefs, offsets)

    @classmethod
    def from_pieces(cls, functions) -> "ConvexTestFamily":
        """Build from a list of functions, each a list of ``(coef, offset)``."""
        K = max(len(f) for f in functions)
        p = len(functions[0][0][0])
        coefs = np.empty((len(functions), K, p))
        offsets = np.empty((len(functions), K))
        for i, f in enumerate(functions):
            for k in range(K):
                c, b = f[min(k, len(f) - 1)]
                coefs[i, k] = c
                offsets[i, k] = b
        return cls(coefs, offsets)

    def __len__(self):
        return self.coefs.shape[0]

    def evaluate(self, X) -> np.ndarray:
        """Values ``(F, n)`` at the rows of ``X``."""
        X = np.atleast_2d(X)
        vals = np.einsum("fkp,np->fkn", self.coefs, X) + self.offsets[:, :, None]
        return vals.max(axis=1)

    def integrate(self, measure: AtomicMeasure) -> np.ndarray:
        return self.evaluate(measure.locations) @ measure.weights


def convex_order_leq(a: AtomicMeasure, b: AtomicMeasure, family: ConvexTestFamily,
                     slack: float = ORDER_SLACK):
    """Test ``a`` before ``b`` in convex order against every function in
    ``family``.

    Returns ``(holds, (index, gap))`` where ``gap = int f da - int f db`` is
    the largest over the family.  Passing is evidence only: the family is
    finite.
    """
    if a.dim != b.dim:
        raise DimensionMismatch("measures live on different simplices")
    gaps = family.integrate(a) - family.integrate(b)
    worst = int(np.argmax(gaps))
    return bool(gaps[worst] <= slack), (worst, float(gaps[worst]))


# ---------------------------------------------------------------------------
# invariant measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantSearch:
    status: str  # converged | cycling | budget-exhausted
    measure: AtomicMeasure
    residual: float
    steps: int
    period: int = 1
    verified: bool = False

    def to_dict(self):
        return {
            "status": self.status,
            "residual": self.residual,
            "steps": self.steps,
            "period": self.period,
            "verified": self.verified,
            "measure": self.measure.to_dict(),
        }


def _fingerprint(measure: AtomicMeasure) -> str:
    h = hashlib.sha256()
    h.update(np.round(measure.locations / MERGE_TOL).astype(np.int64).tobytes())
    h.update(np.round(measure.weights / MERGE_TOL).astype(np.int64).tobytes())
    return h.hexdigest()


def check_invariant(model: HmmModel, measure: AtomicMeasure, tol: float = 1e-12,
                    budget: int = ATOM_BUDGET):
    """``(ok, residual)`` with residual the distance from ``measure`` to its push."""
    residual = measure_distance(measure, kernel_push(model, measure, budget))
    return residual <= tol, residual


def find_invariant(model: HmmModel, start: AtomicMeasure, max_steps: int = 200,
                   tol: float = 1e-12, budget: int = ATOM_BUDGET) -> InvariantSearch:
    """Iterate the kernel from ``start`` until a fixed point or a cycle.

    On a cycle the average over one period is returned and re-checked for
    invariance; ``verified`` records the outcome.
    """
    cur = start
    seen = {_fingerprint(cur): 0}
    history = [cur]
    residual = float("inf")
    for step in range(max_steps):
        nxt = kernel_push(model, cur, budget)
        residual = measure_distance(cur, nxt)
        if residual <= tol:
            return InvariantSearch("converged", cur, residual, step, 1, True)
        fp = _fingerprint(nxt)
        # a period-one repeat is slow convergence, not a cycle
        if fp in seen and seen[fp] < step:
            first = seen[fp]
            cycle = history[first:]
            avg = mixture(cycle)
            ok, res = check_invariant(model, avg, tol, budget)
            return InvariantSearch("cycling", avg, res, step, len(cycle), ok)
        seen[fp] = step + 1
        history.append(nxt)
        cur = nxt
    return InvariantSearch("budget-exhausted", cur, residual, max_steps, 1, False)
