"""Checkers for the sufficient and necessary conditions for unique ergodicity.

Each checker returns a :class:`ConditionReport`.  ``HoldsCertified`` and
``FailsCertified`` carry evidence that can be re-verified independently
(see :mod:`filterergodic.audit`); ``Holds`` is a numerical verdict and
``Unknown`` means a search budget ran out.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolated, PreconditionFailed
from .filtering import filter_batch, make_rng, matrix_norm, product_normalized, simulate
from .linalg import is_exact_rank_one, singular_ratio
from .model import HmmModel, period

HOLDS = "Holds"
FAILS = "Fails"
HOLDS_CERTIFIED = "HoldsCertified"
FAILS_CERTIFIED = "FailsCertified"
UNKNOWN = "Unknown"

OBS_RANK_TOL = 1e-10
PRODUCT_ROUNDING = 1e-9
KR_DEFAULT_TOL = 1e-9
KR_DEFAULT_MAX_LEN = 256
KR_DEFAULT_RESTARTS = 16
KR_CLOSURE_BUDGET = 4096
CLOSURE_MATCH = 1e-12
# a closed product set certifies failure only if every member is this far
# from rank one; closer calls are left to the search
FAILS_RATIO_FLOOR = 1e-6


@dataclass
class ConditionReport:
    condition: str
    status: str
    evidence: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    elapsed_ms: float = 0.0

    @property
    def holds(self) -> bool:
        return self.status in (HOLDS, HOLDS_CERTIFIED)

    @property
    def certified(self) -> bool:
        return self.status in (HOLDS_CERTIFIED, FAILS_CERTIFIED)

    def to_dict(self, timing: bool = True):
        d = {
            "condition": self.condition,
            "status": self.status,
            "evidence": self.evidence,
            "bounds": self.bounds,
        }
        if timing:
            d["elapsed_ms"] = self.elapsed_ms
        return d


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.elapsed_ms = (time.perf_counter() - t0) * 1e3
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def word_labels(model: HmmModel, word) -> list:
    return [model.obs_labels[int(y)] for y in word]


# ---------------------------------------------------------------------------
# (N)
# ---------------------------------------------------------------------------

@_timed
def check_N(model: HmmModel) -> ConditionReport:
    """Nondegeneracy: ``P[i, j] > 0`` implies ``M(y)[i, j] > 0`` for every ``y``."""
    M, P = model.obs_matrices, model.transition
    bad = [
        (int(i), int(j), int(y))
        for i, j in zip(*np.nonzero(P > 0))
        for y in range(model.q)
        if not M[y, i, j] > 0
    ]
    if not bad:
        return ConditionReport("N", HOLDS_CERTIFIED, {"checked_pairs": int((P > 0).sum())})
    i, j, y = bad[0]
    return ConditionReport(
        "N",
        FAILS_CERTIFIED,
        {
            "witness": {"i": i, "j": j, "y": model.obs_labels[y], "y_index": y},
            "violations": [
                {"i": a, "j": b, "y": model.obs_labels[c], "y_index": c} for a, b, c in bad
            ],
        },
    )


# ---------------------------------------------------------------------------
# (O) / (UO)
# ---------------------------------------------------------------------------

def observable_subspace(model: HmmModel, tol: float = OBS_RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the smallest subspace containing the
    all-ones vector and invariant under ``v -> M(y) v`` for every ``y``."""
    p = model.p
    basis = []

    def add(v):
        scale = np.linalg.norm(v)
        if scale == 0.0:
            return False
        for _ in range(2):
            for b in basis:
                v = v - (b @ v) * b
        n = np.linalg.norm(v)
        if n <= tol * max(scale, 1.0):
            return False
        basis.append(v / n)
        return True

    add(np.ones(p))
    i = 0
    while i < len(basis) and len(basis) < p:
        v = basis[i]
        for y in range(model.q):
            add(model.obs_matrices[y] @ v)
            if len(basis) == p:
                break
        i += 1
    return np.array(basis).T


@_timed
def check_O(model: HmmModel) -> ConditionReport:
    """Observability: distinct priors induce distinct observation laws.

    The likelihood of every word under prior ``mu`` is ``mu . w`` for some
    ``w`` in :func:`observable_subspace`, so (O) holds iff that subspace is
    the whole space.
    """
    W = observable_subspace(model)
    dim = W.shape[1]
    ev = {"dim": dim, "p": model.p, "uniformly_observable": dim == model.p,
          "uo_note": "for finite state spaces (UO) coincides with (O)"}
    if dim == model.p:
        ev["basis"] = W.T.tolist()
        return ConditionReport("O", HOLDS_CERTIFIED, ev)
    # complement of W; every vector there is orthogonal to the ones vector
    Q, _ = np.linalg.qr(np.hstack([W, np.eye(model.p)]))
    v = Q[:, dim]
    v = v / np.abs(v).max()
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    ev["indistinguishable_direction"] = v.tolist()
    ev["basis"] = W.T.tolist()
    return ConditionReport("O", FAILS_CERTIFIED, ev)


# ---------------------------------------------------------------------------
# (K)
# ---------------------------------------------------------------------------

def is_subrectangular(pattern) -> bool:
    """Support equal to the product of its nonzero rows and nonzero columns."""
    S = np.asarray(pattern, dtype=bool)
    return bool(np.array_equal(S, np.outer(S.any(axis=1), S.any(axis=0))))


@_timed
def check_K(model: HmmModel, max_patterns: int = 1 << 16) -> ConditionReport:
    """Condition K: some product is nonzero with subrectangular
    support, and ``P`` is aperiodic.

    Product supports depend only on factor supports, so a breadth-first
    closure of the boolean pattern monoid decides the search exactly.
    """
    if max_patterns < model.q:
        raise ValueError("max_patterns must be at least the number of symbols")
    seeds = (model.obs_matrices > 0).astype(np.int64)
    per = period(model.transition)
    seen = {}
    queue = []
    for y in range(model.q):
        key = seeds[y].astype(bool).tobytes()
        if key not in seen:
            seen[key] = (y,)
            queue.append((seeds[y], (y,)))
    found = None
    head = 0
    while head < len(queue):
        pat, word = queue[head]
        head += 1
        if pat.any() and is_subrectangular(pat):
            found = word
            break
        for y in range(model.q):
            nxt = ((pat @ seeds[y]) > 0).astype(np.int64)
            key = nxt.astype(bool).tobytes()
            if key in seen:
                continue
            if len(seen) >= max_patterns:
                return ConditionReport(
                    "K", UNKNOWN,
                    {"patterns_explored": len(seen)},
                    {"max_patterns": max_patterns},
                )
            seen[key] = word + (y,)
            queue.append((nxt, word + (y,)))
    ev = {"period": per, "reachable_patterns": len(seen)}
    if found is None:
        ev["complete"] = True
        return ConditionReport("K", FAILS_CERTIFIED, ev, {"max_patterns": max_patterns})
    ev["word"] = word_labels(model, found)
    ev["word_indices"] = list(found)
    if per != 1:
        ev["reason"] = "subrectangular product exists but P is periodic"
        return ConditionReport("K", FAILS_CERTIFIED, ev, {"max_patterns": max_patterns})
    return ConditionReport("K", HOLDS_CERTIFIED, ev, {"max_patterns": max_patterns})


# ---------------------------------------------------------------------------
# (KR)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KrWitness:
    """Normalized product of ``word`` close to the rank-one matrix ``u rho``."""

    word: tuple
    u: np.ndarray
    rho: np.ndarray
    residual: float  # sigma_2 / sigma_1 of the normalized product
    exact: bool
    approx_error: float  # max-row-sum norm of normalized product minus u rho

    def to_dict(self, model: HmmModel = None):
        d = {
            "word_indices": list(self.word),
            "u": self.u.tolist(),
            "rho": self.rho.tolist(),
            "residual": self.residual,
            "exact": self.exact,
            "approx_error": self.approx_error,
        }
        if model is not None:
            d["word"] = word_labels(model, self.word)
        return d


def make_kr_witness(model: HmmModel, word) -> KrWitness:
    """Rank-one approximation ``u rho`` of the normalized product.

    ``u`` holds the row sums (max entry 1 because the product has unit
    norm) and ``rho`` is the normalized row vector ``lam A / lam A 1``.
    """
    A = product_normalized(model, word).entries
    u = A.sum(axis=1)
    row = model.stationary @ A
    rho = row / row.sum()
    exact = is_exact_rank_one(A)
    residual = 0.0 if exact else singular_ratio(A)
    err = matrix_norm(A - np.outer(u, rho))
    return KrWitness(tuple(int(y) for y in word), u, rho, float(residual), bool(exact), float(err))


def _round_key(A: np.ndarray) -> bytes:
    return np.round(A / PRODUCT_ROUNDING).astype(np.int64).tobytes()


def _product_closure(model: HmmModel, budget: int):
    """Breadth-first closure of the set of normalized products.

    Products are bucketed by their entries rounded to 1e-9; a new product
    counts as already present only if it also agrees with a bucket member
    to ``CLOSURE_MATCH`` (float noise), so slowly converging sequences do
    not masquerade as a finite set.

    Returns ``(closed, items, exact_word)`` with ``items`` a list of
    ``(word, matrix)``.  ``exact_word`` is set when an exactly rank-one
    product turns up first.
    """
    M = model.obs_matrices
    buckets = {}
    items = []

    def known(B):
        for idx in buckets.get(_round_key(B), ()):
            if np.abs(items[idx][1] - B).max() <= CLOSURE_MATCH:
                return True
        return False

    def insert(word, B):
        buckets.setdefault(_round_key(B), []).append(len(items))
        items.append((word, B))

    for y in range(model.q):
        s = matrix_norm(M[y])
        if s == 0 or known(M[y] / s):
            continue
        insert((y,), M[y] / s)
    head = 0
    while head < len(items):
        word, A = items[head]
        head += 1
        if is_exact_rank_one(A):
            return False, items, word
        for y in range(model.q):
            B = A @ M[y]
            s = matrix_norm(B)
            if s == 0:
                continue
            B = B / s
            if known(B):
                continue
            if len(items) >= budget:
                return False, items, None
            insert(word + (y,), B)
    return True, items, None


def _greedy_extend(model: HmmModel, word, A, max_len: int, tol: float):
    """Append, one symbol at a time, the symbol minimizing sigma_2/sigma_1."""
    M = model.obs_matrices
    best_ratio = singular_ratio(A) if word else float("inf")
    best_word = tuple(word)
    word = list(word)
    while len(word) < max_len and best_ratio > tol:
        step = None
        for y in range(model.q):
            B = M[y] if A is None else A @ M[y]
            s = matrix_norm(B)
            if s == 0:
                continue
            B = B / s
            r = singular_ratio(B)
            if step is None or r < step[0]:
                step = (r, y, B)
        if step is None:
            break
        r, y, A = step
        word.append(y)
        if r < best_ratio:
            best_ratio, best_word = r, tuple(word)
    return best_ratio, best_word


def _kr_restart(model: HmmModel, r: int, max_len: int, tol: float, seed: int):
    if r == 0:
        return _greedy_extend(model, (), None, max_len, tol)
    rng = make_rng(seed, 1000 + r)
    length = int(rng.integers(1, max(2, max_len // 2) + 1))
    path = simulate(model, model.stationary, length, seed, stream=2000 + r)
    # along the stationary path: track the best prefix, then extend greedily
    A = np.eye(model.p)
    best = (float("inf"), ())
    for k, y in enumerate(path.y):
        A = A @ model.obs_matrices[y]
        A = A / matrix_norm(A)
        ratio = singular_ratio(A)
        if ratio < best[0]:
            best = (ratio, tuple(int(v) for v in path.y[: k + 1]))
        if ratio <= tol:
            return best
    g = _greedy_extend(model, tuple(int(v) for v in path.y), A, max_len, tol)
    return min(best, g)


@_timed
def check_KR(model: HmmModel, max_len: int = KR_DEFAULT_MAX_LEN,
             restarts: int = KR_DEFAULT_RESTARTS, tol: float = KR_DEFAULT_TOL,
             seed: int = 0, threads: int = 1,
             closure_budget: int = KR_CLOSURE_BUDGET) -> ConditionReport:
    """Search for a (near) rank-one normalized product.

    Order of attempts:

    1. breadth-first closure of the normalized products (rounded to 1e-9);
       a finite closed set without rank-one members certifies failure;
    2. greedy sigma_2/sigma_1 descent from the empty word and from
       ``restarts - 1`` simulated stationary paths;
    3. condition K, which implies this one.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    bounds = {"max_len": max_len, "restarts": restarts, "tol": tol, "seed": seed,
              "closure_budget": closure_budget}
    closed, items, exact_word = _product_closure(model, closure_budget)
    if exact_word is not None:
        w = make_kr_witness(model, exact_word)
        return ConditionReport("KR", HOLDS_CERTIFIED,
                               {"route": "exact-rank-one", "witness": w.to_dict(model)}, bounds)
    if closed:
        ratios = [singular_ratio(A) for _, A in items]
        i = int(np.argmin(ratios))
        ev = {
            "route": "closed-product-set",
            "closure_size": len(items),
            "min_ratio": float(ratios[i]),
            "products": [
                {"word": word_labels(model, w), "ratio": float(r)} for (w, _), r in zip(items, ratios)
            ],
        }
        if ratios[i] <= tol:
            ev["witness"] = make_kr_witness(model, items[i][0]).to_dict(model)
            return ConditionReport("KR", HOLDS, ev, bounds)
        if ratios[i] >= FAILS_RATIO_FLOOR:
            bounds["ratio_lower_bound"] = float(ratios[i])
            return ConditionReport("KR", FAILS_CERTIFIED, ev, bounds)

    def run(r):
        return _kr_restart(model, r, max_len, tol, seed)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]
    best_ratio, best_word = min(results, key=lambda t: (t[0], len(t[1])))
    stats = {"closure_explored": len(items), "best_ratio": float(best_ratio),
             "restart_ratios": [float(r) for r, _ in results]}
    if best_word:
        w = make_kr_witness(model, best_word)
        if w.exact:
            return ConditionReport("KR", HOLDS_CERTIFIED,
                                   {"route": "exact-rank-one", "witness": w.to_dict(model), **stats},
                                   bounds)
        if w.residual <= tol:
            return ConditionReport("KR", HOLDS,
                                   {"route": "numerical", "witness": w.to_dict(model), **stats},
                                   bounds)
    k = check_K(model)
    if k.status == HOLDS_CERTIFIED:
        return ConditionReport("KR", HOLDS_CERTIFIED,
                               {"route": "implied-by-K", "K": k.to_dict(timing=False), **stats},
                               bounds)
    return ConditionReport("KR", UNKNOWN, {"route": "search-exhausted", **stats}, bounds)


def witness_from_report(model: HmmModel, report: ConditionReport) -> KrWitness:
    """Rebuild the :class:`KrWitness` recorded in a KR report."""
    w = report.evidence.get("witness")
    if w is None:
        raise PreconditionFailed(f"KR report ({report.status}) carries no witness")
    return make_kr_witness(model, w["word_indices"])


# ---------------------------------------------------------------------------
# (C)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionCWitness:
    """Witness for the merging condition at accuracy ``epsilon``.

    The measure set is ``{mu : mu . u > alpha}`` and the word set is the
    single word ``word``.
    """

    epsilon: float
    N: int
    word: tuple
    u: np.ndarray
    alpha: float
    delta: float
    verified_bound: float
    samples: int

    def to_dict(self, model: HmmModel = None):
        d = {
            "epsilon": self.epsilon,
            "N": self.N,
            "word_indices": list(self.word),
            "u": self.u.tolist(),
            "alpha": self.alpha,
            "delta": self.delta,
            "analytic_bound": 4 * self.delta / self.alpha,
            "verified_bound": self.verified_bound,
            "samples": self.samples,
        }
        if model is not None:
            d["word"] = word_labels(model, self.word)
        return d


def sample_level_set(u, alpha: float, count: int, rng) -> np.ndarray:
    """``count`` uniform draws from ``{mu in simplex : mu . u > alpha}`` by rejection."""
    p = len(u)
    out = []
    have = 0
    for _ in range(10_000):
        draw = rng.dirichlet(np.ones(p), size=max(2 * (count - have), 16))
        ok = draw[draw @ u > alpha]
        out.append(ok)
        have += len(ok)
        if have >= count:
            break
    else:
        raise PreconditionFailed("could not sample the level set; acceptance rate too low")
    return np.vstack(out)[:count]


def condition_c_witness(model: HmmModel, witness: KrWitness, epsilon: float,
                        samples: int = 1000, seed: int = 0) -> ConditionCWitness:
    """Turn a rank-one witness into a merging witness.

    With ``alpha = lam . u / 2`` and ``delta = alpha * epsilon / 4``, a
    product within ``delta`` of ``u rho`` sends every ``mu`` with
    ``mu . u > alpha`` to within ``2 delta / alpha`` of ``rho``; any two such
    posteriors are then within ``4 delta / alpha = epsilon``.  The bound is
    also checked on ``samples`` random pairs.
    """
    if not epsilon > 0:
        raise PreconditionFailed("epsilon must be positive")
    alpha = float(model.stationary @ witness.u) / 2
    if not alpha > 0:
        raise PreconditionFailed("lam . u vanishes")
    delta = alpha * epsilon / 4
    if not witness.approx_error < delta:
        raise PreconditionFailed(
            f"witness error {witness.approx_error:.3e} is not below alpha*epsilon/4 = {delta:.3e}"
        )
    rng = make_rng(seed, 7)
    mus = sample_level_set(witness.u, alpha, 2 * samples, rng)
    words = np.broadcast_to(np.asarray(witness.word), (2 * samples, len(witness.word)))
    post = filter_batch(model, mus, words)
    gaps = np.abs(post[:samples] - post[samples:]).sum(axis=1)
    bound = float(gaps.max()) if samples else 0.0
    if bound > epsilon:
        raise BoundViolated(f"sampled merging gap {bound:.3e} exceeds epsilon {epsilon}")
    return ConditionCWitness(float(epsilon), len(witness.word), witness.word, witness.u,
                             alpha, delta, bound, samples)
