"""Filter recursion, path simulation and normalized matrix products."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroLikelihood, ZeroProduct
from .model import HmmModel, as_simplex

DEFAULT_WINDOW = 64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Distinct streams are statistically independent, and a given key always
    reproduces the same draws, whichever order streams are consumed in.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def matrix_norm(A) -> float:
    """Max absolute row sum; for nonnegative matrices ``sup_{|f|<=1} sup_{|mu|_1<=1} mu A f``."""
    return float(np.abs(A).sum(axis=1).max())


@dataclass(frozen=True)
class ScaledMatrix:
    entries: np.ndarray
    log_scale: float

    def to_dict(self):
        return {"entries": self.entries.tolist(), "log_scale": self.log_scale}


@dataclass(frozen=True)
class PathSample:
    x: np.ndarray  # length n + 1
    y: np.ndarray  # length n, y[k-1] is Y_k
    seed: int


@dataclass(frozen=True)
class FilterTrace:
    posteriors: np.ndarray  # (n + 1, p)
    log_increments: np.ndarray  # (n,)

    @property
    def log_likelihood(self) -> float:
        return float(self.log_increments.sum())

    @property
    def final(self) -> np.ndarray:
        return self.posteriors[-1]

    def to_csv(self) -> str:
        p = self.posteriors.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"state_{i}" for i in range(p)] + ["log_increment"])
        for k, post in enumerate(self.posteriors):
            inc = "" if k == 0 else repr(float(self.log_increments[k - 1]))
            w.writerow([k] + [repr(float(v)) for v in post] + [inc])
        return buf.getvalue()

    def to_dict(self):
        return {
            "posteriors": self.posteriors.tolist(),
            "log_increments": self.log_increments.tolist(),
            "log_likelihood": self.log_likelihood,
        }


def _check_word(model: HmmModel, word) -> np.ndarray:
    w = np.asarray(word, dtype=np.int64).reshape(-1)
    if w.size and (w.min() < 0 or w.max() >= model.q):
        raise IndexError(f"observation index out of range [0, {model.q})")
    return w


def filter_step(model: HmmModel, prior, y: int):
    """One step of the filter.

    Returns the posterior ``prior M(y) / prior M(y) 1`` together with the
    log predictive probability ``log(prior M(y) 1)``.
    """
    if not 0 <= y < model.q:
        raise IndexError(f"observation index {y} out of range")
    unnorm = np.asarray(prior, dtype=float) @ model.obs_matrices[y]
    mass = unnorm.sum()
    if not mass > 0:
        raise ZeroLikelihood(1)
    return unnorm / mass, float(np.log(mass))


def filter_path(model: HmmModel, prior, word) -> FilterTrace:
    prior = as_simplex(prior)
    if prior.size != model.p:
        raise DimensionMismatch(f"prior has {prior.size} entries, model has {model.p} states")
    w = _check_word(model, word)
    n = w.size
    post = np.empty((n + 1, model.p))
    inc = np.empty(n)
    post[0] = prior
    cur = post[0]
    M = model.obs_matrices
    for k in range(n):
        unnorm = cur @ M[w[k]]
        mass = unnorm.sum()
        if not mass > 0:
            raise ZeroLikelihood(k + 1)
        cur = unnorm / mass
        post[k + 1] = cur
        inc[k] = np.log(mass)
    return FilterTrace(post, inc)


def filter_batch(model: HmmModel, priors, words) -> np.ndarray:
    """Final posteriors for many (prior, word) pairs at once.

    ``priors`` is ``(B, p)`` and ``words`` is ``(B, n)``; returns ``(B, p)``.
    Used by the Monte-Carlo experiments; raises on any zero likelihood.
    """
    cur = np.array(priors, dtype=float)
    words = np.asarray(words, dtype=np.int64)
    M = model.obs_matrices
    for k in range(words.shape[1]):
        unnorm = np.einsum("bi,bij->bj", cur, M[words[:, k]])
        mass = unnorm.sum(axis=1)
        if np.any(~(mass > 0)):
            raise ZeroLikelihood(k + 1)
        cur = unnorm / mass[:, None]
    return cur


def tv_distance(a, b) -> float:
    """``sum_i |a_i - b_i|`` (range [0, 2])."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.abs(a - b).sum())


def product_normalized(model: HmmModel, word) -> ScaledMatrix:
    """``M(y_1)...M(y_N)`` divided by its norm, with the log of that norm.

    The running product is renormalized after every factor.
    """
    w = _check_word(model, word)
    if w.size == 0:
        raise ValueError("word must be nonempty")
    A = np.eye(model.p)
    log_scale = 0.0
    for y in w:
        A = A @ model.obs_matrices[y]
        s = matrix_norm(A)
        if s == 0.0:
            raise ZeroProduct(f"product vanishes at factor {len(w)}")
        A = A / s
        log_scale += np.log(s)
    return ScaledMatrix(A, float(log_scale))


def _joint_tables(model: HmmModel) -> np.ndarray:
    # cdf over flattened (y, j) for each current state i
    joint = model.obs_matrices.transpose(1, 0, 2).reshape(model.p, -1)
    cdf = np.cumsum(joint, axis=1)
    cdf /= cdf[:, -1:]
    return cdf


def simulate(model: HmmModel, initial, n: int, seed: int, stream: int = 0) -> PathSample:
    """Sample ``(X_0..X_n, Y_1..Y_n)`` with ``X_0 ~ initial``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    initial = as_simplex(initial)
    rng = make_rng(seed, stream)
    u0 = rng.random()
    u = rng.random(n)
    cdf = _joint_tables(model)
    p = model.p
    x = np.empty(n + 1, dtype=np.int64)
    y = np.empty(n, dtype=np.int64)
    x[0] = min(int(np.searchsorted(np.cumsum(initial), u0, side="right")), p - 1)
    cur = x[0]
    last = cdf.shape[1] - 1
    for k in range(n):
        idx = min(int(np.searchsorted(cdf[cur], u[k], side="right")), last)
        y[k], cur = divmod(idx, p)
        x[k + 1] = cur
    return PathSample(x, y, int(seed))


def simulate_batch(model: HmmModel, initial, n: int, count: int, seed: int, stream: int = 0):
    """Vectorized :func:`simulate` for ``count`` independent paths.

    ``initial`` is a single law or a ``(count, p)`` array of per-path laws.
    Returns ``(x, y)`` with shapes ``(count, n + 1)`` and ``(count, n)``.
    """
    rng = make_rng(seed, stream)
    p = model.p
    init = np.asarray(initial, dtype=float)
    if init.ndim == 1:
        init = np.broadcast_to(init, (count, p))
    icdf = np.cumsum(init, axis=1)
    u0 = rng.random(count)
    x0 = np.minimum((icdf <= u0[:, None]).sum(axis=1), p - 1)
    cdf = _joint_tables(model)
    last = cdf.shape[1] - 1
    x = np.empty((count, n + 1), dtype=np.int64)
    y = np.empty((count, n), dtype=np.int64)
    x[:, 0] = x0
    cur = x0
    for k in range(n):
        u = rng.random(count)
        idx = np.minimum((cdf[cur] <= u[:, None]).sum(axis=1), last)
        y[:, k], cur = np.divmod(idx, p)
        x[:, k + 1] = cur
    return x, y


def minmax_gap(model: HmmModel, window: int = DEFAULT_WINDOW, horizon: int = 2000,
               seed: int = 0) -> np.ndarray:
    """Pathwise proxy for ``||pi^max_k - pi^min_k||`` along a stationary path.

    For each ``k`` in ``window..horizon`` the min-filter proxy runs the last
    ``window`` observations from ``lam``; the max-filter proxy runs them
    from the point mass at the true state ``X_{k-window}``.
    """
    if not horizon >= window >= 1:
        raise ValueError("need horizon >= window >= 1")
    path = simulate(model, model.stationary, horizon, seed)
    ks = np.arange(window, horizon + 1)
    B = ks.size
    lo = np.broadcast_to(model.stationary, (B, model.p)).copy()
    hi = np.zeros((B, model.p))
    hi[np.arange(B), path.x[ks - window]] = 1.0
    M = model.obs_matrices
    for t in range(window):
        mats = M[path.y[ks - window + t]]  # Y_{k-window+t+1}
        for cur in (lo, hi):
            unnorm = np.einsum("bi,bij->bj", cur, mats)
            mass = unnorm.sum(axis=1)
            if np.any(~(mass > 0)):
                raise ZeroLikelihood(t + 1)
            cur[...] = unnorm / mass[:, None]
    return np.abs(hi - lo).sum(axis=1)


def gaps_to_csv(gaps, start: int, header=("k", "gap")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for i, g in enumerate(gaps):
        w.writerow([start + i, repr(float(g))])
    return buf.getvalue()
