"""Finite hidden Markov models given by observation matrices.

A model is a stack of nonnegative ``p x p`` matrices ``M(y)``, one per
observation symbol, with ``M(y)[i, j]`` the joint probability of moving
from state ``i`` to ``j`` while emitting ``y``.  The signal transition
matrix is ``P = sum_y M(y)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .errors import NoConvergence, NotIrreducible, ParseError, ValidationError

ROW_SUM_TOL = 1e-12
DIRECT_SOLVE_MAX_P = 512
POWER_MAX_ITER = 10**6

_SCHEMA_KEYS = {"states", "observations", "M"}


# ---------------------------------------------------------------------------
# simplex vectors
# ---------------------------------------------------------------------------

def as_simplex(weights, tol=ROW_SUM_TOL) -> np.ndarray:
    """Return ``weights`` as a read-only float array after checking it is a
    probability vector (nonnegative, summing to one within ``tol``)."""
    w = np.array(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("a probability vector must be one-dimensional and nonempty")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("probability vector has negative or non-finite entries")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"probability vector sums to {w.sum()!r}, not 1")
    w.flags.writeable = False
    return w


def point_mass(p: int, x: int) -> np.ndarray:
    """The point mass at state ``x`` on ``p`` states."""
    w = np.zeros(p)
    w[x] = 1.0
    w.flags.writeable = False
    return w


# ---------------------------------------------------------------------------
# graph primitives
# ---------------------------------------------------------------------------

def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(j)
    return seen


def is_irreducible(transition) -> bool:
    adj = np.asarray(transition) > 0
    if adj.shape[0] == 0:
        return False
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def period(transition) -> int:
    """Common period of an irreducible chain.

    Uses BFS levels from state 0: the period is the gcd of
    ``level[i] + 1 - level[j]`` over all edges ``i -> j``.
    """
    adj = np.asarray(transition) > 0
    if not is_irreducible(adj):
        raise NotIrreducible("period is defined for irreducible chains only")
    p = adj.shape[0]
    level = np.full(p, -1)
    level[0] = 0
    queue = [0]
    for i in queue:
        for j in np.flatnonzero(adj[i]):
            if level[j] < 0:
                level[j] = level[i] + 1
                queue.append(int(j))
    d = 0
    for i, j in zip(*np.nonzero(adj)):
        d = gcd(d, abs(int(level[i]) + 1 - int(level[j])))
    return d


def _gth(P: np.ndarray) -> np.ndarray:
    A = np.array(P, dtype=float)
    n = A.shape[0]
    for k in range(n - 1, 0, -1):
        scale = A[k, :k].sum()
        A[:k, k] /= scale
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ A[:k, k]
    return x / x.sum()


def stationary_distribution(transition, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Stationary law of an irreducible row-stochastic matrix.

    Parameters
    ----------
    transition : (p, p) array_like
        Row-stochastic, irreducible.
    tol : float
        Required L1 residual ``||lam P - lam||_1``.

    Returns
    -------
    lam : (p,) ndarray
        Strictly positive probability vector with ``lam P = lam``.

    Notes
    -----
    For ``p <= 512`` the Grassmann-Taksar-Heyman elimination is used: a
    direct solve of ``lam (P - I) = 0`` that never subtracts, so symmetric
    chains come out exact.  Larger chains use power iteration on the lazy
    chain ``(I + P) / 2`` (same fixed point, no periodic oscillation).
    """
    P = np.asarray(transition, dtype=float)
    p = P.shape[0]
    if not is_irreducible(P):
        raise NotIrreducible("transition matrix is not irreducible")
    if p <= DIRECT_SOLVE_MAX_P:
        lam = _gth(P)
    else:
        lazy = 0.5 * (np.eye(p) + P)
        lam = np.full(p, 1.0 / p)
        for _ in range(POWER_MAX_ITER):
            nxt = lam @ lazy
            nxt /= nxt.sum()
            if np.abs(nxt - lam).sum() <= tol / 4:
                lam = nxt
                break
            lam = nxt
        else:
            raise NoConvergence("power iteration hit the iteration cap")
    lam.flags.writeable = False
    return lam


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)
    period: int = 0
    aperiodic: bool = False

    def to_dict(self):
        return {
            "ok": self.ok,
            "violations": [{"rule": r, "message": m} for r, m in self.violations],
            "period": self.period,
            "aperiodic": self.aperiodic,
        }


def _check_matrices(obs_matrices, stationary=None) -> ValidationReport:
    M = np.asarray(obs_matrices, dtype=float)
    violations = []
    if M.ndim != 3 or M.shape[1] != M.shape[2] or M.shape[0] == 0 or M.shape[1] == 0:
        violations.append(("shape", f"expected a (q, p, p) stack, got shape {M.shape}"))
        return ValidationReport(False, violations, 0, False)
    if not np.all(np.isfinite(M)):
        violations.append(("finite-entries", "observation matrices contain non-finite entries"))
        return ValidationReport(False, violations, 0, False)
    neg = np.argwhere(M < 0)
    if len(neg):
        y, i, j = neg[0]
        violations.append(
            ("nonnegative-entries", f"M({y})[{i},{j}] = {M[y, i, j]!r} is negative")
        )
    P = M.sum(axis=0)
    rows = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)
    if len(bad):
        violations.append(
            ("row-stochastic", f"row {bad[0]} of P sums to {rows[bad[0]]!r}")
        )
    per = 0
    if not is_irreducible(P):
        violations.append(("irreducible", "support digraph of P is not strongly connected"))
    else:
        per = period(P)
        if stationary is not None:
            lam = np.asarray(stationary)
            res = np.abs(lam @ P - lam).sum()
            if res > ROW_SUM_TOL or np.any(lam <= 0) or abs(lam.sum() - 1) > ROW_SUM_TOL:
                violations.append(("stationary", f"stored stationary law has residual {res:.3e}"))
    return ValidationReport(not violations, violations, per, per == 1)


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Validated finite HMM.

    Build instances with :meth:`from_matrices` or :func:`load_model`; both
    reject invalid input with :class:`ValidationError`.
    """

    state_labels: tuple
    obs_labels: tuple
    obs_matrices: np.ndarray  # (q, p, p)
    transition: np.ndarray
    stationary: np.ndarray

    @classmethod
    def from_matrices(cls, obs_matrices, states=None, observations=None) -> "HmmModel":
        M = np.array(obs_matrices, dtype=float)
        report = _check_matrices(M)
        if not report.ok:
            raise ValidationError(report)
        q, p, _ = M.shape
        states = tuple(states) if states is not None else tuple(f"s{i}" for i in range(p))
        observations = (
            tuple(observations) if observations is not None else tuple(str(y) for y in range(q))
        )
        if len(states) != p or len(set(states)) != p:
            raise ValidationError(
                ValidationReport(False, [("state-labels", "state labels must be p unique strings")])
            )
        if len(observations) != q or len(set(observations)) != q:
            raise ValidationError(
                ValidationReport(False, [("obs-labels", "observation labels must be q unique strings")])
            )
        P = M.sum(axis=0)
        lam = stationary_distribution(P)
        M.flags.writeable = False
        P.flags.writeable = False
        return cls(states, observations, M, P, lam)

    @property
    def p(self) -> int:
        return self.obs_matrices.shape[1]

    @property
    def q(self) -> int:
        return self.obs_matrices.shape[0]

    def obs_index(self, label) -> int:
        try:
            return self.obs_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown observation label {label!r}") from None

    def to_json(self) -> str:
        return json.dumps(
            {
                "states": list(self.state_labels),
                "observations": list(self.obs_labels),
                "M": {lab: self.obs_matrices[y].tolist() for y, lab in enumerate(self.obs_labels)},
            },
            indent=2,
        )


def validate(model) -> ValidationReport:
    """Check every model invariant and report, never raise.

    Accepts an :class:`HmmModel` or a raw ``(q, p, p)`` stack.
    """
    if isinstance(model, HmmModel):
        return _check_matrices(model.obs_matrices, model.stationary)
    return _check_matrices(model)


def load_model(source: str) -> HmmModel:
    """Parse the JSON model format and return a validated model."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    extra = set(doc) - _SCHEMA_KEYS
    missing = _SCHEMA_KEYS - set(doc)
    if extra:
        raise ParseError(f"unknown keys: {sorted(extra)}")
    if missing:
        raise ParseError(f"missing keys: {sorted(missing)}")
    states, observations, mats = doc["states"], doc["observations"], doc["M"]
    for name, labels in (("states", states), ("observations", observations)):
        if not isinstance(labels, list) or not labels or not all(isinstance(s, str) for s in labels):
            raise ParseError(f"'{name}' must be a nonempty list of strings")
        if len(set(labels)) != len(labels):
            raise ParseError(f"'{name}' labels must be unique")
    if not isinstance(mats, dict) or set(mats) != set(observations):
        raise ParseError("'M' must have exactly one key per observation label")
    p = len(states)
    stack = []
    for lab in observations:
        m = mats[lab]
        if (
            not isinstance(m, list)
            or len(m) != p
            or not all(isinstance(row, list) and len(row) == p for row in m)
        ):
            raise ParseError(f"M[{lab!r}] must be a {p}x{p} array")
        for row in m:
            for v in row:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ParseError(f"M[{lab!r}] contains a non-number: {v!r}")
        stack.append(m)
    arr = np.array(stack, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError("numbers must be finite")
    return HmmModel.from_matrices(arr, states, observations)


def load_model_file(path) -> HmmModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


# ---------------------------------------------------------------------------
# stock models used across tests, docs and the CLI
# ---------------------------------------------------------------------------

def parity_model() -> HmmModel:
    """Two states, ``Y_k = 1{X_{k-1} = X_k}``; the filter is not uniquely ergodic."""
    return HmmModel.from_matrices(
        [[[0.0, 0.5], [0.5, 0.0]], [[0.5, 0.0], [0.0, 0.5]]],
        states=["0", "1"],
        observations=["0", "1"],
    )


def fully_observed_model(transition) -> HmmModel:
    """``M(y)[i, j] = P[i, j] * 1{j == y}``: the observation is the new state."""
    P = np.asarray(transition, dtype=float)
    p = P.shape[0]
    M = np.zeros((p, p, p))
    for y in range(p):
        M[y, :, y] = P[:, y]
    return HmmModel.from_matrices(M, observations=[f"y{y}" for y in range(p)])


def silent_model(transition) -> HmmModel:
    """A single observation symbol with ``M(y0) = P``."""
    return HmmModel.from_matrices(np.asarray(transition, dtype=float)[None], observations=["y0"])
