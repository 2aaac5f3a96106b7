"""Experiments on filter stability and the aggregated ergodicity verdict."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .conditions import (
    FAILS_CERTIFIED,
    HOLDS,
    HOLDS_CERTIFIED,
    KR_DEFAULT_MAX_LEN,
    KR_DEFAULT_RESTARTS,
    KR_DEFAULT_TOL,
    check_K,
    check_KR,
    check_N,
    check_O,
)
from .errors import AtomBudgetExceeded, ContradictoryEvidence, SupportViolation
from .filtering import filter_path, make_rng, simulate, simulate_batch
from .model import HmmModel, as_simplex, period, point_mass
from .simplex_kernel import (
    AtomicMeasure,
    check_invariant,
    dirac_at,
    find_invariant,
    measure_distance,
    spread,
)

UNIQUE = "UniquelyErgodic"
NOT_UNIQUE = "NotUniquelyErgodic"
INCONCLUSIVE = "Inconclusive"
CERTIFIED = "certified"
NUMERICAL = "numerical"

STABILITY_TOL = 1e-3
STABILITY_HORIZON = 10**4
OCCUPATION_TOL = 0.02
OCCUPATION_HORIZON = 10**4
OCCUPATION_BURNIN = 10**3
INVARIANT_TOL = 1e-12


@dataclass(frozen=True)
class StabilityCurve:
    priors: tuple
    gaps: np.ndarray  # gaps[n - 1] = ||pi_n^mu - pi_n^nu||, n = 1..horizon
    seed: int

    def to_dict(self):
        return {
            "priors": [list(map(float, p)) for p in self.priors],
            "gaps": self.gaps.tolist(),
            "seed": self.seed,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "gap"])
        for n, g in enumerate(self.gaps, start=1):
            w.writerow([n, repr(float(g))])
        return buf.getvalue()


def _absolutely_continuous(mu, nu) -> bool:
    return bool(np.all((mu == 0) | (nu > 0)))


def stability_curve(model: HmmModel, mu, nu, horizon: int, seed: int = 0,
                    law=None) -> StabilityCurve:
    """Total variation gap between the filters started at ``mu`` and ``nu``.

    Observations are simulated under ``mu`` (or under ``law`` when given,
    in which case both priors must be dominated by it; this is the
    diagnostic mode for mutually singular priors).
    """
    mu, nu = as_simplex(mu), as_simplex(nu)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if law is None:
        if not _absolutely_continuous(mu, nu):
            raise SupportViolation("mu is not absolutely continuous with respect to nu")
        law = mu
    else:
        law = as_simplex(law)
        if not (_absolutely_continuous(mu, law) and _absolutely_continuous(nu, law)):
            raise SupportViolation("both priors must be dominated by the simulating law")
    path = simulate(model, law, horizon, seed)
    a = filter_path(model, mu, path.y).posteriors[1:]
    b = filter_path(model, nu, path.y).posteriors[1:]
    return StabilityCurve((mu, nu), np.abs(a - b).sum(axis=1), int(seed))


def _sample_priors(measure: AtomicMeasure, count: int, rng) -> np.ndarray:
    idx = rng.choice(len(measure), size=count, p=measure.weights)
    return measure.locations[idx]


def occupation_moments(model: HmmModel, start: AtomicMeasure, horizon: int, burnin: int,
                       seed: int = 0, replicas: int = 1) -> np.ndarray:
    """Degree <= 2 moments of the time-averaged law of the filter.

    Each replica draws a prior from ``start``, simulates the signal from
    that prior and averages ``pi_k`` (and ``pi_k pi_k^T``) over
    ``burnin < k <= horizon``.
    """
    rng = make_rng(seed, 11)
    priors = _sample_priors(start, replicas, rng)
    _, y = simulate_batch(model, priors, horizon, replicas, seed, stream=12)
    p = model.p
    first = np.zeros(p)
    second = np.zeros((p, p))
    cur = priors.copy()
    M = model.obs_matrices
    for k in range(horizon):
        unnorm = np.einsum("bi,bij->bj", cur, M[y[:, k]])
        cur = unnorm / unnorm.sum(axis=1, keepdims=True)
        if k + 1 > burnin:
            first += cur.sum(axis=0)
            second += cur.T @ cur
    count = replicas * (horizon - burnin)
    iu = np.triu_indices(p)
    return np.concatenate([first / count, (second / count)[iu]])


def occupation_compare(model: HmmModel, a: AtomicMeasure, b: AtomicMeasure,
                       horizon: int = OCCUPATION_HORIZON, burnin: int = OCCUPATION_BURNIN,
                       seed: int = 0, replicas: int = 1):
    """Compare the Cesaro averages started from ``a`` and ``b``.

    Returns ``(gap, summary)`` where ``gap`` is the largest absolute
    difference between corresponding moments.  Both runs use the same random
    streams, so ``a == b`` gives exactly zero.
    """
    if not horizon > burnin >= 0:
        raise ValueError("need horizon > burnin >= 0")
    ma = occupation_moments(model, a, horizon, burnin, seed, replicas)
    mb = occupation_moments(model, b, horizon, burnin, seed, replicas)
    diff = np.abs(ma - mb)
    return float(diff.max()), {
        "moments_a": ma.tolist(),
        "moments_b": mb.tolist(),
        "argmax": int(diff.argmax()),
        "horizon": horizon,
        "burnin": burnin,
        "replicas": replicas,
        "seed": seed,
    }


@dataclass(frozen=True)
class EntropyEstimate:
    estimate: float
    stderr: float
    running: np.ndarray
    seed: int

    def to_dict(self):
        return {"estimate": self.estimate, "stderr": self.stderr, "horizon": self.running.size,
                "seed": self.seed}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "running_entropy"])
        for n, h in enumerate(self.running, start=1):
            w.writerow([n, repr(float(h))])
        return buf.getvalue()


def entropy_rate(model: HmmModel, horizon: int, seed: int = 0, batches: int = 50) -> EntropyEstimate:
    """Entropy rate of the observation process, in nats.

    Averages the surprisal ``-log(pi_{k-1} M(Y_k) 1)`` along one stationary
    path; the standard error comes from non-overlapping batch means.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    path = simulate(model, model.stationary, horizon, seed)
    surprisal = -filter_path(model, model.stationary, path.y).log_increments
    running = np.cumsum(surprisal) / np.arange(1, horizon + 1)
    nb = min(batches, horizon)
    if nb >= 2:
        size = horizon // nb
        means = surprisal[: nb * size].reshape(nb, size).mean(axis=1)
        stderr = float(means.std(ddof=1) / np.sqrt(nb))
    else:
        stderr = float("nan")
    return EntropyEstimate(float(surprisal.mean()), stderr, running, int(seed))


# ---------------------------------------------------------------------------
# verdict
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Budgets:
    kr_max_len: int = KR_DEFAULT_MAX_LEN
    kr_restarts: int = KR_DEFAULT_RESTARTS
    kr_tol: float = KR_DEFAULT_TOL
    k_max_patterns: int = 1 << 16
    invariant_steps: int = 64
    atom_budget: int = 10**4
    invariant_tol: float = INVARIANT_TOL
    stability_horizon: int = STABILITY_HORIZON
    stability_tol: float = STABILITY_TOL
    threads: int = 1


@dataclass
class ErgodicityVerdict:
    status: str
    certainty: str | None
    route: str | None
    evidence: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    caveats: list = field(default_factory=list)
    period: int = 1

    def to_dict(self, timing: bool = True):
        ev = []
        for e in self.evidence:
            ev.append(e.to_dict(timing=timing) if hasattr(e, "condition") else e)
        return {
            "status": self.status,
            "certainty": self.certainty,
            "route": self.route,
            "period": self.period,
            "caveats": list(self.caveats),
            "certificates": self.certificates,
            "evidence": ev,
        }


def _invariant_pair(model: HmmModel, b: Budgets):
    """Search for invariant measures from the point mass at ``lam`` and
    from its vertex spread."""
    found = {}
    notes = {}
    for name, start in (("from_dirac", dirac_at(model.stationary)),
                        ("from_spread", spread(model.stationary))):
        try:
            res = find_invariant(model, start, b.invariant_steps, b.invariant_tol, b.atom_budget)
        except AtomBudgetExceeded as exc:
            notes[name] = {"status": "atom-budget-exceeded", "message": str(exc)}
            continue
        notes[name] = {k: v for k, v in res.to_dict().items() if k != "measure"}
        notes[name]["atoms"] = len(res.measure)
        if res.verified and res.residual <= b.invariant_tol:
            found[name] = res.measure
    cert = None
    if len(found) == 2:
        dist = measure_distance(found["from_dirac"], found["from_spread"])
        notes["distance"] = dist
        if dist > b.invariant_tol:
            cert = {
                "route": "two-invariant-measures",
                "measures": [found["from_dirac"].to_dict(), found["from_spread"].to_dict()],
                "residuals": [check_invariant(model, m, b.invariant_tol, b.atom_budget)[1]
                              for m in (found["from_dirac"], found["from_spread"])],
                "distance": dist,
            }
    return cert, {"kind": "invariant-search", **notes}


def verdict(model: HmmModel, budgets: Budgets | None = None, seed: int = 0) -> ErgodicityVerdict:
    """Decide unique ergodicity of the filter, certified where possible.

    Certified routes, in order: nondegeneracy with an aperiodic signal,
    observability, a subrectangular product, an exactly rank-one
    product; against uniqueness, two distinct exactly invariant atomic
    measures.  Failing those, a numerically rank-one product together
    with decaying stability curves gives a numerical verdict.

    Raises
    ------
    ContradictoryEvidence
        When certified evidence exists on both sides.
    """
    b = budgets or Budgets()
    per = period(model.transition)
    evidence = []
    unique_certs = []
    caveats = []
    if per > 1:
        caveats.append(
            f"P is periodic (period {per}): only Cesaro averages of the law of the filter are "
            "claimed to converge, not the law itself"
        )

    n_rep = check_N(model)
    o_rep = check_O(model)
    k_rep = check_K(model, b.k_max_patterns)
    evidence += [n_rep, o_rep, k_rep]
    if n_rep.status == HOLDS_CERTIFIED and per == 1:
        unique_certs.append({"route": "nondegenerate-aperiodic", "period": per})
    if o_rep.status == HOLDS_CERTIFIED:
        unique_certs.append({"route": "observable", "basis": o_rep.evidence["basis"]})
    if k_rep.status == HOLDS_CERTIFIED:
        unique_certs.append({"route": "subrectangular-product",
                             "word_indices": k_rep.evidence["word_indices"], "period": per})

    kr_rep = None
    if not unique_certs:
        kr_rep = check_KR(model, b.kr_max_len, b.kr_restarts, b.kr_tol, seed, b.threads)
        evidence.append(kr_rep)
        if kr_rep.status == HOLDS_CERTIFIED and "witness" in kr_rep.evidence:
            unique_certs.append({"route": "rank-one-product",
                                 "word_indices": kr_rep.evidence["witness"]["word_indices"]})
        elif kr_rep.status == HOLDS_CERTIFIED:
            k = kr_rep.evidence["K"]["evidence"]
            unique_certs.append({"route": "subrectangular-product",
                                 "word_indices": k["word_indices"], "period": per})

    non_unique, inv_notes = _invariant_pair(model, b)
    evidence.append(inv_notes)

    if unique_certs and non_unique:
        raise ContradictoryEvidence(
            f"certified uniqueness via {unique_certs[0]['route']} but two invariant measures "
            f"at distance {non_unique['distance']:.3e}"
        )
    if kr_rep is not None and kr_rep.status == FAILS_CERTIFIED and unique_certs:
        raise ContradictoryEvidence("rank-one condition certified to fail alongside uniqueness")

    if unique_certs:
        return ErgodicityVerdict(UNIQUE, CERTIFIED, unique_certs[0]["route"], evidence,
                                 unique_certs, caveats, per)
    if non_unique:
        return ErgodicityVerdict(NOT_UNIQUE, CERTIFIED, non_unique["route"], evidence,
                                 [non_unique], caveats, per)

    if kr_rep is not None and kr_rep.status == HOLDS:
        summaries = []
        decayed = True
        for x in range(min(model.p, 4)):
            curve = stability_curve(model, point_mass(model.p, x), model.stationary,
                                    b.stability_horizon, seed + x)
            final = float(curve.gaps[-1])
            summaries.append({"mu": f"delta_{x}", "nu": "lambda", "final_gap": final,
                              "horizon": b.stability_horizon})
            decayed &= final < b.stability_tol
        evidence.append({"kind": "stability", "curves": summaries})
        if decayed:
            return ErgodicityVerdict(UNIQUE, NUMERICAL, "numerical-rank-one", evidence, [],
                                     caveats, per)
    return ErgodicityVerdict(INCONCLUSIVE, None, None, evidence, [], caveats, per)


__all__ = [
    "Budgets",
    "EntropyEstimate",
    "ErgodicityVerdict",
    "StabilityCurve",
    "entropy_rate",
    "occupation_compare",
    "occupation_moments",
    "stability_curve",
    "verdict",
]
