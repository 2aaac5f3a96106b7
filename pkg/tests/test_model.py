import json
from math import gcd

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filterergodic.errors import NotIrreducible, ParseError, ValidationError
from filterergodic.model import (
    HmmModel,
    as_simplex,
    fully_observed_model,
    load_model,
    period,
    stationary_distribution,
    validate,
)
from filterergodic.random_models import random_model

PARITY_DOC = {
    "states": ["0", "1"],
    "observations": ["0", "1"],
    "M": {"0": [[0, 0.5], [0.5, 0]], "1": [[0.5, 0], [0, 0.5]]},
}


def test_load_parity():
    m = load_model(json.dumps(PARITY_DOC))
    assert (m.p, m.q) == (2, 2)
    np.testing.assert_array_equal(m.transition, [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(m.stationary, [0.5, 0.5])


def test_load_rejects_negative_entry():
    doc = json.loads(json.dumps(PARITY_DOC))
    doc["M"]["0"][0][0] = -0.1
    doc["M"]["1"][0][0] = 0.6
    with pytest.raises(ValidationError) as info:
        load_model(json.dumps(doc))
    assert "nonnegative-entries" in [r for r, _ in info.value.report.violations]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d.pop("states"),
        lambda d: d["M"].pop("1"),
        lambda d: d["M"].__setitem__("0", [[0, 0.5]]),
        lambda d: d["M"]["0"][0].__setitem__(0, "x"),
        lambda d: d.__setitem__("states", ["a", "a"]),
    ],
)
def test_load_schema_errors(mutate):
    doc = json.loads(json.dumps(PARITY_DOC))
    mutate(doc)
    with pytest.raises(ParseError):
        load_model(json.dumps(doc))


def test_load_malformed_text():
    with pytest.raises(ParseError):
        load_model("{not json")


def test_row_sum_violation_is_rejected_not_renormalized():
    doc = json.loads(json.dumps(PARITY_DOC))
    doc["M"]["1"][0][0] = 0.5 + 1e-9
    with pytest.raises(ValidationError) as info:
        load_model(json.dumps(doc))
    assert info.value.report.violations[0][0] == "row-stochastic"


def test_fully_observed_sums_to_P():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    m = fully_observed_model(P)
    # built by hand: M(y)[i, j] = P[i, j] 1{j = y}
    np.testing.assert_array_equal(m.obs_matrices[0], [[0.9, 0], [0.2, 0]])
    np.testing.assert_array_equal(m.obs_matrices[1], [[0, 0.1], [0, 0.8]])
    np.testing.assert_allclose(m.obs_matrices.sum(axis=0), P, atol=1e-12)


def test_validate_examples(parity):
    rep = validate(parity)
    assert rep.ok and rep.period == 1 and rep.aperiodic
    swap = validate(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
    assert swap.ok and swap.period == 2 and not swap.aperiodic
    red = validate(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    assert not red.ok
    assert [r for r, _ in red.violations] == ["irreducible"]


def test_validate_idempotent(parity):
    assert validate(parity) == validate(parity)


@pytest.mark.parametrize(
    "P, expected",
    [
        ([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]),
        ([[0.9, 0.1], [0.2, 0.8]], [2 / 3, 1 / 3]),
        ([[0, 1], [1, 0]], [0.5, 0.5]),
    ],
)
def test_stationary_examples(P, expected):
    lam = stationary_distribution(np.array(P, dtype=float))
    np.testing.assert_allclose(lam, expected, rtol=0, atol=1e-12)


def test_stationary_not_irreducible():
    with pytest.raises(NotIrreducible):
        stationary_distribution(np.eye(2))


def test_stationary_power_path_above_direct_limit(monkeypatch):
    import filterergodic.model as mod

    monkeypatch.setattr(mod, "DIRECT_SOLVE_MAX_P", 1)
    lam = stationary_distribution(np.array([[0.9, 0.1], [0.2, 0.8]]))
    np.testing.assert_allclose(lam, [2 / 3, 1 / 3], atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 40))
def test_stationary_residual(seed, p):
    m = random_model(p, 2, np.random.default_rng(seed))
    lam = m.stationary
    assert np.abs(lam @ m.transition - lam).sum() <= 1e-12
    assert abs(lam.sum() - 1) <= 1e-12 and np.all(lam > 0)
    # eigenvector oracle
    w, V = np.linalg.eig(m.transition.T)
    v = np.real(V[:, np.argmin(np.abs(w - 1))])
    np.testing.assert_allclose(lam, v / v.sum(), atol=1e-9)


@pytest.mark.parametrize(
    "P, d",
    [
        ([[0.5, 0.5], [0.5, 0.5]], 1),
        ([[0, 1], [1, 0]], 2),
        ([[0, 1, 0], [0, 0, 1], [1, 0, 0]], 3),
    ],
)
def test_period_examples(P, d):
    assert period(np.array(P)) == d


def test_period_requires_irreducible():
    with pytest.raises(NotIrreducible):
        period(np.eye(3))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 8), sparsity=st.floats(0.3, 0.7))
def test_period_divides_every_cycle(seed, p, sparsity):
    m = random_model(p, 1, np.random.default_rng(seed), sparsity=sparsity)
    d = period(m.transition)
    g = nx.DiGraph()
    g.add_nodes_from(range(p))
    g.add_edges_from(zip(*np.nonzero(m.transition > 0)))
    lengths = [len(c) for c in nx.simple_cycles(g)]
    for L in lengths:
        assert L % d == 0
    # and d is the largest such number
    g0 = 0
    for L in lengths:
        g0 = gcd(g0, L)
    assert g0 == d


def test_simplex_checks():
    with pytest.raises(ValueError):
        as_simplex([0.5, 0.6])
    with pytest.raises(ValueError):
        as_simplex([-0.1, 1.1])
    assert as_simplex([0.25, 0.75]).sum() == 1.0


def test_model_is_immutable(parity):
    with pytest.raises(ValueError):
        parity.obs_matrices[0, 0, 0] = 1.0
    with pytest.raises(AttributeError):
        parity.transition = None


def test_roundtrip_json(fully):
    again = load_model(fully.to_json())
    np.testing.assert_array_equal(again.obs_matrices, fully.obs_matrices)
    assert again.obs_labels == fully.obs_labels


def test_single_state():
    m = HmmModel.from_matrices([[[0.3]], [[0.7]]])
    assert m.p == 1 and m.stationary.tolist() == [1.0]
