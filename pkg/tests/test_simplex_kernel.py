import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from filterergodic.errors import AtomBudgetExceeded, DimensionMismatch
from filterergodic.model import HmmModel
from filterergodic.random_models import random_model
from filterergodic.simplex_kernel import (
    AtomicMeasure,
    ConvexTestFamily,
    barycenter,
    check_invariant,
    convex_order_leq,
    dirac_at,
    find_invariant,
    kernel_push,
    make_measure,
    measure_distance,
    mixture,
    moments,
    spread,
    wasserstein1,
)


def _random_measure(rng, p, k=None):
    k = k or int(rng.integers(1, 6))
    return make_measure(rng.dirichlet(np.ones(p), k), rng.dirichlet(np.ones(k)))


def test_parity_push_of_vertex(parity):
    out = kernel_push(parity, dirac_at([1.0, 0.0]))
    assert len(out) == 2
    np.testing.assert_array_equal(out.locations, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(out.weights, [0.5, 0.5])


def test_parity_has_two_fixed_points(parity):
    for m in (dirac_at([0.5, 0.5]), spread([0.5, 0.5])):
        ok, res = check_invariant(parity, m)
        assert ok and res == 0.0
    assert wasserstein1(dirac_at([0.5, 0.5]), spread([0.5, 0.5])) == 0.5


def test_merge_within_tolerance():
    m = make_measure([[0.5, 0.5], [0.5 + 2e-10, 0.5 - 2e-10], [1, 0]], [0.25, 0.25, 0.5])
    assert len(m) == 2
    np.testing.assert_allclose(m.weights, [0.5, 0.5])


def test_atom_budget():
    with pytest.raises(AtomBudgetExceeded):
        make_measure(np.eye(3), [1 / 3] * 3, budget=2)


def test_epsilon_pair_distance():
    for eps in (1e-3, 0.1, 0.25):
        a = dirac_at([0.5, 0.5])
        b = dirac_at([0.5 + eps, 0.5 - eps])
        assert wasserstein1(a, b) == pytest.approx(eps, abs=1e-15)


def test_round_trip_dict():
    m = make_measure([[0.2, 0.8], [1, 0]], [0.3, 0.7])
    again = AtomicMeasure.from_dict(m.to_dict())
    np.testing.assert_array_equal(again.locations, m.locations)
    np.testing.assert_array_equal(again.weights, m.weights)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 4), n=st.integers(1, 7))
def test_wasserstein_matches_assignment(seed, p, n):
    # uniform weights: optimal transport reduces to an assignment problem
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.ones(p), n)
    Y = rng.dirichlet(np.ones(p), n)
    a = make_measure(X, np.full(n, 1 / n))
    b = make_measure(Y, np.full(n, 1 / n))
    C = 0.5 * np.abs(X[:, None] - Y[None]).sum(axis=2)
    r, c = linear_sum_assignment(C)
    assert wasserstein1(a, b) == pytest.approx(C[r, c].mean(), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_wasserstein_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_measure(rng, 3) for _ in range(3))
    assert wasserstein1(a, a) == 0.0
    assert wasserstein1(a, b) == pytest.approx(wasserstein1(b, a), abs=1e-9)
    assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-9
    assert 0.0 <= wasserstein1(a, b) <= 1.0 + 1e-12


def test_distance_falls_back_to_moments(rng):
    a = _random_measure(rng, 3, k=80)
    b = _random_measure(rng, 3, k=3)
    d = measure_distance(a, b)
    assert d == pytest.approx(np.abs(moments(a) - moments(b)).max())


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        measure_distance(dirac_at([1.0, 0.0]), dirac_at([1.0, 0.0, 0.0]))


def test_moments_by_hand():
    m = make_measure([[1, 0], [0.5, 0.5]], [0.5, 0.5])
    # E mu0, E mu1, E mu0^2, E mu0 mu1, E mu1^2
    np.testing.assert_allclose(moments(m), [0.75, 0.25, 0.625, 0.125, 0.125])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 4), q=st.integers(1, 4))
def test_push_preserves_mass_and_barycenter(seed, p, q):
    rng = np.random.default_rng(seed)
    model = random_model(p, q, rng)
    m = _random_measure(rng, p)
    out = kernel_push(model, m)
    assert abs(out.weights.sum() - 1) <= 1e-12
    np.testing.assert_allclose(barycenter(out), barycenter(m) @ model.transition, atol=1e-12)


def test_push_by_hand_three_atoms():
    M = np.array([[[0.2, 0.3], [0.1, 0.1]], [[0.4, 0.1], [0.3, 0.5]]])
    model = HmmModel.from_matrices(M)
    m = make_measure([[1, 0], [0, 1]], [0.25, 0.75])
    out = kernel_push(model, m)
    # atom (1,0): y0 -> (0.4, 0.6) w 0.25*0.5, y1 -> (0.8, 0.2) w 0.25*0.5
    # atom (0,1): y0 -> (0.5, 0.5) w 0.75*0.2, y1 -> (0.375, 0.625) w 0.75*0.8
    want = {(0.375, 0.625): 0.6, (0.4, 0.6): 0.125, (0.5, 0.5): 0.15, (0.8, 0.2): 0.125}
    got = {tuple(np.round(x, 12)): w for x, w in zip(out.locations, out.weights)}
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_family_by_hand():
    fam = ConvexTestFamily.from_pieces([[((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0)]])
    # f(mu) = max(mu0, mu1)
    np.testing.assert_allclose(fam.evaluate([[0.3, 0.7], [0.5, 0.5]]), [[0.7, 0.5]])


def test_jensen_strict_example():
    fam = ConvexTestFamily.from_pieces([[((1.0, 0.0), 0.0), ((0.0, 1.0), 0.0)]])
    lo, hi = dirac_at([0.5, 0.5]), spread([0.5, 0.5])
    assert convex_order_leq(lo, hi, fam)[0]
    holds, (_, gap) = convex_order_leq(hi, lo, fam)
    assert not holds and gap == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 4))
def test_sandwich_between_dirac_and_spread(seed, p):
    rng = np.random.default_rng(seed)
    fam = ConvexTestFamily.random(p)
    m = _random_measure(rng, p)
    b = barycenter(m)
    b = b / b.sum()
    assert convex_order_leq(dirac_at(b), m, fam)[0]
    assert convex_order_leq(m, spread(b), fam)[0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 3), q=st.integers(1, 3))
def test_push_preserves_convex_order(seed, p, q):
    rng = np.random.default_rng(seed)
    model = random_model(p, q, rng)
    fam = ConvexTestFamily.random(p)
    m = _random_measure(rng, p)
    b = barycenter(m)
    b = b / b.sum()
    lo, hi = kernel_push(model, dirac_at(b)), kernel_push(model, m)
    assert convex_order_leq(lo, hi, fam)[0]
    assert convex_order_leq(hi, kernel_push(model, spread(b)), fam)[0]


def test_family_is_deterministic():
    a, b = ConvexTestFamily.random(3), ConvexTestFamily.random(3)
    np.testing.assert_array_equal(a.coefs, b.coefs)
    assert len(a) == 200


def test_swap_invariant_found_by_cycle():
    swap = HmmModel.from_matrices([[[0.0, 1.0], [1.0, 0.0]]])
    res = find_invariant(swap, dirac_at([1.0, 0.0]))
    assert res.status == "cycling" and res.period == 2 and res.verified
    np.testing.assert_allclose(res.measure.weights, [0.5, 0.5])


def test_converges_for_single_observation(silent):
    res = find_invariant(silent, dirac_at([1.0, 0.0]))
    assert res.status == "converged"
    np.testing.assert_allclose(res.measure.locations[0], silent.stationary, atol=1e-11)


def test_mixture_weights():
    m = mixture([dirac_at([1.0, 0.0]), dirac_at([0.0, 1.0])], [0.2, 0.8])
    np.testing.assert_allclose(m.weights, [0.8, 0.2])
