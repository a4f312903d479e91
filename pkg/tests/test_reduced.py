import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sal.dynamics import Configuration, integrate_states
from sal.errors import ValidationError
from sal.reduced import (
    ReducedState,
    bipolar_field,
    bipolar_limit,
    check_bipolar_balance,
    consensus_closed_form,
    consensus_coefficients,
    consensus_field,
    consensus_limit,
    integrate_bipolar,
    integrate_consensus,
)
from sal.spectral import from_diagonal


def simplex(rng, d):
    p = rng.exponential(size=d)
    return p / p.sum()


simplex_and_lambdas = st.integers(1, 7).flatmap(
    lambda d: st.tuples(
        st.lists(st.floats(0.01, 1.0), min_size=d, max_size=d),
        st.lists(st.floats(-2.0, 2.0), min_size=d, max_size=d),
    )
)


def test_reduced_state_invariants():
    st_ = ReducedState.from_masses([0.25, 0.75], [2.0, -1.0], 0.5)
    assert st_.M == pytest.approx(-0.25, abs=1e-12)
    assert st_.alpha == pytest.approx(math.tanh(-0.125), abs=1e-12)
    with pytest.raises(ValidationError):
        ReducedState.from_masses([0.5, 0.6], [1.0, 0.0], 1.0)


def test_closed_form_examples():
    p0 = np.array([0.5, 0.5])
    assert np.allclose(consensus_closed_form(p0, [1.0, 0.0], 0.0), p0)
    assert consensus_closed_form(p0, [1.0, 0.0], 1.0)[0] == pytest.approx(math.e**2 / (math.e**2 + 1), abs=1e-15)
    assert consensus_closed_form(p0, [1.0, 0.0], 1.0)[0] == pytest.approx(0.880797, abs=1e-6)


def test_closed_form_stable_for_large_gaps():
    p = consensus_closed_form([0.5, 0.5 - 1e-9, 1e-9], [2.0, -2.0, 1.9], 50.0)
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(simplex_and_lambdas, st.floats(0, 50))
def test_closed_form_on_simplex(pl, t):
    w, lam = pl
    p0 = np.array(w) / sum(w)
    p = consensus_closed_form(p0, lam, t)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)


@settings(max_examples=100, deadline=None)
@given(simplex_and_lambdas, st.floats(0, 3))
def test_closed_form_solves_field(pl, t):
    w, lam = pl
    p0 = np.array(w) / sum(w)
    h = 1e-5
    deriv = (consensus_closed_form(p0, lam, t + 2 * h) - consensus_closed_form(p0, lam, t)) / (2 * h)
    assert np.allclose(deriv, consensus_field(consensus_closed_form(p0, lam, t + h), lam), atol=1e-6)


def test_consensus_field_examples():
    assert np.allclose(consensus_field([0.5, 0.5], [1.0, 0.0]), [0.5, -0.5])
    assert np.all(consensus_field([0.0, 1.0, 0.0], [1.0, 2.0, 3.0]) == 0)
    rng = np.random.default_rng(0)
    assert abs(consensus_field(simplex(rng, 5), rng.uniform(-2, 2, 5)).sum()) < 1e-12


def test_integrated_consensus_matches_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(10):
        p0, lam = simplex(rng, 4), rng.uniform(-2, 2, 4)
        _, P = integrate_consensus(p0, lam, 5.0, 1e-2)
        assert np.max(np.abs(P[-1] - consensus_closed_form(p0, lam, 5.0))) < 1e-8


def test_consensus_limit_cases():
    assert np.allclose(consensus_limit([0.2, 0.3, 0.5], [1.0, 1.0, -1.0]), [0.4, 0.6, 0.0])
    assert np.allclose(consensus_limit([0.0, 0.3, 0.7], [5.0, 1.0, 0.0]), [0.0, 1.0, 0.0])
    p = consensus_closed_form([0.2, 0.3, 0.5], [1.0, 0.2, -1.0], 50.0)
    assert np.allclose(p, consensus_limit([0.2, 0.3, 0.5], [1.0, 0.2, -1.0]), atol=1e-4)


def test_consensus_coefficients_keep_sign():
    c0 = np.array([-0.6, 0.0, 0.8])
    c = consensus_coefficients(c0, [1.0, 2.0, -1.0], 3.0)
    assert c[0] < 0 and c[1] == 0 and c[2] > 0
    assert np.linalg.norm(c) == pytest.approx(1, abs=1e-12)


def test_full_flow_keeps_consensus_and_signs():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4)
    x /= np.linalg.norm(x)
    s = from_diagonal(rng.uniform(-2, 2, 4))
    _, out = integrate_states(np.tile(x, (5, 1)), s.matrix, 1.0, 20.0, 1e-2, record_every=10)
    for X in out:
        assert np.max(np.abs(X - X[0])) < 1e-8
        assert np.all(np.sign(X[0]) == np.sign(x))


def test_bipolar_field_examples():
    lam = np.array([1.0, -1.0])
    pdot, Mdot = bipolar_field(ReducedState.from_masses([0.5, 0.5], lam, 1.0), lam, 1.0)
    assert np.all(pdot == 0) and Mdot == 0
    pdot, Mdot = bipolar_field(ReducedState.from_masses([0.0, 1.0], lam, 1.0), lam, 1.0)
    assert np.all(pdot == 0) and Mdot == 0
    rng = np.random.default_rng(3)
    for _ in range(50):
        lam = -rng.uniform(0.1, 3, 4)
        p = simplex(rng, 4)
        _, Mdot = bipolar_field(ReducedState.from_masses(p, lam, 1.5), lam, 1.5)
        assert Mdot < 0


@settings(max_examples=200, deadline=None)
@given(simplex_and_lambdas, st.floats(0.01, 5))
def test_bipolar_Mdot_identity_and_sign(pl, beta):
    w, lam = pl
    lam = np.array(lam)
    p = np.array(w) / sum(w)
    state = ReducedState.from_masses(p, lam, beta)
    pdot, Mdot = bipolar_field(state, lam, beta)
    assert abs(Mdot - float(lam @ pdot)) <= 1e-12 * max(1.0, abs(Mdot))
    assert Mdot == 0 or np.sign(Mdot) == np.sign(state.M)


def test_bipolar_limit_examples():
    p, M = bipolar_limit([0.9, 0.1], [-1.0, -3.0], 1.0)
    assert np.allclose(p, [0, 1]) and M == pytest.approx(-3)
    p, M = bipolar_limit([0.5, 0.5], [1.0, -1.0], 1.0)
    assert np.allclose(p, [0.5, 0.5]) and M == 0
    p, M = bipolar_limit([0.3, 0.4, 0.3], [2.0, 1.0, -1.0], 1.0)
    assert np.allclose(p, [1, 0, 0]) and M == pytest.approx(2)


def test_bipolar_limit_ties_renormalize():
    p, M = bipolar_limit([0.2, 0.2, 0.6], [2.0, 2.0, 0.5], 1.0)
    assert np.allclose(p, [0.5, 0.5, 0.0]) and M == pytest.approx(2)
    # the top eigenvalue off support is never selected
    p, _ = bipolar_limit([0.0, 0.5, 0.5], [3.0, 1.0, 0.0], 1.0)
    assert np.allclose(p, [0, 1, 0])


def test_bipolar_reduced_reaches_limit():
    lam = np.array([2.0, 1.0, -1.0])
    p0 = np.array([0.3, 0.4, 0.3])
    _, P = integrate_bipolar(p0, lam, 1.0, 50.0, 1e-2, record_every=100)
    assert np.allclose(P[-1], bipolar_limit(p0, lam, 1.0)[0], atol=1e-6)


def test_bipolar_detector():
    u = np.array([0.6, -0.8, 0.0])
    found = check_bipolar_balance(Configuration(np.stack([u, -u]), 1.0))
    assert found is not None
    assert np.allclose(found[0], u) and list(found[1]) == [1, -1]
    assert check_bipolar_balance(Configuration(np.stack([u, u, u, -u]), 1.0)) is None
    assert check_bipolar_balance(Configuration(np.stack([u, -u, u]), 1.0)) is None
    noisy = u + 1e-3 * np.array([0.1, 0.2, 0.3])
    noisy /= np.linalg.norm(noisy)
    assert check_bipolar_balance(Configuration(np.stack([noisy, -u]), 1.0)) is None
    # canonical sign: first nonzero component positive
    found = check_bipolar_balance(Configuration(np.stack([-u, u]), 1.0))
    assert found[0][0] > 0 and list(found[1]) == [-1, 1]


def test_full_flow_stays_bipolar():
    rng = np.random.default_rng(4)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    X0 = np.stack([u, u, -u, -u])
    s = from_diagonal([1.0, -0.5, 0.3])
    _, out = integrate_states(X0, s.matrix, 1.0, 20.0, 1e-2, record_every=20)
    assert all(check_bipolar_balance(Configuration(X, 1.0)) is not None for X in out)
