"""Desk-scale checks of the analytical claims, one suite per claim.

Each suite returns a list of check dicts ``{"check", "passed", ...details}``.
The CLI prints them; the test suite reuses them.
"""
from __future__ import annotations

import math

import numpy as np

from .dynamics import Configuration, _energy, integrate, integrate_states
from .experiments import sample_initial, trial_rng
from .reduced import (
    bipolar_limit,
    check_bipolar_balance,
    consensus_closed_form,
    consensus_limit,
    integrate_bipolar,
)
from .selection import cone_series, rho_derivative_explicit
from .spectral import from_diagonal
from .stability import SignPattern, equilibrium_spectrum, jacobian_oracle, match_multisets

ENERGY_TOL = 1e-9


def _check(name, passed, **detail):
    return {"check": name, "passed": bool(passed), **detail}


def energy_ascent_violation(energies):
    """Largest drop between consecutive recorded energies (<= 0 means ascent held)."""
    e = np.asarray(energies)
    if e.shape[0] < 2:
        return -math.inf
    return float(np.max(e[:-1] - e[1:]))


def random_distinct(rng, d, lo, hi, gap):
    """d values in [lo, hi], sorted descending, pairwise separated by at least ``gap``."""
    while True:
        lam = np.sort(rng.uniform(lo, hi, d))[::-1]
        if d < 2 or np.min(-np.diff(lam)) >= gap:
            return lam


def consensus_closed_form_suite(trials=20, seed=0, t_end=10.0, dt=1e-2, d_max=8, record_every=10):
    """Full flow from consensus data against the explicit replicator solution."""
    worst_rel, worst_energy, worst_sign = 0.0, -math.inf, 0
    for k in range(trials):
        rng = trial_rng(seed, k)
        d = int(rng.integers(2, d_max + 1))
        n = int(rng.integers(1, 6))
        lam = rng.uniform(-2.0, 2.0, d)
        beta = float(rng.uniform(0.5, 2.0))
        s = from_diagonal(lam)
        X0 = sample_initial("consensus", n, d, seed + 1000, spectrum=s, trial=k)
        rec = integrate(Configuration(X0, beta), s, t_end, dt, record_every)
        c0 = X0[0]
        p0 = c0 * c0
        for t, X in zip(rec.times, rec.states):
            p = np.mean(X * X, axis=0)
            ref = consensus_closed_form(p0, lam, t)
            on = p0 > 0
            worst_rel = max(worst_rel, float(np.max(np.abs(p[on] - ref[on]) / ref[on])))
            worst_sign += int(np.sum(np.sign(X[0]) != np.sign(c0)))
        worst_energy = max(worst_energy, energy_ascent_violation(rec.energies))
    return [
        _check("consensus masses match closed form (rel 1e-6)", worst_rel <= 1e-6, worst=worst_rel),
        _check("consensus coefficient signs preserved", worst_sign == 0, sign_flips=worst_sign),
        _check("energy nondecreasing (1e-9)", worst_energy <= ENERGY_TOL, worst_drop=worst_energy),
    ]


def consensus_selection_suite(trials=20, seed=0, t_end=50.0, dt=1e-2, gap=0.5):
    worst_cf, worst_full = 0.0, 0.0
    for k in range(trials):
        rng = trial_rng(seed, k)
        d = int(rng.integers(2, 6))
        lam = random_distinct(rng, d, -2.0, 2.0, gap)
        s = from_diagonal(lam)
        X0 = sample_initial("consensus", 2, d, seed + 2000, spectrum=s, trial=k)
        p0 = X0[0] ** 2
        lim = consensus_limit(p0, lam)
        worst_cf = max(worst_cf, float(np.max(np.abs(consensus_closed_form(p0, lam, t_end) - lim))))
        _, out = integrate_states(X0, s.matrix, 1.0, t_end, dt, record_every=10**9)
        worst_full = max(worst_full, float(np.max(np.abs(np.mean(out[-1] ** 2, axis=0) - lim))))
    return [
        _check("closed form at T matches selection limit (1e-4)", worst_cf <= 1e-4, worst=worst_cf),
        _check("full flow at T matches selection limit (1e-4)", worst_full <= 1e-4, worst=worst_full),
    ]


def bipolar_suite(trials=10, seed=0, t_end=20.0, dt=1e-2, limit_time=200.0, record_every=10):
    """Balanced bipolar data: full flow vs reduced ODE, M monotonicity, predicted limits."""
    worst_p, m_viol, sign_viol, lost, worst_lim, worst_energy = 0.0, 0, 0, 0, 0.0, -math.inf
    for k in range(trials):
        rng = trial_rng(seed, k)
        n = 2 if k % 2 == 0 else 4
        d = int(rng.integers(2, 6))
        lam = random_distinct(rng, d, -2.0, 2.0, 0.3)
        beta = float(rng.uniform(0.5, 2.0))
        s = from_diagonal(lam)
        while True:
            X0 = sample_initial("bipolar", n, d, seed + 3000 + 97 * k, spectrum=s, trial=int(rng.integers(1 << 30)))
            p0 = X0[0] ** 2
            if abs(np.dot(lam, p0)) >= 0.2:
                break
        rec = integrate(Configuration(X0, beta), s, t_end, dt, record_every)
        times_r, P = integrate_bipolar(p0, lam, beta, t_end, dt, record_every)
        for X, p_red in zip(rec.states, P):
            found = check_bipolar_balance(Configuration(X, beta))
            if found is None:
                lost += 1
                continue
            worst_p = max(worst_p, float(np.max(np.abs(found[0] ** 2 - p_red))))
        M = P @ lam
        if M[0] > 0:
            m_viol += int(np.sum(np.diff(M) < -1e-10))
        else:
            m_viol += int(np.sum(np.diff(M) > 1e-10))
        sign_viol += int(np.sum(np.sign(M) != np.sign(M[0])))
        _, P_long = integrate_bipolar(p0, lam, beta, limit_time, 2e-2, record_every=10**9)
        lim, _ = bipolar_limit(p0, lam, beta)
        worst_lim = max(worst_lim, float(np.max(np.abs(P_long[-1] - lim))))
        worst_energy = max(worst_energy, energy_ascent_violation(rec.energies))
    return [
        _check("bipolar manifold invariant under full flow", lost == 0, snapshots_off_manifold=lost),
        _check("full flow matches reduced bipolar ODE (1e-6)", worst_p <= 1e-6, worst=worst_p),
        _check("M monotone (1e-10)", m_viol == 0, violations=m_viol),
        _check("sign of M preserved", sign_viol == 0, violations=sign_viol),
        _check("reduced limit matches predicted limit (1e-4)", worst_lim <= 1e-4, worst=worst_lim),
        _check("energy nondecreasing (1e-9)", worst_energy <= ENERGY_TOL, worst_drop=worst_energy),
    ]


def cone_suite(n=80, beta=1.0, delta=0.1, trials=100, seed=0, lambdas=(3.0, 0.5, -0.5), t_end=4.0, dt=1e-2):
    """Cone invariance, ratio bound and alignment for one-sided initial data (batched)."""
    s = from_diagonal(lambdas)
    X0 = np.stack([sample_initial("one-sided-cone", n, s.dim, seed, delta, s, trial=k) for k in range(trials)])
    keep = []

    def cb(t, X):
        keep.append((X @ s.basis, _energy(X, s.matrix, beta)))
        return None

    times, _ = integrate_states(X0, s.matrix, beta, t_end, dt, callback=cb)
    coeffs = np.stack([c for c, _ in keep], axis=1)  # (trials, T, n, d)
    energies = np.stack([e for _, e in keep], axis=1)
    mono_viol, worst_excess, worst_dist, worst_energy = 0, -math.inf, 0.0, -math.inf
    for tr in range(trials):
        top, _, min_c1, ratios, bounds = cone_series(times, coeffs[tr], s, delta)
        mono_viol += int(np.sum(np.diff(min_c1) < -1e-9))
        worst_excess = max(worst_excess, float(np.max(ratios - bounds)))
        C_end = coeffs[tr, -1]
        e = np.zeros(s.dim)
        e[top] = 1.0
        worst_dist = max(worst_dist, float(np.max(np.linalg.norm(C_end - e, axis=1))))
        worst_energy = max(worst_energy, energy_ascent_violation(energies[tr]))
    return [
        _check("min c_1 nondecreasing (1e-9)", mono_viol == 0, violations=mono_viol),
        _check("R_k within exponential bound (1e-9)", worst_excess <= 1e-9, worst_excess=worst_excess),
        _check("terminal max |x_i - e_1| < 1e-2", worst_dist < 1e-2, worst=worst_dist, t_end=t_end),
        _check("energy nondecreasing (1e-9)", worst_energy <= ENERGY_TOL, worst_drop=worst_energy),
    ]


def random_negative_definite(rng, d, lo=0.1, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V = (Q * -rng.uniform(lo, hi, d)) @ Q.T
    return 0.5 * (V + V.T)


def rho_monotone_suite(trials=500, seed=0):
    worst, nonneg = 0.0, 0
    for k in range(trials):
        rng = trial_rng(seed, k)
        d = int(rng.integers(2, 7))
        V = random_negative_definite(rng, d)
        x1, x2 = sample_initial("uniform-sphere", 2, d, seed + 4000, trial=k)
        res = rho_derivative_explicit(x1, x2, V, float(rng.uniform(0.1, 5.0)))
        worst = max(worst, abs(res.rho_dot - res.rho_dot_dynamics))
        nonneg += int(not res.rho_dot < 0)
    return [
        _check("explicit rho derivative matches dynamics (1e-10)", worst <= 1e-10, worst=worst),
        _check("rho derivative strictly negative", nonneg == 0, nonnegative=nonneg),
    ]


def two_particle_suite(trials=50, seed=0, beta=1.0, lambdas=(-0.5, -1.0, -2.0), t_end=50.0, dt=1e-2):
    """Negative-definite pairs: anti-alignment and selection of the most negative mode."""
    s = from_diagonal(lambdas)
    X0 = np.stack([sample_initial("uniform-sphere", 2, s.dim, seed, trial=k) for k in range(trials)])
    keep = []

    def cb(t, X):
        keep.append((np.einsum("...d,...d->...", X[:, 0], X[:, 1]), (X @ s.basis)[..., s.bottom], _energy(X, s.matrix, beta)))

    integrate_states(X0, s.matrix, beta, t_end, dt, callback=cb)
    rho = np.stack([r for r, _, _ in keep], axis=1)  # (trials, T)
    m_d = np.stack([np.mean(c * c, axis=-1) for _, c, _ in keep], axis=1)
    energies = np.stack([e for _, _, e in keep], axis=1)
    rho_viol = int(np.sum(np.diff(rho, axis=1) > 1e-10))
    worst_energy = max(energy_ascent_violation(e) for e in energies)
    worst_rho = float(np.max(rho[:, -1]))
    worst_md = float(np.min(m_d[:, -1]))
    return [
        _check("rho nonincreasing along trajectories (1e-10)", rho_viol == 0, violations=rho_viol),
        _check("rho(T) < -1 + 1e-3", worst_rho < -1 + 1e-3, worst=worst_rho, t_end=t_end),
        _check("m_d(T) > 1 - 1e-3", worst_md > 1 - 1e-3, worst=worst_md, t_end=t_end),
        _check("energy nondecreasing (1e-9)", worst_energy <= ENERGY_TOL, worst_drop=worst_energy),
    ]


def random_equilibrium(rng, d_max=5, n_max=8):
    d = int(rng.integers(2, d_max + 1))
    n = int(rng.integers(2, n_max + 1))
    lam = random_distinct(rng, d, -2.0, 2.0, 0.05)
    p = int(rng.integers(d))
    beta = float(rng.uniform(0.2, 3.0))
    signs = rng.choice([1, -1], size=n)
    return lam, p, beta, SignPattern(tuple(int(x) for x in signs))


def spectrum_oracle_suite(trials=50, seed=0, h=1e-5):
    worst = 0.0
    for k in range(trials):
        rng = trial_rng(seed, k)
        lam, p, beta, pattern = random_equilibrium(rng)
        s = from_diagonal(lam)
        X = np.outer(pattern.signs, s.basis[:, p])
        analytic = equilibrium_spectrum(p, lam, beta, pattern)
        oracle = jacobian_oracle(Configuration(X, beta), s, h)
        worst = max(worst, match_multisets(analytic, oracle))
    return [_check("analytic spectra match finite-difference oracle (1e-5)", worst <= max(1e-5, 10 * h * h), worst=worst)]


SUITES = {
    "consensus-closed-form": consensus_closed_form_suite,
    "consensus-selection": consensus_selection_suite,
    "bipolar-M": bipolar_suite,
    "cone": cone_suite,
    "rho-monotone": rho_monotone_suite,
    "two-particle": two_particle_suite,
    "spectrum-oracle": spectrum_oracle_suite,
}
