"""Dynamics restricted to the consensus and balanced bipolar invariant manifolds.

On both manifolds the modal masses p_k = u_k^2 of the common profile u obey a
replicator equation:

    consensus:  dp_k/dt = 2 p_k (lambda_k - M)
    bipolar:    dp_k/dt = 2 p_k tanh(beta M) (lambda_k - M),     M = sum_l lambda_l p_l
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Configuration, step_grid
from .errors import NumericError, ValidationError

SUPPORT_TOL = 1e-12
TIE_RTOL = 1e-10
SIMPLEX_TOL = 1e-10


def _check_simplex(p, tol=SIMPLEX_TOL):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"expected a point of the probability simplex, got {p}")
    return p


@dataclass
class ReducedState:
    p: np.ndarray
    M: float
    alpha: float
    signs: np.ndarray | None = None

    @classmethod
    def from_masses(cls, p, lambdas, beta, signs=None):
        p = _check_simplex(p)
        M = float(np.dot(lambdas, p))
        return cls(p=p, M=M, alpha=math.tanh(beta * M), signs=None if signs is None else np.asarray(signs))


def consensus_closed_form(p0, lambdas, t):
    """p_k(t) = p_k(0) e^{2 lambda_k t} / sum_l p_l(0) e^{2 lambda_l t}."""
    p0 = _check_simplex(p0)
    lam = np.asarray(lambdas, dtype=float)
    if t < 0:
        raise ValidationError(f"t must be nonnegative, got {t}")
    support = p0 > 0
    expo = np.full(lam.shape, -np.inf)
    expo[support] = 2.0 * lam[support] * t + np.log(p0[support])
    w = np.exp(expo - expo[support].max())
    return w / w.sum()


def consensus_coefficients(c0, lambdas, t):
    """Signed coefficients c_k(t) = sgn(c_k(0)) sqrt(p_k(t))."""
    c0 = np.asarray(c0, dtype=float)
    return np.sign(c0) * np.sqrt(consensus_closed_form(c0 * c0 / np.dot(c0, c0), lambdas, t))


def consensus_field(p, lambdas):
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    return 2.0 * p * (lam - np.dot(lam, p))


def consensus_limit(p0, lambdas):
    """Limit of the consensus replicator: mass renormalized on the top eigenvalues of the support."""
    p0 = _check_simplex(p0)
    lam = np.asarray(lambdas, dtype=float)
    return _renormalize_on(p0, _extreme_set(p0, lam, top=True))


def bipolar_field(state: ReducedState, lambdas, beta):
    """Returns ``(pdot, Mdot)``; Mdot comes from 2 alpha sum_k p_k (lambda_k - M)^2."""
    lam = np.asarray(lambdas, dtype=float)
    p, M = state.p, state.M
    alpha = math.tanh(beta * M)
    pdot = 2.0 * p * alpha * (lam - M)
    Mdot = 2.0 * alpha * float(np.sum(p * (lam - M) ** 2))
    direct = float(np.dot(lam, pdot))
    if abs(direct - Mdot) > 1e-12 * max(1.0, abs(Mdot)):
        raise NumericError(f"M derivative mismatch: identity {Mdot!r} vs direct {direct!r}")
    return pdot, Mdot


def _extreme_set(p0, lam, top):
    support = np.flatnonzero(p0 > SUPPORT_TOL)
    ref = lam[support].max() if top else lam[support].min()
    tie = np.abs(lam[support] - ref) <= TIE_RTOL * max(1.0, abs(ref))
    return support[tie]


def _renormalize_on(p0, idx):
    out = np.zeros_like(p0)
    out[idx] = p0[idx] / p0[idx].sum()
    return out


def bipolar_limit(p0, lambdas, beta):
    """Predicted limit ``(p_inf, M_inf)`` of the reduced bipolar dynamics.

    The sign of M(0) picks the largest (M > 0) or smallest (M < 0) eigenvalue on
    the initial support; M(0) = 0 is stationary. beta > 0 does not affect the limit.
    """
    p0 = _check_simplex(p0)
    lam = np.asarray(lambdas, dtype=float)
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    M0 = float(np.dot(lam, p0))
    if M0 == 0.0:
        return p0.copy(), 0.0
    p_inf = _renormalize_on(p0, _extreme_set(p0, lam, top=M0 > 0))
    return p_inf, float(np.dot(lam, p_inf))


def _rk4(f, y0, t_end, dt, record_every=1):
    nsteps, h = step_grid(t_end, dt)
    y = np.array(y0, dtype=float)
    times, out = [0.0], [y.copy()]
    for k in range(1, nsteps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % record_every == 0 or k == nsteps:
            times.append(t_end if k == nsteps else k * h)
            out.append(y.copy())
    return np.array(times), np.array(out)


def integrate_consensus(p0, lambdas, t_end, dt=1e-2, record_every=1):
    return _rk4(lambda p: consensus_field(p, lambdas), _check_simplex(p0), t_end, dt, record_every)


def integrate_bipolar(p0, lambdas, beta, t_end, dt=1e-2, record_every=1):
    lam = np.asarray(lambdas, dtype=float)

    def f(p):
        M = float(np.dot(lam, p))
        return 2.0 * p * math.tanh(beta * M) * (lam - M)

    return _rk4(f, _check_simplex(p0), t_end, dt, record_every)


def check_bipolar_balance(cfg: Configuration, tol=1e-8):
    """Return ``(u, signs)`` if x_i = s_i u with equally many + and - signs, else None.

    ``u`` is fixed up to sign by making its first non-negligible component positive.
    """
    X = cfg.states
    n = X.shape[0]
    if n % 2:
        return None
    u = X[0]
    lead = np.flatnonzero(np.abs(u) > tol)
    if lead.size == 0:
        return None
    if u[lead[0]] < 0:
        u = -u
    dots = X @ u
    signs = np.where(dots >= 0, 1, -1)
    if np.max(np.abs(X - signs[:, None] * u)) > tol:
        return None
    if np.sum(signs == 1) != np.sum(signs == -1):
        return None
    return u.copy(), signs
