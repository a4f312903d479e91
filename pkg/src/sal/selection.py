"""Diagnostics for global mode selection.

Positive-dominant spectra: cone invariance of min_i c_{i,1} and exponential
decay of the transverse ratios R_k. Negative-definite pairs: closed-form
derivative of the correlation rho = <x_1, x_2> and its nonnegativity
certificate Xi_r(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Configuration, TrajectoryRecord, vector_field
from .errors import NumericError, ValidationError
from .modal import averaged_masses
from .spectral import Spectrum, decompose_symmetric

CONE_TOL = 1e-9
RHO_TOL = 1e-10


@dataclass
class ConeDiagnostics:
    delta: float
    times: np.ndarray
    min_c1: np.ndarray
    ratios: np.ndarray  # (T, d-1), R_k(t) for k != dominant
    bounds: np.ndarray  # (T, d-1)
    modes: list  # transverse mode indices matching the ratio columns
    min_c1_monotone: bool
    ratio_bound_holds: bool
    final_distance: float  # max_i |x_i(T) - e_1|
    worst_excess: float  # max over t, k of R_k(t) - bound_k(t)

    @property
    def passed(self):
        return self.min_c1_monotone and self.ratio_bound_holds


def check_dominance(s: Spectrum):
    top = s.top
    lam1 = s.eigenvalues[top]
    others = np.delete(np.arange(s.dim), top)
    for k in others:
        if abs(s.eigenvalues[k]) >= lam1:
            raise ValidationError(
                f"spectrum is not positive-dominant: |lambda_{k}| = {abs(s.eigenvalues[k])} >= lambda_top = {lam1}"
            )
    return top, others


def cone_series(times, coeffs, s: Spectrum, delta):
    """Cone diagnostics from modal coefficient snapshots ``coeffs`` of shape (T, n, d)."""
    top, others = check_dominance(s)
    c1 = coeffs[:, :, top]
    if np.min(c1[0]) < delta - 1e-12:
        raise ValidationError(f"initial data leave the cone: min c_1(0) = {np.min(c1[0])} < delta = {delta}")
    min_c1 = c1.min(axis=1)
    ratios = np.max(np.abs(coeffs[:, :, others] / c1[:, :, None]), axis=1)
    rates = delta * (s.eigenvalues[top] - np.abs(s.eigenvalues[others]))
    bounds = ratios[0][None, :] * np.exp(-np.outer(times, rates))
    return top, others, min_c1, ratios, bounds


def cone_check(trajectory: TrajectoryRecord, s: Spectrum, delta) -> ConeDiagnostics:
    if not delta > 0:
        raise ValidationError(f"cone parameter must be positive, got {delta}")
    coeffs = trajectory.states @ s.basis
    top, others, min_c1, ratios, bounds = cone_series(trajectory.times, coeffs, s, delta)
    excess = float(np.max(ratios - bounds)) if ratios.size else -math.inf
    e1 = s.basis[:, top]
    return ConeDiagnostics(
        delta=delta,
        times=trajectory.times,
        min_c1=min_c1,
        ratios=ratios,
        bounds=bounds,
        modes=list(int(k) for k in others),
        min_c1_monotone=bool(np.all(np.diff(min_c1) >= -CONE_TOL)),
        ratio_bound_holds=excess <= CONE_TOL,
        final_distance=float(np.max(np.linalg.norm(trajectory.states[-1] - e1, axis=1))),
        worst_excess=excess,
    )


@dataclass
class TwoParticleDerivative:
    rho: float
    A: float
    C: float
    D: float
    E: float
    eta_x: float
    eta_y: float
    rho_dot: float
    rho_dot_dynamics: float
    boundary: bool = False

    @property
    def agrees(self):
        return abs(self.rho_dot - self.rho_dot_dynamics) <= 1e-10


def xi_certificate(r, t):
    """Xi_r(t) = t^2 (cosh r + cosh t) - r t sinh t, nonnegative for r > 0."""
    if not np.all(np.asarray(r) > 0):
        raise ValidationError("Xi_r(t) needs r > 0")
    return t * t * (np.cosh(r) + np.cosh(t)) - r * t * np.sinh(t)


def _negative_definite(V):
    spec = decompose_symmetric(V)
    if spec.eigenvalues.max() >= -1e-12:
        raise ValidationError(
            f"interaction matrix must be negative definite; largest eigenvalue is {spec.eigenvalues.max()}"
        )
    return np.asarray(V, dtype=float), spec


def rho_derivative_explicit(x1, x2, V, beta) -> TwoParticleDerivative:
    """Closed-form d/dt <x_1, x_2> for two tokens under negative-definite V.

    With s = x_1 + x_2, d = x_1 - x_2, B = -V, A = <s,Bs>, C = <s,Bd>,
    D = <d,Bd>, E = A - C^2/D, r = beta D / 2 and t = beta C / 2, the derivative is
    -[(1-rho) beta r E + (2(1+rho) r^2 sinh r + 2(1-rho) Xi_r(t)) / (cosh r + cosh t)] / (2 beta r).
    Numerator and denominator are divided by cosh r + cosh t to stay finite for large r.
    """
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    V, spec = _negative_definite(V)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    vel = vector_field(Configuration(np.stack([x1, x2]), beta), spec)
    rho = float(np.dot(x1, x2))
    numeric = float(np.dot(vel[0], x2) + np.dot(x1, vel[1]))

    B = -V
    s, d = x1 + x2, x1 - x2
    A = float(s @ B @ s)
    C = float(s @ B @ d)
    D = float(d @ B @ d)
    # softmax gaps from the raw scores
    a, b, c = float(x1 @ V @ x1), float(x1 @ V @ x2), float(x2 @ V @ x2)
    eta_x = math.tanh(0.5 * beta * (a - b))
    eta_y = math.tanh(0.5 * beta * (b - c))

    if abs(rho) >= 1.0 - 1e-12:
        return TwoParticleDerivative(rho, A, C, D, 0.0, eta_x, eta_y, 0.0, numeric, boundary=True)
    if D < 1e-14:
        raise NumericError(f"degenerate difference form D = {D}")
    E = max(A - C * C / D, 0.0)
    r = 0.5 * beta * D
    t = 0.5 * beta * C
    # hyperbolic ratios scaled by exp(-max(r, |t|))
    mx = max(r, abs(t))
    ch = 0.5 * (math.exp(r - mx) + math.exp(-r - mx)) + 0.5 * (math.exp(t - mx) + math.exp(-t - mx))
    sh_r = 0.5 * (math.exp(r - mx) - math.exp(-r - mx))
    sh_t = 0.5 * (math.exp(t - mx) - math.exp(-t - mx))
    xi_over = t * t - r * t * sh_t / ch
    num = (1 - rho) * beta * r * E + (2 * (1 + rho) * r * r * sh_r) / ch + 2 * (1 - rho) * xi_over
    rho_dot = -num / (2 * beta * r)
    return TwoParticleDerivative(rho, A, C, D, E, eta_x, eta_y, rho_dot, numeric)


@dataclass
class TwoParticleReport:
    status: str  # "ok" | "skipped" | "exceptional"
    reason: str
    times: np.ndarray
    rho: np.ndarray
    m_d: np.ndarray
    sign: int
    rho_monotone: bool

    @property
    def final_rho(self):
        return float(self.rho[-1])

    @property
    def final_m_d(self):
        return float(self.m_d[-1])


def _two_particle_preconditions(s: Spectrum):
    lam = s.eigenvalues
    if lam.max() >= -1e-12:
        raise ValidationError("two-particle selection needs a negative-definite interaction matrix")
    order = np.sort(lam)
    if lam.size > 1 and order[1] - order[0] <= 1e-10:
        raise ValidationError("smallest eigenvalue must be simple (gap > 1e-10)")


def classify_two_particle_start(X0, s: Spectrum, tol=1e-12):
    """Return (status, reason) for the measure-zero starts excluded from the selection claim."""
    x1, x2 = X0
    if np.linalg.norm(x1 - x2) <= tol:
        return "skipped", "initial data on the diagonal x1 = x2"
    c1 = s.basis.T @ x1
    j = int(np.argmax(np.abs(c1)))
    if (
        np.linalg.norm(x1 + x2) <= tol
        and abs(abs(c1[j]) - 1.0) <= tol
        and j != s.bottom
    ):
        return "exceptional", f"stationary sign-split state on mode {j}, not the most negative mode"
    return "ok", ""


def two_particle_limit_check(trajectory: TrajectoryRecord, s: Spectrum) -> TwoParticleReport:
    X = trajectory.states
    if X.shape[1] != 2:
        raise ValidationError(f"two-particle check needs n = 2, got {X.shape[1]}")
    _two_particle_preconditions(s)
    status, reason = classify_two_particle_start(X[0], s)
    rho = np.einsum("td,td->t", X[:, 0], X[:, 1])
    m_d = averaged_masses(X @ s.basis)[:, s.bottom]
    sign = int(np.sign(np.dot(X[-1, 0], s.basis[:, s.bottom])) or 1)
    monotone = bool(np.all(np.diff(rho) <= RHO_TOL))
    return TwoParticleReport(status, reason, trajectory.times, rho, m_d, sign, monotone)


def pairwise_observables(X):
    """(rho_min, rho_max, rho_abs) over pairs i < j; accepts (..., n, d) arrays."""
    X = X.states if isinstance(X, Configuration) else np.asarray(X, dtype=float)
    n = X.shape[-2]
    if n < 2:
        raise ValidationError("pairwise observables need at least two tokens")
    G = X @ np.swapaxes(X, -1, -2)
    iu = np.triu_indices(n, k=1)
    pairs = np.clip(G[..., iu[0], iu[1]], -1.0, 1.0)
    return pairs.min(axis=-1), pairs.max(axis=-1), np.abs(pairs).mean(axis=-1)
