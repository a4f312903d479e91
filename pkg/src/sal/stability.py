"""Linear stability of pure-mode equilibria x_i = s_i e_p.

Analytic spectra come from the block structure of the equilibrium attention
matrix. ``jacobian_oracle`` recomputes them independently by central
differences of the full vector field in the tangent space.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import Configuration, vector_field
from .errors import ValidationError
from .spectral import Spectrum

MARGINAL_TOL = 1e-12
SPECTRAL_TOL = 1e-10


@dataclass(frozen=True)
class SignPattern:
    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if not signs or any(s not in (1, -1) for s in signs):
            raise ValidationError(f"sign pattern must be a nonempty sequence of +1/-1, got {self.signs}")
        object.__setattr__(self, "signs", signs)

    @classmethod
    def from_counts(cls, n_plus, n_minus):
        return cls((1,) * n_plus + (-1,) * n_minus)

    @classmethod
    def parse(cls, text):
        """Accept '+-+', '++--' or '1,-1,1'."""
        text = text.strip()
        if set(text) <= {"+", "-"}:
            return cls(tuple(1 if ch == "+" else -1 for ch in text))
        return cls(tuple(int(tok) for tok in text.split(",")))

    @property
    def n(self):
        return len(self.signs)

    @property
    def n_plus(self):
        return sum(1 for s in self.signs if s == 1)

    @property
    def n_minus(self):
        return self.n - self.n_plus

    @property
    def constant(self):
        return self.n_plus == 0 or self.n_minus == 0

    @property
    def ratio(self):
        if self.n_minus < 1:
            raise ValidationError("ratio n+/n- needs at least one minus sign")
        return self.n_plus / self.n_minus


@dataclass
class HomogeneousVerdict:
    verdict: str  # "stable" | "unstable" | "marginal"
    rates: list  # (k, mean rate lambda_k - lambda_p, fluctuation rate -lambda_p)


@dataclass
class BlockInfo:
    k: int
    matrix: np.ndarray
    trace: float
    det: float
    eigenvalues: tuple


@dataclass
class StabilityReport:
    mode: int
    a_plus: float
    b_plus: float
    a_minus: float
    b_minus: float
    gamma_plus: float
    gamma_minus: float
    blocks: list = field(default_factory=list)
    stable: bool = False
    threshold_sigma: float = float("nan")
    c_beta: float = float("nan")
    # every linearization eigenvalue has real part < -SPECTRAL_TOL; differs from
    # ``stable`` only when a sign group has a single token (its gamma then has
    # multiplicity zero in the spectrum)
    spectral_stable: bool = False


def _verdict(rates):
    if any(r > MARGINAL_TOL for r in rates):
        return "unstable"
    if any(abs(r) <= MARGINAL_TOL for r in rates):
        return "marginal"
    return "stable"


def _check_mode(p, lambdas):
    lam = np.asarray(lambdas, dtype=float)
    if not 0 <= p < lam.size:
        raise ValidationError(f"mode index {p} out of range for d={lam.size}")
    return lam


def homogeneous_stability(p, lambdas) -> HomogeneousVerdict:
    lam = _check_mode(p, lambdas)
    lp = lam[p]
    rates = [(k, lam[k] - lp, -lp) for k in range(lam.size) if k != p]
    flat = [r for _, m, f in rates for r in (m, f)]
    if lam.size == 1:
        flat = [-lp]
    return HomogeneousVerdict(verdict=_verdict(flat), rates=rates)


def sigma(c, r):
    """Threshold sigma(c, r) = (c - r)(c r - 1) / (r (c^2 - 1))."""
    return (c - r) * (c * r - 1.0) / (r * (c * c - 1.0))


def _quadratic_eigs(tr, det):
    disc = tr * tr - 4.0 * det
    if disc >= 0:
        root = math.sqrt(disc)
        # avoid cancellation in the smaller-magnitude root
        big = 0.5 * (tr + math.copysign(root, tr)) if tr != 0 else 0.5 * root
        small = det / big if big != 0 else -big
        return tuple(sorted((big, small)))
    root = cmath.sqrt(disc)
    return (0.5 * (tr - root), 0.5 * (tr + root))


def sign_split_report(p, lambdas, beta, pattern: SignPattern) -> StabilityReport:
    lam = _check_mode(p, lambdas)
    if pattern.constant:
        raise ValidationError("sign pattern is constant; use homogeneous_stability for homogeneous states")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    lp = lam[p]
    npl, nmi = pattern.n_plus, pattern.n_minus
    e_pos, e_neg = math.exp(beta * lp), math.exp(-beta * lp)
    zp = npl * e_pos + nmi * e_neg
    zm = nmi * e_pos + npl * e_neg
    a_p, b_p = e_pos / zp, e_neg / zp
    a_m, b_m = e_pos / zm, e_neg / zm
    g_p = lp * (npl * a_p - nmi * b_p)
    g_m = lp * (nmi * a_m - npl * b_m)
    blocks = []
    for k in range(lam.size):
        if k == p:
            continue
        lk = lam[k]
        B = np.array([[lk * npl * a_p - g_p, lk * nmi * b_p], [lk * npl * b_m, lk * nmi * a_m - g_m]])
        tr = float(B[0, 0] + B[1, 1])
        det = float(B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])
        blocks.append(BlockInfo(k=k, matrix=B, trace=tr, det=det, eigenvalues=_quadratic_eigs(tr, det)))
    stable = g_p > 0 and g_m > 0 and all(b.trace < 0 and b.det > 0 for b in blocks)
    rates = [complex(e).real for b in blocks for e in b.eigenvalues]
    if blocks and npl > 1:
        rates.append(-g_p)
    if blocks and nmi > 1:
        rates.append(-g_m)
    spectral_stable = all(x < -SPECTRAL_TOL for x in rates)
    c_beta = math.exp(2.0 * beta * lp)
    r = npl / nmi
    return StabilityReport(
        mode=p, a_plus=a_p, b_plus=b_p, a_minus=a_m, b_minus=b_m,
        gamma_plus=g_p, gamma_minus=g_m, blocks=blocks, stable=stable,
        threshold_sigma=sigma(c_beta, r) if c_beta != 1.0 else _sigma_at_pole(r), c_beta=c_beta,
        spectral_stable=spectral_stable,
    )


def _sigma_at_pole(r):
    # c -> 1: removable (limit 0) for r = 1, otherwise the formula diverges
    return 0.0 if r == 1.0 else -math.inf


def remark_predicate(p, lambdas, beta, pattern: SignPattern) -> bool:
    """Explicit case split on the sign of lambda_p, claimed equivalent to the block predicate."""
    lam = _check_mode(p, lambdas)
    lp = lam[p]
    r = pattern.ratio
    c = math.exp(2.0 * beta * lp)
    others = np.delete(lam, p)
    if lp > 0:
        return lp > abs(math.log(r)) / (2 * beta) and bool(np.all(others < lp * sigma(c, r)))
    if lp < 0:
        return lp < -abs(math.log(r)) / (2 * beta) and bool(np.all((lp < others) & (others < lp * sigma(c, r))))
    return False


def equilibrium_spectrum(p, lambdas, beta, pattern: SignPattern) -> np.ndarray:
    """Linearization eigenvalues (with multiplicity) on the tangent space, n (d-1) values."""
    lam = _check_mode(p, lambdas)
    out = []
    if pattern.constant:
        lp = lam[p]
        for k in range(lam.size):
            if k != p:
                out.append(lam[k] - lp)
                out.extend([-lp] * (pattern.n - 1))
        return np.array(out, dtype=complex)
    rep = sign_split_report(p, lam, beta, pattern)
    for b in rep.blocks:
        out.extend([-rep.gamma_plus] * (pattern.n_plus - 1))
        out.extend([-rep.gamma_minus] * (pattern.n_minus - 1))
        out.extend(b.eigenvalues)
    return np.array(out, dtype=complex)


def _tangent_basis(u):
    # orthonormal basis of u^perp from the SVD of the rank-one projector complement
    _, _, vt = np.linalg.svd(u[None, :])
    return vt[1:].T


def pure_mode_direction(cfg: Configuration, s: Spectrum, tol=1e-10):
    """Return ``(u, signs)`` if every token is +-u with V u = lambda u, else None."""
    X = cfg.states
    u = X[0]
    signs = np.where(X @ u >= 0, 1, -1)
    if np.max(np.abs(X - signs[:, None] * u)) > tol:
        return None
    Vu = s.matrix @ u
    if np.linalg.norm(Vu - np.dot(u, Vu) * u) > tol:
        return None
    return u, signs


def jacobian_oracle(cfg: Configuration, s: Spectrum, h: float = 1e-5) -> np.ndarray:
    """Eigenvalues of the central-difference Jacobian of the flow at a pure-mode equilibrium.

    Each token is perturbed along an orthonormal basis of u^perp (u the common
    eigendirection) and renormalized; responses are read off in the same basis,
    which drops the e_p components.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValidationError(f"finite-difference step must lie in [1e-7, 1e-4], got {h}")
    found = pure_mode_direction(cfg, s)
    if found is None:
        raise ValidationError("configuration is not a pure-mode equilibrium")
    u, _ = found
    Q = _tangent_basis(u)
    n, m = cfg.n, Q.shape[1]
    J = np.zeros((n * m, n * m))
    X = cfg.states
    for j in range(n):
        for b in range(m):
            cols = []
            for sgn in (1.0, -1.0):
                Y = X.copy()
                Y[j] = Y[j] + sgn * h * Q[:, b]
                Y[j] /= np.linalg.norm(Y[j])
                cols.append(vector_field(Configuration(Y, cfg.beta), s))
            dF = (cols[0] - cols[1]) / (2.0 * h)
            J[:, j * m + b] = (dF @ Q).ravel()
    return np.linalg.eigvals(J)


def match_multisets(a, b):
    """Largest pairwise distance under the optimal one-to-one matching."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.size != b.size:
        raise ValidationError(f"multisets differ in size: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


@dataclass
class ThresholdCurve:
    betas: np.ndarray
    sigma_bound: np.ndarray  # lambda_p * sigma(c_beta, r)
    is_endpoint: np.ndarray
    beta_star: float | None
    notes: list


def threshold_curve(lambda_p, r, beta_grid) -> ThresholdCurve:
    """Upper bound lambda_p sigma(e^{2 beta lambda_p}, r) on transverse eigenvalues.

    For lambda_p > 0 the endpoint beta* = |ln r| / (2 lambda_p), where the bound
    vanishes, is inserted into the grid when it falls inside it. beta = 0 is a
    pole of the formula: r = 1 uses the continuous limit 0, otherwise the
    one-sided limit -inf is reported with a note.
    """
    if lambda_p == 0 or not math.isfinite(lambda_p):
        raise ValidationError(f"lambda_p must be a nonzero real, got {lambda_p}")
    if not r > 0:
        raise ValidationError(f"population ratio r must be positive, got {r}")
    betas = np.asarray(sorted(set(float(b) for b in beta_grid)), dtype=float)
    if betas.size and betas[0] < 0:
        raise ValidationError("beta grid must be nonnegative")
    beta_star = abs(math.log(r)) / (2.0 * lambda_p) if lambda_p > 0 else None
    if beta_star is not None and betas.size and betas[0] <= beta_star <= betas[-1] and not np.any(np.abs(betas - beta_star) <= 1e-12):
        betas = np.sort(np.append(betas, beta_star))
    notes = []
    vals = np.empty_like(betas)
    for i, b in enumerate(betas):
        c = math.exp(2.0 * b * lambda_p)
        if c == 1.0:
            if r == 1.0:
                vals[i] = 0.0
                notes.append(f"beta={b}: removable pole, continuous limit 0 used")
            else:
                vals[i] = -math.inf
                notes.append(f"beta={b}: pole of the threshold formula, one-sided limit reported")
        else:
            vals[i] = lambda_p * sigma(c, r)
    is_end = np.zeros(betas.shape, dtype=bool)
    if beta_star is not None:
        is_end = np.abs(betas - beta_star) <= 1e-12
    return ThresholdCurve(betas=betas, sigma_bound=vals, is_endpoint=is_end, beta_star=beta_star, notes=notes)
