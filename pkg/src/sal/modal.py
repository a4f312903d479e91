"""Eigenbasis form of the flow: coefficient ODE, replicator masses, averaged masses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Configuration, _softmax
from .errors import NumericError, ValidationError
from .spectral import Spectrum, to_modal

ZERO_COEFF = 1e-12


@dataclass
class ModalCoordinates:
    coeffs: np.ndarray  # (n, d), rows c_i
    spectrum: Spectrum

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape[1] != self.spectrum.dim:
            raise ValidationError("coefficient matrix does not match the spectrum dimension")
        dev = np.abs(np.linalg.norm(self.coeffs, axis=1) - 1.0)
        if dev.max() > 1e-9:
            raise ValidationError(f"modal row {int(np.argmax(dev))} is not unit norm")

    @classmethod
    def from_configuration(cls, cfg: Configuration, s: Spectrum):
        return cls(to_modal(cfg.states, s), s)


@dataclass
class ModalMasses:
    masses: np.ndarray  # a_{i,k} = c_{i,k}^2
    fitness: np.ndarray  # NaN where c_{i,k} is off-support
    mean_fitness: np.ndarray  # phi_i
    defined: np.ndarray  # bool mask of fitness entries


def modal_weights(C: ModalCoordinates, beta: float) -> np.ndarray:
    lam = C.spectrum.eigenvalues
    S = beta * (C.coeffs * lam) @ C.coeffs.T
    K, _ = _softmax(S)
    if not np.all(np.isfinite(K)):
        i, j = np.argwhere(~np.isfinite(K))[0]
        raise NumericError(f"non-finite modal attention weight at ({i},{j})", location=(int(i), int(j)))
    return K


def modal_field(C: ModalCoordinates, beta: float) -> np.ndarray:
    """KC Lambda - Diag(K C Lambda C^T) C."""
    K = modal_weights(C, beta)
    G = K @ C.coeffs * C.spectrum.eigenvalues
    phi = np.sum(G * C.coeffs, axis=1, keepdims=True)
    return G - phi * C.coeffs


def replicator_view(C: ModalCoordinates, beta: float):
    """Token-wise replicator variables and their time derivatives.

    Returns ``(ModalMasses, adot)``. The fitness of mode k for token i divides by
    c_{i,k}; below ``ZERO_COEFF`` the entry is left undefined (NaN) and its mass
    derivative is exactly zero.
    """
    c = C.coeffs
    K = modal_weights(C, beta)
    G = K @ c * C.spectrum.eigenvalues  # lambda_k sum_j K_ij c_jk
    phi = np.sum(G * c, axis=1)
    a = c * c
    defined = np.abs(c) > ZERO_COEFF
    f = np.full_like(c, np.nan)
    f[defined] = G[defined] / c[defined]
    adot = np.where(defined, 2.0 * a * (np.where(defined, f, 0.0) - phi[:, None]), 0.0)
    return ModalMasses(masses=a, fitness=f, mean_fitness=phi, defined=defined), adot


def averaged_masses(C) -> np.ndarray:
    """m_k = (1/n) sum_i c_{i,k}^2; accepts ModalCoordinates or a raw (..., n, d) array."""
    c = C.coeffs if isinstance(C, ModalCoordinates) else np.asarray(C, dtype=float)
    return np.mean(c * c, axis=-2)


def averaged_mass_rate(C: ModalCoordinates, beta: float) -> np.ndarray:
    return 2.0 * np.mean(C.coeffs * modal_field(C, beta), axis=0)


def find_nonclosure_witness(lambdas, beta, n=3, seed=0, min_gap=1e-3, max_tries=1000):
    """Search for two coefficient matrices with equal averaged masses but different rates.

    Flipping the sign of individual coefficients leaves every a_{i,k}, hence every
    m_k, unchanged while altering the attention weights.
    """
    from .spectral import from_diagonal

    s = from_diagonal(lambdas)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        c = rng.standard_normal((n, s.dim))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        flips = rng.choice([-1.0, 1.0], size=c.shape)
        A, B = ModalCoordinates(c, s), ModalCoordinates(c * flips, s)
        gap = np.max(np.abs(averaged_mass_rate(A, beta) - averaged_mass_rate(B, beta)))
        if gap > min_gap:
            return A.coeffs, B.coeffs
    raise NumericError("no witness found; increase max_tries")
