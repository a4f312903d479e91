"""Symmetric interaction matrices, their eigendecomposition and basis changes.

The eigensolver is a cyclic Jacobi iteration so results do not depend on the
LAPACK build; it is intended for the small dimensions used here (d <= 64).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SYMMETRY_TOL = 1e-12
UNIT_TOL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    basis: np.ndarray  # columns are eigenvectors e_k

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.dim))))

    def reconstruction_error(self, V) -> float:
        return float(np.max(np.abs(self.matrix - np.asarray(V, dtype=float))))

    @property
    def top(self) -> int:
        """Index of the largest eigenvalue."""
        return int(np.argmax(self.eigenvalues))

    @property
    def bottom(self) -> int:
        """Index of the smallest eigenvalue."""
        return int(np.argmin(self.eigenvalues))


def check_symmetric(V, tol=SYMMETRY_TOL) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValidationError(f"interaction matrix must be square, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        i, j = np.argwhere(~np.isfinite(V))[0]
        raise ValidationError(f"interaction matrix has non-finite entry at ({i},{j})")
    asym = np.abs(V - V.T)
    if asym.size and asym.max() > tol:
        i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
        raise ValidationError(
            "interaction matrix must be symmetric (Q^T K = V = V^T): "
            f"V[{i},{j}]={float(V[i, j])!r} but V[{j},{i}]={float(V[j, i])!r}"
        )
    return V


def jacobi_eigh(A, tol=1e-13, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||A||_F)``. Returns ``(w, Q)`` with ``A = Q diag(w) Q^T``.
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    q = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                diff = a[r, r] - a[p, p]
                if abs(apr) < 1e-18 * abs(diff):
                    # rotation angle below rounding; the eigenvalue shift is O(apr^2 / diff)
                    a[p, r] = a[r, p] = 0.0
                    continue
                theta = diff / (2.0 * apr)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, r) plane rotation
                ap = a[:, p].copy()
                ar = a[:, r].copy()
                a[:, p] = c * ap - s * ar
                a[:, r] = s * ap + c * ar
                ap = a[p, :].copy()
                ar = a[r, :].copy()
                a[p, :] = c * ap - s * ar
                a[r, :] = s * ap + c * ar
                a[p, r] = a[r, p] = 0.0
                qp = q[:, p].copy()
                qr = q[:, r].copy()
                q[:, p] = c * qp - s * qr
                q[:, r] = s * qp + c * qr
    return np.diag(a).copy(), q


def _fix_signs(Q):
    # largest-magnitude component of each column made positive (first one on ties)
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def decompose_symmetric(V) -> Spectrum:
    V = check_symmetric(V)
    w, Q = jacobi_eigh(V)
    order = np.argsort(-w, kind="stable")
    return Spectrum(eigenvalues=w[order], basis=_fix_signs(Q[:, order]))


def from_diagonal(lambdas) -> Spectrum:
    """Spectrum of diag(lambdas); eigenvalues keep the given order, basis is the identity."""
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size == 0 or not np.all(np.isfinite(lam)):
        raise ValidationError("diagonal shorthand needs at least one finite eigenvalue")
    return Spectrum(eigenvalues=lam.copy(), basis=np.eye(lam.size))


def spectrum_from_config(obj) -> Spectrum:
    """Parse ``{"V": [[...], ...]}`` (dense, row-major) or ``{"diag": [...]}``."""
    if "diag" in obj and "V" in obj:
        raise ValidationError("give either 'V' or 'diag', not both")
    if "diag" in obj:
        return from_diagonal(obj["diag"])
    if "V" in obj:
        return decompose_symmetric(obj["V"])
    raise ValidationError("interaction matrix missing: expected 'V' or 'diag'")


def to_modal(x, s: Spectrum) -> np.ndarray:
    """Coefficients of unit vector(s) ``x`` in the eigenbasis (works row-wise on arrays)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != s.dim:
        raise ValidationError(f"dimension mismatch: vector has {x.shape[-1]}, spectrum has {s.dim}")
    norms = np.linalg.norm(x, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValidationError(f"expected unit vectors, got norm deviation {np.max(np.abs(norms - 1.0)):.3e}")
    return x @ s.basis


def to_ambient(c, s: Spectrum) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != s.dim:
        raise ValidationError(f"dimension mismatch: coefficients have {c.shape[-1]}, spectrum has {s.dim}")
    return c @ s.basis.T
