"""Symmetric self-attention flow on the product of unit spheres.

Every token moves along the tangent projection of a softmax-weighted average of
the value-transformed tokens,

    dx_i/dt = P_{x_i}^perp( sum_j K_ij V x_j ),   K_ij = softmax_j(beta <x_i, V x_j>).

The private ``_field``/``_rk4_step`` helpers accept arrays with arbitrary leading
batch axes ``(..., n, d)`` so ensembles can be integrated in one pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .spectral import Spectrum

NORM_TOL = 1e-9


@dataclass
class Configuration:
    states: np.ndarray
    beta: float

    def __post_init__(self):
        self.states = np.array(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[None, :]
        if self.states.ndim != 2:
            raise ValidationError(f"states must be an n x d matrix, got shape {self.states.shape}")
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValidationError(f"beta must be a finite nonnegative real, got {self.beta}")
        dev = np.abs(np.linalg.norm(self.states, axis=1) - 1.0)
        if dev.size and dev.max() > NORM_TOL:
            i = int(np.argmax(dev))
            raise ValidationError(f"token {i} is off the unit sphere (|norm - 1| = {dev[i]:.3e})")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @classmethod
    def normalized(cls, states, beta):
        X = np.asarray(states, dtype=float)
        return cls(X / np.linalg.norm(X, axis=-1, keepdims=True), beta)


@dataclass
class AttentionWeights:
    weights: np.ndarray
    row_log_norms: np.ndarray


@dataclass
class TrajectoryRecord:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, n, d)
    energies: np.ndarray  # (T,)
    beta: float

    @property
    def configurations(self):
        return [Configuration(X, self.beta) for X in self.states]

    @property
    def final(self) -> Configuration:
        return Configuration(self.states[-1], self.beta)


def _check_dims(X, s: Spectrum):
    if X.shape[-1] != s.dim:
        raise ValidationError(f"dimension mismatch: states have d={X.shape[-1]}, spectrum has d={s.dim}")


def _scores(X, V, beta):
    return beta * (X @ V @ np.swapaxes(X, -1, -2))


def _softmax(scores):
    m = scores.max(axis=-1, keepdims=True)
    w = np.exp(scores - m)
    z = w.sum(axis=-1, keepdims=True)
    return w / z, (m + np.log(z))[..., 0]


def _field(X, V, beta):
    # same as vector_field, arranged to touch each n x n array as few times as possible
    XV = X @ V
    S = (beta * XV) @ np.swapaxes(X, -1, -2)
    S -= S.max(axis=-1, keepdims=True)
    np.exp(S, out=S)
    W = (S @ XV) / S.sum(axis=-1, keepdims=True)
    phi = np.sum(W * X, axis=-1, keepdims=True)
    return W - phi * X


def attention_weights(cfg: Configuration, s: Spectrum) -> AttentionWeights:
    _check_dims(cfg.states, s)
    S = _scores(cfg.states, s.matrix, cfg.beta)
    if not np.all(np.isfinite(S)):
        i, j = np.argwhere(~np.isfinite(S))[0]
        raise NumericError(f"non-finite attention score at ({i},{j})", location=(int(i), int(j)))
    K, logz = _softmax(S)
    if not np.all(np.isfinite(K)):
        i, j = np.argwhere(~np.isfinite(K))[0]
        raise NumericError(f"non-finite attention weight at ({i},{j})", location=(int(i), int(j)))
    return AttentionWeights(weights=K, row_log_norms=logz)


def vector_field(cfg: Configuration, s: Spectrum) -> np.ndarray:
    """Tangent velocities, one row per token."""
    K = attention_weights(cfg, s).weights
    X = cfg.states
    W = K @ (X @ s.matrix)
    phi = np.sum(W * X, axis=1, keepdims=True)
    return W - phi * X


def _energy(X, V, beta):
    S = _scores(X, V, beta)
    m = S.max(axis=(-1, -2))
    total = np.exp(S - m[..., None, None]).sum(axis=(-1, -2))
    return np.exp(m) * total / (2.0 * beta)


def energy(cfg: Configuration, s: Spectrum) -> float:
    """Interaction energy (1/2beta) sum_ij exp(beta <x_i, V x_j>)."""
    if not cfg.beta > 0:
        raise ValidationError(f"energy needs beta > 0, got {cfg.beta}")
    _check_dims(cfg.states, s)
    return float(_energy(cfg.states, s.matrix, cfg.beta))


def _rk4_step(X, V, beta, h):
    k1 = _field(X, V, beta)
    k2 = _field(X + 0.5 * h * k1, V, beta)
    k3 = _field(X + 0.5 * h * k2, V, beta)
    k4 = _field(X + h * k3, V, beta)
    Y = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y / np.linalg.norm(Y, axis=-1, keepdims=True)


def step_grid(t_end, dt):
    """Number of steps and the uniform step that lands exactly on ``t_end``."""
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if not t_end >= 0:
        raise ValidationError(f"t_end must be nonnegative, got {t_end}")
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    return nsteps, (t_end / nsteps if nsteps else dt)


def integrate_states(X0, V, beta, t_end, dt=1e-2, record_every=1, callback=None):
    """RK4 + renormalization on raw arrays of shape ``(..., n, d)``.

    ``callback(t, X)`` is called at every recorded time (including t=0 and t_end)
    and its return values are collected. With no callback the states are kept.
    Raises NumericError carrying ``last_time`` if the state stops being finite.
    """
    if record_every < 1:
        raise ValidationError(f"record_every must be >= 1, got {record_every}")
    nsteps, h = step_grid(t_end, dt)
    keep = callback if callback is not None else (lambda t, X: X.copy())
    X = np.array(X0, dtype=float)
    times, out = [0.0], [keep(0.0, X)]
    for k in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Y = _rk4_step(X, V, beta, h)
        if not np.all(np.isfinite(Y)):
            raise NumericError(f"non-finite state after step {k}", last_time=(k - 1) * h)
        X = Y
        if k % record_every == 0 or k == nsteps:
            t = t_end if k == nsteps else k * h
            times.append(t)
            out.append(keep(t, X))
    return np.array(times), out


def integrate(cfg0: Configuration, s: Spectrum, t_end: float, dt: float = 1e-2, record_every: int = 1) -> TrajectoryRecord:
    _check_dims(cfg0.states, s)
    V = s.matrix
    times, states = integrate_states(cfg0.states, V, cfg0.beta, t_end, dt, record_every)
    states = np.array(states)
    if cfg0.beta > 0:
        energies = np.array([_energy(X, V, cfg0.beta) for X in states])
    else:
        energies = np.full(len(times), np.nan)
    return TrajectoryRecord(times=times, states=states, energies=energies, beta=cfg0.beta)
