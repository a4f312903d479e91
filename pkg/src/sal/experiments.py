"""Seeded ensemble runs behind the numerical figures.

Random streams: every trial draws from its own ``numpy.random.Generator``
backed by the Philox-4x64-10 counter-based bit generator seeded with
``seed + trial``. Spherical samples are normalized standard normals.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import export
from .dynamics import _energy, integrate_states
from .errors import NumericError, ValidationError
from .spectral import Spectrum, from_diagonal, spectrum_from_config
from .selection import pairwise_observables
from .stability import threshold_curve

SAMPLERS = ("uniform-sphere", "one-sided-cone", "mixed-sign", "consensus", "bipolar")
OBSERVABLES = ("rho_min", "rho_max", "rho_abs", "masses", "dist_top", "energy")


def trial_rng(seed, trial=0):
    return np.random.Generator(np.random.Philox(seed + trial))


def _sphere(rng, shape):
    X = rng.standard_normal(shape)
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


def sample_initial(sampler, n, d, seed, delta=0.1, spectrum: Spectrum | None = None, trial=0):
    """Initial token states (n x d). Mode-1 conditions refer to the top eigenvector."""
    if sampler not in SAMPLERS:
        raise ValidationError(f"unknown sampler {sampler!r}; expected one of {', '.join(SAMPLERS)}")
    if n < 1 or d < 1:
        raise ValidationError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    s = spectrum if spectrum is not None else from_diagonal(np.arange(d, 0, -1.0))
    if s.dim != d:
        raise ValidationError(f"spectrum dimension {s.dim} does not match d={d}")
    top = s.top
    rng = trial_rng(seed, trial)
    if sampler == "uniform-sphere":
        return _sphere(rng, (n, d))
    if sampler == "consensus":
        return np.repeat(_sphere(rng, (1, d)), n, axis=0)
    if sampler == "bipolar":
        if n % 2:
            raise ValidationError(f"bipolar sampler needs even n, got {n}")
        u = _sphere(rng, (d,))
        signs = np.array([1.0] * (n // 2) + [-1.0] * (n // 2))
        return signs[:, None] * u[None, :]
    if sampler == "one-sided-cone":
        if not 0 < delta < 1:
            raise ValidationError(f"cone sampler needs delta in (0, 1), got {delta}")
        C = _sphere(rng, (n, d))
        C[:, top] = np.abs(C[:, top])
        bad = C[:, top] < delta
        while bad.any():
            Y = _sphere(rng, (int(bad.sum()), d))
            Y[:, top] = np.abs(Y[:, top])
            C[bad] = Y
            bad = C[:, top] < delta
        return C @ s.basis.T
    # mixed-sign
    if n < 2:
        raise ValidationError("mixed-sign sampler needs n >= 2")
    while True:
        C = _sphere(rng, (n, d))
        if C[:, top].min() < 0 < C[:, top].max():
            return C @ s.basis.T


@dataclass
class ExperimentSpec:
    name: str
    n: int = 0
    V: dict = field(default_factory=dict)
    betas: list = field(default_factory=list)
    sampler: str = "uniform-sphere"
    delta: float = 0.1
    trials: int = 1
    t_end: float = 10.0
    dt: float = 1e-2
    seed: int = 0
    record_every: int = 10
    observables: list = field(default_factory=lambda: ["rho_min", "rho_max", "rho_abs", "masses"])
    consensus_cutoff: float = 0.99
    polarization_cutoff: float = -0.9
    save_trajectories: bool = False
    kind: str = "ensemble"
    threshold: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        if "beta" in obj:
            b = obj.pop("beta")
            obj.setdefault("betas", b if isinstance(b, list) else [b])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown experiment fields: {sorted(unknown)}")
        spec = cls(**obj)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.kind == "threshold":
            return
        if self.kind != "ensemble":
            raise ValidationError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not self.betas or any(not b > 0 for b in self.betas):
            raise ValidationError(f"betas must be positive, got {self.betas}")
        if self.sampler not in SAMPLERS:
            raise ValidationError(f"unknown sampler {self.sampler!r}")
        bad = set(self.observables) - set(OBSERVABLES)
        if bad:
            raise ValidationError(f"unknown observables {sorted(bad)}")
        if not self.dt > 0 or not self.t_end >= 0 or self.record_every < 1:
            raise ValidationError("need dt > 0, t_end >= 0 and record_every >= 1")
        spectrum_from_config(self.V)


def builtin_spec(name):
    """Load one of the shipped figure specs (fig1 ... fig5)."""
    try:
        text = resources.files("sal").joinpath("configs", f"{name}.json").read_text()
    except FileNotFoundError:
        raise ValidationError(f"no built-in experiment named {name!r}") from None
    return json.loads(text)


@dataclass
class EnsembleSummary:
    beta: float
    times: np.ndarray
    series: dict  # observable name -> (trials, T) or (trials, T, d) array
    mean: dict
    std: dict
    failures: dict  # trial -> message
    initial_hash: str

    def fraction_final(self, name, predicate):
        vals = self.series[name][:, -1]
        ok = ~np.isnan(vals)
        return float(np.mean(predicate(vals[ok]))) if ok.any() else float("nan")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    summaries: list
    files: list
    curves: list = field(default_factory=list)

    def summary(self, beta):
        for s in self.summaries:
            if s.beta == beta:
                return s
        raise KeyError(beta)


def _observer(names, V, beta, basis, top):
    e_top = basis[:, top]

    def observe(t, X):
        out = {}
        if {"rho_min", "rho_max", "rho_abs"} & set(names):
            rmin, rmax, rabs = pairwise_observables(X) if X.shape[-2] > 1 else (np.ones(X.shape[:-2]),) * 3
            out.update(rho_min=rmin, rho_max=rmax, rho_abs=rabs)
        if "masses" in names:
            C = X @ basis
            out["masses"] = np.mean(C * C, axis=-2)
        if "dist_top" in names:
            out["dist_top"] = np.max(np.linalg.norm(X - e_top, axis=-1), axis=-1)
        if "energy" in names:
            out["energy"] = _energy(X, V, beta)
        return {k: v for k, v in out.items() if k in names}

    return observe


def _run_batch(X0, V, beta, spec, observe, states_out):
    def cb(t, X):
        if states_out is not None:
            states_out.append(X.copy())
        return observe(t, X)

    times, obs = integrate_states(X0, V, beta, spec.t_end, spec.dt, spec.record_every, callback=cb)
    return times, {k: np.stack([o[k] for o in obs], axis=1) for k in obs[0]}


def run_experiment(spec: ExperimentSpec, outdir=None) -> ExperimentResult:
    """Run every trial for every beta; write CSVs and a manifest when ``outdir`` is given.

    All betas consume the same initial configurations. Trials are integrated as
    one batch; if the batch hits a non-finite state, trials are rerun one by
    one and the failing ones are recorded with NaN series.
    """
    spec.validate()
    outdir = Path(outdir) if outdir is not None else None
    if spec.kind == "threshold":
        return _run_threshold(spec, outdir)
    s = spectrum_from_config(spec.V)
    V, d = s.matrix, s.dim
    X0 = np.stack([sample_initial(spec.sampler, spec.n, d, spec.seed, spec.delta, s, trial=k) for k in range(spec.trials)])
    init_hash = export.array_hash(X0)
    summaries, files = [], []
    for beta in spec.betas:
        observe = _observer(spec.observables, V, beta, s.basis, s.top)
        states = [] if spec.save_trajectories else None
        failures = {}
        try:
            times, series = _run_batch(X0, V, beta, spec, observe, states)
        except NumericError:
            times, series, states, failures = _run_one_by_one(X0, V, beta, spec, observe, spec.save_trajectories)
        mean = {k: np.nanmean(v, axis=0) for k, v in series.items()}
        std = {k: np.nanstd(v, axis=0) for k, v in series.items()}
        summ = EnsembleSummary(beta, times, series, mean, std, failures, init_hash)
        summaries.append(summ)
        if outdir is not None:
            files += _write_beta(outdir, spec, summ, d, states)
    result = ExperimentResult(spec, summaries, files)
    if outdir is not None:
        files.append(
            export.write_manifest(
                outdir / "manifest.json",
                experiment=spec.name,
                spec_hash=export.spec_hash(spec.to_dict()),
                seed=spec.seed,
                rng="numpy Philox4x64-10, stream seed+trial",
                initial_hash={export.fmt(b): init_hash for b in spec.betas},
                failures={export.fmt(s.beta): {str(k): v for k, v in s.failures.items()} for s in summaries},
                consensus_fraction={
                    export.fmt(s.beta): s.fraction_final("rho_min", lambda v: v > spec.consensus_cutoff)
                    for s in summaries
                    if "rho_min" in s.series
                },
                files=sorted(str(f.relative_to(outdir)) for f in files),
            )
        )
    return result


def _run_one_by_one(X0, V, beta, spec, observe, keep_states):
    per, failures, all_states, times = [], {}, [], None
    for k, X in enumerate(X0):
        st = [] if keep_states else None
        try:
            t_k, ser = _run_batch(X[None], V, beta, spec, observe, st)
            times = t_k
            per.append({key: v[0] for key, v in ser.items()})
            if st is not None:
                st = np.stack(st)[:, 0]
        except NumericError as exc:
            failures[k] = f"{exc} (last valid time {exc.last_time})"
            per.append(None)
            st = None
        all_states.append(st)
    if times is None:
        raise NumericError("every trial failed")
    template = next(p for p in per if p is not None)
    series = {}
    for key, arr in template.items():
        shape = arr.shape
        series[key] = np.stack([p[key] if p is not None else np.full(shape, np.nan) for p in per])
    states = None
    if keep_states:
        states = all_states
    return times, series, states, failures


def _write_beta(outdir, spec, summ, d, states):
    tag = f"beta{export.fmt(summ.beta)}"
    files = []
    scalar = [k for k in summ.series if k != "masses"]
    header = ["trial", "t"] + scalar + ([f"m_{k + 1}" for k in range(d)] if "masses" in summ.series else [])
    rows = []
    ntr = next(iter(summ.series.values())).shape[0]
    for tr in range(ntr):
        for j, t in enumerate(summ.times):
            row = [tr, t] + [summ.series[k][tr, j] for k in scalar]
            if "masses" in summ.series:
                row += list(summ.series["masses"][tr, j])
            rows.append(row)
    files.append(export.write_rows(outdir / f"observables_{tag}.csv", header, rows))
    sh = ["t"]
    for k in scalar:
        sh += [f"{k}_mean", f"{k}_std"]
    if "masses" in summ.series:
        for m in range(d):
            sh += [f"m_{m + 1}_mean", f"m_{m + 1}_std"]
    srows = []
    for j, t in enumerate(summ.times):
        row = [t]
        for k in scalar:
            row += [summ.mean[k][j], summ.std[k][j]]
        if "masses" in summ.series:
            for m in range(d):
                row += [summ.mean["masses"][j, m], summ.std["masses"][j, m]]
        srows.append(row)
    files.append(export.write_rows(outdir / f"summary_{tag}.csv", sh, srows))
    if states is not None:
        if states and isinstance(states[0], np.ndarray) and states[0].ndim == 3:
            arr = np.stack(states, axis=1)  # batch run: (trials, T, n, d)
        else:
            arr = states  # one-by-one run: per-trial (T, n, d) or None
        for tr in range(ntr):
            if arr[tr] is None:
                continue
            files.append(export.write_trajectory(outdir / f"trajectory_{tag}_trial{tr}.csv", summ.times, arr[tr]))
    return files


def _run_threshold(spec, outdir):
    th = spec.threshold
    grid = np.linspace(th.get("beta_min", 0.0), th.get("beta_max", 3.0), int(th.get("num", 301)))
    curves, files = [], []
    for r in th.get("ratios", [1.0]):
        curve = threshold_curve(th.get("lambda_p", 1.0), r, grid)
        curves.append((r, curve))
        if outdir is not None:
            files.append(export.write_threshold(outdir / f"threshold_r{export.fmt(r)}.csv", curve))
    if outdir is not None:
        files.append(
            export.write_manifest(
                outdir / "manifest.json",
                experiment=spec.name,
                spec_hash=export.spec_hash(spec.to_dict()),
                seed=spec.seed,
                files=sorted(str(f.relative_to(outdir)) for f in files),
            )
        )
    return ExperimentResult(spec, [], files, curves)


def apply_env_seed(spec_dict):
    seed = os.environ.get("SAL_SEED")
    if seed is not None:
        try:
            spec_dict["seed"] = int(seed)
        except ValueError:
            raise ValidationError(f"SAL_SEED must be an integer, got {seed!r}") from None
    return spec_dict
