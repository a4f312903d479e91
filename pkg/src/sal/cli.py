"""Command-line front end: ``sal simulate | reduced | stability | threshold | verify | experiment``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 numeric failure. Reports go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .dynamics import Configuration, integrate
from .errors import NumericError, ValidationError
from .experiments import ExperimentSpec, builtin_spec, run_experiment, sample_initial
from .export import (
    array_hash,
    spec_hash,
    write_energy,
    write_manifest,
    write_rows,
    write_threshold,
    write_trajectory,
)
from .reduced import (
    bipolar_limit,
    consensus_closed_form,
    consensus_limit,
    integrate_bipolar,
    integrate_consensus,
)
from .selection import pairwise_observables
from .spectral import spectrum_from_config
from .stability import (
    SignPattern,
    equilibrium_spectrum,
    homogeneous_stability,
    sign_split_report,
    threshold_curve,
)
from .verify import SUITES

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


def _floats(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(obj):
    print(json.dumps(obj, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


def _finite(x):
    # JSON has no inf/nan; keep them readable as strings
    return x if math.isfinite(x) else str(x)


def resolve_seed(flag, config_value, default=0):
    """flag > SAL_SEED > config > default."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("SAL_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"SAL_SEED must be an integer, got {env!r}") from None
    if config_value is not None:
        return int(config_value)
    return default


def load_config(ref):
    """JSON config from a path, or a shipped config by name (``fig1`` / ``fig1.json``)."""
    path = Path(ref)
    if path.exists():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {ref} is not valid JSON: {exc}") from None
    name = path.name[:-5] if path.name.endswith(".json") else path.name
    try:
        return builtin_spec(name)
    except (ValidationError, FileNotFoundError):
        raise ValidationError(f"config not found: {ref}") from None


def _spectrum_of(cfg):
    V = cfg.get("V")
    if isinstance(V, dict):
        return spectrum_from_config(V)
    if V is not None:
        return spectrum_from_config({"V": V})
    if "diag" in cfg:
        return spectrum_from_config({"diag": cfg["diag"]})
    raise ValidationError("config must give the interaction matrix as 'V' or 'diag'")


def _read_states_csv(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            if rows:
                raise ValidationError(f"non-numeric row in {path}: {line!r}") from None
            # header line
    if not rows:
        raise ValidationError(f"no token rows in {path}")
    return np.array(rows, dtype=float)


def _initial_states(cfg, spectrum, seed):
    init = cfg.get("initial", {})
    if "states" in init:
        return np.asarray(init["states"], dtype=float)
    if "file" in init:
        return _read_states_csv(init["file"])
    sampler = init.get("sampler", cfg.get("sampler", "uniform-sphere"))
    n = int(init.get("n", cfg.get("n", 0)))
    if n < 1:
        raise ValidationError("sampled initial data need a token count n >= 1")
    delta = float(init.get("delta", cfg.get("delta", 0.1)))
    return sample_initial(sampler, n, spectrum.dim, seed, delta, spectrum)


def _beta_of(cfg):
    if "beta" in cfg:
        return float(cfg["beta"])
    betas = cfg.get("betas") or [1.0]
    return float(betas[0])


def cmd_simulate(args):
    cfg = load_config(args.config) if args.config else builtin_spec("fig1")
    s = _spectrum_of(cfg)
    seed = resolve_seed(args.seed, cfg.get("seed"))
    beta = args.beta if args.beta is not None else _beta_of(cfg)
    t_end = args.t_end if args.t_end is not None else float(cfg.get("t_end", 10.0))
    dt = args.dt if args.dt is not None else float(cfg.get("dt", 1e-2))
    every = args.record_every if args.record_every is not None else int(cfg.get("record_every", 1))
    if not (math.isfinite(t_end) and t_end >= 0):
        raise ValidationError(f"t_end must be a finite nonnegative number, got {t_end}")
    if not (math.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")
    if every < 1:
        raise ValidationError(f"record_every must be >= 1, got {every}")
    X0 = _initial_states(cfg, s, seed)
    cfg0 = Configuration(X0, beta)
    if cfg0.d != s.dim:
        raise ValidationError(f"initial data have d={cfg0.d} but V is {s.dim}x{s.dim}")
    rec = integrate(cfg0, s, t_end, dt, every)

    out = Path(args.out)
    files = {
        "trajectory": write_trajectory(out / "trajectory.csv", rec.times, rec.states),
        "energy": write_energy(out / "energy.csv", rec.times, rec.energies),
    }
    coeffs = rec.states @ s.basis
    masses = np.mean(coeffs * coeffs, axis=1)
    header = ["t"] + [f"m_{k + 1}" for k in range(s.dim)]
    cols = [rec.times[:, None], masses]
    if cfg0.n >= 2:
        header[1:1] = ["rho_min", "rho_max", "rho_abs"]
        cols[1:1] = [np.stack(pairwise_observables(rec.states), axis=1)]
    files["observables"] = write_rows(out / "observables.csv", header, np.hstack(cols))
    write_manifest(
        out / "manifest.json",
        command="simulate",
        config_hash=spec_hash(cfg),
        seed=seed,
        rng="numpy.random.Generator(Philox(seed + trial))",
        beta=beta,
        dt=dt,
        t_end=t_end,
        n=cfg0.n,
        d=cfg0.d,
        initial_hash=array_hash(X0),
        files={k: str(v.name) for k, v in files.items()},
    )
    _emit({
        "command": "simulate",
        "n": cfg0.n,
        "d": cfg0.d,
        "beta": beta,
        "t_end": float(rec.times[-1]),
        "snapshots": int(rec.times.size),
        "final_masses": masses[-1],
        "energy_start": _finite(float(rec.energies[0])),
        "energy_end": _finite(float(rec.energies[-1])),
        "out": str(out),
    })
    return EXIT_OK


def cmd_reduced(args):
    lam = np.array(_floats(args.lambdas))
    p0 = np.array(_floats(args.p0))
    if p0.shape != lam.shape:
        raise ValidationError(f"p0 has {p0.size} entries but there are {lam.size} eigenvalues")
    if args.kind == "consensus":
        times, P = integrate_consensus(p0, lam, args.t_end, args.dt, args.record_every)
        closed = np.array([consensus_closed_form(p0, lam, t) for t in times])
        limit = consensus_limit(p0, lam)
        report = {"closed_form_max_diff": float(np.max(np.abs(P - closed)))}
    else:
        if args.beta is None:
            raise ValidationError("bipolar reduction needs --beta")
        times, P = integrate_bipolar(p0, lam, args.beta, args.t_end, args.dt, args.record_every)
        limit, m_inf = bipolar_limit(p0, lam, args.beta)
        report = {"predicted_M_limit": float(m_inf)}
    M = P @ lam
    out = Path(args.out)
    header = ["t"] + [f"p_{k + 1}" for k in range(lam.size)] + ["M"]
    write_rows(out / "reduced.csv", header, np.hstack([times[:, None], P, M[:, None]]))
    _emit({
        "command": "reduced",
        "kind": args.kind,
        "t_end": float(times[-1]),
        "final_p": P[-1],
        "final_M": float(M[-1]),
        "predicted_limit": limit,
        "distance_to_limit": float(np.max(np.abs(P[-1] - limit))),
        **report,
        "out": str(out / "reduced.csv"),
    })
    return EXIT_OK


def _curve_grid(args):
    if args.beta_max <= args.beta_min or args.num < 2:
        raise ValidationError("beta grid needs beta_max > beta_min and num >= 2")
    return np.linspace(args.beta_min, args.beta_max, args.num)


def _write_curve(args, lambda_p, r, path):
    curve = threshold_curve(lambda_p, r, _curve_grid(args))
    write_threshold(path, curve)
    for note in curve.notes:
        print(f"note: {note}", file=sys.stderr)
    return {"curve": str(path), "lambda_p": lambda_p, "r": r, "beta_star": curve.beta_star, "points": int(curve.betas.size)}


def cmd_stability(args):
    result = {"command": "stability"}
    if args.lambdas is not None:
        lam = _floats(args.lambdas)
        p = args.mode - 1
        if args.kind == "homogeneous":
            hv = homogeneous_stability(p, lam)
            result.update(
                kind="homogeneous",
                mode=args.mode,
                verdict=hv.verdict,
                rates=[{"k": k + 1, "mean_rate": m, "fluctuation_rate": f} for k, m, f in hv.rates],
            )
        else:
            if args.pattern is None or args.beta is None:
                raise ValidationError("sign-split analysis needs --pattern and --beta")
            pattern = SignPattern.parse(args.pattern)
            if pattern.constant:
                raise ValidationError(
                    f"pattern {args.pattern!r} has a single sign; sign-split analysis needs both signs "
                    "(use --kind homogeneous)"
                )
            rep = sign_split_report(p, lam, args.beta, pattern)
            lp = lam[p]
            result.update(
                kind="sign-split",
                mode=args.mode,
                n_plus=pattern.n_plus,
                n_minus=pattern.n_minus,
                a_plus=rep.a_plus,
                b_plus=rep.b_plus,
                a_minus=rep.a_minus,
                b_minus=rep.b_minus,
                gamma_plus=rep.gamma_plus,
                gamma_minus=rep.gamma_minus,
                blocks=[
                    {"k": b.k + 1, "trace": b.trace, "det": b.det, "eigenvalues": list(b.eigenvalues)}
                    for b in rep.blocks
                ],
                verdict="stable" if rep.stable else "not stable",
                spectral_verdict="stable" if rep.spectral_stable else "not stable",
                c_beta=_finite(rep.c_beta),
                sigma=_finite(rep.threshold_sigma),
                sigma_bound=_finite(lp * rep.threshold_sigma),
                spectrum=list(equilibrium_spectrum(p, lam, args.beta, pattern)),
            )
            if args.curve:
                lambda_p = args.lambda_p if args.lambda_p is not None else lp
                r = args.r if args.r is not None else pattern.ratio
                result.update(_write_curve(args, lambda_p, r, Path(args.out)))
    if args.curve and "curve" not in result:
        if args.lambda_p is None or args.r is None:
            raise ValidationError("--curve needs --lambda-p and --r (or --lambdas and --pattern)")
        result.update(_write_curve(args, args.lambda_p, args.r, Path(args.out)))
    if args.lambdas is None and not args.curve:
        raise ValidationError("nothing to do: give --lambdas or --curve")
    _emit(result)
    return EXIT_OK


def cmd_threshold(args):
    _emit({"command": "threshold", **_write_curve(args, args.lambda_p, args.r, Path(args.out))})
    return EXIT_OK


def cmd_verify(args):
    fn = SUITES[args.theorem]
    kwargs = {}
    names = fn.__code__.co_varnames[: fn.__code__.co_argcount]
    for key in ("n", "beta", "delta", "trials", "t_end", "dt"):
        val = getattr(args, key)
        if val is None:
            continue
        if key not in names:
            raise ValidationError(f"--{key.replace('_', '-')} does not apply to suite {args.theorem}")
        kwargs[key] = val
    kwargs["seed"] = resolve_seed(args.seed, None)
    checks = fn(**kwargs)
    for c in checks:
        _emit({"suite": args.theorem, **c})
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_FAIL


def cmd_experiment(args):
    obj = load_config(args.config)
    spec = ExperimentSpec.from_dict(obj)
    spec.seed = resolve_seed(args.seed, spec.seed)
    for key in ("trials", "t_end", "dt"):
        val = getattr(args, key)
        if val is not None:
            setattr(spec, key, val)
    spec.validate()
    out = Path(args.out) if args.out else Path("runs") / spec.name
    result = run_experiment(spec, out)
    report = {"command": "experiment", "name": spec.name, "out": str(out), "files": [str(Path(f).name) for f in result.files]}
    if spec.kind == "ensemble":
        report["betas"] = []
        for summ in result.summaries:
            entry = {"beta": summ.beta, "failures": summ.failures}
            if "rho_min" in summ.series:
                entry["consensus_fraction"] = summ.fraction_final("rho_min", lambda v: v > spec.consensus_cutoff)
            for key in ("rho_abs", "dist_top"):
                if key in summ.mean:
                    entry[f"mean_final_{key}"] = float(summ.mean[key][-1])
            report["betas"].append(entry)
    _emit(report)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="sal",
        description="Symmetric self-attention dynamics on the sphere: simulation, reductions, stability and selection checks.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("simulate", help="integrate the token flow [self-attention ODE, energy ascent]")
    sp.add_argument("--config", help="JSON config path or shipped name (fig1..fig4)")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--record-every", type=int)
    sp.add_argument("--out", default=".", help="output directory (default: current)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reduced", help="reduced mass dynamics [consensus replicator, balanced bipolar]")
    sp.add_argument("--kind", choices=("consensus", "bipolar"), default="consensus")
    sp.add_argument("--lambdas", required=True, help="eigenvalues, comma separated")
    sp.add_argument("--p0", required=True, help="initial masses on the simplex, comma separated")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--t-end", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-2)
    sp.add_argument("--record-every", type=int, default=1)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_reduced)

    def curve_args(q):
        q.add_argument("--beta-min", type=float, default=0.0)
        q.add_argument("--beta-max", type=float, default=3.0)
        q.add_argument("--num", type=int, default=301)

    sp = sub.add_parser("stability", help="pure-mode linear stability [homogeneous and sign-split equilibria]")
    sp.add_argument("--lambdas", help="eigenvalues, comma separated")
    sp.add_argument("--beta", type=float)
    sp.add_argument("--pattern", help="token signs, e.g. '+-' or '1,1,-1'")
    sp.add_argument("--mode", type=int, default=1, help="1-based index of the equilibrium eigendirection")
    sp.add_argument("--kind", choices=("sign-split", "homogeneous"), default="sign-split")
    sp.add_argument("--curve", action="store_true", help="also write the threshold curve CSV")
    sp.add_argument("--lambda-p", type=float)
    sp.add_argument("--r", type=float, help="population ratio n+/n-")
    sp.add_argument("--out", default="threshold.csv", help="threshold CSV path")
    curve_args(sp)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("threshold", help="sign-split stability threshold curve [sigma(c_beta, r)]")
    sp.add_argument("--lambda-p", type=float, required=True)
    sp.add_argument("--r", type=float, required=True, help="population ratio n+/n-")
    sp.add_argument("--out", default="threshold.csv")
    curve_args(sp)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("verify", help="run an invariant suite [closed forms, cone selection, two-particle monotonicity, spectra]")
    sp.add_argument("theorem", choices=sorted(SUITES))
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("experiment", help="run an ensemble or threshold experiment spec [figure reproductions]")
    sp.add_argument("config", help="JSON spec path or shipped name (fig1..fig5)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        where = f" (t={exc.last_time})" if getattr(exc, "last_time", None) is not None else ""
        print(f"numeric failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
