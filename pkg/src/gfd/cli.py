"""Command-line interface: ``gfd {simulate,delta,contour,exactness,density-dump}``.

Exit codes: 0 success, 2 usage error, 3 numeric or experiment failure.  Every file
written starts with ``#`` comment lines echoing the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .dge import DgeSpec, resolve_dge_id
from .exceptions import DomainError, GfdError, InputError, NonRegularModelError
from .fiducial import build_density
from .matching import delta2_contour, match_report
from .models import MODEL_IDS, as_sample, get_model
from .simharness import (
    DEFAULT_ALPHAS,
    DEFAULT_LEVELS,
    DEFAULT_SEED,
    SimConfig,
    exactness_suite,
    resolve_jobs,
    rows_to_csv,
    run_simulation,
)

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _range(text):
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like a:b:steps, got {text!r}") from None
    if not (0 < a <= b) or steps < 1:
        raise argparse.ArgumentTypeError(f"range {text!r} must be positive with a <= b and steps >= 1")
    return a, b, steps


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _header(command, config):
    return [f"gfd {command} (version {__version__})", "config: " + json.dumps(config, sort_keys=True)]


def _load_config(path):
    with open(path) as fh:
        text = fh.read()
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
    return json.loads(text)


# -- subcommands ----------------------------------------------------------


def cmd_simulate(args):
    cfg = {}
    if args.config:
        try:
            cfg = _load_config(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from None
    for key in ("model", "q", "theta0", "n", "methods", "alphas", "levels", "reps", "seed", "out"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("methods", ["FS", "F1", "BJ"])
    cfg.setdefault("alphas", list(DEFAULT_ALPHAS))
    cfg.setdefault("levels", list(DEFAULT_LEVELS))
    cfg.setdefault("reps", 5000)
    cfg.setdefault("seed", DEFAULT_SEED)
    for key in ("model", "theta0", "n"):
        if key not in cfg:
            raise UsageError(f"--{key} is required (or supply it through --config)")
    try:
        config = SimConfig.from_dict(cfg)
    except (DomainError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    rows = run_simulation(config, jobs=args.jobs)
    _write(rows_to_csv(rows, _header("simulate", config.to_dict())), config.out)
    return 0


def cmd_delta(args):
    try:
        model = get_model(args.model, args.q)
        dge = DgeSpec(model, resolve_dge_id(args.dge))
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    try:
        model.domain.check(args.theta0)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    rep = match_report(model, dge, args.theta0, alpha=args.alpha, a0=args.a0, a1=args.a1, tol=args.tol)
    payload = {
        "model": args.model,
        "dge": dge.dge_id,
        "theta0": rep.theta0,
        "delta1": rep.delta1,
        "delta2": rep.delta2,
        "order": rep.order,
    }
    sys.stdout.write(json.dumps(payload) + "\n")
    return 0


def cmd_contour(args):
    mu = np.linspace(*args.mu_range[:2], args.mu_range[2])
    q = np.linspace(*args.q_range[:2], args.q_range[2])
    grid = delta2_contour(mu, q)
    config = {"mu_range": list(args.mu_range), "q_range": list(args.q_range)}
    lines = ["# " + h for h in _header("contour", config)]
    lines.append("mu,q,delta2")
    lines += [f"{m:.17g},{qq:.17g},{d:.17g}" for m, qq, d in grid]
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_exactness(args):
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    rep = exactness_suite(reps=args.reps, seed=args.seed, jobs=args.jobs)
    config = {"reps": args.reps, "seed": args.seed}
    _write(rows_to_csv(rep.rows, _header("exactness", config)), args.out)
    summary = sys.stdout if args.out not in (None, "-") else sys.stderr
    ok = rep.cells - len(rep.failing)
    if rep.passed:
        print(f"PASS: {ok}/{rep.cells} cells within 4 SE", file=summary)
        return 0
    print(f"FAIL: {ok}/{rep.cells} cells within 4 SE; failing cells:", file=summary)
    for r in rep.failing:
        print(f"  {r.model} {r.method} n={r.n} alpha={r.alpha}: {r.value:.4f}", file=summary)
    return EXIT_NUMERIC


def _read_data(path, arity):
    try:
        data = np.loadtxt(path, delimiter="," if _has_comma(path) else None, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read data file {path!r}: {exc}") from None
    if arity == 1:
        if data.shape[1] == 1:
            return data[:, 0]
        if data.shape[0] == 1:
            return data[0]
        raise UsageError("scalar model expects one observation per line")
    return data


def _has_comma(path):
    with open(path) as fh:
        return "," in fh.read()


def cmd_density_dump(args):
    try:
        model = get_model(args.model, args.q)
        dge = DgeSpec(model, resolve_dge_id(args.dge))
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    try:
        sample = as_sample(model, _read_data(args.data, model.arity))
    except InputError as exc:
        raise UsageError(str(exc)) from None
    dens = build_density(model, dge, sample)
    config = {"model": args.model, "q": args.q, "dge": dge.dge_id, "data": args.data, "points": args.points}
    lines = "".join("# " + h + "\n" for h in _header("density-dump", config))
    _write(lines + dens.to_csv(points=args.points), args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gfd", description="Generalized fiducial distributions")
    p.add_argument("--version", action="version", version=f"gfd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="coverage / length / MAD Monte Carlo tables")
    s.add_argument("--config", help="JSON config file (or a previous output CSV)")
    s.add_argument("--model", choices=MODEL_IDS)
    s.add_argument("--q", type=float)
    s.add_argument("--theta0", type=_floats)
    s.add_argument("--n", type=_ints)
    s.add_argument("--methods", type=_names)
    s.add_argument("--alphas", type=_floats)
    s.add_argument("--levels", type=_floats)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("delta", help="first/second-order matching coefficients")
    d.add_argument("--model", required=True, choices=MODEL_IDS)
    d.add_argument("--q", type=float)
    d.add_argument("--dge", required=True)
    d.add_argument("--theta0", type=float, required=True)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--a0", type=float, default=0.0)
    d.add_argument("--a1", type=float, default=0.0)
    d.add_argument("--tol", type=float, default=1e-7)
    d.set_defaults(func=cmd_delta)

    c = sub.add_parser("contour", help="closed-form Delta2 grid for the scaled-normal family")
    c.add_argument("--mu-range", type=_range, required=True)
    c.add_argument("--q-range", type=_range, required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_contour)

    e = sub.add_parser("exactness", help="coverage checks for models with exact fiducial distributions")
    e.add_argument("--reps", type=int, default=5000)
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--out")
    e.add_argument("--jobs", type=int)
    e.set_defaults(func=cmd_exactness)

    g = sub.add_parser("density-dump", help="write theta,pdf,cdf for a data file")
    g.add_argument("--model", required=True, choices=MODEL_IDS)
    g.add_argument("--q", type=float)
    g.add_argument("--dge", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--out")
    g.add_argument("--points", type=int, default=1024)
    g.set_defaults(func=cmd_density_dump)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "jobs"):
            args.jobs = resolve_jobs(args.jobs)
        return args.func(args)
    except (UsageError, DomainError) as exc:
        parser.error(str(exc))
    except (GfdError, NonRegularModelError) as exc:
        print(f"gfd: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
