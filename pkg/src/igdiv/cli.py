"""Command line front end: divergence values, grids and verification runs.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical failure.
"""

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT
from .divergence import QUANTITIES, evaluate_many
from .errors import (ConfigError, GradientInversionFailed, NotHessianManifold, PointOutOfDomain,
                     ShootingDiverged, StepCountTooSmall, TrajectoryLeftDomain, IGError)
from .manifold import from_spec
from .report import _plain
from .verify import SUITE, probe_convex_radius, resolve_suite, run_check

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

NUMERIC_KEYS = ("ode_steps", "quad_order", "shooting_tol", "fd_step", "seed")
RUN_KEYS = {"manifold", "numerics", "format", "out"}
PATH_QUANTITIES = {"D", "Dstar", "phi", "phistar", "ayamari", "henmiW", "henmiWstar"}


@dataclass
class RunConfig:
    manifold: object = None
    numerics: dict = field(default_factory=dict)
    format: str = "csv"
    out: str = None


def _fmt(x):
    return "%.17g" % x


def _coords(text, flag):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except (AttributeError, ValueError):
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}")


def _threads():
    raw = os.environ.get("IGDIV_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"IGDIV_THREADS must be a positive integer, got {raw!r}")
    # evaluation is batched in a single thread, so any positive cap is honoured
    return n


def load_config(args):
    """Merge a spec/run-config file with command-line flags."""
    rc = RunConfig()
    if args.spec:
        try:
            with open(args.spec) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec file {args.spec}: {exc}")
        if isinstance(data, dict) and "type" in data:
            rc.manifold = data
        elif isinstance(data, dict):
            extra = set(data) - RUN_KEYS
            if extra:
                raise ConfigError(f"unknown run-config keys: {sorted(extra)}")
            rc.manifold = data.get("manifold")
            rc.numerics = dict(data.get("numerics") or {})
            rc.format = data.get("format", rc.format)
            rc.out = data.get("out")
        else:
            raise ConfigError("spec file must hold a JSON object")
        bad = set(rc.numerics) - set(NUMERIC_KEYS)
        if bad:
            raise ConfigError(f"unknown numerics keys: {sorted(bad)}")
    if args.manifold:
        rc.manifold = args.manifold
    if rc.manifold is None:
        raise ConfigError("no manifold given; use --manifold or --spec")
    for key in NUMERIC_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            rc.numerics[key] = val
    if args.format:
        rc.format = args.format
    if args.out:
        rc.out = args.out
    if rc.format not in ("csv", "json"):
        raise ConfigError(f"unknown format {rc.format!r}")
    return rc


def _setup(args):
    _threads()
    rc = load_config(args)
    m = from_spec(rc.manifold)
    cfg = DEFAULT.with_overrides(**rc.numerics)
    return rc, m, cfg


def _emit(rc, text):
    if rc.out:
        with open(rc.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _quantities(text):
    names = [q.strip() for q in text.split(",") if q.strip()]
    unknown = [q for q in names if q not in QUANTITIES]
    if unknown or not names:
        raise ConfigError(f"unknown quantities {unknown}; choose from {sorted(QUANTITIES)}")
    return names


def _order(name, cfg):
    return cfg.quad_order if name in PATH_QUANTITIES else 0


# ---------------------------------------------------------------- commands

def cmd_compute(args):
    rc, m, cfg = _setup(args)
    p, q = _coords(args.p, "--p"), _coords(args.q, "--q")
    m.require(p)
    m.require(q)
    rows = []
    for name in _quantities(args.quantities):
        try:
            val, err = evaluate_many(m, name, p[None], q[None], cfg)
        except ShootingDiverged as exc:
            raise ShootingDiverged(f"{name}: {exc}", exc.indices, exc.node_t) from exc
        except TrajectoryLeftDomain as exc:
            raise TrajectoryLeftDomain(f"{name}: {exc}", exc.exit_time) from exc
        except IGError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
        rows.append({"manifold": m.name, "p": p.tolist(), "q": q.tolist(), "quantity": name,
                     "value": float(val[0]), "est_error": float(err[0]),
                     "quad_order": _order(name, cfg)})
    if rc.format == "json":
        _emit(rc, json.dumps(rows, indent=1) + "\n")
    else:
        _emit(rc, _csv(["manifold", "p", "q", "quantity", "value", "est_error", "quad_order"],
                       [[r["manifold"], " ".join(_fmt(x) for x in r["p"]),
                         " ".join(_fmt(x) for x in r["q"]), r["quantity"], _fmt(r["value"]),
                         _fmt(r["est_error"]), r["quad_order"]] for r in rows]))
    return EXIT_OK


def parse_grid(text, dim):
    """``lo:hi:n`` per coordinate, comma separated."""
    axes = []
    for part in text.split(","):
        bits = part.split(":")
        try:
            lo, hi, n = float(bits[0]), float(bits[1]), int(bits[2])
        except (IndexError, ValueError):
            raise ConfigError(f"grid axis {part!r} is not lo:hi:n")
        if len(bits) != 3 or n < 1:
            raise ConfigError(f"grid axis {part!r} is not lo:hi:n with n >= 1")
        axes.append(np.linspace(lo, hi, n))
    if len(axes) != dim:
        raise ConfigError(f"grid has {len(axes)} axes, manifold has dimension {dim}")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([a.ravel() for a in mesh], -1)


def cmd_table(args):
    rc, m, cfg = _setup(args)
    p = _coords(args.p, "--p")
    m.require(p)
    names = _quantities(args.quantities)
    if len(names) != 1:
        raise ConfigError("table takes exactly one quantity")
    name = names[0]
    Q = parse_grid(args.grid, m.dim)
    m.require(Q)
    P = np.repeat(p[None], len(Q), axis=0)
    try:
        val, err = evaluate_many(m, name, P, Q, cfg, strict=False)
    except IGError:
        val, err = np.full(len(Q), np.nan), np.full(len(Q), np.nan)
        for i in range(len(Q)):
            try:
                v, e = evaluate_many(m, name, P[i:i + 1], Q[i:i + 1], cfg, strict=False)
                val[i], err[i] = v[0], e[0]
            except IGError:
                pass
    bad = np.flatnonzero(~np.isfinite(val))
    for i in bad:
        print(f"warning: {name} failed at q={Q[i].tolist()}", file=sys.stderr)
    if rc.format == "json":
        rows = [{"q": q.tolist(), "value": float(v), "est_error": float(e)}
                for q, v, e in zip(Q, val, err)]
        _emit(rc, json.dumps(_plain(rows), indent=1) + "\n")
    else:
        header = [f"q_{i + 1}" for i in range(m.dim)] + ["value", "est_error"]
        _emit(rc, _csv(header, [[_fmt(x) for x in q] + [_fmt(v), _fmt(e)]
                                for q, v, e in zip(Q, val, err)]))
    return EXIT_OK


def cmd_verify(args):
    rc, m, cfg = _setup(args)
    names = "all" if args.suite.strip() == "all" else [s.strip() for s in args.suite.split(",")]
    names = resolve_suite(m, names)
    reports = []
    for name in names:
        rep = run_check(m, name, cfg.seed, cfg)
        print(rep.summary(), file=sys.stderr)
        reports.append(rep)
    if rc.format == "json":
        _emit(rc, json.dumps([r.to_dict() for r in reports], indent=1, sort_keys=True) + "\n")
    else:
        _emit(rc, _csv(["check", "passed", "max_error", "tolerance", "samples"],
                       [[r.name, r.passed, _fmt(r.max_error), _fmt(r.tolerance), r.samples]
                        for r in reports]))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_describe(args):
    rc, m, cfg = _setup(args)
    info = {"name": m.name, "dim": m.dim, "domain": [list(d) for d in m.domain],
            "category": m.category, "symmetric": m.symmetric, "pair_radius": m.pair_radius,
            "sample_box": [list(b) for b in m.sample_box] if m.sample_box else None,
            "has_potential": m.potential is not None, "spec": m.spec,
            "probed_convex_radius": probe_convex_radius(m, cfg=cfg),
            "checks": resolve_suite(m, "all")}
    if rc.format == "json":
        _emit(rc, json.dumps(_plain(info), indent=1, sort_keys=True) + "\n")
    else:
        _emit(rc, "".join(f"{k}: {json.dumps(_plain(v))}\n" for k, v in info.items()))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifold", help="shorthand name[:param], e.g. sphere2, euclidean:2")
    common.add_argument("--spec", help="JSON manifold spec or run-config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--quad-order", dest="quad_order", type=int)
    common.add_argument("--ode-steps", dest="ode_steps", type=int)
    common.add_argument("--fd-step", dest="fd_step", type=float)
    common.add_argument("--shooting-tol", dest="shooting_tol", type=float)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", help="output file (default: standard output)")

    parser = argparse.ArgumentParser(prog="igdiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    c = sub.add_parser("compute", parents=[common], help="divergence values for one pair")
    c.add_argument("--p", required=True)
    c.add_argument("--q", required=True)
    c.add_argument("--quantities", default="D")
    c.set_defaults(func=cmd_compute)
    t = sub.add_parser("table", parents=[common], help="one quantity on a grid of q")
    t.add_argument("--p", required=True)
    t.add_argument("--grid", required=True, help="lo:hi:n per coordinate, comma separated")
    t.add_argument("--quantities", default="D")
    t.set_defaults(func=cmd_table)
    v = sub.add_parser("verify", parents=[common], help="run verification checks")
    v.add_argument("--suite", default="all", help=f"'all' or a subset of {','.join(SUITE)}")
    v.set_defaults(func=cmd_verify)
    d = sub.add_parser("describe", parents=[common], help="manifold metadata")
    d.set_defaults(func=cmd_describe)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PointOutOfDomain, NotHessianManifold) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShootingDiverged, TrajectoryLeftDomain, StepCountTooSmall,
            GradientInversionFailed, IGError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
