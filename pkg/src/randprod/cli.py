"""Batch front-end: ``randprod {bound,verify,martingale,kaczmarz} --config FILE``.

Exit codes: 0 success, 1 a checked property failed, 2 usage or configuration error.
"""

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import ensembles
from .linalg import sym_eigen
from .montecarlo import (
    ENUM_BUDGET,
    MARTINGALE_TOL,
    BoundViolation,
    brute_force_tail,
    estimate_tail,
    martingale_property_test,
    martingale_trace,
    run_trajectory,
    simulate,
)
from .rng import RngState
from .sgd import certificate, error_propagation_check, make_problem, sgd_run, synthetic_problem
from .theory import N_EST, SampledConstantWarning, expected_product, tail_bound, theory_params, zero_mask

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2
SGD_TOL = 1e-12

TAIL_COLUMNS = ["t", "empirical_tail", "ci_low", "ci_high", "exact_tail", "theory_bound", "norm_kind"]

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_synthetic = {
    "type": "object",
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["dim", "m", "seed"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "ensemble": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": ensembles.FINITE},
                        "atoms": {"type": "array", "items": _matrix, "minItems": 1},
                        "probs": {"type": "array", "items": {"type": "number"}},
                    },
                    "required": ["kind", "atoms", "probs"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": ensembles.ROWS},
                        "rows": _matrix,
                        "synthetic": _synthetic,
                    },
                    "required": ["kind"],
                    "oneOf": [{"required": ["rows"]}, {"required": ["synthetic"]}],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": ensembles.SPHERE},
                        "dim": {"type": "integer", "minimum": 1},
                    },
                    "required": ["kind", "dim"],
                    "additionalProperties": False,
                },
            ]
        },
        "alpha": {"type": "number"},
        "alpha_r": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "t_grid": {
            "type": "object",
            "properties": {
                "min": {"type": "number", "minimum": 0},
                "max": {"type": "number", "minimum": 0},
                "count": {"type": "integer", "minimum": 1},
            },
            "required": ["min", "max", "count"],
            "additionalProperties": False,
        },
        "norm": {"enum": ["op", "fro"]},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "sigma2_override": {"type": "number", "minimum": 0},
        "c_samples": {"type": "integer", "minimum": 1},
        "martingale": {
            "type": "object",
            "properties": {
                "i": {"type": "integer", "minimum": 0},
                "j": {"type": "integer", "minimum": 0},
                "depth": {"type": "integer", "minimum": 0},
                "trajectories": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "kaczmarz": {
            "type": "object",
            "properties": {
                "rows": _matrix,
                "x_star": {"type": "array", "items": {"type": "number"}},
                "synthetic": _synthetic,
                "x0": {"type": "array", "items": {"type": "number"}},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "runs": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["rows", "x_star"]}, {"required": ["synthetic"]}],
            "additionalProperties": False,
        },
    },
    "required": ["schema"],
    "not": {"required": ["alpha", "alpha_r"]},
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated experiment description; ``alpha_r`` means ``alpha = alpha_r / r``."""

    schema: int = SCHEMA_VERSION
    ensemble: Optional[dict] = None
    alpha: Optional[float] = None
    alpha_r: Optional[float] = None
    n: int = 0
    trials: int = 1000
    seed: Optional[int] = None
    t_grid: dict = field(default_factory=lambda: {"min": 0.0, "max": 1.0, "count": 41})
    norm: str = "op"
    threads: int = 1
    out: Optional[str] = None
    sigma2_override: Optional[float] = None
    c_samples: int = N_EST
    martingale: dict = field(default_factory=dict)
    kaczmarz: Optional[dict] = None

    @classmethod
    def from_dict(cls, data):
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        return cls(**data)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def grid(self):
        g = self.t_grid
        if g["max"] < g["min"]:
            raise ConfigError("t_grid max is below min")
        return np.linspace(g["min"], g["max"], g["count"])


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)


def apply_overrides(cfg, args):
    data = cfg.to_dict()
    for name in ("n", "trials", "seed", "threads", "out", "norm"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.alpha is not None:
        data.pop("alpha_r", None)
        data["alpha"] = args.alpha
    if args.dim is not None:
        ens = data.get("ensemble")
        if ens and ens["kind"] == ensembles.SPHERE:
            ens["dim"] = args.dim
        elif ens and "synthetic" in ens:
            ens["synthetic"]["dim"] = args.dim
        elif data.get("kaczmarz") and "synthetic" in data["kaczmarz"]:
            data["kaczmarz"]["synthetic"]["dim"] = args.dim
        else:
            raise ConfigError("--dim applies only to sphere-rank-one or synthetic ensembles")
    return RunConfig.from_dict(data)


def build_ensemble(desc):
    if desc is None:
        raise ConfigError("this subcommand needs an 'ensemble' entry")
    try:
        if desc["kind"] == ensembles.FINITE:
            return ensembles.finite_support(desc["atoms"], desc["probs"])
        if desc["kind"] == ensembles.ROWS:
            if "synthetic" in desc:
                syn = desc["synthetic"]
                return synthetic_problem(syn["dim"], syn["m"], syn["seed"]).ensemble()
            return ensembles.rank_one_rows(desc["rows"])
        return ensembles.sphere_rank_one(desc["dim"])
    except ValueError as exc:
        raise ConfigError(f"invalid ensemble: {exc}") from None


def build_problem(desc):
    if desc is None:
        raise ConfigError("kaczmarz needs a 'kaczmarz' entry")
    try:
        if "synthetic" in desc:
            syn = desc["synthetic"]
            return synthetic_problem(syn["dim"], syn["m"], syn["seed"])
        return make_problem(desc["rows"], desc["x_star"])
    except ValueError as exc:
        raise ConfigError(f"invalid least-squares problem: {exc}") from None


def resolve_alpha(cfg, r):
    if cfg.alpha is not None:
        alpha = cfg.alpha
    elif cfg.alpha_r is not None:
        alpha = cfg.alpha_r / r
    else:
        raise ConfigError("config needs 'alpha' or 'alpha_r'")
    if not 0.0 < alpha < 1.0 / (2.0 * r):
        raise ConfigError(
            f"alpha={float(alpha)!r} violates the step-size hypothesis: alpha must lie in the open "
            f"interval (0, 1/(2r)) = (0, {1.0 / (2.0 * r)!r}) for r={r!r}"
        )
    return alpha


def require_seed(cfg):
    if cfg.seed is None:
        raise ConfigError("randomized runs need an explicit 'seed' (or --seed)")
    return cfg.seed


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def tail_csv(curve, exact=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TAIL_COLUMNS)
    for k, t in enumerate(curve.thresholds):
        w.writerow([
            _fmt(t),
            _fmt(curve.tail[k]),
            _fmt(curve.ci_low[k]) if curve.ci_low is not None else "",
            _fmt(curve.ci_high[k]) if curve.ci_high is not None else "",
            _fmt(exact.tail[k]) if exact is not None else "",
            _fmt(curve.bound[k]),
            curve.norm_kind,
        ])
    return buf.getvalue()


def _write_outputs(cfg, name, report, csv_text=None, csv_name=None):
    if cfg.out is None:
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"command": name, "config": cfg.to_dict(), **report}
    (out / f"{name}_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if csv_text is not None:
        (out / csv_name).write_text(csv_text)


def _theory(cfg, e, alpha, s):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SampledConstantWarning)
        params = theory_params(e, alpha, spectrum=s, n_est=cfg.c_samples, seed=cfg.seed or 0,
                               sigma2=cfg.sigma2_override)
    notes = [str(w.message) for w in caught if issubclass(w.category, SampledConstantWarning)]
    return params, notes


def _print_params(out, e, alpha, params, notes):
    print(f"ensemble      {e.kind} (d={e.dim})", file=out)
    print(f"radius r      {float(params.r)!r}", file=out)
    print(f"alpha         {float(alpha)!r}  (valid: 0 < alpha < {1 / (2 * params.r)!r})", file=out)
    print(f"lambda        {np.array2string(params.lambdas, precision=6)}", file=out)
    print(f"c             {np.array2string(params.c, precision=6)}", file=out)
    print(f"c_exact       {str(params.c_exact).lower()}", file=out)
    print(f"sigma2        {float(params.sigma2)!r}", file=out)
    for note in notes:
        print(f"WARNING: {note}", file=out)


def cmd_bound(cfg, out=sys.stdout):
    e = build_ensemble(cfg.ensemble)
    r = e.radius()
    alpha = resolve_alpha(cfg, r)
    s = sym_eigen(e.mean())
    params, notes = _theory(cfg, e, alpha, s)
    grid = cfg.grid()
    bound = tail_bound(grid, alpha, e.dim, params.sigma2)
    _print_params(out, e, alpha, params, notes)
    print("t, bound", file=out)
    for t, b in zip(grid, bound):
        print(f"{t:.4f}, {b:.6g}", file=out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "theory_bound"])
    for t, b in zip(grid, bound):
        w.writerow([_fmt(t), _fmt(b)])
    report = {
        "alpha": alpha,
        "r": params.r,
        "lambdas": params.lambdas.tolist(),
        "c": params.c.tolist(),
        "c_exact": params.c_exact,
        "sigma2": params.sigma2,
        "warnings": notes,
    }
    _write_outputs(cfg, "bound", report, buf.getvalue(), "bound.csv")
    return EXIT_OK


def cmd_verify(cfg, out=sys.stdout, verbose=False):
    e = build_ensemble(cfg.ensemble)
    alpha = resolve_alpha(cfg, e.radius())
    seed = require_seed(cfg)
    s = sym_eigen(e.mean())
    params, notes = _theory(cfg, e, alpha, s)
    grid = cfg.grid()
    curve = estimate_tail(e, alpha, cfg.n, cfg.trials, grid, seed, cfg.norm, params=params, spectrum=s,
                          threads=cfg.threads)
    exact = None
    if e.is_discrete and e.n_atoms**cfg.n <= ENUM_BUDGET:
        exact = brute_force_tail(e, alpha, cfg.n, grid, cfg.norm, params=params, spectrum=s)

    mc_bad = np.flatnonzero(curve.ci_low > curve.bound)
    exact_bad = np.flatnonzero(exact.tail > exact.bound) if exact is not None else np.array([], dtype=int)
    passed = mc_bad.size == 0 and exact_bad.size == 0

    _print_params(out, e, alpha, params, notes)
    print(f"n={cfg.n} trials={cfg.trials} seed={seed} norm={cfg.norm}", file=out)
    print(f"exact enumeration: {'yes' if exact is not None else 'no'}", file=out)
    if verbose:
        other = "fro" if cfg.norm == "op" else "op"
        alt = estimate_tail(e, alpha, cfg.n, cfg.trials, grid, seed, other, params=params, spectrum=s,
                            threads=cfg.threads)
        print(f"{'t':>8} {cfg.norm + '_tail':>12} {other + '_tail':>12} {'bound':>12}", file=out)
        for k, t in enumerate(grid):
            print(f"{t:8.4f} {curve.tail[k]:12.6g} {alt.tail[k]:12.6g} {curve.bound[k]:12.6g}", file=out)
    for k in mc_bad:
        print(f"VIOLATION t={float(grid[k])!r}: ci_low={float(curve.ci_low[k])!r} > bound={float(curve.bound[k])!r}", file=out)
    for k in exact_bad:
        print(f"VIOLATION t={float(grid[k])!r}: exact tail={float(exact.tail[k])!r} > bound={float(exact.bound[k])!r}", file=out)
    print("PASS" if passed else "FAIL", file=out)

    report = {
        "alpha": alpha,
        "sigma2": params.sigma2,
        "c_exact": params.c_exact,
        "passed": passed,
        "exact": exact is not None,
        "violations": [float(grid[k]) for k in sorted(set(mc_bad) | set(exact_bad))],
        "warnings": notes,
    }
    _write_outputs(cfg, "verify", report, tail_csv(curve, exact), "tail_curve.csv")
    return EXIT_OK if passed else EXIT_VIOLATION


def cmd_martingale(cfg, out=sys.stdout):
    e = build_ensemble(cfg.ensemble)
    if not e.is_discrete:
        raise ConfigError("martingale needs a finite-support or rank-one-rows ensemble")
    alpha = resolve_alpha(cfg, e.radius())
    opts = {"i": 0, "j": 0, "depth": 3, "trajectories": 100, **cfg.martingale}
    i, j = opts["i"], opts["j"]
    if i >= e.dim or j >= e.dim:
        raise ConfigError(f"eigenvector indices must be below d={e.dim}")
    s = sym_eigen(e.mean())
    if zero_mask(s.eigenvalues)[i]:
        raise ConfigError(
            f"lambda_{i} = 0: the scaled entry is almost surely constant, so the martingale "
            "trace is degenerate and is not computed"
        )
    params, notes = _theory(cfg, e, alpha, s)
    residual = martingale_property_test(e, alpha, s, i, j, opts["depth"], params=params)
    slack = -math.inf
    violation = None
    if opts["trajectories"]:
        seed = require_seed(cfg)
        for stream in range(opts["trajectories"]):
            traj = run_trajectory(e, alpha, cfg.n, RngState(seed, stream), keep_partials=True)
            try:
                slack = max(slack, martingale_trace(traj, s, params, i, j).max_slack)
            except BoundViolation as exc:
                violation = f"trajectory {stream}: {exc}"
                break
    passed = residual <= MARTINGALE_TOL and violation is None
    _print_params(out, e, alpha, params, notes)
    print(f"(i, j) = ({i}, {j}), q_i = {float(params.q[i])!r}", file=out)
    print(f"conditional-expectation residual (depth {opts['depth']}): {residual:.3e}", file=out)
    print(f"max increment slack over {opts['trajectories']} trajectories of length {cfg.n}: {slack:.3e}", file=out)
    if violation:
        print(f"VIOLATION {violation}", file=out)
    print("PASS" if passed else "FAIL", file=out)
    report = {"alpha": alpha, "i": i, "j": j, "residual": residual,
              "max_slack": slack if math.isfinite(slack) else None, "passed": passed, "warnings": notes}
    _write_outputs(cfg, "martingale", report)
    return EXIT_OK if passed else EXIT_VIOLATION


def cmd_kaczmarz(cfg, out=sys.stdout):
    opts = cfg.kaczmarz
    p = build_problem(opts)
    alpha = resolve_alpha(cfg, p.ensemble().radius())
    seed = require_seed(cfg)
    x0 = np.asarray(opts.get("x0", np.zeros(p.dim)), dtype=float)
    if x0.shape != (p.dim,):
        raise ConfigError(f"x0 must have length {p.dim}")
    delta = opts.get("delta", 0.1)
    runs = opts.get("runs", 1000)

    iterates, _ = sgd_run(p, x0, alpha, cfg.n, seed)
    residual = error_propagation_check(p, x0, alpha, cfg.n, seed)
    cert = certificate(p, alpha, cfg.n, delta)

    e = p.ensemble()
    s = sym_eigen(e.mean())
    e0 = x0 - p.x_star
    e0_norm = float(np.linalg.norm(e0))
    errors = np.linalg.norm(iterates - p.x_star, axis=1)
    q_max = float(np.max(np.abs(1.0 - alpha * s.eigenvalues)))
    radii = [(q_max**k + cert.t) * e0_norm for k in range(cfg.n + 1)]

    # coverage of the final-step certificate over independent runs
    if e0_norm > 0:
        z = simulate(e, alpha, cfg.n, runs, seed, threads=cfg.threads)
        final = np.linalg.norm(z @ e0, axis=1) / e0_norm
        covered = float(np.mean(final <= cert.radius))
    else:
        covered = 1.0
    dev = np.linalg.norm(iterates[-1] - p.x_star - expected_product(s, alpha, cfg.n) @ e0)

    passed = residual <= SGD_TOL
    print(f"problem       d={p.dim} m={len(p.rows)} alpha={float(alpha)!r} n={cfg.n} seed={seed}", file=out)
    print(f"path identity residual max_k |e_k - Z_k e_0| = {residual:.3e}", file=out)
    print(f"sigma2 = {float(cert.sigma2)!r}, t(delta={delta}) = {float(cert.t)!r}{' (vacuous)' if cert.vacuous else ''}", file=out)
    print(f"certified relative radius at n: {float(cert.radius)!r}", file=out)
    print(f"observed |e_n| = {float(errors[-1])!r}, |e_n - E[Z_n] e_0| = {float(dev)!r}", file=out)
    print(f"certificate covered {covered:.4f} of {runs} runs (target >= {1 - delta})", file=out)
    print("PASS" if passed else "FAIL", file=out)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "error", "certified_radius"])
    for k in range(cfg.n + 1):
        w.writerow([k, _fmt(errors[k]), _fmt(radii[k])])
    report = {"alpha": alpha, "residual": residual, "t": cert.t, "radius": cert.radius, "vacuous": cert.vacuous,
              "sigma2": cert.sigma2, "coverage": covered, "runs": runs, "delta": delta, "passed": passed}
    _write_outputs(cfg, "kaczmarz", report, buf.getvalue(), "kaczmarz.csv")
    return EXIT_OK if passed else EXIT_VIOLATION


COMMANDS = {"bound": cmd_bound, "verify": cmd_verify, "martingale": cmd_martingale, "kaczmarz": cmd_kaczmarz}


def build_parser():
    parser = argparse.ArgumentParser(prog="randprod", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--alpha", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int)
        p.add_argument("--norm", choices=["op", "fro"])
        p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
        if name == "verify":
            p.add_argument("--verbose", action="store_true", help="report both norms")
    return parser


def main(argv=None, out=None):
    out = out if out is not None else sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.dump_config:
            print(cfg.dumps(), file=out)
            return EXIT_OK
        if args.command == "verify":
            return cmd_verify(cfg, out=out, verbose=args.verbose)
        return COMMANDS[args.command](cfg, out=out)
    except ConfigError as exc:
        print(f"randprod {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
