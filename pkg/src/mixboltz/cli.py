"""Command-line front end.

Every subcommand writes a CSV table and ``summary.json`` (results plus a provenance
block) into ``--out``. Exit status: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .collision import (CollisionOperator, EscapeError, a_function, q_plus_direct_mc,
                        q_plus_radial_majorant, random_radial_mixture)
from .equilibrium import DistributionVec, conserved_moments, maxwellian
from .linear import (LinearizedOperator, Mollifier, audit_control_A, audit_control_B,
                     audit_control_Q, gaussian_bumps, nu_bounds, nu_ij, split_residual)
from .simulator import (SimConfig, bi_maxwellian, perturbation_initial, run,
                        zero_momentum_drifts)
from .thresholds import c_b, threshold_report

SUBCOMMANDS = ("threshold", "nu", "collide", "split-check", "majorant-check", "afunc", "audit",
               "simulate")


class NumericalFailure(RuntimeError):
    """Raised for blow-up, non-convergence or failed internal consistency checks."""


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


class Context:
    def __init__(self, args, cp):
        self.args = args
        self.cp = cp
        self.out = Path(args.out)
        self.mixture = cfgmod.build_mixture(cp)
        self.kernel = cfgmod.build_kernel(cp, self.mixture.n_species)
        self.weight = cfgmod.build_weight(cp)
        self.rng = np.random.default_rng(args.seed)

    def grid(self):
        return cfgmod.build_grid(self.cp, self.mixture)

    def sphere(self):
        return cfgmod.build_sphere(self.cp)

    def collision(self, grid, sphere):
        return CollisionOperator(self.kernel, self.mixture, grid, sphere,
                                 method=self.cp.get("grid", "method"),
                                 interp=self.cp.get("grid", "interp"))


def cmd_threshold(ctx: Context) -> dict:
    rep = threshold_report(ctx.mixture, ctx.kernel)
    _write_csv(ctx.out / "threshold.csv", ["k", "C_B"], zip(rep.ks, rep.values))
    lines = [f"k0 = {rep.k0}", f"recommended_k = {rep.recommended_k}",
             f"floor_binding = {str(rep.floor_binding).lower()}",
             f"argmax_species = {rep.argmax_species}"]
    (ctx.out / "threshold.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    out = rep.as_dict()
    out["C_B_weight"] = c_b(ctx.mixture, ctx.kernel, ctx.weight)
    return out


def cmd_nu(ctx: Context) -> dict:
    grid, sphere = ctx.grid(), ctx.sphere()
    n_pts = ctx.cp.getint("nu", "points")
    speeds = np.linspace(0.0, ctx.cp.getfloat("nu", "speed_max"), n_pts)
    pts = np.stack([speeds, np.zeros(n_pts), np.zeros(n_pts)], axis=1)
    N = ctx.mixture.n_species
    rows = []
    inside = True
    for i in range(N):
        for j in range(N):
            vals = nu_ij(ctx.kernel, ctx.mixture, i, j, pts, sphere, grid)
            lo, hi = nu_bounds(ctx.kernel, ctx.mixture, i, j, speeds)
            ok = (vals >= lo * 0.98) & (vals <= hi * 1.02)
            inside &= bool(ok.all())
            rows += [(i, j, s, v, a, b, o) for s, v, a, b, o in zip(speeds, vals, lo, hi, ok)]
    _write_csv(ctx.out / "nu.csv", ["i", "j", "speed", "nu", "lower", "upper", "within_2pct"], rows)
    return {"all_within_2pct": inside}


def cmd_collide(ctx: Context) -> dict:
    grid, sphere = ctx.grid(), ctx.sphere()
    init = ctx.cp.get("simulation", "initial")
    F = _initial_full(ctx, grid, init)
    op = ctx.collision(grid, sphere)
    gain, loss, info = op.q_full(F)
    Q = gain - loss
    Q.to_csv(ctx.out / "collide.csv")
    mass, mom, en = conserved_moments(ctx.mixture, Q)
    mu = maxwellian(ctx.mixture, grid)
    return {
        "initial": init,
        "moments_of_Q": {"mass": mass, "momentum": mom, "energy": en},
        "max_abs_Q_over_max_F": (np.abs(Q.values).max(axis=1) / np.abs(F.values).max(axis=1)),
        "max_mu": mu.values.max(axis=1),
        "escape_fraction": {f"{a}{b}": v for (a, b), v in info["escape_fraction"].items()},
        "methods": [[op.method_for(i, j) for j in range(ctx.mixture.n_species)]
                    for i in range(ctx.mixture.n_species)],
    }


def _initial_full(ctx, grid, init) -> DistributionVec:
    if init == "maxwellian":
        return maxwellian(ctx.mixture, grid)
    if init == "bimaxwellian":
        drift = cfgmod.floats(ctx.cp.get("simulation", "drift"))
        if ctx.mixture.n_species == 1:
            return bi_maxwellian(ctx.mixture, grid, [drift])
        return bi_maxwellian(ctx.mixture, grid, zero_momentum_drifts(ctx.mixture, drift))
    raise cfgmod.ConfigError(f"unknown full-F initial data {init!r}")


def cmd_split_check(ctx: Context) -> dict:
    grid, sphere = ctx.grid(), ctx.sphere()
    samples = gaussian_bumps(grid, ctx.mixture.n_species, ctx.cp.getint("split", "samples"), ctx.rng)
    F = np.stack([s.values for s in samples])
    rows = []
    worst = 0.0
    for d in cfgmod.floats(ctx.cp.get("split", "deltas")):
        op = LinearizedOperator(ctx.kernel, ctx.mixture, grid, Mollifier(d), sphere, interp="trilinear")
        A, B, nuf, L = op.split_apply(F, check=False)
        res = split_residual(A, B, nuf, L, F)
        worst = max(worst, float(res.max()))
        rows += [(k, d, r) for k, r in enumerate(res)]
    _write_csv(ctx.out / "split_check.csv", ["sample", "delta", "relative_residual"], rows)
    if worst > 1e-9:
        raise NumericalFailure(f"splitting identity residual {worst:.3e} exceeds 1e-9")
    return {"max_relative_residual": worst}


def cmd_majorant(ctx: Context) -> dict:
    cp = ctx.cp
    N = ctx.mixture.n_species
    radii = cfgmod.floats(cp.get("majorant", "radii"))
    n_mc = cp.getint("majorant", "mc_samples")
    rows = []
    ok_all = True
    for p in range(cp.getint("majorant", "pairs")):
        F = random_radial_mixture(ctx.rng)
        G = random_radial_mixture(ctx.rng)
        i, j = int(ctx.rng.integers(N)), int(ctx.rng.integers(N))
        for r in radii:
            maj = q_plus_radial_majorant(ctx.kernel, ctx.mixture, i, j, F, G, r)
            est, se = q_plus_direct_mc(ctx.kernel, ctx.mixture, i, j, F, G, r, n_mc,
                                       seed=int(ctx.rng.integers(2**63)))
            ok = abs(est) <= maj + 3.0 * se
            ok_all &= ok
            rows.append((p, i, j, r, est, se, maj, ok))
    _write_csv(ctx.out / "majorant.csv",
               ["pair", "i", "j", "r", "direct", "std_error", "majorant", "bounded"], rows)
    return {"all_bounded": bool(ok_all), "cases": len(rows)}


def cmd_afunc(ctx: Context) -> dict:
    pts = cfgmod.matrix(ctx.cp.get("afunc", "points"))
    rows = []
    for p in pts:
        if len(p) != 4:
            raise cfgmod.ConfigError(f"afunc points need 4 values, got {p}")
        rows.append((*p, a_function(*p)))
    _write_csv(ctx.out / "afunc.csv", ["a1", "a2", "a3", "a4", "A"], rows)
    return {"evaluations": len(rows)}


def cmd_audit(ctx: Context) -> dict:
    cp = ctx.cp
    grid, sphere = ctx.grid(), ctx.sphere()
    N = ctx.mixture.n_species
    n_s = cp.getint("audit", "samples")
    samples = gaussian_bumps(grid, N, n_s, ctx.rng)
    rows = []
    sweep = {}
    for d in cfgmod.floats(cp.get("audit", "deltas")):
        op = LinearizedOperator(ctx.kernel, ctx.mixture, grid, Mollifier(d), sphere)
        b = audit_control_B(ctx.kernel, ctx.mixture, op.moll, ctx.weight, samples, op=op)
        sweep[d] = b["quotient"]
        rows.append(("control_B", d, b["quotient"]))
    d0 = cp.getfloat("audit", "delta")
    op = LinearizedOperator(ctx.kernel, ctx.mixture, grid, Mollifier(d0), sphere)
    b0 = audit_control_B(ctx.kernel, ctx.mixture, op.moll, ctx.weight, samples, op=op)
    a0 = audit_control_A(ctx.kernel, ctx.mixture, op.moll, ctx.weight, cp.getfloat("audit", "beta"),
                         samples, op=op)
    rows += [("control_B", d0, b0["quotient"]), ("control_A", d0, a0["constant"])]
    pairs = list(zip(samples[0::2], samples[1::2]))
    k2p = cp.getfloat("audit", "kappa2_prime") if cp.has_option("audit", "kappa2_prime") else None
    q = audit_control_Q(ctx.kernel, ctx.mixture, ctx.weight, pairs,
                        collision=ctx.collision(grid, sphere), kappa2_prime=k2p)
    rows.append(("control_Q", float("nan"), q["constant"]))
    _write_csv(ctx.out / "audit.csv", ["audit", "delta", "value"], rows)
    cb = c_b(ctx.mixture, ctx.kernel, ctx.weight)
    slack = cp.getfloat("audit", "slack")
    return {
        "control_B": b0["quotient"], "control_B_delta_sweep": sweep, "C_B": cb, "slack": slack,
        "control_B_within_contract": b0["quotient"] <= cb + slack,
        "control_A": a0["constant"], "control_A_outside_support_max": a0["outside_support_max"],
        "control_Q": q["constant"], "c_w": q["c_w"], "flag": q["flag"],
    }


def cmd_simulate(ctx: Context) -> dict:
    cp = ctx.cp
    s = "simulation"
    conf = SimConfig(
        dt=cp.getfloat(s, "dt"), t_end=cp.getfloat(s, "t_end"), mode=cp.get(s, "mode"),
        integrator=cp.get(s, "integrator"), monitor_every=cp.getint(s, "monitor_every"),
        weight=ctx.weight, seed=ctx.args.seed, frequency=cp.get(s, "frequency"),
        fit_window=cp.getfloat(s, "fit_window"), delta=cp.getfloat(s, "delta"),
        nonlinear=cp.getboolean(s, "nonlinear"), moment_correction=cp.getboolean(s, "moment_correction"),
    )
    grid, sphere = ctx.grid(), ctx.sphere()
    init = cp.get(s, "initial")
    if conf.mode == "perturbation":
        if init != "perturbation":
            raise cfgmod.ConfigError("perturbation mode needs initial = perturbation")
        initial = perturbation_initial(ctx.mixture, grid, cp.getfloat(s, "amplitude"), ctx.rng,
                                       project=False)
    else:
        initial = _initial_full(ctx, grid, init)
    col = ctx.collision(grid, sphere)
    rep = run(conf, initial, ctx.kernel, ctx.mixture, sphere=sphere, collision=col,
              projection=cp.get(s, "projection"))
    rep.to_csv(ctx.out / "simulate.csv")
    out = rep.summary()
    if rep.aborted:
        raise NumericalFailure(rep.message, out)
    return out


HANDLERS = {
    "threshold": cmd_threshold, "nu": cmd_nu, "collide": cmd_collide, "split-check": cmd_split_check,
    "majorant-check": cmd_majorant, "afunc": cmd_afunc, "audit": cmd_audit, "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixboltz", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random generator")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a configuration value (repeatable)")
    p.add_argument("--grid-n", type=int, help="override [grid] n")
    p.add_argument("--sphere-degree", type=int, help="override [grid] sphere_degree")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _provenance(args, cp) -> dict:
    return {
        "tool": "mixboltz", "version": __version__, "subcommand": args.subcommand,
        "seed": args.seed, "config_path": args.config, "config": cfgmod.as_dict(cp),
        "python": platform.python_version(), "numpy": np.__version__,
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    overrides = list(args.set)
    if args.grid_n is not None:
        overrides.append(f"grid.n={args.grid_n}")
    if args.sphere_degree is not None:
        overrides.append(f"grid.sphere_degree={args.sphere_degree}")
    try:
        cp = cfgmod.load(args.config, overrides)
        ctx = Context(args, cp)
    except (cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        ctx.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    status = 0
    summary = {}
    try:
        summary = HANDLERS[args.subcommand](ctx)
    except (cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, EscapeError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        if len(exc.args) > 1 and isinstance(exc.args[1], dict):
            summary = exc.args[1]
        summary = {**summary, "failure": str(exc.args[0] if exc.args else exc)}
        status = 2
    payload = {"result": _jsonable(summary), "provenance": _jsonable(_provenance(args, cp))}
    with open(ctx.out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
