"""Command-line entry point.

Subcommands: run, sweep, selftest, calibrate-lambda, check-shear,
norms-report.  Exit status: 0 success, 1 validity/suite failure,
2 configuration error.  Config files are flat JSON objects mirroring the
solver-configuration field names; command-line flags override them.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .experiments import epsilon_sweep, selftest
from .grid import GridSpec, grid_for_horizon
from .shear import shear_audit_rows, shear_energy_check
from .solver import ConfigError, SolverConfig, run

GRID_KEYS = ("d", "N_h", "L", "M", "Y_max")
CONFIG_KEYS = (
    "eps", "delta", "lam", "dt", "t_max", "seed", "data_amp",
    "dealias_products", "nonlinear", "stop_after", "tail_limit",
    "radius_every",
)


def build_config(file_path: str | None, overrides: dict) -> SolverConfig:
    flat: dict = {}
    if file_path:
        with open(file_path, encoding="utf-8") as fh:
            flat.update(json.load(fh))
    flat.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(flat) - set(GRID_KEYS) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg_kwargs = {k: flat[k] for k in CONFIG_KEYS if k in flat}
    if "M" in flat or "Y_max" in flat:
        grid = GridSpec(**{k: flat[k] for k in GRID_KEYS if k in flat})
    else:
        # size the vertical domain for the expected crossing horizon
        probe = SolverConfig(**cfg_kwargs)
        t_pred = flat.get("t_max") or (
            (probe.delta / (2.0 * probe.lam * probe.eps)) ** (4.0 / 3.0)
            if probe.eps > 0
            else 20.0
        )
        grid = grid_for_horizon(
            t_pred,
            d=flat.get("d", 2),
            N_h=flat.get("N_h", 128),
            L=flat.get("L", 16.0 * np.pi),
        )
    cfg = SolverConfig(grid=grid, **cfg_kwargs)
    cfg.validate()
    return cfg


def _out_dir(args, default_name: str) -> str:
    root = os.environ.get("PRANDTL_LAB_OUTPUT_ROOT", "out")
    path = args.out if args.out else os.path.join(root, default_name)
    os.makedirs(path, exist_ok=True)
    return path


def _check_overwrite(path: str, marker: str, force: bool) -> None:
    target = os.path.join(path, marker)
    if os.path.exists(target) and not force:
        raise ConfigError(f"{target} exists; use --force to overwrite")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--out", help="output directory (default under $PRANDTL_LAB_OUTPUT_ROOT)")
    p.add_argument("--force", action="store_true", help="overwrite existing results")
    p.add_argument("-v", "--verbose", action="store_true")
    for key, typ in (
        ("epsilon", float), ("delta", float), ("lam", float), ("dt", float),
        ("t-max", float), ("seed", int), ("d", int), ("N-h", int), ("L", float),
        ("M", int), ("Y-max", float), ("stop-after", str),
    ):
        p.add_argument(f"--{key}", type=typ, dest=key.replace("-", "_"))


def _overrides(args) -> dict:
    mapping = {
        "eps": args.epsilon, "delta": args.delta, "lam": args.lam, "dt": args.dt,
        "t_max": args.t_max, "seed": args.seed, "d": args.d, "N_h": args.N_h,
        "L": args.L, "M": args.M, "Y_max": args.Y_max, "stop_after": args.stop_after,
    }
    return mapping


def cmd_run(args) -> int:
    cfg = build_config(args.config, _overrides(args))
    out = _out_dir(args, "run")
    _check_overwrite(out, "run.json", args.force)
    rec = run(cfg)
    rec.save(out, force=True)
    if args.verbose or True:
        print(f"run: t_half={rec.t_half} t_star={rec.t_star} valid={rec.valid} -> {out}")
    return 0 if rec.valid else 1


def cmd_sweep(args) -> int:
    cfg = build_config(args.config, _overrides(args))
    eps_list = [float(s) for s in args.epsilons.split(",")]
    out = _out_dir(args, "sweep")
    _check_overwrite(out, "sweep.csv", args.force)
    sweep = epsilon_sweep(cfg, eps_list, out_dir=out, force=True)
    if sweep.fit is not None:
        print(
            f"sweep: alpha={sweep.fit.alpha:.4f} r2={sweep.fit.r2:.5f} "
            f"T_half={['%.3f' % (t if t is not None else np.nan) for t in sweep.t_half]} -> {out}"
        )
    else:
        print(f"sweep: fit unavailable (valid runs: {sum(sweep.valid)}) -> {out}")
    return 0 if not sweep.degraded else 1


def cmd_selftest(args) -> int:
    results, ok = selftest(fault=args.fault)
    report = [dataclasses.asdict(r) for r in results]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.measured}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "selftest.json"), "w", encoding="utf-8") as fh:
            json.dump({"results": report, "passed": ok}, fh, indent=2, default=str)
    return 0 if ok else 1


def cmd_calibrate_lambda(args) -> int:
    cfg = build_config(args.config, _overrides(args))
    lams = [float(s) for s in args.lambdas.split(",")]
    out = _out_dir(args, "calibrate-lambda")
    _check_overwrite(out, "lambda.csv", args.force)
    rows = []
    for lam in lams:
        rec = run(dataclasses.replace(cfg, lam=lam))
        rows.append((lam, rec.t_half, rec.t_star, rec.valid))
        print(f"lambda={lam}: t_half={rec.t_half} t_star={rec.t_star} valid={rec.valid}")
    with open(os.path.join(out, "lambda.csv"), "w", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(cfg.echo()) + "\n")
        fh.write("lambda,T_half_band,T_star,valid\n")
        for lam, th, ts, ok in rows:
            fh.write(f"{lam},{'' if th is None else th},{'' if ts is None else ts},{int(ok)}\n")
    spread = [r[1] for r in rows if r[1] is not None]
    if len(spread) >= 2:
        print(f"lifespan sensitivity: T_half ratio max/min = {max(spread)/min(spread):.3f}")
    return 0


def cmd_check_shear(args) -> int:
    out = _out_dir(args, "check-shear")
    _check_overwrite(out, "shear_audit.csv", args.force)
    eps = args.epsilon if args.epsilon is not None else 1.0
    spec = GridSpec(d=2, N_h=16, L=16.0 * np.pi, M=args.M or 513, Y_max=args.Y_max or 32.0)
    times = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]
    with open(os.path.join(out, "shear_audit.csv"), "w", encoding="utf-8") as fh:
        fh.write("t,y,us,dus,epsi_dus\n")
        for row in shear_audit_rows(spec, times, eps):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
    horizons = [float(s) for s in args.horizons.split(",")]
    ratios = {}
    for T in horizons:
        rep = shear_energy_check(T, eps)
        ratios[T] = rep.ratio
        print(f"I({T:g})/eps^2 = {rep.ratio:.6f} (converged: {rep.converged})")
    if len(horizons) >= 2:
        a, b = sorted(horizons)[-2:]
        print(f"plateau ratio I({b:g})/I({a:g}) = {ratios[b]/ratios[a]:.4f}")
        print(f"empirical C of the dissipation bound: sup ratio = {max(ratios.values()):.4f}")
    with open(os.path.join(out, "energy.json"), "w", encoding="utf-8") as fh:
        json.dump({"eps": eps, "ratios": {str(k): v for k, v in ratios.items()}}, fh, indent=2)
    return 0


def cmd_norms_report(args) -> int:
    """Recompute Chemin-Lerner accumulators from a run's shell series."""
    run_dir = args.run_dir
    shells_path = os.path.join(run_dir, "shells.csv")
    traces_path = os.path.join(run_dir, "traces.csv")
    for p in (shells_path, traces_path):
        if not os.path.exists(p):
            raise ConfigError(f"missing {p}")
    with open(shells_path, encoding="utf-8") as fh:
        header = fh.readline()
        meta = fh.readline()
    ks = [int(s) for s in meta.rsplit("block indices:", 1)[1].split(",")]
    data = np.loadtxt(shells_path, delimiter=",", skiprows=2)
    traces = np.loadtxt(traces_path, delimiter=",", skiprows=2)
    t = data[:, 0]
    nb = len(ks)
    sh_w = data[:, 1 : 1 + nb]
    sh_dyw = data[:, 1 + nb : 1 + 2 * nb]
    theta, band, rate = traces[:, 1], traces[:, 3], traces[:, 2]
    d = json.loads(header.split("# config: ", 1)[1])["grid"]["d"]
    s = 0.5 * (d - 1)
    two_ks = 2.0 ** (np.asarray(ks, dtype=float) * s)
    out_path = args.out or os.path.join(run_dir, "norms_report.csv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(header.rstrip("\n") + "\n")
        fh.write("t,bnorm_w,bnorm_dyw,cl_inf_w,cl2_dyw,theta,band\n")
        run_max = np.zeros(nb)
        run_int = np.zeros(nb)
        for i in range(len(t)):
            np.maximum(run_max, sh_w[i], out=run_max)
            if i > 0:
                run_int += 0.5 * (t[i] - t[i - 1]) * (sh_dyw[i] ** 2 + sh_dyw[i - 1] ** 2)
            bn_w = float(np.sum(two_ks * sh_w[i]))
            bn_dyw = float(np.sum(two_ks * sh_dyw[i]))
            cl_inf = float(np.sum(two_ks * run_max))
            cl2 = float(np.sum(two_ks * np.sqrt(run_int)))
            fh.write(f"{t[i]},{bn_w},{bn_dyw},{cl_inf},{cl2},{theta[i]},{band[i]}\n")
    print(f"norms report -> {out_path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prandtl-lab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="single solver run")
    _add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="epsilon sweep with lifespan fit")
    _add_common(p)
    p.add_argument("--epsilons", default="0.08,0.04,0.02,0.01")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("selftest", help="run all property suites")
    p.add_argument("--fault", choices=["phi_perturb", "cfl"], help="inject a fault (testing)")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("calibrate-lambda", help="lifespan sensitivity to lambda")
    _add_common(p)
    p.add_argument("--lambdas", default="0.5,1,2,4")
    p.set_defaults(fn=cmd_calibrate_lambda)

    p = sub.add_parser("check-shear", help="shear audit CSV and energy check")
    _add_common(p)
    p.add_argument("--horizons", default="10,100")
    p.set_defaults(fn=cmd_check_shear)

    p = sub.add_parser("norms-report", help="recompute norm accumulators from a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_norms_report)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError, FileExistsError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
