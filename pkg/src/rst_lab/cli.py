"""Command-line entry point: orchestration, seeding, and file exports.

Exit codes are frozen: 0 success, 1 check/assertion failure, 2 config error.
Every command echoes its fully-resolved config into ``manifest.json`` next to
its CSV artifacts; manifests carry no timestamps, so identical configs yield
byte-identical output trees.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from rst_lab import experiments
from rst_lab.exploration import (
    Constants,
    explore,
    write_renewals_csv,
    write_trace_csv,
)
from rst_lab.ppp import DUPLICATE_REDRAWS, LazyField, RegionSpec, mix64, realize_cells
from rst_lab.rst_core import (
    TIE_EVENTS,
    RstTree,
    build_rst,
    check_planarity,
    in_degree_histogram,
    straightness_profile,
    write_crossings_csv,
)

_ENV_OUTDIR = "RST_LAB_OUTDIR"

DEFAULTS = {
    "dim": 2,
    "radius": 30.0,
    "seed": 1,
    "start_norm": 100.0,
    "kappa": 2.0,
    "epsilon": 0.25,
    "lam": None,
    "delta": None,
    "trials": 500,
    "workers": 1,
    "x_norm": 10.0,
    "thresholds": "0.5,1,2",
    "norms": "50,100,200,400",
    "instances": 100000,
    "seeds": 100,
    "points": None,
    "stop": "origin",
}


def _resolve(args: argparse.Namespace) -> dict:
    """defaults -> config file -> explicit flags, later layers winning."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            for k, v in tomllib.load(fh).items():
                cfg[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if k in ("func", "config", "command", "kind", "out"):
            continue
        if v is not None:
            cfg[k] = v
    return cfg


def _constants(cfg: dict) -> Constants:
    return Constants(
        kappa=float(cfg["kappa"]),
        epsilon=float(cfg["epsilon"]),
        lam=None if cfg["lam"] is None else float(cfg["lam"]),
        delta=None if cfg["delta"] is None else float(cfg["delta"]),
    )


def _floats(spec) -> list:
    if isinstance(spec, str):
        return [float(v) for v in spec.split(",") if v]
    return [float(v) for v in spec]


def _out_dir(args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None) or os.environ.get(_ENV_OUTDIR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, cfg: dict, results: dict) -> None:
    # Wall clock stays out of the file so identical configs give identical bytes;
    # main() prints it to stderr instead.
    record = experiments.ExperimentRecord(
        config={k: v for k, v in sorted(cfg.items())},
        content_hash=experiments.config_hash({"command": command, **cfg}),
        rows=[f"{k}={results[k]}" for k in sorted(results)],
        wall_clock=0.0,
    )
    payload = {
        "command": command,
        "config": record.config,
        "results": results,
        "summary_rows": record.rows,
        "config_hash": record.content_hash,
        "diagnostics": {
            "duplicate_redraws": DUPLICATE_REDRAWS.value,
            "tie_events": TIE_EVENTS.value,
        },
    }
    with open(out / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _sampled_points(cfg: dict):
    field = LazyField(dimension=int(cfg["dim"]), global_seed=int(cfg["seed"]))
    return realize_cells(field, RegionSpec("ball", r_outer=float(cfg["radius"])))


def cmd_sample(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    pts = _sampled_points(cfg)
    pts.to_csv(out / "points.csv")
    _write_manifest(out, "sample", cfg, {"count": len(pts)})
    print(f"sample: {len(pts)} points -> {out / 'points.csv'}")
    return 0


def cmd_build(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    if cfg.get("points"):
        from rst_lab.ppp import PointSet

        pts = PointSet.from_csv(cfg["points"])
    else:
        pts = _sampled_points(cfg)
        pts.to_csv(out / "points.csv")
    tree = build_rst(pts)
    tree.validate()
    tree.to_csv(out / "tree.csv")
    hist = in_degree_histogram(tree)
    _write_manifest(
        out,
        "build",
        cfg,
        {"count": len(pts), "max_in_degree": max(hist), "in_degree_histogram": hist},
    )
    print(f"build: {len(pts)} vertices -> {out / 'tree.csv'}")
    return 0


def cmd_explore(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    d = int(cfg["dim"])
    pi0 = np.zeros(d)
    pi0[0] = float(cfg["start_norm"])
    field = LazyField(dimension=d, global_seed=int(cfg["seed"]))
    constants = _constants(cfg)
    path, trace = explore(pi0, field, constants, stop=str(cfg["stop"]))
    write_trace_csv(out / "trace.csv", path, trace)
    write_renewals_csv(out / "renewals.csv", path, trace)
    _write_manifest(
        out,
        "explore",
        cfg,
        {
            "steps": trace.n_steps,
            "theta": trace.theta,
            "i_theta": trace.i_theta,
            "renewal_count": max(len(trace.w) - 2, 0),
            "block_count": len(trace.w) - 1,
            "r_theta": float(trace.R[trace.theta]),
        },
    )
    print(f"explore: {trace.n_steps} steps, theta={trace.theta} -> {out / 'trace.csv'}")
    return 0


def cmd_straightness(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    pts = _sampled_points(cfg)
    tree = build_rst(pts)
    profile = straightness_profile(tree)
    profile.to_csv(out / "straightness.csv")
    tree.to_csv(out / "tree.csv")
    pts.to_csv(out / "points.csv")
    eps = float(cfg["epsilon"])
    radius = float(cfg["radius"])
    bands = []
    hi = radius
    while hi / 2 >= 1.0 and len(bands) < 3:
        bands.append((hi / 2, hi))
        hi /= 2
    medians = {f"[{lo:g},{hi:g})": profile.band_median(lo, hi) for lo, hi in reversed(bands)}
    _write_manifest(
        out,
        "straightness",
        cfg,
        {
            "count": len(pts),
            "violations": int(profile.violations(eps).size),
            "band_medians": medians,
        },
    )
    print(f"straightness: {len(pts)} vertices -> {out / 'straightness.csv'}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    kind = args.kind
    seed = int(cfg["seed"])
    workers = int(cfg["workers"])
    ok = True
    if kind == "psi-tail":
        est = experiments.estimate_psi_tail(
            int(cfg["dim"]),
            float(cfg["x_norm"]),
            _floats(cfg["thresholds"]),
            int(cfg["trials"]),
            seed,
            workers=workers,
            check=False,
        )
        est.to_csv(out / "psi_tail.csv")
        over = est.survival > est.meta["bound"] + est.half_width
        ok = not bool(over.any())
        results = {
            "pass": ok,
            "survival": est.survival.tolist(),
            "bound": est.meta["bound"].tolist(),
        }
    elif kind == "deviation":
        rep = experiments.estimate_deviation_tail(
            int(cfg["dim"]),
            _floats(cfg["norms"]),
            float(cfg["epsilon"]),
            int(cfg["trials"]),
            seed,
            constants=_constants(cfg),
            workers=workers,
        )
        rep.to_csv(out / "deviation.csv")
        results = {
            "slope": rep.slope,
            "exceedance": rep.exceedance.tolist(),
            "median_dev": rep.median_dev.tolist(),
        }
    elif kind == "spacing":
        rep = experiments.estimate_spacing_tails(
            int(cfg["dim"]),
            float(cfg["start_norm"]),
            _constants(cfg),
            int(cfg["trials"]),
            seed,
            workers=workers,
        )
        rep.tau_gaps.to_csv(out / "tau_gaps.csv")
        rep.w_gaps.to_csv(out / "w_gaps.csv")
        rep.block_lengths.to_csv(out / "block_lengths.csv")
        rep.r_theta.to_csv(out / "r_theta.csv")
        ok = not rep.insufficient
        results = {
            "pass": ok,
            "tau_slope": rep.tau_slope,
            "r_theta_shape_corr": rep.r_theta_shape_corr,
            "gap_count": rep.tau_gaps.trials,
        }
    elif kind == "symmetry":
        rep = experiments.run_symmetry_campaign(
            int(cfg["dim"]),
            float(cfg["start_norm"]),
            int(cfg["trials"]),
            seed,
            workers=workers,
        )
        ok = rep.exact_pass and not rep.insufficient and rep.sign_test_p >= 0.01
        results = {
            "pass": ok,
            "trials": rep.trials,
            "applicable": rep.applicable,
            "max_negation_error": rep.max_negation_error,
            "sign_test_p": rep.sign_test_p,
        }
        with open(out / "symmetry.csv", "w", encoding="ascii") as fh:
            fh.write("perp_first_coord\n")
            for v in rep.first_coords:
                fh.write("%.17g\n" % v)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(kind)
    _write_manifest(out, f"experiment {kind}", cfg, results)
    print(f"experiment {kind}: {'pass' if ok else 'FAIL'} -> {out}")
    return 0 if ok else 1


def cmd_check(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(args)
    kind = args.kind
    ok = True
    if kind == "lemmas":
        reports = {}
        for lemma in ("empty-ball", "flatness", "radial-progress"):
            rep = experiments.run_lemma_fuzz(lemma, int(cfg["instances"]), int(cfg["seed"]), int(cfg["dim"]))
            reports[lemma] = {
                "violations": rep.violations,
                "acceptance_rate": rep.acceptance_rate,
                "first_violation": rep.first_violation,
            }
            ok &= rep.violations == 0
        _write_manifest(out, "check lemmas", cfg, {"pass": ok, "lemmas": reports})
    elif kind == "planarity":
        crossings_total = 0
        for k in range(int(cfg["seeds"])):
            field = LazyField(dimension=2, global_seed=mix64(int(cfg["seed"]), k))
            pts = realize_cells(field, RegionSpec("ball", r_outer=float(cfg["radius"])))
            tree = build_rst(pts)
            crossings = check_planarity(tree)
            crossings_total += len(crossings)
            if crossings:
                write_crossings_csv(out / f"crossings_seed{k}.csv", crossings)
        ok = crossings_total == 0
        _write_manifest(out, "check planarity", cfg, {"pass": ok, "crossings": crossings_total})
    elif kind == "tree":
        if cfg.get("points") and cfg.get("tree"):
            from rst_lab.ppp import PointSet

            pts = PointSet.from_csv(cfg["points"])
            tree = RstTree.from_csv(cfg["tree"], pts)
        else:
            pts = _sampled_points(cfg)
            tree = build_rst(pts)
        try:
            tree.validate()
            rebuilt = build_rst(pts)
            if not np.array_equal(rebuilt.parent_ids, tree.parent_ids):
                raise AssertionError("parent map disagrees with a fresh construction")
        except AssertionError as exc:
            ok = False
            print(f"tree check failed: {exc}", file=sys.stderr)
        _write_manifest(out, "check tree", cfg, {"pass": ok, "count": len(pts)})
    else:  # pragma: no cover
        raise ValueError(kind)
    print(f"check {kind}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file; flags override file values")
    p.add_argument("--out", help=f"output directory (default: ${_ENV_OUTDIR} or .)")
    p.add_argument("--dim", type=int, help="ambient dimension d >= 2 (default 2)")
    p.add_argument("--seed", type=int, help="64-bit experiment seed (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rst-lab",
        description="Radial spanning tree laboratory: sampling, construction, "
        "exploration instrumentation, and Monte Carlo tail experiments.",
        epilog="Default constants: kappa=2.0, epsilon=0.25, lambda and delta "
        "from their explicit formulas; symmetry campaigns use kappa=1.05, "
        "lambda=0.25 so pseudo-renewals are observable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a Poisson ball and export points.csv")
    _add_common(p)
    p.add_argument("--radius", type=float, help="ball radius (default 30)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("build", help="build the tree over a sampled or imported point set")
    _add_common(p)
    p.add_argument("--radius", type=float, help="ball radius (default 30)")
    p.add_argument("--points", help="import points from CSV instead of sampling")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("explore", help="run one instrumented exploration and export the trace")
    _add_common(p)
    p.add_argument("--start-norm", dest="start_norm", type=float, help="||pi0|| (default 100)")
    p.add_argument("--kappa", type=float, help="good-step width threshold (default 2.0)")
    p.add_argument("--epsilon", type=float, help="deviation exponent parameter (default 0.25)")
    p.add_argument("--lam", type=float, help="override the width-vs-radius constant")
    p.add_argument("--delta", type=float, help="override the progress constant")
    p.add_argument("--stop", choices=("origin", "theta"), help="stop at the origin or at theta")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("straightness", help="build a tree and export its subtree-angle profile")
    _add_common(p)
    p.add_argument("--radius", type=float, help="ball radius (default 30)")
    p.add_argument("--epsilon", type=float, help="violation exponent parameter (default 0.25)")
    p.set_defaults(func=cmd_straightness)

    p = sub.add_parser("experiment", help="Monte Carlo tail experiments")
    p.add_argument("kind", choices=("psi-tail", "deviation", "spacing", "symmetry"))
    _add_common(p)
    p.add_argument("--trials", type=int, help="trials per arm/norm (default 500)")
    p.add_argument("--workers", type=int, help="worker processes; any count reproduces workers=1")
    p.add_argument("--x-norm", dest="x_norm", type=float, help="||x|| for psi-tail (default 10)")
    p.add_argument("--thresholds", help="comma list of thresholds (default 0.5,1,2)")
    p.add_argument("--norms", help="comma list of start norms (default 50,100,200,400)")
    p.add_argument("--epsilon", type=float, help="deviation exponent parameter (default 0.25)")
    p.add_argument("--start-norm", dest="start_norm", type=float, help="||pi0|| (default 100)")
    p.add_argument("--kappa", type=float, help="good-step width threshold (default 2.0)")
    p.add_argument("--lam", type=float, help="override the width-vs-radius constant")
    p.add_argument("--delta", type=float, help="override the progress constant")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check", help="deterministic verification campaigns")
    p.add_argument("kind", choices=("lemmas", "planarity", "tree"))
    _add_common(p)
    p.add_argument("--instances", type=int, help="fuzz instances per lemma (default 100000)")
    p.add_argument("--seeds", type=int, help="number of seeds for planarity (default 100)")
    p.add_argument("--radius", type=float, help="ball radius (default 30)")
    p.add_argument("--points", help="validate an imported tree: its points CSV")
    p.add_argument("--tree", help="validate an imported tree: its child,parent CSV")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"wall clock: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
