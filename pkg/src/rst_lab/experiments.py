"""Monte Carlo harness: tail estimators, lemma fuzz campaigns, couplings.

Every experiment is a deterministic fold over per-trial results, where each
trial is a pure function of (seed, trial index).  Trials shard across worker
processes in fixed chunks keyed by trial index, so the worker count cannot
change any output byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from rst_lab import geom
from rst_lab.exploration import Constants, deviation_sup, explore, run_coupling
from rst_lab.geom import ball_volume
from rst_lab.ppp import LazyField, RegionSpec, mix64, sample_ball, stream_generator
from rst_lab.rst_core import StaticGrid

# Constants used by the symmetry campaign: the renewal event must be common
# enough to observe, which needs a small kappa (lens volumes shrink) and a
# loose width threshold; the negation property under test holds for any
# kappa > 1 and lam > 0.
SYMMETRY_CAMPAIGN_CONSTANTS = Constants(kappa=1.05, lam=0.25)


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def run_chunked(worker, args, n: int, workers: int = 1, chunk: int = 64) -> list:
    """Apply ``worker(args, start, stop)`` over index chunks, folding in order."""
    spans = list(_chunks(n, chunk))
    if workers <= 1:
        parts = [worker(args, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(worker, [args] * len(spans), *zip(*spans)))
    out = []
    for p in parts:
        out.extend(p)
    return out


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


@dataclass
class ExperimentRecord:
    """Reproducibility envelope: config echo, input hash, summary rows."""

    config: dict
    content_hash: str
    rows: list
    wall_clock: float


@dataclass
class TailEstimate:
    """Empirical survival function with 3-sigma binomial half-widths."""

    thresholds: np.ndarray
    survival: np.ndarray
    trials: int
    half_width: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.survival = np.asarray(self.survival, dtype=float)
        if self.half_width is None:
            p = self.survival
            self.half_width = 3.0 * np.sqrt(p * (1.0 - p) / max(self.trials, 1))
        if np.any(self.survival < 0) or np.any(self.survival > 1):
            raise ValueError("survival probabilities must lie in [0, 1]")
        order = np.argsort(self.thresholds)
        if np.any(np.diff(self.survival[order]) > 1e-15):
            raise ValueError("survival must be non-increasing in the threshold")

    def to_csv(self, path) -> None:
        bound = self.meta.get("bound")
        header = "threshold,survival,half_width,trials" + (",bound" if bound is not None else "")
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header + "\n")
            for i, t in enumerate(self.thresholds):
                row = "%.17g,%.17g,%.17g,%d" % (t, self.survival[i], self.half_width[i], self.trials)
                if bound is not None:
                    row += ",%.17g" % bound[i]
                fh.write(row + "\n")


# ---------------------------------------------------------------------------
# Single-step tail of ||psi(x) - x||
# ---------------------------------------------------------------------------


def psi_tail_bound(d: int, t: float, x_norm: float) -> float:
    """Analytic survival bound: exp(-(t/2)^d |B(0,1)|), exactly 0 for t >= ||x||."""
    if t >= x_norm:
        return 0.0
    return math.exp(-((t / 2.0) ** d) * ball_volume(d, 1.0))


def _psi_tail_chunk(args, start: int, stop: int) -> list:
    d, x_norm, seed = args
    x = np.zeros(d)
    x[0] = x_norm
    out = []
    vol = ball_volume(d, x_norm)
    for i in range(start, stop):
        rng = stream_generator(seed, 0x517A, i)
        n = int(rng.poisson(vol))
        g = rng.standard_normal((n, d))
        norms = np.linalg.norm(g, axis=1)
        norms[norms == 0] = 1.0
        pts = g * (x_norm * rng.uniform(0.0, 1.0, n) ** (1.0 / d) / norms)[:, None]
        dist = x_norm if n == 0 else min(x_norm, float(np.sqrt(((pts - x) ** 2).sum(axis=1).min())))
        out.append(dist)
    return out


def estimate_psi_tail(
    d: int,
    x_norm: float,
    thresholds,
    trials: int,
    seed: int,
    workers: int = 1,
    check: bool = True,
) -> TailEstimate:
    """Empirical survival of the step length from x = x_norm * e1.

    When ``check`` is set, raises AssertionError naming any threshold where
    the empirical survival exceeds the analytic bound plus its half-width.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    thresholds = np.sort(np.asarray(thresholds, dtype=float))
    dists = np.asarray(run_chunked(_psi_tail_chunk, (d, x_norm, seed), trials, workers, 256))
    survival = np.array([(dists > t).mean() for t in thresholds])
    bound = np.array([psi_tail_bound(d, t, x_norm) for t in thresholds])
    est = TailEstimate(
        thresholds,
        survival,
        trials,
        meta={"d": d, "x_norm": x_norm, "seed": seed, "bound": bound},
    )
    if check:
        bad = [
            f"t={t}: survival {s:.4f} > bound {b:.4f} + {h:.4f}"
            for t, s, b, h in zip(thresholds, survival, bound, est.half_width)
            if s > b + h
        ]
        if bad:
            raise AssertionError("psi tail bound violated at " + "; ".join(bad))
    return est


# ---------------------------------------------------------------------------
# Deviation of exploration paths from the radial axis
# ---------------------------------------------------------------------------


def _eager_ball_grid(field: LazyField, radius: float) -> StaticGrid:
    from rst_lab.ppp import _candidate_cells  # same cell enumeration as realize_cells

    cells = _candidate_cells(field, RegionSpec("ball", r_outer=radius))
    pts, _ = field.realize_block(cells)
    if pts.shape[0]:
        pts = pts[np.einsum("ij,ij->i", pts, pts) < radius * radius]
    return StaticGrid(pts)


def _deviation_chunk(args, start: int, stop: int) -> list:
    d, norm, constants, seed, norm_index = args
    pi0 = np.zeros(d)
    pi0[0] = norm
    out = []
    for i in range(start, stop):
        field = LazyField(dimension=d, global_seed=mix64(seed, 0xDE7, norm_index, i))
        if d == 2:
            source = _eager_ball_grid(field, norm)
        else:
            source = field
        path, _ = explore(pi0, source, constants)
        out.append(deviation_sup(path, pi0))
    return out


@dataclass
class DeviationReport:
    norms: np.ndarray
    exceedance: np.ndarray
    half_width: np.ndarray
    median_dev: np.ndarray
    thresholds: np.ndarray
    trials: int
    epsilon: float
    slope: float
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("norm,trials,threshold,exceedance,half_width,median_dev\n")
            for i, nv in enumerate(self.norms):
                fh.write(
                    "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n"
                    % (
                        nv,
                        self.trials,
                        self.thresholds[i],
                        self.exceedance[i],
                        self.half_width[i],
                        self.median_dev[i],
                    )
                )


def estimate_deviation_tail(
    d: int,
    start_norms,
    epsilon: float,
    trials: int,
    seed: int,
    constants: Constants | None = None,
    workers: int = 1,
) -> DeviationReport:
    """Exceedance rates of sup ||perp(pi0, pi_n)|| over ||pi0||^(1/2+eps), per start norm.

    Also reports the per-norm median deviation and the least-squares slope of
    log(median) against log(norm).  ``epsilon`` only shapes the thresholds
    (the walk itself does not depend on it), so generous exponents >= 1/2 are
    allowed here and simply drive the exceedance to zero.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials per norm")
    if epsilon <= -0.5:
        raise ValueError("threshold exponent 1/2 + epsilon must be positive")
    if constants is None:
        constants = Constants()
    norms = np.asarray(sorted(start_norms), dtype=float)
    exceed = np.empty(norms.size)
    hw = np.empty(norms.size)
    med = np.empty(norms.size)
    thr = norms ** (0.5 + epsilon)
    for j, nv in enumerate(norms):
        devs = np.asarray(
            run_chunked(_deviation_chunk, (d, float(nv), constants, seed, j), trials, workers, 16)
        )
        p = float((devs > thr[j]).mean())
        exceed[j] = p
        hw[j] = 3.0 * math.sqrt(p * (1.0 - p) / trials)
        med[j] = float(np.median(devs))
    slope = float(np.polyfit(np.log(norms), np.log(med), 1)[0]) if norms.size > 1 else math.nan
    return DeviationReport(
        norms=norms,
        exceedance=exceed,
        half_width=hw,
        median_dev=med,
        thresholds=thr,
        trials=trials,
        epsilon=epsilon,
        slope=slope,
        meta={"d": d, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Spacing and terminal-radius tails
# ---------------------------------------------------------------------------


def _spacing_chunk(args, start: int, stop: int) -> list:
    d, start_norm, constants, seed = args
    pi0 = np.zeros(d)
    pi0[0] = start_norm
    out = []
    for i in range(start, stop):
        field = LazyField(dimension=d, global_seed=mix64(seed, 0x5BAC, i))
        path, trace = explore(pi0, field, constants, stop="theta")
        blocks = [float(trace.step_lens[a:b].sum()) for a, b in zip(trace.w[:-1], trace.w[1:])]
        out.append(
            (
                trace.tau_gaps().tolist(),
                trace.w_gaps().tolist(),
                blocks,
                float(trace.R[trace.theta]),
            )
        )
    return out


@dataclass
class SpacingReport:
    tau_gaps: TailEstimate
    w_gaps: TailEstimate
    block_lengths: TailEstimate
    r_theta: TailEstimate
    tau_by_index: dict
    tau_slope: float
    r_theta_shape_corr: float
    insufficient: bool
    meta: dict = field(default_factory=dict)


def _integer_gap_tail(gaps: np.ndarray, meta: dict) -> TailEstimate:
    kmax = int(gaps.max()) if gaps.size else 1
    ks = np.arange(0, kmax + 1, dtype=float)
    surv = np.array([(gaps > k).mean() for k in ks])
    return TailEstimate(ks, surv, int(gaps.size), meta=meta)


def _quantile_tail(values: np.ndarray, meta: dict, n_thresholds: int = 12) -> TailEstimate:
    if values.size == 0:
        return TailEstimate(np.array([0.0]), np.array([0.0]), 0, meta=meta)
    qs = np.unique(np.quantile(values, np.linspace(0.05, 0.98, n_thresholds)))
    surv = np.array([(values > q).mean() for q in qs])
    return TailEstimate(qs, surv, int(values.size), meta=meta)


def estimate_spacing_tails(
    d: int,
    start_norm: float,
    constants: Constants | None = None,
    trials: int = 2000,
    seed: int = 0,
    workers: int = 1,
) -> SpacingReport:
    """Pooled tails of good-step gaps, decomposition gaps, block lengths, R_Theta.

    The good-step bound is conditional and uniform in the block index, which
    licenses pooling for an upper-envelope check; gaps are also stratified by
    block index 0..2 to expose non-uniformity.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if constants is None:
        constants = Constants()
    rows = run_chunked(_spacing_chunk, (d, start_norm, constants, seed), trials, workers, 64)
    tau_all = np.asarray([g for row in rows for g in row[0]], dtype=float)
    w_all = np.asarray([g for row in rows for g in row[1]], dtype=float)
    blocks = np.asarray([b for row in rows for b in row[2]], dtype=float)
    r_theta = np.asarray([row[3] for row in rows], dtype=float)
    meta = {"d": d, "start_norm": start_norm, "seed": seed, "kappa": constants.kappa}
    tau_est = _integer_gap_tail(tau_all, {**meta, "kind": "tau_gap"})
    by_index = {}
    for idx in (0, 1, 2):
        vals = np.asarray([row[0][idx] for row in rows if len(row[0]) > idx], dtype=float)
        if vals.size:
            by_index[idx] = _integer_gap_tail(vals, {**meta, "kind": f"tau_gap_n{idx}"})
    pos = (tau_est.survival > 0) & (tau_est.thresholds > 0)
    tau_slope = (
        float(np.polyfit(tau_est.thresholds[pos], np.log(tau_est.survival[pos]), 1)[0])
        if pos.sum() > 1
        else math.nan
    )
    r_est = _quantile_tail(r_theta, {**meta, "kind": "r_theta"})
    # Shape statistic on the registered measurement window: thresholds at the
    # 10%..60% data quantiles, where the terminal-radius law has resolvable
    # decay at simulation scales (the upper boundary layer is degenerate).
    if r_theta.size >= 50:
        win = np.unique(np.quantile(r_theta, np.linspace(0.10, 0.60, 8)))
        surv = np.array([(r_theta > q).mean() for q in win])
        ok = surv > 0
        xs = win[ok] ** (d / (d + 1.0))
        corr = float(np.corrcoef(xs, np.log(surv[ok]))[0, 1]) if ok.sum() > 2 else math.nan
    else:
        corr = math.nan
    return SpacingReport(
        tau_gaps=tau_est,
        w_gaps=_integer_gap_tail(w_all, {**meta, "kind": "w_gap"}),
        block_lengths=_quantile_tail(blocks, {**meta, "kind": "block_length"}),
        r_theta=r_est,
        tau_by_index=by_index,
        tau_slope=tau_slope,
        r_theta_shape_corr=corr,
        insufficient=tau_all.size < 50,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Deterministic-lemma fuzz campaigns
# ---------------------------------------------------------------------------

_LEMMAS = {
    "empty-ball": (
        geom.empty_ball_instances,
        lambda inst: geom.check_empty_ball_batch(inst["ell"], inst["c"], inst["rho"]),
    ),
    "flatness": (
        geom.flatness_instances,
        lambda inst: geom.check_flatness_batch(inst["c"], inst["rho"], inst["ell"]),
    ),
    "radial-progress": (
        geom.radial_progress_instances,
        lambda inst: geom.check_radial_progress_batch(inst["x"], inst["rho"], inst["h"]),
    ),
}


@dataclass
class FuzzReport:
    lemma: str
    instances: int
    violations: int
    acceptance_rate: float
    first_violation: dict | None = None
    meta: dict = field(default_factory=dict)


def replay_lemma(lemma: str, instance: dict) -> bool:
    """Re-run one serialized instance through the scalar checker."""
    if lemma == "empty-ball":
        return bool(
            geom.check_empty_ball_batch(
                np.asarray([instance["ell"]]),
                np.asarray([instance["c"]]),
                np.asarray([instance["rho"]]),
            )[0]
        )
    if lemma == "flatness":
        return geom.check_flatness_bound(np.asarray(instance["c"]), instance["rho"], instance["ell"])
    if lemma == "radial-progress":
        return geom.check_radial_progress(np.asarray(instance["x"]), instance["rho"], instance["h"])
    raise ValueError(f"unknown lemma {lemma!r}")


def run_lemma_fuzz(lemma: str, instances: int, seed: int, dim: int = 2) -> FuzzReport:
    """Drive a lemma's instance generator and checker; violations must be zero."""
    if instances < 1:
        raise ValueError("need at least one instance")
    if lemma not in _LEMMAS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {sorted(_LEMMAS)}")
    gen, batch_check = _LEMMAS[lemma]
    done = 0
    violations = 0
    proposed = 0
    accepted = 0
    first: dict | None = None
    chunk_id = 0
    while done < instances:
        m = min(instances - done, 200_000)
        inst, stats_ = gen(m, dim, mix64(seed, 0xF022, chunk_id))
        ok = batch_check(inst)
        bad = np.flatnonzero(~ok)
        violations += int(bad.size)
        if bad.size and first is None:
            j = int(bad[0])
            first = {
                k: (v[j].tolist() if hasattr(v[j], "tolist") else float(v[j]))
                for k, v in inst.items()
            }
            first["lemma"] = lemma
        proposed += stats_.proposed
        accepted += stats_.accepted
        done += m
        chunk_id += 1
    return FuzzReport(
        lemma=lemma,
        instances=instances,
        violations=violations,
        acceptance_rate=accepted / proposed if proposed else 1.0,
        first_violation=first,
        meta={"dim": dim, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Symmetry / coupling campaign
# ---------------------------------------------------------------------------


def _symmetry_chunk(args, start: int, stop: int) -> list:
    d, start_norm, constants, seed, offset = args
    pi0 = np.zeros(d)
    pi0[0] = start_norm
    out = []
    for i in range(offset + start, offset + stop):
        rep = run_coupling(pi0, mix64(seed, 0x5C0, i), constants)
        out.append(
            (
                rep.outcome,
                rep.negation_error,
                rep.max_tail_negation_error,
                rep.perp_first_coord,
                rep.prefix_exact,
            )
        )
    return out


@dataclass
class SymmetryReport:
    trials: int
    applicable: int
    no_renewal: int
    broken: int
    exact_pass: bool
    max_negation_error: float
    sign_test_p: float
    mean_first_coord: float
    se_first_coord: float
    first_coords: np.ndarray
    insufficient: bool
    meta: dict = field(default_factory=dict)


def run_symmetry_campaign(
    d: int,
    start_norm: float,
    trials: int,
    seed: int,
    constants: Constants | None = None,
    min_applicable: int = 50,
    max_trials: int | None = None,
    tol: float = 1e-9,
    workers: int = 1,
) -> SymmetryReport:
    """Aggregate reflection-coupling runs and test the symmetry they certify.

    Runs auto-extend (deterministically, by trial index) until at least
    ``min_applicable`` runs contain a pseudo-renewal or ``max_trials`` is hit,
    in which case the report is flagged insufficient.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if constants is None:
        constants = SYMMETRY_CAMPAIGN_CONSTANTS
    if max_trials is None:
        max_trials = 20 * trials
    rows: list = []
    done = 0
    target = trials
    while True:
        rows.extend(
            run_chunked(
                _symmetry_chunk, (d, start_norm, constants, seed, done), target - done, workers, 16
            )
        )
        done = target
        applicable = sum(1 for r in rows if r[0] == "ok")
        if applicable >= min_applicable or done >= max_trials:
            break
        target = min(max_trials, done + max(trials // 2, 50))
    # Note: extension re-runs indices from 0 only if target - done were
    # misaligned; chunk indices are absolute because we extend contiguously.
    applicable_rows = [r for r in rows if r[0] == "ok"]
    errs = np.asarray([max(r[1], r[2]) for r in applicable_rows], dtype=float)
    coords = np.asarray([r[3] for r in applicable_rows], dtype=float)
    npos = int((coords > 0).sum())
    nneg = int((coords < 0).sum())
    p_sign = float(stats.binomtest(npos, npos + nneg, 0.5).pvalue) if npos + nneg else math.nan
    mean = float(coords.mean()) if coords.size else math.nan
    se = float(coords.std(ddof=1) / math.sqrt(coords.size)) if coords.size > 1 else math.nan
    return SymmetryReport(
        trials=done,
        applicable=len(applicable_rows),
        no_renewal=sum(1 for r in rows if r[0] == "no-renewal"),
        broken=sum(1 for r in rows if r[0] == "coupling-broken"),
        exact_pass=bool(errs.size and np.all(errs <= tol)) if applicable_rows else False,
        max_negation_error=float(errs.max()) if errs.size else math.nan,
        sign_test_p=p_sign,
        mean_first_coord=mean,
        se_first_coord=se,
        first_coords=coords,
        insufficient=len(applicable_rows) < min_applicable,
        meta={"d": d, "start_norm": start_norm, "seed": seed, "kappa": constants.kappa},
    )


# ---------------------------------------------------------------------------
# Resampling (Markov) smoke check
# ---------------------------------------------------------------------------


@dataclass
class ResamplingReport:
    ks_statistic: float
    p_value: float
    trials: int
    step: int
    radius_at_step: float
    meta: dict = field(default_factory=dict)


def resampling_check(
    d: int,
    start_norm: float,
    step: int,
    trials: int,
    seed: int,
) -> ResamplingReport:
    """KS-compare the next-radius law under fresh-field restriction vs region resampling.

    Arm (a) draws a fresh ball sample and deletes the closed history; arm (b)
    resamples the unexplored region of the pinned base realization through
    ``resample_region``.  Both should realize the same conditional law.
    """
    from rst_lab.ppp import realize_cells, resample_region

    pi0 = np.zeros(d)
    pi0[0] = start_norm
    field = LazyField(dimension=d, global_seed=mix64(seed, 0xBA5E))
    base = realize_cells(field, RegionSpec("ball", r_outer=start_norm))
    path, trace = explore(pi0, StaticGrid(base.points), Constants())
    if path.shape[0] <= step + 1:
        raise ValueError("pinned run too short for the requested step")
    x = path[step]
    xn2 = float(x @ x)
    r_n = math.sqrt(xn2)
    lenses = tuple(trace.history(path, step))
    region = RegionSpec("ball_minus_lenses", r_outer=r_n, lenses=lenses)

    def next_radius(points: np.ndarray) -> float:
        norms2 = np.einsum("ij,ij->i", points, points)
        d2 = np.einsum("ij,ij->i", points - x, points - x)
        # d2 > 0 guards against x itself slipping past the strict norm filter
        # through a last-ulp difference between einsum and dot.
        cand = (norms2 < xn2) & (d2 > 0.0)
        if not np.any(cand):
            return 0.0
        k = int(np.argmin(np.where(cand, d2, np.inf)))
        return float(np.linalg.norm(points[k])) if d2[k] < xn2 else 0.0

    arm_a = np.empty(trials)
    arm_b = np.empty(trials)
    for t in range(trials):
        fresh = sample_ball(d, r_n, mix64(seed, 0xA0, t))
        keep = region.contains(fresh.points)
        arm_a[t] = next_radius(fresh.points[keep])
        resampled = resample_region(base, region, mix64(seed, 0xB0, t))
        arm_b[t] = next_radius(resampled.points)
    ks = stats.ks_2samp(arm_a, arm_b)
    return ResamplingReport(
        ks_statistic=float(ks.statistic),
        p_value=float(ks.pvalue),
        trials=trials,
        step=step,
        radius_at_step=r_n,
        meta={"d": d, "start_norm": start_norm, "seed": seed},
    )
