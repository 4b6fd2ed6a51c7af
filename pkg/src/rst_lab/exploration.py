"""Instrumented exploration of the forward parent chain from a fixed start.

Each step appends the lens it forces empty to the history set; the scalars
r (innermost reach of the history) and L = R - r (its radial width) update
in O(1) via the exact identity r_{n+1} = min(r_n, R_n - step_length).  On
top of the path we detect the terminal time, good steps, pseudo-renewal
events, and the decomposition times used by the symmetry coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rst_lab.geom import Lens, alpha, perp_component, reflect_points
from rst_lab.ppp import LazyField, PointSet, RegionSpec, realize_cells
from rst_lab.rst_core import LazyGrid, StaticGrid


def lambda_default(d: int) -> float:
    """Explicit width-vs-radius constant (alpha_{1/2}/2)^d / (4d)."""
    return (alpha(0.5) / 2.0) ** d / (4.0 * d)


def delta_default() -> float:
    """Explicit per-step radial progress constant alpha_{1/2}/8."""
    return alpha(0.5) / 8.0


@dataclass(frozen=True)
class Constants:
    """Tunable constants of the exploration bookkeeping.

    ``lam`` and ``delta`` fall back to their explicit formula defaults when
    left unset; ``a_exponent`` is the block-size exponent (4/5)*2e/(1+2e).
    """

    kappa: float = 2.0
    epsilon: float = 0.25
    lam: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if not self.kappa > 1.0:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive")

    def lam_for(self, d: int) -> float:
        return self.lam if self.lam is not None else lambda_default(d)

    def delta_value(self) -> float:
        return self.delta if self.delta is not None else delta_default()

    @property
    def a_exponent(self) -> float:
        return 0.8 * 2.0 * self.epsilon / (1.0 + 2.0 * self.epsilon)


@dataclass
class EventTrace:
    """Per-step bookkeeping of one exploration run.

    ``tau`` is recorded until it first sticks at ``theta``; ``eta`` and ``w``
    likewise end at their absorbing values, so w[-1] == theta always.
    """

    R: np.ndarray
    r: np.ndarray
    L: np.ndarray
    step_lens: np.ndarray
    theta: int
    tau: list
    q_flags: list
    eta: list
    w: list
    stopped_at: str = "origin"

    @property
    def i_theta(self) -> int:
        return len(self.tau) - 1

    @property
    def n_steps(self) -> int:
        return len(self.step_lens)

    def history(self, path: np.ndarray, n: int | None = None) -> list:
        """Lenses forced empty by the first n steps."""
        n = self.n_steps if n is None else n
        return [Lens(path[k], float(self.step_lens[k])) for k in range(n)]

    def tau_gaps(self) -> np.ndarray:
        return np.diff(np.asarray(self.tau, dtype=np.int64))

    def w_gaps(self) -> np.ndarray:
        return np.diff(np.asarray(self.w, dtype=np.int64))


class _GridSource:
    """Uniform adapter over static and lazy grids for the step query."""

    def __init__(self, source, dimension: int):
        if isinstance(source, PointSet):
            source = StaticGrid(source.points)
        elif isinstance(source, LazyField):
            source = LazyGrid(source)
        if not isinstance(source, (StaticGrid, LazyGrid)):
            raise ValueError(f"unsupported point source {type(source)!r}")
        self.grid = source
        self.d = dimension

    def next_point(self, x: np.ndarray, norm2: float) -> tuple[np.ndarray, float]:
        """Winning point and its norm^2 as stored by the grid.

        Reusing the stored norm (instead of recomputing it) keeps the strict
        smaller-norm filter exact when the result feeds the next query.
        """
        if isinstance(self.grid, StaticGrid):
            idx, _ = self.grid.nearest_smaller_norm(x, norm2)
            if idx < 0:
                return np.zeros(self.d), 0.0
            return self.grid.pts[idx].copy(), float(self.grid.norms2[idx])
        pt, _, n2 = self.grid.nearest_smaller_norm(x, norm2)
        if pt is None:
            return np.zeros(self.d), 0.0
        return np.asarray(pt, dtype=float), n2

    def count_in_lens(self, center: np.ndarray, radius: float, norm2_bound: float) -> int:
        if isinstance(self.grid, StaticGrid):
            return int(self.grid.indices_in_lens(center, radius, norm2_bound).size)
        return int(self.grid.points_in_lens(center, radius, norm2_bound).shape[0])


def pi_up(pi, kappa: float) -> np.ndarray:
    """Move pi radially kappa units toward the origin (0 stays at 0)."""
    pi = np.asarray(pi, dtype=float)
    R = float(np.linalg.norm(pi))
    if R == 0.0:
        return np.zeros(pi.shape[0])
    return pi * (1.0 - kappa / R)


def explore(pi0, source, constants: Constants | None = None, stop: str = "origin"):
    """Iterate the parent map from pi0 and instrument the run.

    Returns ``(path, trace)`` where path is the (N+1, d) array of visited
    points (ending at the origin unless ``stop='theta'`` cut the run at the
    terminal time) and trace carries R/r/L, good steps, pseudo-renewal flags,
    and the decomposition times.
    """
    if constants is None:
        constants = Constants()
    if stop not in ("origin", "theta"):
        raise ValueError(f"stop must be 'origin' or 'theta', got {stop!r}")
    pi0 = np.asarray(pi0, dtype=float)
    d = pi0.shape[0]
    R2 = float(pi0 @ pi0)
    if R2 == 0.0:
        raise ValueError("exploration must start away from the origin")
    src = _GridSource(source, d)
    kappa = constants.kappa
    lam = constants.lam_for(d)

    pts = [pi0]
    R = [math.sqrt(R2)]
    r = [R[0]]
    L = [0.0]
    norm2s = [R2]
    step_lens: list = []
    theta = 0 if (R[0] < 1.0 + kappa or L[0] ** (d + 1) > lam * R[0]) else None

    n = 0
    while R[n] > 0.0 and not (stop == "theta" and theta is not None):
        y, y2 = src.next_point(pts[n], norm2s[n])
        if y2 >= norm2s[n]:
            raise AssertionError("parent norm failed to decrease strictly")
        s = float(np.linalg.norm(y - pts[n]))
        r_next = min(r[n], R[n] - s)
        R_next = math.sqrt(y2)
        L_next = R_next - r_next
        if L_next < 0.0:  # floating-point dust only; the identity forbids < 0
            if L_next < -1e-9 * max(1.0, R[n]):
                raise AssertionError(f"history width went negative: {L_next}")
            L_next = 0.0
        pts.append(y)
        step_lens.append(s)
        R.append(R_next)
        r.append(r_next)
        L.append(L_next)
        norm2s.append(y2)
        n += 1
        if theta is None and (R_next < 1.0 + kappa or L_next ** (d + 1) > lam * R_next):
            theta = n

    if theta is None:  # unreachable: R hits 0 < 1 + kappa
        theta = n

    tau = [0]
    while tau[-1] != theta:
        prev = tau[-1]
        nxt = theta
        for i in range(prev + 1, theta):
            if L[i] < kappa and R[prev] - R[i] >= kappa + 1.0:
                nxt = i
                break
        tau.append(nxt)
    i_theta = len(tau) - 1

    q_flags = []
    for i in range(i_theta):
        t = tau[i]
        center = pts[t]
        up = pi_up(center, kappa)
        up2 = float(up @ up)
        big = src.count_in_lens(center, kappa + 1.0, norm2s[t])
        small = src.count_in_lens(up, 1.0, up2) if up2 > 0.0 else 0
        q_flags.append(big == 1 and small == 1)

    eta = [0]
    while eta[-1] != i_theta:
        prev = eta[-1]
        nxt = i_theta
        for i in range(prev + 1, i_theta - 1):
            if q_flags[i]:
                nxt = i
                break
        eta.append(nxt)
    w = [tau[e] for e in eta]

    trace = EventTrace(
        R=np.asarray(R),
        r=np.asarray(r),
        L=np.asarray(L),
        step_lens=np.asarray(step_lens),
        theta=theta,
        tau=tau,
        q_flags=q_flags,
        eta=eta,
        w=w,
        stopped_at=stop,
    )
    return np.vstack(pts), trace


def deviation_sup(path: np.ndarray, pi0) -> float:
    """Largest orthogonal distance of the path from the axis through pi0."""
    path = np.asarray(path, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    if not np.array_equal(path[0], pi0):
        raise ValueError("path must start at pi0")
    n2 = float(pi0 @ pi0)
    if n2 == 0.0:
        raise ValueError("pi0 must be nonzero")
    proj = (path @ pi0) / n2
    perp = path - proj[:, None] * pi0[None, :]
    return float(np.sqrt(np.einsum("ij,ij->i", perp, perp)).max())


def perp_basis(x: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the hyperplane orthogonal to x.

    Householder construction; rows are the d-1 basis vectors.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    u = x / np.linalg.norm(x)
    v = u.copy()
    v[0] += math.copysign(1.0, u[0]) if u[0] != 0 else 1.0
    H = np.eye(d) - 2.0 * np.outer(v, v) / float(v @ v)
    return H[:, 1:].T


@dataclass
class RenewalBlock:
    block: int
    w_start: int
    w_end: int
    delta: np.ndarray
    radial: float
    perp: np.ndarray
    block_length: float


def renewal_increments(trace: EventTrace, path: np.ndarray) -> list[RenewalBlock]:
    """Per-block increments of the decomposition with their orthogonal parts."""
    blocks = []
    for n in range(len(trace.w) - 1):
        a, b = trace.w[n], trace.w[n + 1]
        delta = path[b] - path[a]
        anchor = path[a]
        perp = perp_component(anchor, delta) if float(anchor @ anchor) > 0 else delta.copy()
        blocks.append(
            RenewalBlock(
                block=n,
                w_start=a,
                w_end=b,
                delta=delta,
                radial=float(trace.R[b] - trace.R[a]),
                perp=perp,
                block_length=float(trace.step_lens[a:b].sum()),
            )
        )
    return blocks


@dataclass
class CouplingReport:
    """Outcome of one reflection-coupling run."""

    outcome: str  # 'ok' | 'no-renewal' | 'coupling-broken'
    w1: int | None = None
    w2: int | None = None
    theta: int | None = None
    prefix_exact: bool = False
    radial_match_error: float = math.nan
    negation_error: float = math.nan
    max_tail_negation_error: float = math.nan
    perp_first_coord: float = math.nan
    divergence: str = ""


def run_coupling(pi0, seed: int, constants: Constants | None = None) -> CouplingReport:
    """Reflect the configuration through the axis at the first renewal and re-run.

    The run is applicable when the first decomposition time w_1 lands before
    the terminal time.  On the reflected configuration the path must agree
    exactly up to step w_1 (and in radial data at w_1 + 1), and orthogonal
    components relative to pi_{w_1} must be exact negations thereafter.
    """
    if constants is None:
        constants = Constants()
    pi0 = np.asarray(pi0, dtype=float)
    d = pi0.shape[0]
    R0 = float(np.linalg.norm(pi0))
    field = LazyField(dimension=d, global_seed=seed)
    base = realize_cells(field, RegionSpec("ball", r_outer=R0))
    grid = StaticGrid(base.points)
    path, trace = explore(pi0, grid, constants)
    if len(trace.w) < 2 or trace.w[1] >= trace.theta:
        return CouplingReport(outcome="no-renewal", theta=trace.theta)
    w1, w2 = trace.w[1], trace.w[2]
    axis = pi_up(path[w1], constants.kappa)
    reflected = reflect_points(axis, base.points)
    path2, trace2 = explore(pi0, StaticGrid(reflected), constants)
    prefix_exact = path2.shape[0] > w1 and np.array_equal(path2[: w1 + 1], path[: w1 + 1])
    radial_err = (
        abs(float(np.linalg.norm(path2[w1 + 1])) - float(np.linalg.norm(path[w1 + 1])))
        if path2.shape[0] > w1 + 1 and path.shape[0] > w1 + 1
        else math.inf
    )
    if trace2.theta != trace.theta or len(trace2.w) < 3 or trace2.w[1] != w1 or trace2.w[2] != w2:
        step = trace2.w[1] if len(trace2.w) > 1 else -1
        return CouplingReport(
            outcome="coupling-broken",
            w1=w1,
            w2=w2,
            theta=trace.theta,
            prefix_exact=prefix_exact,
            radial_match_error=radial_err,
            divergence=f"reflected run events diverged (w'={trace2.w}, theta'={trace2.theta}, step={step})",
        )
    anchor = path[w1]
    p = perp_component(anchor, path[w2])
    p2 = perp_component(anchor, path2[w2])
    negation = float(np.linalg.norm(p2 + p))
    upto = min(path.shape[0], path2.shape[0])
    n2 = float(anchor @ anchor)
    proj = (path[w1 + 1 : upto] @ anchor) / n2
    perp_a = path[w1 + 1 : upto] - proj[:, None] * anchor[None, :]
    proj2 = (path2[w1 + 1 : upto] @ anchor) / n2
    perp_b = path2[w1 + 1 : upto] - proj2[:, None] * anchor[None, :]
    tail_err = float(np.sqrt(np.einsum("ij,ij->i", perp_a + perp_b, perp_a + perp_b)).max())
    first_coord = float(perp_basis(anchor)[0] @ p)
    return CouplingReport(
        outcome="ok",
        w1=w1,
        w2=w2,
        theta=trace.theta,
        prefix_exact=prefix_exact,
        radial_match_error=radial_err,
        negation_error=negation,
        max_tail_negation_error=tail_err,
        perp_first_coord=first_coord,
    )


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def write_trace_csv(path_file, path: np.ndarray, trace: EventTrace) -> None:
    """One row per step: n, coordinates, R, r, L, and event flags."""
    d = path.shape[1]
    tau_set = set(trace.tau)
    w_set = set(trace.w)
    q_steps = {trace.tau[i] + 1 for i in range(len(trace.q_flags)) if trace.q_flags[i]}
    header = "n," + ",".join(f"x{i + 1}" for i in range(d)) + ",R,r,L,is_tau,is_Q,is_w,theta"
    with open(path_file, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for n in range(path.shape[0]):
            coords = ",".join("%.17g" % v for v in path[n])
            fh.write(
                "%d,%s,%.17g,%.17g,%.17g,%d,%d,%d,%d\n"
                % (
                    n,
                    coords,
                    trace.R[n],
                    trace.r[n],
                    trace.L[n],
                    int(n in tau_set),
                    int(n in q_steps),
                    int(n in w_set),
                    int(n == trace.theta),
                )
            )


def write_renewals_csv(path_file, path: np.ndarray, trace: EventTrace) -> None:
    d = path.shape[1]
    header = "block,w_start,w_end,block_length," + ",".join(f"perp{i + 1}" for i in range(d))
    with open(path_file, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for blk in renewal_increments(trace, path):
            perp = ",".join("%.17g" % v for v in blk.perp)
            fh.write("%d,%d,%d,%.17g,%s\n" % (blk.block, blk.w_start, blk.w_end, blk.block_length, perp))
