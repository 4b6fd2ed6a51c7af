"""Dimension-generic geometric primitives for radial-tree analysis.

Everything here is a pure function over immutable values.  Balls and lenses
are open sets (strict inequalities); fuzz-style checkers carry a 1e-12
additive slack so floating point cannot produce spurious violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SLACK = 1e-12
PRECONDITION_TOL = 1e-9


class PreconditionError(ValueError):
    """Raised when a checker is handed an instance violating its preconditions."""


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d coordinate vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite coordinates")
    return v


def ball_volume(d: int, r: float) -> float:
    """Lebesgue volume of the d-dimensional Euclidean ball of radius r."""
    if d < 1 or int(d) != d:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    return float(r) ** d * math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def perp_component(x, u) -> np.ndarray:
    """Component of u orthogonal to x; returns u itself when x = 0."""
    x = _as_vector(x)
    u = _as_vector(u)
    if x.shape != u.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {u.shape}")
    n2 = float(x @ x)
    if n2 == 0.0:
        return u.copy()
    return u - (float(x @ u) / n2) * x


@dataclass(frozen=True)
class Lens:
    """Open lens B(center, radius) ∩ B(0, ||center||).

    Empty when the center is the origin.  ``inner_reach`` is the infimum of
    ||p|| over the lens, in closed form.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vector(self.center))
        if self.radius < 0:
            raise ValueError(f"lens radius must be nonnegative, got {self.radius}")

    @property
    def center_norm(self) -> float:
        return float(np.linalg.norm(self.center))

    @property
    def inner_reach(self) -> float:
        return max(self.center_norm - self.radius, 0.0)

    def contains(self, p) -> bool:
        return lens_contains(self, p)


def lens_contains(lens: Lens, p) -> bool:
    """Strict membership in the open lens."""
    p = _as_vector(p)
    if p.shape != lens.center.shape:
        raise ValueError("dimension mismatch between lens and point")
    return (
        float(np.linalg.norm(p - lens.center)) < lens.radius
        and float(np.linalg.norm(p)) < lens.center_norm
    )


@dataclass(frozen=True)
class Cone:
    """Cone of directions within ``aperture`` radians of ``direction``."""

    direction: np.ndarray
    aperture: float

    def __post_init__(self):
        object.__setattr__(self, "direction", _as_vector(self.direction))
        if abs(float(np.linalg.norm(self.direction)) - 1.0) > 1e-12:
            raise ValueError("cone direction must be a unit vector")
        if not 0.0 <= self.aperture <= math.pi:
            raise ValueError(f"aperture must lie in [0, pi], got {self.aperture}")

    def contains(self, p) -> bool:
        p = _as_vector(p)
        return float(p @ self.direction) >= float(np.linalg.norm(p)) * math.cos(self.aperture)


def reflect_in_ball(x, y) -> np.ndarray:
    """Reflect y through the axis spanned by x, but only inside B(0, ||x||).

    An involution that preserves norms; points with ||y|| >= ||x|| are
    returned unchanged.
    """
    x = _as_vector(x)
    y = _as_vector(y)
    if float(x @ x) == 0.0:
        raise ValueError("reflection axis must be nonzero")
    if float(np.linalg.norm(y)) < float(np.linalg.norm(x)):
        return y - 2.0 * perp_component(x, y)
    return y.copy()


def reflect_points(x, points: np.ndarray) -> np.ndarray:
    """Vectorized ``reflect_in_ball`` over the rows of ``points``."""
    x = _as_vector(x)
    n2 = float(x @ x)
    if n2 == 0.0:
        raise ValueError("reflection axis must be nonzero")
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    inside = np.einsum("ij,ij->i", pts, pts) < n2
    if np.any(inside):
        sub = pts[inside]
        coeff = (sub @ x) / n2
        out[inside] = 2.0 * coeff[:, None] * x[None, :] - sub
    return out


def alpha(ell: float) -> float:
    """The clearance factor sqrt(2 - ell) - 1, non-increasing on [0, 1]."""
    if not 0.0 <= ell <= 1.0:
        raise ValueError(f"ell must lie in [0, 1], got {ell}")
    return math.sqrt(2.0 - ell) - 1.0


def empty_ball_witness(ell: float, dim: int = 2) -> tuple[np.ndarray, float]:
    """Ball guaranteed to sit inside B0(-e_d, ell) and avoid every admissible blocker.

    Normalized coordinates: unit outer ball, base point -e_d.  The returned
    ball B(x_ell, alpha_ell*ell/2) is disjoint from any ball B(c, rho) with
    ||c|| >= 1, B(c, rho) disjoint from B(0, 1-ell) and -e_d outside it.
    """
    if not 0.0 <= ell <= 1.0:
        raise ValueError(f"ell must lie in [0, 1], got {ell}")
    if dim < 2:
        raise ValueError(f"dimension must be >= 2, got {dim}")
    a = alpha(ell)
    center = np.zeros(dim)
    center[-1] = -(1.0 - ell + 0.5 * a * ell)
    return center, 0.5 * a * ell


def check_flatness_bound(c, rho: float, ell: float) -> bool:
    """Whether 1 + c.e_d <= 2*ell^2 (with slack) for an admissible blocker ball.

    Preconditions (validated): ||c|| >= 1, ell in [0, 1/2], B(c, rho) disjoint
    from B(0, 1-ell), and the closures of B(c, rho) and B(-e_d, ell) meet.
    """
    c = _as_vector(c)
    cn = float(np.linalg.norm(c))
    e_d = np.zeros(c.shape[0])
    e_d[-1] = 1.0
    if cn < 1.0 - PRECONDITION_TOL:
        raise PreconditionError(f"||c|| = {cn} < 1")
    if not -PRECONDITION_TOL <= ell <= 0.5 + PRECONDITION_TOL:
        raise PreconditionError(f"ell = {ell} outside [0, 1/2]")
    if rho < -PRECONDITION_TOL:
        raise PreconditionError(f"rho = {rho} negative")
    if cn < (1.0 - ell) + rho - PRECONDITION_TOL:
        raise PreconditionError("B(c, rho) meets B(0, 1-ell)")
    if float(np.linalg.norm(c + e_d)) > rho + ell + PRECONDITION_TOL:
        raise PreconditionError("closures of B(c, rho) and B(-e_d, ell) do not meet")
    return 1.0 + float(c @ e_d) <= 2.0 * ell * ell + SLACK


def check_radial_progress(x, rho: float, h: float) -> bool:
    """Whether 1 - ||x|| >= (h - 1/2)*rho (with slack) under the height condition.

    Preconditions (validated): rho in [0, 1], h in [1/2, 1], x in the lens
    B0(-e_d, rho), and 1 + x.e_d >= h*rho.
    """
    x = _as_vector(x)
    e_d = np.zeros(x.shape[0])
    e_d[-1] = 1.0
    if not -PRECONDITION_TOL <= rho <= 1.0 + PRECONDITION_TOL:
        raise PreconditionError(f"rho = {rho} outside [0, 1]")
    if not 0.5 - PRECONDITION_TOL <= h <= 1.0 + PRECONDITION_TOL:
        raise PreconditionError(f"h = {h} outside [1/2, 1]")
    xn = float(np.linalg.norm(x))
    if float(np.linalg.norm(x + e_d)) > rho + PRECONDITION_TOL:
        raise PreconditionError("x outside B(-e_d, rho)")
    if xn > 1.0 + PRECONDITION_TOL:
        raise PreconditionError("x outside B(0, 1)")
    if 1.0 + float(x @ e_d) < h * rho - PRECONDITION_TOL:
        raise PreconditionError("height condition 1 + x.e_d >= h*rho fails")
    return 1.0 - xn >= (h - 0.5) * rho - SLACK


# ---------------------------------------------------------------------------
# Instance generators for the lemma fuzz campaigns.  Each returns a dict of
# instance arrays plus sampling statistics, so vacuous test regimes stay
# visible.  All are pure functions of (n, dim, seed).
# ---------------------------------------------------------------------------


@dataclass
class GeneratorStats:
    proposed: int = 0
    accepted: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 1.0


def _unit_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1)
    # Degenerate zero draws have probability ~0; redraw defensively.
    bad = norms < 1e-12
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=1)
        bad = norms < 1e-12
    return g / norms[:, None]


def empty_ball_instances(n: int, dim: int, seed: int) -> tuple[dict, GeneratorStats]:
    """Admissible (ell, c, rho) triples for the empty-ball witness check.

    ell ~ U[0,1]; c has a uniform direction and ||c|| ~ U[1,3];
    rho = min(ell + ||c|| - 1, ||c + e_d||) * U[0,1].
    """
    if n < 1:
        raise ValueError("need at least one instance")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    ell = rng.uniform(0.0, 1.0, n)
    c = _unit_directions(rng, n, dim) * rng.uniform(1.0, 3.0, n)[:, None]
    e_d = np.zeros(dim)
    e_d[-1] = 1.0
    cn = np.linalg.norm(c, axis=1)
    rho_max = np.minimum(ell + cn - 1.0, np.linalg.norm(c + e_d, axis=1))
    rho = rho_max * rng.uniform(0.0, 1.0, n)
    return {"ell": ell, "c": c, "rho": rho}, GeneratorStats(proposed=n, accepted=n)


def check_empty_ball_batch(ell: np.ndarray, c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Vectorized witness verification; True where the lemma's conclusion holds.

    Checks disjointness analytically (center distance vs radius sum) and the
    inclusion of the witness ball in the lens, each with 1e-12 slack.
    """
    dim = c.shape[1]
    a = np.sqrt(2.0 - ell) - 1.0
    wr = 0.5 * a * ell
    center = np.zeros_like(c)
    center[:, -1] = -(1.0 - ell + wr)
    dist = np.linalg.norm(center - c, axis=1)
    disjoint = dist >= rho + wr - SLACK
    center_norm = np.abs(center[:, -1])
    in_outer = center_norm + wr <= 1.0 + SLACK
    # ||x_ell + e_d|| = ell*(1 - alpha/2) along the axis
    in_ball = np.abs(center[:, -1] + 1.0) + wr <= ell + SLACK
    assert dim >= 2
    return disjoint & in_outer & in_ball


def flatness_instances(n: int, dim: int, seed: int) -> tuple[dict, GeneratorStats]:
    """Admissible (c, rho, ell) triples for the flatness-default check.

    Built by direct construction (no rejection): the polar angle of c is
    drawn uniformly over the exact feasibility range, then rho over
    [||c + e_d|| - ell, ell + ||c|| - 1], so every precondition holds.
    """
    if n < 1:
        raise ValueError("need at least one instance")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    ell = rng.uniform(0.0, 0.5, n)
    delta = 2.0 * rng.uniform(0.0, 1.0, n) ** 3  # bias toward ||c|| near 1
    cn = 1.0 + delta
    # Feasibility of the closure intersection: ||c + e_d|| <= 2*ell + delta.
    cos_max = ((2.0 * ell + delta) ** 2 - 1.0 - cn**2) / (2.0 * cn)
    cos_max = np.clip(cos_max, -1.0, 1.0)
    cos_psi = -1.0 + (cos_max + 1.0) * rng.uniform(0.0, 1.0, n)
    sin_psi = np.sqrt(np.clip(1.0 - cos_psi**2, 0.0, None))
    lateral = _unit_directions(rng, n, dim - 1) if dim > 2 else rng.choice([-1.0, 1.0], n)[:, None]
    c = np.empty((n, dim))
    c[:, -1] = cn * cos_psi
    c[:, :-1] = (cn * sin_psi)[:, None] * lateral
    e_d = np.zeros(dim)
    e_d[-1] = 1.0
    gap = np.linalg.norm(c + e_d, axis=1)
    rho_lo = np.maximum(gap - ell, 0.0)
    rho_hi = ell + cn - 1.0
    rho = rho_lo + np.maximum(rho_hi - rho_lo, 0.0) * rng.uniform(0.0, 1.0, n)
    return {"c": c, "rho": rho, "ell": ell}, GeneratorStats(proposed=n, accepted=n)


def check_flatness_batch(c: np.ndarray, rho: np.ndarray, ell: np.ndarray) -> np.ndarray:
    del rho  # the conclusion involves only c and ell
    return 1.0 + c[:, -1] <= 2.0 * ell**2 + SLACK


def radial_progress_instances(n: int, dim: int, seed: int) -> tuple[dict, GeneratorStats]:
    """Admissible (x, rho, h) triples: x rejection-sampled in the lens above height h*rho."""
    if n < 1:
        raise ValueError("need at least one instance")
    rng = np.random.default_rng(np.random.Philox(key=seed))
    out_x = np.empty((n, dim))
    out_rho = np.empty(n)
    out_h = np.empty(n)
    got = 0
    proposed = 0
    while got < n:
        m = max(4 * (n - got), 4096)
        proposed += m
        rho = rng.uniform(0.0, 1.0, m)
        h = rng.uniform(0.5, 1.0, m)
        xi = _unit_directions(rng, m, dim) * rng.uniform(0.0, 1.0, m)[:, None] ** (1.0 / dim)
        x = rho[:, None] * xi
        x[:, -1] -= 1.0
        height_ok = rho * xi[:, -1] >= h * rho  # 1 + x.e_d = rho * xi_d
        norm_ok = np.einsum("ij,ij->i", x, x) < 1.0
        keep = height_ok & norm_ok
        k = int(keep.sum())
        take = min(k, n - got)
        out_x[got : got + take] = x[keep][:take]
        out_rho[got : got + take] = rho[keep][:take]
        out_h[got : got + take] = h[keep][:take]
        got += take
    return {"x": out_x, "rho": out_rho, "h": out_h}, GeneratorStats(proposed=proposed, accepted=n)


def check_radial_progress_batch(x: np.ndarray, rho: np.ndarray, h: np.ndarray) -> np.ndarray:
    return 1.0 - np.linalg.norm(x, axis=1) >= (h - 0.5) * rho - SLACK
