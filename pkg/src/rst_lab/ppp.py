"""Homogeneous unit-intensity Poisson sampling over balls, cells, and regions.

Randomness discipline: every sampler is a pure function of a 64-bit seed.
Cell contents of the lazy field are derived from (global_seed, cell coords)
through a splitmix64 mixing chain, so realizations are reproducible and
independent of the order in which cells are touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rst_lab.geom import Lens, ball_volume

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_U64_GOLDEN = np.uint64(_GOLDEN)
_U64_M1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_M2 = np.uint64(0x94D049BB133111EB)


def _finalize_scalar(z: int) -> int:
    z &= _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def mix64(*values: int) -> int:
    """Hash a tuple of integers into one well-mixed 64-bit stream key."""
    key = _finalize_scalar(_GOLDEN)
    for v in values:
        key = _finalize_scalar((key ^ (int(v) & _MASK64)) + _GOLDEN)
    return key


def _finalize_u64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _U64_M1
    z = (z ^ (z >> np.uint64(27))) * _U64_M2
    return z ^ (z >> np.uint64(31))


def _mix_u64(key, values: np.ndarray) -> np.ndarray:
    return _finalize_u64((np.uint64(key) ^ values.astype(np.uint64)) + _U64_GOLDEN)


def _uniform_from_u64(z: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in [0, 1) using the top 53 bits."""
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def stream_generator(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based numpy generator for the (seed, stream...) lane."""
    return np.random.Generator(np.random.Philox(key=mix64(seed, *stream)))


class EventCounter:
    """Process-wide diagnostic counter (duplicate redraws, tie events)."""

    def __init__(self, name: str):
        self.name = name
        self.value = 0

    def add(self, n: int = 1) -> None:
        self.value += n

    def reset(self) -> None:
        self.value = 0


DUPLICATE_REDRAWS = EventCounter("duplicate_redraws")


@dataclass
class PointSet:
    """A finite realization: stable integer ids and an (n, d) coordinate array."""

    dimension: int
    points: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.dimension)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if self.ids.shape[0] != self.points.shape[0]:
            raise ValueError("ids and points disagree in length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point set has non-finite coordinates")
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("point ids must be unique")

    @classmethod
    def from_points(cls, dimension: int, points: np.ndarray) -> "PointSet":
        points = np.asarray(points, dtype=float).reshape(-1, dimension)
        return cls(dimension, points, np.arange(1, points.shape[0] + 1, dtype=np.int64))

    def __len__(self) -> int:
        return self.points.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def to_csv(self, path) -> None:
        write_points_csv(path, self)

    @classmethod
    def from_csv(cls, path) -> "PointSet":
        return read_points_csv(path)


def _dedupe_rows(points: np.ndarray) -> np.ndarray:
    """Boolean mask of rows that duplicate an earlier row (coordinate-exact)."""
    if points.shape[0] < 2:
        return np.zeros(points.shape[0], dtype=bool)
    order = np.lexsort(points.T)
    sorted_pts = points[order]
    dup_sorted = np.zeros(points.shape[0], dtype=bool)
    dup_sorted[1:] = np.all(sorted_pts[1:] == sorted_pts[:-1], axis=1)
    dup = np.zeros_like(dup_sorted)
    dup[order] = dup_sorted
    return dup


def _uniform_in_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    bad = norms < 1e-300
    while np.any(bad):
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
        bad = norms < 1e-300
    radii = radius * rng.uniform(0.0, 1.0, n) ** (1.0 / d)
    return g * (radii / norms)[:, None]


def sample_ball(d: int, radius: float, seed: int) -> PointSet:
    """Unit-intensity Poisson sample of the open ball B(0, radius).

    Deterministic given the seed.  Coordinate-exact duplicate rows (a
    probability-zero event) are redrawn and counted in DUPLICATE_REDRAWS.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    rng = stream_generator(seed, 0xBA11)
    n = int(rng.poisson(ball_volume(d, radius)))
    pts = _uniform_in_ball(rng, n, d, radius)
    dup = _dedupe_rows(pts)
    while np.any(dup):
        DUPLICATE_REDRAWS.add(int(dup.sum()))
        pts[dup] = _uniform_in_ball(rng, int(dup.sum()), d, radius)
        dup = _dedupe_rows(pts)
    return PointSet(d, pts, np.arange(1, n + 1, dtype=np.int64))


# ---------------------------------------------------------------------------
# Lazy cell-hashed field
# ---------------------------------------------------------------------------

_POISSON_CDF_CACHE: dict[float, np.ndarray] = {}


def _poisson_cdf_table(lam: float) -> np.ndarray:
    table = _POISSON_CDF_CACHE.get(lam)
    if table is None:
        probs = [math.exp(-lam)]
        k = 0
        while probs[-1] > 0 and sum(probs) < 1.0 - 1e-18 and k < 256:
            k += 1
            probs.append(probs[-1] * lam / k)
        table = np.cumsum(probs)
        _POISSON_CDF_CACHE[lam] = table
    return table


@dataclass
class LazyField:
    """Deterministic lazily-realized Poisson field on a cubic cell lattice.

    Cell contents are a pure function of (global_seed, cell coordinates);
    realizing a cell twice, in any order or thread, yields identical points.
    """

    dimension: int
    global_seed: int
    cell_size: float = 1.0
    realized_cells: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    def _cell_keys(self, cells: np.ndarray) -> np.ndarray:
        keys = np.full(cells.shape[0], np.uint64(mix64(self.global_seed, 0xCE11)), dtype=np.uint64)
        for axis in range(self.dimension):
            keys = _mix_u64(np.uint64(axis + 1), keys ^ cells[:, axis].astype(np.int64).astype(np.uint64))
        return keys

    def realize_block(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Realize many cells at once; returns (points, per-point cell row index)."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.dimension)
        keys = self._cell_keys(cells)
        lam = self.cell_size**self.dimension
        table = _poisson_cdf_table(lam)
        u0 = _uniform_from_u64(_mix_u64(0, keys))
        counts = np.searchsorted(table, u0, side="right")
        total = int(counts.sum())
        if total == 0:
            return np.empty((0, self.dimension)), np.empty(0, dtype=np.int64)
        owner = np.repeat(np.arange(cells.shape[0]), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        within = np.arange(total, dtype=np.uint64) - starts[owner].astype(np.uint64)
        pkeys = keys[owner]
        coords = np.empty((total, self.dimension))
        d = np.uint64(self.dimension)
        for axis in range(self.dimension):
            ctr = np.uint64(1) + within * d + np.uint64(axis)
            u = _uniform_from_u64(_finalize_u64((pkeys ^ ctr) + _U64_GOLDEN))
            coords[:, axis] = (cells[owner, axis] + u) * self.cell_size
        return coords, owner

    def realize_cell(self, cell: tuple) -> np.ndarray:
        cached = self.realized_cells.get(cell)
        if cached is None:
            pts, _ = self.realize_block(np.asarray([cell], dtype=np.int64))
            cached = pts
            self.realized_cells[cell] = cached
        return cached


@dataclass(frozen=True)
class RegionSpec:
    """Bounded sampling region: a ball, an annulus, or a ball minus lenses.

    Lens exclusion uses closures (boundary points count as excluded), matching
    the closed-history semantics of region resampling.
    """

    kind: str
    r_outer: float
    r_inner: float = 0.0
    lenses: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ball", "annulus", "ball_minus_lenses"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.r_outer <= 0 or self.r_inner < 0 or self.r_inner > self.r_outer:
            raise ValueError("need 0 <= r_inner <= r_outer with r_outer > 0")
        if not math.isfinite(self.r_outer):
            raise ValueError("region must be bounded")
        for lens in self.lenses:
            if not isinstance(lens, Lens):
                raise ValueError("lenses must be Lens instances")

    def bounding_contains(self, points: np.ndarray) -> np.ndarray:
        """Membership in the bounding ball/annulus, ignoring lens carve-outs."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        norms = np.linalg.norm(pts, axis=1)
        inside = norms < self.r_outer
        if self.kind == "annulus":
            inside &= norms >= self.r_inner
        return inside

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.bounding_contains(pts)
        norms = np.linalg.norm(pts, axis=1)
        for lens in self.lenses:
            in_closure = (np.linalg.norm(pts - lens.center, axis=1) <= lens.radius) & (
                norms <= lens.center_norm
            )
            inside &= ~in_closure
        return inside


def _candidate_cells(field: LazyField, region: RegionSpec) -> np.ndarray:
    h = field.cell_size
    d = field.dimension
    hi = int(math.floor(region.r_outer / h)) + 1
    axes = [np.arange(-hi, hi + 1, dtype=np.int64)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    cells = np.stack([m.ravel() for m in mesh], axis=1)
    centers = (cells + 0.5) * h
    dist = np.linalg.norm(centers, axis=1)
    half_diag = 0.5 * h * math.sqrt(d)
    keep = dist - half_diag < region.r_outer
    if region.kind == "annulus":
        keep &= dist + half_diag >= region.r_inner
    return cells[keep]


def realize_cells(field: LazyField, region: RegionSpec) -> PointSet:
    """All points of the lazy field inside ``region`` (canonically ordered)."""
    cells = _candidate_cells(field, region)
    pts, _ = field.realize_block(cells)
    if pts.shape[0]:
        pts = pts[region.contains(pts)]
    order = np.lexsort(pts.T) if pts.shape[0] else np.empty(0, dtype=np.int64)
    pts = pts[order]
    return PointSet(field.dimension, pts, np.arange(1, pts.shape[0] + 1, dtype=np.int64))


def resample_region(base: PointSet, region: RegionSpec, seed: int) -> PointSet:
    """Redraw the region: delete base points in its bounding ball/annulus and
    insert a fresh Poisson sample of the region itself.

    Excluded lenses come back empty (they encode conditioning on emptiness, so
    nothing may survive inside them).  The fresh sample is obtained by thinning
    a Poisson sample of the bounding ball with the region membership test,
    which realizes the region's law exactly; no acceptance-rate livelock is
    possible.
    """
    keep = ~region.bounding_contains(base.points) if len(base) else np.empty(0, dtype=bool)
    kept_pts = base.points[keep]
    kept_ids = base.ids[keep]
    rng = stream_generator(seed, 0x5E5A)
    n = int(rng.poisson(ball_volume(base.dimension, region.r_outer)))
    proposal = _uniform_in_ball(rng, n, base.dimension, region.r_outer)
    fresh = proposal[region.contains(proposal)] if n else proposal
    dup = _dedupe_rows(np.vstack([kept_pts, fresh]))
    while np.any(dup[kept_pts.shape[0] :]):
        bad = dup[kept_pts.shape[0] :]
        DUPLICATE_REDRAWS.add(int(bad.sum()))
        redraw = _uniform_in_ball(rng, int(bad.sum()), base.dimension, region.r_outer)
        redraw = redraw[region.contains(redraw)]
        fresh = np.vstack([fresh[~bad], redraw])
        dup = _dedupe_rows(np.vstack([kept_pts, fresh]))
    next_id = int(base.ids.max()) + 1 if len(base) else 1
    ids = np.concatenate([kept_ids, np.arange(next_id, next_id + fresh.shape[0], dtype=np.int64)])
    return PointSet(base.dimension, np.vstack([kept_pts, fresh]), ids)


# ---------------------------------------------------------------------------
# CSV interchange: header id,x1,...,xd with 17-significant-digit floats
# ---------------------------------------------------------------------------


def write_points_csv(path, point_set: PointSet) -> None:
    d = point_set.dimension
    header = "id," + ",".join(f"x{i + 1}" for i in range(d))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for pid, row in zip(point_set.ids, point_set.points):
            fh.write("%d," % pid + ",".join("%.17g" % v for v in row) + "\n")


def read_points_csv(path) -> PointSet:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "id" or any(h != f"x{i + 1}" for i, h in enumerate(header[1:])):
            raise ValueError(f"unexpected point CSV header: {header}")
        d = len(header) - 1
        ids = []
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            ids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    pts = np.asarray(rows, dtype=float).reshape(-1, d)
    return PointSet(d, pts, np.asarray(ids, dtype=np.int64))
