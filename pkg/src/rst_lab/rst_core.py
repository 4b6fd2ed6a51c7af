"""Radial spanning tree construction, queries, and the straightness profiler.

The parent map sends every point to its nearest neighbor that lies strictly
closer to the origin (the origin itself is always a candidate).  Queries run
on a uniform grid with an expanding-ring search whose radius is capped by
||x||, so every lookup terminates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rst_lab.ppp import EventCounter, LazyField, PointSet

TIE_EVENTS = EventCounter("tie_events")

_DENSE_CELL_LIMIT = 30_000_000
_RING_CACHE: dict = {}


def _ring_offsets(d: int, rho: int) -> np.ndarray:
    """Integer cell offsets at Chebyshev distance exactly rho."""
    key = (d, rho)
    cached = _RING_CACHE.get(key)
    if cached is None:
        if rho == 0:
            cached = np.zeros((1, d), dtype=np.int64)
        else:
            rng = np.arange(-rho, rho + 1, dtype=np.int64)
            mesh = np.meshgrid(*([rng] * d), indexing="ij")
            grid = np.stack([m.ravel() for m in mesh], axis=1)
            cached = grid[np.abs(grid).max(axis=1) == rho]
        _RING_CACHE[key] = cached
    return cached


def _shell_offsets(d: int, g: int) -> np.ndarray:
    """Cell offsets of search shell g: shell 0 is the full 3^d block (rings 0
    and 1 together, one batch saves a query round-trip); shell g>=1 is ring g+1."""
    if g == 0:
        key = (d, "block")
        cached = _RING_CACHE.get(key)
        if cached is None:
            rng = np.arange(-1, 2, dtype=np.int64)
            mesh = np.meshgrid(*([rng] * d), indexing="ij")
            cached = np.stack([m.ravel() for m in mesh], axis=1)
            _RING_CACHE[key] = cached
        return cached
    return _ring_offsets(d, g + 1)


def _lex_smaller(a: np.ndarray, b: np.ndarray) -> bool:
    for va, vb in zip(a, b):
        if va != vb:
            return va < vb
    return False


class StaticGrid:
    """Uniform-grid index over a fixed point array.

    Buckets are stored either as dense (starts, order) arrays or, when the
    bounding box has too many cells, as sorted flat keys with binary search.
    Results are identical either way.
    """

    def __init__(self, points: np.ndarray, cell_size: float = 1.0):
        pts = np.ascontiguousarray(np.asarray(points, dtype=float))
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        self.pts = pts
        self.n, self.d = pts.shape
        self.h = float(cell_size)
        self.norms2 = np.einsum("ij,ij->i", pts, pts)
        if self.n == 0:
            self.dense = True
            self.cmin = np.zeros(self.d, dtype=np.int64)
            self.dims = np.ones(self.d, dtype=np.int64)
            self.strides = np.ones(self.d, dtype=np.int64)
            self.starts = np.zeros(2, dtype=np.int64)
            self.order = np.empty(0, dtype=np.int64)
            return
        cells = np.floor(pts / self.h).astype(np.int64)
        self.cmin = cells.min(axis=0) - 1
        self.dims = cells.max(axis=0) - self.cmin + 2
        self.strides = np.concatenate(
            [np.cumprod(self.dims[::-1])[-2::-1], np.ones(1, dtype=np.int64)]
        )
        flat = (cells - self.cmin) @ self.strides
        size = int(np.prod(self.dims))
        self.dense = size <= _DENSE_CELL_LIMIT
        if self.dense:
            counts = np.bincount(flat, minlength=size)
            self.starts = np.zeros(size + 1, dtype=np.int64)
            np.cumsum(counts, out=self.starts[1:])
            self.order = np.argsort(flat, kind="stable")
        else:
            self.order = np.argsort(flat, kind="stable")
            self.sorted_keys = flat[self.order]

    def _bucket_chunks(self, cell_rows: np.ndarray, out: list) -> None:
        valid = np.all((cell_rows >= 0) & (cell_rows < self.dims), axis=1)
        if not np.any(valid):
            return
        keys = cell_rows[valid] @ self.strides
        if self.dense:
            lo = self.starts[keys]
            hi = self.starts[keys + 1]
        else:
            lo = np.searchsorted(self.sorted_keys, keys, side="left")
            hi = np.searchsorted(self.sorted_keys, keys, side="right")
        for s, e in zip(lo, hi):
            if e > s:
                out.append(self.order[s:e])

    def nearest_smaller_norm(self, x: np.ndarray, norm2_bound: float) -> tuple[int, float]:
        """Index of the nearest point with ||p||^2 < norm2_bound, or -1 for the origin.

        The origin enters the competition at distance sqrt(norm2_bound); exact
        distance ties are broken lexicographically and counted in TIE_EVENTS.
        """
        x = np.asarray(x, dtype=float)
        best_d2 = norm2_bound
        best = -1
        cx = np.floor(x / self.h).astype(np.int64) - self.cmin
        interior = bool(np.all(cx >= 1) and np.all(cx <= self.dims - 2))
        g = 0
        while True:
            if g == 0 and interior and self.dense:
                # 3^d block, no bounds mask needed: data cells sit at least
                # one padding cell away from the bounding-box edge.
                keys = int(cx @ self.strides) + self._block_keys()
                lo = self.starts[keys]
                hi = self.starts[keys + 1]
                chunks = [self.order[s:e] for s, e in zip(lo, hi) if e > s]
            else:
                chunks = []
                self._bucket_chunks(cx + _shell_offsets(self.d, g), chunks)
            if chunks:
                cand = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
                cand = cand[self.norms2[cand] < norm2_bound]
                if cand.size:
                    diff = self.pts[cand] - x
                    d2 = np.einsum("ij,ij->i", diff, diff)
                    k = int(np.argmin(d2))
                    dmin = float(d2[k])
                    winner = int(cand[k])
                    eq = np.flatnonzero(d2 == dmin)
                    if eq.size > 1:
                        TIE_EVENTS.add(eq.size - 1)
                        for j in eq[1:]:
                            if _lex_smaller(self.pts[cand[j]], self.pts[winner]):
                                winner = int(cand[j])
                    if dmin < best_d2:
                        best_d2, best = dmin, winner
                    elif dmin == best_d2:
                        TIE_EVENTS.add(1)
                        incumbent = np.zeros(self.d) if best == -1 else self.pts[best]
                        if _lex_smaller(self.pts[winner], incumbent):
                            best = winner
            edge = (g + 1) * self.h
            if edge * edge >= best_d2:
                return best, math.sqrt(best_d2)
            g += 1

    def _block_keys(self) -> np.ndarray:
        keys = getattr(self, "_block_keys_cache", None)
        if keys is None:
            keys = _shell_offsets(self.d, 0) @ self.strides
            self._block_keys_cache = keys
        return keys

    def indices_in_lens(self, center: np.ndarray, radius: float, norm2_bound: float) -> np.ndarray:
        """Points strictly inside B(center, radius) with ||p||^2 < norm2_bound."""
        center = np.asarray(center, dtype=float)
        cx = np.floor(center / self.h).astype(np.int64) - self.cmin
        max_rho = int(math.floor(radius / self.h)) + 1
        chunks: list = []
        for rho in range(max_rho + 1):
            self._bucket_chunks(cx + _ring_offsets(self.d, rho), chunks)
        if not chunks:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(chunks)
        diff = self.pts[cand] - center
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = (d2 < radius * radius) & (self.norms2[cand] < norm2_bound)
        return cand[keep]


class LazyGrid:
    """Grid search over a LazyField, realizing cells only when touched."""

    def __init__(self, field: LazyField):
        self.field = field
        self.d = field.dimension
        self.h = field.cell_size
        self._cells: dict = {}

    def _ensure(self, cell_rows: np.ndarray) -> None:
        missing = [tuple(int(v) for v in row) for row in cell_rows]
        missing = [c for c in missing if c not in self._cells]
        if not missing:
            return
        block = np.asarray(missing, dtype=np.int64)
        pts, owner = self.field.realize_block(block)
        norms2 = np.einsum("ij,ij->i", pts, pts) if pts.shape[0] else np.empty(0)
        for i, cell in enumerate(missing):
            sel = owner == i
            self._cells[cell] = (pts[sel], norms2[sel])

    def _gather(self, cell_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        self._ensure(cell_rows)
        pts = []
        norms2 = []
        for row in cell_rows:
            p, n2 = self._cells[tuple(int(v) for v in row)]
            if p.shape[0]:
                pts.append(p)
                norms2.append(n2)
        if not pts:
            return np.empty((0, self.d)), np.empty(0)
        return np.vstack(pts), np.concatenate(norms2)

    def nearest_smaller_norm(
        self, x: np.ndarray, norm2_bound: float
    ) -> tuple[np.ndarray | None, float, float]:
        """Nearest field point with ||p||^2 < norm2_bound (None means the origin wins).

        Returns (point-or-None, distance, stored ||p||^2 of the winner); the
        stored norm must be reused by callers that chain queries, so strict
        norm comparisons stay consistent with the grid's own bookkeeping.
        """
        x = np.asarray(x, dtype=float)
        best_d2 = norm2_bound
        best: np.ndarray | None = None
        best_n2 = 0.0
        cx = np.floor(x / self.h).astype(np.int64)
        g = 0
        while True:
            pts, norms2 = self._gather(cx + _shell_offsets(self.d, g))
            if pts.shape[0]:
                sel = norms2 < norm2_bound
                pts = pts[sel]
                norms2 = norms2[sel]
                if pts.shape[0]:
                    diff = pts - x
                    d2 = np.einsum("ij,ij->i", diff, diff)
                    k = int(np.argmin(d2))
                    dmin = float(d2[k])
                    eq = np.flatnonzero(d2 == dmin)
                    if eq.size > 1:
                        TIE_EVENTS.add(eq.size - 1)
                        for j in eq[1:]:
                            if _lex_smaller(pts[j], pts[k]):
                                k = int(j)
                    if dmin < best_d2:
                        best_d2, best, best_n2 = dmin, pts[k].copy(), float(norms2[k])
                    elif dmin == best_d2 and best is not None:
                        TIE_EVENTS.add(1)
                        if _lex_smaller(pts[k], best):
                            best, best_n2 = pts[k].copy(), float(norms2[k])
            edge = (g + 1) * self.h
            if edge * edge >= best_d2:
                return best, math.sqrt(best_d2), best_n2
            g += 1

    def points_in_lens(self, center: np.ndarray, radius: float, norm2_bound: float) -> np.ndarray:
        center = np.asarray(center, dtype=float)
        cx = np.floor(center / self.h).astype(np.int64)
        max_rho = int(math.floor(radius / self.h)) + 1
        rows = np.concatenate([cx + _ring_offsets(self.d, rho) for rho in range(max_rho + 1)])
        pts, norms2 = self._gather(rows)
        if not pts.shape[0]:
            return pts
        diff = pts - center
        d2 = np.einsum("ij,ij->i", diff, diff)
        return pts[(d2 < radius * radius) & (norms2 < norm2_bound)]


def psi(x, source) -> np.ndarray:
    """Nearest point of ``source`` (plus the origin) strictly closer to 0 than x.

    ``source`` may be a PointSet, a LazyField, or a prebuilt grid.  Returns the
    winning coordinates; the origin is returned as the zero vector.
    """
    x = np.asarray(x, dtype=float)
    n2 = float(x @ x)
    if n2 == 0.0:
        raise ValueError("psi is undefined at the origin (use the 0 convention upstream)")
    if isinstance(source, PointSet):
        source = StaticGrid(source.points)
    elif isinstance(source, LazyField):
        source = LazyGrid(source)
    if isinstance(source, StaticGrid):
        idx, _ = source.nearest_smaller_norm(x, n2)
        return np.zeros(x.shape[0]) if idx < 0 else source.pts[idx].copy()
    pt, _, _ = source.nearest_smaller_norm(x, n2)
    return np.zeros(x.shape[0]) if pt is None else np.asarray(pt, dtype=float)


@dataclass
class RstTree:
    """Parent map over a sampled point set plus the origin (sentinel id 0)."""

    dimension: int
    vertices: PointSet
    parent_ids: np.ndarray

    def __post_init__(self):
        self.parent_ids = np.asarray(self.parent_ids, dtype=np.int64).reshape(-1)
        if self.parent_ids.shape[0] != len(self.vertices):
            raise ValueError("one parent per vertex required")
        if np.any(self.vertices.ids == 0):
            raise ValueError("vertex id 0 is reserved for the origin")

    def __len__(self) -> int:
        return len(self.vertices)

    def parent_index(self) -> np.ndarray:
        """Internal parent row index per vertex; -1 encodes the origin."""
        id_to_row = {int(v): i for i, v in enumerate(self.vertices.ids)}
        out = np.empty(len(self), dtype=np.int64)
        for i, pid in enumerate(self.parent_ids):
            out[i] = -1 if pid == 0 else id_to_row[int(pid)]
        return out

    def validate(self) -> None:
        """Check norm decrease, acyclicity, connectivity, and edge count."""
        norms = self.vertices.norms()
        pidx = self.parent_index()
        parent_norms = np.where(pidx < 0, 0.0, norms[np.clip(pidx, 0, None)])
        if not np.all(parent_norms < norms):
            raise AssertionError("parent norms must strictly decrease")
        # Pointer jumping: every vertex must reach the origin without revisits.
        cur = pidx.copy()
        steps = 0
        while np.any(cur >= 0):
            cur = np.where(cur >= 0, pidx[np.clip(cur, 0, None)], cur)
            steps += 1
            if steps > len(self) + 1:
                raise AssertionError("cycle detected in parent map")
        if self.parent_ids.shape[0] != len(self.vertices):
            raise AssertionError("edge count must equal vertex count")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("child_id,parent_id\n")
            for cid, pid in zip(self.vertices.ids, self.parent_ids):
                fh.write(f"{cid},{pid}\n")

    @classmethod
    def from_csv(cls, path, vertices: PointSet) -> "RstTree":
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header != "child_id,parent_id":
                raise ValueError(f"unexpected tree CSV header: {header}")
            pairs = {int(a): int(b) for a, b in (line.strip().split(",") for line in fh if line.strip())}
        parent_ids = np.asarray([pairs[int(v)] for v in vertices.ids], dtype=np.int64)
        return cls(vertices.dimension, vertices, parent_ids)


def build_rst(points: PointSet, cell_size: float | None = None) -> RstTree:
    """Exact RST over a point set sampled from a ball around the origin.

    Parents always have strictly smaller norm, so a window B(0, R) determines
    the parents of all its points exactly; no boundary correction is needed.
    """
    d = points.dimension
    if cell_size is None:
        cell_size = 1.25 if d == 2 else 1.0
    grid = StaticGrid(points.points, cell_size)
    n = len(points)
    parent_ids = np.empty(n, dtype=np.int64)
    ids = points.ids
    pts = points.points
    norms2 = grid.norms2
    for i in range(n):
        idx, _ = grid.nearest_smaller_norm(pts[i], norms2[i])
        parent_ids[i] = 0 if idx < 0 else ids[idx]
    return RstTree(d, points, parent_ids)


def brute_force_rst(points: PointSet) -> RstTree:
    """Quadratic oracle: full distance matrix, same tie rule, no spatial index."""
    n = len(points)
    pts = points.points
    norms = np.linalg.norm(pts, axis=1)
    parent_ids = np.empty(n, dtype=np.int64)
    for i in range(n):
        cand = np.flatnonzero(norms < norms[i])
        best_id = 0
        best_d = norms[i]
        best_pt = np.zeros(points.dimension)
        for j in cand:
            dist = float(np.linalg.norm(pts[j] - pts[i]))
            if dist < best_d or (dist == best_d and _lex_smaller(pts[j], best_pt)):
                best_d = dist
                best_id = int(points.ids[j])
                best_pt = pts[j]
        parent_ids[i] = best_id
    return RstTree(points.dimension, points, parent_ids)


@dataclass
class StraightnessProfile:
    """Per-vertex maximal angular spread of the subtree rooted at that vertex."""

    ids: np.ndarray
    norms: np.ndarray
    max_angle: np.ndarray

    def violations(self, epsilon: float) -> np.ndarray:
        """Vertex ids whose subtree spread exceeds ||u||^(-1/2+epsilon)."""
        return self.ids[self.max_angle > self.norms ** (-0.5 + epsilon)]

    def band_median(self, lo: float, hi: float) -> float:
        sel = (self.norms >= lo) & (self.norms < hi)
        return float(np.median(self.max_angle[sel])) if np.any(sel) else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("vertex_id,norm,max_angle\n")
            for vid, nv, ang in zip(self.ids, self.norms, self.max_angle):
                fh.write("%d,%.17g,%.17g\n" % (vid, nv, ang))


def straightness_profile(tree: RstTree) -> StraightnessProfile:
    """Max over each subtree of the angle between descendant and root directions.

    One bottom-up sweep: every vertex walks its ancestor chain once, folding
    cos(v, u) minima into the ancestors with a scatter-min; O(sum of depths).
    """
    n = len(tree)
    pts = tree.vertices.points
    norms = tree.vertices.norms()
    if np.any(norms == 0):
        raise ValueError("vertices at the origin are not admissible")
    dirs = pts / norms[:, None]
    pidx = tree.parent_index()
    min_cos = np.ones(n)
    cur = pidx.copy()
    active = np.flatnonzero(cur >= 0)
    while active.size:
        anc = cur[active]
        dots = np.einsum("ij,ij->i", dirs[active], dirs[anc])
        np.minimum.at(min_cos, anc, dots)
        cur[active] = pidx[anc]
        active = active[cur[active] >= 0]
    max_angle = np.arccos(np.clip(min_cos, -1.0, 1.0))
    return StraightnessProfile(tree.vertices.ids.copy(), norms, max_angle)


def in_degree_histogram(tree: RstTree) -> dict[int, int]:
    """Histogram of in-degrees over all vertices plus the origin."""
    pidx = tree.parent_index()
    indeg = np.bincount(pidx + 1, minlength=len(tree) + 1)  # slot 0 is the origin
    values, counts = np.unique(indeg, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def check_planarity(tree: RstTree) -> list[tuple[int, int]]:
    """Proper pairwise edge crossings of a planar embedding (d = 2 only).

    Grid-bucketed segment-intersection scan; pairs sharing an endpoint are
    excluded.  Returns (child_id_a, child_id_b) for each crossing pair.
    """
    if tree.dimension != 2:
        raise ValueError("planarity check requires dimension 2")
    n = len(tree)
    if n < 2:
        return []
    a = tree.vertices.points
    pidx = tree.parent_index()
    b = np.where(pidx[:, None] < 0, 0.0, a[np.clip(pidx, 0, None)])
    lengths = np.linalg.norm(a - b, axis=1)
    h = max(1.0, float(lengths.max()) * 1.0001)
    lo = np.floor(np.minimum(a, b) / h).astype(np.int64)
    hi = np.floor(np.maximum(a, b) / h).astype(np.int64)
    # Each edge spans at most 2 cells per axis since its length is <= h.
    edge_ids = []
    cell_keys = []
    span = int(max(np.abs(lo).max(), np.abs(hi).max())) + 2
    for dx in (0, 1):
        for dy in (0, 1):
            cx = np.minimum(lo[:, 0] + dx, hi[:, 0])
            cy = np.minimum(lo[:, 1] + dy, hi[:, 1])
            cell_keys.append((cx + span) * (2 * span + 1) + (cy + span))
            edge_ids.append(np.arange(n))
    keys = np.concatenate(cell_keys)
    eids = np.concatenate(edge_ids)
    pair_sets = []
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    eids = eids[order]
    starts = np.flatnonzero(np.concatenate([[True], keys[1:] != keys[:-1]]))
    bounds = np.concatenate([starts, [keys.size]])
    for s, e in zip(bounds[:-1], bounds[1:]):
        bucket = np.unique(eids[s:e])
        if bucket.size > 1:
            ii, jj = np.triu_indices(bucket.size, k=1)
            pair_sets.append(np.stack([bucket[ii], bucket[jj]], axis=1))
    if not pair_sets:
        return []
    pairs = np.unique(np.vstack(pair_sets), axis=0)
    i, j = pairs[:, 0], pairs[:, 1]
    # Drop pairs sharing a vertex (by id, origin included).
    ids = tree.vertices.ids
    pids = tree.parent_ids
    share = (
        (ids[i] == pids[j])
        | (ids[j] == pids[i])
        | (pids[i] == pids[j])
    )
    pairs = pairs[~share]
    i, j = pairs[:, 0], pairs[:, 1]

    def cross(o, p, q):
        return (p[:, 0] - o[:, 0]) * (q[:, 1] - o[:, 1]) - (p[:, 1] - o[:, 1]) * (q[:, 0] - o[:, 0])

    a1, b1, a2, b2 = a[i], b[i], a[j], b[j]
    d1 = cross(a1, b1, a2)
    d2 = cross(a1, b1, b2)
    d3 = cross(a2, b2, a1)
    d4 = cross(a2, b2, b1)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    return [(int(ids[x]), int(ids[y])) for x, y in pairs[crossing]]


def write_crossings_csv(path, crossings: list[tuple[int, int]]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("edge_a_child,edge_b_child\n")
        for x, y in crossings:
            fh.write(f"{x},{y}\n")
