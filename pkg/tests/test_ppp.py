import math

import numpy as np
import pytest
from scipy import stats

from rst_lab.geom import Lens, ball_volume
from rst_lab.ppp import (
    DUPLICATE_REDRAWS,
    LazyField,
    PointSet,
    RegionSpec,
    mix64,
    read_points_csv,
    realize_cells,
    resample_region,
    sample_ball,
    stream_generator,
    write_points_csv,
)


def vec(*xs):
    return np.asarray(xs, dtype=float)


class TestMix64:
    def test_deterministic_and_sensitive(self):
        assert mix64(1, 2, 3) == mix64(1, 2, 3)
        assert mix64(1, 2, 3) != mix64(1, 2, 4)
        assert mix64(0) != mix64(1)

    def test_stream_generator_reproducible(self):
        a = stream_generator(5, 1).standard_normal(4)
        b = stream_generator(5, 1).standard_normal(4)
        assert np.array_equal(a, b)


class TestPointSet:
    def test_unique_ids_required(self):
        with pytest.raises(ValueError):
            PointSet(2, np.zeros((2, 2)), np.array([1, 1]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            PointSet(2, np.array([[np.nan, 0.0]]), np.array([1]))

    def test_csv_roundtrip_is_exact(self, tmp_path):
        ps = sample_ball(3, 4.0, seed=77)
        path = tmp_path / "pts.csv"
        write_points_csv(path, ps)
        back = read_points_csv(path)
        assert back.dimension == 3
        assert np.array_equal(back.points, ps.points)
        assert np.array_equal(back.ids, ps.ids)

    def test_csv_header_validated(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,a,b\n1,0,0\n")
        with pytest.raises(ValueError):
            read_points_csv(path)


class TestSampleBall:
    def test_determinism(self):
        a = sample_ball(2, 8.0, seed=3)
        b = sample_ball(2, 8.0, seed=3)
        assert np.array_equal(a.points, b.points)

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            sample_ball(2, 0.0, seed=1)

    def test_tiny_ball_usually_empty(self):
        counts = [len(sample_ball(2, 0.01, seed=s)) for s in range(200)]
        assert max(counts) <= 1 and sum(counts) == 0

    def test_count_moments(self):
        # mean count over 1000 seeds within 3 standard errors of pi * R^2
        mean = ball_volume(2, 10.0)
        counts = np.array([len(sample_ball(2, 10.0, seed=s)) for s in range(1000)])
        se = math.sqrt(mean / 1000)
        assert abs(counts.mean() - mean) <= 3 * se

    def test_points_inside_ball(self):
        ps = sample_ball(3, 5.0, seed=9)
        assert np.all(np.linalg.norm(ps.points, axis=1) < 5.0)

    def test_duplicate_counter_accessible(self):
        DUPLICATE_REDRAWS.reset()
        sample_ball(2, 5.0, seed=1)
        assert DUPLICATE_REDRAWS.value == 0  # duplicates have probability ~0


class TestLazyField:
    def test_cell_realization_idempotent(self):
        f = LazyField(dimension=2, global_seed=4)
        a = f.realize_cell((3, -2))
        b = f.realize_cell((3, -2))
        assert a is b  # cached
        g = LazyField(dimension=2, global_seed=4)
        assert np.array_equal(g.realize_cell((3, -2)), a)

    def test_block_matches_single_cells(self):
        f = LazyField(dimension=2, global_seed=11)
        cells = np.array([[0, 0], [1, 0], [-3, 2]])
        pts, owner = f.realize_block(cells)
        for i, cell in enumerate(map(tuple, cells)):
            single = LazyField(dimension=2, global_seed=11).realize_cell(cell)
            assert np.array_equal(pts[owner == i], single)

    def test_points_inside_their_cells(self):
        f = LazyField(dimension=3, global_seed=8, cell_size=2.0)
        pts = f.realize_cell((1, -1, 0))
        assert np.all(pts >= np.array([2.0, -2.0, 0.0])) and np.all(pts < np.array([4.0, 0.0, 2.0]))

    def test_count_law(self):
        f = LazyField(dimension=2, global_seed=12)
        cells = np.stack([np.arange(4000), np.zeros(4000, dtype=int)], axis=1)
        _, owner = f.realize_block(cells)
        counts = np.bincount(owner, minlength=4000)
        assert abs(counts.mean() - 1.0) <= 3 / math.sqrt(4000)
        assert abs(counts.var() - 1.0) <= 0.15  # Poisson(1) variance

    def test_concurrent_realization_is_interleaving_free(self):
        from concurrent.futures import ThreadPoolExecutor

        f = LazyField(dimension=2, global_seed=13)
        cells = [(i % 7 - 3, i // 7 - 3) for i in range(49)] * 8
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(f.realize_cell, cells))
        reference = LazyField(dimension=2, global_seed=13)
        for cell in set(cells):
            assert np.array_equal(f.realize_cell(cell), reference.realize_cell(cell))


class TestRealizeCells:
    def test_overlap_agreement(self):
        f = LazyField(dimension=2, global_seed=20)
        a = realize_cells(f, RegionSpec("ball", r_outer=6.0))
        b = realize_cells(f, RegionSpec("ball", r_outer=4.0))
        inner = a.points[np.linalg.norm(a.points, axis=1) < 4.0]
        assert np.array_equal(inner, b.points)

    def test_annulus(self):
        f = LazyField(dimension=2, global_seed=21)
        ann = realize_cells(f, RegionSpec("annulus", r_outer=6.0, r_inner=3.0))
        norms = np.linalg.norm(ann.points, axis=1)
        assert np.all((norms >= 3.0) & (norms < 6.0))

    def test_unbounded_rejected(self):
        with pytest.raises(ValueError):
            RegionSpec("ball", r_outer=math.inf)

    def test_partition_union_matches_ball_sampler_law(self):
        # Lazy union over an annulus partition vs direct ball sampling:
        # two-sample KS on counts and on pooled radial CDF must not reject.
        R = 6.0
        lazy_counts = []
        lazy_radii = []
        eager_counts = []
        eager_radii = []
        for s in range(300):
            f = LazyField(dimension=2, global_seed=900 + s)
            parts = [
                realize_cells(f, RegionSpec("annulus", r_outer=3.0, r_inner=0.0)),
                realize_cells(f, RegionSpec("annulus", r_outer=R, r_inner=3.0)),
            ]
            radii = np.concatenate([np.linalg.norm(p.points, axis=1) for p in parts])
            lazy_counts.append(radii.size)
            lazy_radii.append(radii)
            ps = sample_ball(2, R, seed=5000 + s)
            eager_counts.append(len(ps))
            eager_radii.append(np.linalg.norm(ps.points, axis=1))
        ks_counts = stats.ks_2samp(lazy_counts, eager_counts)
        ks_radii = stats.ks_2samp(np.concatenate(lazy_radii), np.concatenate(eager_radii))
        assert ks_counts.pvalue > 0.01
        assert ks_radii.pvalue > 0.01

    def test_disjoint_region_counts_uncorrelated(self):
        counts_a = []
        counts_b = []
        for s in range(2000):
            f = LazyField(dimension=2, global_seed=3000 + s)
            a = realize_cells(f, RegionSpec("annulus", r_outer=2.0, r_inner=0.0))
            b = realize_cells(f, RegionSpec("annulus", r_outer=3.0, r_inner=2.0))
            counts_a.append(len(a))
            counts_b.append(len(b))
        rho = np.corrcoef(counts_a, counts_b)[0, 1]
        assert abs(rho) < 0.1


class TestResampleRegion:
    def _base(self):
        return sample_ball(2, 6.0, seed=40)

    def test_empty_region_keeps_base(self):
        base = self._base()
        out = resample_region(base, RegionSpec("annulus", r_outer=1e-9, r_inner=0.0), seed=1)
        assert np.array_equal(out.points, base.points)
        assert np.array_equal(out.ids, base.ids)

    def test_whole_window_is_fresh(self):
        base = self._base()
        out = resample_region(base, RegionSpec("ball", r_outer=6.0), seed=2)
        assert len(out) > 0
        # no base point survives inside the resampled window
        assert not np.isin(out.ids, base.ids).any()

    def test_lenses_stay_empty(self):
        base = self._base()
        lenses = (Lens(vec(3, 0), 1.0), Lens(vec(-2, 2), 0.8))
        region = RegionSpec("ball_minus_lenses", r_outer=5.0, lenses=lenses)
        out = resample_region(base, region, seed=3)
        for lens in lenses:
            inside = (np.linalg.norm(out.points - lens.center, axis=1) <= lens.radius) & (
                np.linalg.norm(out.points, axis=1) <= lens.center_norm
            )
            assert not inside.any()

    def test_kept_points_outside_region(self):
        base = self._base()
        region = RegionSpec("ball", r_outer=3.0)
        out = resample_region(base, region, seed=4)
        kept = np.isin(out.ids, base.ids)
        # every surviving base id sits outside the resampled ball
        assert np.all(np.linalg.norm(out.points[kept], axis=1) >= 3.0)

    def test_fresh_count_law(self):
        base = self._base()
        region = RegionSpec("ball", r_outer=4.0)
        counts = [
            (~np.isin(resample_region(base, region, seed=s).ids, base.ids)).sum()
            for s in range(400)
        ]
        mean = ball_volume(2, 4.0)
        assert abs(np.mean(counts) - mean) <= 3 * math.sqrt(mean / 400)
