import math

import numpy as np
import pytest

from rst_lab.exploration import (
    Constants,
    delta_default,
    deviation_sup,
    explore,
    lambda_default,
    perp_basis,
    pi_up,
    renewal_increments,
    run_coupling,
    write_renewals_csv,
    write_trace_csv,
)
from rst_lab.geom import alpha, reflect_points
from rst_lab.ppp import LazyField, PointSet, RegionSpec, realize_cells
from rst_lab.rst_core import StaticGrid, psi

CAMPAIGN = Constants(kappa=1.05, lam=0.25)


def vec(*xs):
    return np.asarray(xs, dtype=float)


def eager_grid(seed, radius, d=2):
    field = LazyField(dimension=d, global_seed=seed)
    return StaticGrid(realize_cells(field, RegionSpec("ball", r_outer=radius)).points)


class TestConstants:
    def test_lambda_formula(self):
        for d in (2, 3, 5):
            assert lambda_default(d) == pytest.approx((alpha(0.5) / 2) ** d / (4 * d), rel=1e-15)

    def test_delta_formula(self):
        assert delta_default() == pytest.approx(alpha(0.5) / 8, rel=1e-15)

    def test_a_exponent(self):
        c = Constants(epsilon=0.25)
        assert c.a_exponent == pytest.approx(0.8 * 0.5 / 1.5, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            Constants(kappa=1.0)
        with pytest.raises(ValueError):
            Constants(epsilon=0.5)
        with pytest.raises(ValueError):
            Constants(epsilon=0.0)

    def test_overrides(self):
        c = Constants(lam=0.3, delta=0.01)
        assert c.lam_for(2) == 0.3 and c.delta_value() == 0.01


class TestPiUp:
    def test_radial_shift(self):
        assert np.allclose(pi_up(vec(10, 0), 2.0), vec(8, 0))
        assert np.allclose(pi_up(vec(0, 5), 2.0), vec(0, 3))

    def test_zero_convention(self):
        assert np.array_equal(pi_up(vec(0, 0), 2.0), vec(0, 0))

    def test_collinear(self):
        x = vec(3, 4)
        up = pi_up(x, 2.0)
        assert np.linalg.norm(up) == pytest.approx(3.0, abs=1e-12)
        assert abs(up[0] * x[1] - up[1] * x[0]) <= 1e-12


class TestExplore:
    def test_empty_field_one_step(self):
        empty = PointSet(2, np.empty((0, 2)), np.empty(0, dtype=np.int64))
        path, trace = explore(vec(5, 0), StaticGrid(empty.points), Constants())
        assert path.shape == (2, 2)
        assert np.array_equal(path[1], vec(0, 0))
        assert trace.n_steps == 1

    def test_start_at_origin_rejected(self):
        with pytest.raises(ValueError):
            explore(vec(0, 0), eager_grid(1, 5.0), Constants())

    def test_invariant_run(self):
        grid = eager_grid(7, 100.0)
        path, trace = explore(vec(100, 0), grid, Constants())
        assert np.array_equal(path[-1], vec(0, 0))
        assert np.all(np.diff(trace.R) < 0)
        assert np.all(np.diff(trace.r) <= 0)
        assert np.all(trace.L >= 0)
        norms = np.linalg.norm(path, axis=1)
        assert np.max(np.abs(norms - trace.R)) <= 1e-12 * max(1.0, trace.R[0])

    def test_identity_step_drop(self):
        for seed in range(10):
            _, trace = explore(vec(60, 0), eager_grid(100 + seed, 60.0), Constants())
            lhs = np.maximum(trace.step_lens - trace.L[:-1], 0.0)
            rhs = trace.r[:-1] - trace.r[1:]
            assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_incremental_matches_bruteforce_recompute(self):
        # recompute r_n and L_n from the full lens list at every step
        for seed in range(50):
            path, trace = explore(vec(30, 0), eager_grid(500 + seed, 30.0), Constants())
            R = trace.R
            inner = np.maximum(R[:-1] - trace.step_lens, 0.0)
            for n in range(len(R)):
                r_exp = R[n] if n == 0 else min(R[n], inner[:n].min())
                assert trace.r[n] == pytest.approx(r_exp, abs=1e-12)
                assert trace.L[n] == pytest.approx(R[n] - r_exp, abs=1e-12)

    def test_r_matches_sampled_lens_minima(self):
        # min ||x|| over the history, probed by uniform samples plus inward
        # segment probes inside the deepest lenses
        rng = np.random.default_rng(0)
        checked = 0
        seed = 0
        while checked < 1000:
            seed += 1
            path, trace = explore(vec(25, 0), eager_grid(900 + seed, 25.0), Constants())
            steps = trace.n_steps
            if steps < 3:
                continue
            for n in rng.choice(np.arange(2, steps + 1), size=min(25, steps - 1), replace=False):
                lenses = trace.history(path, int(n))
                best = math.inf
                for lens in lenses:
                    if lens.radius == 0.0:
                        continue
                    z = lens.center + rng.uniform(-lens.radius, lens.radius, (60, len(lens.center)))
                    keep = (np.linalg.norm(z - lens.center, axis=1) < lens.radius) & (
                        np.linalg.norm(z, axis=1) < lens.center_norm
                    )
                    if keep.any():
                        best = min(best, float(np.linalg.norm(z[keep], axis=1).min()))
                    t_max = min(lens.radius / lens.center_norm, 1.0)
                    t = t_max * (1.0 - rng.uniform(0.0, 1.0, 12) * 1e-4)
                    probes = lens.center[None, :] * (1.0 - t)[:, None]
                    best = min(best, float(np.linalg.norm(probes, axis=1).min()))
                r_def = min(trace.R[n], best)
                assert r_def >= trace.r[n] - 1e-12
                assert r_def - trace.r[n] <= 1e-3
                checked += 1

    def test_theta_definition(self):
        c = Constants()
        path, trace = explore(vec(50, 0), eager_grid(42, 50.0), c)
        lam = c.lam_for(2)
        for n in range(trace.theta):
            assert trace.R[n] >= 1 + c.kappa
            assert trace.L[n] ** 3 <= lam * trace.R[n]
        th = trace.theta
        assert trace.R[th] < 1 + c.kappa or trace.L[th] ** 3 > lam * trace.R[th]

    def test_tau_block_radial_drop(self):
        for seed in range(20):
            _, trace = explore(vec(80, 0), eager_grid(2000 + seed, 80.0), CAMPAIGN)
            for i in range(len(trace.tau) - 1):
                if trace.tau[i + 1] < trace.theta:
                    drop = trace.R[trace.tau[i]] - trace.R[trace.tau[i + 1]]
                    assert drop >= CAMPAIGN.kappa + 1.0
                    assert trace.L[trace.tau[i + 1]] < CAMPAIGN.kappa

    def test_i_theta_bounded_by_start_norm(self):
        for seed in range(20):
            _, trace = explore(vec(40, 0), eager_grid(3000 + seed, 40.0), CAMPAIGN)
            assert trace.i_theta <= 40.0
            assert trace.w[-1] == trace.theta
            assert all(a <= b for a, b in zip(trace.w, trace.w[1:]))

    def test_q_event_implies_shared_parent(self):
        # whenever the pseudo-renewal fires, the step from pi and from pi-up
        # must land on the same point, exactly
        found = 0
        seed = 0
        while found < 12 and seed < 200:
            seed += 1
            grid = eager_grid(4000 + seed, 60.0)
            path, trace = explore(vec(60, 0), grid, CAMPAIGN)
            for i, q in enumerate(trace.q_flags):
                if not q:
                    continue
                t = trace.tau[i]
                up = pi_up(path[t], CAMPAIGN.kappa)
                assert np.array_equal(psi(up, grid), path[t + 1])
                found += 1
        assert found >= 12

    def test_stop_at_theta(self):
        path, trace = explore(vec(100, 0), LazyField(dimension=2, global_seed=5), Constants(), stop="theta")
        assert trace.n_steps == trace.theta
        assert trace.R[-1] > 0 or trace.theta == trace.n_steps

    def test_eager_and_lazy_traces_agree(self):
        for d, R in ((2, 25.0), (3, 12.0)):
            field = LazyField(dimension=d, global_seed=88)
            pi0 = np.zeros(d)
            pi0[0] = R
            path_l, tr_l = explore(pi0, field, Constants())
            grid = StaticGrid(realize_cells(field, RegionSpec("ball", r_outer=R)).points)
            path_e, tr_e = explore(pi0, grid, Constants())
            assert np.array_equal(path_l, path_e)
            assert np.max(np.abs(tr_l.R - tr_e.R)) <= 1e-12 * max(1.0, R)
            assert np.max(np.abs(tr_l.r - tr_e.r)) <= 1e-12 * max(1.0, R)
            assert tr_l.theta == tr_e.theta and tr_l.tau == tr_e.tau


class TestDeviation:
    def test_radial_path_zero(self):
        path = np.array([[4.0, 0.0], [2.0, 0.0], [0.0, 0.0]])
        assert deviation_sup(path, vec(4, 0)) == 0.0

    def test_example_path(self):
        path = np.array([[4.0, 0.0], [2.0, 1.0], [0.0, 0.0]])
        assert deviation_sup(path, vec(4, 0)) == pytest.approx(1.0, abs=1e-15)

    def test_rotation_invariance(self):
        grid = eager_grid(9, 60.0)
        pi0 = vec(60, 0)
        path, _ = explore(pi0, grid, Constants())
        theta = 1.234
        Q = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        rotated = StaticGrid(grid.pts @ Q.T)
        path_r, _ = explore(Q @ pi0, rotated, Constants())
        a = deviation_sup(path, pi0)
        b = deviation_sup(path_r, Q @ pi0)
        assert abs(a - b) <= 1e-9


class TestPerpBasis:
    def test_orthonormal(self):
        rng = np.random.default_rng(1)
        for d in (2, 3, 5):
            for _ in range(20):
                x = rng.normal(size=d)
                B = perp_basis(x)
                assert B.shape == (d - 1, d)
                assert np.allclose(B @ B.T, np.eye(d - 1), atol=1e-12)
                assert np.allclose(B @ x, 0.0, atol=1e-10 * np.linalg.norm(x))


class TestRenewalIncrements:
    def test_telescoping_and_lengths(self):
        for seed in range(10):
            path, trace = explore(vec(70, 0), eager_grid(6000 + seed, 70.0), CAMPAIGN)
            blocks = renewal_increments(trace, path)
            if not blocks:
                continue
            total = np.sum([b.delta for b in blocks], axis=0)
            want = path[trace.w[-1]] - path[trace.w[0]]
            assert np.allclose(total, want, atol=1e-9)
            for b in blocks:
                assert b.block_length >= np.linalg.norm(b.delta) - 1e-9

    def test_single_block(self):
        path, trace = explore(vec(100, 0), eager_grid(5, 100.0), Constants())
        blocks = renewal_increments(trace, path)
        assert len(blocks) == len(trace.w) - 1
        if blocks:
            assert blocks[0].w_start == 0


class TestCoupling:
    def test_no_renewal_outcome(self):
        # default constants make pseudo-renewals essentially unobservable
        rep = run_coupling(vec(60, 0), seed=1, constants=Constants())
        assert rep.outcome == "no-renewal"

    def test_exact_negation(self):
        seen = 0
        seed = 0
        while seen < 5 and seed < 100:
            seed += 1
            rep = run_coupling(vec(100, 0), seed=seed, constants=CAMPAIGN)
            if rep.outcome != "ok":
                continue
            seen += 1
            assert rep.prefix_exact
            assert rep.radial_match_error <= 1e-12 * 100
            assert rep.negation_error <= 1e-9
            assert rep.max_tail_negation_error <= 1e-9
        assert seen == 5

    def test_double_reflection_restores_path(self):
        field = LazyField(dimension=2, global_seed=77)
        base = realize_cells(field, RegionSpec("ball", r_outer=50.0))
        pi0 = vec(50, 0)
        path, trace = explore(pi0, StaticGrid(base.points), CAMPAIGN)
        axis = pi_up(path[min(5, trace.n_steps - 1)], CAMPAIGN.kappa)
        twice = reflect_points(axis, reflect_points(axis, base.points))
        path2, _ = explore(pi0, StaticGrid(twice), CAMPAIGN)
        assert path2.shape == path.shape
        assert np.max(np.linalg.norm(path2 - path, axis=1)) <= 1e-9


class TestTraceCsv:
    def test_trace_and_renewal_export(self, tmp_path):
        path, trace = explore(vec(40, 0), eager_grid(8, 40.0), CAMPAIGN)
        tfile = tmp_path / "trace.csv"
        write_trace_csv(tfile, path, trace)
        lines = tfile.read_text().splitlines()
        assert lines[0] == "n,x1,x2,R,r,L,is_tau,is_Q,is_w,theta"
        assert len(lines) == path.shape[0] + 1
        # R column strictly decreasing
        rs = [float(line.split(",")[3]) for line in lines[1:]]
        assert all(a > b for a, b in zip(rs, rs[1:]))
        rfile = tmp_path / "renewals.csv"
        write_renewals_csv(rfile, path, trace)
        assert (tmp_path / "renewals.csv").read_text().splitlines()[0] == (
            "block,w_start,w_end,block_length,perp1,perp2"
        )
