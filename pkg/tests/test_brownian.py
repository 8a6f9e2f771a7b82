import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpzlab import brownian as bm
from kpzlab import rng
from kpzlab.stats import ks_two_sample
from kpzlab.uc import Grid, GridFunction


def gen(*path):
    return rng.generator(2024, *path)


class TestEnsembleSpec:
    def test_orders_enforced(self):
        with pytest.raises(ValueError):
            bm.DriftedEnsembleSpec(0, (1, 0), (0, 0))
        with pytest.raises(ValueError):
            bm.DriftedEnsembleSpec(0, (0, 0), (1, 0))

    def test_flags(self):
        s = bm.DriftedEnsembleSpec(0, (0, 0), (0, 1))
        assert s.pointed and not s.parallel and s.n == 2


class TestBrownianMotion:
    def test_moments(self):
        g = Grid(0, 1, 0.5)
        B = bm.bm_batch(gen(1), 100_000, 0.0, g)
        inc = B[:, -1] - B[:, 0]
        assert abs(inc.mean()) < 0.02
        assert abs(inc.var() - 2.0) < 0.05
        assert abs(bm.bm_batch(gen(2), 100_000, 3.0, g)[:, -1].mean() - 3.0) < 0.02

    def test_sample_bm_deterministic(self):
        g = Grid(0, 2, 0.1)
        a = bm.sample_bm(0.5, g, 11)
        assert a.values[0] == 0
        assert np.array_equal(a.values, bm.sample_bm(0.5, g, 11).values)

    def test_disjoint_increments_uncorrelated(self):
        B = bm.bm_batch(gen(3), 50_000, 0.0, Grid(0, 2, 1.0))
        c = np.corrcoef(B[:, 1] - B[:, 0], B[:, 2] - B[:, 1])[0, 1]
        assert abs(c) < 0.02


class TestLastPassage:
    def test_single_line(self):
        spec = bm.DriftedEnsembleSpec(0.0, (1.5,), (0.3,))
        g = Grid(-0.5, 1.0, 0.1)
        L = bm.blp_sample(spec, g, 5)
        assert np.all(np.isneginf(L.values[:5]))
        assert L.values[5] == pytest.approx(1.5)

    def test_monotone_in_heights(self):
        g = Grid(0, 1, 0.01)
        base = bm.blp_sample(bm.DriftedEnsembleSpec(0, (0, 0.2, 0.5), (0, 0, 0)), g, 8).values
        up = bm.blp_sample(bm.DriftedEnsembleSpec(0, (0, 0.7, 0.7), (0, 0, 0)), g, 8).values
        assert np.all(up >= base - 1e-12)
        assert np.all(up <= base + 0.5 + 1e-12)

    def test_scan_matches_brute_force(self):
        r = np.random.default_rng(0)
        inc = r.standard_normal((3, 12))
        h = np.array([0.0, -0.3, 0.4])
        S = np.concatenate([np.zeros((3, 1)), np.cumsum(inc, axis=1)], axis=1)

        # brute force over integer jump times, entering at any line
        def lpp(k):
            out = -np.inf
            for start in range(3):
                for t1 in range(k + 1):
                    for t2 in range(t1, k + 1):
                        times = [0, t1, t2, k]
                        val = h[start] + S[start, times[start + 1]] - S[start, 0]
                        for line in range(start + 1, 3):
                            val += S[line, times[line + 1]] - S[line, times[line]]
                        if start == 1 and t1 != 0:
                            continue
                        if start == 2 and (t1 != 0 or t2 != 0):
                            continue
                        out = max(out, val)
            return out

        G = bm.last_passage_scan(h, inc)
        for k in (0, 3, 7, 12):
            assert G[k] == pytest.approx(lpp(k))

    def test_two_line_exact_law(self):
        """Bridge-corrected scan agrees in law with the exact two-line sampler."""
        N = 40_000
        a = bm.blp_batch(gen(4), N, [0, 0], [0, 0], 0.0, [1.0], step=0.02)[:, 0]
        b = bm.blp_two_line_exact_batch(gen(5), N, np.zeros(2), 0.0, 1.0)
        assert ks_two_sample(a, b) < 0.015

    def test_grid_only_scan_is_biased_low(self):
        N = 20_000
        raw = bm.blp_batch(gen(6), N, [0, 0, 0], [0, 0, 0], 0.0, [1.0], step=0.05, bridge=False)[:, 0]
        fixed = bm.blp_batch(gen(6), N, [0, 0, 0], [0, 0, 0], 0.0, [1.0], step=0.05)[:, 0]
        assert raw.mean() < fixed.mean() - 0.1

    def test_kernel_quadrangle_exact(self):
        K = bm.blp_kernel_batch(gen(7), 200, 4, [0, 0.3, 0.6], [1.0, 1.4, 1.9], 0.01)
        lhs = K[:, :-1, :-1] + K[:, 1:, 1:]
        rhs = K[:, :-1, 1:] + K[:, 1:, :-1]
        assert np.all(lhs >= rhs)

    def test_kernel_minus_inf_below_diagonal(self):
        K = bm.blp_kernel_batch(gen(8), 3, 2, [1.0], [0.5, 1.5], 0.1)
        assert np.all(np.isneginf(K[:, 0, 0]))
        assert np.all(np.isfinite(K[:, 0, 1]))


class TestEdgeProcess:
    def test_n1_normal(self):
        v = bm.pointed_ep_batch(gen(9), 100_000, 0.0, 0.5, [1.0], 2.0)
        assert abs(v.mean() - 2.5) < 0.03
        assert abs(v.var() - 4.0) < 0.08

    def test_n_zero_rejected(self):
        with pytest.raises(ValueError):
            bm.pointed_ep_sample_gue(0, 0, 0, [], 1, 1)
        with pytest.raises(ValueError):
            bm.pointed_ep_batch(gen(0), 1, 1.0, 0.0, [0.0], 1.0)

    def test_permutation_invariant(self):
        a = bm.pointed_ep_batch(gen(10), 30_000, 0, 0, [0, 1, 2], 1)
        b = bm.pointed_ep_batch(gen(11), 30_000, 0, 0, [2, 0, 1], 1)
        assert ks_two_sample(a, b) < 0.02

    def test_two_by_two_mean_oracle(self):
        # top eigenvalue of [[a, z], [conj z, b]] is (a+b)/2 + sqrt(((a-b)/2)^2 + |z|^2)
        r = np.random.default_rng(12)
        N = 400_000
        a, b = r.normal(0, math.sqrt(2), N), r.normal(0, math.sqrt(2), N)
        z2 = r.exponential(2.0, N)
        direct = (a + b) / 2 + np.sqrt(((a - b) / 2) ** 2 + z2)
        v = bm.pointed_ep_batch(gen(12), 100_000, 0, 0, [0, 0], 1.0)
        assert abs(v.mean() - direct.mean()) < 0.02

    def test_parallel_shift(self):
        v = bm.parallel_ep_batch(gen(13), 10, 0.0, [0.0, 1.0], 0.7, 1.0)
        w = bm.top_eigenvalue_batch(gen(13), 10, [0.0, 1.0], 1.0) + 0.7
        assert np.allclose(v, w)

    def test_survival_forever(self):
        x = np.array([[0.0, 1.0]])
        nu = np.array([0.0, 1.0])
        assert bm.survival_forever(x, nu)[0] == pytest.approx(1 - math.exp(-0.5))
        assert bm.survival_forever(np.array([[0.0, 0.0]]), nu)[0] == pytest.approx(0.0)


class TestConditioned:
    def test_n1_is_bm(self):
        spec = bm.DriftedEnsembleSpec(0, (1.0,), (2.0,))
        v, rate = bm.ep_conditioned_batch(gen(14), 50_000, spec, 5, [1.0])
        assert rate == 1.0
        assert abs(v.mean() - 3.0) < 0.03 and abs(v.var() - 2.0) < 0.06

    def test_top_above_bottom_and_rate_positive(self):
        spec = bm.DriftedEnsembleSpec(0, (0.0, 1.0), (0.0, 1.0))
        v, rate = bm.ep_conditioned_batch(gen(15), 500, spec, 5, [0.5, 1.0], step=0.01)
        assert 0 < rate < 1
        assert v.shape == (500, 2)

    def test_pointed_matches_gue(self):
        spec = bm.DriftedEnsembleSpec(0, (0.0, 0.01), (0.0, 1.0))
        v, _ = bm.ep_conditioned_batch(gen(16), 10_000, spec, 10, [1.0], step=0.01)
        ref = bm.pointed_ep_batch(gen(17), 100_000, 0, 0, [0, 1], 1.0)
        assert ks_two_sample(v[:, 0], ref) <= 0.03

    def test_hopeless_acceptance_raises(self):
        spec = bm.DriftedEnsembleSpec(0, (0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0))
        with pytest.raises(bm.AcceptanceError, match="increase separation or shrink horizon"):
            bm.ep_conditioned_batch(gen(18), 10, spec, 1, [1.0], step=0.05, proposal_batch=500_000)


class TestInversion:
    def test_classical_linear(self):
        g = Grid(0.25, 4, 0.25)
        p = bm.PathSample(g, 2 + 3 * g.points)
        out = bm.classical_invert(p, Grid(0.5, 2, 0.5))
        assert np.allclose(out.values, 3 + 2 * out.grid.points)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3))
    @settings(max_examples=40, deadline=None)
    def test_time_inversion_linear(self, d, nu, a):
        g = Grid(-a / 2, a, a / 60)
        p = bm.PathSample(g, d + nu * g.points)
        out = bm.time_invert(p, a)
        assert np.allclose(out.values, d + (d / a - nu) * g.points, atol=1e-9)

    def test_zero_function(self):
        g = Grid(-0.5, 1, 0.05)
        assert np.all(bm.time_invert(bm.PathSample(g, np.zeros(g.size)), 1.0).values == 0)

    def test_involution(self):
        g = Grid(-0.5, 1, 0.001)
        r = np.random.default_rng(3)
        p = bm.PathSample(g, np.sin(4 * g.points) + 0.1 * r.standard_normal() * g.points)
        twice = bm.time_invert(bm.time_invert(p, 1.0), 1.0)
        assert np.max(np.abs(twice.values - p.values)) < 1e-4

    def test_minus_a_rejected(self):
        g = Grid(-1, 1, 0.5)
        with pytest.raises(ValueError):
            bm.time_invert(bm.PathSample(g, np.zeros(g.size)), 1.0)

    def test_brownian_law_preserved(self):
        grid = Grid(0, 2, 1 / 12)
        out_grid = Grid(0.5, 2, 0.5)
        paths = bm.PathSample(grid, 0.5 + bm.bm_batch(gen(19), 20_000, 1.0, grid))
        inv = bm.classical_invert(paths, out_grid).values
        direct = 1.0 + bm.bm_batch(gen(20), 20_000, 0.5, grid)
        for t in (0.5, 1.0, 2.0):
            assert ks_two_sample(inv[:, out_grid.index_of(t)], direct[:, grid.index_of(t)]) < 0.02


class TestWedge:
    def test_curve_at_zero(self):
        n, a = 100, 3.0
        assert bm.wedge_curve(n, 0, a, np.array([0.0]))[0] == pytest.approx(math.sqrt(8 * a * n))

    @pytest.mark.parametrize("m", [0, 1, 5, 20])
    def test_curve_maximum(self, m):
        n, a = 100, 3.0
        x = np.linspace(-a, 2, 2_000_001)
        y = bm.wedge_curve(n, m, a, x)
        i = np.argmax(y)
        assert y[i] == pytest.approx(math.sqrt(8 * a * n) - m * math.sqrt(2 * a / n), abs=1e-8)
        assert x[i] == pytest.approx(-a * m / n, abs=1e-5)

    def test_curves_gridfunction(self):
        f = bm.wedge_curves(10, 2, 1.0, Grid(-2, 1, 0.5))
        assert np.isneginf(f.values[0])
        with pytest.raises(ValueError):
            bm.wedge_curves(3, 3, 1.0, Grid(0, 1, 0.5))

    def test_density_offsets_cancel_curve_max(self):
        f = GridFunction.from_callable(lambda x: np.sin(x), 0, 1, 0.01)
        n, a = 400, 400**0.25
        m, fm = bm.density_offsets(f, n, a)
        peak = math.sqrt(8 * a * n) - m * math.sqrt(2 * a / n)
        assert np.allclose(fm + peak, np.sin(a * m / n), atol=1e-4)

    def test_density_approx_shift_equivariant(self):
        f = GridFunction.constant(0.0, 0, 1, 0.05)
        a = bm.density_approx(f, 300, 4).values
        b = bm.density_approx(f + 2.0, 300, 4).values
        assert np.allclose(b, a + 2.0)

    def test_density_approx_follows_hopf_lax_profile(self):
        """For a steep ramp the optimal start sits at the right end of the support,
        so ``H_n(0) - H_n(-1)`` is the deterministic parabolic penalty of that start."""
        n = 2000
        a = n**0.25
        f = GridFunction.from_callable(lambda x: 20 * x, 0, 1, 0.1)
        H = bm.density_approx_batch(gen(21), 24, f, n)
        assert np.all(np.isfinite(H))
        mu = math.floor(n / a) / n
        penalty = -math.sqrt(8 * n * a) * (math.sqrt(1 - mu) - 1 + mu / 2)
        assert np.mean(H[:, -1] - H[:, 0]) == pytest.approx(penalty, abs=0.5)
        assert np.mean(H[:, -1]) == pytest.approx(20 - 1.8, abs=1.2)

    def test_density_support_checks(self):
        with pytest.raises(ValueError):
            bm.density_approx(GridFunction.constant(0, 0, 5, 0.5), 16, 0)

    def test_containment_shape(self):
        up, lo = bm.wedge_containment_batch(gen(22), 20, 100, 0.1, (0.0, 1.0), np.arange(0.25, 3.01, 0.25))
        assert up.shape == lo.shape == (20, 2)
        assert up.mean() >= 0.9

    def test_bounds_formula(self):
        t = np.array([1.0, 2.0])
        lower, upper = bm.wedge_bounds(100, 0.1, 1.0, t)
        assert lower[0] == pytest.approx(-(100**0.1))
        assert upper[1] == pytest.approx(100**0.1 + 1 - (2 / 3) * 100**0.25)
