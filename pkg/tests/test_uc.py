import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kpzlab.uc import (
    NEG_INF,
    Atom,
    Grid,
    GridFunction,
    KernelSample,
    compose_max,
    compose_supn,
    kernel_max_product,
    kernel_supn_product,
    line_metric,
    supn_integrate,
    thickness,
)


def kernel_from(fn, gx: Grid, gy: Grid) -> KernelSample:
    X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
    return KernelSample(gx, gy, fn(X, Y) * np.ones_like(X))


class TestGrid:
    def test_size_matches_extent(self):
        assert Grid(0, 1, 0.1).size == 11
        assert Grid(0, 1, 0.3).size == 4

    def test_index_of(self):
        g = Grid(-1, 1, 0.25)
        assert g.index_of(0.5) == 6
        with pytest.raises(ValueError):
            g.index_of(0.1)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            Grid(0, 1, 0)


class TestGridFunction:
    def test_length_must_match(self):
        with pytest.raises(ValueError):
            GridFunction(Grid(0, 1, 0.5), np.zeros(2))

    def test_atom_outside_rejected(self):
        with pytest.raises(ValueError):
            GridFunction(Grid(0, 1, 0.5), np.zeros(3), (Atom(2.0),))


class TestSupn:
    def test_constant(self):
        f = GridFunction.constant(1.5, 0, 4, 0.01)
        for n in (0.5, 1, 7):
            assert supn_integrate(f, n) == pytest.approx(1.5 + math.log(4) / n, abs=1e-12)

    def test_single_atom(self):
        g = Grid(-1, 1, 0.5)
        f = GridFunction(g, np.full(g.size, NEG_INF), (Atom(0.0, 2.5),))
        assert supn_integrate(f, 3.0) == pytest.approx(2.5)

    def test_gaussian(self):
        f = GridFunction.from_callable(lambda x: -(x**2), -5, 5, 1e-3)
        assert supn_integrate(f, 1) == pytest.approx(math.log(math.sqrt(math.pi)), abs=1e-4)

    def test_empty_support(self):
        f = GridFunction.constant(NEG_INF, 0, 1, 0.5)
        assert supn_integrate(f, 1) == NEG_INF

    def test_nan_rejected(self):
        f = GridFunction(Grid(0, 1, 0.5), np.array([0.0, np.nan, 0.0]))
        with pytest.raises(ValueError, match="invalid function"):
            supn_integrate(f, 1)

    def test_no_overflow_at_large_values(self):
        f = GridFunction.constant(800.0, 0, 1, 0.1)
        assert supn_integrate(f, 2) == pytest.approx(800.0)

    @given(st.floats(0.1, 50), st.floats(-5, 5))
    @settings(max_examples=40, deadline=None)
    def test_converges_to_max_from_below_plus_log(self, n, c):
        f = GridFunction.from_callable(lambda x: c - np.abs(x), -1, 1, 0.01)
        v = supn_integrate(f, n)
        # supn lies between the max plus the log of the integration window
        assert v <= c + math.log(2) / n + 1e-9


class TestComposeSupn:
    def test_zero_function_zero_kernel(self):
        gx = Grid(0, 1, 0.01)
        gy = Grid(1, 2, 0.5)
        K = kernel_from(lambda x, y: np.where(x <= y, 0.0, NEG_INF), gx, gy)
        out = compose_supn(GridFunction.constant(0, 0, 1, 0.01), K, 2.0)
        assert np.allclose(out.values, 0.0)

    def test_atom_is_delta(self):
        gx = Grid(0, 1, 0.25)
        gy = Grid(0, 2, 0.5)
        K = kernel_from(lambda x, y: x * y - y**2, gx, gy)
        f = GridFunction.narrow_wedge(0.5, gx)
        assert np.allclose(compose_supn(f, K, 3.0).values, K.values[gx.index_of(0.5)])

    def test_quadrature_oracle(self):
        gx = Grid(0, 1, 1e-3)
        gy = Grid(1, 1, 1.0)
        K = kernel_from(lambda x, y: x * y, gx, gy)
        out = compose_supn(GridFunction.constant(0, 0, 1, 1e-3), K, 1.0)
        exact = math.log(quad(math.exp, 0, 1)[0])
        assert out.values[0] == pytest.approx(exact, abs=1e-4)

    def test_grid_mismatch(self):
        K = kernel_from(lambda x, y: 0 * x, Grid(0, 1, 0.5), Grid(0, 1, 0.5))
        with pytest.raises(ValueError, match="grid mismatch"):
            compose_supn(GridFunction.constant(0, 0, 1, 0.25), K, 1)


class TestComposeMax:
    def test_atom(self):
        gx = Grid(0, 1, 0.25)
        K = kernel_from(lambda x, y: np.sin(3 * x + y), gx, Grid(0, 1, 0.5))
        f = GridFunction.narrow_wedge(0.75, gx)
        assert np.array_equal(compose_max(f, K).values, K.values[3])

    def test_constant_kernel_in_x(self):
        gx = Grid(0, 1, 0.1)
        K = kernel_from(lambda x, y: x + 0 * y, gx, Grid(0, 3, 1))
        assert np.allclose(compose_max(GridFunction.constant(0, 0, 1, 0.1), K).values, 1.0)

    def test_dense_oracle(self):
        gx = Grid(0, 2, 1e-3)
        gy = Grid(0.5, 1.5, 0.1)
        K = kernel_from(lambda x, y: -((y - x) ** 2), gx, gy)
        out = compose_max(GridFunction.from_callable(lambda x: x, 0, 2, 1e-3), K)
        assert np.allclose(out.values, gy.points + 0.25, atol=1e-6)

    @given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
    def test_max_is_upper_bound_of_supn_limit(self, fv, kv):
        g = Grid(0, 3, 1)
        f = GridFunction(g, np.array(fv))
        K = KernelSample(g, Grid(0, 0, 1), np.array(kv)[:, None])
        hi = compose_max(f, K).values[0]
        # trapezoid weights total 3, so supn exceeds the max by at most log(3) / n
        assert compose_supn(f, K, 400.0).values[0] <= hi + math.log(3) / 400 + 1e-9


class TestKernels:
    def test_line_metric_examples(self):
        f = GridFunction.from_callable(lambda x: x, 0, 4, 1)
        K = line_metric(f)
        assert K.values[1, 3] == 2
        assert K.values[3, 1] == NEG_INF

    @given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
    def test_line_metric_telescopes(self, vals):
        f = GridFunction(Grid(0, 4, 1), np.array(vals))
        K = line_metric(f)
        for x in range(5):
            for y in range(x, 5):
                for z in range(y, 5):
                    assert K.values[x, y] + K.values[y, z] == pytest.approx(K.values[x, z], abs=1e-9)

    def test_line_metric_is_max_plus_idempotent(self):
        rng = np.random.default_rng(0)
        f = GridFunction(Grid(0, 1, 0.1), rng.standard_normal(11))
        K = line_metric(f)
        assert np.allclose(kernel_max_product(K, K).values, K.values)

    def test_supn_product_matches_composition_rowwise(self):
        rng = np.random.default_rng(1)
        g = Grid(0, 1, 0.1)
        K1 = KernelSample(g, g, rng.standard_normal((11, 11)))
        K2 = KernelSample(g, g, rng.standard_normal((11, 11)))
        P = kernel_supn_product(K1, K2, 2.0)
        for i in (0, 5, 10):
            row = compose_supn(GridFunction(g, K1.values[i]), K2, 2.0)
            assert np.allclose(P.values[i], row.values)


class TestThickness:
    def test_constant_shrinks_with_n(self):
        f = GridFunction.constant(0.0, -2, 2, 1e-3)
        eps = [thickness(f, n, (-1, 1)) for n in (1, 10, 100)]
        assert eps[0] > eps[1] > eps[2]
        for n, e in zip((1, 10, 100), eps):
            assert math.log(2 * e) / n >= -e - 1e-12

    def test_spike_is_thicker(self):
        g = Grid(-1, 1, 1e-3)
        vals = np.zeros(g.size)
        vals[g.index_of(0.0)] = 1.0
        spiky = thickness(GridFunction(g, vals), 1.0, (-0.5, 0.5))
        flat = thickness(GridFunction(g, np.zeros(g.size)), 1.0, (-0.5, 0.5))
        assert spiky > flat > 0

    def test_linear_matches_closed_form(self):
        # for f(x) = x the window supn is x + log(2 sinh(n e) / n) / n, so thickness has a closed form
        n = 50.0
        f = GridFunction.from_callable(lambda x: x, -3, 3, 1e-4)
        ladder = [2.0 * 2.0**-k for k in range(21)]
        thick = [e for e in ladder if math.log(2 * math.sinh(n * e) / n) / n >= -e]
        assert thickness(f, n, (-1, 1)) == pytest.approx(min(thick))
