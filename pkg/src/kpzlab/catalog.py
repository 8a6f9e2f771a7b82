"""Runnable catalog of distributional-identity tests.

Each entry takes a flat config (string keys, numeric values), a 64-bit seed
and a worker count, and returns a :class:`TestReport` whose statistic is
compared against a threshold. Monte Carlo entries draw every replica block
from ``generator(seed, side, block)``, so reports are bit-identical for any
worker count.
"""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np
from scipy import stats as sps

from . import brownian as bm
from . import discrete as dw
from . import polymer as pm
from . import rng as rngmod
from .stats import TestReport, bootstrap_se, ks_two_sample, tw_reference
from .uc import Grid

Config = Mapping[str, float]


class UnknownTest(KeyError):
    pass


def _get(config: Config, key: str, default, cast=float):
    v = config.get(key, default) if config else default
    return None if v is None else cast(v)


def _mc(fn, replicas: int, seed: int, side: int, workers: int) -> np.ndarray:
    return rngmod.map_blocks(fn, replicas, seed, side, workers=workers)


def _max_ks(a: np.ndarray, b: np.ndarray) -> float:
    """Largest column-wise two-sample KS distance."""
    a, b = np.atleast_2d(a.T).T, np.atleast_2d(b.T).T
    return max(ks_two_sample(a[:, j], b[:, j]) for j in range(a.shape[1]))


# --- discrete -----------------------------------------------------------------------

_SMALL_GRID = dict(n=(1, 2, 3), t=(1, 2, 3), r=(1, 2), p=(Fraction(1, 2), Fraction(1, 3)))


def _small_cases(config: Config):
    axes = {}
    for key, vals in _SMALL_GRID.items():
        if config and key in config:
            v = config[key]
            axes[key] = (Fraction(str(v)).limit_denominator(1000) if key == "p" else int(float(v)),)
        else:
            axes[key] = vals
    return itertools.product(axes["n"], axes["t"], axes["r"], axes["p"])


def _dw_exact(config, seed, workers):
    worst = 0.0
    cases = 0
    for n, t, r, p in _small_cases(config):
        y = dw.minimal_admissible(n, r)
        worst = max(worst, float(dw.dw_identity_check(y, r, p, t)))
        cases += 1
    return worst, 1e-10, cases


def _dw_routes(config, seed, workers):
    """Count of (case, value, #ones) cells where recursion and last passage disagree."""
    g = rngmod.generator(seed)
    mismatches = 0
    cases = 0
    ns = (int(config["n"]),) if config and "n" in config else (1, 2, 3)
    ts = (int(config["t"]),) if config and "t" in config else (1, 2, 3)
    for n in ns:
        for t in ts:
            starts = [dw.minimal_admissible(n, 1)]
            for _ in range(3):
                gaps = g.integers(0, 3, n - 1)
                starts.append(tuple(int(v) for v in np.concatenate([np.cumsum(gaps[::-1])[::-1], [0]])))
            for y0 in starts:
                a = dw.bottom_line_counts(y0, t, "recursion")
                b = dw.bottom_line_counts(y0, t, "last_passage")
                keys = set(a) | set(b)
                zero = np.zeros(n * t + 1, dtype=np.int64)
                mismatches += sum(int(np.any(a.get(k, zero) != b.get(k, zero))) for k in keys)
                cases += 1
    return float(mismatches), 0.0, cases


def _dw_weights(config, seed, workers):
    worst = 0.0
    cases = 0
    for n in (1, 2, 3, 4):
        for r in (1, 2, 3):
            y = dw.minimal_admissible(n, r)
            for shift in range(3):
                yy = tuple(v + shift * (n - 1 - i) for i, v in enumerate(y))
                if not dw.is_admissible(yy, r):
                    continue
                worst = max(worst, abs(float(dw.dw_weights(yy, r, n).total_weight()) - 1.0))
                cases += 1
    return worst, 1e-12, cases


# --- edge processes and last passage ---------------------------------------------------


def _ns(config, default=(2, 3)):
    return (int(config["n"]),) if config and "n" in config else default


def _ep_blp(config, seed, workers):
    N = _get(config, "replicas", 50_000, int)
    tau = _get(config, "tau", 1.0)
    step = _get(config, "step", 1e-3) * tau
    worst = 0.0
    for n in _ns(config):
        nu = np.arange(n, dtype=float)
        h = np.zeros(n)
        blp = _mc(lambda g, k: bm.blp_batch(g, k, h, nu, 0.0, [tau], step)[:, 0], N, seed, 10 * n, workers)
        ep = _mc(lambda g, k: bm.pointed_ep_batch(g, k, 0.0, 0.0, nu, tau), N, seed, 10 * n + 1, workers)
        worst = max(worst, ks_two_sample(blp, ep))
    return worst, 0.02, N


def _reorder(config, seed, workers):
    N = _get(config, "replicas", 50_000, int)
    tau = _get(config, "tau", 1.0)
    step = _get(config, "step", 1e-3) * tau
    g = rngmod.generator(seed, 99)
    worst = 0.0
    for n in _ns(config, (3,)):
        nu = np.arange(n, dtype=float)
        perm = g.permutation(n)
        while n > 1 and np.all(perm == np.arange(n)):
            perm = g.permutation(n)
        h = np.zeros(n)
        a = _mc(lambda r, k: bm.blp_batch(r, k, h, nu[perm], 0.0, [tau], step)[:, 0], N, seed, 20 * n, workers)
        b = _mc(lambda r, k: bm.pointed_ep_batch(r, k, 0.0, 0.0, nu, tau), N, seed, 20 * n + 1, workers)
        worst = max(worst, ks_two_sample(a, b))
    return worst, 0.02, N


def _vandermonde_rows(v: np.ndarray) -> np.ndarray:
    n = v.shape[-1]
    out = np.ones(v.shape[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            out *= v[..., j] - v[..., i]
    return out


def mixture_sides(rng, size: int, n: int, h: np.ndarray, r: float, nu: float, tau: float, step: float):
    """Top-line samples for both sides of the Brownian signed-mixture identity.

    Left: last passage from ``h + r R``, ``R_i`` a sum of ``n - i`` uniforms
    (1-based ``i``). Right: parallel edge process from ``h + r S`` with
    ``S_i ~ Binomial(n - i, 1/2)`` and its signed weight
    ``c (-1)^|S| Vandermonde(h / r + S)``. Returns ``(L, E, w)``.
    """
    counts = np.arange(n - 1, -1, -1)
    R = np.stack([rng.random((size, c)).sum(axis=1) for c in counts], axis=1)
    start = h + r * R
    if n == 2:
        L = bm.blp_two_line_exact_batch(rng, size, start, nu, tau)
    else:
        K, d = bm._sim_grid(0.0, tau, step)
        inc = nu * d + math.sqrt(bm.BM_VARIANCE * d) * rng.standard_normal((size, n, K))
        L = bm.last_passage_scan(start, inc, rng, bm.BM_VARIANCE * d)[:, -1]
    S = np.stack([rng.binomial(c, 0.5, size) for c in counts], axis=1)
    c = float(dw.dw_constant(n))
    w = c * (-1.0) ** S.sum(axis=1) * _vandermonde_rows(h / r + S)
    E = bm.top_eigenvalue_batch(rng, size, h + r * S, tau) + nu * tau
    return L, E, w


def _mix_mc(config, seed, workers):
    N = _get(config, "replicas", 100_000, int)
    n = _get(config, "n", 2, int)
    r = _get(config, "r", 1.0)
    tau = _get(config, "tau", 1.0)
    nu = _get(config, "nu", 0.3)
    gap = _get(config, "gap", 0.5)
    step = _get(config, "step", 1e-3)
    if n > 3:
        raise ValueError("MIX-MC supports n <= 3")
    # consecutive heights at least r * (n - i) apart keep h + rR increasing
    h = np.concatenate([[0.0], np.cumsum([r * (n - i) + gap for i in range(1, n)])])
    out = _mc(lambda g, k: np.stack(mixture_sides(g, k, n, h, r, nu, tau, step), axis=1), N, seed, 30, workers)
    L, E, w = out[:, 0], out[:, 1], out[:, 2]
    worst = 0.0
    for j, q in enumerate((-1.0, 0.0, 1.0)):
        lhs = np.exp(-np.maximum(L - q, 0))
        rhs = w * np.exp(-np.maximum(E - q, 0))
        se = math.hypot(bootstrap_se(lhs, seed=rngmod.derive_seed(seed, 31, j)),
                        bootstrap_se(rhs, seed=rngmod.derive_seed(seed, 32, j)))
        worst = max(worst, abs(lhs.mean() - rhs.mean()) / se)
    return worst, 3.0, N


def _timeinv(config, seed, workers):
    N = _get(config, "replicas", 50_000, int)
    mu = _get(config, "start", 0.5)
    nu = _get(config, "drift", 1.0)
    times = np.array([0.5, 1.0, 2.0])
    grid = Grid(0.0, 2.0, 1.0 / 12)
    out_grid = Grid(0.5, 2.0, 0.5)
    cols = [out_grid.index_of(t) for t in times]

    def inverted(g, k):
        path = bm.PathSample(grid, mu + bm.bm_batch(g, k, nu, grid), nu)
        return bm.classical_invert(path, out_grid).values[:, cols]

    def direct(g, k):
        return nu + bm.bm_batch(g, k, mu, grid)[:, [grid.index_of(t) for t in times]]

    a = _mc(inverted, N, seed, 40, workers)
    b = _mc(direct, N, seed, 41, workers)
    return _max_ks(a, b), 0.02, N


def _quad_violations(V: np.ndarray, slack: float) -> int:
    """Count (replica, x < x', y < y') with ``V(x,y) + V(x',y') < V(x,y') + V(x',y) - slack``."""
    X, Y = V.shape[1], V.shape[2]
    bad = 0
    for i, i2 in itertools.combinations(range(X), 2):
        for j, j2 in itertools.combinations(range(Y), 2):
            lhs = V[:, i, j] + V[:, i2, j2]
            rhs = V[:, i, j2] + V[:, i2, j]
            with np.errstate(invalid="ignore"):
                bad += int(np.sum(lhs < rhs - slack))
    return bad


def _quad_blp(config, seed, workers):
    N = _get(config, "replicas", 1000, int)
    n = _get(config, "n", 5, int)
    step = _get(config, "step", 0.01)
    xs, ys = [0.0, 0.25, 0.5, 0.75], [1.0, 1.25, 1.5, 1.75]
    V = _mc(lambda g, k: bm.blp_kernel_batch(g, k, n, xs, ys, step), N, seed, 50, workers)
    return float(_quad_violations(V, 0.0)), 0.0, N


def _quad_oy(config, seed, workers):
    N = _get(config, "replicas", 1000, int)
    params = pm.OYParams.from_theta(_get(config, "theta", 1.0), _get(config, "n", 2.0))
    step = _get(config, "step", 0.02)
    slack = _get(config, "slack", 1e-4)
    xs = ys = [0.0, 0.1, 0.2, 0.3]
    V = _mc(lambda g, k: pm.oy_kernel_batch(g, k, params, xs, ys, step), N, seed, 51, workers)
    return float(_quad_violations(V, slack)), 0.0, N


def _quad_kpz(config, seed, workers):
    N = _get(config, "replicas", 1000, int)
    n = _get(config, "n", 1.0)
    she = pm.SHEParams(eps=_get(config, "eps", 0.1))
    slack = _get(config, "slack", 1e-4)
    xs = ys = [0.0, 0.25, 0.5, 0.75]
    V = _mc(lambda g, k: pm.kpz_kernel_batch(g, k, n, xs, ys, she), N, seed, 52, workers)
    return float(_quad_violations(V, slack)), 0.0, N


def _wedge(config, seed, workers):
    N = _get(config, "replicas", 1000, int)
    n = _get(config, "n", 100, int)
    alpha = _get(config, "alpha", 0.1)
    dt = _get(config, "dt", 0.25)
    t_max = _get(config, "t_max", 3.0)
    times = dt * np.arange(1, int(round(t_max / dt)) + 1)
    hs = (0.0, 1.0)
    ok = _mc(lambda g, k: bm.wedge_containment_batch(g, k, n, alpha, hs, times)[0], N, seed, 60, workers)
    return float(1.0 - ok.mean(axis=0).min()), 0.05, N


# --- polymers ----------------------------------------------------------------------


def _burke_oy(config, seed, workers):
    N = _get(config, "replicas", 50_000, int)
    nu = _get(config, "nu", 0.0)
    mu = _get(config, "mu", 1.0)
    step = _get(config, "step", 0.01)
    ys = [1.0, 2.0]
    a = _mc(lambda g, k: pm.line_composition_batch(g, k, nu, mu, ys, step), N, seed, 70, workers)
    b = _mc(lambda g, k: pm.line_composition_batch(g, k, mu, nu, ys, step), N, seed, 71, workers)
    return _max_ks(a, b), 0.02, N


def _stat_oy(config, seed, workers):
    N = _get(config, "replicas", 50_000, int)
    nu = _get(config, "nu", 1.0)
    mu = _get(config, "mu", -1.0)
    horizon = _get(config, "horizon", 30.0)
    step = _get(config, "step", 0.01)

    def inc(g, k):
        v = pm.stationary_composition_batch(g, k, nu, mu, [0.0, 1.0], horizon, step)
        return v[:, 1] - v[:, 0]

    x = _mc(inc, N, seed, 80, workers)
    stat = sps.kstest(x, sps.norm(loc=nu, scale=math.sqrt(bm.BM_VARIANCE)).cdf).statistic
    return float(stat), 0.02, N


def _she_heat(config, seed, workers):
    N = _get(config, "replicas", 10_000, int)
    she = pm.SHEParams(eps=_get(config, "eps", 0.1))
    t = _get(config, "t", 1.0)
    ys = np.linspace(-2.0, 2.0, 9)
    Z = _mc(lambda g, k: pm.she_delta_batch(g, k, [0.0], ys, t, she)[:, 0], N, seed, 90, workers)
    heat = np.exp(-(ys**2) / (2 * t)) / math.sqrt(2 * math.pi * t)
    return float(np.max(np.abs(Z.mean(axis=0) / heat - 1))), 0.05, N


def _tw(config, seed):
    return tw_reference(rngmod.derive_seed(seed, 100), _get(config, "tw_N", 400, int), _get(config, "tw_m", 10_000, int))


def _trend_oy(config, seed, workers):
    N = _get(config, "replicas", 4000, int)
    theta = _get(config, "theta", 1.0)
    n0 = _get(config, "n0", 2.0)
    n1 = _get(config, "n1", 2 * n0)
    step = _get(config, "step", 0.05)
    ref = _tw(config, seed)
    ks = []
    for side, n in enumerate((n0, n1)):
        params = pm.OYParams.from_theta(theta, n)
        v = _mc(lambda g, k: pm.oy_kernel_batch(g, k, params, [0.0], [0.0], step)[:, 0, 0], N, seed, 110 + side, workers)
        ks.append(ks_two_sample(v, ref))
    return ks[1] - ks[0], 0.02, N


def _trend_kpz(config, seed, workers):
    # both n are read from one SHE run per replica, which couples the two samples
    N = _get(config, "replicas", 3000, int)
    ns = (_get(config, "n0", 1.0), _get(config, "n1", 1.6))
    she = pm.SHEParams(eps=_get(config, "eps", 0.05))
    ref = _tw(config, seed)
    v = _mc(lambda g, k: pm.kpz_origin_batch(g, k, ns, she), N, seed, 120, workers)
    return ks_two_sample(v[:, 1], ref) - ks_two_sample(v[:, 0], ref), 0.02, N


CATALOG: dict[str, Callable] = {
    "DW-EXACT": _dw_exact,
    "DW-ROUTES": _dw_routes,
    "DW-WEIGHTS": _dw_weights,
    "EP-BLP": _ep_blp,
    "REORDER": _reorder,
    "MIX-MC": _mix_mc,
    "TIMEINV": _timeinv,
    "QUAD-BLP": _quad_blp,
    "QUAD-OY": _quad_oy,
    "QUAD-KPZ": _quad_kpz,
    "WEDGE": _wedge,
    "BURKE-OY": _burke_oy,
    "STAT-OY": _stat_oy,
    "SHE-HEAT": _she_heat,
    "TREND-OY": _trend_oy,
    "TREND-KPZ": _trend_kpz,
}


def run_identity_test(test_id: str, config: Config | None = None, seed: int = 0, workers: int = 1) -> TestReport:
    """Run one catalog entry. A ``threshold`` key in ``config`` overrides the default."""
    if test_id not in CATALOG:
        raise UnknownTest(f"unknown test id {test_id!r}")
    config = dict(config or {})
    t0 = time.perf_counter()
    stat, threshold, replicas = CATALOG[test_id](config, seed, workers)
    if "threshold" in config:
        threshold = float(config["threshold"])
    return TestReport(test_id, float(stat), float(threshold), bool(stat <= threshold), int(replicas),
                      time.perf_counter() - t0)
