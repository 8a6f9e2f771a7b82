"""O'Connell-Yor polymer, stochastic heat equation, and Brownian line-metric compositions.

The OY free energy uses variance-1 Brownian motions; the line-metric
compositions used for the Burke and stationarity checks use the package's
variance-2 convention. Everything here is computed in log space or with
explicit per-segment rescaling, since partition functions grow like
``exp(c n^3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .brownian import BM_VARIANCE
from .uc import NEG_INF, Grid, GridFunction

OY_VARIANCE = 1.0
_LOG2 = math.log(2.0)

# B_2k / (2k) style coefficients: Bernoulli numbers B_2 .. B_20
_BERNOULLI = [
    1 / 6,
    -1 / 30,
    1 / 42,
    -1 / 30,
    5 / 66,
    -691 / 2730,
    7 / 6,
    -3617 / 510,
    43867 / 798,
    -174611 / 330,
]


def polygamma(theta: float, order: int) -> float:
    """Digamma (order 0) and its first two derivatives at ``theta > 0``.

    Shifts the argument above 20 with the recurrence, then sums the
    asymptotic series; the relative error is a few ulp.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if not theta > 0:
        raise ValueError("polygamma needs theta > 0")
    x = float(theta)
    acc = 0.0
    while x < 20.0:
        if order == 0:
            acc -= 1.0 / x
        elif order == 1:
            acc += 1.0 / x**2
        else:
            acc -= 2.0 / x**3
        x += 1.0
    if order == 0:
        s = math.log(x) - 0.5 / x
        for k, b in enumerate(_BERNOULLI, start=1):
            s -= b / (2 * k * x ** (2 * k))
    elif order == 1:
        s = 1.0 / x + 0.5 / x**2
        for k, b in enumerate(_BERNOULLI, start=1):
            s += b / x ** (2 * k + 1)
    else:
        s = -1.0 / x**2 - 1.0 / x**3
        for k, b in enumerate(_BERNOULLI, start=1):
            s -= (2 * k + 1) * b / x ** (2 * k + 2)
    return s + acc


@dataclass(frozen=True)
class OYParams:
    """Scaling constants of the OY polymer at drift parameter ``theta``."""

    theta: float
    n: float
    psi0: float
    psi1: float
    psi2: float
    a: float
    b: float
    c: float

    @classmethod
    def from_theta(cls, theta: float, n: float = 1.0) -> "OYParams":
        if not n > 0:
            raise ValueError("n must be positive")
        p0, p1, p2 = (polygamma(theta, k) for k in range(3))
        a = -2.0 / p2
        b = a * p1
        return cls(theta, n, p0, p1, p2, a, b, theta * b - a * p0)

    def with_n(self, n: float) -> "OYParams":
        return OYParams.from_theta(self.theta, n)

    @property
    def lines(self) -> int:
        """``ceil(a n^3)``; the fractional remainder is dropped."""
        return max(1, int(math.ceil(self.a * self.n**3 - 1e-9)))


# --- log-space quadrature ----------------------------------------------------

_SEGMENT = 64


def log_cumsum_exp(g: np.ndarray) -> np.ndarray:
    """``log(cumsum(exp(g)))`` along the last axis.

    Works on segments of 64 with a per-segment max shift and carries the
    segment totals with ``logaddexp``, so it never overflows and stays as
    cheap as a plain cumulative sum. Segments whose values span more than
    600 fall back to an exact running ``logaddexp``.
    """
    g = np.asarray(g, dtype=float)
    *lead, K = g.shape
    nseg = -(-K // _SEGMENT)
    pad = nseg * _SEGMENT - K
    x = np.concatenate([g, np.full((*lead, pad), NEG_INF)], axis=-1) if pad else g
    x = x.reshape(*lead, nseg, _SEGMENT)
    m = np.max(x, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        local = np.log(np.cumsum(np.exp(x - m), axis=-1)) + m
        # a spread past ~600 would underflow into subnormals: redo those segments exactly
        wide = m[..., 0] - np.min(np.where(np.isneginf(x), np.inf, x), axis=-1) > 600
    if np.any(wide):
        local[wide] = np.logaddexp.accumulate(x[wide], axis=-1)
    carry = np.full((*lead, nseg, 1), NEG_INF)
    if nseg > 1:
        carry[..., 1:, 0] = np.logaddexp.accumulate(local[..., :-1, -1], axis=-1)
    out = np.logaddexp(local, carry).reshape(*lead, nseg * _SEGMENT)
    return out[..., :K]


def log_cumtrapz_exp(g: np.ndarray, d: float) -> np.ndarray:
    """``log`` of the cumulative trapezoid integral of ``exp(g)`` from index 0; ``-inf`` at 0."""
    g = np.asarray(g, dtype=float)
    h = g.copy()
    h[..., 0] -= _LOG2
    P = log_cumsum_exp(h)
    out = np.full(g.shape, NEG_INF)
    out[..., 1:] = np.logaddexp(P[..., :-1], g[..., 1:] - _LOG2) + math.log(d)
    return out


def oy_log_partition(B: np.ndarray, d: float) -> np.ndarray:
    """``log Z_k`` on the environment grid for paths ``B`` of shape ``(..., k, K + 1)``.

    ``Z_1(y) = exp(B_1(y) - B_1(x))`` and ``Z_j(y) = exp(B_j(y)) int_x^y Z_{j-1} exp(-B_j)``,
    the integral by cumulative trapezoid from the grid's first point ``x``.
    """
    B = np.asarray(B, dtype=float)
    logZ = B[..., 0, :] - B[..., 0, :1]
    for j in range(1, B.shape[-2]):
        logZ = B[..., j, :] + log_cumtrapz_exp(logZ - B[..., j, :], d)
    return logZ


def _bm_paths(rng, shape: tuple, K: int, d: float, drift, variance: float) -> np.ndarray:
    drift = np.asarray(drift, dtype=float)
    inc = drift[..., None] * d + math.sqrt(variance * d) * rng.standard_normal(shape + (K,))
    out = np.zeros(shape + (K + 1,))
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def _oy_start_scan(rng, size: int, k: int, K: int, d: float, drifts: np.ndarray, start_idx: Sequence[int]):
    """``log Z_k`` from each start index over a shared environment; shape ``(size, |starts|, K + 1)``.

    Lines are generated one at a time so memory stays ``O(size * K)``.
    """
    out = np.full((size, len(start_idx), K + 1), NEG_INF)
    cur = [None] * len(start_idx)
    for j in range(k):
        Bj = _bm_paths(rng, (size,), K, d, drifts[j], OY_VARIANCE)
        for s, i0 in enumerate(start_idx):
            seg = Bj[:, i0:]
            if j == 0:
                cur[s] = seg - seg[:, :1]
            else:
                cur[s] = seg + log_cumtrapz_exp(cur[s] - seg, d)
    for s, i0 in enumerate(start_idx):
        out[:, s, i0:] = cur[s]
    return out


def oy_free_energy_batch(
    rng, size: int, k: int, x: float, y_grid: Grid, drifts: Sequence[float] | None = None, step: float | None = None
) -> np.ndarray:
    """Samples of ``y -> F(x; y, k)`` on ``y_grid``; shape ``(size, y_grid.size)``, ``-inf`` left of ``x``."""
    if k < 1:
        raise ValueError("need k >= 1 lines")
    drifts = np.zeros(k) if drifts is None else np.asarray(drifts, dtype=float)
    if drifts.size != k:
        raise ValueError("need one drift per line")
    if y_grid.lo < x - 1e-12:
        raise ValueError("y_grid must lie in [x, inf)")
    step = min(y_grid.step, 0.01) if step is None else step
    refine = max(1, int(math.ceil(y_grid.step / step - 1e-9)))
    d = y_grid.step / refine
    off = (y_grid.lo - x) / d
    if abs(off - round(off)) > 1e-6:
        raise ValueError("y_grid points must sit on the simulation grid from x")
    off = int(round(off))
    K = off + (y_grid.size - 1) * refine
    logZ = _oy_start_scan(rng, size, k, K, d, drifts, [0])[:, 0]
    return logZ[:, off::refine][:, : y_grid.size]


def oy_free_energy(
    k: int, x: float, y_grid: Grid, drifts: Sequence[float] | None = None, seed: int = 0, step: float | None = None
) -> GridFunction:
    """One sample of ``F(x; y, k)``, the k-fold supn-1 composition of variance-1 Brownian line metrics."""
    vals = oy_free_energy_batch(rngmod.generator(seed), 1, k, x, y_grid, drifts, step)[0]
    return GridFunction(y_grid, vals)


def oy_kernel_batch(
    rng, size: int, params: OYParams, xs: Sequence[float], ys: Sequence[float], step: float = 0.02
) -> np.ndarray:
    """Scaled kernel ``K_n(x, y)`` on ``xs x ys`` over one environment per replica.

    ``K_n(x, y) = (F(2 x n^2; b n^3 + 2 y n^2, ceil(a n^3)) - c n^3 + 2 (x - y) n^2 psi'(theta)) / n``.
    Start and end points are snapped to a grid of spacing ``<= step``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = params.n
    starts = 2 * xs * n**2
    ends = params.b * n**3 + 2 * ys * n**2
    if ends.min() <= starts.max():
        raise ValueError("grid does not cover the end points: need b n^3 + 2 y n^2 > 2 x n^2")
    lo, hi = starts.min(), ends.max()
    K = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
    d = (hi - lo) / K
    si = np.rint((starts - lo) / d).astype(int)
    ei = np.rint((ends - lo) / d).astype(int)
    k = params.lines
    logZ = _oy_start_scan(rng, size, k, K, d, np.zeros(k), list(si))
    F = logZ[:, :, ei]
    centre = -params.c * n**3 + 2 * (xs[:, None] - ys[None, :]) * n**2 * params.psi1
    return (F + centre[None]) / n


def oy_scaled_kernel_sample(params: OYParams, x: float, y: float, seed: int, step: float = 0.02) -> float:
    return float(oy_kernel_batch(rngmod.generator(seed), 1, params, [x], [y], step)[0, 0, 0])


# --- stochastic heat equation ----------------------------------------------------


@dataclass(frozen=True)
class SHEParams:
    """Space step ``eps``, time step ``delta`` (default ``eps^2 / 2``), boundary margin, noise switch."""

    eps: float = 0.1
    delta: float | None = None
    margin: float | None = None
    noise: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.delta is not None and not 0 < self.delta <= self.eps**2 / 2 * (1 + 1e-12):
            raise ValueError("unstable: need 0 < delta <= eps^2 / 2")

    @property
    def dt(self) -> float:
        return self.eps**2 / 2 if self.delta is None else self.delta

    def margin_for(self, t: float) -> float:
        return 6 * math.sqrt(t) if self.margin is None else self.margin


@dataclass(frozen=True)
class SHEField:
    eps: float
    delta: float
    x_lo: float
    x_hi: float
    values: np.ndarray
    time: float

    @property
    def points(self) -> np.ndarray:
        return self.x_lo + self.eps * np.arange(self.values.shape[-1])


class SHEInstability(RuntimeError):
    pass


def she_steps(t_final: float, delta: float) -> tuple[int, float]:
    """Number of steps and the step actually used so that they land on ``t_final``."""
    steps = max(1, int(math.ceil(t_final / delta - 1e-9)))
    return steps, t_final / steps


def she_batch(
    rng, size: int, z0: np.ndarray, steps: int, eps: float, delta: float, noise: bool = True
) -> np.ndarray:
    """Run ``steps`` explicit steps from initial fields ``z0`` under shared noise.

    ``z0`` has shape ``(P, M)``, shared by all replicas, or ``(size, P, M)``
    to continue earlier runs. Returns shape ``(size, P, M)``. Each step
    applies the heat update with Dirichlet-zero boundaries, then multiplies
    by ``exp(xi sqrt(delta/eps) - delta/(2 eps))`` with one normal ``xi`` per
    cell, shared by the ``P`` initial conditions.
    """
    if delta > eps**2 / 2 * (1 + 1e-12):
        raise SHEInstability("unstable step: reduce delta")
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    if np.any(z0 < 0):
        raise ValueError("initial condition must be nonnegative")
    if z0.ndim == 3:
        if z0.shape[0] != size:
            raise ValueError("per-replica initial fields need a leading axis of length size")
        Z = z0.copy()
    else:
        Z = np.broadcast_to(z0, (size,) + z0.shape).copy()
    lam = delta / (2 * eps**2)
    sig = math.sqrt(delta / eps)
    shift = delta / (2 * eps)
    M = z0.shape[-1]
    for _ in range(steps):
        lap = -2 * Z
        lap[..., 1:] += Z[..., :-1]
        lap[..., :-1] += Z[..., 1:]
        Z += lam * lap
        if noise:
            Z *= np.exp(sig * rng.standard_normal((size, 1, M)) - shift)
    if np.any(np.abs(Z) > 1e30) or not np.all(np.isfinite(Z)):
        raise SHEInstability("field blew up: reduce delta")
    return Z


def _she_domain(lo: float, hi: float, eps: float, margin: float) -> tuple[float, int]:
    x_lo = eps * math.floor((lo - margin) / eps)
    M = int(math.ceil((hi + margin - x_lo) / eps)) + 1
    return x_lo, M


def _cell(x_lo: float, eps: float, x: np.ndarray) -> np.ndarray:
    return np.rint((np.asarray(x, dtype=float) - x_lo) / eps).astype(int)


def she_solve(init: GridFunction, t_final: float, params: SHEParams, seed: int) -> SHEField:
    """Solve the SHE from a nonnegative density plus point masses.

    Grid values are the density (``-inf`` or ``0`` outside the support), and
    each atom deposits mass ``exp(log_weight)`` as height ``1/eps`` times
    that weight in its cell.
    """
    vals = np.where(np.isneginf(init.values), 0.0, init.values)
    if np.any(vals < 0) or np.any(np.isnan(vals)):
        raise ValueError("initial condition must be nonnegative")
    eps, delta = params.eps, params.dt
    steps, delta = she_steps(t_final, delta)
    x_lo, M = _she_domain(init.x_lo, init.x_hi, eps, params.margin_for(t_final))
    pts = x_lo + eps * np.arange(M)
    tol = 1e-9 * eps
    inside = (pts >= init.x_lo - tol) & (pts <= init.x_hi + tol)
    z0 = np.where(inside, np.interp(np.clip(pts, init.x_lo, init.x_hi), init.grid.points, vals), 0.0)
    for a in init.atoms:
        z0[_cell(x_lo, eps, a.location)] += math.exp(a.log_weight) / eps
    Z = she_batch(rngmod.generator(seed), 1, z0[None], steps, eps, delta, params.noise)[0, 0]
    return SHEField(eps, delta, x_lo, x_lo + eps * (M - 1), Z, t_final)


def she_delta_batch(
    rng, size: int, xs: Sequence[float], ys: Sequence[float], t: float, params: SHEParams
) -> np.ndarray:
    """``Z(x; y, t)`` for delta starts ``xs`` read at ``ys``; shape ``(size, |xs|, |ys|)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    eps = params.eps
    steps, delta = she_steps(t, params.dt)
    pts_all = np.concatenate([xs, ys])
    x_lo, M = _she_domain(pts_all.min(), pts_all.max(), eps, params.margin_for(t))
    z0 = np.zeros((xs.size, M))
    z0[np.arange(xs.size), _cell(x_lo, eps, xs)] = 1.0 / eps
    Z = she_batch(rng, size, z0, steps, eps, delta, params.noise)
    return Z[:, :, _cell(x_lo, eps, ys)]


def kpz_kernel_batch(
    rng, size: int, n: float, xs: Sequence[float], ys: Sequence[float], params: SHEParams
) -> np.ndarray:
    """``(log Z(2 n^2 x; 2 n^2 y, 2 n^3) + n^3 / 12) / n`` on ``xs x ys``; zero readouts give ``-inf``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    Z = she_delta_batch(rng, size, 2 * n**2 * xs, 2 * n**2 * ys, 2 * n**3, params)
    with np.errstate(divide="ignore"):
        return (np.log(Z) + n**3 / 12) / n


def kpz_origin_batch(rng, size: int, ns: Sequence[float], params: SHEParams) -> np.ndarray:
    """``K_n(0, 0)`` for increasing ``ns`` from one SHE run per replica; shape ``(size, |ns|)``.

    Readouts at times ``2 n^3`` are taken along the way, so the columns share
    noise (and are correlated) while each keeps its exact marginal law.
    """
    ns = np.asarray(ns, dtype=float)
    if ns.size == 0 or np.any(ns <= 0) or np.any(np.diff(ns) <= 0):
        raise ValueError("ns must be positive and strictly increasing")
    times = 2 * ns**3
    eps = params.eps
    x_lo, M = _she_domain(0.0, 0.0, eps, params.margin_for(times[-1]))
    c = int(_cell(x_lo, eps, 0.0))
    Z = np.zeros((1, M))
    Z[0, c] = 1.0 / eps
    out = np.empty((size, ns.size))
    prev = 0.0
    for i, t in enumerate(times):
        steps, delta = she_steps(t - prev, params.dt)
        Z = she_batch(rng, size, Z, steps, eps, delta, params.noise)
        with np.errstate(divide="ignore"):
            out[:, i] = (np.log(Z[:, 0, c]) + ns[i] ** 3 / 12) / ns[i]
        prev = t
    return out


def kpz_scaled_kernel_sample(n: float, x: float, y: float, params: SHEParams, seed: int) -> float:
    return float(kpz_kernel_batch(rngmod.generator(seed), 1, n, [x], [y], params)[0, 0, 0])


# --- Brownian line-metric compositions ---------------------------------------------


def line_composition_batch(
    rng, size: int, nu: float, mu: float, ys: Sequence[float], step: float = 0.01
) -> np.ndarray:
    """Samples of ``(B_nu o_1 B_mu)(0, y) = log int_0^y exp(B_nu(s) + B_mu(y) - B_mu(s)) ds``.

    Both motions have variance 2; shape ``(size, |ys|)``.
    """
    ys = np.asarray(ys, dtype=float)
    K = int(round(ys.max() / step))
    d = ys.max() / K
    Bn = _bm_paths(rng, (size,), K, d, nu, BM_VARIANCE)
    Bm = _bm_paths(rng, (size,), K, d, mu, BM_VARIANCE)
    inner = log_cumtrapz_exp(Bn - Bm, d)
    idx = np.rint(ys / d).astype(int)
    return (inner + Bm)[:, idx]


def stationary_composition_batch(
    rng, size: int, nu: float, mu: float, ys: Sequence[float], horizon: float = 30.0, step: float = 0.01
) -> np.ndarray:
    """Samples of ``g(y) = (B_nu o_1 B_mu)(y)`` at ``ys >= 0`` for two-sided ``B_nu`` with ``B_nu(0) = 0``.

    The integral over ``(-inf, y]`` is truncated at ``-horizon``; needs
    ``mu < nu`` for convergence. Shape ``(size, |ys|)``.
    """
    if not mu < nu:
        raise ValueError("stationarity needs mu < nu")
    ys = np.asarray(ys, dtype=float)
    K0 = int(round(horizon / step))
    d = horizon / K0
    K = K0 + int(round(ys.max() / d))
    Bn = _bm_paths(rng, (size,), K, d, nu, BM_VARIANCE)
    Bn -= Bn[:, K0 : K0 + 1]
    Bm = _bm_paths(rng, (size,), K, d, mu, BM_VARIANCE)
    inner = log_cumtrapz_exp(Bn - Bm, d)
    idx = K0 + np.rint(ys / d).astype(int)
    return (inner + Bm)[:, idx]


def near_linearity_batch(
    rng, size: int, nu: float, eps: float, T: float, step: float = 0.01
) -> np.ndarray:
    """Samples of ``sup_{|x| <= T} |B_nu(x) - nu x| - eps |x|`` for two-sided variance-2 ``B_nu``."""
    K = int(round(T / step))
    d = T / K
    out = np.full(size, NEG_INF)
    x = d * np.arange(K + 1)
    for _side in range(2):
        W = _bm_paths(rng, (size,), K, d, 0.0, BM_VARIANCE)  # B_nu(x) - nu x
        out = np.maximum(out, np.max(np.abs(W) - eps * x, axis=1))
    return out
