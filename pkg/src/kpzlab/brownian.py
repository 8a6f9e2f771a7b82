"""Brownian motion, Brownian last passage, and edge-process samplers.

Brownian motions have variance 2 per unit time unless stated otherwise.
Samplers come in two flavours: batched ``*_batch(rng, size, ...)`` kernels
that draw from a caller-supplied generator, and seed-level wrappers that
build the generator themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .uc import NEG_INF, Grid, GridFunction

BM_VARIANCE = 2.0


class AcceptanceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriftedEnsembleSpec:
    """Start time ``a``, heights ``h`` and drifts ``nu`` of ``n`` lines (line ``n`` on top)."""

    a: float
    h: tuple[float, ...]
    nu: tuple[float, ...]

    def __post_init__(self):
        h = tuple(float(v) for v in self.h)
        nu = tuple(float(v) for v in self.nu)
        if len(h) < 1 or len(h) != len(nu):
            raise ValueError("h and nu must be nonempty and of equal length")
        if any(x > y for x, y in zip(h, h[1:])):
            raise ValueError("h must be nondecreasing")
        if any(x > y for x, y in zip(nu, nu[1:])):
            raise ValueError("nu must be nondecreasing")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nu", nu)

    @property
    def n(self) -> int:
        return len(self.h)

    @property
    def pointed(self) -> bool:
        return len(set(self.h)) == 1

    @property
    def parallel(self) -> bool:
        return len(set(self.nu)) == 1


@dataclass(frozen=True)
class PathSample:
    grid: Grid
    values: np.ndarray
    drift: float = 0.0
    seed: int | None = None


# --- Brownian motion -------------------------------------------------------


def bm_batch(rng: np.random.Generator, size: int, nu: float, grid: Grid, variance: float = BM_VARIANCE) -> np.ndarray:
    """Paths ``B(a) = 0`` on ``grid``, shape ``(size, grid.size)``."""
    d = grid.step
    inc = nu * d + math.sqrt(variance * d) * rng.standard_normal((size, grid.size - 1))
    out = np.zeros((size, grid.size))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_bm(nu: float, grid: Grid, seed: int) -> PathSample:
    return PathSample(grid, bm_batch(rngmod.generator(seed), 1, nu, grid)[0], nu, seed)


# --- Brownian last passage -------------------------------------------------


def _bridge_maxima(D: np.ndarray, rng: np.random.Generator, var: float) -> np.ndarray:
    """Replace ``D[..., k]`` (k >= 1) by a draw of the maximum over ``[k-1, k]``
    of a Brownian bridge between ``D[..., k-1]`` and ``D[..., k]``."""
    u, v = D[..., :-1], D[..., 1:]
    fin = np.isfinite(u) & np.isfinite(v)
    logU = np.log1p(-rng.random(v.shape))
    with np.errstate(invalid="ignore"):
        m = 0.5 * (u + v + np.sqrt((v - u) ** 2 - 2 * var * logU))
    out = D.copy()
    out[..., 1:] = np.where(fin, m, np.maximum(u, v))
    return out


def last_passage_scan(
    h: np.ndarray,
    increments: np.ndarray,
    bridge_rng: np.random.Generator | None = None,
    step_variance: float | None = None,
) -> np.ndarray:
    """Top-line last passage values at every grid time.

    ``increments`` has shape ``(..., n, K)`` (line ``l`` increment over the
    ``k``-th step), ``h`` broadcasts against ``(..., n)``. Jump times range
    over grid times, so ``G_l(k) = S_l(k) + max(h_l, max_{j<=k} G_{l-1}(j) - S_l(j))``
    with ``S_l`` the partial sums. Returns shape ``(..., K + 1)``.

    With ``bridge_rng`` the maximum of ``G_{l-1} - S_l`` inside each step is
    drawn from the Brownian bridge maximum law between its endpoint values,
    ``step_variance`` being the variance of one line's increment. This is
    exact for two lines and removes most of the ``O(sqrt(step))`` downward
    bias of the grid maximum for more.
    """
    increments = np.asarray(increments, dtype=float)
    shape = increments.shape
    S = np.zeros(shape[:-1] + (shape[-1] + 1,))
    np.cumsum(increments, axis=-1, out=S[..., 1:])
    h = np.broadcast_to(np.asarray(h, dtype=float), shape[:-1])
    G = h[..., 0, None] + S[..., 0, :]
    for line in range(1, shape[-2]):
        D = G - S[..., line, :]
        if bridge_rng is not None:
            D = _bridge_maxima(D, bridge_rng, 2 * step_variance)
        run = np.maximum.accumulate(D, axis=-1)
        G = S[..., line, :] + np.maximum(run, h[..., line, None])
    return G


def _sim_grid(a: float, t_end: float, step: float) -> tuple[int, float]:
    k = max(1, int(math.ceil((t_end - a) / step - 1e-9)))
    return k, (t_end - a) / k


def blp_batch(
    rng: np.random.Generator,
    size: int,
    h: Sequence[float],
    nu: Sequence[float],
    a: float,
    times: Sequence[float],
    step: float | None = None,
    bridge: bool = True,
) -> np.ndarray:
    """Last passage values ``L(t)`` at ``times``, shape ``(size, len(times))``.

    Drifts need not be ordered here. Times are snapped to a uniform grid
    from ``a`` whose step defaults to ``1e-3`` of the span; ``bridge``
    enables the in-step maximum correction of :func:`last_passage_scan`.
    """
    h = np.asarray(h, dtype=float)
    nu = np.asarray(nu, dtype=float)
    times = np.asarray(times, dtype=float)
    t_end = float(times.max())
    step = 1e-3 * (t_end - a) if step is None else step
    K, d = _sim_grid(a, t_end, step)
    n = h.size
    inc = nu[None, :, None] * d + math.sqrt(BM_VARIANCE * d) * rng.standard_normal((size, n, K))
    G = last_passage_scan(h, inc, rng if bridge else None, BM_VARIANCE * d)
    idx = np.rint((times - a) / d).astype(int)
    return G[:, idx]


def blp_sample(
    spec: DriftedEnsembleSpec, y_grid: Grid, seed: int, step: float | None = None, bridge: bool = True
) -> GridFunction:
    """One Brownian last passage function on ``y_grid`` (``-inf`` left of ``a``)."""
    if y_grid.lo > spec.a + 1e-12:
        raise ValueError("y_grid must start at or before a")
    pts = y_grid.points
    right = pts >= spec.a - 1e-12
    if not right.any() or abs(pts[right][0] - spec.a) > 1e-9:
        raise ValueError("start time a must be a point of y_grid")
    span = pts[-1] - spec.a
    if step is None:
        step = min(y_grid.step, 1e-3 * span) if span > 0 else y_grid.step
    refine = max(1, int(math.ceil(y_grid.step / step - 1e-9)))
    K = int(round(span / y_grid.step)) * refine
    d = y_grid.step / refine
    g = rngmod.generator(seed)
    inc = np.asarray(spec.nu)[:, None] * d + math.sqrt(BM_VARIANCE * d) * g.standard_normal((spec.n, K))
    G = last_passage_scan(np.asarray(spec.h), inc, g if bridge else None, BM_VARIANCE * d)
    out = np.full(y_grid.size, NEG_INF)
    out[right] = G[::refine][: int(right.sum())]
    return GridFunction(y_grid, out)


def blp_two_line_exact_batch(
    rng: np.random.Generator, size: int, h: np.ndarray, nu: float, tau: float
) -> np.ndarray:
    """Exact ``L(a + tau)`` for two lines with common drift ``nu``.

    ``h`` has shape ``(size, 2)`` or ``(2,)``. Uses ``C = B1 + B2`` and the
    joint law of a Brownian maximum and endpoint for ``W = B1 - B2``.
    """
    h = np.broadcast_to(np.asarray(h, dtype=float), (size, 2))
    var = 2 * BM_VARIANCE * tau
    C = rng.normal(2 * nu * tau, math.sqrt(var), size)
    W = rng.normal(0.0, math.sqrt(var), size)
    U = rng.random(size)
    M = 0.5 * (W + np.sqrt(W**2 - 2 * var * np.log1p(-U)))
    B2 = 0.5 * (C - W)
    return np.maximum(h[:, 1] + B2, h[:, 0] + M + B2)


def blp_kernel_batch(
    rng: np.random.Generator, size: int, n: int, xs: Sequence[float], ys: Sequence[float], step: float
) -> np.ndarray:
    """``K(x, y)``: last passage from ``(x, line 1)`` to ``(y, line n)``; shape ``(size, |xs|, |ys|)``.

    Increments are rounded to multiples of ``2**-32`` so every sum in the
    scan is exact in floating point; the quadrangle inequality then holds
    with no rounding slack.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    lo = min(xs.min(), ys.min())
    K, d = _sim_grid(lo, max(xs.max(), ys.max()), step)
    inc = np.ldexp(np.rint(np.ldexp(math.sqrt(BM_VARIANCE * d) * rng.standard_normal((size, n, K)), 32)), -32)
    ix = np.rint((xs - lo) / d).astype(int)
    iy = np.rint((ys - lo) / d).astype(int)
    h = np.full(n, NEG_INF)
    h[0] = 0.0
    out = np.full((size, xs.size, ys.size), NEG_INF)
    for a, i0 in enumerate(ix):
        G = last_passage_scan(h, inc[..., i0:])
        for b, j in enumerate(iy):
            if j >= i0:
                out[:, a, b] = G[:, j - i0]
    return out


# --- Edge processes --------------------------------------------------------


def hermitian_gaussian(rng: np.random.Generator, size: int, n: int, variance: float) -> np.ndarray:
    """Hermitian matrices with ``Var(H_ii) = E|H_ij|^2 = variance``."""
    A = rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))
    return (A + np.conj(np.swapaxes(A, -1, -2))) * (0.5 * math.sqrt(variance))


def top_eigenvalue_batch(rng: np.random.Generator, size: int, diag, tau: float) -> np.ndarray:
    """Top eigenvalue of ``H_tau + diag(diag)``, ``H_tau`` Hermitian Brownian motion at time ``tau``.

    ``diag`` has shape ``(n,)`` or ``(size, n)``. Scale is the variance-2
    convention: a 1x1 matrix gives ``Normal(diag, 2 tau)``.
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[-1]
    if n == 1:
        return diag[..., 0] + math.sqrt(BM_VARIANCE * tau) * rng.standard_normal(size)
    H = hermitian_gaussian(rng, size, n, BM_VARIANCE * tau)
    H[:, np.arange(n), np.arange(n)] += diag
    return np.linalg.eigvalsh(H)[:, -1]


def pointed_ep_batch(rng, size, a: float, h: float, nu: Sequence[float], t: float) -> np.ndarray:
    """Pointed edge process at time ``t``: top eigenvalue of ``GUE_{t-a} + h I + diag(nu)(t-a)``."""
    if len(nu) < 1:
        raise ValueError("n must be >= 1")
    if not t > a:
        raise ValueError("need t > a")
    tau = t - a
    return top_eigenvalue_batch(rng, size, h + np.asarray(nu, dtype=float) * tau, tau)


def parallel_ep_batch(rng, size, a: float, h: Sequence[float], nu: float, t: float) -> np.ndarray:
    """Parallel edge process at ``t``: top eigenvalue of Hermitian BM started at ``diag(h)``, plus ``nu (t-a)``."""
    tau = t - a
    return top_eigenvalue_batch(rng, size, np.asarray(h, dtype=float), tau) + nu * tau


def pointed_ep_sample_gue(n: int, a: float, h: float, nu: Sequence[float], t: float, seed: int) -> float:
    if n < 1 or len(nu) != n:
        raise ValueError("need n >= 1 and len(nu) == n")
    return float(pointed_ep_batch(rngmod.generator(seed), 1, a, h, nu, t)[0])


def survival_forever(x: np.ndarray, nu: np.ndarray, variance: float = BM_VARIANCE) -> np.ndarray:
    """``P(never collide)`` for drifted BMs at ordered positions ``x`` (rows), strictly increasing ``nu``.

    ``det[exp((nu_j - nu_i) x_i / variance)]``; rows are centred first since
    the expression is translation invariant.
    """
    x = np.atleast_2d(x)
    xc = x - x.mean(axis=1, keepdims=True)
    M = np.exp((nu[None, None, :] - nu[None, :, None]) * xc[:, :, None] / variance)
    return np.clip(np.linalg.det(M), 0.0, 1.0)


def ep_conditioned_batch(
    rng: np.random.Generator,
    size: int,
    spec: DriftedEnsembleSpec,
    horizon: float,
    eval_points: Sequence[float],
    step: float | None = None,
    proposal_batch: int = 65536,
    terminal_correction: bool = True,
) -> tuple[np.ndarray, float]:
    """Rejection sampler for the top line of nonintersecting drifted BMs.

    Proposals are free paths on ``[a, horizon]``. Collisions between grid
    points are detected with the Brownian-bridge crossing probability of each
    adjacent gap (exact for two lines). With strictly increasing drifts the
    survivors at ``horizon`` are accepted with the probability of never
    colliding afterwards, which removes the finite-horizon bias. Returns the
    accepted top-line values at ``eval_points`` and the acceptance rate.
    """
    n = spec.n
    h = np.asarray(spec.h)
    nu = np.asarray(spec.nu)
    eval_points = np.asarray(eval_points, dtype=float)
    if n == 1:
        grid_pts = np.concatenate([[spec.a], np.sort(eval_points)])
        vals = h[0] + nu[0] * (eval_points - spec.a)
        order = np.argsort(eval_points)
        d = np.diff(grid_pts)
        w = np.cumsum(math.sqrt(BM_VARIANCE) * np.sqrt(d) * rng.standard_normal((size, d.size)), axis=1)
        out = np.empty((size, eval_points.size))
        out[:, order] = w
        return out + vals, 1.0
    if eval_points.max() > horizon or eval_points.min() <= spec.a:
        raise ValueError("eval points must lie in (a, horizon]")
    step = 1e-3 * (horizon - spec.a) if step is None else step
    K, d = _sim_grid(spec.a, horizon, step)
    eval_idx = np.rint((eval_points - spec.a) / d).astype(int)
    strict_nu = bool(np.all(np.diff(nu) > 0))
    gap_var = 2 * BM_VARIANCE * d
    accepted: list[np.ndarray] = []
    n_acc = 0
    proposals = 0
    while n_acc < size:
        B = proposal_batch
        proposals += B
        X = np.tile(h, (B, 1))
        rec = np.empty((B, eval_points.size))
        alive = np.arange(B)
        for k in range(1, K + 1):
            Xn = X + nu * d + math.sqrt(BM_VARIANCE * d) * rng.standard_normal(X.shape)
            g0 = np.diff(X, axis=1)
            g1 = np.diff(Xn, axis=1)
            ok = np.all(g1 > 0, axis=1)
            with np.errstate(over="ignore", invalid="ignore"):
                stay = np.prod(1.0 - np.exp(-2.0 * np.maximum(g0, 0) * np.maximum(g1, 0) / gap_var), axis=1)
            ok &= rng.random(X.shape[0]) < stay
            X, alive = Xn[ok], alive[ok]
            hit = eval_idx == k
            if hit.any():
                rec[np.ix_(alive, np.nonzero(hit)[0])] = X[:, -1:]
            if X.shape[0] == 0:
                break
        if X.shape[0] and terminal_correction and strict_nu:
            keep = rng.random(X.shape[0]) < survival_forever(X, nu)
            alive = alive[keep]
        accepted.append(rec[alive])
        n_acc += alive.size
        if proposals >= 10**6 and n_acc < 1e-6 * proposals:
            raise AcceptanceError("acceptance rate below 1e-6: increase separation or shrink horizon")
    return np.concatenate(accepted)[:size], n_acc / proposals


def ep_sample_conditioned(
    spec: DriftedEnsembleSpec, horizon: float, eval_points: Sequence[float], seed: int, step: float | None = None
) -> np.ndarray:
    vals, _ = ep_conditioned_batch(rngmod.generator(seed), 1, spec, horizon, eval_points, step)
    return vals[0]


# --- Time inversion ----------------------------------------------------------


def _pullback(path: PathSample, s: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``path`` (any leading batch shape) at times ``s``."""
    g = path.grid
    k = (s - g.lo) / g.step
    if k.min() < -1e-9 or k.max() > g.size - 1 + 1e-9:
        raise ValueError("path domain does not cover the reparametrization")
    i = np.clip(np.floor(k + 1e-9).astype(int), 0, max(g.size - 2, 0))
    w = np.clip(k - i, 0.0, 1.0)
    v = np.asarray(path.values, dtype=float)
    if g.size == 1:
        return np.broadcast_to(v[..., :1], v.shape[:-1] + s.shape).copy()
    return v[..., i] * (1 - w) + v[..., i + 1] * w


def time_invert(path: PathSample, a: float, out_grid: Grid | None = None) -> PathSample:
    """``(I_a g)(t) = ((t + a) / a) g(-a t / (t + a))`` on ``out_grid`` (default: the path grid).

    ``path.values`` may carry leading batch dimensions.
    """
    grid = path.grid if out_grid is None else out_grid
    t = grid.points
    if np.any(np.isclose(t, -a, atol=1e-12)) or np.any(t < -a):
        raise ValueError("t = -a (or beyond) lies in the domain")
    vals = (t + a) / a * _pullback(path, -a * t / (t + a))
    return PathSample(grid, vals, path.drift, path.seed)


def classical_invert(path: PathSample, out_grid: Grid | None = None) -> PathSample:
    """``t -> t g(1/t)`` on ``out_grid`` (positive times only)."""
    grid = path.grid if out_grid is None else out_grid
    t = grid.points
    if np.any(t <= 0):
        raise ValueError("classical inversion needs t > 0")
    return PathSample(grid, t * _pullback(path, 1.0 / t), path.drift, path.seed)


# --- Narrow-wedge constructions ------------------------------------------------


def wedge_curve(n: int, m: int, a: float, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, NEG_INF)
    right = x >= -a
    out[right] = np.sqrt(8 * (n - m) * (x[right] + a)) - x[right] * math.sqrt(2 * n / a)
    return out


def wedge_curves(n: int, m: int, a: float, x_grid: Grid) -> GridFunction:
    """Typical last passage curve through the top ``n - m`` lines, started at ``-a``, drift ``-sqrt(2n/a)``."""
    if not 0 <= m < n:
        raise ValueError("need 0 <= m < n")
    return GridFunction(x_grid, wedge_curve(n, m, a, x_grid.points))


def density_offsets(f: GridFunction, n: int, a: float, lipschitz: float | None = None, d_n: float = 0.0):
    """Initial heights ``f_{n,m}``, ``m = 1..m_n``, of the approximation of ``f`` by last passage.

    ``f`` lives on ``[0, b]``; ``f(am/n)`` is read off by linear interpolation.
    The vanishing corrections ``d_n + eps_n / l`` default to zero.
    """
    b = f.x_hi - f.x_lo
    m_n = int(math.floor(b * n / a))
    m = np.arange(1, m_n + 1)
    corr = d_n + (a / n / lipschitz if lipschitz else 0.0)
    fm = np.interp(f.x_lo + a * m / n, f.grid.points, f.values)
    return m, fm - math.sqrt(8 * a * n) + m * math.sqrt(2 * a / n) + corr


def density_approx_batch(
    rng: np.random.Generator,
    size: int,
    f: GridFunction,
    n: int,
    a: float | None = None,
    step: float | None = None,
    bridge: bool = True,
    **kw,
) -> np.ndarray:
    """Samples of ``x -> H_n(-x)`` on ``f``'s grid, shape ``(size, f.grid.size)``.

    ``step`` is the simulation step (default ``a / 400``), rounded down to
    divide ``f``'s grid step. With thousands of lines a coarse step biases
    the output well below its limit.
    """
    a = n**0.25 if a is None else a
    if f.x_lo != 0:
        f = GridFunction(Grid(0.0, f.x_hi - f.x_lo, f.step), f.values)
    step = a / 400 if step is None else step
    refine = max(1, int(math.ceil(f.step / step - 1e-9)))
    d = f.step / refine
    K = max(1, int(round(a / d)))
    a = K * d  # start time -a snapped to the simulation grid
    Kb = int(round(f.x_hi / d))
    if Kb > K:
        raise ValueError("support of f must be shorter than a")
    m, fm = density_offsets(f, n, a, **kw)
    if m.size and m[-1] >= n:
        raise ValueError("too few lines for the support of f")
    h = np.full(n, NEG_INF)
    # lines are B(t) - t sqrt(2n/a) in absolute time, so they sit at sqrt(2an) at -a
    h[m] = fm + math.sqrt(2 * a * n)  # 0-based line m is the bottom of the top n - m lines
    drift = -math.sqrt(2 * n / a)
    out = np.empty((size, f.grid.size))
    for i in range(size):
        inc = drift * d + math.sqrt(BM_VARIANCE * d) * rng.standard_normal((n, K))
        G = last_passage_scan(h, inc, rng if bridge else None, BM_VARIANCE * d)
        # H_n at times -x, x on f's grid: simulation index K - x/d
        out[i] = G[K - np.arange(0, Kb + 1, refine)]
    return out


def density_approx(f: GridFunction, n: int, seed: int, **kw) -> GridFunction:
    """Random ``x -> H_n(-x)``: last passage across ``n`` lines from ``-n^{1/4}`` with heights ``f_{n,m}``."""
    vals = density_approx_batch(rngmod.generator(seed), 1, f, n, **kw)[0]
    return GridFunction(f.grid, vals)


def hermitian_bm_top_batch(rng, size: int, n: int, times: Sequence[float]) -> np.ndarray:
    """Top eigenvalue of standard Hermitian BM (variance 1) at increasing ``times``."""
    times = np.asarray(times, dtype=float)
    out = np.empty((size, times.size))
    H = np.zeros((size, n, n), dtype=complex)
    prev = 0.0
    for j, t in enumerate(times):
        if t > prev:
            H += hermitian_gaussian(rng, size, n, t - prev)
        prev = t
        out[:, j] = np.linalg.eigvalsh(H)[:, -1] if t > 0 else 0.0
    return out


def wedge_bounds(n: int, alpha: float, h: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounding curves for ``W'_n(t) - sqrt(n)(t + 1)``."""
    lower = -math.sqrt(n) * (t - 1) ** 2 - n**alpha
    upper = n**alpha + h**2 - (2.0 / 3.0) * np.abs(t - 1) * h * n**0.25
    return lower, upper


def wedge_containment_batch(
    rng, size: int, n: int, alpha: float, hs: Sequence[float], times: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample containment flags, each of shape ``(size, len(hs))``.

    Returns ``(upper_ok, lower_ok)``: the upper curve is checked at every
    time, the lower one on ``[1/2, 3/2]`` only (it does not involve ``h``).
    """
    times = np.asarray(times, dtype=float)
    W = hermitian_bm_top_batch(rng, size, n, times)
    lam = W - math.sqrt(n) * (times + 1)
    core = (times >= 0.5) & (times <= 1.5)
    upper_ok = np.empty((size, len(hs)), dtype=bool)
    lower_ok = np.empty((size, len(hs)), dtype=bool)
    for j, h in enumerate(hs):
        lower, upper = wedge_bounds(n, alpha, h, times)
        upper_ok[:, j] = np.all(lam <= upper, axis=1)
        lower_ok[:, j] = np.all(lam[:, core] >= lower[core], axis=1)
    return upper_ok, lower_ok
