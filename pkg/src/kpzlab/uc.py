"""Grid representation of upper semicontinuous functions and their semirings.

A :class:`GridFunction` holds extended-real values on a uniform grid plus a
list of point atoms. Atoms make narrow wedges exact in both compositions:
under ``max`` an atom is one more candidate point, under ``supn`` it is a
point mass with weight ``exp(log_weight)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

NEG_INF = -math.inf
_GRID_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``lo, lo + step, ..., hi``."""

    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.hi < self.lo:
            raise ValueError("grid hi < lo")

    @classmethod
    def from_points(cls, lo: float, step: float, size: int) -> "Grid":
        return cls(lo, lo + step * (size - 1), step)

    @property
    def size(self) -> int:
        return int(math.floor((self.hi - self.lo) / self.step + _GRID_TOL)) + 1

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.size)

    def index_of(self, x: float) -> int:
        """Index of grid point ``x``; raises if ``x`` is not on the grid."""
        k = (x - self.lo) / self.step
        i = int(round(k))
        if abs(k - i) > 1e-6 or not 0 <= i < self.size:
            raise ValueError(f"{x} is not a grid point of {self}")
        return i

    def same_as(self, other: "Grid") -> bool:
        return (
            self.size == other.size
            and math.isclose(self.lo, other.lo, abs_tol=1e-12)
            and math.isclose(self.step, other.step, rel_tol=1e-12)
        )

    def trapezoid_log_weights(self) -> np.ndarray:
        m = self.size
        if m == 1:
            return np.array([NEG_INF])
        w = np.full(m, math.log(self.step))
        w[0] -= math.log(2.0)
        w[-1] -= math.log(2.0)
        return w


class Atom(NamedTuple):
    location: float
    value: float = 0.0
    log_weight: float = 0.0


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray
    atoms: tuple[Atom, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.grid.size:
            raise ValueError(
                f"values length {values.size} does not match grid size {self.grid.size}"
            )
        object.__setattr__(self, "values", values)
        atoms = tuple(Atom(*a) for a in self.atoms)
        for a in atoms:
            if not self.grid.lo - _GRID_TOL <= a.location <= self.grid.hi + _GRID_TOL:
                raise ValueError(f"atom at {a.location} outside [{self.grid.lo}, {self.grid.hi}]")
        object.__setattr__(self, "atoms", atoms)

    @property
    def x_lo(self) -> float:
        return self.grid.lo

    @property
    def x_hi(self) -> float:
        return self.grid.hi

    @property
    def step(self) -> float:
        return self.grid.step

    @classmethod
    def from_callable(cls, fn: Callable, lo: float, hi: float, step: float, atoms=()) -> "GridFunction":
        grid = Grid(lo, hi, step)
        return cls(grid, np.asarray(fn(grid.points), dtype=float) * np.ones(grid.size), atoms)

    @classmethod
    def constant(cls, c: float, lo: float, hi: float, step: float) -> "GridFunction":
        grid = Grid(lo, hi, step)
        return cls(grid, np.full(grid.size, float(c)))

    @classmethod
    def narrow_wedge(cls, a: float, grid: Grid, value: float = 0.0) -> "GridFunction":
        """``0_a``: ``-inf`` on the grid, one unit atom at ``a``."""
        return cls(grid, np.full(grid.size, NEG_INF), (Atom(a, value, 0.0),))

    def __add__(self, c: float) -> "GridFunction":
        atoms = tuple(Atom(a.location, a.value + c, a.log_weight) for a in self.atoms)
        return GridFunction(self.grid, self.values + c, atoms)

    def max(self) -> float:
        cands = [np.max(self.values)] + [a.value for a in self.atoms]
        return float(max(cands))


@dataclass(frozen=True)
class KernelSample:
    """One realization of ``K(x, y)`` on ``x_grid x y_grid``; ``-inf`` off the support."""

    x_grid: Grid
    y_grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.x_grid.size, self.y_grid.size):
            raise ValueError("kernel values do not match grid shapes")
        object.__setattr__(self, "values", values)


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """``log(sum(exp(a)))`` that returns ``-inf`` for all-``-inf`` slices."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    s = np.where(np.isneginf(m), NEG_INF, s)
    if axis is None:
        return float(s.reshape(()))
    return np.squeeze(s, axis=axis)


def _check(f: GridFunction) -> None:
    if np.isnan(f.values).any() or any(math.isnan(a.value) or math.isnan(a.log_weight) for a in f.atoms):
        raise ValueError("invalid function: NaN values")


def supn_integrate(f: GridFunction, n: float) -> float:
    """``(1/n) log`` of the integral of ``exp(n f)``, trapezoid on the grid plus atoms.

    Empty support gives ``-inf``.
    """
    if not n > 0:
        raise ValueError("n must be positive")
    _check(f)
    terms = [n * f.values + f.grid.trapezoid_log_weights()]
    if f.atoms:
        terms.append(np.array([n * a.value + a.log_weight for a in f.atoms]))
    return logsumexp(np.concatenate(terms)) / n


def _atom_rows(f: GridFunction, K: KernelSample):
    rows = np.array([K.x_grid.index_of(a.location) for a in f.atoms], dtype=int)
    vals = np.array([a.value for a in f.atoms])
    logw = np.array([a.log_weight for a in f.atoms])
    return rows, vals, logw


def _require_same(f: GridFunction, K: KernelSample) -> None:
    if not f.grid.same_as(K.x_grid):
        raise ValueError("grid mismatch: function grid differs from kernel x-grid")


def compose_supn(f: GridFunction, K: KernelSample, n: float) -> GridFunction:
    """``y -> supn(f + K(., y))``, the polymer composition ``f o_n K``."""
    _require_same(f, K)
    _check(f)
    logw = f.grid.trapezoid_log_weights()
    with np.errstate(invalid="ignore"):
        terms = n * (f.values[:, None] + K.values) + logw[:, None]
    if f.atoms:
        rows, vals, alw = _atom_rows(f, K)
        terms = np.vstack([terms, n * (vals[:, None] + K.values[rows]) + alw[:, None]])
    return GridFunction(K.y_grid, logsumexp(terms, axis=0) / n)


def compose_max(f: GridFunction, K: KernelSample) -> GridFunction:
    """``y -> max_x f(x) + K(x, y)`` over grid points and atoms."""
    _require_same(f, K)
    _check(f)
    cand = f.values[:, None] + K.values
    if f.atoms:
        rows, vals, _ = _atom_rows(f, K)
        cand = np.vstack([cand, vals[:, None] + K.values[rows]])
    return GridFunction(K.y_grid, np.max(cand, axis=0))


def kernel_max_product(K1: KernelSample, K2: KernelSample) -> KernelSample:
    """Max-plus product ``(K1 K2)(x, z) = max_y K1(x, y) + K2(y, z)``."""
    if not K1.y_grid.same_as(K2.x_grid):
        raise ValueError("grid mismatch between kernels")
    vals = np.max(K1.values[:, :, None] + K2.values[None, :, :], axis=1)
    return KernelSample(K1.x_grid, K2.y_grid, vals)


def kernel_supn_product(K1: KernelSample, K2: KernelSample, n: float) -> KernelSample:
    """``(K1 o_n K2)(x, z)``, integrating the shared variable by trapezoid."""
    if not K1.y_grid.same_as(K2.x_grid):
        raise ValueError("grid mismatch between kernels")
    logw = K1.y_grid.trapezoid_log_weights()
    terms = n * (K1.values[:, :, None] + K2.values[None, :, :]) + logw[None, :, None]
    return KernelSample(K1.x_grid, K2.y_grid, logsumexp(terms, axis=1) / n)


def line_metric(f: GridFunction) -> KernelSample:
    """``K(x, y) = f(y) - f(x)`` for ``x <= y`` and ``-inf`` for ``y < x``."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("line metric needs a finite function")
    m = f.grid.size
    vals = f.values[None, :] - f.values[:, None]
    vals[np.tril_indices(m, k=-1)] = NEG_INF
    return KernelSample(f.grid, f.grid, vals)


def _is_thick(f: GridFunction, n: float, idx: np.ndarray, eps: float) -> bool:
    pts = f.grid.points
    width = int(math.floor(eps / f.grid.step + 1e-9))
    logstep = math.log(f.grid.step)
    for i in idx:
        lo, hi = max(i - width, 0), min(i + width, f.grid.size - 1)
        seg = n * f.values[lo : hi + 1]
        if hi > lo:
            w = np.full(hi - lo + 1, logstep)
            w[0] -= math.log(2.0)
            w[-1] -= math.log(2.0)
            terms = [seg + w]
        else:
            terms = [np.array([NEG_INF])]
        near = [a for a in f.atoms if abs(a.location - pts[i]) <= eps]
        if near:
            terms.append(np.array([n * a.value + a.log_weight for a in near]))
        local = logsumexp(np.concatenate(terms)) / n
        if local < f.values[i] - eps:
            return False
    return True


def thickness(f: GridFunction, n: float, A: Sequence[float], levels: int = 20) -> float:
    """Smallest ``eps`` in ``{2**-k * |A| : 0 <= k <= levels}`` at which ``f`` is eps-thick on ``A``.

    ``f`` is eps-thick at ``x`` when the supn of ``f`` over ``|y - x| <= eps``
    is at least ``f(x) - eps``. Thickness is monotone in eps, so the ladder
    is bisected. Returns ``inf`` if even ``eps = |A|`` fails.
    """
    _check(f)
    a_lo, a_hi = A
    if a_lo < f.grid.lo - _GRID_TOL or a_hi > f.grid.hi + _GRID_TOL or a_hi <= a_lo:
        raise ValueError("A must be a nondegenerate subinterval of the grid")
    pts = f.grid.points
    idx = np.nonzero((pts >= a_lo - _GRID_TOL) & (pts <= a_hi + _GRID_TOL) & np.isfinite(f.values))[0]
    length = a_hi - a_lo
    ladder = [length * 2.0**-k for k in range(levels + 1)]  # decreasing
    if not _is_thick(f, n, idx, ladder[0]):
        return math.inf
    good, bad = 0, levels + 1  # ladder[good] thick; ladder[bad] not (sentinel)
    while bad - good > 1:
        mid = (good + bad) // 2
        if _is_thick(f, n, idx, ladder[mid]):
            good = mid
        else:
            bad = mid
    return ladder[good]
