"""Exact combinatorics of the discrete last-passage / nonintersecting-walk pair.

``Y`` is the blocked Bernoulli system on ``Z^{down n}`` (``y1 >= ... >= yn``)
driven by independent Bernoulli(p) bits; ``Z`` is ``n`` Bernoulli(p) walks
conditioned to stay in ``Z^{down n}`` forever (a Doob transform by the
Vandermonde of the hat-shifted state). The law of the bottom line of ``Y``
started from ``y + R`` is a signed combination of bottom-line laws of ``Z``;
:func:`dw_identity_check` verifies that by exhaustive enumeration.

Convention (fixed by exact small-case enumeration): the mixture weight of
start ``z = y + r s`` is ``c * (-1)^{|s|} * Delta(y_hat/r + s) * P(S = s)`` with
``y_hat = (y1 - 1, ..., yn - n)`` and ``Delta(v) = prod_{i<j} (v_j - v_i)``.
The raw argument ``y/r + s`` is off by an ``O(1/r)`` shift and fails.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np

#: Largest ``n * t`` handled by exhaustive enumeration.
ENUM_BUDGET = 24
#: Up to this ``n * t`` arithmetic is exact (Fractions) by default.
EXACT_BUDGET = 12

_CHUNK_BITS = 16


class BudgetError(ValueError):
    pass


def as_probability(p, exact: bool):
    if exact:
        if isinstance(p, Rational):
            return Fraction(p)
        return Fraction(p).limit_denominator(10**9)
    return float(p)


@dataclass(frozen=True)
class YState:
    y: tuple[int, ...]
    p: Fraction | float = Fraction(1, 2)

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        object.__setattr__(self, "y", y)
        if any(a < b for a, b in zip(y, y[1:])):
            raise ValueError(f"state {y} is not in Z^(down n)")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass
class SignedPMF:
    """Finitely supported signed mass function on the integers."""

    support: dict = field(default_factory=dict)

    def total(self):
        return sum(self.support.values())

    def __getitem__(self, k):
        return self.support.get(k, 0)

    def add(self, other: "SignedPMF", weight=1) -> None:
        for k, v in other.support.items():
            self.support[k] = self.support.get(k, 0) + weight * v

    def max_abs_diff(self, other: "SignedPMF"):
        keys = set(self.support) | set(other.support)
        return max((abs(self[k] - other[k]) for k in keys), default=0)

    def shift(self, d: int) -> "SignedPMF":
        return SignedPMF({k + d: v for k, v in self.support.items()})

    def convolve(self, other: "SignedPMF") -> "SignedPMF":
        out: dict = defaultdict(int)
        for a, u in self.support.items():
            for b, v in other.support.items():
                out[a + b] += u * v
        return SignedPMF(dict(out))

    def difference(self) -> "SignedPMF":
        """``(D g)(j) = g(j + 1) - g(j)``."""
        keys = set(self.support) | {k - 1 for k in self.support}
        out = {k: self[k + 1] - self[k] for k in keys}
        return SignedPMF({k: v for k, v in out.items() if v != 0})

    @classmethod
    def uniform(cls, r: int) -> "SignedPMF":
        """Mass function of the uniform law on ``{1, ..., r}``."""
        return cls({k: Fraction(1, r) for k in range(1, r + 1)})

    @classmethod
    def point(cls, k: int = 0) -> "SignedPMF":
        return cls({k: Fraction(1)})


@dataclass
class SignedMixture:
    entries: list
    n: int
    r: int

    def total_weight(self):
        return sum(w for w, _ in self.entries)


def y_step(state: YState, xi: Sequence[int]) -> YState:
    """One step of ``Y_k(t) = min(Y_k(t-1) + xi_k, Y_{k-1}(t))``, ``k = 1..n`` in order."""
    if len(xi) != state.n:
        raise ValueError("xi must have length n")
    if any(b not in (0, 1) for b in xi):
        raise ValueError("xi must be binary")
    out: list[int] = []
    for k, (yk, b) in enumerate(zip(state.y, xi)):
        v = yk + int(b)
        if k:
            v = min(v, out[-1])
        out.append(v)
    return YState(tuple(out), state.p)


def _bit_arrays(n: int, t: int, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop-1`` of all binary arrays, shape (m, t, n)."""
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n * t, dtype=np.int64)) & 1
    return bits.reshape(-1, t, n).astype(np.int64)


def _bottom_by_recursion(y0: np.ndarray, xi: np.ndarray) -> np.ndarray:
    y = np.broadcast_to(y0, (xi.shape[0], y0.size)).copy()
    for s in range(xi.shape[1]):
        for k in range(y0.size):
            y[:, k] += xi[:, s, k]
            if k:
                np.minimum(y[:, k], y[:, k - 1], out=y[:, k])
    return y[:, -1]


def _bottom_by_last_passage(y0: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``Y_n(t) = -L(t)`` with ``h = -y0`` and ``B_k = -cumsum(xi_k)``.

    Enumerates every start line ``l`` and every nondecreasing sequence of
    integer jump times; piecewise-linear paths attain their max at integers.
    """
    m, t, n = xi.shape
    B = np.zeros((m, t + 1, n), dtype=np.int64)
    B[:, 1:, :] = -np.cumsum(xi, axis=1)
    h = -y0
    best = np.full(m, np.iinfo(np.int64).min)
    for ell in range(n):
        for jumps in itertools.combinations_with_replacement(range(t + 1), n - 1 - ell):
            times = (0, *jumps, t)
            val = np.full(m, h[ell], dtype=np.int64)
            for i, line in enumerate(range(ell, n)):
                val += B[:, times[i + 1], line] - B[:, times[i], line]
            np.maximum(best, val, out=best)
    return -best


def bottom_line_counts(y0: Sequence[int], t: int, route: str = "recursion") -> dict:
    """Map ``value -> counts[k]``: number of bit arrays with ``k`` ones giving ``Y_n(t) = value``.

    Counts do not depend on ``p``, so equal count tables mean equal laws for every ``p``.
    """
    y0 = np.asarray(YState(tuple(y0)).y, dtype=np.int64)
    n = y0.size
    if n * t > ENUM_BUDGET:
        raise BudgetError(f"enumeration budget exceeded: n*t = {n * t} > {ENUM_BUDGET}")
    fn = {"recursion": _bottom_by_recursion, "last_passage": _bottom_by_last_passage}[route]
    total = 1 << (n * t)
    chunk = 1 << _CHUNK_BITS
    table: dict = {}
    for start in range(0, total, chunk):
        xi = _bit_arrays(n, t, start, min(start + chunk, total))
        vals = fn(y0, xi)
        ones = xi.reshape(xi.shape[0], -1).sum(axis=1)
        for v in np.unique(vals):
            c = np.bincount(ones[vals == v], minlength=n * t + 1)
            table[int(v)] = table.get(int(v), 0) + c
    return table


def _law_from_counts(table: dict, p, nt: int) -> SignedPMF:
    pw = [p**k * (1 - p) ** (nt - k) for k in range(nt + 1)]
    return SignedPMF({v: sum(int(c[k]) * pw[k] for k in range(nt + 1) if c[k]) for v, c in table.items()})


def y_law_exact(y0: YState, t: int, exact: bool | None = None) -> SignedPMF:
    """Exact law of ``Y_n(t)``, by recursion and by last passage; the two must agree."""
    nt = y0.n * t
    if nt > ENUM_BUDGET:
        raise BudgetError(f"enumeration budget exceeded: n*t = {nt} > {ENUM_BUDGET}")
    exact = nt <= EXACT_BUDGET if exact is None else exact
    rec = bottom_line_counts(y0.y, t, "recursion")
    lpp = bottom_line_counts(y0.y, t, "last_passage")
    if rec.keys() != lpp.keys() or any(not np.array_equal(rec[k], lpp[k]) for k in rec):
        raise AssertionError("recursion and last-passage routes disagree")
    return _law_from_counts(rec, as_probability(y0.p, exact), nt)


def vandermonde(v: Iterable):
    """``prod_{i<j} (v_j - v_i)``."""
    v = list(v)
    out = 1
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            out *= v[j] - v[i]
    return out


def dw_constant(n: int) -> Fraction:
    """``2^{C(n,2)} / (1! 2! ... (n-1)!)``."""
    return Fraction(2 ** math.comb(n, 2), math.prod(math.factorial(i) for i in range(1, n)))


def _hat(z: Sequence[int]) -> list[int]:
    return [zi - (i + 1) for i, zi in enumerate(z)]


def _ordered(z: Sequence) -> bool:
    return all(a >= b for a, b in zip(z, z[1:]))


def dw_weights(y: Sequence[int], r: int, n: int) -> SignedMixture:
    """Signed mixture ``{(weight(s), y + r s)}`` over ``s_i in {0..n-i}``."""
    y = [int(v) for v in y]
    if len(y) != n or r < 1:
        raise ValueError("need len(y) == n and r >= 1")
    c = dw_constant(n)
    yhat = _hat(y)
    entries = []
    for s in itertools.product(*[range(n - i) for i in range(n)]):
        start = tuple(y[i] + r * s[i] for i in range(n))
        if not _ordered(start):
            raise ValueError("initial condition not admissible")
        prob = math.prod(Fraction(math.comb(n - 1 - i, s[i]), 2 ** (n - 1 - i)) for i in range(n))
        delta = vandermonde(Fraction(yhat[i], r) + s[i] for i in range(n))
        entries.append((c * (-1) ** sum(s) * delta * prob, start))
    return SignedMixture(entries, n, r)


def _bernoulli_kernel(t: int, p):
    def q(a: int, b: int):
        k = b - a
        if k < 0 or k > t:
            return 0 * p
        return math.comb(t, k) * p**k * (1 - p) ** (t - k)

    return q


def _det(m: list[list]):
    n = len(m)
    total = 0
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = -1 if inv % 2 else 1
        for i in range(n):
            term *= m[i][perm[i]]
            if term == 0:
                break
        total += term
    return total


def z_transition(z0: Sequence[int], p, t: int) -> dict:
    """``P(Z(t) = z | Z(0) = z0)`` for all reachable ``z``.

    Karlin-McGregor determinant of free Bernoulli kernels on hat-shifted
    coordinates, times the Doob ratio ``Delta(z_hat) / Delta(z0_hat)``.
    """
    z0 = [int(v) for v in z0]
    n = len(z0)
    hat0 = _hat(z0)
    d0 = vandermonde(hat0)
    if d0 == 0:
        raise ValueError("Delta(z0_hat) = 0: start is not strictly ordered after hat shift")
    q = _bernoulli_kernel(t, p)
    out = {}
    for inc in itertools.product(range(t + 1), repeat=n):
        z = [z0[i] + inc[i] for i in range(n)]
        if not _ordered(z):
            continue
        hat = _hat(z)
        km = _det([[q(hat0[i], hat[j]) for j in range(n)] for i in range(n)])
        if km != 0:
            out[tuple(z)] = vandermonde(hat) * km / d0
    return out


def z_step_doob(z: Sequence[int], p) -> dict:
    """One-step Doob transform ``P_free(z -> z') Delta(z'_hat) / Delta(z_hat)`` on ordered ``z'``."""
    z = [int(v) for v in z]
    d0 = vandermonde(_hat(z))
    out = {}
    for xi in itertools.product((0, 1), repeat=len(z)):
        z1 = [a + b for a, b in zip(z, xi)]
        if _ordered(z1):
            k = sum(xi)
            w = p**k * (1 - p) ** (len(z) - k) * vandermonde(_hat(z1)) / d0
            if w != 0:
                out[tuple(z1)] = w
    return out


def z_law_exact(z0: Sequence[int], p, t: int, exact: bool | None = None) -> SignedPMF:
    """Law of the bottom coordinate ``Z_n(t)``."""
    n = len(z0)
    if n * t > ENUM_BUDGET:
        raise BudgetError(f"enumeration budget exceeded: n*t = {n * t} > {ENUM_BUDGET}")
    exact = n * t <= EXACT_BUDGET if exact is None else exact
    law: dict = defaultdict(int)
    for z, w in z_transition(z0, as_probability(p, exact), t).items():
        law[z[-1]] += w
    return SignedPMF(dict(law))


def dw_start_law(y: Sequence[int], r: int) -> list[tuple[Fraction, tuple[int, ...]]]:
    """Law of ``y + R`` with ``R_i`` a sum of ``n - i`` uniforms on ``{1..r}``."""
    n = len(y)
    u = SignedPMF.uniform(r)
    marginals = []
    for i in range(n):
        m = SignedPMF.point(0)
        for _ in range(n - 1 - i):
            m = m.convolve(u)
        marginals.append(sorted(m.support.items()))
    out = []
    for combo in itertools.product(*marginals):
        w = math.prod(pw for _, pw in combo)
        out.append((w, tuple(int(y[i]) + combo[i][0] for i in range(n))))
    return out


def is_admissible(y: Sequence[int], r: int) -> bool:
    """Both ``y + R`` and every ``y + r s`` lie in ``Z^{down n}``."""
    n = len(y)
    if not all(_ordered(s) for _, s in dw_start_law(y, r)):
        return False
    return all(
        _ordered([y[i] + r * s[i] for i in range(n)])
        for s in itertools.product(*[range(n - i) for i in range(n)])
    )


def minimal_admissible(n: int, r: int) -> tuple[int, ...]:
    """Smallest equally spaced admissible start ``(g(n-1), ..., g, 0)``."""
    for g in range(0, r * n + 2):
        y = tuple((n - 1 - i) * g for i in range(n))
        if is_admissible(y, r):
            return y
    raise RuntimeError("no admissible start found")


def dw_identity_check(y: Sequence[int], r: int, p, t: int, n: int | None = None, exact: bool | None = None):
    """Max over the common support of ``|P(Y_n(t) = k) - sum_s w_s P_{y+rs}(Z_n(t) = k)|``."""
    y = tuple(int(v) for v in y)
    n = len(y) if n is None else n
    if len(y) != n:
        raise ValueError("len(y) must equal n")
    if n * t > ENUM_BUDGET:
        raise BudgetError(f"enumeration budget exceeded: n*t = {n * t} > {ENUM_BUDGET}")
    exact = n * t <= EXACT_BUDGET if exact is None else exact
    starts = dw_start_law(y, r)
    if not all(_ordered(s) for _, s in starts):
        raise ValueError("initial condition not admissible")
    pp = as_probability(p, exact)
    lhs = SignedPMF()
    for w, start in starts:
        lhs.add(y_law_exact(YState(start, pp), t, exact=exact), w if exact else float(w))
    rhs = SignedPMF()
    for w, start in dw_weights(y, r, n).entries:
        rhs.add(z_law_exact(start, pp, t, exact=exact), w if exact else float(w))
    return lhs.max_abs_diff(rhs)


def finite_difference_identities(u_mass: SignedPMF, n: int, seed: int = 0, trials: int = 5) -> bool:
    """Check the finite-difference facts behind the signed-mixture weights.

    (i) ``sum_l C(n,l) (-1)^l g(j+l) = (-D)^n g(j)``;
    (ii) ``D(u * g) = (Du) * g``;
    (iii) ``D^k u^{*k} = (Du)^{*k}`` for ``k < n``, the one-coordinate factor
    of ``D_1^{n-1} ... D_{n-1}^1 prod_i u^{*(n-i)}(z_i)``.
    """
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(trials):
        lo = int(rng.integers(-5, 5))
        g = SignedPMF({lo + k: Fraction(int(v)) for k, v in enumerate(rng.integers(-9, 10, size=8))})
        dn = g
        for _ in range(n):
            dn = dn.difference()
        sign = (-1) ** n
        for j in range(lo - n - 2, lo + 10):
            lhs = sum(math.comb(n, l) * (-1) ** l * g[j + l] for l in range(n + 1))
            ok &= lhs == sign * dn[j]
        ok &= _same(u_mass.convolve(g).difference(), u_mass.difference().convolve(g))
    for k in range(n):
        power = SignedPMF.point(0)
        dpower = SignedPMF.point(0)
        for _ in range(k):
            power = power.convolve(u_mass)
            dpower = dpower.convolve(u_mass.difference())
        for _ in range(k):
            power = power.difference()
        ok &= _same(power, dpower)
    return bool(ok)


def _same(a: SignedPMF, b: SignedPMF) -> bool:
    return a.max_abs_diff(b) == 0
