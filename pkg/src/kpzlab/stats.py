"""Empirical samples, two-sample KS, bootstrap errors, and the Tracy-Widom reference sampler."""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from . import rng as rngmod

CACHE_ENV = "KPZLAB_CACHE_DIR"
_MAGIC = b"KPZL"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQQ")  # magic, version, N, m, seed


@dataclass(frozen=True)
class EmpiricalSample:
    values: np.ndarray
    seed_base: int = 0
    replica_count: int = 0

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "replica_count", v.size)

    @classmethod
    def of(cls, values, seed_base: int = 0) -> "EmpiricalSample":
        return cls(np.asarray(values), seed_base)

    def __len__(self) -> int:
        return self.replica_count


@dataclass
class TestReport:
    test_id: str
    statistic: float
    threshold: float
    passed: bool
    replica_count: int
    runtime: float

    def to_dict(self, omit_runtime: bool = False) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d = {k: d[k] for k in ("test_id", "statistic", "threshold", "pass", "replica_count", "runtime")}
        if omit_runtime:
            del d["runtime"]
        return d

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.test_id}: statistic={self.statistic:.6g} threshold={self.threshold:.6g} replicas={self.replica_count}"


def _as_sorted(x) -> np.ndarray:
    if isinstance(x, EmpiricalSample):
        return x.values
    return np.sort(np.asarray(x, dtype=float).ravel())


def ks_two_sample(A, B) -> float:
    """Sup distance between the two empirical CDFs, evaluated at every jump."""
    a, b = _as_sorted(A), _as_sorted(B)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / a.size
    Fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def bootstrap_se(values, stat: Callable[[np.ndarray], float] = np.mean, resamples: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of ``stat``; resamples draw from ``generator(seed)``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    g = rngmod.generator(seed)
    reps = np.empty(resamples)
    for i in range(resamples):
        reps[i] = stat(v[g.integers(0, v.size, v.size)])
    return float(np.std(reps, ddof=1))


# --- Tracy-Widom reference ------------------------------------------------------


def gue_top_scaled(rng: np.random.Generator, size: int, N: int) -> np.ndarray:
    """``(lambda_max - 2 sqrt(N)) N^{1/6}`` for GUE with unit off-diagonal variance.

    Uses the tridiagonal beta = 2 model, which has the same eigenvalue law
    as the full matrix: diagonal ``N(0, 1)``, off-diagonals ``chi_{2k} / sqrt(2)``.
    """
    out = np.empty(size)
    dof = 2.0 * np.arange(N - 1, 0, -1)
    for i in range(size):
        diag = rng.standard_normal(N)
        off = np.sqrt(rng.chisquare(dof) / 2.0)
        out[i] = eigvalsh_tridiagonal(diag, off, select="i", select_range=(N - 1, N - 1))[0]
    return (out - 2 * math.sqrt(N)) * N ** (1 / 6)


def cache_dir() -> Path:
    base = os.environ.get(CACHE_ENV)
    return Path(base) if base else Path.home() / ".cache" / "kpzlab"


def _cache_path(N: int, m: int, seed: int) -> Path:
    return cache_dir() / f"tw_N{N}_m{m}_s{seed & rngmod.MASK64}.bin"


def _read_cache(path: Path, N: int, m: int, seed: int) -> np.ndarray | None:
    try:
        raw = path.read_bytes()
    except OSError:
        return None
    if len(raw) != _HEADER.size + 8 * m:
        return None
    magic, ver, n_, m_, s_ = _HEADER.unpack_from(raw)
    if (magic, ver, n_, m_, s_) != (_MAGIC, _VERSION, N, m, seed & rngmod.MASK64):
        return None
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).copy()


def _write_cache(path: Path, N: int, m: int, seed: int, vals: np.ndarray) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = _HEADER.pack(_MAGIC, _VERSION, N, m, seed & rngmod.MASK64) + vals.astype("<f8").tobytes()
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tw-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        pass  # read-only cache dir: the sample is still returned


def tw_reference(seed: int, N: int = 400, m: int = 10_000, use_cache: bool = True) -> EmpiricalSample:
    """Reference sample of the scaled GUE top eigenvalue, cached on disk by ``(N, m, seed)``."""
    if N < 100:
        raise ValueError("N must be >= 100")
    if m < 1:
        raise ValueError("m must be >= 1")
    path = _cache_path(N, m, seed)
    vals = _read_cache(path, N, m, seed) if use_cache else None
    if vals is None:
        vals = rngmod.map_blocks(lambda g, k: gue_top_scaled(g, k, N), m, seed, N)
        if use_cache:
            _write_cache(path, N, m, seed, vals)
    return EmpiricalSample(vals, seed)
