"""Level-2 geometric rough paths over R^K sampled on finite time grids.

Second levels follow the convention ``ZZ[l, k] = int_s^t Z^l_{sr} dz^k_r``,
so Chen's relation reads ``ZZ_st = ZZ_su + ZZ_ut + outer(Z_su, Z_ut)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class RoughPathError(ValueError):
    """Invalid input to a rough path construction or query."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_times(times: np.ndarray) -> None:
    if times.ndim != 1 or times.size < 2:
        raise RoughPathError("need at least two time points")
    if not np.all(np.isfinite(times)):
        raise RoughPathError("times must be finite")
    if np.any(np.diff(times) <= 0):
        raise RoughPathError("times must be strictly increasing")


def philox_normals(seed: int, stream: int, size) -> np.ndarray:
    """Standard normals from the Philox4x64 counter-based generator.

    The generator key is derived from ``SeedSequence([seed, stream])``; the
    Gaussian transform is numpy's ziggurat sampler, so draws are identical on
    every platform for a given (seed, stream).
    """
    ss = np.random.SeedSequence([int(seed), int(stream)])
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.standard_normal(size)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """Linear interpolation of the points ``values[i]`` at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        _check_times(times)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise RoughPathError(
                f"values must have shape ({times.size}, K), got {values.shape}")
        if values.shape[1] < 1:
            raise RoughPathError("path dimension K must be >= 1")
        if not np.all(np.isfinite(values)):
            raise RoughPathError("values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.values[:, k])
                         for k in range(self.dim)], axis=-1)

    def refine(self, factor: int) -> "PiecewiseLinearPath":
        """Split every segment into ``factor`` equal pieces (same path)."""
        factor = int(factor)
        if factor < 1:
            raise RoughPathError("refinement factor must be >= 1")
        if factor == 1:
            return self
        frac = np.arange(factor) / factor
        t0, t1 = self.times[:-1], self.times[1:]
        v0, v1 = self.values[:-1], self.values[1:]
        times = (t0[:, None] + frac[None, :] * (t1 - t0)[:, None]).ravel()
        values = (v0[:, None, :] + frac[None, :, None] * (v1 - v0)[:, None, :]
                  ).reshape(-1, self.dim)
        # keep the original nodes bit-exact
        times[::factor] = t0
        values[::factor] = v0
        return PiecewiseLinearPath(np.append(times, self.times[-1]),
                                   np.vstack([values, self.values[-1:]]))


class GeometricRoughPathGrid:
    """A pair (Z, ZZ) known on a strictly increasing time grid.

    Per-interval increments are stored and longer increments are composed on
    demand with Chen's relation. A dense pair table may be supplied instead,
    in which case queries return the stored values verbatim (useful for
    externally computed lifts and for checking Chen's relation itself).
    """

    def __init__(self, times, Z_inc, ZZ_inc, *, table=None):
        times = _frozen(times)
        _check_times(times)
        Z_inc = np.array(Z_inc, dtype=float)
        ZZ_inc = np.array(ZZ_inc, dtype=float)
        M = times.size - 1
        if Z_inc.ndim == 1:
            Z_inc = Z_inc[:, None]
        if Z_inc.shape[0] != M or Z_inc.shape[1] < 1:
            raise RoughPathError(f"Z_inc must have shape ({M}, K), got {Z_inc.shape}")
        K = Z_inc.shape[1]
        if ZZ_inc.shape != (M, K, K):
            raise RoughPathError(f"ZZ_inc must have shape ({M}, {K}, {K}), got {ZZ_inc.shape}")
        Z_inc.setflags(write=False)
        ZZ_inc.setflags(write=False)
        self.times = times
        self.Z_inc = Z_inc
        self.ZZ_inc = ZZ_inc
        self._table = None
        if table is not None:
            Zt, ZZt = (np.array(a, dtype=float) for a in table)
            if Zt.shape != (M + 1, M + 1, K) or ZZt.shape != (M + 1, M + 1, K, K):
                raise RoughPathError("pair table has the wrong shape")
            Zt.setflags(write=False)
            ZZt.setflags(write=False)
            self._table = (Zt, ZZt)
        # running sums of level one, for O(1) first-level queries
        cum = np.zeros((M + 1, K))
        np.cumsum(Z_inc, axis=0, out=cum[1:])
        cum.setflags(write=False)
        self._cum = cum

    @property
    def dim(self) -> int:
        return self.Z_inc.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __repr__(self):
        return (f"GeometricRoughPathGrid(K={self.dim}, intervals={self.n_intervals}, "
                f"span=[{self.times[0]:g}, {self.times[-1]:g}])")

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        i = int(np.searchsorted(self.times, t))
        scale = tol * max(1.0, abs(self.times[-1]))
        for j in (i - 1, i):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= scale:
                return j
        raise RoughPathError(f"time {t!r} is not on the rough path grid")

    def _check_pair(self, s: int, t: int) -> None:
        M = self.n_intervals
        if not (0 <= s <= M and 0 <= t <= M):
            raise RoughPathError(f"indices ({s}, {t}) out of range [0, {M}]")
        if s > t:
            raise RoughPathError(f"need s <= t, got ({s}, {t})")

    def increment(self, s: int, t: int) -> tuple[np.ndarray, np.ndarray]:
        """(Z_st, ZZ_st) between grid indices ``s <= t``."""
        s, t = int(s), int(t)
        self._check_pair(s, t)
        if self._table is not None:
            return self._table[0][s, t].copy(), self._table[1][s, t].copy()
        K = self.dim
        if s == t:
            return np.zeros(K), np.zeros((K, K))
        if t == s + 1:
            return self.Z_inc[s].copy(), self.ZZ_inc[s].copy()
        Zi = self.Z_inc[s:t]
        before = self._cum[s:t] - self._cum[s]
        ZZ = self.ZZ_inc[s:t].sum(axis=0) + before.T @ Zi
        return self._cum[t] - self._cum[s], ZZ

    def with_table(self) -> "GeometricRoughPathGrid":
        """Copy carrying the dense table of all pair increments."""
        M, K = self.n_intervals, self.dim
        Zt = np.zeros((M + 1, M + 1, K))
        ZZt = np.zeros((M + 1, M + 1, K, K))
        for s in range(M + 1):
            for t in range(s, M + 1):
                Zt[s, t], ZZt[s, t] = self.increment(s, t)
        return GeometricRoughPathGrid(self.times, self.Z_inc, self.ZZ_inc, table=(Zt, ZZt))

    def replace_pair(self, s: int, t: int, Z=None, ZZ=None) -> "GeometricRoughPathGrid":
        """Copy with one stored pair overwritten (tables are created if absent)."""
        base = self if self._table is not None else self.with_table()
        Zt, ZZt = (a.copy() for a in base._table)
        if Z is not None:
            Zt[s, t] = Z
        if ZZ is not None:
            ZZt[s, t] = ZZ
        Zi, ZZi = self.Z_inc.copy(), self.ZZ_inc.copy()
        if t == s + 1:
            Zi[s], ZZi[s] = Zt[s, t], ZZt[s, t]
        return GeometricRoughPathGrid(self.times, Zi, ZZi, table=(Zt, ZZt))

    def restrict(self, indices: Sequence[int]) -> "GeometricRoughPathGrid":
        """Rough path on the coarser grid ``times[indices]``."""
        idx = np.asarray(indices, dtype=int)
        if idx.size < 2 or np.any(np.diff(idx) <= 0):
            raise RoughPathError("indices must be strictly increasing, at least two")
        pairs = [self.increment(a, b) for a, b in zip(idx[:-1], idx[1:])]
        return GeometricRoughPathGrid(self.times[idx], [p[0] for p in pairs],
                                      [p[1] for p in pairs])


def reversed_increment(Z: np.ndarray, ZZ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Increment over [t, s] of the time-reversed path: (-Z, Z (x) Z - ZZ)."""
    return -Z, np.outer(Z, Z) - ZZ


def canonical_lift(path: PiecewiseLinearPath) -> GeometricRoughPathGrid:
    """Canonical lift of a piecewise-linear path.

    On a straight segment the iterated integral is exactly half the outer
    product of the increment.
    """
    if not isinstance(path, PiecewiseLinearPath):
        path = PiecewiseLinearPath(*path)
    dz = np.diff(path.values, axis=0)
    return GeometricRoughPathGrid(path.times, dz, 0.5 * dz[:, :, None] * dz[:, None, :])


def lift_smooth(z: Callable, dz: Callable, times, nodes: int = 16) -> GeometricRoughPathGrid:
    """Canonical lift of a smooth path given with its derivative.

    ``ZZ`` on every grid interval is integrated with Gauss-Legendre
    quadrature of ``nodes`` points, which is exact to round-off for
    analytic paths on short intervals.
    """
    times = np.asarray(times, dtype=float)
    _check_times(times)
    x, wts = np.polynomial.legendre.leggauss(nodes)
    a, b = times[:-1], times[1:]
    r = 0.5 * (b - a)[:, None] * (x[None, :] + 1.0) + a[:, None]
    zr = np.asarray(z(r), dtype=float)
    if zr.ndim == 2:
        zr = zr[..., None]
    za = np.asarray(z(a), dtype=float).reshape(a.size, -1)
    zb = np.asarray(z(b), dtype=float).reshape(b.size, -1)
    dzr = np.asarray(dz(r), dtype=float).reshape(zr.shape)
    Zsr = zr - za[:, None, :]
    ZZ = 0.5 * (b - a)[:, None, None] * np.einsum("q,mql,mqk->mlk", wts, Zsr, dzr)
    return GeometricRoughPathGrid(times, zb - za, ZZ)


def smooth_path(name: str, amp: float = 1.0, freq: float = 1.0, dim: int | None = None):
    """Named smooth drivers as ``(z, dz, K)``.

    ``circle``: amp * (sin(freq t), cos(freq t)); ``sine``: amp * sin(freq t)
    in every component; ``linear``: amp * t in every component.
    """
    if name == "circle":
        if dim not in (None, 2):
            raise RoughPathError("the circle driver has dimension 2")
        z = lambda t: amp * np.stack([np.sin(freq * t), np.cos(freq * t)], axis=-1)
        dz = lambda t: amp * freq * np.stack([np.cos(freq * t), -np.sin(freq * t)], axis=-1)
        return z, dz, 2
    K = 1 if dim is None else int(dim)
    if name == "sine":
        z = lambda t: amp * np.repeat(np.sin(freq * np.asarray(t))[..., None], K, axis=-1)
        dz = lambda t: amp * freq * np.repeat(np.cos(freq * np.asarray(t))[..., None], K, axis=-1)
        return z, dz, K
    if name == "linear":
        z = lambda t: amp * np.repeat(np.asarray(t, dtype=float)[..., None], K, axis=-1)
        dz = lambda t: amp * np.ones(np.shape(t) + (K,))
        return z, dz, K
    raise RoughPathError(f"unknown smooth driver {name!r}")


def brownian_dyadic_path(seed: int, level: int, T: float, K: int) -> PiecewiseLinearPath:
    """Dyadic piecewise-linear interpolation of a K-dim Brownian sample.

    Built by midpoint (Brownian bridge) refinement: level j draws the
    midpoints of the level-(j-1) intervals from Philox stream j of ``seed``.
    Every level reuses the coarser levels' draws, so a path at level n+1
    passes bit-exactly through the level-n nodes.
    """
    level, K = int(level), int(K)
    if level < 0:
        raise RoughPathError("level must be >= 0")
    if not T > 0:
        raise RoughPathError("T must be positive")
    if K < 1:
        raise RoughPathError("K must be >= 1")
    B = np.zeros((2, K))
    B[1] = math.sqrt(T) * philox_normals(seed, 0, K)
    for j in range(1, level + 1):
        half = T / 2 ** j
        xi = philox_normals(seed, j, (2 ** (j - 1), K))
        mid = 0.5 * (B[:-1] + B[1:]) + math.sqrt(half / 2.0) * xi
        out = np.empty((2 ** j + 1, K))
        out[0::2] = B
        out[1::2] = mid
        B = out
    times = T * np.arange(2 ** level + 1) / 2 ** level
    return PiecewiseLinearPath(times, B)


def fbm_path(seed: int, n: int, T: float, K: int, hurst: float) -> PiecewiseLinearPath:
    """Piecewise-linear fractional Brownian motion sampled on n uniform steps.

    Exact covariance sampling by Cholesky factorisation; only Hurst indices
    above 1/3 are accepted since only those admit a level-2 geometric lift.
    """
    if not (1.0 / 3.0 < hurst < 1.0):
        raise RoughPathError("hurst must lie in (1/3, 1)")
    n = int(n)
    if n < 1 or not T > 0:
        raise RoughPathError("need n >= 1 and T > 0")
    t = T * np.arange(1, n + 1) / n
    H2 = 2.0 * hurst
    cov = 0.5 * (t[:, None] ** H2 + t[None, :] ** H2 - np.abs(t[:, None] - t[None, :]) ** H2)
    L = np.linalg.cholesky(cov)
    g = philox_normals(seed, 0, (n, K))
    values = np.vstack([np.zeros((1, K)), L @ g])
    return PiecewiseLinearPath(np.concatenate([[0.0], t]), values)


def chen_defect(R: GeometricRoughPathGrid, s: int, theta: int, t: int) -> np.ndarray:
    """ZZ_st - ZZ_s,theta - ZZ_theta,t - Z_s,theta (x) Z_theta,t."""
    if not s <= theta <= t:
        raise RoughPathError("need s <= theta <= t")
    Zst, ZZst = R.increment(s, t)
    Zsu, ZZsu = R.increment(s, theta)
    Zut, ZZut = R.increment(theta, t)
    return ZZst - ZZsu - ZZut - np.outer(Zsu, Zut)


def geometricity_defect(R: GeometricRoughPathGrid, s: int, t: int) -> np.ndarray:
    Z, ZZ = R.increment(s, t)
    return 0.5 * (ZZ + ZZ.T) - 0.5 * np.outer(Z, Z)


class Control:
    """Nonnegative two-index table on a subgrid, meant to be superadditive."""

    def __init__(self, indices, times, table, p: float):
        self.indices = np.asarray(indices, dtype=int)
        self.times = np.asarray(times, dtype=float)
        self.table = np.asarray(table, dtype=float)
        self.p = float(p)
        self._pos = {int(g): a for a, g in enumerate(self.indices)}

    def __call__(self, s: int, t: int) -> float:
        """Value between grid indices ``s`` and ``t`` (both on the subgrid)."""
        return float(self.table[self._pos[int(s)], self._pos[int(t)]])

    def superadditivity_gap(self) -> float:
        """max over subgrid triples of w(s,u) + w(u,t) - w(s,t), normalised."""
        w = self.table
        m = w.shape[0]
        worst = -np.inf
        for a in range(m):
            for c in range(a, m):
                gaps = w[a, a:c + 1] + w[a:c + 1, c] - w[a, c]
                worst = max(worst, float(gaps.max()))
        return worst


def _pvar_table(incs: np.ndarray, q: float) -> np.ndarray:
    """sup over subpartitions of sum |g|^q for every pair, by dynamic programming.

    ``incs[a, b]`` holds |g_ab| on subgrid positions a <= b.
    """
    m = incs.shape[0]
    powed = incs ** q
    best = np.zeros((m, m))
    for a in range(m):
        row = best[a]
        for b in range(a + 1, m):
            row[b] = np.max(row[a:b] + powed[a:b, b])
    return best


def p_variation_control(R: GeometricRoughPathGrid, p: float, subgrid=None) -> Control:
    """Grid control |Z|^p_{p-var} + |ZZ|^{p/2}_{p/2-var} on ``subgrid``.

    Both suprema run over all partitions whose points lie on the subgrid.
    Euclidean norm for Z and Frobenius norm for ZZ.
    """
    if not (2.0 <= p < 3.0):
        raise RoughPathError("p must lie in [2, 3)")
    idx = np.arange(R.n_intervals + 1) if subgrid is None else np.asarray(subgrid, dtype=int)
    if idx.size < 1 or np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] > R.n_intervals:
        raise RoughPathError("subgrid must be strictly increasing grid indices")
    m = idx.size
    nZ = np.zeros((m, m))
    nZZ = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            Z, ZZ = R.increment(idx[a], idx[b])
            nZ[a, b] = np.linalg.norm(Z)
            nZZ[a, b] = np.linalg.norm(ZZ)
    table = _pvar_table(nZ, p) + _pvar_table(nZZ, p / 2.0)
    return Control(idx, R.times[idx], table, p)


def step_proxy(Z: np.ndarray, ZZ: np.ndarray, p: float) -> float:
    """Single-interval control proxy |Z|^p + |ZZ|^{p/2}."""
    return float(np.linalg.norm(Z) ** p + np.linalg.norm(ZZ) ** (p / 2.0))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_path_csv(path: PiecewiseLinearPath, dest) -> None:
    """Write ``t,z_1,...,z_K`` rows with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"z_{k + 1}" for k in range(path.dim)])
    for t, v in zip(path.times, path.values):
        w.writerow([_fmt(t)] + [_fmt(x) for x in v])
    Path(dest).write_text(buf.getvalue())


def read_path_csv(src) -> PiecewiseLinearPath:
    text = Path(src).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise RoughPathError(f"{src}: empty path CSV")
    header = [h.strip() for h in rows[0]]
    K = len(header) - 1
    if K < 1 or header[0] != "t" or header[1:] != [f"z_{k + 1}" for k in range(K)]:
        raise RoughPathError(f"{src}: header must be t,z_1,...,z_K, got {','.join(header)}")
    if len(rows) < 3:
        raise RoughPathError(f"{src}: need at least two samples")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise RoughPathError(f"{src}: {exc}") from None
    if data.shape[1] != K + 1:
        raise RoughPathError(f"{src}: ragged rows")
    return PiecewiseLinearPath(data[:, 0], data[:, 1:])


def write_lift_csv(R: GeometricRoughPathGrid, dest) -> None:
    """Per-interval ``s,t,Z_1..Z_K,ZZ_11..ZZ_KK`` rows (ZZ_lk row-major)."""
    K = R.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "t"] + [f"Z_{k + 1}" for k in range(K)]
               + [f"ZZ_{l + 1}{k + 1}" for l in range(K) for k in range(K)])
    for i in range(R.n_intervals):
        Z, ZZ = R.increment(i, i + 1)
        w.writerow([_fmt(R.times[i]), _fmt(R.times[i + 1])]
                   + [_fmt(x) for x in Z] + [_fmt(x) for x in ZZ.ravel()])
    Path(dest).write_text(buf.getvalue())
