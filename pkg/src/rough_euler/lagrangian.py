"""Particle diagnostics: rough tracer steps, loop circulation, push-forward check."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import ScalarField, VectorField, evaluate_many

TWO_PI = 2.0 * math.pi


class LagrangianError(ValueError):
    pass


def wrap(points: np.ndarray) -> np.ndarray:
    return np.mod(points, TWO_PI)


def minimal_image(d: np.ndarray) -> np.ndarray:
    """Periodic displacement with components in [-pi, pi)."""
    return (d + math.pi) % TWO_PI - math.pi


@dataclass
class TracerLoop:
    """Closed polygon of tracer positions on the torus."""

    positions: np.ndarray
    created: float = 0.0
    name: str = "loop"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise LagrangianError("loop positions must have shape (M, 2)")
        if pos.shape[0] < 8:
            raise LagrangianError("a loop needs at least 8 points")
        if not np.all(np.isfinite(pos)):
            raise LagrangianError("loop positions must be finite")
        self.positions = pos

    @classmethod
    def circle(cls, center, radius: float, n: int = 256, name: str = "loop") -> "TracerLoop":
        th = TWO_PI * np.arange(n) / n
        c = np.asarray(center, dtype=float)
        pts = c[None, :] + radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
        return cls(wrap(pts), name=name)

    def edges(self) -> np.ndarray:
        d = minimal_image(np.roll(self.positions, -1, axis=0) - self.positions)
        return d


@dataclass
class FlowSample:
    """A structured particle lattice at time ``t`` and where it started."""

    positions: np.ndarray
    origin: np.ndarray
    t: float = 0.0

    @classmethod
    def lattice(cls, n: int, t: float = 0.0) -> "FlowSample":
        x = TWO_PI * np.arange(n) / n
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        return cls(pts.copy(), pts.copy(), t)


def eval_velocity_at(u: VectorField, points) -> np.ndarray:
    """Exact evaluation of a band-limited vector field at points (P, 2)."""
    return u.evaluate(points)


class XiEvaluator:
    """Values and first derivatives of the noise fields xi_k at points."""

    def __init__(self, xi):
        self.xi = list(xi)

    @property
    def K(self) -> int:
        return len(self.xi)

    def values(self, points) -> np.ndarray:
        """Array (K, P, 2)."""
        if not self.xi:
            return np.zeros((0, len(points), 2))
        comps = [c for v in self.xi for c in v]
        vals = evaluate_many(comps, points)
        return np.stack(vals).reshape(self.K, 2, -1).transpose(0, 2, 1)

    def jacobians(self, points) -> np.ndarray:
        """Array (K, P, 2, 2) with [k, p, i, j] = d_j xi_k^i."""
        if not self.xi:
            return np.zeros((0, len(points), 2, 2))
        comps = [c for v in self.xi for c in v]
        d1 = np.stack(evaluate_many(comps, points, deriv=(1, 0))).reshape(self.K, 2, -1)
        d2 = np.stack(evaluate_many(comps, points, deriv=(0, 1))).reshape(self.K, 2, -1)
        J = np.stack([d1, d2], axis=-1)  # (K, 2, P, 2): [k, i, p, j]
        return J.transpose(0, 2, 1, 3)


def rough_point_map(points, xi, Z, ZZ, *, second_order: bool = True) -> np.ndarray:
    """x + xi_k(x) Z^k + (xi_l . grad xi_k)(x) ZZ^{lk} (not wrapped)."""
    ev = xi if isinstance(xi, XiEvaluator) else XiEvaluator(xi)
    pts = np.asarray(points, dtype=float)
    if ev.K == 0:
        return pts.copy()
    Z = np.asarray(Z, dtype=float)
    ZZ = np.asarray(ZZ, dtype=float)
    if Z.shape != (ev.K,) or ZZ.shape != (ev.K, ev.K):
        raise LagrangianError(f"increment dimension does not match K={ev.K}")
    V = ev.values(pts)
    out = pts + np.einsum("kpi,k->pi", V, Z)
    if second_order:
        J = ev.jacobians(pts)
        # (xi_l . grad) xi_k^i = J[k, p, i, j] V[l, p, j]
        out = out + np.einsum("kpij,lpj,lk->pi", J, V, ZZ)
    return out


def tracer_step(positions, u_s: VectorField | None, xi, Z, ZZ, dt: float) -> np.ndarray:
    """One Davie step of dphi = u(phi) dt + xi_k(phi) dZ^k, wrapped to [0, 2pi)."""
    pts = np.asarray(positions, dtype=float)
    out = rough_point_map(pts, xi, Z, ZZ)
    if u_s is not None and dt != 0.0:
        out = out + dt * eval_velocity_at(u_s, pts)
    return wrap(out)


def circulation(loop, u: VectorField) -> float:
    """Trapezoid rule for the line integral of u around the closed polygon."""
    pos = loop.positions if isinstance(loop, TracerLoop) else np.asarray(loop, dtype=float)
    d = minimal_image(np.roll(pos, -1, axis=0) - pos)
    if np.any(np.all(np.abs(d) < 1e-15, axis=1)):
        raise LagrangianError("degenerate loop: repeated consecutive points")
    U = eval_velocity_at(u, pos)
    Un = np.roll(U, -1, axis=0)
    return float(0.5 * np.sum((U + Un) * d))


def read_loop_csv(src) -> TracerLoop:
    rows = [r for r in csv.reader(io.StringIO(Path(src).read_text())) if r]
    if not rows or [h.strip() for h in rows[0]] != ["x1", "x2"]:
        raise LagrangianError(f"{src}: loop CSV needs an x1,x2 header")
    return TracerLoop(np.array([[float(a) for a in r] for r in rows[1:]]),
                      name=Path(src).stem)


def write_loop_csv(loop: TracerLoop, dest) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2"])
    for a, b in loop.positions:
        w.writerow([format(a, ".17g"), format(b, ".17g")])
    Path(dest).write_text(buf.getvalue())


def back_trace(result, t: float | None = None, lattice: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Trace a lattice from time ``t`` back to 0 through the recorded steps.

    Each step is undone in reverse order: the second drift half-step is
    integrated backwards with the recomputed velocity history, then the
    rough map is applied with the time-reversed increment, then the first
    drift half-step. Returns (lattice points at t, their preimages at 0).
    """
    from . import solver

    history = result.history
    if history is None:
        raise LagrangianError("run has no step history (set keep_history)")
    if t is None:
        t = result.state.t
    steps = [h for h in history if h.t <= t + 1e-12]
    if steps and abs(steps[-1].t - t) > 1e-9:
        raise LagrangianError(f"t={t} is not a step endpoint")
    N = result.grid.N
    stride = max(N // lattice, 1)
    x = TWO_PI * np.arange(0, N, stride) / N
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    start = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    pts = start.copy()
    ev = XiEvaluator(result.xi)
    cfg = result.config
    for rec in reversed(steps):
        h = rec.t - rec.s
        stages = solver.recompute_step(rec.w, rec.Z, rec.ZZ, h, result.xi, cfg)
        if cfg.enable_drift:
            pts = _rk4_backward(pts, stages.after_rough, stages.end, stages.mid_second, h / 2)
        pts = rough_point_map(pts, ev, *reversed_pair(rec.Z, rec.ZZ),
                              second_order=cfg.second_order)
        if cfg.enable_drift:
            pts = _rk4_backward(pts, rec.w, stages.after_first, stages.mid_first, h / 2)
    return start, wrap(pts)


def reversed_pair(Z, ZZ):
    from .rough_path import reversed_increment

    return reversed_increment(np.asarray(Z), np.asarray(ZZ))


def _rk4_backward(pts, w0: ScalarField, w1: ScalarField, wm: ScalarField, h: float):
    """Classical RK4 from tau = h back to 0 for dx/dtau = u(tau, x)."""
    from .spectral import biot_savart_2d

    u0, um, u1 = (biot_savart_2d(w) for w in (w0, wm, w1))
    k1 = eval_velocity_at(u1, pts)
    k2 = eval_velocity_at(um, pts - 0.5 * h * k1)
    k3 = eval_velocity_at(um, pts - 0.5 * h * k2)
    k4 = eval_velocity_at(u0, pts - h * k3)
    return pts - h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def back_trace_vorticity_check(result, t: float | None = None, lattice: int = 32) -> float:
    """sup over a lattice of |w_t(x) - w_0(phi_t^{-1}(x))|."""
    if t is None:
        t = result.state.t
    if t <= 0:
        return 0.0
    start, pre = back_trace(result, t, lattice)
    w_t = result.vorticity_at(t)
    w_0 = result.initial
    return float(np.max(np.abs(w_t.evaluate(start) - w_0.evaluate(pre))))
