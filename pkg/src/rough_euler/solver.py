"""2D rough Euler equations in scalar-vorticity form.

One step over a grid interval [s, t] of the driver is a Strang composition:
half an interval of the deterministic drift (classical RK4), the rough
increment built from (Z_st, ZZ_st) with coefficients frozen at the left
point, then the second drift half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import spectral as sp
from .lagrangian import TracerLoop, XiEvaluator, circulation, rough_point_map, wrap
from .rough_path import (
    GeometricRoughPathGrid,
    PiecewiseLinearPath,
    RoughPathError,
    brownian_dyadic_path,
    canonical_lift,
    lift_smooth,
    read_path_csv,
    smooth_path,
    step_proxy,
)
from .spectral import ScalarField, SpectralGrid, VectorField


class SolverError(RuntimeError):
    pass


class StepRejected(SolverError):
    """The requested interval violates the step-acceptance thresholds."""


class BlowUp(SolverError):
    def __init__(self, t: float, sup: float, ceiling: float):
        super().__init__(f"|w|_inf = {sup:.6g} exceeded ceiling {ceiling:.6g} at t = {t:.6g}")
        self.t, self.sup, self.ceiling = t, sup, ceiling


DIAGNOSTIC_COLUMNS = ("t", "l2_vort", "l4_vort", "linf_vort", "energy",
                      "bkm_integral", "h_1", "h_2")


@dataclass
class SolverConfig:
    grid_n: int = 64
    T: float = 1.0
    dt_max: float | None = None
    cfl: float = 0.5
    l_step: float = 0.1
    p: float = 2.5
    xi: list = field(default_factory=list)
    driver: dict = field(default_factory=lambda: {"type": "none"})
    init: dict = field(default_factory=lambda: {"type": "taylor_green", "amp": 1.0})
    diagnostics_every: int = 1
    snapshot_every: int = 0
    blowup_factor: float = 1e3
    loops: list = field(default_factory=list)
    enable_drift: bool = True
    second_order: bool = True
    track_pressure: bool = True
    keep_history: bool = False

    def __post_init__(self):
        if self.dt_max is None:
            self.dt_max = 1e-2 * self.T if self.T > 0 else 1.0

    def validate(self) -> "SolverConfig":
        if self.grid_n % 2:
            raise ValueError("grid_n must be even")
        if self.grid_n < 8:
            raise ValueError("grid_n must be >= 8")
        if not self.T >= 0:
            raise ValueError("T must be >= 0")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be > 0")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.l_step > 0:
            raise ValueError("l_step must be > 0")
        if not 2 <= self.p < 3:
            raise ValueError("p in [2,3)")
        if self.diagnostics_every < 1:
            raise ValueError("diagnostics_every must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if not self.blowup_factor > 1:
            raise ValueError("blowup_factor must be > 1")
        return self


# --- setup -------------------------------------------------------------------

def build_xi(grid: SpectralGrid, spec: list) -> list[VectorField]:
    """Noise fields from lists of Fourier modes.

    Each entry of ``spec`` is a list of modes ``{"k": [k1, k2], "cos": [a1, a2],
    "sin": [b1, b2]}`` giving a cos(k.x) + b sin(k.x). The divergence-free part
    (Leray projection plus the constant mode) is kept.
    """
    x1, x2 = grid.coords
    out = []
    for k, modes in enumerate(spec):
        a = np.zeros(grid.shape)
        b = np.zeros(grid.shape)
        for m in modes:
            n1, n2 = (int(v) for v in m["k"])
            if max(abs(n1), abs(n2)) > grid.cutoff:
                raise ValueError(f"xi[{k}]: mode {(n1, n2)} above the dealiasing cutoff {grid.cutoff}")
            ph = n1 * x1 + n2 * x2
            c = m.get("cos", [0.0, 0.0])
            s = m.get("sin", [0.0, 0.0])
            a += c[0] * np.cos(ph) + s[0] * np.sin(ph)
            b += c[1] * np.cos(ph) + s[1] * np.sin(ph)
        v = VectorField(ScalarField(grid, a), ScalarField(grid, b))
        mean = v.mean()
        p = sp.leray_project(v)
        g = grid
        c1 = np.array(p.u1.hat)
        c2 = np.array(p.u2.hat)
        c1[0, 0], c2[0, 0] = mean
        out.append(VectorField(ScalarField(g, hat=c1), ScalarField(g, hat=c2)))
    return out


def taylor_green(grid: SpectralGrid, amp: float = 1.0) -> ScalarField:
    """Steady vorticity 2 amp cos x1 cos x2."""
    return ScalarField.from_function(grid, lambda a, b: 2.0 * amp * np.cos(a) * np.cos(b))


def build_initial(grid: SpectralGrid, spec: dict) -> ScalarField:
    kind = spec.get("type")
    if kind == "taylor_green":
        w = taylor_green(grid, float(spec.get("amp", 1.0)))
    elif kind == "random":
        w = sp.random_field(grid, int(spec["seed"]), int(spec.get("kmax", 4)),
                            float(spec.get("amp", 1.0)), float(spec.get("slope", 0.0)))
    elif kind == "snapshot":
        from .fileio import load_snapshot

        w = load_snapshot(spec["path"])
        if not isinstance(w, ScalarField):
            raise ValueError("initial snapshot must hold a scalar field")
        if w.N != grid.N:
            raise ValueError(f"snapshot grid N={w.N} differs from grid_n={grid.N}")
    elif kind == "zero":
        w = ScalarField.zeros(grid)
    else:
        raise ValueError(f"unknown init type {kind!r}")
    return _clean(w)


def _clean(w: ScalarField) -> ScalarField:
    h = np.array(w.hat) * w.grid.dealias_mask
    h[0, 0] = 0.0
    return ScalarField(w.grid, hat=h)


def _refine_factor(spacing: float, dt_max: float) -> int:
    return max(1, int(math.ceil(spacing / dt_max * (1.0 - 1e-12))))


def build_driver(cfg: SolverConfig, K: int) -> tuple[GeometricRoughPathGrid, PiecewiseLinearPath | None]:
    """Rough path on [0, T] whose grid spacing does not exceed dt_max."""
    spec = dict(cfg.driver)
    kind = spec.get("type", "none")
    T = cfg.T
    n_uniform = max(1, int(math.ceil(T / cfg.dt_max * (1.0 - 1e-12))))
    uniform = T * np.arange(n_uniform + 1) / n_uniform
    if K == 0 or kind == "none":
        if K > 0:
            raise ValueError("xi given but driver type is 'none'")
        return GeometricRoughPathGrid(uniform, np.zeros((n_uniform, 1)),
                                      np.zeros((n_uniform, 1, 1))), None
    if kind == "brownian":
        path = brownian_dyadic_path(int(spec["seed"]), int(spec["level"]), T, K)
    elif kind == "csv":
        path = read_path_csv(spec["path"])
        if path.dim != K:
            raise ValueError(f"driver CSV has dimension {path.dim}, xi has K={K}")
        if abs(path.times[0]) > 1e-12 or abs(path.times[-1] - T) > 1e-12 * max(1.0, T):
            raise ValueError("driver CSV must span exactly [0, T]")
    elif kind == "smooth":
        z, dz, dim = smooth_path(spec.get("name", "circle"), float(spec.get("amp", 1.0)),
                                 float(spec.get("freq", 1.0)), K)
        if dim != K:
            raise ValueError(f"smooth driver has dimension {dim}, xi has K={K}")
        return lift_smooth(z, dz, uniform), None
    else:
        raise ValueError(f"unknown driver type {kind!r}")
    spacing = float(np.max(np.diff(path.times)))
    path = path.refine(_refine_factor(spacing, cfg.dt_max))
    return canonical_lift(path), path


# --- operators -------------------------------------------------------------

def drift_rhs(w: ScalarField) -> ScalarField:
    """-u . grad w with u the Biot-Savart velocity of w."""
    return -sp.advect_scalar(sp.biot_savart_2d(w), w)


def rough_increment(w: ScalarField, xi, Z, ZZ, *, second_order: bool = True) -> ScalarField:
    """-(xi_k . grad w) Z^k + xi_k . grad(xi_l . grad w) ZZ^{lk}, dealiased."""
    Z = np.atleast_1d(np.asarray(Z, dtype=float))
    ZZ = np.atleast_2d(np.asarray(ZZ, dtype=float))
    K = len(xi)
    if Z.shape != (K,) or ZZ.shape != (K, K):
        raise ValueError(f"increment shapes {Z.shape}, {ZZ.shape} do not match K={K}")
    g = w.grid
    first = [sp.advect_scalar(v, w) for v in xi]
    hat = np.zeros(g.spectral_shape, dtype=complex)
    for k in range(K):
        hat -= Z[k] * first[k].hat
    if second_order:
        for k in range(K):
            inner = np.zeros(g.spectral_shape, dtype=complex)
            for l in range(K):
                if ZZ[l, k] != 0.0:
                    inner += ZZ[l, k] * first[l].hat
            if np.any(inner):
                hat += sp.advect_scalar(xi[k], ScalarField(g, hat=inner)).hat
    return ScalarField(g, hat=hat)


def _xpy(a: ScalarField, c: float, b: ScalarField) -> ScalarField:
    return ScalarField(a.grid, hat=a.hat + c * b.hat)


def rk4_drift(w: ScalarField, h: float, points: np.ndarray | None = None):
    """Classical RK4 for dw/dt = drift_rhs(w), optionally carrying particles.

    Particles follow dx/dt = u(w(t), x) with the same stage fields, so the
    field and its tracers see one consistent discrete flow.
    """
    def stage(v):
        u = sp.biot_savart_2d(v)
        k = -sp.advect_scalar(u, v)
        return k, (None if points is None else u.evaluate(ps))

    ps = points
    k1, p1 = stage(w)
    if points is not None:
        ps = points + 0.5 * h * p1
    k2, p2 = stage(_xpy(w, 0.5 * h, k1))
    if points is not None:
        ps = points + 0.5 * h * p2
    k3, p3 = stage(_xpy(w, 0.5 * h, k2))
    if points is not None:
        ps = points + h * p3
    k4, p4 = stage(_xpy(w, h, k3))
    hat = w.hat + (h / 6.0) * (k1.hat + 2.0 * k2.hat + 2.0 * k3.hat + k4.hat)
    out = ScalarField(w.grid, hat=hat)
    if points is None:
        return out, None
    return out, points + (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4)


def velocity_germ(u: VectorField, xi, Z, ZZ, *, second_order: bool = True) -> VectorField:
    """L*_k u Z^k + L*_k P L*_l u ZZ^{lk} (adjoint Lie derivatives, dealiased)."""
    K = len(xi)
    Z = np.atleast_1d(np.asarray(Z, dtype=float))
    ZZ = np.atleast_2d(np.asarray(ZZ, dtype=float))
    g = u.grid
    zero = np.zeros(g.spectral_shape, dtype=complex)
    a1, a2 = zero.copy(), zero.copy()
    firsts = [sp.lie_adjoint(v, u, check=False) for v in xi]
    for k in range(K):
        a1 += Z[k] * firsts[k].u1.hat
        a2 += Z[k] * firsts[k].u2.hat
    if second_order:
        for k in range(K):
            b1, b2 = zero.copy(), zero.copy()
            for l in range(K):
                if ZZ[l, k] != 0.0:
                    b1 += ZZ[l, k] * firsts[l].u1.hat
                    b2 += ZZ[l, k] * firsts[l].u2.hat
            if np.any(b1) or np.any(b2):
                inner = sp.leray_project(VectorField(ScalarField(g, hat=b1), ScalarField(g, hat=b2)))
                s = sp.lie_adjoint(xi[k], inner, check=False)
                a1 += s.u1.hat
                a2 += s.u2.hat
    return VectorField(ScalarField(g, hat=a1), ScalarField(g, hat=a2))


# --- state and stepping ----------------------------------------------------

@dataclass
class SimState:
    t: float
    w: ScalarField
    grad_q: VectorField
    h: np.ndarray
    bkm: float = 0.0
    particles: np.ndarray | None = None
    steps: int = 0
    _u: VectorField | None = field(default=None, repr=False)

    @classmethod
    def initial(cls, w: ScalarField, particles=None, t: float = 0.0) -> "SimState":
        return cls(t, w, VectorField.zeros(w.grid), np.zeros(2), 0.0,
                   None if particles is None else np.array(particles, dtype=float))

    @property
    def u(self) -> VectorField:
        if self._u is None:
            self._u = sp.biot_savart_2d(self.w)
        return self._u

    @property
    def q(self) -> ScalarField:
        return sp.potential_of_gradient(self.grad_q)


@dataclass
class StepContext:
    """Per-run constants needed by ``step``."""

    xi: list
    config: SolverConfig
    ceiling: float = math.inf

    def __post_init__(self):
        for v in self.xi:
            sp.check_solenoidal(v)
        self.evaluator = XiEvaluator(self.xi)


def step(state: SimState, s: float, t: float, R: GeometricRoughPathGrid,
         ctx: StepContext) -> SimState:
    """Advance ``state`` from s to t (grid times of R); raises StepRejected/BlowUp."""
    cfg = ctx.config
    if abs(state.t - s) > 1e-12 * max(1.0, abs(s)):
        raise SolverError(f"state is at t={state.t}, step starts at {s}")
    i, j = R.index_of(s), R.index_of(t)
    if j <= i:
        raise SolverError("empty or reversed step")
    h = t - s
    K = len(ctx.xi)
    Z, ZZ = R.increment(i, j)
    if K:
        proxy = step_proxy(Z, ZZ, cfg.p)
        if proxy > cfg.l_step:
            raise StepRejected(f"control proxy {proxy:.3g} > {cfg.l_step}")
    u_s = state.u
    umax = u_s.sup()
    if cfg.enable_drift and umax * h > cfg.cfl * state.w.grid.dx:
        raise StepRejected(f"CFL violated: |u|_inf dt = {umax * h:.3g}")
    w, pts = state.w, state.particles
    if cfg.enable_drift:
        w, pts2 = rk4_drift(w, 0.5 * h, pts)
        pts = pts2 if pts is not None else None
    if K:
        w = w + rough_increment(w, ctx.xi, Z, ZZ, second_order=cfg.second_order)
        if pts is not None:
            pts = rough_point_map(pts, ctx.evaluator, Z, ZZ, second_order=cfg.second_order)
    if cfg.enable_drift:
        w, pts2 = rk4_drift(w, 0.5 * h, pts)
        pts = pts2 if pts is not None else None
    hat = np.array(w.hat)
    hat[0, 0] = 0.0
    w = ScalarField(w.grid, hat=hat)
    sup_now = float(np.abs(w.values).max())
    if sup_now > ctx.ceiling:
        raise BlowUp(t, sup_now, ctx.ceiling)
    grad_q, hvec = state.grad_q, state.h
    if cfg.track_pressure:
        dq, dh = pressure_increment(u_s, h, ctx.xi, Z, ZZ, cfg)
        grad_q = grad_q + dq
        hvec = hvec + dh
    bkm = state.bkm + float(np.abs(state.w.values).max()) * h
    return SimState(t, w, grad_q, hvec, bkm, None if pts is None else wrap(pts), state.steps + 1)


def pressure_increment(u_s: VectorField, h: float, xi, Z, ZZ, cfg=None):
    """Left-point increments of (grad q, h) over one step.

    From u_t - u_s + int u.grad u - int L*_xi u dZ = -(grad q_t - grad q_s) - (h_t - h_s):
    d(grad q) = -Q(u.grad u) h + Q(germ), d(h) = H(germ).
    """
    second = True if cfg is None else cfg.second_order
    conv = sp.gradient_part(sp.convective_term(u_s))
    dq = conv * (-h)
    dh = np.zeros(2)
    if len(xi):
        G = velocity_germ(u_s, xi, Z, ZZ, second_order=second)
        dq = dq + sp.gradient_part(G)
        dh = sp.harmonic_part(G)
    return dq, dh


@dataclass
class StepStages:
    after_first: ScalarField
    mid_first: ScalarField
    after_rough: ScalarField
    mid_second: ScalarField
    end: ScalarField


def recompute_step(w_s: ScalarField, Z, ZZ, h: float, xi, cfg: SolverConfig) -> StepStages:
    """Intermediate fields of one Strang step (used for back-tracing)."""
    if cfg.enable_drift:
        a, _ = rk4_drift(w_s, 0.5 * h)
        am, _ = rk4_drift(w_s, 0.25 * h)
    else:
        a = am = w_s
    b = a + rough_increment(a, xi, Z, ZZ, second_order=cfg.second_order) if len(xi) else a
    if cfg.enable_drift:
        e, _ = rk4_drift(b, 0.5 * h)
        bm, _ = rk4_drift(b, 0.25 * h)
    else:
        e = bm = b
    return StepStages(a, am, b, bm, e)


def velocity_form_step(u: VectorField, s: float, t: float, R: GeometricRoughPathGrid, xi,
                       *, enable_drift: bool = True, second_order: bool = True) -> VectorField:
    """One Strang step of the projected velocity equation (cross-check path)."""
    i, j = R.index_of(s), R.index_of(t)
    Z, ZZ = R.increment(i, j)
    h = t - s

    def rhs(v):
        return sp.leray_project(sp.convective_term(v)) * -1.0

    def rk4(v, dt):
        k1 = rhs(v)
        k2 = rhs(v + k1 * (0.5 * dt))
        k3 = rhs(v + k2 * (0.5 * dt))
        k4 = rhs(v + k3 * dt)
        return v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)

    v = u
    if enable_drift:
        v = rk4(v, 0.5 * h)
    if len(xi):
        v = v + sp.leray_project(velocity_germ(v, xi, Z, ZZ, second_order=second_order))
    if enable_drift:
        v = rk4(v, 0.5 * h)
    return sp.leray_project(v)


# --- diagnostics and runs --------------------------------------------------

@dataclass
class DiagnosticsSeries:
    columns: list
    rows: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append([float(row[c]) for c in self.columns])

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class StepRecord:
    s: float
    t: float
    w: ScalarField
    Z: np.ndarray
    ZZ: np.ndarray


@dataclass
class RunResult:
    config: SolverConfig
    grid: SpectralGrid
    xi: list
    path: GeometricRoughPathGrid
    initial: ScalarField
    state: SimState
    snapshots: list
    diagnostics: DiagnosticsSeries
    history: list | None = None
    loops: list = field(default_factory=list)
    blowup: dict | None = None

    def __iter__(self):
        return iter((self.snapshots, self.diagnostics))

    def vorticity_at(self, t: float) -> ScalarField:
        if abs(t - self.state.t) <= 1e-12 * max(1.0, t):
            return self.state.w
        for tt, w in self.snapshots:
            if abs(tt - t) <= 1e-12 * max(1.0, t):
                return w
        if self.history:
            for rec in self.history:
                if abs(rec.s - t) <= 1e-12 * max(1.0, t):
                    return rec.w
        raise KeyError(f"no stored vorticity at t={t}")


def diagnostics_row(state: SimState, loops=None) -> dict:
    w = state.w
    row = {
        "t": state.t,
        "l2_vort": w.l2(),
        "l4_vort": w.lp(4),
        "linf_vort": w.lp(math.inf),
        "energy": 0.5 * state.u.inner(state.u),
        "bkm_integral": state.bkm,
        "h_1": state.h[0],
        "h_2": state.h[1],
    }
    if loops:
        offset = 0
        for lp in loops:
            n = lp.positions.shape[0]
            pts = state.particles[offset:offset + n]
            row[f"circ_{lp.name}"] = circulation(pts, state.u)
            offset += n
    return row


def build_loops(spec: list) -> list[TracerLoop]:
    loops = []
    for i, item in enumerate(spec):
        name = str(item.get("name", f"loop{i}"))
        if "csv" in item:
            from .lagrangian import read_loop_csv

            lp = read_loop_csv(item["csv"])
            lp.name = name
        else:
            lp = TracerLoop.circle(item["center"], float(item["radius"]),
                                   int(item.get("points", 256)), name=name)
        loops.append(lp)
    return loops


def run(config: SolverConfig, *, initial: ScalarField | None = None,
        path: GeometricRoughPathGrid | None = None,
        callback: Callable[[SimState], None] | None = None) -> RunResult:
    """Integrate over [0, T] with adaptive (bisected) steps on the driver grid.

    ``initial`` and ``path`` override the configured initial data and driver.
    """
    cfg = config.validate()
    grid = sp.spectral_grid(cfg.grid_n)
    xi = build_xi(grid, cfg.xi)
    K = len(xi)
    w0 = _clean(initial) if initial is not None else build_initial(grid, cfg.init)
    if cfg.T == 0:
        R = path  # nothing to integrate; a driver on [0, 0] does not exist
    elif path is None:
        R, _ = build_driver(cfg, K)
    else:
        R = path
        if K and R is not None and R.dim != K:
            raise ValueError(f"driver dimension {R.dim} differs from K={K}")
    loops = build_loops(cfg.loops)
    particles = np.vstack([lp.positions for lp in loops]) if loops else None
    state = SimState.initial(w0, particles)
    sup0 = w0.lp(math.inf)
    ctx = StepContext(xi, cfg, cfg.blowup_factor * sup0 if sup0 > 0 else math.inf)
    columns = list(DIAGNOSTIC_COLUMNS) + [f"circ_{lp.name}" for lp in loops]
    diags = DiagnosticsSeries(columns)
    diags.append(diagnostics_row(state, loops))
    snapshots = [(0.0, w0)]
    history = [] if cfg.keep_history else None
    result = RunResult(cfg, grid, xi, R, w0, state, snapshots, diags, history, loops)
    if cfg.T == 0:
        return result
    times = R.times
    t_end = R.index_of(cfg.T)
    i = R.index_of(0.0)
    n_steps = 0
    while i < t_end:
        j = i + 1
        while j < t_end and times[j + 1] - times[i] <= cfg.dt_max * (1 + 1e-12):
            j += 1
        while True:
            try:
                new = step(state, times[i], times[j], R, ctx)
                break
            except StepRejected:
                if j - i == 1:
                    raise
                j = i + (j - i) // 2
            except BlowUp as exc:
                result.blowup = {"t": exc.t, "sup": exc.sup, "ceiling": exc.ceiling,
                                 "bkm_integral": state.bkm}
                result.state = state
                return result
        if history is not None:
            Z, ZZ = R.increment(i, j)
            history.append(StepRecord(times[i], times[j], state.w, Z, ZZ))
        state = new
        n_steps += 1
        i = j
        last = i >= t_end
        if last or n_steps % cfg.diagnostics_every == 0:
            diags.append(diagnostics_row(state, loops))
        if (cfg.snapshot_every and n_steps % cfg.snapshot_every == 0) or last:
            snapshots.append((state.t, state.w))
        if callback is not None:
            callback(state)
    result.state = state
    return result


def recover_pressure_harmonic(result: RunResult) -> tuple[list, list]:
    """Pressure q and harmonic constant h along the recorded step partition.

    Returns ``[(t, q_t)]`` and ``[(t, h_t)]`` starting from q_0 = 0, h_0 = 0.
    """
    if result.history is None:
        raise SolverError("run has no step history (set keep_history)")
    cfg = result.config
    grid = result.grid
    grad_q = VectorField.zeros(grid)
    h = np.zeros(2)
    qs = [(0.0, ScalarField.zeros(grid))]
    hs = [(0.0, h.copy())]
    for rec in result.history:
        u = sp.biot_savart_2d(rec.w)
        dq, dh = pressure_increment(u, rec.t - rec.s, result.xi, rec.Z, rec.ZZ, cfg)
        grad_q = grad_q + dq
        h = h + dh
        qs.append((rec.t, sp.potential_of_gradient(grad_q)))
        hs.append((rec.t, h.copy()))
    return qs, hs
