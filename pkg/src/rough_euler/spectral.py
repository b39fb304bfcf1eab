"""Real periodic fields on the torus [0, 2pi)^2 and spectral operators.

Fields are sampled on N x N nodes ``x_ij = (2 pi i / N, 2 pi j / N)`` and
stored with axis 0 along x1. Spectral coefficients use the real-FFT layout
normalised so that the (0, 0) coefficient is the mean, i.e. the normalised
Haar measure dV = dx / (2 pi)^2. Nyquist modes are dropped from every
derivative multiplier.
"""

from __future__ import annotations

import functools
import math

import numpy as np

rfft2 = np.fft.rfft2
irfft2 = np.fft.irfft2


class SpectralError(ValueError):
    pass


class SpectralGrid:
    """Uniform N x N grid on the 2-torus with cached wavenumber tables."""

    def __init__(self, N: int):
        N = int(N)
        if N < 8 or N % 2:
            raise SpectralError(f"grid size must be even and >= 8, got {N}")
        self.N = N
        self.cutoff = N // 3
        n1 = np.fft.fftfreq(N, 1.0 / N)
        n2 = np.fft.rfftfreq(N, 1.0 / N)
        self.n1 = n1[:, None]
        self.n2 = n2[None, :]
        d1 = np.where(np.abs(n1) == N // 2, 0.0, n1)
        d2 = np.where(n2 == N // 2, 0.0, n2)
        self.ik1 = (1j * d1)[:, None]
        self.ik2 = (1j * d2)[None, :]
        k2 = self.n1 ** 2 + self.n2 ** 2
        self.ksq = k2
        with np.errstate(divide="ignore"):
            inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        self.inv_ksq = inv
        self.dealias_mask = (np.abs(self.n1) <= self.cutoff) & (self.n2 <= self.cutoff)
        # weight of each rfft column in a full-spectrum sum
        w = np.full(n2.size, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.column_weight = w
        for a in (self.n1, self.n2, self.ik1, self.ik2, self.ksq, self.inv_ksq,
                  self.dealias_mask, self.column_weight):
            a.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.N, self.N // 2 + 1)

    @property
    def dx(self) -> float:
        return 2.0 * math.pi / self.N

    @functools.cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.dx * np.arange(self.N)
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        x1.setflags(write=False)
        x2.setflags(write=False)
        return x1, x2

    def __eq__(self, other):
        return isinstance(other, SpectralGrid) and other.N == self.N

    def __hash__(self):
        return hash(("SpectralGrid", self.N))

    def __repr__(self):
        return f"SpectralGrid(N={self.N})"


@functools.lru_cache(maxsize=None)
def spectral_grid(N: int) -> SpectralGrid:
    return SpectralGrid(N)


def _fwd(values: np.ndarray) -> np.ndarray:
    return rfft2(values) / values.size


def _inv(hat: np.ndarray, N: int) -> np.ndarray:
    return irfft2(hat * (N * N), s=(N, N))


class ScalarField:
    """Real periodic scalar field; physical values and coefficients are cached lazily."""

    __slots__ = ("grid", "_values", "_hat")

    def __init__(self, grid: SpectralGrid, values=None, *, hat=None):
        if values is None and hat is None:
            raise SpectralError("need values or coefficients")
        self.grid = grid if isinstance(grid, SpectralGrid) else spectral_grid(grid)
        self._values = None
        self._hat = None
        if values is not None:
            v = np.array(values, dtype=float)
            if v.shape != self.grid.shape:
                raise SpectralError(f"values must have shape {self.grid.shape}, got {v.shape}")
            v.setflags(write=False)
            self._values = v
        if hat is not None:
            h = np.array(hat, dtype=complex)
            if h.shape != self.grid.spectral_shape:
                raise SpectralError("coefficient array has the wrong shape")
            h.setflags(write=False)
            self._hat = h

    @classmethod
    def from_function(cls, grid, f) -> "ScalarField":
        grid = grid if isinstance(grid, SpectralGrid) else spectral_grid(grid)
        x1, x2 = grid.coords
        return cls(grid, np.broadcast_to(f(x1, x2), grid.shape))

    @classmethod
    def zeros(cls, grid) -> "ScalarField":
        grid = grid if isinstance(grid, SpectralGrid) else spectral_grid(grid)
        return cls(grid, np.zeros(grid.shape))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = _inv(self._hat, self.grid.N)
            v.setflags(write=False)
            self._values = v
        return self._values

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            h = _fwd(self._values)
            h.setflags(write=False)
            self._hat = h
        return self._hat

    @property
    def N(self) -> int:
        return self.grid.N

    def mean(self) -> float:
        return float(self.hat[0, 0].real)

    def inner(self, other: "ScalarField") -> float:
        """L^2 inner product under dV = dx / (2 pi)^2 (discrete Parseval)."""
        _same_grid(self, other)
        w = self.grid.column_weight[None, :]
        return float(np.sum(w * (self.hat * np.conj(other.hat)).real))

    def l2(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def lp(self, p: float) -> float:
        """L^p norm under dV; p = inf gives the sup of the trigonometric interpolant."""
        if p == math.inf:
            return sup_norm(self)
        if p == 2:
            return self.l2()
        # |f|^p of a band-limited f is integrated on a padded grid; exact for
        # even integer p once the padded size exceeds p times the top mode
        top = _top_mode(self)
        M = self.N
        need = int(math.ceil(p * top)) + 1
        while M < need:
            M *= 2
        v = upsample(self, M)
        return float(np.mean(np.abs(v) ** p) ** (1.0 / p))

    def evaluate(self, points) -> np.ndarray:
        """Trigonometric interpolant at arbitrary points of shape (P, 2)."""
        return evaluate_many([self], points)[0]

    def _binary(self, other, op):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            if self._hat is not None and other._hat is not None:
                return ScalarField(self.grid, hat=op(self._hat, other._hat))
            return ScalarField(self.grid, op(self.values, other.values))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        if self._hat is not None:
            return ScalarField(self.grid, hat=-self._hat)
        return ScalarField(self.grid, -self.values)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            _same_grid(self, c)
            return ScalarField(self.grid, self.values * c.values)
        c = float(c)
        if self._hat is not None:
            return ScalarField(self.grid, hat=c * self._hat)
        return ScalarField(self.grid, c * self.values)

    __rmul__ = __mul__

    def __repr__(self):
        return f"ScalarField(N={self.N}, mean={self.mean():.3g}, l2={self.l2():.3g})"


class VectorField:
    """Pair of scalar fields (u^1, u^2) on a common grid."""

    __slots__ = ("u1", "u2")

    def __init__(self, u1: ScalarField, u2: ScalarField):
        _same_grid(u1, u2)
        self.u1 = u1
        self.u2 = u2

    @classmethod
    def from_function(cls, grid, f) -> "VectorField":
        grid = grid if isinstance(grid, SpectralGrid) else spectral_grid(grid)
        x1, x2 = grid.coords
        a, b = f(x1, x2)
        return cls(ScalarField(grid, np.broadcast_to(a, grid.shape)),
                   ScalarField(grid, np.broadcast_to(b, grid.shape)))

    @classmethod
    def zeros(cls, grid) -> "VectorField":
        return cls(ScalarField.zeros(grid), ScalarField.zeros(grid))

    @property
    def grid(self) -> SpectralGrid:
        return self.u1.grid

    def __iter__(self):
        return iter((self.u1, self.u2))

    def __getitem__(self, i):
        return (self.u1, self.u2)[i]

    def __add__(self, other):
        return VectorField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other):
        return VectorField(self.u1 - other.u1, self.u2 - other.u2)

    def __neg__(self):
        return VectorField(-self.u1, -self.u2)

    def __mul__(self, c):
        return VectorField(self.u1 * c, self.u2 * c)

    __rmul__ = __mul__

    def mean(self) -> np.ndarray:
        return np.array([self.u1.mean(), self.u2.mean()])

    def inner(self, other: "VectorField") -> float:
        return self.u1.inner(other.u1) + self.u2.inner(other.u2)

    def l2(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def sup(self) -> float:
        """Max of |u| over the grid nodes."""
        return float(np.sqrt(self.u1.values ** 2 + self.u2.values ** 2).max())

    def evaluate(self, points) -> np.ndarray:
        a, b = evaluate_many([self.u1, self.u2], points)
        return np.stack([a, b], axis=-1)

    def __repr__(self):
        return f"VectorField(N={self.grid.N}, l2={self.l2():.3g})"


def _same_grid(a, b) -> None:
    if a.grid.N != b.grid.N:
        raise SpectralError(f"grid mismatch: N={a.grid.N} vs N={b.grid.N}")


def _top_mode(f: ScalarField, rtol: float = 1e-14) -> int:
    """Largest max(|n1|, |n2|) carrying a non-negligible coefficient."""
    a = np.abs(f.hat)
    big = a > rtol * max(a.max(), 1e-300)
    if not big.any():
        return 0
    g = f.grid
    m = np.maximum(np.abs(g.n1), g.n2) * np.ones_like(a)
    return int(m[big].max())


def upsample(f: ScalarField, M: int) -> np.ndarray:
    """Physical values of the interpolant on an M x M grid (M >= N, even)."""
    N = f.N
    if M == N:
        return f.values
    if M < N or M % 2:
        raise SpectralError("upsampling size must be even and >= N")
    h = np.zeros((M, M // 2 + 1), dtype=complex)
    half = N // 2
    h[:half, :half] = f.hat[:half, :half]
    h[M - half + 1:, :half] = f.hat[half + 1:, :half]
    # split the Nyquist row so the padded interpolant stays real-valued
    h[half, :half] = 0.5 * f.hat[half, :half]
    h[M - half, :half] = 0.5 * f.hat[half, :half]
    return irfft2(h * (M * M), s=(M, M))


def evaluate_many(fields, points, *, deriv=(0, 0)) -> list[np.ndarray]:
    """Evaluate fields (same grid) at points by direct mode summation.

    Separable form: value_p = Re sum_a E1[p, a] (sum_b C[a, b] E2[p, b]).
    ``deriv`` applies d^i/dx1^i d^j/dx2^j first (Nyquist modes kept, so grid
    samples are reproduced exactly when deriv is (0, 0)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 2:
        raise SpectralError("points must have shape (P, 2)")
    g = fields[0].grid
    N = g.N
    B = max(_top_mode(f) for f in fields)
    mult = (1j * g.n1) ** deriv[0] * (1j * g.n2) ** deriv[1] * g.column_weight[None, :]
    if B >= N // 2:
        E1 = np.exp(1j * pts[:, :1] * g.n1[:, 0][None, :])
        E2 = np.exp(1j * pts[:, 1:] * g.n2[0][None, :])
        rows, cols = slice(None), slice(None)
    else:
        # only the occupied band; exponentials built from integer powers
        P1 = _powers(pts[:, 0], B)
        E1 = np.concatenate([P1, np.conj(P1[:, :0:-1])], axis=1)
        E2 = _powers(pts[:, 1], B)
        rows = np.r_[0:B + 1, N - B:N]
        cols = slice(0, B + 1)
    out = []
    for f in fields:
        C = (f.hat * mult)[rows, cols]
        out.append(np.einsum("pa,pa->p", E1, E2 @ C.T).real)
    return out


def _powers(x: np.ndarray, B: int) -> np.ndarray:
    """exp(i n x) for n = 0..B, shape (P, B + 1)."""
    out = np.empty((x.size, B + 1), dtype=complex)
    out[:, 0] = 1.0
    if B:
        z = np.exp(1j * x)
        out[:, 1] = z
        for n in range(2, B + 1):
            # alternate products keep the rounding error growth linear in n
            out[:, n] = out[:, n // 2] * out[:, n - n // 2]
    return out


def sup_norm(f: ScalarField, factor: int = 4, newton_iters: int = 8, candidates: int = 8) -> float:
    """max |f| of the trigonometric interpolant.

    The largest local maxima of |f| on a ``factor``-times finer grid are
    polished by Newton iterations on the exact interpolant; a single
    candidate can sit in the basin of a lower peak.
    """
    v = np.abs(upsample(f, factor * f.N))
    h = 2.0 * math.pi / v.shape[0]
    peak = np.ones(v.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                peak &= v >= np.roll(v, (di, dj), axis=(0, 1))
    idx = np.flatnonzero(peak)
    idx = idx[np.argsort(v.ravel()[idx])[::-1][:candidates]]
    best = float(max(v.max(), np.abs(f.values).max()))
    for k in idx:
        i, j = divmod(int(k), v.shape[1])
        best = max(best, _polish(f, np.array([i * h, j * h]), h, newton_iters))
    return best


def _polish(f: ScalarField, x: np.ndarray, h: float, iters: int) -> float:
    x0 = x.copy()
    for _ in range(iters):
        p = x[None, :]
        gx, gy = (evaluate_many([f], p, deriv=d)[0][0] for d in ((1, 0), (0, 1)))
        hxx, hxy, hyy = (evaluate_many([f], p, deriv=d)[0][0] for d in ((2, 0), (1, 1), (0, 2)))
        try:
            dx = np.linalg.solve(np.array([[hxx, hxy], [hxy, hyy]]), -np.array([gx, gy]))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)) or np.linalg.norm(x + dx - x0) > 2 * h:
            break
        x = x + dx
        if np.linalg.norm(dx) < 1e-14:
            break
    return float(abs(evaluate_many([f], x[None, :])[0][0]))


# --- operators -------------------------------------------------------------

def dealias(f: ScalarField) -> ScalarField:
    """2/3 rule: zero all modes with max(|n1|, |n2|) > floor(N/3)."""
    return ScalarField(f.grid, hat=f.hat * f.grid.dealias_mask)


def dealias_vector(u: VectorField) -> VectorField:
    return VectorField(dealias(u.u1), dealias(u.u2))


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    return VectorField(ScalarField(g, hat=g.ik1 * f.hat), ScalarField(g, hat=g.ik2 * f.hat))


def perp_gradient(f: ScalarField) -> VectorField:
    """(-d2 f, d1 f)."""
    g = f.grid
    return VectorField(ScalarField(g, hat=-g.ik2 * f.hat), ScalarField(g, hat=g.ik1 * f.hat))


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    return ScalarField(g, hat=g.ik1 * u.u1.hat + g.ik2 * u.u2.hat)


def curl2d(u: VectorField) -> ScalarField:
    """d1 u^2 - d2 u^1."""
    g = u.grid
    return ScalarField(g, hat=g.ik1 * u.u2.hat - g.ik2 * u.u1.hat)


def inverse_laplacian(f: ScalarField) -> ScalarField:
    """Mean-free g with -Laplacian(g) = f - mean(f)."""
    return ScalarField(f.grid, hat=f.hat * f.grid.inv_ksq)


def leray_project(u: VectorField) -> VectorField:
    """Projection onto divergence-free, mean-free fields."""
    g = u.grid
    a, b = u.u1.hat, u.u2.hat
    ndot = (g.n1 * a + g.n2 * b) * g.inv_ksq
    pa = a - g.n1 * ndot
    pb = b - g.n2 * ndot
    pa[0, 0] = 0.0
    pb[0, 0] = 0.0
    return VectorField(ScalarField(g, hat=pa), ScalarField(g, hat=pb))


def gradient_part(u: VectorField) -> VectorField:
    """Q u: the gradient component of the Helmholtz decomposition."""
    g = u.grid
    a, b = u.u1.hat, u.u2.hat
    ndot = (g.n1 * a + g.n2 * b) * g.inv_ksq
    return VectorField(ScalarField(g, hat=g.n1 * ndot), ScalarField(g, hat=g.n2 * ndot))


def harmonic_part(u: VectorField) -> np.ndarray:
    """H u: the constant component, i.e. the spatial mean."""
    return u.mean()


def potential_of_gradient(v: VectorField) -> ScalarField:
    """Mean-free q with grad q = Q v."""
    g = v.grid
    q = -(g.ik1 * v.u1.hat + g.ik2 * v.u2.hat) * g.inv_ksq
    return ScalarField(g, hat=q)


def biot_savart_2d(w: ScalarField) -> VectorField:
    """Mean-free divergence-free u with curl u = w - mean(w)."""
    psi = ScalarField(w.grid, hat=-w.hat * w.grid.inv_ksq)
    return perp_gradient(psi)


def advect_scalar(v: VectorField, f: ScalarField) -> ScalarField:
    """Dealiased v . grad f."""
    gf = gradient(f)
    prod = v.u1.values * gf.u1.values + v.u2.values * gf.u2.values
    return dealias(ScalarField(f.grid, prod))


def jacobian(v: VectorField) -> tuple[tuple[ScalarField, ScalarField], tuple[ScalarField, ScalarField]]:
    """((d1 v^1, d2 v^1), (d1 v^2, d2 v^2))."""
    a, b = gradient(v.u1), gradient(v.u2)
    return (a.u1, a.u2), (b.u1, b.u2)


def check_solenoidal(xi: VectorField, tol: float = 1e-10) -> None:
    d = np.abs(divergence(xi).values).max()
    if d > tol:
        raise SpectralError(f"vector field is not divergence-free (max |div| = {d:.3e})")


def lie_derivative(v: VectorField, w: VectorField) -> VectorField:
    """Dealiased Lie derivative of the vector field w along v: v.grad w - w.grad v."""
    (v11, v12), (v21, v22) = jacobian(v)
    (w11, w12), (w21, w22) = jacobian(w)
    V1, V2, W1, W2 = v.u1.values, v.u2.values, w.u1.values, w.u2.values
    c1 = V1 * w11.values + V2 * w12.values - (W1 * v11.values + W2 * v12.values)
    c2 = V1 * w21.values + V2 * w22.values - (W1 * v21.values + W2 * v22.values)
    g = v.grid
    return VectorField(dealias(ScalarField(g, c1)), dealias(ScalarField(g, c2)))


def lie_adjoint(xi: VectorField, u: VectorField, *, check: bool = True) -> VectorField:
    """Adjoint Lie derivative for divergence-free xi: -(xi.grad u^i + u^j d_i xi^j)."""
    if check:
        check_solenoidal(xi)
    (x11, x12), (x21, x22) = jacobian(xi)
    (u11, u12), (u21, u22) = jacobian(u)
    X1, X2, U1, U2 = xi.u1.values, xi.u2.values, u.u1.values, u.u2.values
    c1 = -(X1 * u11.values + X2 * u12.values + U1 * x11.values + U2 * x21.values)
    c2 = -(X1 * u21.values + X2 * u22.values + U1 * x12.values + U2 * x22.values)
    g = u.grid
    return VectorField(dealias(ScalarField(g, c1)), dealias(ScalarField(g, c2)))


def convective_term(u: VectorField) -> VectorField:
    """Dealiased u . grad u (componentwise)."""
    return VectorField(advect_scalar(u, u.u1), advect_scalar(u, u.u2))


def random_field(grid, seed: int, kmax: int, amp: float = 1.0, slope: float = 0.0,
                 stream: int = 0) -> ScalarField:
    """Random real mean-free field with modes max(|n1|,|n2|) <= kmax.

    Coefficients are complex Gaussians scaled by |n|^-slope, then the field is
    normalised to L^2 norm ``amp``.
    """
    from .rough_path import philox_normals

    grid = grid if isinstance(grid, SpectralGrid) else spectral_grid(grid)
    kmax = min(int(kmax), grid.cutoff)
    z = philox_normals(seed, stream, (2,) + grid.spectral_shape)
    hat = z[0] + 1j * z[1]
    mask = (np.abs(grid.n1) <= kmax) & (grid.n2 <= kmax) & (grid.ksq > 0)
    scale = np.where(grid.ksq > 0, np.sqrt(np.maximum(grid.ksq, 1.0)) ** (-slope), 0.0)
    hat = hat * mask * scale
    # symmetrise through physical space so the coefficients describe a real field
    f = ScalarField(grid, _inv(hat, grid.N))
    f = ScalarField(grid, hat=f.hat * mask)
    n = f.l2()
    return f * (amp / n) if n > 0 else f


def random_vector_field(grid, seed: int, kmax: int, amp: float = 1.0) -> VectorField:
    return VectorField(random_field(grid, seed, kmax, amp, stream=1),
                       random_field(grid, seed, kmax, amp, stream=2))
