"""Symbolic oracle for the frozen reference values used in the tests.

Run with ``python3 tests/oracles/derive_values.py``; it needs sympy, which
the package itself does not use. The printed literals are pasted into
tests/frozen.py.
"""

import sympy as s

x1, x2, t, r = s.symbols("x1 x2 t r", real=True)
PTS = [(0.3, 1.1), (2.0, 4.5), (5.5, 0.7)]


def at_points(expr):
    return [float(expr.subs({x1: a, x2: b})) for a, b in PTS]


def grad(f):
    return [s.diff(f, x1), s.diff(f, x2)]


def lie_adjoint(xi, u):
    # -(xi . grad u^i + u^j d_i xi^j)
    return [-(xi[0] * s.diff(u[i], x1) + xi[1] * s.diff(u[i], x2)
              + u[0] * s.diff(xi[0], [x1, x2][i]) + u[1] * s.diff(xi[1], [x1, x2][i]))
            for i in range(2)]


def mean(f):
    return s.integrate(s.integrate(f, (x1, 0, 2 * s.pi)), (x2, 0, 2 * s.pi)) / (4 * s.pi ** 2)


out = {}

# rough increment, constant xi = (a, 0), w = cos x1
a, z = s.Rational(7, 10), s.Rational(3, 10)
w = s.cos(x1)
first = a * s.diff(w, x1)
incr = -first * z + a * s.diff(first, x1) * z ** 2 / 2
out["ROUGH_INCREMENT_CONST"] = at_points(incr)

# Biot-Savart of Taylor-Green: psi solves Lap psi = w
psi = -s.cos(x1) * s.cos(x2)
assert s.simplify(s.diff(psi, x1, 2) + s.diff(psi, x2, 2) - 2 * s.cos(x1) * s.cos(x2)) == 0
u_tg = [-s.diff(psi, x2), s.diff(psi, x1)]
out["BS_TG_U1"] = at_points(u_tg[0])
out["BS_TG_U2"] = at_points(u_tg[1])

# Taylor-Green convective term is a pure gradient: u.grad u = grad Pi
conv = [s.simplify(u_tg[0] * s.diff(c, x1) + u_tg[1] * s.diff(c, x2)) for c in u_tg]
Pi = (s.cos(2 * x1) + s.cos(2 * x2)) / 4
assert all(s.simplify(c - g) == 0 for c, g in zip(conv, grad(Pi)))
# pressure after time t with zero noise: grad q_t = -t Q(u.grad u)
out["TG_PRESSURE_T05"] = at_points(-s.Rational(1, 2) * Pi)

# adjoint Lie derivative, non-trivial xi and u
xi = [-s.sin(x1) * s.cos(x2), s.cos(x1) * s.sin(x2)]
u = [s.cos(x2), s.sin(x1)]
L = lie_adjoint(xi, u)
out["LIE_ADJOINT_1"] = at_points(L[0])
out["LIE_ADJOINT_2"] = at_points(L[1])
# u constant c: -(D xi)^T c
c = (s.Rational(3, 10), -s.Rational(6, 5))
Lc = lie_adjoint(xi, list(c))
out["LIE_ADJOINT_CONST_1"] = at_points(Lc[0])
out["LIE_ADJOINT_CONST_2"] = at_points(Lc[1])

# harmonic channel of the germ: xi = (a cos x2, 0), u = (sin x2, 0)
xi_h = [a * s.cos(x2), 0]
u_h = [s.sin(x2), 0]
G = lie_adjoint(xi_h, u_h)
out["HARMONIC_FIRST_ORDER"] = [float(mean(G[0])), float(mean(G[1]))]

# Davie point map for the cellular field xi above, K = 1, at PTS
Z1 = s.Rational(1, 5)
ZZ1 = Z1 ** 2 / 2
dxi = [xi[0] * s.diff(xi[i], x1) + xi[1] * s.diff(xi[i], x2) for i in range(2)]
out["POINT_MAP_1"] = at_points(x1 + xi[0] * Z1 + dxi[0] * ZZ1)
out["POINT_MAP_2"] = at_points(x2 + xi[1] * Z1 + dxi[1] * ZZ1)

# canonical lift of the circle amp = 1, freq = 1 on [0, 1/2]
h = s.Rational(1, 2)
zc = [s.sin(r), s.cos(r)]
ZZc = [[float(s.integrate((zc[l] - zc[l].subs(r, 0)) * s.diff(zc[k], r), (r, 0, h)))
        for k in range(2)] for l in range(2)]
out["CIRCLE_ZZ_HALF"] = ZZc

# L4 norm of Taylor-Green under the normalised measure
out["TG_L4"] = float(mean((2 * s.cos(x1) * s.cos(x2)) ** 4) ** s.Rational(1, 4))

# circulation of (0, sin x1) around the rectangle [0, pi/2] x [0, pi]
circ = s.integrate(s.sin(s.pi / 2), (x2, 0, s.pi)) - s.integrate(s.sin(0), (x2, 0, s.pi))
out["RECT_CIRCULATION"] = float(circ)

for k, v in out.items():
    print(f"{k} = {v!r}")
