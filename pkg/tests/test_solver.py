import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frozen import HARMONIC_FIRST_ORDER, ROUGH_INCREMENT_CONST, TG_PRESSURE_T05
from rough_euler import spectral as sp
from rough_euler.rough_path import GeometricRoughPathGrid
from rough_euler.solver import (BlowUp, SimState, SolverConfig, SolverError, StepContext,
                                StepRejected, build_driver, build_xi, drift_rhs,
                                recover_pressure_harmonic, rough_increment, run, step,
                                taylor_green, velocity_form_step, velocity_germ)
from rough_euler.spectral import ScalarField, VectorField


def const_xi(grid, a1, a2):
    return [VectorField(ScalarField(grid, np.full(grid.shape, a1)),
                        ScalarField(grid, np.full(grid.shape, a2)))]


def one_interval(h, Z, ZZ):
    Z = np.atleast_1d(np.asarray(Z, float))
    ZZ = np.atleast_2d(np.asarray(ZZ, float))
    return GeometricRoughPathGrid(np.array([0.0, h]), Z[None, :], ZZ[None, :, :])


SHEARS = [[{"k": [0, 1], "cos": [0.25, 0.0]}], [{"k": [1, 0], "sin": [0.0, 0.25]}]]


def test_config_validation():
    with pytest.raises(ValueError, match="grid_n must be even"):
        SolverConfig(grid_n=63).validate()
    with pytest.raises(ValueError, match=r"p in \[2,3\)"):
        SolverConfig(p=3.5).validate()
    assert SolverConfig(T=2.0).dt_max == pytest.approx(0.02)


def test_build_xi_keeps_solenoidal_part_and_mean(grid64):
    xi = build_xi(grid64, [[{"k": [0, 0], "cos": [0.4, -0.2]}, {"k": [1, 0], "cos": [1.0, 0.0]}]])
    v = xi[0]
    # the compressible cos x1 e_1 is removed, the constant stays
    assert np.abs(v.u1.values - 0.4).max() < 1e-14
    assert np.abs(v.u2.values + 0.2).max() < 1e-14
    with pytest.raises(ValueError):
        build_xi(grid64, [[{"k": [30, 0], "cos": [0.0, 1.0]}]])


def test_drift_of_steady_and_single_mode(grid64):
    assert drift_rhs(taylor_green(grid64)).lp(math.inf) < 1e-13
    w = ScalarField.from_function(grid64, lambda a, b: np.cos(a))
    assert drift_rhs(w).lp(math.inf) < 1e-14
    assert drift_rhs(ScalarField.zeros(grid64)).l2() == 0.0


def test_rough_increment_constant_xi(grid64, pts):
    w = ScalarField.from_function(grid64, lambda a, b: np.cos(a))
    inc = rough_increment(w, const_xi(grid64, 0.7, 0.0), [0.3], [[0.045]])
    assert np.allclose(inc.evaluate(pts), ROUGH_INCREMENT_CONST, atol=1e-14)


def test_rough_increment_shape_mismatch(grid64):
    w = taylor_green(grid64)
    with pytest.raises(ValueError):
        rough_increment(w, const_xi(grid64, 1.0, 0.0), [0.1, 0.2], np.zeros((2, 2)))


def test_zero_noise_increment_vanishes(grid64):
    xi = build_xi(grid64, SHEARS)
    inc = rough_increment(taylor_green(grid64), xi, [0.0, 0.0], np.zeros((2, 2)))
    assert inc.l2() == 0.0


def test_constant_xi_translation_order(grid64):
    # one germ against the exact translation w(x - a Z): error O(Z^3)
    w = ScalarField.from_function(grid64, lambda a, b: np.sin(a) + np.cos(2 * a + b))
    errs = []
    for Z in (0.1, 0.05, 0.025):
        new = w + rough_increment(w, const_xi(grid64, 0.5, 0.0), [Z], [[Z * Z / 2]])
        exact = ScalarField.from_function(grid64, lambda a, b: np.sin(a - 0.5 * Z) + np.cos(2 * (a - 0.5 * Z) + b))
        errs.append((new - exact).l2())
    assert 6 < errs[0] / errs[1] < 10 and 6 < errs[1] / errs[2] < 10


def _ctx(xi, **kw):
    return StepContext(xi, SolverConfig(**kw).validate())


def test_taylor_green_single_step_invariant(grid64):
    w = taylor_green(grid64)
    R = one_interval(1e-3, [0.0], [[0.0]])
    new = step(SimState.initial(w), 0.0, 1e-3, R, _ctx([], grid_n=64))
    assert (new.w - w).lp(math.inf) < 1e-8
    assert new.t == 1e-3 and new.steps == 1


def test_taylor_green_run_conserves_l2():
    res = run(SolverConfig(grid_n=32, T=1.0, dt_max=0.01, diagnostics_every=10))
    l2 = res.diagnostics.column("l2_vort")
    assert np.abs(l2 - l2[0]).max() <= 1e-6
    assert res.state.t == pytest.approx(1.0)


def test_constant_xi_brownian_l2():
    cfg = SolverConfig(grid_n=32, T=0.5, dt_max=1 / 256, xi=[[{"k": [0, 0], "cos": [0.3, 0.1]}]],
                       driver={"type": "brownian", "seed": 3, "level": 8})
    res = run(cfg)
    l2 = res.diagnostics.column("l2_vort")
    assert np.abs(l2 / l2[0] - 1).max() <= 1e-4


def test_zero_initial_data_stays_zero():
    cfg = SolverConfig(grid_n=16, T=0.25, dt_max=1 / 64, xi=SHEARS, init={"type": "zero"},
                       driver={"type": "brownian", "seed": 0, "level": 6})
    res = run(cfg)
    assert res.state.w.l2() == 0.0
    assert res.blowup is None


def test_zero_horizon_returns_initial_snapshot():
    res = run(SolverConfig(grid_n=16, T=0.0))
    assert len(res.snapshots) == 1 and res.snapshots[0][0] == 0.0
    assert len(res.diagnostics) == 1


def test_snapshots_are_mean_and_divergence_free():
    cfg = SolverConfig(grid_n=32, T=0.25, dt_max=1 / 128, xi=SHEARS, snapshot_every=4,
                       init={"type": "random", "seed": 2, "kmax": 5},
                       driver={"type": "brownian", "seed": 4, "level": 7})
    res = run(cfg)
    assert len(res.snapshots) > 3
    for _, w in res.snapshots:
        assert w.hat[0, 0] == 0
        u = sp.biot_savart_2d(w)
        assert sp.divergence(u).lp(math.inf) < 1e-10


def test_driver_spacing_respects_dt_max():
    cfg = SolverConfig(T=1.0, dt_max=0.01, xi=SHEARS, driver={"type": "brownian", "seed": 0, "level": 4})
    R, _ = build_driver(cfg, 2)
    assert np.diff(R.times).max() <= 0.01
    assert R.times[-1] == pytest.approx(1.0)


def test_taylor_green_pressure():
    res = run(SolverConfig(grid_n=32, T=0.5, dt_max=0.01, keep_history=True))
    q = res.state.q
    p = np.array([(0.3, 1.1), (2.0, 4.5), (5.5, 0.7)])
    assert np.allclose(q.evaluate(p), TG_PRESSURE_T05, atol=1e-10)
    assert np.abs(res.state.h).max() == 0.0
    qs, hs = recover_pressure_harmonic(res)
    assert qs[-1][0] == pytest.approx(0.5)
    assert np.allclose(qs[-1][1].evaluate(p), TG_PRESSURE_T05, atol=1e-10)
    assert np.abs(hs[-1][1]).max() == 0.0


def test_pressure_needs_history():
    with pytest.raises(SolverError):
        recover_pressure_harmonic(run(SolverConfig(grid_n=16, T=0.1)))


def test_pressure_vanishes_for_zero_velocity():
    cfg = SolverConfig(grid_n=16, T=0.25, dt_max=1 / 64, xi=SHEARS, init={"type": "zero"},
                       driver={"type": "brownian", "seed": 1, "level": 6}, keep_history=True)
    res = run(cfg)
    assert res.state.grad_q.sup() == 0.0
    assert np.abs(res.state.h).max() == 0.0


def test_harmonic_constant_of_shear(grid64):
    xi = [VectorField(ScalarField.from_function(grid64, lambda a, b: 0.7 * np.cos(b)), ScalarField.zeros(grid64))]
    u = VectorField(ScalarField.from_function(grid64, lambda a, b: np.sin(b)), ScalarField.zeros(grid64))
    G = velocity_germ(u, xi, [1.0], [[0.0]], second_order=False)
    assert np.allclose(sp.harmonic_part(G), HARMONIC_FIRST_ORDER, atol=1e-14)


def test_harmonic_constant_vanishes_for_constant_xi(grid64):
    u = sp.biot_savart_2d(sp.random_field(grid64, 5, 6))
    G = velocity_germ(u, const_xi(grid64, 0.3, -0.4), [0.2], [[0.02]])
    assert np.abs(sp.harmonic_part(G)).max() < 1e-15


@settings(max_examples=10)
@given(st.integers(0, 2 ** 20))
def test_velocity_form_matches_vorticity_step(seed):
    grid = sp.spectral_grid(32)
    xi = build_xi(grid, SHEARS)
    w = sp.dealias(sp.random_field(grid, seed, 5))
    rng = np.random.default_rng(seed)
    Z = rng.normal(scale=0.05, size=2)
    ZZ = 0.5 * np.outer(Z, Z) + np.array([[0, 1e-3], [-1e-3, 0]])
    h = 1e-3
    R = one_interval(h, Z, ZZ)
    state = SimState.initial(w)
    new = step(state, 0.0, h, R, _ctx(xi, grid_n=32))
    v = velocity_form_step(sp.biot_savart_2d(w), 0.0, h, R, xi)
    diff = sp.curl2d(v) - new.w
    assert diff.l2() <= 1e-3 * (np.abs(Z).max() + h) ** 2 * w.l2()


def test_step_rejected_by_proxy_and_cfl(grid64):
    w = taylor_green(grid64)
    xi = build_xi(grid64, SHEARS)
    R = one_interval(0.01, [2.0, 0.0], [[2.0, 0.0], [0.0, 0.0]])
    with pytest.raises(StepRejected):
        step(SimState.initial(w), 0.0, 0.01, R, _ctx(xi))
    R = one_interval(1.0, [0.0], [[0.0]])
    with pytest.raises(StepRejected):
        step(SimState.initial(w), 0.0, 1.0, R, _ctx([]))


def test_step_blowup_ceiling(grid64):
    w = taylor_green(grid64)
    ctx = StepContext([], SolverConfig().validate(), ceiling=1.0)
    with pytest.raises(BlowUp):
        step(SimState.initial(w), 0.0, 1e-3, one_interval(1e-3, [0.0], [[0.0]]), ctx)


def test_run_reports_blowup():
    # the Taylor germ amplifies mode n by 1 + (n a Z)^4 / 4 per step
    cfg = SolverConfig(grid_n=16, T=1.0, dt_max=1 / 64, l_step=1e9, enable_drift=False,
                       xi=[[{"k": [0, 0], "cos": [3.0, 0.0]}]], init={"type": "random", "seed": 0, "kmax": 5},
                       driver={"type": "brownian", "seed": 0, "level": 6}, blowup_factor=10.0)
    res = run(cfg)
    assert res.blowup is not None
    assert res.blowup["sup"] > res.blowup["ceiling"]
    assert res.state.t < 1.0
