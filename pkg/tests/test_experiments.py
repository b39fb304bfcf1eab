import json
import math

import numpy as np
import pytest

from rough_euler import experiments as ex
from rough_euler.solver import SolverConfig

SHEARS = [[{"k": [0, 1], "cos": [0.25, 0.0]}], [{"k": [1, 0], "sin": [0.0, 0.25]}]]


def small(**kw):
    base = dict(grid_n=16, T=0.25, dt_max=1 / 64, xi=SHEARS,
                driver={"type": "brownian", "seed": 0, "level": 6})
    base.update(kw)
    return SolverConfig(**base)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ROUGH_EULER_THREADS", "3")
    assert ex.worker_count() == 3
    monkeypatch.setenv("ROUGH_EULER_THREADS", "0")
    assert ex.worker_count() == 1


def test_wong_zakai_without_noise_has_zero_errors():
    rep = ex.wong_zakai(small(xi=[]), n_min=2, n_max=4, grid_extra=1)
    assert rep.passed and "errors_vanish" in rep.criteria
    assert all(c["error"] == 0.0 for c in rep.cases)


def test_wong_zakai_report_shape_and_determinism(tmp_path):
    a = ex.wong_zakai(small(), n_min=2, n_max=5, seed=3, grid_extra=1)
    b = ex.wong_zakai(small(), n_min=2, n_max=5, seed=3, grid_extra=1)
    assert [c["level"] for c in a.cases] == [2, 3, 4]
    assert set(a.criteria) == {"strictly_decreasing", "ratio_last_first"}
    # node errors never exceed the sup over all steps
    assert all(c["error"] <= c["error_all_steps"] for c in a.cases)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    assert (tmp_path / "a" / "seed3.csv").read_bytes() == (tmp_path / "b" / "seed3.csv").read_bytes()
    da = json.loads((tmp_path / "a" / "report.json").read_text())
    assert da["experiment"] == "wong_zakai" and "runtime_s" in da


def test_wong_zakai_ensemble_counts_passes():
    rep = ex.wong_zakai_ensemble(small(xi=[]), [0, 1], n_min=2, n_max=4, grid_extra=1)
    assert rep.criteria["seeds_passing"]["value"] == 2
    assert rep.criteria["seeds_passing"]["threshold"] == 2
    with pytest.raises(ValueError):
        ex.wong_zakai(small(), n_min=3, n_max=4)


def _order_cfg(**kw):
    return SolverConfig(grid_n=32, enable_drift=False,
                        xi=[[{"k": [0, 1], "cos": [0.5, 0.0]}, {"k": [1, 1], "sin": [0.5, -0.5]}],
                            [{"k": [1, 0], "sin": [0.0, 0.5]}]],
                        driver={"type": "smooth", "name": "circle"},
                        init={"type": "random", "seed": 7, "kmax": 4}, **kw)


def test_local_order_without_second_level():
    rep = ex.local_order_test(_order_cfg(second_order=False), refinements=2)
    assert rep.passed, rep.criteria
    assert rep.parameters["band"] == [3.0, 5.0]


def test_local_order_needs_smooth_driver():
    with pytest.raises(ValueError):
        ex.local_order_test(small())


def test_local_order_exact_for_zero_noise_amplitude():
    cfg = _order_cfg()
    cfg.xi = [[{"k": [0, 1], "cos": [0.0, 0.0]}], [{"k": [1, 0], "sin": [0.0, 0.0]}]]
    rep = ex.local_order_test(cfg, refinements=1, substeps=4)
    assert "exact" in rep.criteria and rep.passed


def test_transport_reference_translates_constant_field():
    from rough_euler.solver import build_xi
    from rough_euler import spectral as sp

    g = sp.spectral_grid(32)
    xi = build_xi(g, [[{"k": [0, 0], "cos": [1.0, 0.0]}]])
    w = sp.ScalarField.from_function(g, lambda a, b: np.sin(a))
    out = ex.transport_reference(w, xi, lambda t: np.array([1.0]), 0.3, 64)
    exact = sp.ScalarField.from_function(g, lambda a, b: np.sin(a - 0.3))
    assert (out - exact).lp(math.inf) < 1e-10


def test_continuous_dependence_small():
    rep = ex.continuous_dependence(small(), eps=(1e-2, 1e-3, 0.0))
    assert rep.criteria["zero_eps_zero_deviation"]["passed"]
    assert rep.criteria["ratio_0.01_0.001"]["passed"]
    # the sup includes t = 0, where the deviation is eps exactly
    assert all(c["deviation"] >= c["eps"] * (1 - 1e-12) for c in rep.cases)


def test_invariant_suite_small():
    rep = ex.invariant_suite(small(loops=[{"name": "a", "center": [1, 1], "radius": 0.5, "points": 64}],
                                   dt_max=1 / 256, driver={"type": "brownian", "seed": 0, "level": 8}))
    assert rep.passed, {k: v for k, v in rep.criteria.items() if not v["passed"]}
    assert "circ_a_drift" in rep.criteria
    assert rep.cases[0]["bkm_integral"] > 0


def test_pushforward_refinement_small():
    rep = ex.pushforward_refinement(small(grid_n=32, T=0.25, dt_max=1 / 128), lattice=8)
    assert len(rep.cases) == 2 and rep.cases[1]["grid_n"] == 64
    assert set(rep.criteria) == {"defect", "refinement_ratio"}
    assert rep.cases[0]["defect"] < 5e-3
