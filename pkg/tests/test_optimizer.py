import math

import numpy as np
import pytest

from eivpd.datagen import Dataset, gen_dataset, preset_design
from eivpd.errors import GridDegenerate, OptimizationFailed
from eivpd.objective import Objective, ObjectiveSpec
from eivpd.optimizer import SearchConfig, _fold, default_bounds, grid_refine, maximize, nelder_mead_max


def quadratic(center):
    c = np.asarray(center, dtype=float)
    return lambda b: -float(np.sum((np.asarray(b) - c) ** 2))


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(bounds=((1.0, 0.0),))
    with pytest.raises(ValueError):
        SearchConfig(bounds=((0.0, 1.0), (0.0, 1.0)), starts=((0.5, 2.0),))
    with pytest.raises(ValueError):
        SearchConfig(tol_x=0.0)


def test_default_bounds():
    assert default_bounds([1.0, -2.0]) == ((-5.0, 7.0), (-13.0, 9.0))


def test_fold_reflects_into_box():
    lo, hi = np.array([0.0, 0.0]), np.array([1.0, 2.0])
    np.testing.assert_allclose(_fold([1.25, -0.5], lo, hi), [0.75, 0.5])
    np.testing.assert_allclose(_fold([3.5, 2.0], lo, hi), [0.5, 2.0])


def test_nelder_mead_quadratic_stub():
    r = nelder_mead_max(quadratic([1.0, 1.0]), [0.0, 2.5], [-3, -3], [3, 3], tol_x=1e-8, tol_f=0.0)
    assert r.converged
    np.testing.assert_allclose(r.x, [1.0, 1.0], atol=1e-6)


def test_maximize_with_stub_objective(design2):
    cfg = SearchConfig(bounds=((-3, 3), (-3, 3)), tol_f=0.0)
    rep = maximize(design2, cfg=cfg, objective=quadratic([1.0, 1.0]))
    np.testing.assert_allclose(rep.b_hat, [1.0, 1.0], atol=cfg.tol_x)
    assert rep.method == "PD"
    assert rep.converged


def test_optimum_on_boundary():
    cfg = SearchConfig(bounds=((0.0, 2.0), (0.0, 2.0)), tol_f=0.0)
    d = Dataset(np.ones((4, 2)) + np.eye(4, 2), np.arange(4.0))
    rep = maximize(d, cfg=cfg, objective=quadratic([3.0, 1.0]))
    assert rep.b_hat[0] == pytest.approx(2.0, abs=1e-5)
    assert rep.b_hat[1] == pytest.approx(1.0, abs=1e-5)
    assert rep.diagnostics["on_boundary"]


def test_noiseless_design_recovers_truth(exact_linear):
    cfg = SearchConfig(bounds=((0.0, 2.0), (0.0, 2.0)), starts=((1.0, 1.0), (0.5, 1.5)))
    rep = maximize(exact_linear, cfg=cfg)
    np.testing.assert_allclose(rep.b_hat, [1.0, 1.0], atol=1e-6)
    assert rep.objective_at_opt == 0.0


def test_noiseless_generated_from_ols_start(noiseless):
    rep = maximize(noiseless)
    np.testing.assert_allclose(rep.b_hat, [1.0, 1.0], atol=1e-5)
    assert rep.objective_at_opt > -1e-20


def test_report_invariants(design1):
    cfg = SearchConfig()
    rep = maximize(design1, cfg=cfg)
    lo, hi = rep.diagnostics["bounds_lo"], rep.diagnostics["bounds_hi"]
    assert all(l <= b <= h for b, l, h in zip(rep.b_hat, lo, hi))
    obj = Objective(design1)
    assert rep.objective_at_opt >= obj(rep.start_used)
    assert rep.diagnostics["n_starts"] == 2 * 2 + 2
    assert rep.n_evals > 0
    assert abs(rep.b_hat[0] - 1) < 0.6


def test_determinism(design1):
    a, b = maximize(design1), maximize(design1)
    assert a == b
    assert a.to_text() == b.to_text()


def test_location_invariance_of_argmax(design2):
    a = maximize(design2)
    b = maximize(design2.shifted([3.0, -7.0], 12.0))
    np.testing.assert_allclose(a.b_hat, b.b_hat, atol=1e-5)


def test_scale_equivariance_noiseless(exact_linear):
    scaled = Dataset(exact_linear.x * np.array([2.0, 1.0]), exact_linear.y)
    cfg = SearchConfig(bounds=((0.0, 2.0), (0.0, 2.0)), starts=((0.6, 1.2),), tol_x=1e-9, tol_f=0.0)
    rep = maximize(scaled, cfg=cfg)
    np.testing.assert_allclose(rep.b_hat, [0.5, 1.0], atol=1e-6)


def test_all_starts_degenerate():
    def always_degenerate(b):
        raise GridDegenerate(30, 41)

    d = Dataset(np.eye(4, 2) + 1.0, np.arange(4.0))
    with pytest.raises(OptimizationFailed):
        maximize(d, cfg=SearchConfig(bounds=((0, 1), (0, 1))), objective=always_degenerate)


def test_nonfinite_start_is_skipped():
    calls = {"n": 0}

    def f(b):
        calls["n"] += 1
        if b[0] < 0.1:
            return math.nan
        return -float((b[0] - 0.5) ** 2 + (b[1] - 0.5) ** 2)

    d = Dataset(np.eye(4, 2) + 1.0, np.arange(4.0))
    cfg = SearchConfig(bounds=((0, 1), (0, 1)), starts=((0.05, 0.5), (0.6, 0.6)), tol_f=0.0)
    rep = maximize(d, cfg=cfg, objective=f)
    assert rep.diagnostics["failed_starts"] == 1
    np.testing.assert_allclose(rep.b_hat, [0.5, 0.5], atol=1e-5)


def test_flat_objective_flag():
    d = Dataset(np.eye(4, 2) + 1.0, np.arange(4.0))
    rep = maximize(d, cfg=SearchConfig(bounds=((0, 1), (0, 1))), objective=lambda b: -1.0)
    assert rep.flat_objective
    rep2 = maximize(d, cfg=SearchConfig(bounds=((0, 1), (0, 1))), objective=quadratic([0.5, 0.5]))
    assert not rep2.flat_objective


def test_grid_refine_stub():
    d = Dataset(np.eye(4, 2) + 1.0, np.arange(4.0))
    best = grid_refine(d, ObjectiveSpec(), ((0, 2), (0, 2)), 5, objective=quadratic([0.6, 1.4]))
    np.testing.assert_allclose(best, [0.5, 1.5])
    with pytest.raises(ValueError):
        grid_refine(d, ObjectiveSpec(), ((0, 2), (0, 2)), 2, objective=quadratic([0, 0]))


def test_grid_refine_hits_lattice_truth(exact_linear):
    best = grid_refine(exact_linear, ObjectiveSpec(), ((0.0, 2.0), (0.0, 2.0)), 3)
    np.testing.assert_array_equal(best, [1.0, 1.0])


def test_grid_refine_near_pd_optimum():
    from eivpd.datagen import replication_seeds

    close = 0
    seeds = replication_seeds(77, 20)
    for s in seeds:
        d = gen_dataset(preset_design("3", seed=s), keep_latent=False)
        rep = maximize(d)
        lo, hi = rep.diagnostics["bounds_lo"], rep.diagnostics["bounds_hi"]
        box = tuple((max(l, b - 1.0), min(h, b + 1.0)) for b, l, h in zip(rep.b_hat, lo, hi))
        best = grid_refine(d, ObjectiveSpec(), box, 9)
        close += float(np.max(np.abs(best - np.array(rep.b_hat)))) <= 0.25
    assert close >= 18
