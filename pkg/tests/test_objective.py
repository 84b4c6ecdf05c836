import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eivpd.datagen import Dataset, gen_dataset, preset_design, replication_seeds
from eivpd.errors import ConfigError, GridDegenerate
from eivpd.objective import (
    Objective,
    ObjectiveSpec,
    QuadratureGrid,
    WeightSpec,
    profile_curve,
    q_hat,
    quadrature_value,
    residual_curve_rows,
    residuals_at,
)

from conftest import random_dataset


def test_weight_spec_validation():
    with pytest.raises(ConfigError, match="weight support empty"):
        WeightSpec(u_max=0.0)
    with pytest.raises(ConfigError):
        WeightSpec("truncgauss", 1.0)
    with pytest.raises(ConfigError):
        WeightSpec("cosine")
    with pytest.raises(ConfigError):
        ObjectiveSpec(grid_size=40)
    with pytest.raises(ConfigError):
        ObjectiveSpec(grid_size=3)
    with pytest.raises(ConfigError):
        ObjectiveSpec(denom_floor=0.7)


@pytest.mark.parametrize("w", [WeightSpec(), WeightSpec(u_max=2.5), WeightSpec("truncgauss", 1.5, 0.4)])
def test_weight_density_integrates_to_one(w):
    u = np.linspace(-w.u_max, w.u_max, 20001)
    assert np.trapezoid(w.density(u), u) == pytest.approx(1.0, abs=1e-6)
    assert w.density(0.0) > 0
    assert w.density(w.u_max * 1.01) == 0


def test_grid_is_symmetric_and_normalised():
    g = QuadratureGrid.from_spec(ObjectiveSpec.make(u_max=1.3, grid_size=31))
    np.testing.assert_array_equal(g.nodes, -g.nodes[::-1])
    assert g.nodes[15] == 0.0
    np.testing.assert_array_equal(g.weights, g.weights[::-1])
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(g.weights >= 0)


def test_effective_weights_mask_and_degenerate():
    g = QuadratureGrid.from_spec(ObjectiveSpec(grid_size=5))
    w, mask = g.effective_weights(np.array([0.01, 0.5, 1.0, 0.5, 0.01]))
    assert mask.tolist() == [False, True, True, True, False]
    assert w.sum() == pytest.approx(1.0)
    with pytest.raises(GridDegenerate):
        g.effective_weights(np.array([0.01, 0.01, 1.0, 0.01, 0.5]))


def test_normalisation_with_unit_residuals():
    spec = ObjectiveSpec(grid_size=21)
    g = QuadratureGrid.from_spec(spec)
    res = np.ones((21, 3), dtype=complex)
    assert quadrature_value(res, g.weights, np.ones(3)) == pytest.approx(-3.0, rel=1e-14)


def test_residuals_vanish_at_origin(design1):
    for pair, r in residuals_at(design1, [0.3, 2.0], 0.0):
        assert r == 0


def test_exact_linear_data_gives_exact_zero(exact_linear):
    for half in (True, False):
        obj = Objective(exact_linear, half_grid=half)
        assert obj([1.0, 1.0]) == 0.0
        assert obj([1.2, 0.9]) < 0


def test_generated_noiseless_zero_to_rounding(noiseless):
    # Y is only linear in X up to rounding of the generated values
    obj = Objective(noiseless)
    assert abs(obj([1.0, 1.0])) < 1e-24
    for _, r in residuals_at(noiseless, [1.0, 1.0], 0.6):
        assert abs(r) < 1e-12
    assert obj([1.2, 0.9]) < -1e-6


def test_half_grid_matches_full_grid(design1):
    half, full = Objective(design1), Objective(design1, half_grid=False)
    for b in ([1.0, 1.0], [0.4, 1.7], [2.5, -0.3]):
        qh, qf = half(b), full(b)
        assert abs(qh - qf) <= 1e-12 * max(1.0, abs(qf))


def test_evenness_per_node(design2):
    obj = Objective(design2, half_grid=False)
    res, mags = obj.residuals([0.8, 1.1])
    np.testing.assert_array_equal(res[::-1], np.conj(res))
    np.testing.assert_array_equal(mags[::-1], mags)
    w, mask = obj.grid.effective_weights(mags)
    q = quadrature_value(np.where(mask[:, None], res, 0), w, obj.pair_weights)
    q_rev = quadrature_value(np.where(mask[::-1, None], res[::-1], 0), w[::-1], obj.pair_weights)
    assert abs(q - q_rev) <= 1e-15 * abs(q)


def test_objective_nonpositive_and_location_invariant(design1):
    shifted = design1.shifted([10.0, -4.0], 25.0)
    for b in ([1.0, 1.0], [0.7, 1.3]):
        q1, q2 = q_hat(design1, b), q_hat(shifted, b)
        assert q1 <= 0
        assert abs(q1 - q2) <= 1e-9 * abs(q1)


@pytest.mark.parametrize("b", [[1.0, 1.0], [0.9, 1.1], [1.2, 0.8]])
def test_quadrature_refinement(design2, design1, b):
    for d in (design1, design2):
        coarse = q_hat(d, b, ObjectiveSpec(grid_size=41))
        fine = q_hat(d, b, ObjectiveSpec(grid_size=81))
        assert abs(coarse - fine) < 1e-3 * abs(fine)


def test_trapezoid_rule_available(design2):
    trap = q_hat(design2, [1.0, 1.0], ObjectiveSpec(rule="trapezoid"))
    simp = q_hat(design2, [1.0, 1.0])
    assert trap < 0 and abs(trap - simp) < 0.05 * abs(simp)
    with pytest.raises(ConfigError):
        ObjectiveSpec(rule="gauss")


def test_truth_beats_offset_point():
    wins = 0
    for s in replication_seeds(31, 100):
        d = gen_dataset(preset_design("2", seed=s), keep_latent=False)
        obj = Objective(d)
        wins += obj([1.0, 1.0]) > obj([1.3, 1.3])
    assert wins >= 95


def test_degenerate_region_raises():
    rng = np.random.default_rng(1)
    d = Dataset(rng.normal(scale=20, size=(300, 2)), rng.normal(scale=20, size=300))
    with pytest.raises(GridDegenerate):
        Objective(d)([3.0, 3.0])


def test_per_pair_weights_drop_pairs(design1):
    w = WeightSpec(per_pair_weights={(0, 1): 0.0, (0, "y"): 0.0})
    only_last = Objective(design1, ObjectiveSpec(weight=w))
    res, mags = Objective(design1).residuals([0.8, 1.2])
    g = QuadratureGrid.from_spec(ObjectiveSpec())
    wts, mask = g.effective_weights(mags)
    expect = -float(wts @ np.abs(np.where(mask, res[:, 2], 0)) ** 2)
    assert only_last([0.8, 1.2]) == pytest.approx(expect, rel=1e-12)


def test_profile_curve_peaks_at_truth(exact_linear):
    curve = profile_curve(exact_linear, [1.0, 1.0], 0, [-0.2, -0.1, 0.0, 0.1, 0.2])
    vals = [q for _, q in curve]
    assert vals[2] == 0.0
    assert max(vals) == vals[2]
    assert profile_curve(exact_linear, [1.0, 1.0], 1, [0.0]) == [(0.0, 0.0)]


def test_profile_curve_concave_near_zero(design1):
    curve = profile_curve(design1, [1.0, 1.0], 0, [-0.1, 0.0, 0.1])
    q = [v for _, v in curve]
    assert q[0] + q[2] - 2 * q[1] < 0


def test_residual_curve_rows(design1):
    rows = residual_curve_rows(design1, [1.0, 1.0], ObjectiveSpec(grid_size=11))
    assert len(rows) == 11 * 3
    mid = [r for r in rows if r[0] == 0.0]
    assert all(r[2] == 0 and r[3] == 0 for r in mid)
    assert {r[1] for r in rows} == {"s1s2", "s1sy", "s2sy"}


def test_constant_column_residuals_vanish():
    rng = np.random.default_rng(2)
    x = np.column_stack([np.full(100, 2.0), rng.exponential(size=100)])
    d = Dataset(x, x[:, 1] + rng.normal(size=100))
    res = dict(residuals_at(d, [0.5, 1.0], 0.7))
    assert abs(res[(0, 1)]) < 1e-12
    assert abs(res[(0, "y")]) < 1e-12
    assert math.isfinite(q_hat(d, [0.5, 1.0]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), b1=st.floats(-2, 3), b2=st.floats(-2, 3))
def test_half_grid_property(seed, b1, b2):
    d = random_dataset(np.random.default_rng(seed), n=150)
    try:
        qf = Objective(d, half_grid=False)([b1, b2])
    except GridDegenerate:
        with pytest.raises(GridDegenerate):
            Objective(d)([b1, b2])
        return
    qh = Objective(d)([b1, b2])
    assert qh <= 0
    assert abs(qh - qf) <= 1e-12 * max(1.0, abs(qf))


def test_residuals_at_truth_within_bootstrap_error():
    d = gen_dataset(preset_design("2", n_obs=100_000, seed=6))
    obj = Objective(d, ObjectiveSpec(grid_size=21), half_grid=False)
    res = obj.residuals([1.0, 1.0])[0]
    rng = np.random.default_rng(0)
    boot = []
    for _ in range(30):
        idx = rng.integers(0, d.n, d.n)
        boot.append(Objective(Dataset(d.x[idx], d.y[idx]), ObjectiveSpec(grid_size=21), half_grid=False).residuals([1.0, 1.0])[0])
    se = np.std(np.array(boot), axis=0)  # complex: sqrt(var re + var im)
    nonzero = se > 0
    assert np.all(np.abs(res)[nonzero] < 5 * se[nonzero])
