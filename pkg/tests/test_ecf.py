import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eivpd.datagen import Dataset
from eivpd.ecf import (
    Y,
    LineSums,
    column_index,
    ecf_sums_at,
    estimation_pairs,
    pair_label,
    pd_formula,
    pd_hat,
    sample_cov,
    weighted_sums,
)
from eivpd.errors import DenominatorUnderflow, InsufficientData


def test_pairs_and_labels():
    assert estimation_pairs(2) == [(0, 1), (0, Y), (1, Y)]
    assert len(estimation_pairs(4)) == 4 * 3 // 2 + 4
    assert [pair_label(*p) for p in estimation_pairs(2)] == ["s1s2", "s1sy", "s2sy"]
    assert column_index("y", 3) == 3
    with pytest.raises(IndexError):
        column_index(3, 3)


def test_origin_sums(design2):
    s = weighted_sums(design2, [0.7, -2.0], 0.0)
    assert s.s0 == 1.0
    cols = design2.columns()
    np.testing.assert_allclose(s.s1.real, cols.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(s.s2.real, cols.T @ cols / design2.n, rtol=1e-12)
    assert np.all(s.s1.imag == 0)


def test_pd_hat_at_origin_is_minus_cov(design2):
    s = weighted_sums(design2, [1.3, 0.2], 0.0)
    for k1, k2 in estimation_pairs(2):
        assert pd_hat(s, k1, k2).value == -sample_cov(design2, k1, k2)


def test_single_observation_identity():
    d = Dataset(np.array([[0.3, -1.2]]), np.array([2.5]))
    s = weighted_sums(d, [0.4, 1.1], 0.9)
    for a in range(3):
        for b in range(3):
            assert abs(s.s1[a] * s.s1[b] / s.s0**2 - s.s2[a, b] / s.s0) < 1e-12


def test_noiseless_at_truth_has_unit_modulus(noiseless):
    for u in np.linspace(-2, 2, 9):
        assert abs(weighted_sums(noiseless, [1.0, 1.0], u).s0) == pytest.approx(1.0, abs=1e-12)


def test_sample_cov_examples():
    d = Dataset(np.array([[0.0], [2.0]]), np.array([0.0, 2.0]))
    assert sample_cov(d, 0, Y) == 1.0
    c = Dataset(np.column_stack([np.full(5, 3.0), np.arange(5.0)]), np.arange(5.0))
    assert sample_cov(c, 0, 1) == 0.0
    with pytest.raises(InsufficientData):
        sample_cov(Dataset(np.ones((1, 1)), np.ones(1)), 0, Y)


def test_denominator_floor():
    rng = np.random.default_rng(0)
    d = Dataset(rng.normal(scale=10, size=(200, 1)), rng.normal(scale=10, size=200))
    s = weighted_sums(d, [1.0], 3.0)
    assert abs(s.s0) < 0.2
    with pytest.raises(DenominatorUnderflow) as info:
        pd_hat(s, 0, Y, denom_floor=0.5)
    assert info.value.u == 3.0


def test_conjugate_symmetry_exact(design1):
    b = [0.8, 1.4]
    for u in (0.1, 0.55, 1.3):
        p, m = weighted_sums(design1, b, u), weighted_sums(design1, b, -u)
        for k1, k2 in estimation_pairs(2):
            assert pd_hat(m, k1, k2).value == np.conj(pd_hat(p, k1, k2).value)


def test_location_invariance(design1):
    shifted = design1.shifted([5.0, -3.0], 40.0)
    for u in (0.2, 0.7):
        a, b = weighted_sums(design1, [1.1, 0.9], u), weighted_sums(shifted, [1.1, 0.9], u)
        for k1, k2 in estimation_pairs(2):
            va, vb = pd_hat(a, k1, k2).value, pd_hat(b, k1, k2).value
            assert abs(va - vb) <= 1e-9 * abs(va)


def test_line_sums_match_pointwise(design2):
    pairs = estimation_pairs(2)
    cols = design2.columns()
    ls = LineSums(cols, pairs)
    b = np.array([0.9, 1.2])
    nodes = np.linspace(0.05, 1.0, 20)
    vals, mags = ls.pd(np.append(b, -1.0), nodes)
    for i, u in enumerate(nodes[::5]):
        s = weighted_sums(design2, b, u)
        assert mags[i * 5] == pytest.approx(abs(s.s0), rel=1e-10)
        for j, (k1, k2) in enumerate(pairs):
            assert vals[i * 5, j] == pytest.approx(pd_hat(s, k1, k2).value, rel=1e-9)


def test_line_sums_nonuniform_nodes(design2):
    ls = LineSums(design2.columns(), estimation_pairs(2))
    d = np.array([1.0, 1.0, -1.0])
    uniform = ls(d, np.array([0.25, 0.5, 0.75]))[0]
    direct = ls(d, np.array([0.25, 0.75, 0.5]))[0]
    np.testing.assert_allclose(direct, uniform[[0, 2, 1]], rtol=1e-12)


def test_ecf_sums_at_general_point():
    d = Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 0.0]))
    s = ecf_sums_at(d, [np.pi, 0.0, 0.0])
    assert s.s0 == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        ecf_sums_at(d, [1.0, 2.0])


def test_lcf_of_gaussian_is_constant():
    """For jointly normal data the second derivative is -cov at every point."""
    rng = np.random.default_rng(8)
    n = 400_000
    x = rng.normal(size=(n, 1))
    d = Dataset(x, x[:, 0] + rng.normal(size=n))
    s = weighted_sums(d, [0.5], 0.8)
    assert pd_hat(s, 0, Y).value == pytest.approx(-1.0, abs=0.02)


@settings(max_examples=40, deadline=None)
@given(
    data=arrays(np.float64, (12, 3), elements=st.floats(-5, 5)),
    b=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    u=st.floats(-2, 2),
)
def test_properties_on_arbitrary_data(data, b, u):
    d = Dataset(data[:, :2], data[:, 2])
    s = weighted_sums(d, b, u)
    assert abs(s.s0) <= 1.0 + 1e-12
    np.testing.assert_allclose(s.s2, s.s2.T, rtol=0, atol=0)
    m = weighted_sums(d, b, -u)
    assert m.s0 == np.conj(s.s0)
    z = weighted_sums(d, b, 0.0)
    for k1, k2 in estimation_pairs(2):
        assert pd_hat(z, k1, k2).value + sample_cov(d, k1, k2) == 0


def test_pd_formula_broadcasts():
    s0 = np.array([1.0, 0.5j])
    out = pd_formula(s0, np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.array([2.0, 2.0]))
    assert out.shape == (2,)
    assert out[0] == -1.0
