# test_multifractal.py
"""
压力方程、α(β)、Legendre 谱与谱范围测试
闭式对照: 二项测度 t(β) = log₂(0.3^β + 0.7^β)
"""

import math
import sys
import os

import numpy as np
import pytest

# 添加当前目录到路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from exceptions import NumericalError, SpecValidationError
from ifs_geometry import BranchMap, IFSSpec
from multifractal import (MultifractalSettings, PressureCurve, alpha_of_beta, beta_grid,
                          classify_spectrum, cycle_extremal_ratios, hoelder_spectrum,
                          legendre_spectrum, level_set_dimension, pressure_curve,
                          second_differences, solve_t, spectrum_range)
from symbolic_core import PotentialSpec

MORAN_DIMENSION = math.log(2) / math.log(3)


def binomial_t(beta):
    return math.log2(0.3 ** beta + 0.7 ** beta)


@pytest.fixture
def dyadic_phi():
    spec = IFSSpec.build([BranchMap.affine(0.5, 0.0), BranchMap.affine(0.5, 0.5)], name="dyadic")
    return PotentialSpec.geometric(spec)


@pytest.fixture
def binomial():
    return PotentialSpec.from_probabilities([0.3, 0.7])


@pytest.fixture
def binomial_curve(dyadic_phi, binomial):
    return pressure_curve(dyadic_phi, binomial, beta_grid(-10.0, 10.0, 0.1))


def test_beta_grid_contains_zero_and_one():
    grid = beta_grid()
    assert grid.size == 401
    assert grid[0] == -20.0 and grid[-1] == 20.0
    assert 0.0 in grid and 1.0 in grid
    with pytest.raises(SpecValidationError):
        beta_grid(0.0, 1.0, 0.0)


def test_solve_t_binomial_examples(dyadic_phi, binomial):
    assert solve_t(dyadic_phi, binomial, 0.0).t == pytest.approx(1.0, abs=1e-9)
    assert solve_t(dyadic_phi, binomial, 1.0).t == pytest.approx(0.0, abs=1e-9)
    solution = solve_t(dyadic_phi, binomial, 2.0)
    assert solution.t == pytest.approx(math.log2(0.58), abs=1e-9)
    assert solution.t == pytest.approx(-0.785875, abs=1e-6)
    assert abs(solution.residual) <= 1e-10
    assert solution.lower == solution.upper == solution.t


def test_binomial_curve_matches_closed_form(binomial_curve):
    """[−10, 10] 步长 0.1 上与 log₂(0.3^β + 0.7^β) 相差不超过 1e−9"""
    expected = np.array([binomial_t(b) for b in binomial_curve.betas])
    assert np.max(np.abs(binomial_curve.ts - expected)) <= 1e-9
    assert np.all(second_differences(binomial_curve.betas, binomial_curve.ts) >= -1e-8)
    assert np.all(np.diff(binomial_curve.alphas) <= 1e-8)
    assert np.max(np.abs(binomial_curve.alphas - binomial_curve.crosschecks)) <= 1e-5
    assert binomial_curve.normalization == pytest.approx(0.0, abs=1e-13)
    assert not binomial_curve.degenerate


def test_depth_two_curve_on_default_range(dyadic_phi):
    """缺省范围 [−20, 20] 的深度2势, 两端主导轨道为二周期"""
    table = np.random.default_rng(2024).uniform(-1.5, -0.3, size=4)
    psi = PotentialSpec.locally_constant(table.tolist(), 2, 2)
    curve = pressure_curve(dyadic_phi, psi, beta_grid(-20.0, 20.0, 1.0))

    def chain_log_radius(beta):
        return math.log(max(abs(np.linalg.eigvals(np.exp(beta * table).reshape(2, 2)))))

    expected = np.array([(chain_log_radius(b) - b * chain_log_radius(1.0)) / math.log(2)
                         for b in curve.betas])
    assert np.max(np.abs(curve.ts - expected)) <= 1e-9
    for beta in (-20.0, 20.0):
        assert abs(solve_t(dyadic_phi, psi, beta).residual) <= 1e-10
    assert curve.t_at(0.0) == pytest.approx(1.0, abs=1e-9)
    assert curve.t_at(1.0) == pytest.approx(0.0, abs=1e-9)
    assert np.all(second_differences(curve.betas, curve.ts) >= -1e-8)
    assert np.all(np.diff(curve.alphas) <= 1e-8)


def test_alpha_of_beta_binomial(dyadic_phi, binomial):
    estimate = alpha_of_beta(dyadic_phi, binomial, 0.0)
    assert estimate.alpha == pytest.approx((math.log(0.3) + math.log(0.7)) / (2 * math.log(0.5)), abs=1e-9)
    assert estimate.alpha == pytest.approx(1.125770, abs=1e-6)
    assert estimate.discrepancy <= 1e-5
    estimate = alpha_of_beta(dyadic_phi, binomial, 1.0)
    assert estimate.alpha == pytest.approx(0.881291, abs=1e-6)


def test_alpha_symmetric_is_one(dyadic_phi):
    symmetric = PotentialSpec.from_probabilities([0.5, 0.5])
    for beta in (-4.0, 0.0, 3.0):
        assert alpha_of_beta(dyadic_phi, symmetric, beta).alpha == pytest.approx(1.0, abs=1e-12)


def test_legendre_apex_and_tangency(binomial_curve):
    spectrum = legendre_spectrum(binomial_curve)
    assert spectrum.apex_f == pytest.approx(1.0, abs=1e-9)
    assert spectrum.apex_alpha == pytest.approx(1.125770, abs=1e-6)
    index = int(np.argmin(np.abs(spectrum.betas - 1.0)))
    assert spectrum.f[index] == pytest.approx(spectrum.alphas[index], abs=1e-6)
    assert spectrum.f[index] == pytest.approx(0.881291, abs=1e-6)
    assert spectrum.legendre_consistent
    assert np.all(spectrum.f <= spectrum.apex_f + 1e-8)
    assert np.all(spectrum.f >= 0)
    np.testing.assert_allclose(spectrum.f_raw, spectrum.ts + spectrum.betas * spectrum.alphas, atol=1e-15)


def test_legendre_rejects_nonconvex_curve():
    betas = np.array([-1.0, 0.0, 1.0])
    curve = PressureCurve(betas, np.array([1.0, 1.5, 0.0]), np.array([1.0, 0.9, 0.8]),
                          np.array([1.0, 0.9, 0.8]), np.zeros(3), False, 0.0, 1)
    with pytest.raises(NumericalError):
        legendre_spectrum(curve)


def test_legendre_requires_zero_and_one(dyadic_phi, binomial):
    curve = pressure_curve(dyadic_phi, binomial, [-1.0, -0.5, 0.0, 0.5])
    with pytest.raises(SpecValidationError):
        legendre_spectrum(curve)


def test_spectrum_range_binomial(dyadic_phi, binomial):
    assert cycle_extremal_ratios(dyadic_phi, binomial, 1) == pytest.approx((0.514573, 1.736966), abs=1e-6)
    estimate = spectrum_range(dyadic_phi, binomial, 1, 20.0)
    assert estimate.alpha_minus == pytest.approx(math.log(0.7) / math.log(0.5), abs=1e-6)
    assert estimate.alpha_plus == pytest.approx(math.log(0.3) / math.log(0.5), abs=1e-6)
    assert estimate.disagreement <= 5e-3
    assert abs(estimate.asymptotic[0] - estimate.cycle[0]) <= 5e-3
    assert abs(estimate.asymptotic[1] - estimate.cycle[1]) <= 5e-3
    label = classify_spectrum(estimate)
    assert label.label == "nondegenerate"


def test_symmetric_spectrum_is_degenerate(dyadic_phi):
    symmetric = PotentialSpec.from_probabilities([0.5, 0.5])
    curve, spectrum, estimate = hoelder_spectrum(dyadic_phi, symmetric, beta_grid(-2.0, 2.0, 0.5))
    assert (estimate.alpha_minus, estimate.alpha_plus) == pytest.approx((1.0, 1.0), abs=1e-9)
    assert curve.degenerate
    label = classify_spectrum(estimate, spectrum.apex_f)
    assert label.label == "degenerate" and label.consistent
    assert np.allclose(spectrum.alphas, 1.0) and np.allclose(spectrum.f, 1.0)


def test_moran_dimension():
    """比例 (1/3, 1/3), ψ = t(0)φ: t(0) = ln2/ln3"""
    cantor = IFSSpec.build([BranchMap.affine(1 / 3, 0.0), BranchMap.affine(1 / 3, 2 / 3)], hull=(0.0, 1.0))
    phi = PotentialSpec.geometric(cantor)
    psi = PotentialSpec.geometric(cantor, MORAN_DIMENSION)
    assert solve_t(phi, psi, 0.0).t == pytest.approx(MORAN_DIMENSION, abs=1e-9)
    assert solve_t(phi, psi, 0.0).t == pytest.approx(0.630930, abs=1e-6)
    estimate = spectrum_range(phi, psi, 2, 5.0)
    assert estimate.alpha_minus == pytest.approx(MORAN_DIMENSION, abs=1e-9)
    assert estimate.alpha_plus == pytest.approx(MORAN_DIMENSION, abs=1e-9)
    label = classify_spectrum(estimate, solve_t(phi, psi, 0.0).t)
    assert label.label == "degenerate" and label.consistent


def test_multiple_of_geometric_potential_is_degenerate(dyadic_phi):
    psi = PotentialSpec.geometric(dyadic_phi.ifs, 3.0)
    estimate = spectrum_range(dyadic_phi, psi, 3, 10.0)
    assert classify_spectrum(estimate, 1.0).label == "degenerate"


def test_degenerate_apex_mismatch_is_flagged(dyadic_phi):
    psi = PotentialSpec.from_probabilities([0.5, 0.5])
    estimate = spectrum_range(dyadic_phi, psi, 1, 5.0)
    assert not classify_spectrum(estimate, 0.9).consistent


def test_level_set_dimension(binomial_curve, dyadic_phi, binomial):
    spectrum = legendre_spectrum(binomial_curve, spectrum_range(dyadic_phi, binomial, 1, 20.0))
    assert level_set_dimension(spectrum, spectrum.apex_alpha) == pytest.approx(1.0, abs=1e-9)
    inside = level_set_dimension(spectrum, 0.9)
    assert 0.0 < inside < 1.0
    assert level_set_dimension(spectrum, 0.4) is None
    assert level_set_dimension(spectrum, 1.9) is None


def test_threaded_sweep_is_identical(dyadic_phi, binomial):
    betas = beta_grid(-3.0, 3.0, 0.25)
    single = pressure_curve(dyadic_phi, binomial, betas, MultifractalSettings(threads=1))
    threaded = pressure_curve(dyadic_phi, binomial, betas, MultifractalSettings(threads=4))
    assert np.array_equal(single.ts, threaded.ts)
    assert np.array_equal(single.alphas, threaded.alphas)


def test_moebius_enclosures_overlap_across_depths():
    """Möbius 系统: 不同近似深度下 t(0) 的包络互相重叠"""
    spec = IFSSpec.build([BranchMap.moebius(1, 0, 1, 2), BranchMap.moebius(0, 2, -1, 3)], hull=(0.0, 1.0))
    phi = PotentialSpec.geometric(spec)
    psi = PotentialSpec.from_probabilities([0.4, 0.6])
    solutions = [solve_t(phi, psi, 0.0, MultifractalSettings(depth=m)) for m in (6, 8, 10)]
    for solution in solutions:
        assert solution.lower <= solution.t <= solution.upper
        assert abs(solution.residual) <= 1e-10
    for a in solutions:
        for b in solutions:
            assert a.lower <= b.upper and b.lower <= a.upper
    assert solutions[-1].upper - solutions[-1].lower <= solutions[0].upper - solutions[0].lower
    assert 0.0 < solutions[-1].t < 1.0


def test_pressure_curve_rejects_unsorted_grid(dyadic_phi, binomial):
    with pytest.raises(SpecValidationError):
        pressure_curve(dyadic_phi, binomial, [0.0, 1.0, 0.5])
    with pytest.raises(SpecValidationError):
        solve_t(binomial, binomial, 0.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
