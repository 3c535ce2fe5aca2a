# test_distribution.py
"""
分布函数、球测度、点态Hölder指数与粗粒化谱测试
"""

import logging
import math
import sys
import os

import numpy as np
import pytest

# 添加当前目录到路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from distribution import (ball_measure, block_coding_point, coarse_frame, coarse_spectrum,
                          default_hoelder_depth, distribution_bracket, distribution_function,
                          divergence_word, hoelder_frame, pointwise_hoelder, staircase, staircase_frame)
from exceptions import GapPointError, SpecValidationError
from ifs_geometry import BranchMap, IFSSpec, require_valid_ifs
from multifractal import solve_t
from symbolic_core import PotentialSpec
from thermodynamics import build_gibbs_measure

ALPHA_PLUS = math.log(0.3) / math.log(0.5)


@pytest.fixture
def dyadic():
    return IFSSpec.build([BranchMap.affine(0.5, 0.0), BranchMap.affine(0.5, 0.5)], name="dyadic")


@pytest.fixture
def cantor():
    return IFSSpec.build([BranchMap.affine(1 / 3, 0.0), BranchMap.affine(1 / 3, 2 / 3)], name="cantor")


@pytest.fixture
def binomial_measure():
    return build_gibbs_measure(PotentialSpec.from_probabilities([0.3, 0.7]))


@pytest.fixture
def markov_psi():
    rng = np.random.default_rng(2024)
    return PotentialSpec.locally_constant(rng.uniform(-1.0, -0.6, size=4).tolist(), 2, 2)


def test_staircase_depth_two(binomial_measure, dyadic):
    """n=2 时右端点 (.25, .5, .75, 1) 处的累计质量"""
    samples = staircase(binomial_measure, dyadic, 2)
    assert [s.x for s in samples] == pytest.approx([0.25, 0.5, 0.75, 1.0], abs=1e-15)
    assert [s.F for s in samples] == pytest.approx([0.09, 0.3, 0.51, 1.0], abs=1e-12)
    assert samples[-1].F == 1.0
    frame = staircase_frame(samples)
    assert list(frame.columns) == ["x", "F", "err"]


def test_staircase_is_monotone(binomial_measure, dyadic, markov_psi):
    values = np.array([s.F for s in staircase(binomial_measure, dyadic, 14)])
    assert values.size == 2 ** 14
    assert np.all(np.diff(values) >= 0)
    markov = build_gibbs_measure(markov_psi)
    values = np.array([s.F for s in staircase(markov, dyadic, 10)])
    assert np.all(np.diff(values) >= 0)
    assert values[-1] == 1.0


def test_distribution_function_bracket(binomial_measure, dyadic):
    sample = distribution_function(binomial_measure, dyadic, 0.25, 10)
    assert abs(sample.F - 0.09) <= sample.error + 1e-12
    # 端点外向舍入: 0.25 两侧各有一条跨越链
    assert sample.error <= 0.5 * (0.09 * 0.7 ** 8 + 0.21 * 0.3 ** 8) + 1e-12
    lo, hi = distribution_bracket(binomial_measure, dyadic, 0.3, 12)
    assert 0.0 <= lo <= hi <= 1.0
    assert hi - lo <= 0.7 ** 12
    assert distribution_bracket(binomial_measure, dyadic, -1.0, 5) == (0.0, 0.0)
    assert distribution_bracket(binomial_measure, dyadic, 2.0, 5) == (1.0, 1.0)
    with pytest.raises(SpecValidationError):
        distribution_bracket(binomial_measure, dyadic, 0.3, 0)


def test_distribution_function_matches_staircase(binomial_measure, dyadic):
    for sample in staircase(binomial_measure, dyadic, 4)[:-1]:
        direct = distribution_function(binomial_measure, dyadic, sample.x, 12)
        assert abs(direct.F - sample.F) <= direct.error + 1e-8


def test_measure_alphabet_must_match(dyadic):
    ternary = build_gibbs_measure(PotentialSpec.from_probabilities([0.2, 0.3, 0.5]))
    with pytest.raises(SpecValidationError):
        staircase(ternary, dyadic, 3)


def test_ball_measure(binomial_measure, dyadic):
    mass = ball_measure(binomial_measure, dyadic, 0.3, 0.1, 14)
    assert 0.0 < mass.lower <= mass.upper <= 1.0
    assert mass.upper - mass.lower <= 2 * 0.7 ** 14
    with pytest.raises(SpecValidationError):
        ball_measure(binomial_measure, dyadic, 0.3, 0.0, 5)


def test_ball_measure_binomial_example(binomial_measure, dyadic):
    """B(0.5, 0.25) = (0.25, 0.75): 0.51 − 0.09 = 0.42"""
    mass = ball_measure(binomial_measure, dyadic, 0.5, 0.25, 20)
    assert mass.lower - 1e-12 <= 0.42 <= mass.upper + 1e-12
    assert mass.upper - mass.lower <= 1e-3


def test_ball_measure_monotone_and_nested(binomial_measure, markov_psi, dyadic):
    markov = build_gibbs_measure(markov_psi)
    for measure in (binomial_measure, markov):
        radii = 0.4 * 0.5 ** np.arange(12)
        masses = [ball_measure(measure, dyadic, 0.3, float(r), 16) for r in radii]
        for wide, narrow in zip(masses, masses[1:]):
            assert narrow.lower <= wide.lower + 1e-12
            assert narrow.upper <= wide.upper + 1e-12
        for r in (0.2, 0.01):
            coarse = ball_measure(measure, dyadic, 0.3, r, 8)
            fine = ball_measure(measure, dyadic, 0.3, r, 12)
            assert coarse.lower <= fine.lower + 1e-12
            assert fine.upper <= coarse.upper + 1e-12


def test_distribution_function_refinement(binomial_measure, markov_psi, dyadic):
    """深度 n+4 的 F 与深度 n 的 F 之差不超过深度 n 的误差"""
    xs = np.random.default_rng(3).uniform(0.0, 1.0, size=100)
    markov = build_gibbs_measure(markov_psi)
    for measure in (binomial_measure, markov):
        for x in xs:
            coarse = distribution_function(measure, dyadic, float(x), 8)
            fine = distribution_function(measure, dyadic, float(x), 12)
            assert abs(fine.F - coarse.F) <= coarse.error + 1e-12
            assert fine.error <= coarse.error + 1e-12


def test_uniform_staircase_is_identity(dyadic):
    uniform = build_gibbs_measure(PotentialSpec.from_probabilities([0.5, 0.5]))
    samples = staircase(uniform, dyadic, 8)
    assert max(abs(s.F - s.x) for s in samples) <= 1e-12
    for x in (0.1, 0.3, 2 / 3, 0.9):
        sample = distribution_function(uniform, dyadic, x, 20)
        assert abs(sample.F - x) <= sample.error + 1e-12


@pytest.mark.parametrize("x", [0.3, 0.7, 0.123])
def test_uniform_hoelder_exponent_is_one(dyadic, x):
    uniform = build_gibbs_measure(PotentialSpec.from_probabilities([0.5, 0.5]))
    estimate = pointwise_hoelder(uniform, dyadic, x, r0=1.0, rho=0.5, K=20, window=2)
    assert estimate.liminf_est == pytest.approx(1.0, abs=0.02)
    assert estimate.limsup_est == pytest.approx(1.0, abs=0.02)


def test_hoelder_depth_uses_cached_validation(binomial_measure, dyadic, caplog):
    require_valid_ifs(dyadic)
    with caplog.at_level(logging.INFO):
        assert default_hoelder_depth(dyadic, 2.0 ** -20) >= 30
        pointwise_hoelder(binomial_measure, dyadic, 0.3, K=8, window=2)
    assert not [r for r in caplog.records if r.name == "ifs_geometry"]


def test_hoelder_at_left_endpoint(binomial_measure, dyadic):
    """x=0 处球测度为 0.3^k, 指数为 α₊ = log 0.3 / log 0.5"""
    estimate = pointwise_hoelder(binomial_measure, dyadic, 0.0, r0=1.0, rho=0.5, K=20, window=2)
    assert estimate.liminf_est == pytest.approx(ALPHA_PLUS, abs=0.05)
    assert estimate.limsup_est == pytest.approx(ALPHA_PLUS, abs=0.05)
    assert ALPHA_PLUS == pytest.approx(1.736966, abs=1e-6)
    assert not estimate.gap_truncated
    assert estimate.window_slopes.size == 20 - 2 * 2
    frame = hoelder_frame(estimate)
    assert list(frame.columns) == ["logr", "logmass_lo", "logmass_hi"]
    assert len(frame) == 20


def test_hoelder_divergence_point(binomial_measure, dyadic):
    """块编码点的窗口斜率振荡, liminf 与 limsup 分离"""
    word = divergence_word(3)
    assert word[:6] == (1, 2, 1, 1, 1, 1)
    assert len(word) == 2 * (1 + 4 + 16)
    x = block_coding_point(dyadic, word)
    estimate = pointwise_hoelder(binomial_measure, dyadic, x, r0=1.0, rho=0.5, K=24, window=2)
    assert estimate.limsup_est - estimate.liminf_est >= 0.1
    assert estimate.liminf_est <= estimate.limsup_est


def test_hoelder_gap_point(cantor):
    uniform = build_gibbs_measure(PotentialSpec.from_probabilities([0.5, 0.5]))
    with pytest.raises(GapPointError):
        pointwise_hoelder(uniform, cantor, 0.5)


def test_hoelder_parameters_checked(binomial_measure, dyadic):
    with pytest.raises(SpecValidationError):
        pointwise_hoelder(binomial_measure, dyadic, 0.3, rho=1.0)
    with pytest.raises(SpecValidationError):
        pointwise_hoelder(binomial_measure, dyadic, 0.3, K=3, window=2)
    with pytest.raises(SpecValidationError):
        pointwise_hoelder(binomial_measure, dyadic, 0.3, r0=0.0)


def test_coarse_spectrum_binomial_matches_pressure(binomial_measure, dyadic):
    """二项测度: T_n(q) = log₂(0.3^q + 0.7^q) 对任意 n 成立"""
    q_grid = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0]
    coarse = coarse_spectrum(binomial_measure, dyadic, 10, q_grid)
    expected = [math.log2(0.3 ** q + 0.7 ** q) for q in q_grid]
    assert np.max(np.abs(coarse.T - np.array(expected))) <= 1e-9
    np.testing.assert_allclose(coarse.f, coarse.T + coarse.q * coarse.alpha, atol=1e-15)
    assert coarse.f[2] == pytest.approx(1.0, abs=1e-9)
    frame = coarse_frame(coarse)
    assert list(frame.columns) == ["q", "T", "alpha", "f"]


def test_coarse_spectrum_converges_for_markov(dyadic, markov_psi):
    """深度2测度: max_q |T_n(q) − t(q)| 在 n=12 时 ≤ 0.02, n=16 时 ≤ 0.01, 且随 n 减小"""
    measure = build_gibbs_measure(markov_psi)
    phi = PotentialSpec.geometric(dyadic)
    q_grid = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
    exact = np.array([solve_t(phi, markov_psi, q).t for q in q_grid])
    deviations = {n: float(np.max(np.abs(coarse_spectrum(measure, dyadic, n, q_grid).T - exact)))
                  for n in (4, 12, 16)}
    assert deviations[12] <= 0.02
    assert deviations[16] <= 0.01
    assert deviations[16] < deviations[12] < deviations[4]
    trivial = coarse_spectrum(measure, dyadic, 6, [0.0, 1.0])
    assert trivial.T == pytest.approx([1.0, 0.0], abs=1e-9)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
