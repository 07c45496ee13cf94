import logging
import math
import sys
import warnings
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from scipy import integrate, special, stats

sys.path.insert(0, str(Path(__file__).parent.parent))

from pushbeta.distribution import (
    cdf,
    entropy_neg_log,
    expected_logs,
    log_normalizer,
    mean_variance,
    pdf,
    quantile,
    raw_moment,
    reflect,
    sample,
)
from pushbeta.params import Direction, ParameterError, PushBetaParams
from pushbeta.quadrature import log_kernel

LEFT, RIGHT = Direction.LEFT, Direction.RIGHT
FIGURE = PushBetaParams(3, 2, 4, 0.6, LEFT)


def _trapezoid(params: PushBetaParams, lo: float = 0.0, hi: float = 1.0, m: int = 10**6) -> float:
    grid = np.linspace(lo, hi, m + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.exp(log_kernel(grid, params))
    return float(integrate.trapezoid(values, grid))


def _plain_beta(params: PushBetaParams):
    return stats.beta(*params.reduced_shapes())


def test_pdf_examples():
    assert pdf(0.5, PushBetaParams(2, 2, 0, 0.3)) == pytest.approx(1.5, rel=1e-12)
    assert pdf(0.25, PushBetaParams(1, 1, 1, 1, LEFT)) == pytest.approx(1.5, rel=1e-12)
    expected = 0.4**2 * 0.6 * (1 - 0.24) ** 4 / _trapezoid(FIGURE)
    assert pdf(0.4, FIGURE) == pytest.approx(expected, rel=1e-8)


def test_pdf_outside_support_is_zero():
    values = pdf(np.array([-0.1, 1.1]), FIGURE)
    assert np.all(values == 0.0)
    assert pdf(-0.1, FIGURE, log_scale=True) == -math.inf


def test_log_pdf_matches_log_of_pdf():
    xs = np.linspace(0.05, 0.95, 7)
    assert np.allclose(pdf(xs, FIGURE, log_scale=True), np.log(pdf(xs, FIGURE)), rtol=1e-13)


@pytest.mark.parametrize("direction", [LEFT, RIGHT])
@pytest.mark.parametrize("phi", [0.0, 0.3, 0.9, 1.0])
@pytest.mark.parametrize("gamma", [0.0, 1.0, 5.0])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 5.0])
def test_pdf_is_normalised(alpha, beta, gamma, phi, direction):
    params = PushBetaParams(alpha, beta, gamma, phi, direction)
    if alpha >= 1.0 and beta >= 1.0:
        grid = np.linspace(0.0, 1.0, 200_001)
        total = integrate.trapezoid(pdf(grid, params), grid)
    else:
        a1, b1 = alpha - 1.0, beta - 1.0
        total = integrate.quad(
            lambda x: pdf(x, params) / (x**a1 * (1.0 - x) ** b1),
            0.0,
            1.0,
            weight="alg",
            wvar=(a1, b1),
            epsrel=1e-10,
            limit=200,
        )[0]
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "params",
    [
        PushBetaParams(2.5, 1.5, 0.0, 0.4, LEFT),
        PushBetaParams(2.5, 1.5, 0.0, 0.4, RIGHT),
        PushBetaParams(0.7, 3.0, 5.0, 0.0, LEFT),
        PushBetaParams(0.7, 3.0, 5.0, 0.0, RIGHT),
        PushBetaParams(2.0, 3.0, 4.0, 1.0, LEFT),
        PushBetaParams(2.0, 3.0, 4.0, 1.0, RIGHT),
    ],
)
def test_reductions_match_plain_beta(params):
    oracle = _plain_beta(params)
    xs = np.linspace(0.005, 0.995, 101)
    assert np.allclose(pdf(xs, params), oracle.pdf(xs), rtol=1e-10, atol=0.0)
    assert np.allclose(cdf(xs, params), oracle.cdf(xs), rtol=1e-10, atol=1e-14)
    mean, variance = mean_variance(params)
    assert mean == pytest.approx(oracle.mean(), abs=1e-10)
    assert variance == pytest.approx(oracle.var(), abs=1e-10)


def test_absorbed_push_picks_the_right_shape():
    assert _plain_beta(PushBetaParams(2, 3, 4, 1.0, LEFT)).args == (2, 7)
    assert _plain_beta(PushBetaParams(2, 3, 4, 1.0, RIGHT)).args == (6, 3)


def test_cdf_examples():
    assert cdf(1.0, FIGURE) == 1.0
    assert cdf(0.0, FIGURE) == 0.0
    assert cdf(0.5, PushBetaParams(1, 1, 1, 1, LEFT)) == pytest.approx(0.75, rel=1e-12)
    params = PushBetaParams(2, 3, 2, 0.5, LEFT)
    expected = _trapezoid(params, 0.0, 0.3) / _trapezoid(params)
    assert cdf(0.3, params) == pytest.approx(expected, rel=1e-7)


def test_cdf_is_nondecreasing():
    xs = np.linspace(0.0, 1.0, 41)
    values = cdf(xs, FIGURE)
    assert np.all(np.diff(values) >= 0.0)


def test_upper_tail_keeps_precision():
    upper = cdf(0.999, FIGURE, lower_tail=False)
    expected = _trapezoid(FIGURE, 0.999, 1.0, m=10**5) / _trapezoid(FIGURE)
    assert upper == pytest.approx(expected, rel=1e-6)
    assert upper + cdf(0.999, FIGURE) == pytest.approx(1.0, abs=1e-9)
    assert cdf(0.999, FIGURE, lower_tail=False, log_scale=True) == pytest.approx(math.log(expected), abs=1e-6)


def test_quantile_examples():
    params = PushBetaParams(2, 2, 3, 0.8, LEFT)
    assert quantile(0.0, params) == 0.0
    assert quantile(1.0, params) == 1.0
    median = quantile(0.5, params)
    assert cdf(median, params) == pytest.approx(0.5, abs=1e-10)
    oracle = _trapezoid(params, 0.0, median) / _trapezoid(params)
    assert oracle == pytest.approx(0.5, abs=1e-7)


def test_quantile_is_monotone_and_accepts_upper_and_log_inputs():
    ps = np.array([1e-12, 1e-4, 0.1, 0.5, 0.9, 1 - 1e-4])
    qs = quantile(ps, FIGURE)
    assert np.all(np.diff(qs) > 0.0)
    assert quantile(0.3, FIGURE, lower_tail=False) == pytest.approx(quantile(0.7, FIGURE), abs=1e-10)
    assert quantile(math.log(0.3), FIGURE, log_p=True) == pytest.approx(quantile(0.3, FIGURE), abs=1e-12)
    with pytest.raises(ParameterError):
        quantile(1.5, FIGURE)


@pytest.mark.parametrize(
    "params",
    [FIGURE, PushBetaParams(0.7, 2, 3, 0.3, RIGHT), PushBetaParams(2, 0.6, 6, 0.5, LEFT)],
)
def test_quantile_roundtrip(params):
    for x in [1e-3, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999]:
        assert quantile(cdf(x, params), params) == pytest.approx(x, abs=1e-8)
        assert quantile(cdf(x, params, lower_tail=False), params, lower_tail=False) == pytest.approx(x, abs=1e-8)


def _strictly_below(x, low, high, direction):
    """cdf(x | low) < cdf(x | high) for the left push, reversed for the right push."""
    if x <= 0.5:
        a = cdf(x, low, log_scale=True)
        b = cdf(x, high, log_scale=True)
        return a < b if direction is LEFT else a > b
    a = cdf(x, low, lower_tail=False, log_scale=True)
    b = cdf(x, high, lower_tail=False, log_scale=True)
    return a > b if direction is LEFT else a < b


@pytest.mark.parametrize("direction", [LEFT, RIGHT])
def test_stochastic_dominance_in_proportion_and_intensity(direction):
    rng = np.random.default_rng(11)
    grid = np.arange(1, 100) / 100.0
    for _ in range(50):
        alpha, beta = rng.uniform(0.5, 5.0, size=2)
        gamma = rng.uniform(0.5, 5.0)
        low = PushBetaParams(alpha, beta, gamma, 0.2, direction)
        high = low.replace(phi=0.8)
        assert all(_strictly_below(x, low, high, direction) for x in grid)
        light = PushBetaParams(alpha, beta, 1.0, 0.5, direction)
        heavy = light.replace(gamma=6.0)
        assert all(_strictly_below(x, light, heavy, direction) for x in grid)


def test_sample_examples():
    assert sample(0, FIGURE, seed=1).size == 0
    draws = sample(10_000, PushBetaParams(2, 2, 0, 0), seed=7)
    assert abs(float(np.mean(draws)) - 0.5) < 0.02


def test_sample_is_deterministic_and_inside_open_interval():
    first = sample(500, FIGURE, seed=42)
    second = sample(500, FIGURE, seed=42)
    assert np.array_equal(first, second)
    assert np.all((first > 0.0) & (first < 1.0))
    assert not np.array_equal(first, sample(500, FIGURE, seed=43))


def test_sample_rejects_negative_size():
    with pytest.raises(ParameterError):
        sample(-1, FIGURE, seed=1)


def _cdf_oracle_grid(params: PushBetaParams) -> tuple[np.ndarray, np.ndarray]:
    edge = np.geomspace(1e-9, 0.01, 60)
    grid = np.unique(np.concatenate([[0.0], edge, np.linspace(0.01, 0.99, 300), 1.0 - edge[::-1], [1.0]]))
    return grid, np.asarray(cdf(grid, params))


@pytest.mark.parametrize(
    "params",
    [
        FIGURE,
        PushBetaParams(0.7, 2, 3, 0.3, RIGHT),
        PushBetaParams(2, 0.6, 6, 0.5, LEFT),
        PushBetaParams(5, 8, 12, 0.9, RIGHT),
        PushBetaParams(1.5, 1.5, 2, 0.2, LEFT),
    ],
)
def test_samples_follow_the_cdf(params):
    draws = sample(10_000, params, seed=7)
    grid, values = _cdf_oracle_grid(params)
    result = stats.kstest(draws, lambda v: np.interp(v, grid, values))
    assert result.pvalue > 0.01


def test_raw_moment_examples():
    uniform_push = PushBetaParams(1, 1, 1, 1, LEFT)
    assert raw_moment(1, uniform_push) == pytest.approx(1 / 3, rel=1e-12)
    assert raw_moment(2, uniform_push) == pytest.approx(1 / 6, rel=1e-12)
    survey = PushBetaParams(1, 93, 248, 1 / 3, RIGHT)
    assert raw_moment(1, survey) == pytest.approx(0.1856469, abs=1e-4)
    with pytest.raises(ParameterError):
        raw_moment(0, survey)


@pytest.mark.parametrize(
    "params",
    [FIGURE, PushBetaParams(0.8, 2.5, 3, 0.4, RIGHT), PushBetaParams(0.6, 0.7, 2, 0.5, LEFT), PushBetaParams(4, 1.5, 10, 0.9, RIGHT)],
)
def test_moments_of_the_mirror_image(params):
    m1, m2 = raw_moment(1, params), raw_moment(2, params)
    mirror = reflect(params)
    assert raw_moment(1, mirror) == pytest.approx(1.0 - m1, abs=1e-9)
    assert raw_moment(2, mirror) == pytest.approx(1.0 - 2.0 * m1 + m2, abs=1e-9)


def test_raw_moments_decrease_with_order():
    moments = [raw_moment(k, FIGURE) for k in range(1, 6)]
    assert all(a > b for a, b in zip(moments, moments[1:]))


def test_mean_variance_examples():
    mean, variance = mean_variance(PushBetaParams(1, 1, 1, 1, LEFT))
    assert (mean, variance) == (pytest.approx(1 / 3), pytest.approx(1 / 18))
    mean, variance = mean_variance(PushBetaParams(2, 2, 0, 0.9))
    assert (mean, variance) == (pytest.approx(0.5), pytest.approx(0.05))
    mean, variance = mean_variance(PushBetaParams(1, 93, 248, 1 / 3, RIGHT))
    assert mean == pytest.approx(0.1856469, abs=1e-4)
    assert math.sqrt(variance) == pytest.approx(0.0701663, abs=1e-4)


def test_negative_variance_is_clamped_with_warning(caplog):
    with patch("pushbeta.distribution.raw_moment", side_effect=[0.5, 0.2]):
        with caplog.at_level(logging.WARNING, logger="pushbeta"):
            with pytest.warns(RuntimeWarning):
                mean, variance = mean_variance(FIGURE)
    assert (mean, variance) == (0.5, 0.0)
    assert any(r.getMessage() == "variance_clamped" for r in caplog.records)


def test_round_off_variance_is_clamped_silently():
    with patch("pushbeta.distribution.raw_moment", side_effect=[0.5, 0.25 - 1e-15]):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert mean_variance(FIGURE) == (0.5, 0.0)


def test_expected_logs_examples():
    uniform = PushBetaParams(1, 1, 0, 0.5, LEFT)
    logs = expected_logs(uniform)
    assert logs.e_log_x == pytest.approx(-1.0, abs=1e-12)
    assert logs.e_log_push == pytest.approx(-1.0 - math.log(0.5), abs=1e-9)
    logs = expected_logs(PushBetaParams(2, 3, 0, 0.4, LEFT))
    assert logs.e_log_x == pytest.approx(special.digamma(2) - special.digamma(5), abs=1e-12)


@pytest.mark.parametrize("params", [FIGURE, PushBetaParams(0.8, 2.5, 3, 0.4, RIGHT)])
def test_expected_logs_are_derivatives_of_the_log_normaliser(params):
    h = 1e-4
    logs = expected_logs(params)

    def slope(name: str) -> float:
        base = getattr(params, name)
        up = log_normalizer(params.replace(**{name: base + h}))
        down = log_normalizer(params.replace(**{name: base - h}))
        return (up - down) / (2 * h)

    assert logs.e_log_x == pytest.approx(slope("alpha"), abs=1e-5)
    assert logs.e_log_1mx == pytest.approx(slope("beta"), abs=1e-5)
    assert logs.e_log_push == pytest.approx(slope("gamma"), abs=1e-5)


def test_entropy_examples():
    assert entropy_neg_log(PushBetaParams(1, 1, 0, 0.5, LEFT)) == pytest.approx(1.0)
    assert entropy_neg_log(PushBetaParams(1, 1, 1, 1, LEFT)) == pytest.approx(1.5)
    assert entropy_neg_log(PushBetaParams(2, 2, 0, 0)) == pytest.approx(5 / 6)
    assert entropy_neg_log(FIGURE) > 0.0


def test_reflect():
    mirrored = reflect(FIGURE)
    assert mirrored == PushBetaParams(2, 3, 4, 0.6, RIGHT)
    assert reflect(mirrored) == FIGURE
    assert pdf(0.3, FIGURE) == pytest.approx(pdf(0.7, mirrored), rel=1e-10)
    assert cdf(0.3, FIGURE) == pytest.approx(cdf(0.7, mirrored, lower_tail=False), rel=1e-8)
