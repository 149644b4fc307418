# File: tests/test_fits.py (Q2FMM)
import math

import pytest

from scripts.errors import Q2FMMError
from scripts.fits import fit_scaling, geometric_rate, loglog_slope

SIZES = [16, 64, 256, 1024, 4096]


def test_recovers_sqrt_growth():
    depths = [3.0 * math.sqrt(n) + 5.0 for n in SIZES]
    report = fit_scaling(SIZES, depths, ["sqrt_N", "logN", "N"])
    assert report.best == "sqrt_N"
    best = next(c for c in report.candidates if c.form == "sqrt_N")
    assert best.slope == pytest.approx(3.0)
    assert best.intercept == pytest.approx(5.0)
    assert best.r_squared == pytest.approx(1.0)


def test_recovers_log_growth():
    report = fit_scaling(SIZES, [2.0 * math.log2(n) for n in SIZES], ["sqrt_N", "logN", "N"])
    assert report.best == "logN"


def test_constant_values_fit_perfectly():
    report = fit_scaling(SIZES, [7.0] * len(SIZES), ["logN"])
    assert report.candidates[0].r_squared == 1.0


def test_fit_input_errors():
    with pytest.raises(Q2FMMError):
        fit_scaling([16, 64], [1.0, 2.0], ["N"])
    with pytest.raises(Q2FMMError):
        fit_scaling(SIZES, [1.0] * 4, ["N"])
    with pytest.raises(Q2FMMError):
        fit_scaling(SIZES, [1.0] * 5, ["N_cubed"])


def test_loglog_slope():
    steps = [4, 8, 16, 32]
    assert loglog_slope(steps, [1.0 / d ** 2 for d in steps]) == pytest.approx(-2.0)


def test_geometric_rate():
    orders = [0, 1, 2, 3, 4]
    assert geometric_rate(orders, [math.exp(-0.7 * p) for p in orders]) == pytest.approx(-0.7)
    assert geometric_rate(orders, [0.0, 0.5, 0.25, 0.0, float("nan")]) == pytest.approx(math.log(0.5))
    assert geometric_rate(orders, [0.0, 0.0, 0.0, 0.0, 1e-3]) is None
