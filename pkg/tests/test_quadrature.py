import math

import numpy as np
import pytest
from scipy.special import ellipe

from udn_handover.quadrature import (
    QuadratureError,
    QuadratureSettings,
    integrate_finite,
    integrate_semi_infinite,
)

# 10^7-point midpoint rule of sqrt(5 - 4 cos t) on [0, pi], computed once.
MIDPOINT_BETA4 = 6.682446610277631


def test_sqrt_two_minus_two_cos():
    res = integrate_finite(lambda t: np.sqrt(2 - 2 * np.cos(t)), 0, math.pi)
    assert res.value == pytest.approx(4.0, rel=1e-12)


def test_constant():
    assert integrate_finite(lambda t: np.ones_like(t), 0, 1).value == pytest.approx(1.0, rel=1e-14)


def test_beta_four_against_midpoint_oracle():
    res = integrate_finite(lambda t: np.sqrt(5 - 4 * np.cos(t)), 0, math.pi)
    assert res.value == pytest.approx(MIDPOINT_BETA4, rel=1e-12)


def test_rayleigh_normalization():
    lam = 3e-6
    f = lambda x: 2 * math.pi * lam * x * np.exp(-math.pi * lam * x * x)
    assert integrate_semi_infinite(f, 0, math.pi * lam).value == pytest.approx(1.0, rel=1e-9)
    for L in (0.0, 100.0, 400.0, 1500.0):
        res = integrate_semi_infinite(f, L, math.pi * lam)
        assert res.value == pytest.approx(math.exp(-math.pi * lam * L * L), rel=1e-8)


def test_gaussian_second_moment():
    lam = 1e-5
    res = integrate_semi_infinite(lambda x: x * x * np.exp(-math.pi * lam * x * x), 0, math.pi * lam)
    # int_0^inf x^2 exp(-a x^2) dx = sqrt(pi) / (4 a^1.5) with a = pi * lam
    assert res.value == pytest.approx(math.sqrt(math.pi) / (4 * (math.pi * lam) ** 1.5), rel=1e-8)
    assert res.value == pytest.approx(1 / (4 * math.pi * lam**1.5), rel=1e-8)


def test_piecewise_integrand_with_breakpoint():
    f = lambda x: np.where(x < 0.3, 0.0, np.sqrt(np.maximum(x - 0.3, 0)))
    expect = 2 / 3 * 0.7**1.5
    assert integrate_finite(f, 0, 1).value == pytest.approx(expect, rel=1e-8)
    split = integrate_finite(f, 0, 1, points=[0.3])
    assert split.value == pytest.approx(expect, rel=1e-8)
    assert split.subdivisions <= integrate_finite(f, 0, 1).subdivisions


def test_scalar_only_integrand_is_accepted():
    assert integrate_finite(lambda x: math.cos(x), 0, 1).value == pytest.approx(math.sin(1), rel=1e-13)


def test_non_convergence_reports_best_estimate():
    settings = QuadratureSettings(rel_tol=1e-12, max_subdivisions=3)
    with pytest.raises(QuadratureError) as exc:
        integrate_finite(lambda x: 1 / np.sqrt(np.abs(x - 0.37)), 0, 1, settings)
    assert exc.value.value > 0 and exc.value.error > 0


def test_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        integrate_finite(np.sin, 1, 0)
    with pytest.raises(ValueError):
        integrate_semi_infinite(np.exp, 0, 0)


def test_deterministic():
    f = lambda x: np.sqrt(x) * np.cos(7 * x)
    a = integrate_finite(f, 0, 3)
    b = integrate_finite(f, 0, 3)
    assert a == b


SUITE = [
    (lambda x: x**2, 0, 1, 1 / 3),
    (lambda x: np.exp(x), 0, 2, math.e**2 - 1),
    (np.sin, 0, math.pi, 2.0),
    (np.cos, 0, 10, math.sin(10)),
    (lambda x: 1 / (1 + x * x), 0, 1, math.pi / 4),
    (np.sqrt, 0, 1, 2 / 3),
    (lambda x: np.sqrt(np.abs(x - 0.5)), 0, 1, 2 * (2 / 3) * 0.5**1.5),
    (lambda x: np.log(x + 1e-300) * (x > 0), 0, 1, -1.0),
    (lambda x: x**0.25, 0, 16, 0.8 * 16**1.25),
    (lambda x: np.abs(x - 1 / 3), 0, 1, 0.5 * ((1 / 3) ** 2 + (2 / 3) ** 2)),
    (lambda x: np.exp(-x * x), -5, 5, math.sqrt(math.pi) * math.erf(5)),
    (lambda x: 1 / np.sqrt(1 - x * x + 1e-300), 0, 0.999999, math.asin(0.999999)),
    (lambda x: x * np.sin(30 * x), 0, 1, (math.sin(30) - 30 * math.cos(30)) / 900),
    (lambda x: np.sqrt(5 - 4 * np.cos(x)), 0, math.pi, 6 * ellipe(8 / 9)),
    (lambda x: np.sqrt(2 - 2 * np.cos(x)), 0, math.pi, 4.0),
    (lambda x: np.sqrt(1.01 - np.cos(x)), 0, math.pi, 2 * math.sqrt(2.01) * ellipe(2 / 2.01)),
    (lambda x: x**5 - 2 * x**3, -1, 2, (64 - 1) / 6 - 2 * (16 - 1) / 4),
    (lambda x: np.exp(-3 * x) * x, 0, 20, (1 - math.exp(-60) * 61) / 9),
    (lambda x: np.tanh(50 * (x - 0.2)), 0, 1, (math.log(math.cosh(40)) - math.log(math.cosh(10))) / 50),
    (lambda x: 1 / (x + 0.01), 0, 1, math.log(101)),
]


@pytest.mark.parametrize("f,a,b,exact", SUITE)
def test_error_estimate_bounds_true_error(f, a, b, exact):
    res = integrate_finite(f, a, b)
    assert abs(res.value - exact) <= max(res.error, 1e-15 * abs(exact))
    assert abs(res.value - exact) <= max(1e-8 * abs(exact), 1e-14) * 10
