import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from gfd.dge import DgeSpec, limit_jacobian
from gfd.exceptions import DomainError, NonRegularModelError
from gfd.expansion import (
    coefficients_from,
    density_expansion,
    expansion_coefficients,
    hermite,
    hermite_integral_check,
    quantile_expansion,
)
from gfd.fiducial import build_density
from gfd.models import get_model, sample_data

from conftest import draw


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def test_hermite_examples():
    assert hermite(0, 3.7) == 1.0
    assert hermite(2, 1.0) == 0.0
    assert hermite(3, 2.0) == 2.0
    with pytest.raises(DomainError):
        hermite(7, 0.0)


@given(x=st.floats(-5, 5))
def test_hermite_recurrence(x):
    for k in range(1, 6):
        lhs = hermite(k + 1, x)
        rhs = x * hermite(k, x) - k * hermite(k - 1, x)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_hermite_integral_identity():
    assert hermite_integral_check(1, 0.0) == pytest.approx(-_phi(0.0), abs=1e-12)
    assert hermite_integral_check(2, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert hermite_integral_check(4, 1.0) == pytest.approx(2 * _phi(1.0), abs=1e-12)
    for k in range(1, 7):
        for a in (-1.5, 0.3, 2.0):
            assert hermite_integral_check(k, a) == pytest.approx(-hermite(k - 1, a) * _phi(a), abs=1e-11)


def test_location_normal_coefficients_vanish():
    m, s = draw("location-normal", 0.0, 20, 1)
    k = expansion_coefficients(m, "simple", s, 0.0)
    assert k.A1 == k.A2 == 0.0
    assert k.a == 0.0 and k.A3 == k.A6 == k.G3 == k.G6 == 0.0
    assert k.W1 == 0.0


def test_coefficient_identities():
    m, s = draw("scaled-normal", 3.0, 50, 2, q=1.0)
    k = expansion_coefficients(m, "matched", s, 3.0)
    J = [limit_jacobian(DgeSpec(m, "matched"), 3.0, k.theta_hat, r) for r in (0, 1, 2)]
    assert k.A1 == pytest.approx(J[1] / J[0] / math.sqrt(k.c), rel=1e-14)
    assert k.A2 == pytest.approx(0.5 * J[2] / J[0] / k.c, rel=1e-14)
    assert k.A3 == pytest.approx(k.a / (6 * k.c**1.5), rel=1e-15)
    assert k.A6 == pytest.approx(0.5 * k.A3**2, rel=1e-15)
    assert k.A4 == pytest.approx(k.A1 * k.A3 + k.a4 / (24 * k.c**2), rel=1e-14)
    assert k.G1 == pytest.approx(k.A1 + 3 * k.A3, rel=1e-14)
    assert k.G2 == pytest.approx(k.A2 + 6 * k.A4 + 45 * k.A6, rel=1e-14)
    assert k.G4 == pytest.approx(k.A4 + 15 * k.A6, rel=1e-14)
    assert (k.G3, k.G6) == (k.A3, k.A6)
    assert '"W1"' in k.to_json()


def test_zero_coefficients_give_normal():
    k = coefficients_from(1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    y = np.linspace(-4, 4, 17)
    assert np.allclose(density_expansion(k, y, 10), np.exp(-0.5 * y * y) / math.sqrt(2 * math.pi), atol=1e-15)
    q = quantile_expansion(k, 0.05, 10)
    assert q.beta1 == q.beta2 == 0.0
    assert q.theta_approx == pytest.approx(1.0 + special.ndtri(0.95) / math.sqrt(20.0), rel=1e-15)


def test_location_normal_expansion_quantile_is_exact():
    m, s = draw("location-normal", 0.0, 16, 3)
    k = expansion_coefficients(m, "simple", s, 0.0)
    d = build_density(m, "simple", s)
    for alpha in (0.025, 0.3, 0.95):
        assert quantile_expansion(k, alpha, 16).theta_approx == pytest.approx(d.quantile(1 - alpha).theta_p, abs=1e-7)


def test_density_expansion_integrates_to_one():
    model = get_model("scaled-normal", 1.0)
    s = sample_data(model, 3.0, 100, np.random.default_rng(5))
    k = expansion_coefficients(model, "matched", s, 3.0)
    val, _ = integrate.quad(lambda y: density_expansion(k, y, 100), -8, 8, epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=0.01)


def _sup_gap(model, dge, n, seed):
    s = sample_data(model, 3.0, n, np.random.default_rng([seed, n]))
    k = expansion_coefficients(model, dge, s, 3.0)
    d = build_density(model, dge, s)
    sd = 1.0 / math.sqrt(n * k.c)
    y = np.linspace(-4, 4, 161)
    exact = d.pdf(k.theta_hat + y * sd) * sd
    return float(np.max(np.abs(density_expansion(k, y, n) - exact)))


def test_density_expansion_converges():
    model = get_model("scaled-normal", 1.0)
    wins = sum(_sup_gap(model, "matched", 1000, seed) < _sup_gap(model, "matched", 10, seed) for seed in range(5))
    assert wins >= 3


def _quantile_gap(model, dge, n, seed, alpha):
    s = sample_data(model, 3.0, n, np.random.default_rng([seed, n]))
    k = expansion_coefficients(model, dge, s, 3.0)
    d = build_density(model, dge, s)
    return abs(quantile_expansion(k, alpha, n).theta_approx - d.quantile(1 - alpha).theta_p)


@pytest.mark.parametrize("dge", ["matched", "simple", "jeffreys"])
def test_quantile_expansion_converges(dge):
    model = get_model("scaled-normal", 1.0)
    wins = sum(_quantile_gap(model, dge, 100, seed, 0.05) < _quantile_gap(model, dge, 10, seed, 0.05) for seed in range(5))
    assert wins >= 3


def test_second_order_term_helps_at_large_n():
    # the n^{-1} correction should beat the first-order (beta2 = 0) quantile on average
    model = get_model("scaled-normal", 1.0)
    better = 0
    for seed in range(5):
        s = sample_data(model, 3.0, 200, np.random.default_rng([seed, 200]))
        k = expansion_coefficients(model, "matched", s, 3.0)
        exact = build_density(model, "matched", s).quantile(0.95).theta_p
        q = quantile_expansion(k, 0.05, 200)
        first = k.theta_hat + (q.z + q.beta1 / math.sqrt(200)) / math.sqrt(200 * k.c)
        better += abs(q.theta_approx - exact) < abs(first - exact)
    assert better >= 3


def test_expansion_rejects_nonregular_and_bad_alpha():
    with pytest.raises(NonRegularModelError):
        expansion_coefficients("uniform-location", "simple", [0.5, 0.7], 1.0)
    k = coefficients_from(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        quantile_expansion(k, 1.0, 10)
