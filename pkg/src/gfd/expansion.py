"""MLE-centred asymptotic expansion of the fiducial density and its quantiles.

The expansion variable is y = sqrt(n c) (theta - theta_hat) with c = -L_n''(theta_hat).
Coefficients use the limit Jacobian J(theta0, .) at theta_hat, so the reference
parameter theta0 must be supplied; this makes the expansion a diagnostic for
simulations rather than an estimator.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .dge import as_dge, jacobian, jacobian_deriv, limit_jacobian
from .exceptions import DomainError, NonRegularModelError
from .models import as_model, as_sample, mle

_HERMITE = (
    lambda x: np.ones_like(x),
    lambda x: x,
    lambda x: x**2 - 1.0,
    lambda x: x**3 - 3.0 * x,
    lambda x: x**4 - 6.0 * x**2 + 3.0,
    lambda x: x**5 - 10.0 * x**3 + 15.0 * x,
    lambda x: x**6 - 15.0 * x**4 + 45.0 * x**2 - 15.0,
)


def hermite(k, x):
    """Probabilists' Hermite polynomial H_k for k = 0..6."""
    if not 0 <= int(k) <= 6 or int(k) != k:
        raise DomainError(f"Hermite order {k} unsupported (0..6)")
    x = np.asarray(x, dtype=float)
    out = _HERMITE[int(k)](x)
    return float(out) if out.ndim == 0 else out


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def hermite_integral_check(k, a):
    """Quadrature value of the integral of H_k(y) phi(y) from -inf to a (k = 1..6).

    The closed form is -H_{k-1}(a) phi(a).
    """
    if not 1 <= k <= 6:
        raise DomainError("hermite_integral_check needs 1 <= k <= 6")
    val, _ = integrate.quad(
        lambda y: hermite(k, y) * _phi(y), -math.inf, float(a), epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return val


@dataclass(frozen=True)
class ExpansionCoeffs:
    theta_hat: float
    c: float
    a: float
    a4: float
    A1: float
    A2: float
    A3: float
    A4: float
    A6: float
    G1: float
    G2: float
    G3: float
    G4: float
    G6: float
    W1: float
    theta0: float

    def to_json(self):
        return json.dumps(asdict(self))


def coefficients_from(theta_hat, c, a, a4, jl_ratio1, jl_ratio2, W1, theta0):
    """Assemble the A/G blocks from c, a, a4 and the limit-Jacobian log-ratios J'/J, J''/J."""
    A1 = jl_ratio1 / math.sqrt(c)
    A2 = 0.5 * jl_ratio2 / c
    A3 = a / (6.0 * c**1.5)
    A4 = A1 * A3 + a4 / (24.0 * c * c)
    A6 = 0.5 * A3 * A3
    return ExpansionCoeffs(
        theta_hat=theta_hat, c=c, a=a, a4=a4,
        A1=A1, A2=A2, A3=A3, A4=A4, A6=A6,
        G1=A1 + 3.0 * A3, G2=A2 + 6.0 * A4 + 45.0 * A6, G3=A3, G4=A4 + 15.0 * A6, G6=A6,
        W1=W1, theta0=theta0,
    )


def expansion_coefficients(model, dge, sample, theta0):
    """Coefficients of the second-order density expansion around the MLE."""
    model = as_model(model)
    if not model.regular:
        raise NonRegularModelError("expansions need a regular model")
    dge = as_dge(model, dge)
    sample = as_sample(model, sample)
    fit = mle(model, sample)
    th = fit.theta_hat
    J = limit_jacobian(dge, theta0, th, 0)
    J1 = limit_jacobian(dge, theta0, th, 1)
    J2 = limit_jacobian(dge, theta0, th, 2)
    Jn = jacobian(dge, sample, th)
    Jn1 = jacobian_deriv(dge, sample, th, 1)
    W1 = math.sqrt(sample.n) * (Jn1 / Jn - J1 / J)
    return coefficients_from(th, fit.c, fit.l3, fit.l4, J1 / J, J2 / J, W1, float(theta0))


def density_expansion(coeffs, y, n):
    """Second-order expansion of the density of y = sqrt(n c)(theta - theta_hat)."""
    y = np.asarray(y, dtype=float)
    k = coeffs
    first = k.A1 * y + k.A3 * y**3
    second = (
        k.A2 * (y**2 - 1.0)
        + k.A4 * (y**4 - 3.0)
        + k.A6 * (y**6 - 15.0)
        + k.W1 * y / math.sqrt(k.c)
    )
    out = _phi(y) * (1.0 + first / math.sqrt(n) + second / n)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuantileExpansion:
    z: float
    beta1: float
    beta2: float
    theta_approx: float


def quantile_expansion(coeffs, alpha, n):
    """Expansion of the (1 - alpha) fiducial quantile."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    k = coeffs
    z = float(special.ndtri(1.0 - alpha))
    b1 = k.G1 + k.G3 * hermite(2, z)
    b2 = (
        2.0 * z * b1 * k.G3
        - 0.5 * b1 * b1 * z
        + k.G2 * hermite(1, z)
        + k.G4 * hermite(3, z)
        + k.G6 * hermite(5, z)
        + k.W1 / math.sqrt(k.c)
    )
    theta = k.theta_hat + (z + b1 / math.sqrt(n) + b2 / n) / math.sqrt(n * k.c)
    return QuantileExpansion(z, float(b1), float(b2), float(theta))


__all__ = [
    "hermite",
    "hermite_integral_check",
    "ExpansionCoeffs",
    "QuantileExpansion",
    "expansion_coefficients",
    "coefficients_from",
    "density_expansion",
    "quantile_expansion",
]
