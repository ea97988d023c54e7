"""Probability-matching diagnostics: the first- and second-order coverage coefficients.

With I the Fisher information, J(theta0, .) the limit Jacobian and m3 the expected third
log-density derivative, all evaluated at theta0:

    delta1 = I^{-1/2} (log J)' + (I^{-1/2})'
    delta2 = [ (I^{-2} J m3)'/6 - (J / I)''/2 ] / J + I^{-1/2} (a1 - a0 (log J)') / (z J)

Derivatives come from analytic formulas (``delta1``/``delta2``) or from Richardson-
extrapolated five-point stencils applied to order-0 quantities only (``*_numeric``),
the latter serving as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .dge import as_dge, limit_jacobian
from .exceptions import DomainError, NonRegularModelError
from .models import as_model, fisher_info, m3

EPS = np.finfo(float).eps
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class MatchReport:
    theta0: float
    delta1: float
    delta2: float
    a0: float = 0.0
    a1: float = 0.0
    order: str = "none"

    def as_dict(self):
        return asdict(self)


def _setup(model, dge, theta0):
    model = as_model(model)
    if not model.regular:
        raise NonRegularModelError("matching diagnostics need a regular model")
    dge = as_dge(model, dge)
    theta0 = float(model.domain.check(theta0))
    return model, dge, theta0


def _z(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie strictly inside (0, 1)")
    z = float(special.ndtri(1.0 - alpha))
    return z


def delta1(model, dge, theta0):
    """First-order coverage coefficient at theta0."""
    model, dge, t = _setup(model, dge, theta0)
    I, I1 = fisher_info(model, t, 0), fisher_info(model, t, 1)
    J, J1 = limit_jacobian(dge, t, t, 0), limit_jacobian(dge, t, t, 1)
    return I**-0.5 * J1 / J - 0.5 * I**-1.5 * I1


def _a_term(I, J, J1, a0, a1, alpha):
    if a0 == 0.0 and a1 == 0.0:
        _z(alpha)
        return 0.0
    return I**-0.5 * (a1 - a0 * J1 / J) / (_z(alpha) * J)


def delta2(model, dge, theta0, a0=0.0, a1=0.0, alpha=0.05):
    """Second-order coverage coefficient at theta0 (analytic derivatives)."""
    model, dge, t = _setup(model, dge, theta0)
    I, I1, I2 = (fisher_info(model, t, k) for k in (0, 1, 2))
    J, J1, J2 = (limit_jacobian(dge, t, t, k) for k in (0, 1, 2))
    M, M1 = m3(model, t, 0), m3(model, t, 1)
    P1 = -2.0 * I**-3 * I1 * J * M + I**-2 * J1 * M + I**-2 * J * M1
    Q2 = J2 / I - 2.0 * J1 * I1 / I**2 + J * (2.0 * I1**2 / I**3 - I2 / I**2)
    return (P1 / 6.0 - Q2 / 2.0) / J + _a_term(I, J, J1, a0, a1, alpha)


# -- finite-difference oracle -------------------------------------------------


def _length_scale(model, t):
    dom = model.domain
    L = max(1.0, abs(t))
    for edge in (dom.lower, dom.upper):
        if math.isfinite(edge):
            L = min(L, abs(t - edge))
    return L


def _stencil(f, t, h, order):
    if order == 1:
        d = lambda s: (f(t - 2 * s) - 8 * f(t - s) + 8 * f(t + s) - f(t + 2 * s)) / (12 * s)
    else:
        d = lambda s: (-f(t - 2 * s) + 16 * f(t - s) - 30 * f(t) + 16 * f(t + s) - f(t + 2 * s)) / (
            12 * s * s
        )
    return (16.0 * d(0.5 * h) - d(h)) / 15.0


def fd_derivative(f, model, t, order):
    """Five-point central difference with one Richardson step; step scaled to the domain."""
    L = _length_scale(model, t)
    h = (EPS ** (1.0 / 3.0) if order == 1 else EPS ** (1.0 / 6.0)) * L
    h = min(h, 0.2 * L)
    return _stencil(f, t, h, order)


def delta1_numeric(model, dge, theta0):
    model, dge, t = _setup(model, dge, theta0)
    I = fisher_info(model, t, 0)
    dlogj = fd_derivative(lambda s: math.log(limit_jacobian(dge, t, s, 0)), model, t, 1)
    dinv = fd_derivative(lambda s: fisher_info(model, s, 0) ** -0.5, model, t, 1)
    return I**-0.5 * dlogj + dinv


def delta2_numeric(model, dge, theta0, a0=0.0, a1=0.0, alpha=0.05):
    model, dge, t = _setup(model, dge, theta0)
    I = fisher_info(model, t, 0)
    J = limit_jacobian(dge, t, t, 0)

    def P(s):
        return fisher_info(model, s, 0) ** -2 * limit_jacobian(dge, t, s, 0) * m3(model, s, 0)

    def Q(s):
        return limit_jacobian(dge, t, s, 0) / fisher_info(model, s, 0)

    P1 = fd_derivative(P, model, t, 1)
    Q2 = fd_derivative(Q, model, t, 2)
    J1 = fd_derivative(lambda s: limit_jacobian(dge, t, s, 0), model, t, 1)
    return (P1 / 6.0 - Q2 / 2.0) / J + _a_term(I, J, J1, a0, a1, alpha)


def classify(d1, d2, tol=DEFAULT_TOL):
    if abs(d1) <= tol:
        return "second" if abs(d2) <= tol else "first"
    return "none"


def match_report(model, dge, theta0, alpha=0.05, a0=0.0, a1=0.0, tol=DEFAULT_TOL):
    """Delta1, Delta2 and the matching order at theta0."""
    d1 = delta1(model, dge, theta0)
    d2 = delta2(model, dge, theta0, a0=a0, a1=a1, alpha=alpha)
    return MatchReport(float(theta0), float(d1), float(d2), float(a0), float(a1), classify(d1, d2, tol))


# -- scaled-normal closed form and contour ------------------------------------


def scaled_normal_delta2_closed(mu0, q):
    """Delta2 of the matched scaled-normal DGE in closed form."""
    mu0 = np.asarray(mu0, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(mu0 <= 0) or np.any(q <= 0):
        raise DomainError("closed form needs mu0 > 0 and q > 0")
    mq = mu0**q
    out = q * (q - 2.0) * mu0 ** (q + 2.0) * (2.0 * mu0**2 + mq * q * (q - 1.0)) / (
        2.0 * mu0**2 + mq * q * q
    ) ** 3
    return float(out) if out.ndim == 0 else out


def delta2_contour(mu_grid, q_grid):
    """Rows (mu, q, delta2) with q varying slowest: each block of len(mu_grid) rows is one q."""
    mu = np.asarray(mu_grid, dtype=float).ravel()
    q = np.asarray(q_grid, dtype=float).ravel()
    Q, M = np.meshgrid(q, mu, indexing="ij")
    vals = scaled_normal_delta2_closed(M.ravel(), Q.ravel())
    return np.column_stack([M.ravel(), Q.ravel(), np.atleast_1d(vals)])


def first_order_class_residual(example, A1p, A2p, theta, q=None):
    """Left minus right side of the first-order class identity for a transform pair.

    ``A1p``/``A2p`` are the derivatives of the transforms applied to the two
    sufficient statistics.  For ``bivnorm``:
        A1'(1 + rho) - A2'(1 - rho) (1 - rho)^2 / (1 + rho)^2.
    For ``scaled-normal`` (theta = x > 0, needs q):
        A2'(x^{q/2}) - A1'(x) q x^{q/2 - 1}.
    """
    theta = float(theta)
    if example == "bivnorm":
        if not -1.0 < theta < 1.0:
            raise DomainError("rho must lie in (-1, 1)")
        return A1p(1.0 + theta) - A2p(1.0 - theta) * (1.0 - theta) ** 2 / (1.0 + theta) ** 2
    if example == "scaled-normal":
        if q is None or q <= 0 or theta <= 0:
            raise DomainError("scaled-normal class needs q > 0 and x > 0")
        return A2p(theta ** (0.5 * q)) - A1p(theta) * q * theta ** (0.5 * q - 1.0)
    raise DomainError(f"unknown example {example!r}; use 'bivnorm' or 'scaled-normal'")


__all__ = [
    "MatchReport",
    "delta1",
    "delta2",
    "delta1_numeric",
    "delta2_numeric",
    "match_report",
    "classify",
    "scaled_normal_delta2_closed",
    "delta2_contour",
    "first_order_class_residual",
]
