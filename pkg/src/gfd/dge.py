"""Data-generating-equation registry: Jacobians J_n(X, theta), limits J(theta0, theta), kinks.

Jacobians are evaluated exactly as printed with proportionality constants set to 1.
Every evaluator accepts a scalar or a 1-D array of parameter values; the array form is
what the density engine uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .exceptions import DegenerateSampleError, DomainError, KinkError, NumericError, UnderflowError
from .models import (
    BivnormRho,
    GammaShape,
    LocationNormal,
    ScaledNormal,
    ScaleExponential,
    UniformLocation,
    as_model,
    as_sample,
)

METHOD_ALIASES = {"FS": "simple", "F1": "matched", "BJ": "jeffreys"}

WEIGHTS = {
    "one": lambda x: np.ones_like(x),
    "inv": lambda x: 1.0 / x,
}

_VALID = {
    LocationNormal: ("simple", "suffstat", "jeffreys", "invcdf"),
    UniformLocation: ("simple",),
    ScaleExponential: ("simple", "suffstat", "jeffreys", "invcdf"),
    GammaShape: ("simple", "jeffreys", "invcdf"),
    ScaledNormal: ("simple", "suffstat", "matched", "jeffreys", "invcdf"),
    BivnormRho: ("simple", "suffstat", "matched", "jeffreys"),
}

EPS = np.finfo(float).eps


def resolve_dge_id(name):
    """Map table method names (FS, F1, BJ) onto DGE ids; other ids pass through."""
    return METHOD_ALIASES.get(name, name)


@dataclass(frozen=True)
class DgeSpec:
    """A data-generating equation attached to a model.

    ``scale`` multiplies the Jacobian; it has no effect on any fiducial output and is
    kept so that the scaling invariance can be exercised directly.
    """

    model: object
    dge_id: str
    scale: float = 1.0

    def __post_init__(self):
        model = as_model(self.model)
        object.__setattr__(self, "model", model)
        dge_id = resolve_dge_id(self.dge_id)
        object.__setattr__(self, "dge_id", dge_id)
        base = dge_id.split(":", 1)[0]
        allowed = _VALID[type(model)]
        if base not in allowed:
            raise DomainError(
                f"DGE {dge_id!r} is not available for {model.model_id}; choose from {allowed}"
            )
        if base == "invcdf":
            wid = dge_id.split(":", 1)[1] if ":" in dge_id else ""
            if wid not in WEIGHTS:
                raise DomainError(f"unknown invcdf weight {wid!r}; known: {sorted(WEIGHTS)}")
            if wid == "inv" and not isinstance(model, (GammaShape, ScaleExponential)):
                raise DomainError("weight 1/x needs a model with positive observations")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError("Jacobian scale must be a positive finite number")

    @property
    def base(self):
        return self.dge_id.split(":", 1)[0]

    @property
    def weight_id(self):
        return self.dge_id.split(":", 1)[1] if self.base == "invcdf" else None

    @property
    def is_sum(self):
        """True when J_n is a sum over observations (divide by n to compare with its limit)."""
        return self.base in ("simple", "invcdf")

    @property
    def analytic_limit(self):
        m = self.model
        if self.base == "invcdf" or (isinstance(m, GammaShape) and self.base == "simple"):
            return self._invcdf_limit_closed() is not None
        return True

    def _invcdf_limit_closed(self):
        m, w = self.model, self.weight_id or "one"
        if isinstance(m, LocationNormal) and w == "one":
            return "one"
        if isinstance(m, ScaleExponential):
            return w
        if isinstance(m, ScaledNormal) and w == "one":
            return "one"
        return None

    def scaled(self, factor):
        return DgeSpec(self.model, self.dge_id, self.scale * factor)


def as_dge(model, dge):
    if isinstance(dge, DgeSpec):
        return dge
    return DgeSpec(as_model(model), dge)


@dataclass(frozen=True)
class KinkSet:
    """Strictly increasing non-differentiability points inside an interval."""

    points: tuple

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


# ---------------------------------------------------------------------------
# per-sample Jacobians


def _col(theta):
    return np.asarray(theta, dtype=float)[..., None]


def _weighted_terms(model, w, x, theta, strict):
    t = _col(theta)
    with np.errstate(all="ignore"):
        f = model.pdf_obs(x, t)
        dF = model.dcdf_dtheta(x, t)
        terms = np.abs(w(x) * dF / f)
    low = f < 1e-300
    if np.any(low):
        if strict:
            raise UnderflowError("observation density below 1e-300; Jacobian ratio is unreliable")
        terms = np.where(low, np.nan, terms)
    return terms


def weighted_invcdf_jacobian(model, w, sample, theta, strict=True):
    """sum_i |w(X_i) dF(X_i, theta)/dtheta / f(X_i, theta)|.

    ``w`` is a callable or a registered weight id ("one", "inv").
    """
    model = as_model(model)
    sample = as_sample(model, sample)
    if model.arity != 1:
        raise DomainError("inverse-cdf Jacobians need a scalar model")
    theta = model.domain.check(theta)
    wf = WEIGHTS[w] if isinstance(w, str) else w
    x = sample.values
    if np.any(np.asarray(wf(x)) <= 0):
        raise DomainError("weight must be positive on the observations")
    out = np.sum(_weighted_terms(model, wf, x, theta, strict), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _sn_a(q, x, mu, k):
    """k-th mu-derivative of 1 + q(x - mu)/(2 mu) = 1 - q/2 + q x/(2 mu)."""
    if k == 0:
        return 1.0 - 0.5 * q + 0.5 * q * x / mu
    return 0.5 * q * x * (-1.0) ** k * math.factorial(k) * mu ** (-k - 1.0)


def _recip_deriv(k, base, sign):
    """k-th derivative of 1/base where base = 1 + sign*rho."""
    return sign**k * (-1.0) ** k * math.factorial(k) * base ** (-k - 1.0)


def _jeffreys(model, theta, order):
    i0 = model.fisher(theta, 0)
    if order == 0:
        return np.sqrt(i0)
    i1 = model.fisher(theta, 1)
    if order == 1:
        return 0.5 * i1 / np.sqrt(i0)
    i2 = model.fisher(theta, 2)
    return 0.5 * i2 / np.sqrt(i0) - 0.25 * i1 * i1 * i0**-1.5


def _raw_jacobian(dge, sample, theta, order, strict=True):
    """Analytic J_n or its derivative; returns None when no closed form is coded."""
    m, base, st = dge.model, dge.base, sample.stats
    theta = np.asarray(theta, dtype=float)
    n = sample.n
    if base == "jeffreys":
        return _jeffreys(m, theta, order)

    if isinstance(m, (LocationNormal, UniformLocation)):
        if base == "simple":
            return np.full_like(theta, float(n) if order == 0 else 0.0)
        if base == "suffstat":
            return np.full_like(theta, 1.0 if order == 0 else 0.0)

    if isinstance(m, ScaleExponential):
        coef = n * st["m1"] if base == "simple" else (1.0 if base == "suffstat" else None)
        if coef is not None:
            return coef * (-1.0) ** order * math.factorial(order) * theta ** (-order - 1.0)

    if isinstance(m, ScaledNormal):
        q = m.q
        if base == "matched" and st["m1"] <= 0:
            raise DegenerateSampleError(
                "matched scaled-normal Jacobian needs a positive sample mean"
            )
        if base in ("simple", "invcdf") and (base == "simple" or dge.weight_id == "one"):
            x = sample.values
            t = _col(theta)
            a0 = _sn_a(q, x, t, 0)
            if order == 0:
                return np.sum(np.abs(a0), axis=-1)
            return np.sum(np.sign(a0) * _sn_a(q, x, t, order), axis=-1)
        if base in ("suffstat", "matched"):
            xb, s2 = st["m1"], st["s2"]
            a0 = _sn_a(q, xb, theta, 0)
            ak = np.abs(a0) if order == 0 else np.sign(a0) * _sn_a(q, xb, theta, order)
            recip = (-1.0) ** order * math.factorial(order) * theta ** (-order - 1.0)
            if base == "suffstat":
                return ak + 0.5 * q * math.sqrt(s2) * recip
            return 2.0 * xb * ak + q * q * s2 * recip

    if isinstance(m, BivnormRho):
        p, mm = 1.0 + theta, 1.0 - theta
        if base == "simple":
            x, y = sample.values[:, 0], sample.values[:, 1]
            t = _col(theta)
            r1, r2 = x - t * y, t * x - y
            num = np.sum(np.abs(r1) + np.abs(r2), axis=-1)
            g = 0.5 / (1.0 - theta**2)
            if order == 0:
                return num * g
            dnum = np.sum(-y * np.sign(r1) + x * np.sign(r2), axis=-1)
            g1 = theta / (1.0 - theta**2) ** 2
            if order == 1:
                return dnum * g + num * g1
            g2 = (1.0 + 3.0 * theta**2) / (1.0 - theta**2) ** 3
            return 2.0 * dnum * g1 + num * g2
        V1, V2 = st["V1"], st["V2"]
        if base == "suffstat":
            return V1 * _recip_deriv(order, p, 1.0) + V2 * _recip_deriv(order, mm, -1.0)
        if base == "matched":
            if V1 <= 0 or V2 <= 0:
                raise DegenerateSampleError("matched bivnorm Jacobian needs V1 > 0 and V2 > 0")
            return _recip_deriv(order, p, 1.0) / V1 + _recip_deriv(order, mm, -1.0) / V2

    if isinstance(m, GammaShape) and base in ("simple", "invcdf") and order > 0 and theta.ndim == 0:
        # term-wise series derivatives of P(theta, x); avoids differencing the FD Jacobian
        t = float(theta)
        x = sample.values
        w = WEIGHTS[dge.weight_id or "one"](x)
        d1, d2, d3 = m.cdf_theta_derivs(x, t)
        s = np.log(x) - special.digamma(t)
        inv_f = 1.0 / m.pdf_obs(x, t)
        if order == 1:
            g = (d2 - d1 * s) * inv_f
        else:
            g = (d3 - 2.0 * d2 * s + d1 * special.polygamma(1, t) + d1 * s * s) * inv_f
        return np.sum(np.sign(d1 * w) * w * g)

    if base in ("simple", "invcdf") and m.arity == 1 and order == 0:
        w = WEIGHTS[dge.weight_id or "one"]
        return np.sum(_weighted_terms(m, w, sample.values, theta, strict), axis=-1)
    return None


def jacobian_values(dge, sample, theta, strict=False):
    """Vectorized J_n without validation (engine fast path); NaN marks underflow."""
    return dge.scale * _raw_jacobian(dge, sample, theta, 0, strict=strict)


def jacobian(dge, sample, theta):
    """J_n(X, theta) for the given data-generating equation."""
    sample = as_sample(dge.model, sample)
    theta = dge.model.domain.check(theta)
    out = dge.scale * _raw_jacobian(dge, sample, theta, 0, strict=True)
    if np.all(out == 0):
        raise DegenerateSampleError(f"Jacobian {dge.dge_id!r} vanishes for this sample")
    return float(out) if np.ndim(out) == 0 else out


def _kink_roots(dge, sample):
    m, base = dge.model, dge.base
    if isinstance(m, ScaledNormal) and m.q != 2.0:
        ratio = m.q / (m.q - 2.0)
        if base == "simple" or (base == "invcdf" and m.arity == 1):
            return ratio * sample.values
        if base in ("suffstat", "matched"):
            return np.array([ratio * sample.stats["m1"]])
    if isinstance(m, BivnormRho) and base == "simple":
        x, y = sample.values[:, 0], sample.values[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.concatenate([x / y, y / x])
        return r[np.isfinite(r)]
    return np.empty(0)


def kink_points(dge, sample, interval=None):
    """All breakpoints of theta -> J_n(X, theta) strictly inside ``interval``."""
    sample = as_sample(dge.model, sample)
    lo, hi = interval if interval is not None else (dge.model.domain.lower, dge.model.domain.upper)
    r = _kink_roots(dge, sample)
    r = np.unique(r[(r > lo) & (r < hi)])
    return KinkSet(tuple(float(v) for v in r))


def _fd_step(theta, kinks, order):
    h = EPS ** (1.0 / 3.0 if order == 1 else 0.25) * max(1.0, abs(theta))
    ks = np.asarray(kinks.points)
    while ks.size and np.any(np.abs(ks - theta) <= h):
        h *= 0.5
        if h < 1e-12 * max(1.0, abs(theta)):
            near = float(ks[np.argmin(np.abs(ks - theta))])
            raise KinkError(f"theta={theta} sits on a Jacobian kink at {near}", near)
    return h


def _central(f, theta, h, order):
    """Richardson-extrapolated central difference of order 1 or 2."""

    def d(step):
        if order == 1:
            return (f(theta + step) - f(theta - step)) / (2 * step)
        return (f(theta + step) - 2 * f(theta) + f(theta - step)) / step**2

    return (4.0 * d(h / 2.0) - d(h)) / 3.0


def _check_not_kink(theta, kinks, tol):
    for k in kinks:
        if abs(k - theta) <= tol:
            raise KinkError(f"theta={theta} is a Jacobian kink", k)


def jacobian_deriv(dge, sample, theta, order):
    """d^order/dtheta^order J_n(X, theta), order 1 or 2."""
    if order not in (1, 2):
        raise DomainError("Jacobian derivative order must be 1 or 2")
    sample = as_sample(dge.model, sample)
    theta = float(dge.model.domain.check(theta))
    tol = 1e-12 * max(1.0, abs(theta))
    kinks = kink_points(dge, sample, (theta - 1e-6 * max(1.0, abs(theta)), theta + 1e-6 * max(1.0, abs(theta))))
    _check_not_kink(theta, kinks, tol)
    out = _raw_jacobian(dge, sample, theta, order)
    if out is None:
        dom = dge.model.domain
        wide = kink_points(dge, sample, (dom.lower, dom.upper))
        h = _fd_step(theta, wide, order)
        h = min(h, 0.5 * (theta - dom.lower), 0.5 * (dom.upper - theta))
        out = _central(lambda t: float(_raw_jacobian(dge, sample, t, 0, strict=True)), theta, h, order)
    return dge.scale * float(out)


# ---------------------------------------------------------------------------
# limit Jacobians


def _folded(m, s, dm, ds, d2m, d2s, order):
    t = m / s
    phi = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    big = special.ndtr(t)
    if order == 0:
        return 2.0 * s * phi + m * (2.0 * big - 1.0)
    fm, fs = 2.0 * big - 1.0, 2.0 * phi
    if order == 1:
        return fm * dm + fs * ds
    fmm, fms, fss = 2.0 * phi / s, -2.0 * phi * m / s**2, 2.0 * phi * m * m / s**3
    return fmm * dm * dm + 2.0 * fms * dm * ds + fss * ds * ds + fm * d2m + fs * d2s


def _limit_kink(dge, theta0):
    m = dge.model
    if isinstance(m, ScaledNormal) and m.q > 2 and dge.base in ("suffstat", "matched"):
        return m.q * theta0 / (m.q - 2.0)
    return None


def _limit_numeric0(dge, theta0, theta):
    """E_{theta0} |w(X) dF(X,theta)/dtheta / f(X,theta)| by adaptive quadrature."""
    m = dge.model
    w = WEIGHTS[dge.weight_id or "one"]

    def integrand(x):
        with np.errstate(all="ignore"):
            f = m.pdf_obs(x, theta)
            val = abs(w(x) * m.dcdf_dtheta(x, theta) / f) * m.pdf_obs(x, theta0)
        return val if math.isfinite(val) else 0.0

    if isinstance(m, (GammaShape, ScaleExponential)):
        lo, hi = 0.0, math.inf
    else:
        lo, hi = -math.inf, math.inf
    pts = None
    if isinstance(m, GammaShape):
        hi = theta0 + 60.0 * math.sqrt(theta0) + 60.0
        pts = [theta0]
    if pts:
        parts = [integrate.quad(integrand, a, b, limit=200, epsabs=0, epsrel=1e-11) for a, b in ((lo, pts[0]), (pts[0], hi))]
        val, err = sum(p[0] for p in parts), sum(p[1] for p in parts)
    else:
        val, err = integrate.quad(integrand, lo, hi, limit=200, epsabs=0, epsrel=1e-11)
    if not math.isfinite(val) or err > 1e-7 * max(1.0, abs(val)):
        raise NumericError(f"limit Jacobian quadrature failed (value {val}, error {err})")
    return val


def _gamma_limit(dge, theta0, theta, order):
    """E_{theta0}[w(X) d^order/dtheta^order (-dP/dtheta / f)] with series derivatives of P."""
    m = dge.model
    w = WEIGHTS[dge.weight_id or "one"]
    psi0, psi1 = special.digamma(theta), special.polygamma(1, theta)
    lg = special.gammaln(theta)

    def integrand(x):
        xa = np.array([x])
        d1, d2, d3 = m.cdf_theta_derivs(xa, theta)
        lx = math.log(x)
        inv_f = math.exp(-(theta - 1.0) * lx + x + lg)
        u = lx - psi0
        if order == 0:
            g = d1[0]
        elif order == 1:
            g = d2[0] - d1[0] * u
        else:
            g = d3[0] - 2.0 * d2[0] * u + d1[0] * (u * u + psi1)
        f0 = math.exp((theta0 - 1.0) * lx - x - special.gammaln(theta0))
        val = -float(w(xa)[0]) * g * inv_f * f0
        return val if math.isfinite(val) else 0.0

    hi = theta0 + 40.0 * math.sqrt(theta0) + 40.0
    total, err = 0.0, 0.0
    for a, b in ((0.0, theta0), (theta0, hi)):
        v, e = integrate.quad(integrand, a, b, limit=200, epsabs=1e-15, epsrel=1e-13)
        total += v
        err += e
    if not math.isfinite(total) or err > 1e-9 * max(1.0, abs(total)):
        raise NumericError(f"gamma limit Jacobian quadrature failed (value {total}, error {err})")
    return total


def _limit(dge, theta0, theta, order):
    m, base = dge.model, dge.base
    if base == "jeffreys":
        return float(_jeffreys(m, theta, order))
    if isinstance(m, (LocationNormal, UniformLocation)):
        if base in ("simple", "suffstat") or dge.weight_id == "one":
            return 1.0 if order == 0 else 0.0
        return _limit_numeric0(dge, theta0, theta) if order == 0 else 0.0
    if isinstance(m, ScaleExponential):
        w = dge.weight_id
        coef = theta0 if (base == "simple" or w == "one") else 1.0
        return coef * (-1.0) ** order * math.factorial(order) * theta ** (-order - 1.0)
    if isinstance(m, ScaledNormal):
        q = m.q
        mu0 = theta0
        mm = _sn_a(q, mu0, theta, 0)
        dm, d2m = _sn_a(q, mu0, theta, 1), _sn_a(q, mu0, theta, 2)
        sd0 = mu0 ** (0.5 * q)
        if base == "simple" or dge.weight_id == "one":
            s = 0.5 * q * sd0 / theta
            return _folded(mm, s, dm, -s / theta, d2m, 2.0 * s / theta**2, order)
        if base in ("suffstat", "matched"):
            ak = abs(mm) if order == 0 else math.copysign(1.0, mm) * (dm, d2m)[order - 1]
            recip = (-1.0) ** order * math.factorial(order) * theta ** (-order - 1.0)
            if base == "suffstat":
                return ak + 0.5 * q * sd0 * recip
            return 2.0 * mu0 * ak + q * q * mu0**q * recip
    if isinstance(m, BivnormRho):
        r, r0 = theta, theta0
        if base == "simple":
            R = math.sqrt(1.0 - 2.0 * r * r0 + r * r)
            u = 1.0 / (1.0 - r * r)
            c = math.sqrt(2.0 / math.pi)
            if order == 0:
                return c * R * u
            R1 = (r - r0) / R
            u1 = 2.0 * r * u * u
            if order == 1:
                return c * (R1 * u + R * u1)
            R2 = (1.0 - R1 * R1) / R
            u2 = 2.0 * u * u + 8.0 * r * r * u**3
            return c * (R2 * u + 2.0 * R1 * u1 + R * u2)
        if base == "suffstat":
            return (1.0 + r0) * _recip_deriv(order, 1.0 + r, 1.0) + (1.0 - r0) * _recip_deriv(
                order, 1.0 - r, -1.0
            )
        if base == "matched":
            return _recip_deriv(order, 1.0 + r, 1.0) / (1.0 + r0) + _recip_deriv(
                order, 1.0 - r, -1.0
            ) / (1.0 - r0)
    if isinstance(m, GammaShape):
        return _gamma_limit(dge, theta0, theta, order)
    # generic inverse-cdf weight without a closed form
    if order == 0:
        return _limit_numeric0(dge, theta0, theta)
    h = EPS ** (1.0 / 3.0 if order == 1 else 0.25) * max(1.0, abs(theta)) * 100.0
    dom = m.domain
    h = min(h, 0.5 * (theta - dom.lower), 0.5 * (dom.upper - theta))
    return _central(lambda t: _limit_numeric0(dge, theta0, t), theta, h, order)


def limit_jacobian(dge, theta0, theta, order=0):
    """The in-probability limit J(theta0, theta) of J_n (divided by n for sum-type DGEs)."""
    if order not in (0, 1, 2):
        raise DomainError("limit Jacobian order must be 0..2")
    dom = dge.model.domain
    theta0 = float(dom.check(theta0))
    theta = float(dom.check(theta))
    kink = _limit_kink(dge, theta0)
    if kink is not None and abs(theta - kink) <= 1e-12 * max(1.0, abs(kink)):
        raise KinkError(f"limit Jacobian has a kink at theta={kink}", kink)
    return dge.scale * float(_limit(dge, theta0, theta, order))


__all__ = [
    "METHOD_ALIASES",
    "WEIGHTS",
    "DgeSpec",
    "KinkSet",
    "as_dge",
    "resolve_dge_id",
    "jacobian",
    "jacobian_values",
    "jacobian_deriv",
    "limit_jacobian",
    "kink_points",
    "weighted_invcdf_jacobian",
]
