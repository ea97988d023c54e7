"""One-parameter model families: likelihood derivatives, Fisher information, sampling, MLE.

Log-likelihoods follow the per-observation convention L_n = (1/n) sum log f(X_i | theta).
Every model keeps a small dictionary of summary statistics on the ``Sample`` so that
evaluating L_n on a vector of parameter values costs O(#theta) rather than O(n * #theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .exceptions import (
    ConvergenceError,
    DegenerateSampleError,
    DomainError,
    InputError,
    NonRegularModelError,
    NumericError,
)

LOG_2PI = math.log(2.0 * math.pi)

MODEL_IDS = (
    "location-normal",
    "uniform-location",
    "scale-exponential",
    "gamma-shape",
    "scaled-normal",
    "bivnorm-rho",
)


@dataclass(frozen=True)
class ParamDomain:
    """Open interval (lower, upper) of admissible parameter values."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("ParamDomain needs lower < upper")

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (theta > self.lower) & (theta < self.upper)

    def check(self, theta):
        arr = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(arr)) or not np.all(self.contains(arr)):
            raise DomainError(
                f"parameter {theta!r} outside the open domain ({self.lower}, {self.upper})"
            )
        return arr

    def clip(self, lo, hi, delta):
        """Intersect [lo, hi] with [lower + delta, upper - delta]."""
        return max(lo, self.lower + delta), min(hi, self.upper - delta)


@dataclass(frozen=True, eq=False)
class Sample:
    """Validated observations plus model-specific summary statistics."""

    values: np.ndarray
    stats: dict = field(repr=False)

    @property
    def n(self):
        return int(self.values.shape[0])


def _falling(a, k):
    """Falling factorial a (a-1) ... (a-k+1)."""
    out = 1.0
    for j in range(k):
        out *= a - j
    return out


def _dk_log(sign, k, base):
    """k-th derivative of log(1 + sign*t) at t, with base = 1 + sign*t."""
    return sign**k * (-1.0) ** (k - 1) * math.factorial(k - 1) * base ** (-k)


def _dk_recip(sign, k, base):
    """k-th derivative of 1/(1 + sign*t) with base = 1 + sign*t."""
    return sign**k * (-1.0) ** k * math.factorial(k) * base ** (-k - 1)


class Model:
    """Base class for a one-parameter family.

    Subclasses implement the per-family formulas; the public helpers at module
    level (``log_likelihood``, ``mle``, ...) add validation and dispatch.
    """

    model_id = ""
    arity = 1
    domain = ParamDomain(-math.inf, math.inf)
    regular = True

    # -- observations -------------------------------------------------
    def validate(self, values):
        return values

    def summarize(self, values):
        return {}

    def natural_scale(self, sample):
        """A positive length scale used for solver tolerances and grids."""
        return 1.0

    # -- likelihood ---------------------------------------------------
    def loglik(self, sample, theta):
        raise NotImplementedError

    def loglik_deriv(self, sample, theta, order):
        raise NotImplementedError

    def logpdf_deriv_obs(self, x, theta, order):
        """Per-observation order-th theta-derivative of log f(x | theta)."""
        raise NotImplementedError

    # -- information --------------------------------------------------
    def fisher(self, theta, order):
        raise NotImplementedError

    def m3(self, theta, order=0):
        raise NotImplementedError

    # -- data ---------------------------------------------------------
    def sample(self, theta0, n, rng):
        raise NotImplementedError

    def mle_grid(self, sample):
        raise NotImplementedError

    # scalar models with a tractable cdf
    def cdf_obs(self, x, theta):
        raise NotImplementedError

    def pdf_obs(self, x, theta):
        raise NotImplementedError

    def dcdf_dtheta(self, x, theta):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class LocationNormal(Model):
    model_id = "location-normal"

    def validate(self, values):
        return values

    def summarize(self, v):
        return {"m1": float(np.mean(v)), "m2": float(np.mean(v * v))}

    def natural_scale(self, sample):
        return 1.0 + abs(sample.stats["m1"])

    def loglik(self, sample, theta):
        s = sample.stats
        return -0.5 * LOG_2PI - 0.5 * (s["m2"] - 2.0 * theta * s["m1"] + theta * theta)

    def loglik_deriv(self, sample, theta, order):
        theta = np.asarray(theta, dtype=float)
        if order == 1:
            return sample.stats["m1"] - theta
        if order == 2:
            return np.full_like(theta, -1.0)
        return np.zeros_like(theta)

    def logpdf_deriv_obs(self, x, theta, order):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return x - theta
        if order == 2:
            return np.full_like(x, -1.0)
        return np.zeros_like(x)

    def fisher(self, theta, order):
        theta = np.asarray(theta, dtype=float)
        return np.full_like(theta, 1.0 if order == 0 else 0.0)

    def m3(self, theta, order=0):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def sample(self, theta0, n, rng):
        return theta0 + rng.standard_normal(n)

    def mle_grid(self, sample):
        m1 = sample.stats["m1"]
        half = 10.0 * (1.0 + abs(m1))
        return np.linspace(m1 - half, m1 + half, 512)

    def cdf_obs(self, x, theta):
        return special.ndtr(x - theta)

    def pdf_obs(self, x, theta):
        return np.exp(-0.5 * (x - theta) ** 2 - 0.5 * LOG_2PI)

    def dcdf_dtheta(self, x, theta):
        return -self.pdf_obs(x, theta)


class UniformLocation(Model):
    """U(theta, theta + 1); non-regular, used for exactness checks only."""

    model_id = "uniform-location"
    regular = False

    def summarize(self, v):
        return {"min": float(np.min(v)), "max": float(np.max(v))}

    def natural_scale(self, sample):
        return 1.0 + abs(sample.stats["min"])

    def support(self, sample):
        """The set of theta with positive likelihood: [max - 1, min]."""
        return sample.stats["max"] - 1.0, sample.stats["min"]

    def loglik(self, sample, theta):
        lo, hi = self.support(sample)
        theta = np.asarray(theta, dtype=float)
        return np.where((theta >= lo) & (theta <= hi), 0.0, -np.inf)

    def _nonregular(self, *args, **kwargs):
        raise NonRegularModelError(
            "uniform-location has parameter-dependent support; derivatives are not defined"
        )

    loglik_deriv = logpdf_deriv_obs = fisher = m3 = _nonregular

    def sample(self, theta0, n, rng):
        return theta0 + rng.random(n)

    def cdf_obs(self, x, theta):
        return np.clip(x - theta, 0.0, 1.0)

    def pdf_obs(self, x, theta):
        d = np.asarray(x - theta, dtype=float)
        return ((d >= 0) & (d <= 1)).astype(float)

    def dcdf_dtheta(self, x, theta):
        return -self.pdf_obs(x, theta)


class ScaleExponential(Model):
    """Exponential with mean theta."""

    model_id = "scale-exponential"
    domain = ParamDomain(0.0, math.inf)

    def validate(self, values):
        if np.any(values <= 0):
            raise InputError("scale-exponential observations must be positive")
        return values

    def summarize(self, v):
        return {"m1": float(np.mean(v))}

    def natural_scale(self, sample):
        return sample.stats["m1"]

    def loglik(self, sample, theta):
        theta = np.asarray(theta, dtype=float)
        return -np.log(theta) - sample.stats["m1"] / theta

    def loglik_deriv(self, sample, theta, order):
        theta = np.asarray(theta, dtype=float)
        k = order
        return _dk_log_pos(k, theta) - sample.stats["m1"] * (-1.0) ** k * math.factorial(
            k
        ) * theta ** (-k - 1)

    def logpdf_deriv_obs(self, x, theta, order):
        k = order
        return _dk_log_pos(k, theta) - np.asarray(x) * (-1.0) ** k * math.factorial(
            k
        ) * theta ** (-k - 1.0)

    def fisher(self, theta, order):
        theta = np.asarray(theta, dtype=float)
        return (1.0, -2.0, 6.0)[order] * theta ** (-2.0 - order)

    def m3(self, theta, order=0):
        theta = np.asarray(theta, dtype=float)
        return (4.0 * theta**-3.0) if order == 0 else (-12.0 * theta**-4.0)

    def sample(self, theta0, n, rng):
        return rng.exponential(theta0, n)

    def mle_grid(self, sample):
        s = sample.stats["m1"]
        return np.geomspace(s * 1e-6, s * 1e6, 512)

    def cdf_obs(self, x, theta):
        return -np.expm1(-x / theta)

    def pdf_obs(self, x, theta):
        return np.exp(-x / theta) / theta

    def dcdf_dtheta(self, x, theta):
        return -x / theta**2 * np.exp(-x / theta)


def _dk_log_pos(k, theta):
    """k-th derivative of -log(theta)."""
    return -((-1.0) ** (k - 1)) * math.factorial(k - 1) * np.asarray(theta, dtype=float) ** (-k)


class GammaShape(Model):
    """Gamma(theta, 1): unit scale, unknown shape."""

    model_id = "gamma-shape"
    domain = ParamDomain(0.0, math.inf)

    def validate(self, values):
        if np.any(values <= 0):
            raise InputError("gamma-shape observations must be positive")
        return values

    def summarize(self, v):
        return {"m1": float(np.mean(v)), "mlog": float(np.mean(np.log(v)))}

    def natural_scale(self, sample):
        return max(sample.stats["m1"], 1e-3)

    def loglik(self, sample, theta):
        theta = np.asarray(theta, dtype=float)
        s = sample.stats
        return -s["m1"] + (theta - 1.0) * s["mlog"] - special.gammaln(theta)

    def loglik_deriv(self, sample, theta, order):
        theta = np.asarray(theta, dtype=float)
        if order == 1:
            return sample.stats["mlog"] - special.digamma(theta)
        return -special.polygamma(order - 1, theta)

    def logpdf_deriv_obs(self, x, theta, order):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return np.log(x) - special.digamma(theta)
        return np.full_like(x, -special.polygamma(order - 1, theta))

    def fisher(self, theta, order):
        return special.polygamma(order + 1, np.asarray(theta, dtype=float))

    def m3(self, theta, order=0):
        return -special.polygamma(order + 2, np.asarray(theta, dtype=float))

    def sample(self, theta0, n, rng):
        return rng.gamma(theta0, 1.0, n)

    def mle_grid(self, sample):
        s = sample.stats["m1"]
        return np.geomspace(min(s, 1.0) * 1e-6, max(s, 1.0) * 1e6, 512)

    def cdf_obs(self, x, theta):
        return special.gammainc(theta, x)

    def pdf_obs(self, x, theta):
        return np.exp((theta - 1.0) * np.log(x) - x - special.gammaln(theta))

    def dcdf_dtheta(self, x, theta):
        """Central differences of the regularized incomplete gamma, Richardson-extrapolated."""
        theta = np.asarray(theta, dtype=float)
        h = 1e-5 * np.maximum(1.0, theta)
        h = np.minimum(h, 0.25 * theta)

        # differentiate whichever of P and Q = 1 - P is small, to keep relative accuracy in the tails
        theta, x = np.broadcast_arrays(theta, np.asarray(x, dtype=float))
        h = np.broadcast_to(h, theta.shape)
        upper = special.gammainc(theta, x) > 0.5
        sign = np.where(upper, -1.0, 1.0)

        def F(a):
            out = np.empty(a.shape)
            out[upper] = special.gammaincc(a[upper], x[upper])
            out[~upper] = special.gammainc(a[~upper], x[~upper])
            return out

        def d(step):
            return sign * (F(theta + step) - F(theta - step)) / (2.0 * step)

        return (4.0 * d(h / 2.0) - d(h)) / 3.0

    def cdf_theta_derivs(self, x, theta):
        """d^k/dtheta^k of the regularized incomplete gamma P(theta, x), k = 1, 2, 3.

        Uses P(a, x) = sum_k exp((a + k) log x - x - lgamma(a + k + 1)) and
        differentiates the series term by term.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a = float(theta)
        kmax = int(np.ceil(np.max(x) + 12.0 * np.sqrt(np.max(x)) + 40.0))
        k = np.arange(kmax)[:, None]
        lx = np.log(x)[None, :]
        t = np.exp((a + k) * lx - x[None, :] - special.gammaln(a + k + 1.0))
        u = lx - special.digamma(a + k + 1.0)
        p1 = special.polygamma(1, a + k + 1.0)
        p2 = special.polygamma(2, a + k + 1.0)
        d1 = np.sum(t * u, axis=0)
        d2 = np.sum(t * (u * u - p1), axis=0)
        d3 = np.sum(t * (u**3 - 3.0 * u * p1 - p2), axis=0)
        # near P = 1 the series cancels badly; integrate the upper tail of Q = 1 - P instead
        for i in np.flatnonzero(special.gammainc(a, x) > 0.5):
            d1[i], d2[i], d3[i] = self._upper_tail_derivs(x[i], a)
        return d1, d2, d3

    @staticmethod
    def _upper_tail_derivs(x, a):
        psi, p1, p2 = special.digamma(a), special.polygamma(1, a), special.polygamma(2, a)
        lg = special.gammaln(a)

        def g(s, k):
            L = math.log(s) - psi
            poly = (L, L * L - p1, L**3 - 3.0 * L * p1 - p2)[k]
            return math.exp((a - 1.0) * math.log(s) - s - lg) * poly

        out = []
        for k in range(3):
            val = integrate.quad(g, x, math.inf, args=(k,), epsabs=0.0, epsrel=1e-13, limit=200)[0]
            out.append(-val)
        return out


class ScaledNormal(Model):
    """N(mu, mu**q) with fixed q > 0 and mu > 0."""

    model_id = "scaled-normal"
    domain = ParamDomain(0.0, math.inf)

    def __init__(self, q):
        q = float(q)
        if not (q > 0 and math.isfinite(q)):
            raise DomainError(f"scaled-normal needs q > 0, got {q}")
        self.q = q

    def __repr__(self):
        return f"ScaledNormal(q={self.q:g})"

    def summarize(self, v):
        n = v.shape[0]
        m1 = float(np.mean(v))
        var = float(np.var(v, ddof=1)) if n > 1 else 0.0
        return {"m1": m1, "m2": float(np.mean(v * v)), "s2": var}

    def natural_scale(self, sample):
        return max(math.sqrt(sample.stats["m2"]), 1e-3)

    def _parts(self, m1, m2, theta, order):
        q = self.q
        theta = np.asarray(theta, dtype=float)
        g = (m2 - 2.0 * theta * m1 + theta * theta, -2.0 * m1 + 2.0 * theta, 2.0)
        total = -0.5 * q * (-1.0) ** (order - 1) * math.factorial(order - 1) * theta ** (-order)
        acc = 0.0
        for j in range(min(order, 2) + 1):
            acc = acc + math.comb(order, j) * g[j] * _falling(-q, order - j) * theta ** (
                -q - order + j
            )
        return total - 0.5 * acc

    def loglik(self, sample, theta):
        theta = np.asarray(theta, dtype=float)
        s = sample.stats
        q = self.q
        quad = s["m2"] - 2.0 * theta * s["m1"] + theta * theta
        return -0.5 * LOG_2PI - 0.5 * q * np.log(theta) - 0.5 * quad * theta ** (-q)

    def loglik_deriv(self, sample, theta, order):
        return self._parts(sample.stats["m1"], sample.stats["m2"], theta, order)

    def logpdf_deriv_obs(self, x, theta, order):
        x = np.asarray(x, dtype=float)
        return self._parts(x, x * x, theta, order)

    def fisher(self, theta, order):
        q = self.q
        t = np.asarray(theta, dtype=float)
        if order == 0:
            return q * q / (2.0 * t * t) + t ** (-q)
        if order == 1:
            return -q * q * t**-3.0 - q * t ** (-q - 1.0)
        return 3.0 * q * q * t**-4.0 + q * (q + 1.0) * t ** (-q - 2.0)

    def m3(self, theta, order=0):
        q = self.q
        t = np.asarray(theta, dtype=float)
        cubic = q * (q + 1.0) * (q + 2.0)
        if order == 0:
            return -q * t**-3.0 + 0.5 * cubic * t**-3.0 + 3.0 * q * t ** (-q - 1.0)
        return 3.0 * q * t**-4.0 - 1.5 * cubic * t**-4.0 - 3.0 * q * (q + 1.0) * t ** (-q - 2.0)

    def sample(self, theta0, n, rng):
        return theta0 + theta0 ** (0.5 * self.q) * rng.standard_normal(n)

    def mle_grid(self, sample):
        s = self.natural_scale(sample)
        return np.geomspace(s * 1e-6, s * 1e4, 512)

    def _sd(self, theta):
        return np.asarray(theta, dtype=float) ** (0.5 * self.q)

    def cdf_obs(self, x, theta):
        return special.ndtr((x - theta) / self._sd(theta))

    def pdf_obs(self, x, theta):
        sd = self._sd(theta)
        z = (x - theta) / sd
        return np.exp(-0.5 * z * z - 0.5 * LOG_2PI) / sd

    def dcdf_dtheta(self, x, theta):
        # dF/dmu = phi(z) * dz/dmu with z = (x - mu) mu^{-q/2}
        sd = self._sd(theta)
        z = (x - theta) / sd
        dz = -1.0 / sd - 0.5 * self.q * z / theta
        return np.exp(-0.5 * z * z - 0.5 * LOG_2PI) * dz


class BivnormRho(Model):
    """Standard bivariate normal with unknown correlation rho."""

    model_id = "bivnorm-rho"
    arity = 2
    domain = ParamDomain(-1.0, 1.0)

    def validate(self, values):
        if values.ndim != 2 or values.shape[1] != 2:
            raise InputError("bivnorm-rho observations must be pairs (shape (n, 2))")
        return values

    def summarize(self, v):
        x, y = v[:, 0], v[:, 1]
        return {
            "V1": float(np.mean((x + y) ** 2) / 2.0),
            "V2": float(np.mean((x - y) ** 2) / 2.0),
        }

    def natural_scale(self, sample):
        return 1.0

    def _ll(self, V1, V2, theta, order):
        r = np.asarray(theta, dtype=float)
        p, m = 1.0 + r, 1.0 - r
        if order == 0:
            return -LOG_2PI - 0.5 * np.log(p) - 0.5 * np.log(m) - 0.5 * (V1 / p + V2 / m)
        k = order
        return (
            -0.5 * _dk_log(1.0, k, p)
            - 0.5 * _dk_log(-1.0, k, m)
            - 0.5 * (V1 * _dk_recip(1.0, k, p) + V2 * _dk_recip(-1.0, k, m))
        )

    def loglik(self, sample, theta):
        return self._ll(sample.stats["V1"], sample.stats["V2"], theta, 0)

    def loglik_deriv(self, sample, theta, order):
        return self._ll(sample.stats["V1"], sample.stats["V2"], theta, order)

    def logpdf_deriv_obs(self, x, theta, order):
        x = np.asarray(x, dtype=float)
        u = (x[..., 0] + x[..., 1]) ** 2 / 2.0
        v = (x[..., 0] - x[..., 1]) ** 2 / 2.0
        return self._ll(u, v, theta, order)

    def fisher(self, theta, order):
        r = np.asarray(theta, dtype=float)
        p, m = 1.0 + r, 1.0 - r
        if order == 0:
            return 0.5 * (p**-2.0 + m**-2.0)
        if order == 1:
            return -(p**-3.0) + m**-3.0
        return 3.0 * p**-4.0 + 3.0 * m**-4.0

    def m3(self, theta, order=0):
        r = np.asarray(theta, dtype=float)
        p, m = 1.0 + r, 1.0 - r
        if order == 0:
            return 2.0 * (p**-3.0 - m**-3.0)
        return -6.0 * (p**-4.0 + m**-4.0)

    def sample(self, theta0, n, rng):
        z = rng.standard_normal((n, 2))
        y = theta0 * z[:, 0] + math.sqrt(1.0 - theta0 * theta0) * z[:, 1]
        return np.column_stack([z[:, 0], y])

    def mle_grid(self, sample):
        return np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, 512)


_SIMPLE = {
    "location-normal": LocationNormal,
    "uniform-location": UniformLocation,
    "scale-exponential": ScaleExponential,
    "gamma-shape": GammaShape,
    "bivnorm-rho": BivnormRho,
}


@lru_cache(maxsize=None)
def get_model(model_id, q=None):
    """Return the (cached, immutable) model object for an id."""
    if model_id == "scaled-normal":
        if q is None:
            raise DomainError("scaled-normal requires the hyperparameter q")
        return ScaledNormal(q)
    try:
        return _SIMPLE[model_id]()
    except KeyError:
        raise DomainError(
            f"unknown model id {model_id!r}; expected one of {', '.join(MODEL_IDS)}"
        ) from None


def as_model(model, q=None):
    return model if isinstance(model, Model) else get_model(model, None if q is None else float(q))


def as_sample(model, observations):
    """Validate raw observations and attach summary statistics."""
    if isinstance(observations, Sample):
        return observations
    model = as_model(model)
    values = np.array(observations, dtype=float)
    if model.arity == 1:
        if values.ndim == 2 and values.shape[1] == 1:
            values = values[:, 0]
        values = np.atleast_1d(values)
        if values.ndim != 1:
            raise InputError("scalar model expects a one-dimensional sequence of observations")
    else:
        if values.ndim == 1 and values.shape[0] == 2:
            values = values[None, :]
    if values.shape[0] < 1:
        raise InputError("sample must contain at least one observation")
    if not np.all(np.isfinite(values)):
        raise InputError("observations must be finite")
    values = model.validate(values)
    values.setflags(write=False)
    return Sample(values, model.summarize(values))


def log_likelihood(model, sample, theta):
    """(1/n) sum_i log f(X_i | theta)."""
    model = as_model(model)
    sample = as_sample(model, sample)
    theta = model.domain.check(theta)
    out = model.loglik(sample, theta)
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood_deriv(model, sample, theta, order):
    """Analytic order-th theta-derivative of L_n (order 1..4)."""
    if order not in (1, 2, 3, 4):
        raise DomainError(f"derivative order must be 1..4, got {order}")
    model = as_model(model)
    sample = as_sample(model, sample)
    theta = model.domain.check(theta)
    out = model.loglik_deriv(sample, theta, order)
    return float(out) if np.ndim(out) == 0 else out


def fisher_info(model, theta, order=0):
    """I(theta) and its first two derivatives."""
    if order not in (0, 1, 2):
        raise DomainError(f"Fisher information order must be 0..2, got {order}")
    model = as_model(model)
    theta = model.domain.check(theta)
    out = model.fisher(theta, order)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=8)
def _hermgauss(k):
    x, w = np.polynomial.hermite_e.hermegauss(k)
    return x, w / math.sqrt(2.0 * math.pi)


def m3_quadrature(model, theta, nodes=128):
    """E_theta[d^3/dtheta^3 log f] by Gauss-Hermite quadrature in the standardized variable.

    Valid for the normal-based models; the declared error is the difference against a
    half-size rule.
    """
    model = as_model(model)
    theta = float(model.domain.check(theta))

    def rule(k):
        z, w = _hermgauss(k)
        if isinstance(model, LocationNormal):
            x = theta + z
        elif isinstance(model, ScaledNormal):
            x = theta + theta ** (0.5 * model.q) * z
        elif isinstance(model, BivnormRho):
            # X = Z1, Y = rho Z1 + sqrt(1-rho^2) Z2 on a tensor grid
            z1, z2 = np.meshgrid(z, z, indexing="ij")
            w = np.outer(w, w).ravel()
            pts = np.stack([z1.ravel(), theta * z1.ravel() + math.sqrt(1 - theta**2) * z2.ravel()], -1)
            return float(np.dot(w, model.logpdf_deriv_obs(pts, theta, 3)))
        else:
            raise NumericError(f"no Gauss-Hermite rule for {model.model_id}")
        return float(np.dot(w, model.logpdf_deriv_obs(x, theta, 3)))

    full, half = rule(nodes), rule(nodes // 2)
    if abs(full - half) > 1e-8 * max(1.0, abs(full)):
        raise NumericError(f"Gauss-Hermite m3 did not converge ({full} vs {half})")
    return full


def m3(model, theta, order=0):
    """E_theta[third theta-derivative of log f(X, theta)] (or its theta-derivative)."""
    if order not in (0, 1):
        raise DomainError("m3 order must be 0 or 1")
    model = as_model(model)
    theta = model.domain.check(theta)
    out = model.m3(theta, order)
    return float(out) if np.ndim(out) == 0 else out


def sample_data(model, theta0, n, stream):
    """Draw n iid observations from f(. | theta0) using the given numpy Generator."""
    model = as_model(model)
    theta0 = float(model.domain.check(theta0))
    if int(n) < 1:
        raise DomainError("n must be at least 1")
    return as_sample(model, model.sample(theta0, int(n), stream))


@dataclass(frozen=True)
class MleResult:
    theta_hat: float
    c: float
    l3: float
    l4: float
    converged: bool
    iterations: int


def _rtsafe(score, dscore, a, b, x0, xtol, maxiter=100):
    """Newton iteration kept inside a sign-change bracket [a, b] (score(a) > 0 > score(b))."""
    x = x0
    it = 0
    for it in range(1, maxiter + 1):
        f, df = score(x), dscore(x)
        if f > 0:
            a = x
        elif f < 0:
            b = x
        else:
            return x, it
        step = -f / df if df < 0 else math.nan
        new = x + step
        if not (a < new < b) or not math.isfinite(new):
            new = 0.5 * (a + b)
        if abs(new - x) <= xtol or b - a <= xtol:
            return new, it
        x = new
    return x, it


def mle(model, sample):
    """Maximum likelihood estimate: 512-point scan, then safeguarded Newton on the score."""
    model = as_model(model)
    sample = as_sample(model, sample)
    if not model.regular:
        raise NonRegularModelError(f"{model.model_id} has no regular MLE")
    if sample.n < 2:
        raise DegenerateSampleError("MLE needs n >= 2")
    if isinstance(model, ScaledNormal) and sample.stats["m2"] == 0.0:
        raise DegenerateSampleError("all observations are zero")
    if isinstance(model, GammaShape) and np.ptp(sample.values) == 0.0:
        raise DegenerateSampleError("gamma-shape MLE needs distinct observations")

    grid = model.mle_grid(sample)
    with np.errstate(all="ignore"):
        ll = model.loglik(sample, grid)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    k = int(np.argmax(ll))
    if k == 0 or k == grid.size - 1:
        raise ConvergenceError(
            "likelihood is maximized at the edge of the search grid",
            {"grid_argmax": float(grid[k]), "grid": (float(grid[0]), float(grid[-1]))},
        )
    a, b = float(grid[k - 1]), float(grid[k + 1])

    def score(t):
        return float(model.loglik_deriv(sample, t, 1))

    def dscore(t):
        return float(model.loglik_deriv(sample, t, 2))

    diag = {"grid_argmax": float(grid[k]), "bracket": (float(a), float(b))}
    if not (score(a) > 0 > score(b)):
        raise ConvergenceError("no interior maximum of the likelihood was bracketed", diag)
    xtol = 4 * np.finfo(float).eps * max(abs(grid[k]), model.natural_scale(sample))
    theta, its = _rtsafe(score, dscore, a, b, float(grid[k]), xtol)
    c = -dscore(theta)
    sc = score(theta)
    converged = c > 0 and abs(sc) <= 1e-8 * max(1.0, c * max(abs(theta), 1.0))
    if not converged:
        diag.update(theta=theta, score=sc, c=c)
        raise ConvergenceError("MLE refinement did not converge", diag)
    l3 = float(model.loglik_deriv(sample, theta, 3))
    l4 = float(model.loglik_deriv(sample, theta, 4))
    return MleResult(float(theta), float(c), l3, l4, True, its)


__all__ = [
    "MODEL_IDS",
    "ParamDomain",
    "Sample",
    "Model",
    "MleResult",
    "get_model",
    "as_model",
    "as_sample",
    "log_likelihood",
    "log_likelihood_deriv",
    "fisher_info",
    "m3",
    "m3_quadrature",
    "sample_data",
    "mle",
]
