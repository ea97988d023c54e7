"""Weighted-likelihood density engine.

The fiducial density is proportional to prod_i f(X_i | theta) * J_n(X, theta).  It is
integrated in log space (shifted by the peak log-height) with vectorized adaptive
Gauss-Kronrod (7/15) panels whose boundaries always include the Jacobian kinks and the
MLE.  Quantiles are found by a bracketed Newton iteration on the cumulative integral,
evaluated for all requested probabilities at once.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dge import DgeSpec, as_dge, jacobian_values, kink_points
from .exceptions import BuildError, DomainError
from .models import as_model, as_sample, mle as _mle

# Gauss-Kronrod 15-point nodes (positive half) and weights, G7 weights on the odd nodes.
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
G_WEIGHTS = np.zeros(15)
G_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(15)

LOG_TAIL = math.log(1e-12)


@dataclass(frozen=True)
class DensityOptions:
    """Numerical settings for ``build_density``.

    ``tol`` is the relative accuracy requested of the normalizing integral; panel
    refinement stops once the summed Kronrod error estimates fall below tol * Z.
    """

    tol: float = 1e-11
    tail: float = 1e-12
    initial_halfwidth: float = 8.0
    max_doublings: int = 60
    max_rounds: int = 60
    max_panels: int = 20000


@dataclass(frozen=True)
class QuantileResult:
    p: float
    theta_p: float
    cdf_error: float


def jeffreys_weight(model):
    """The Jeffreys prior sqrt(I(theta)) packaged as a weight (method BJ)."""
    return DgeSpec(as_model(model), "jeffreys")


def _resolve_weight(model, weight):
    if weight is None:
        raise DomainError("a weight (DGE id, DgeSpec or 'jeffreys') is required")
    return as_dge(model, weight)


@dataclass(frozen=True, eq=False)
class FiducialDensity:
    """Normalized fiducial density on a bracket, stored as integrated panels.

    Build through ``build_density``; the object is immutable afterwards.
    """

    model: object
    weight: DgeSpec
    sample: object
    mle: object
    bracket: tuple
    breakpoints: tuple
    log_shift: float
    peak_theta: float
    edges: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    cum: np.ndarray = field(repr=False)
    total: float = 0.0
    tail_mass_bound: float = 0.0
    warnings: tuple = ()

    # -- evaluation ---------------------------------------------------
    @property
    def log_normalizer(self):
        """log of the integral of likelihood times weight over the bracket."""
        return self.log_shift + math.log(self.total)

    def _log_integrand(self, theta):
        return _log_integrand(self.model, self.weight, self.sample, theta)

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        inside = self.model.domain.contains(theta)
        safe = np.where(inside, theta, self.peak_theta)
        out = np.where(inside, self._log_integrand(safe) - self.log_normalizer, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def _partial(self, a, x):
        """Integral of the shifted integrand from a to x (arrays of equal shape)."""
        a = np.asarray(a, dtype=float)
        x = np.asarray(x, dtype=float)
        half = 0.5 * (x - a)
        nodes = (a + half)[..., None] + half[..., None] * GL_NODES
        vals = np.exp(self._log_integrand(nodes.ravel()) - self.log_shift).reshape(nodes.shape)
        return half * (vals @ GL_WEIGHTS)

    def cdf(self, theta):
        """Cumulative probability from the bracket's lower end, clamped to [0, 1]."""
        theta = np.asarray(theta, dtype=float)
        flat = np.atleast_1d(theta).ravel()
        out = np.empty_like(flat)
        lo_mask = flat <= self.edges[0]
        hi_mask = flat >= self.edges[-1]
        out[lo_mask] = 0.0
        out[hi_mask] = 1.0
        mid = ~(lo_mask | hi_mask)
        if np.any(mid):
            t = flat[mid]
            k = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.masses.size - 1)
            part = self._partial(self.edges[k], t)
            out[mid] = np.clip((self.cum[k] + part) / self.total, 0.0, 1.0)
        out = out.reshape(theta.shape)
        return float(out) if out.ndim == 0 else out

    def quantiles(self, ps):
        """Vector of quantiles for probabilities ``ps`` (each in (0, 1))."""
        ps = np.asarray(ps, dtype=float)
        if np.any(~((ps > 0) & (ps < 1))):
            raise DomainError("probabilities must lie strictly inside (0, 1)")
        theta, _ = self._solve(ps.ravel())
        return theta.reshape(ps.shape)

    def quantile(self, p):
        p = float(p)
        if not 0.0 < p < 1.0:
            raise DomainError(f"probability {p} outside (0, 1)")
        theta, err = self._solve(np.array([p]))
        return QuantileResult(p, float(theta[0]), float(err[0]))

    def _solve(self, ps):
        target = ps * self.total
        k = np.clip(np.searchsorted(self.cum, target, side="right") - 1, 0, self.masses.size - 1)
        a = self.edges[k].copy()
        b = self.edges[k + 1].copy()
        goal = target - self.cum[k]
        mass = np.where(self.masses[k] > 0, self.masses[k], 1.0)
        x = a + (b - a) * np.clip(goal / mass, 0.0, 1.0)
        lo, hi = a.copy(), b.copy()
        panel_a = a
        err = np.full(ps.shape, np.inf)
        active = np.ones(ps.shape, dtype=bool)
        atol = 1e-13 * self.total
        for _ in range(80):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            xa = x[idx]
            g = self._partial(panel_a[idx], xa) - goal[idx]
            dens = np.exp(self._log_integrand(xa) - self.log_shift)
            err[idx] = np.abs(g) / self.total
            pos = g > 0
            hi[idx] = np.where(pos, xa, hi[idx])
            lo[idx] = np.where(pos, lo[idx], xa)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = xa - g / dens
            bad = ~np.isfinite(newton) | (newton <= lo[idx]) | (newton >= hi[idx])
            new = np.where(bad, 0.5 * (lo[idx] + hi[idx]), newton)
            width = hi[idx] - lo[idx]
            scale = np.maximum(np.abs(xa), 1e-300)
            done = (np.abs(g) <= atol) | (np.abs(new - xa) <= 4e-16 * scale) | (width <= 4e-16 * scale)
            x[idx] = np.where(done, xa, new)
            active[idx[done]] = False
        return x, err

    def equal_tailed_interval(self, level):
        """(lo, hi, length) for the equal-tailed interval at the given level."""
        level = float(level)
        if not 0.0 < level < 1.0:
            raise DomainError(f"level {level} outside (0, 1)")
        lo, hi = self.quantiles([(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0])
        return float(lo), float(hi), float(hi - lo)

    def median(self):
        return self.quantile(0.5).theta_p

    def mass(self):
        """Normalization check: the integral of pdf over the bracket (1 by construction)."""
        return float(np.sum(self.masses) / self.total)

    def grid(self, points=1024):
        theta = np.linspace(self.bracket[0], self.bracket[1], points)
        return theta, self.pdf(theta), self.cdf(theta)

    def to_csv(self, target=None, points=1024):
        """Write ``theta,pdf,cdf`` on a uniform bracket grid; returns the text if target is None."""
        theta, pdf, cdf = self.grid(points)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "pdf", "cdf"])
        for row in zip(theta, pdf, cdf):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def _log_integrand(model, weight, sample, theta):
    theta = np.asarray(theta, dtype=float)
    with np.errstate(all="ignore"):
        ll = sample.n * model.loglik(sample, theta)
        j = jacobian_values(weight, sample, theta)
        lj = np.where(np.isfinite(j) & (j > 0), np.log(np.where(j > 0, j, 1.0)), -np.inf)
    out = ll + lj
    return np.where(np.isnan(out), -np.inf, out)


def _gk(model, weight, sample, a, b, shift):
    """Kronrod and QUADPACK-style error estimates for each panel [a_i, b_i]."""
    half = 0.5 * (b - a)
    nodes = (a + half)[:, None] + half[:, None] * GK_NODES
    logv = _log_integrand(model, weight, sample, nodes.ravel()).reshape(nodes.shape)
    vmax = float(np.max(logv)) if logv.size else -np.inf
    vals = np.exp(logv - shift)
    k = half * (vals @ GK_WEIGHTS)
    g = half * (vals @ G_WEIGHTS)
    mean = k / np.where(half != 0, 2.0 * half, 1.0)
    resasc = half * (np.abs(vals - mean[:, None]) @ GK_WEIGHTS)
    diff = np.abs(k - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(resasc > 0, resasc * np.minimum(1.0, (200.0 * diff / resasc) ** 1.5), diff)
    err = np.maximum(err, 50.0 * np.finfo(float).eps * np.abs(k))
    return k, err, vmax


def _bracket(model, weight, sample, center, sd, opts, peak):
    """Expand center +- h*2^k until the tail test passes; returns (end, boundaries, hit_edge, tail)."""
    dom = model.domain
    h = opts.initial_halfwidth * sd
    out = []
    log_tail = math.log(opts.tail)
    for sign, edge in ((-1.0, dom.lower), (1.0, dom.upper)):
        steps = h * 2.0 ** np.arange(-3, opts.max_doublings)
        cand = center + sign * steps
        limit = edge - sign * 1e-12 * max(1.0, abs(edge)) if math.isfinite(edge) else None
        if limit is not None:
            inside = sign * (limit - cand) > 0
            cand = np.append(cand[inside], limit)
        logv = _log_integrand(model, weight, sample, cand) - peak
        dist = np.abs(cand - center) / sd
        score = logv + np.log(np.maximum(dist, 1.0))
        # only positions at least h away count as bracket ends
        ok = (score < log_tail) & (np.abs(cand - center) >= h * (1 - 1e-12))
        if np.any(ok):
            j = int(np.argmax(ok))
            hit_edge = limit is not None and j == cand.size - 1
        elif limit is not None:
            j = cand.size - 1
            hit_edge = True
        else:
            raise BuildError("integrand does not decay; weight is not integrable on the domain")
        tail = float(np.exp(logv[j]) * max(abs(cand[j] - center), sd))
        out.append((float(cand[j]), cand[: j + 1], hit_edge, tail, float(score[j])))
    return out


def _refine(model, weight, sample, edges, shift, opts):
    a, b = edges[:-1], edges[1:]
    k, err, vmax = _gk(model, weight, sample, a, b, shift)
    for _ in range(opts.max_rounds):
        total = float(np.sum(k))
        if not (total > 0 and math.isfinite(total)):
            raise BuildError("fiducial weight integrates to zero or a non-finite value")
        if vmax > shift + 1.0:
            # the true peak lies off the MLE (heavy Jacobian); restart with the larger shift
            return None, vmax
        budget = opts.tol * total
        if float(np.sum(err)) <= budget:
            return (a, b, k, err), shift
        bad = err > budget / max(a.size, 1) * 0.5
        if a.size + int(np.sum(bad)) > opts.max_panels:
            raise BuildError("adaptive quadrature exceeded the panel limit")
        mid = 0.5 * (a[bad] + b[bad])
        na = np.concatenate([a[bad], mid])
        nb = np.concatenate([mid, b[bad]])
        kk, ee, vm = _gk(model, weight, sample, na, nb, shift)
        vmax = max(vmax, vm)
        a = np.concatenate([a[~bad], na])
        b = np.concatenate([b[~bad], nb])
        k = np.concatenate([k[~bad], kk])
        err = np.concatenate([err[~bad], ee])
        order = np.argsort(a, kind="stable")
        a, b, k, err = a[order], b[order], k[order], err[order]
    raise BuildError("adaptive quadrature did not reach the requested tolerance")


def build_density(model, weight, sample, opts=None):
    """Construct the normalized fiducial density for ``sample`` under ``weight``.

    ``weight`` is a DgeSpec, a DGE id / method alias (``"FS"``, ``"matched"``, ...)
    or ``"jeffreys"``.
    """
    model = as_model(model)
    weight = _resolve_weight(model, weight)
    sample = as_sample(model, sample)
    opts = opts or DensityOptions()
    warnings = []

    if not model.regular:
        lo, hi = model.support(sample)
        if not hi > lo:
            raise BuildError("empty likelihood support")
        fit = None
        center = 0.5 * (lo + hi)
        edges = np.array([lo, hi])
        kinks = ()
        shift = float(_log_integrand(model, weight, sample, np.array([center]))[0])
        tail_bound = 0.0
    else:
        fit = _mle(model, sample)
        center = fit.theta_hat
        sd = 1.0 / math.sqrt(sample.n * fit.c)
        shift = float(_log_integrand(model, weight, sample, np.array([center]))[0])
        if not math.isfinite(shift):
            raise BuildError("weight vanishes at the MLE")
        (lo, lo_pts, lo_edge, lo_tail, _), (hi, hi_pts, hi_edge, hi_tail, _) = _bracket(
            model, weight, sample, center, sd, opts, shift
        )
        if lo_edge and hi_edge and lo_tail > opts.tail and hi_tail > opts.tail:
            warnings.append("bracket reached both domain edges with non-negligible tails")
        tail_bound = lo_tail + hi_tail
        kinks = kink_points(weight, sample, (lo, hi)).points
        edges = np.unique(np.concatenate([lo_pts, hi_pts, [center], kinks]))
        edges = edges[(edges >= lo) & (edges <= hi)]

    for _ in range(4):
        res, new_shift = _refine(model, weight, sample, edges, shift, opts)
        if res is not None:
            break
        shift = new_shift
    else:
        raise BuildError("could not stabilize the peak shift")
    a, b, masses, _ = res
    edges_out = np.append(a, b[-1])
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    total = float(cum[-1])
    rel_tail = tail_bound / total if total > 0 else math.inf
    return FiducialDensity(
        model=model,
        weight=weight,
        sample=sample,
        mle=fit,
        bracket=(float(edges_out[0]), float(edges_out[-1])),
        breakpoints=tuple(sorted(set(kinks) | ({center} if fit is not None else set()))),
        log_shift=shift,
        peak_theta=float(center),
        edges=edges_out,
        masses=masses,
        cum=cum,
        total=total,
        tail_mass_bound=float(rel_tail),
        warnings=tuple(warnings),
    )


def cdf(density, theta):
    return density.cdf(theta)


def quantile(density, p):
    return density.quantile(p)


def equal_tailed_interval(density, level):
    return density.equal_tailed_interval(level)


__all__ = [
    "DensityOptions",
    "FiducialDensity",
    "QuantileResult",
    "build_density",
    "cdf",
    "quantile",
    "equal_tailed_interval",
    "jeffreys_weight",
]
