"""Estimator-style wrapper: fit a fiducial distribution to one sample."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dge import DgeSpec, resolve_dge_id
from .fiducial import DensityOptions, build_density
from .models import as_sample, get_model


class GeneralizedFiducial(BaseEstimator):
    """Fiducial distribution of a scalar parameter for a chosen model and DGE.

    Parameters
    ----------
    model : str
        Model id, e.g. ``"scale-exponential"`` or ``"bivnorm-rho"``.
    dge : str
        DGE id or method alias (``"simple"``, ``"FS"``, ``"F1"``, ``"jeffreys"``, ...).
    q : float, optional
        Exponent of the scaled-normal family; ignored by other models.
    tol : float
        Relative accuracy of the normalizing integral.

    Attributes set by ``fit``: ``density_``, ``theta_hat_`` (the MLE, or the support
    midpoint for non-regular models) and ``n_samples_``.
    """

    def __init__(self, model="location-normal", dge="simple", q=None, tol=1e-11):
        self.model = model
        self.dge = dge
        self.q = q
        self.tol = tol

    def fit(self, X, y=None):
        model = get_model(self.model, self.q)
        dge = DgeSpec(model, resolve_dge_id(self.dge))
        X = check_array(X, ensure_2d=False, dtype=float)
        if model.arity == 1:
            if X.ndim == 2:
                if X.shape[1] != 1:
                    raise ValueError(f"{self.model} expects a single column, got {X.shape[1]}")
                X = X[:, 0]
        elif X.ndim != 2 or X.shape[1] != model.arity:
            raise ValueError(f"{self.model} expects an (n, {model.arity}) array")
        sample = as_sample(model, X)
        self.density_ = build_density(model, dge, sample, DensityOptions(tol=self.tol))
        fit = self.density_.mle
        self.theta_hat_ = fit.theta_hat if fit is not None else self.density_.peak_theta
        self.n_samples_ = sample.n
        return self

    def predict(self, X=None):
        """Fiducial median (the point estimate used for MAD in the simulations)."""
        check_is_fitted(self, "density_")
        return self.density_.median()

    def quantile(self, p):
        check_is_fitted(self, "density_")
        return self.density_.quantiles(np.asarray(p, dtype=float))

    def interval(self, level=0.95):
        """Equal-tailed interval (lo, hi)."""
        check_is_fitted(self, "density_")
        lo, hi, _ = self.density_.equal_tailed_interval(level)
        return lo, hi

    def cdf(self, theta):
        check_is_fitted(self, "density_")
        return self.density_.cdf(theta)

    def pdf(self, theta):
        check_is_fitted(self, "density_")
        return self.density_.pdf(theta)


__all__ = ["GeneralizedFiducial"]
