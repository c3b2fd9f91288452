"""scikit-learn style estimators wrapping the SD and SDGN procedures.

``X`` is the input signal ``u`` (shape ``(n,)`` or ``(n, 1)``) and ``y``
the output. Both estimators expose ``theta_`` (a ``ThetaVector``) and
``model_`` (a ``BjModel``) once fitted.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .arx import DEFAULT_AIC_GRID
from .pem import gn_refine, pem_loss, predictor
from .poly import RationalFilter
from .sd import sd_estimate
from .signals import apply_filter

__all__ = ["BoxJenkinsSD", "BoxJenkinsSDGN", "check_siso"]


def check_siso(X, y=None):
    """Validate a single-input record; returns 1-D float arrays."""
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"only single-input data is supported, got {X.shape[1]} columns")
        X = X[:, 0]
    if y is None:
        return X
    y = check_array(y, ensure_2d=False, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X and y lengths differ: {X.shape[0]} vs {y.shape[0]}")
    return X, y


class _BoxJenkinsBase(RegressorMixin, BaseEstimator):
    def _set_fitted(self, theta, sigma2):
        self.theta_ = theta
        self.model_ = theta.to_model(sigma2=max(float(sigma2), 0.0))
        self.n_features_in_ = 1

    def predict(self, X, y=None):
        """One-step-ahead prediction if ``y`` is given, else noise-free simulation ``B/F u``."""
        check_is_fitted(self, "theta_")
        if y is None:
            u = check_siso(X)
            return apply_filter(RationalFilter(self.model_.B, self.model_.F), u, allow_unstable=True)
        u, y = check_siso(X, y)
        return predictor(self.theta_, u, y, allow_unstable_f=True)

    def score(self, X, y, sample_weight=None):
        """Negative mean squared one-step-ahead prediction error."""
        check_is_fitted(self, "theta_")
        u, y = check_siso(X, y)
        return -pem_loss(self.theta_, u, y, allow_unstable_f=True)


class BoxJenkinsSD(_BoxJenkinsBase):
    """Sequentially decoupling estimator.

    Parameters
    ----------
    orders : tuple of int
        ``(p_b, p_c, p_d, p_f)``.
    m : int or "auto"
        ARX truncation order; ``"auto"`` selects it by AIC over ``grid``.
    grid : sequence of int
        Candidate orders for the AIC search.
    """

    def __init__(self, orders=(1, 1, 1, 1), m="auto", grid=DEFAULT_AIC_GRID):
        self.orders = orders
        self.m = m
        self.grid = grid

    def fit(self, X, y):
        u, y = check_siso(X, y)
        self.sd_ = sd_estimate(u, y, tuple(self.orders), self.m, self.grid)
        self.m_ = self.sd_.arx.m
        rss = self.sd_.stage3_residual_ss
        self._set_fitted(self.sd_.theta, rss / u.size if np.isfinite(rss) else np.nan)
        return self


class BoxJenkinsSDGN(_BoxJenkinsBase):
    """SD initial estimate refined by damped Gauss-Newton on the prediction error.

    Parameters
    ----------
    orders, m, grid :
        As for :class:`BoxJenkinsSD`.
    max_iter : int
        Gauss-Newton iteration limit.
    tol : float
        Stopping tolerance, interpreted according to ``criterion``.
    criterion : {"improvement", "step"}
        ``"improvement"`` stops when the predicted relative loss decrease
        falls below ``tol``; ``"step"`` stops on a small relative step norm.
    """

    def __init__(
        self,
        orders=(1, 1, 1, 1),
        m="auto",
        grid=DEFAULT_AIC_GRID,
        max_iter=100,
        tol=1e-6,
        criterion="improvement",
    ):
        self.orders = orders
        self.m = m
        self.grid = grid
        self.max_iter = max_iter
        self.tol = tol
        self.criterion = criterion

    def fit(self, X, y):
        u, y = check_siso(X, y)
        self.sd_ = sd_estimate(u, y, tuple(self.orders), self.m, self.grid)
        self.m_ = self.sd_.arx.m
        self.gn_ = gn_refine(self.sd_.theta, u, y, self.max_iter, self.tol, criterion=self.criterion)
        self.n_iter_ = self.gn_.iterations
        self._set_fitted(self.gn_.theta, self.gn_.final_loss)
        return self
