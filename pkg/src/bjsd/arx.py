"""High-order ARX least squares, AIC truncation-order choice, and order diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .exceptions import RankDeficiencyError
from .model import BjModel
from .poly import Polynomial

__all__ = [
    "ArxFit",
    "DEFAULT_AIC_GRID",
    "lagged",
    "build_arx_regressor",
    "ls_solve",
    "fit_arx",
    "aic_select_order",
    "aic_scores_direct",
    "recommended_order",
    "arx_expansion",
    "truncation_tail",
]

DEFAULT_AIC_GRID = tuple(range(10, 151, 10))
RANK_TOL = 1e-10


def lagged(x, lags) -> np.ndarray:
    """Columns ``x(t-1), ..., x(t-lags)`` with zero presample."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.zeros((n, lags))
    for k in range(1, min(lags, n - 1) + 1):
        out[k:, k - 1] = x[: n - k]
    return out


def build_arx_regressor(u, y, m: int):
    """Rows ``[-y(t-1..t-m), u(t-1..t-m)]``; the regressand is ``y`` itself."""
    if m < 1:
        raise ValueError("ARX order m must be >= 1")
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.hstack((-lagged(y, m), lagged(u, m)))
    return X, y.copy()


def _check_rank(R: np.ndarray, what: str):
    if R.shape[1] == 0:
        return
    s = scipy.linalg.svdvals(R)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        cond = math.inf if s[-1] == 0.0 else s[0] / s[-1]
        raise RankDeficiencyError(f"{what} is numerically rank deficient", cond)


def ls_solve(X, Y, what: str = "regressor"):
    """QR least squares. Returns ``(theta, residual_ss)``.

    Raises RankDeficiencyError when the smallest singular value of ``X`` is
    below ``1e-10`` times the largest.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError(f"{what} has fewer rows than columns", math.inf)
    # Householder reflectors are applied to Y directly; Q is never formed
    qty, R = scipy.linalg.qr_multiply(X, Y, mode="right")
    _check_rank(R, what)
    theta = scipy.linalg.solve_triangular(R, qty)
    resid = Y - X @ theta
    return theta, float(resid @ resid)


@dataclass(frozen=True)
class ArxFit:
    m: int
    theta_v: np.ndarray
    theta_w: np.ndarray
    residual_ss: float
    n: int

    @property
    def V(self) -> Polynomial:
        return Polynomial.monic(self.theta_v)

    @property
    def W(self) -> Polynomial:
        return Polynomial.delayed(self.theta_w)

    def to_dict(self):
        return {
            "m": self.m,
            "theta_v": self.theta_v.tolist(),
            "theta_w": self.theta_w.tolist(),
            "residual_ss": self.residual_ss,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["m"]), np.asarray(d["theta_v"]), np.asarray(d["theta_w"]), float(d["residual_ss"]), int(d["n"]))


def fit_arx(u, y, m: int) -> ArxFit:
    X, Y = build_arx_regressor(u, y, m)
    if 2 * m >= X.shape[0]:
        raise ValueError(f"ARX order m={m} needs more than {2 * m} samples, got {X.shape[0]}")
    theta, rss = ls_solve(X, Y, "ARX regressor")
    return ArxFit(m, theta[:m], theta[m:], rss, X.shape[0])


def _aic(n, rss, m):
    return n * math.log(rss / n) + 4 * m


def aic_select_order(u, y, grid=DEFAULT_AIC_GRID):
    """Minimise ``n log(rss_m / n) + 4 m`` over ``grid``; ties go to the smaller m.

    One QR factorization of the largest regressor serves every grid point:
    with lags interleaved as ``[-y(t-1), u(t-1), -y(t-2), u(t-2), ...]`` the
    order-m regressor is a column prefix, so its residual is the projection
    residual onto the first ``2m`` columns of ``Q``.

    Returns ``(m_hat, scores)`` with scores aligned to ``grid``.
    """
    grid = [int(m) for m in grid]
    if not grid:
        raise ValueError("AIC grid is empty")
    if min(grid) < 1:
        raise ValueError("grid orders must be >= 1")
    y = np.asarray(y, dtype=float)
    n = y.size
    top = max(grid)
    if 2 * top >= n:
        raise ValueError(f"largest grid order {top} needs more than {2 * top} samples, got {n}")
    Ly, Lu = -lagged(y, top), lagged(u, top)
    X = np.empty((n, 2 * top))
    X[:, 0::2] = Ly
    X[:, 1::2] = Lu
    Q, R = scipy.linalg.qr(X, mode="economic", overwrite_a=True)
    qty = Q.T @ y
    scores = []
    for m in grid:
        k = 2 * m
        _check_rank(R[:k, :k], f"ARX regressor (m={m})")
        resid = y - Q[:, :k] @ qty[:k]
        scores.append(_aic(n, float(resid @ resid), m))
    best = min(range(len(grid)), key=lambda i: (scores[i], grid[i]))
    return grid[best], scores


def aic_scores_direct(u, y, grid):
    """Per-point AIC by refitting each order from scratch (reference path)."""
    n = np.asarray(y).size
    return [_aic(n, fit_arx(u, y, m).residual_ss, m) for m in grid]


def recommended_order(rho: float, n: int, cap: float = 4.0) -> int:
    """``round(-log n / (2 log rho))`` clamped to ``[1, floor(cap * n**0.24)]``."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if n < 2:
        raise ValueError("n must be >= 2")
    m = round(-math.log(n) / (2.0 * math.log(rho)))
    upper = max(1, math.floor(cap * n**0.24))
    return int(min(max(m, 1), upper))


def _impulse(num: Polynomial, den: Polynomial, k: int) -> np.ndarray:
    x = np.zeros(k + 1)
    x[0] = 1.0
    return scipy.signal.lfilter(num.coeffs, den.coeffs, x)


def arx_expansion(model: BjModel, k: int):
    """First ``k`` coefficients ``(v_1..v_k, w_1..w_k)`` of ``D/C`` and ``BD/(FC)``."""
    v = _impulse(model.D, model.C, k)[1:]
    w = _impulse(model.B * model.D, model.F * model.C, k)[1:]
    return v, w


def truncation_tail(model: BjModel, m: int, tol: float = 1e-12) -> float:
    """``sum_{k>m} |v_k| + |w_k|`` for the ARX(inf) form of ``model``.

    The expansion is lengthened until a geometric bound on what is left
    out drops below ``tol``.
    """
    model.validate()
    rho = model.rho
    if rho == 0.0:
        k_max = m + model.D.degree + model.B.degree + 1
        v, w = arx_expansion(model, k_max)
        return float(np.sum(np.abs(v[m:])) + np.sum(np.abs(w[m:])))
    k_max = max(2 * m, m + 64)
    log_rho = math.log(rho)
    while True:
        v, w = arx_expansion(model, k_max)
        h = np.abs(v) + np.abs(w)
        half = h[k_max // 2 :]
        ks = np.arange(k_max // 2 + 1, k_max + 1)
        nz = half > 0
        if not np.any(nz):
            return float(np.sum(h[m:]))
        log_lead = float(np.max(np.log(half[nz]) - ks[nz] * log_rho))
        log_bound = log_lead + k_max * log_rho - math.log1p(-rho)
        if log_bound < math.log(tol) or k_max > 1_000_000:
            return float(np.sum(h[m:]))
        k_max *= 2
