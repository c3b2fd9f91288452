"""Sequentially decoupling estimator.

Three least-squares problems run strictly feed-forward:

1. high-order ARX fit giving ``V ~ D/C`` and ``W ~ BD/(FC)``;
2. an output-error regression for ``(F, B)`` on signals filtered by ``V``
   and ``W``;
3. an output-error regression for ``(C, D)`` using ``B/F`` from step 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arx import DEFAULT_AIC_GRID, ArxFit, aic_select_order, fit_arx, lagged, ls_solve
from .model import ThetaVector
from .poly import Polynomial, RationalFilter, is_stable
from .signals import apply_filter

__all__ = ["FilteredSignals", "SdEstimate", "stage2_oe_dynamics", "stage3_oe_noise", "sd_estimate"]


@dataclass(frozen=True)
class FilteredSignals:
    """``u_V_f = V u``, ``y_V_of = W u``, ``y_V_f = V y`` and ``u_BF_f = B/F u``.

    ``u_BF_f`` is only known after the dynamics stage and may be ``None``.
    """

    u_V_f: np.ndarray
    y_V_of: np.ndarray
    y_V_f: np.ndarray
    u_BF_f: np.ndarray | None = None

    @classmethod
    def from_arx(cls, arx: ArxFit, u, y) -> "FilteredSignals":
        V = RationalFilter(arx.V, Polynomial([1.0]))
        W = RationalFilter(arx.W, Polynomial([1.0]))
        return cls(apply_filter(V, u), apply_filter(W, u), apply_filter(V, y))


@dataclass(frozen=True)
class SdEstimate:
    theta: ThetaVector
    arx: ArxFit
    stage2_residual_ss: float
    stage3_residual_ss: float
    stable_noise_model: bool
    stable_dynamics: bool

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.stable_dynamics:
            out.append("unstable_F")
        if not self.stable_noise_model:
            out.append("unstable_C")
        return out

    def to_dict(self):
        return {
            "theta": self.theta.to_dict(),
            "arx": self.arx.to_dict(),
            "stage2_residual_ss": self.stage2_residual_ss,
            "stage3_residual_ss": self.stage3_residual_ss,
            "stable_noise_model": self.stable_noise_model,
            "stable_dynamics": self.stable_dynamics,
        }


def stage2_oe_dynamics(sig: FilteredSignals, p_f: int, p_b: int):
    """LS for ``V y = B/F (V u) + e`` using ``W u`` as the noise-free output.

    Returns ``(theta_f, theta_b, residual_ss)``.
    """
    if p_f < 0 or p_b < 1:
        raise ValueError("need p_b >= 1 and p_f >= 0")
    Phi = np.hstack((-lagged(sig.y_V_of, p_f), lagged(sig.u_V_f, p_b)))
    theta, rss = ls_solve(Phi, sig.y_V_f, "dynamics-stage regressor")
    return theta[:p_f], theta[p_f:], rss


def stage3_oe_noise(sig: FilteredSignals, p_c: int, p_d: int):
    """LS for ``V y - B/F u = [-(W u) lags p_c, (B/F u) lags p_d] [c; d] + e``.

    Returns ``(theta_c, theta_d, residual_ss)``.
    """
    if p_c < 1 or p_d < 1:
        raise ValueError("noise-stage orders p_c and p_d must be >= 1")
    if sig.u_BF_f is None:
        raise ValueError("u_BF_f is required for the noise stage")
    z = sig.y_V_f - sig.u_BF_f
    Phi = np.hstack((-lagged(sig.y_V_of, p_c), lagged(sig.u_BF_f, p_d)))
    theta, rss = ls_solve(Phi, z, "noise-stage regressor")
    return theta[:p_c], theta[p_c:], rss


def sd_estimate(u, y, orders, m="auto", grid=DEFAULT_AIC_GRID) -> SdEstimate:
    """Run the three stages on data ``(u, y)`` for BJ ``orders = (p_b, p_c, p_d, p_f)``.

    ``m`` is the ARX truncation order, or ``"auto"`` to pick it by AIC over
    ``grid``. An unstable intermediate ``F`` does not abort: ``B/F u`` is
    still computed by direct recursion and the estimate is flagged.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    p_b, p_c, p_d, p_f = orders
    if m == "auto":
        m, _ = aic_select_order(u, y, grid)
    arx = fit_arx(u, y, int(m))
    sig = FilteredSignals.from_arx(arx, u, y)

    theta_f, theta_b, rss2 = stage2_oe_dynamics(sig, p_f, p_b)
    B, F = Polynomial.delayed(theta_b), Polynomial.monic(theta_f)
    stable_f = is_stable(F)
    with np.errstate(over="ignore", invalid="ignore"):
        u_bf = apply_filter(RationalFilter(B, F), u, allow_unstable=True)
    sig = FilteredSignals(sig.u_V_f, sig.y_V_of, sig.y_V_f, u_bf)

    if np.all(np.isfinite(u_bf)):
        theta_c, theta_d, rss3 = stage3_oe_noise(sig, p_c, p_d)
    else:
        theta_c, theta_d, rss3 = np.full(p_c, np.nan), np.full(p_d, np.nan), np.nan
    theta = ThetaVector(theta_b, theta_c, theta_d, theta_f)
    stable_c = bool(np.all(np.isfinite(theta_c))) and is_stable(Polynomial.monic(theta_c))
    return SdEstimate(theta, arx, rss2, rss3, stable_c, stable_f)
