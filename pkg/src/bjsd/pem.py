"""One-step-ahead prediction, PEM loss, analytic Jacobian and Gauss-Newton refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .arx import lagged, ls_solve
from .exceptions import RankDeficiencyError, UnstableFilterError
from .model import BjModel, ThetaVector
from .poly import Polynomial, is_stable, max_root_magnitude, reflect_unstable_roots
from .signals import ClosedLoopSpec, InputSpec, gen_closed_loop, gen_open_loop

__all__ = [
    "GnReport",
    "predictor",
    "prediction_error",
    "pem_loss",
    "jacobian",
    "gn_step",
    "gn_refine",
    "repair_stability",
    "cramer_rao",
]


def _check(theta: ThetaVector, allow_unstable_f: bool):
    B, C, D, F = theta.polynomials()
    if not is_stable(C):
        raise UnstableFilterError("predictor needs a stable C", max_root_magnitude([C]))
    if not allow_unstable_f and F.degree > 0 and not is_stable(F):
        raise UnstableFilterError("predictor needs a stable F", max_root_magnitude([F]))
    return B, C, D, F


def _signals(theta, u, y, allow_unstable_f=False):
    B, C, D, F = _check(theta, allow_unstable_f)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    w = lfilter(B.coeffs, F.coeffs, u)
    v = y - w
    eps = lfilter(D.coeffs, C.coeffs, v)
    return (B, C, D, F), w, v, eps


def prediction_error(theta: ThetaVector, u, y, allow_unstable_f: bool = False) -> np.ndarray:
    """``eps = D/C (y - B/F u)``, zero presample."""
    return _signals(theta, u, y, allow_unstable_f)[3]


def predictor(theta: ThetaVector, u, y, allow_unstable_f: bool = False) -> np.ndarray:
    """``yhat(t|theta) = DB/(CF) u + (1 - D/C) y``, evaluated as ``y - eps``."""
    return np.asarray(y, dtype=float) - prediction_error(theta, u, y, allow_unstable_f)


def pem_loss(theta: ThetaVector, u, y, allow_unstable_f: bool = False) -> float:
    eps = prediction_error(theta, u, y, allow_unstable_f)
    return float(eps @ eps) / eps.size


def _jacobian_and_error(theta, u, y):
    (B, C, D, F), w, v, eps = _signals(theta, u, y)
    u = np.asarray(u, dtype=float)
    c, d, f = C.coeffs, D.coeffs, F.coeffs
    pb, pc, pd, pf = theta.orders
    g_b = lfilter(d, c, lfilter([1.0], f, u))
    g_c = lfilter([1.0], c, eps)
    g_d = -lfilter([1.0], c, v)
    g_f = -lfilter(d, c, lfilter([1.0], f, w))
    J = np.hstack((lagged(g_b, pb), lagged(g_c, pc), lagged(g_d, pd), lagged(g_f, pf)))
    return J, eps


def jacobian(theta: ThetaVector, u, y) -> np.ndarray:
    """``d yhat(t|theta) / d theta`` stacked over t, columns in ``[b | c | d | f]`` order.

    Each block is one base signal delayed by 1..p:

    * b: ``D/(CF) u``
    * c: ``-BD/(C^2 F) u + D/C^2 y`` (= ``eps / C``)
    * d: ``B/(CF) u - y/C``
    * f: ``-BD/(C F^2) u``
    """
    return _jacobian_and_error(theta, u, y)[0]


def gn_step(theta: ThetaVector, u, y) -> ThetaVector:
    """One undamped Gauss-Newton update ``theta + (J'J)^-1 J'(y - yhat)`` (QR on J)."""
    J, eps = _jacobian_and_error(theta, u, y)
    delta, _ = ls_solve(J, eps, "Jacobian")
    return ThetaVector.from_flat(theta.flat + delta, theta.orders)


def repair_stability(theta: ThetaVector):
    """Reflect unstable roots of C and F inside the unit circle.

    Returns ``(theta, flags)``; ``flags`` names the repaired polynomials.
    """
    flags = []
    c, f = theta.c, theta.f
    C, F = Polynomial.monic(c), Polynomial.monic(f)
    if C.degree and not is_stable(C):
        c = reflect_unstable_roots(C).coeffs[1:]
        flags.append("repaired_C")
    if F.degree and not is_stable(F):
        f = reflect_unstable_roots(F).coeffs[1:]
        flags.append("repaired_F")
    if not flags:
        return theta, flags
    return ThetaVector(theta.b, c, theta.d, f), flags


@dataclass
class GnReport:
    theta: ThetaVector
    iterations: int
    final_loss: float
    converged: bool
    step_norms: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    expected_improvements: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "theta": self.theta.to_dict(),
            "iterations": self.iterations,
            "final_loss": self.final_loss,
            "converged": self.converged,
            "step_norms": list(self.step_norms),
            "losses": list(self.losses),
            "expected_improvements": list(self.expected_improvements),
            "flags": list(self.flags),
        }


def _safe_loss(theta, u, y):
    _, C, _, F = theta.polynomials()
    if not (is_stable(C) and is_stable(F)):
        return math.inf
    eps = prediction_error(theta, u, y)
    val = float(eps @ eps) / eps.size
    return val if math.isfinite(val) else math.inf


def gn_refine(
    theta0: ThetaVector,
    u,
    y,
    max_iter: int = 100,
    tol: float = 1e-4,
    max_halvings: int = 10,
    criterion: str = "step",
    singular: str = "stop",
) -> GnReport:
    """Damped Gauss-Newton on the PEM loss.

    Each iteration tries the full GN step and halves it (at most
    ``max_halvings`` times) until the loss does not increase; trial points
    with unstable C or F count as infinite loss.

    ``criterion="step"`` stops once ``|step| / (1 + |theta|) < tol`` (the
    small final step is still applied). ``criterion="improvement"`` stops,
    without moving, once the GN-predicted relative loss decrease
    ``(loss - |eps - J step|^2 / n) / loss`` of the next full step is below
    ``tol``. Both quantities are recorded in the report either way.

    A rank-deficient Jacobian ends the iteration (flag ``singular_jacobian``)
    unless ``singular="min_norm"``, which takes the minimum-norm LS step
    instead. That matters when starting from ``C = D``, where the c and d
    columns are exactly opposite.
    """
    if criterion not in ("step", "improvement"):
        raise ValueError(f"unknown stopping criterion {criterion!r}")
    if singular not in ("stop", "min_norm"):
        raise ValueError(f"unknown singular-Jacobian policy {singular!r}")
    if not np.all(np.isfinite(theta0.flat)):
        raise ValueError("initial estimate has non-finite entries")
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    theta, flags = repair_stability(theta0)
    loss = _safe_loss(theta, u, y)
    if not math.isfinite(loss):
        raise UnstableFilterError("initial estimate gives a non-finite loss", math.nan)
    report = GnReport(theta, 0, loss, False, losses=[loss], flags=flags)

    for _ in range(max_iter):
        J, eps = _jacobian_and_error(theta, u, y)
        try:
            delta, rss = ls_solve(J, eps, "Jacobian")
        except RankDeficiencyError:
            if singular == "stop":
                report.flags.append("singular_jacobian")
                break
            delta = np.linalg.lstsq(J, eps, rcond=None)[0]
            r = eps - J @ delta
            rss = float(r @ r)
            if "min_norm_step" not in report.flags:
                report.flags.append("min_norm_step")
        n = eps.size
        improvement = (loss - rss / n) / loss if loss > 0 else 0.0
        report.expected_improvements.append(improvement)
        if criterion == "improvement" and improvement < tol:
            report.converged = True
            break
        small = criterion == "step" and np.linalg.norm(delta) / (1.0 + np.linalg.norm(theta.flat)) < tol

        step = 1.0
        accepted = None
        for _ in range(max_halvings + 1):
            trial = ThetaVector.from_flat(theta.flat + step * delta, theta.orders)
            trial_loss = _safe_loss(trial, u, y)
            if trial_loss <= loss:
                accepted = (trial, trial_loss)
                break
            step *= 0.5
        if accepted is None:
            if small:
                report.converged = True
            else:
                report.flags.append("linesearch_failed")
            break
        report.step_norms.append(float(step * np.linalg.norm(delta)))
        theta, loss = accepted
        report.iterations += 1
        report.losses.append(loss)
        if small:
            report.converged = True
            break

    report.theta = theta
    report.final_loss = loss
    return report


def cramer_rao(model: BjModel, data_spec, n: int, runs: int, seed: int = 0) -> np.ndarray:
    """Monte Carlo estimate of ``sigma^2 M^-1``, ``M = E[psi psi']``.

    ``M`` is the average of ``J(theta0)' J(theta0) / n`` over ``runs``
    simulated records of length ``n`` (seeds ``seed, seed+1, ...``).
    Divide by ``n`` for the covariance of an efficient estimate at that
    sample size. ``data_spec`` is an ``InputSpec`` (open loop) or a
    ``ClosedLoopSpec``.
    """
    model.validate()
    theta = model.theta
    p = theta.flat.size
    M = np.zeros((p, p))
    for i in range(runs):
        if isinstance(data_spec, ClosedLoopSpec):
            data = gen_closed_loop(model, data_spec.K, data_spec.r_variance, n, seed + i)
        elif isinstance(data_spec, InputSpec):
            data = gen_open_loop(model, data_spec, n, seed + i)
        else:
            raise TypeError(f"unsupported data_spec {type(data_spec).__name__}")
        J = jacobian(theta, data.u, data.y)
        M += J.T @ J / n
    M /= runs
    try:
        M_inv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("information matrix is singular", math.inf) from exc
    cov = model.sigma2 * M_inv
    return 0.5 * (cov + cov.T)
