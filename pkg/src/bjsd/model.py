"""Box-Jenkins model container and its flat parameter layout."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ModelValidationError
from .poly import Polynomial, coprime, is_stable, max_root_magnitude

__all__ = ["BjModel", "ThetaVector", "sec51_model", "sec52_model"]


@dataclass(frozen=True)
class BjModel:
    """``y = B/F u + C/D e`` with ``e`` white of variance ``sigma2``.

    ``B`` is strictly delayed (``b_0 = 0``); ``C``, ``D``, ``F`` are monic.
    """

    B: Polynomial
    C: Polynomial
    D: Polynomial
    F: Polynomial
    sigma2: float = 1.0

    def __post_init__(self):
        for name in "BCDF":
            p = getattr(self, name)
            if not isinstance(p, Polynomial):
                object.__setattr__(self, name, Polynomial(p))
        if not self.B.is_delayed:
            raise ModelValidationError(f"B must be strictly delayed (b_0 = 0), got {self.B!r}")
        for name in "CDF":
            if not getattr(self, name).is_monic:
                raise ModelValidationError(f"{name} must be monic in q^-1")
        if self.sigma2 < 0:
            raise ModelValidationError("sigma2 must be non-negative")

    @property
    def orders(self) -> tuple[int, int, int, int]:
        return (self.B.degree, self.C.degree, self.D.degree, self.F.degree)

    @property
    def theta(self) -> "ThetaVector":
        return ThetaVector(self.B.coeffs[1:], self.C.coeffs[1:], self.D.coeffs[1:], self.F.coeffs[1:])

    @property
    def rho(self) -> float:
        """Largest root modulus of C and F."""
        ps = [p for p in (self.C, self.F) if p.degree >= 1]
        return max_root_magnitude(ps) if ps else 0.0

    def with_sigma2(self, sigma2: float) -> "BjModel":
        return replace(self, sigma2=float(sigma2))

    def problems(self, tol: float = 1e-6) -> list[str]:
        out = []
        for name in "CDF":
            if not is_stable(getattr(self, name)):
                out.append(f"{name} is not stable")
        if not coprime(self.B, self.F, tol):
            out.append("B and F share a common factor")
        if not coprime(self.C, self.D, tol):
            out.append("C and D share a common factor")
        return out

    def validate(self, tol: float = 1e-6) -> "BjModel":
        problems = self.problems(tol)
        if problems:
            raise ModelValidationError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {
            "B": self.B.to_list(),
            "C": self.C.to_list(),
            "D": self.D.to_list(),
            "F": self.F.to_list(),
            "sigma2": float(self.sigma2),
        }

    @classmethod
    def from_dict(cls, d) -> "BjModel":
        return cls(*(Polynomial(d[k]) for k in "BCDF"), sigma2=float(d.get("sigma2", 1.0)))


@dataclass(frozen=True)
class ThetaVector:
    """Parameters in the fixed layout ``[b; c; d; f]``."""

    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    f: np.ndarray
    flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in "bcdf":
            v = np.array(getattr(self, name), dtype=float).ravel()
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        flat = np.concatenate((self.b, self.c, self.d, self.f))
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    @property
    def orders(self) -> tuple[int, int, int, int]:
        return (self.b.size, self.c.size, self.d.size, self.f.size)

    @classmethod
    def from_flat(cls, vec, orders) -> "ThetaVector":
        vec = np.asarray(vec, dtype=float).ravel()
        pb, pc, pd, pf = orders
        if vec.size != pb + pc + pd + pf:
            raise ValueError(f"expected {pb + pc + pd + pf} parameters, got {vec.size}")
        i = np.cumsum([pb, pc, pd])
        return cls(vec[: i[0]], vec[i[0] : i[1]], vec[i[1] : i[2]], vec[i[2] :])

    def polynomials(self):
        return (
            Polynomial.delayed(self.b),
            Polynomial.monic(self.c),
            Polynomial.monic(self.d),
            Polynomial.monic(self.f),
        )

    def to_model(self, sigma2: float = 1.0) -> BjModel:
        return BjModel(*self.polynomials(), sigma2=sigma2)

    def __eq__(self, other):
        if not isinstance(other, ThetaVector):
            return NotImplemented
        return self.orders == other.orders and np.array_equal(self.flat, other.flat)

    def __hash__(self):
        return hash((self.orders, self.flat.tobytes()))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "bcdf"}

    @classmethod
    def from_dict(cls, d) -> "ThetaVector":
        return cls(d["b"], d["c"], d["d"], d["f"])


def sec51_model(sigma2: float = 1.0) -> BjModel:
    """Second-order dynamics with first-order noise model, unit-variance noise."""
    return BjModel(
        B=Polynomial([0.0, 1.0, 0.1]),
        C=Polynomial([1.0, 0.7]),
        D=Polynomial([1.0, -0.9]),
        F=Polynomial([1.0, -0.5, 0.75]),
        sigma2=sigma2,
    )


def sec52_model(sigma2: float = 1.0) -> BjModel:
    """Strongly oscillatory fourth-order model with noise poles at 0.98 and 0.97."""
    return BjModel(
        B=Polynomial([0.0, 1.0, 0.5, -2.0, 1.0]),
        C=Polynomial([1.0, -0.6, 0.4]),
        D=Polynomial([1.0, -1.95, 0.9506]),
        F=Polynomial([1.0, -1.5, 0.7, 0.3, -0.2]),
        sigma2=sigma2,
    )
