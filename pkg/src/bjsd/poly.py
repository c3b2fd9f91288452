"""Polynomials and rational filters in the backward shift operator.

A polynomial ``p`` is stored by its coefficient sequence, lowest power of
``q^-1`` first::

    p(q) = coeffs[0] + coeffs[1] q^-1 + ... + coeffs[d] q^-d

Its *forward form* is ``z^d p(1/z)``, whose roots are what stability and
coprimality refer to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import UnstableFilterError

__all__ = [
    "Polynomial",
    "RationalFilter",
    "poly_mul",
    "poly_add",
    "is_stable",
    "max_root_magnitude",
    "poly_from_roots",
    "coprime",
]


class Polynomial:
    """Immutable real polynomial in ``q^-1`` with an explicit degree.

    Coefficients are never trimmed: ``Polynomial([0, 1, 0])`` has degree 2.
    """

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float).ravel()
        if c.size == 0:
            raise ValueError("a polynomial needs at least one coefficient")
        c.setflags(write=False)
        self._coeffs = c

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def degree(self) -> int:
        return self._coeffs.size - 1

    @property
    def is_monic(self) -> bool:
        return self._coeffs[0] == 1.0

    @property
    def is_delayed(self) -> bool:
        return self._coeffs[0] == 0.0

    @classmethod
    def monic(cls, tail) -> "Polynomial":
        """``1 + tail[0] q^-1 + tail[1] q^-2 + ...``"""
        return cls(np.concatenate(([1.0], np.asarray(tail, dtype=float).ravel())))

    @classmethod
    def delayed(cls, tail) -> "Polynomial":
        """``tail[0] q^-1 + tail[1] q^-2 + ...``"""
        return cls(np.concatenate(([0.0], np.asarray(tail, dtype=float).ravel())))

    def roots(self) -> np.ndarray:
        """Roots of the forward form, via companion-matrix eigenvalues."""
        c = np.trim_zeros(self._coeffs, "f")
        if c.size <= 1:
            return np.empty(0, dtype=complex)
        # trailing zeros are roots at the origin
        nz = c.size - np.trim_zeros(c, "b").size
        c = c[: c.size - nz]
        roots = np.zeros(nz, dtype=complex)
        if c.size > 1:
            companion = np.zeros((c.size - 1, c.size - 1))
            companion[0, :] = -c[1:] / c[0]
            companion[1:, :-1] = np.eye(c.size - 2)
            roots = np.concatenate((np.linalg.eigvals(companion).astype(complex), roots))
        return roots

    def __call__(self, z):
        """Evaluate at ``q = z`` (i.e. ``sum c_k z^-k``)."""
        z = np.asarray(z, dtype=complex)
        return np.polyval(self._coeffs[::-1], 1.0 / z)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return poly_mul(self, other)
        return Polynomial(self._coeffs * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return poly_add(self, other)

    def __neg__(self):
        return Polynomial(-self._coeffs)

    def __sub__(self, other):
        return poly_add(self, -other)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self._coeffs, other._coeffs)

    def __hash__(self):
        return hash(self._coeffs.tobytes())

    def __len__(self):
        return self._coeffs.size

    def __repr__(self):
        return f"Polynomial({self._coeffs.tolist()!r})"

    def to_list(self) -> list[float]:
        return [float(c) for c in self._coeffs]


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    return Polynomial(np.convolve(a.coeffs, b.coeffs))


def poly_add(a: Polynomial, b: Polynomial) -> Polynomial:
    """Coefficient-wise sum; the result has the larger of the two degrees."""
    out = np.zeros(max(a.degree, b.degree) + 1)
    out[: a.degree + 1] += a.coeffs
    out[: b.degree + 1] += b.coeffs
    return Polynomial(out)


def _require_monic(p: Polynomial, what="polynomial"):
    if not p.is_monic:
        raise ValueError(f"{what} must be monic in q^-1 (coeffs[0] == 1), got {p!r}")


def is_stable(p: Polynomial) -> bool:
    """Schur-Cohn test: True iff every forward-form root lies strictly inside the unit disc.

    Runs the step-down recursion on the monic coefficients; each reflection
    coefficient must have magnitude below one.
    """
    _require_monic(p)
    a = p.coeffs.copy()
    for k in range(p.degree, 0, -1):
        kappa = a[k]
        if not abs(kappa) < 1.0:
            return False
        a = (a[:k] - kappa * a[k:0:-1]) / (1.0 - kappa * kappa)
    return True


def max_root_magnitude(ps) -> float:
    """Largest root modulus over all the given monic polynomials."""
    if isinstance(ps, Polynomial):
        ps = [ps]
    best = 0.0
    for p in ps:
        _require_monic(p)
        if p.degree < 1:
            raise ValueError("max_root_magnitude needs polynomials of degree >= 1")
        best = max(best, float(np.max(np.abs(p.roots()))))
    return best


def poly_from_roots(roots, tol=1e-9) -> Polynomial:
    """Monic polynomial in ``q^-1`` whose forward form has exactly ``roots``.

    The root multiset must be closed under complex conjugation.
    """
    roots = np.asarray(roots, dtype=complex).ravel()
    if roots.size == 0:
        return Polynomial([1.0])
    complex_roots = roots[np.abs(roots.imag) > tol]
    unmatched = list(complex_roots)
    while unmatched:
        r = unmatched.pop()
        dist = [abs(np.conj(r) - s) for s in unmatched]
        if not dist or min(dist) > tol * max(1.0, abs(r)):
            raise ValueError(f"root set is not closed under conjugation (no partner for {r})")
        unmatched.pop(int(np.argmin(dist)))
    c = np.poly(roots)
    if np.max(np.abs(c.imag)) >= 1e-12:
        raise ValueError("imaginary coefficient residue too large; roots not conjugate-closed")
    return Polynomial(c.real)


def coprime(a: Polynomial, b: Polynomial, tol: float = 1e-6) -> bool:
    """True iff the forward forms share no root within distance ``tol``."""
    ra, rb = a.roots(), b.roots()
    if ra.size == 0 or rb.size == 0:
        return True
    return bool(np.min(np.abs(ra[:, None] - rb[None, :])) > tol)


def reflect_unstable_roots(p: Polynomial, cap: float = 0.99) -> Polynomial:
    """Mirror roots on/outside the unit circle to magnitude ``min(1/r, cap)``."""
    _require_monic(p)
    if p.degree == 0 or is_stable(p):
        return p
    roots = p.roots()
    mag = np.abs(roots)
    bad = mag >= 1.0
    new_mag = np.where(bad, np.minimum(1.0 / np.maximum(mag, 1e-300), cap), mag)
    fixed = new_mag * np.exp(1j * np.angle(roots))
    # phases of real roots stay 0 or pi, so conjugate closure is preserved
    return poly_from_roots(fixed, tol=1e-7)


@dataclass(frozen=True)
class RationalFilter:
    """``num(q) / den(q)`` with a monic denominator."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if not isinstance(self.num, Polynomial):
            object.__setattr__(self, "num", Polynomial(self.num))
        if not isinstance(self.den, Polynomial):
            object.__setattr__(self, "den", Polynomial(self.den))
        _require_monic(self.den, "filter denominator")

    @property
    def is_stable(self) -> bool:
        return is_stable(self.den)

    def check_stable(self):
        if not self.is_stable:
            raise UnstableFilterError("unstable filter denominator", max_root_magnitude([self.den]))

    def __mul__(self, other: "RationalFilter") -> "RationalFilter":
        return RationalFilter(self.num * other.num, self.den * other.den)

    def to_dict(self):
        return {"num": self.num.to_list(), "den": self.den.to_list()}

    @classmethod
    def from_dict(cls, d):
        return cls(Polynomial(d["num"]), Polynomial(d["den"]))
