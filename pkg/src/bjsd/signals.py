"""Seeded signal generation: filtering, BJ simulation, open/closed-loop data.

All signals are zero for t <= 0 (zero presample); nothing is trimmed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .exceptions import ModelValidationError, UnstableFilterError
from .model import BjModel
from .poly import Polynomial, RationalFilter, is_stable, max_root_magnitude, poly_from_roots

__all__ = [
    "InputSpec",
    "ClosedLoopSpec",
    "Dataset",
    "apply_filter",
    "simulate_bj",
    "gen_open_loop",
    "gen_closed_loop",
    "simulate_closed_loop",
    "scale_noise_for_snr",
    "sample_random_bj",
    "make_rng",
    "lowpass_input",
]

OPEN_LOOP = "open_loop"
CLOSED_LOOP = "closed_loop"


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator for an independent stream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


# stream ids; fixed so r and e never share draws
_R_STREAM, _E_STREAM, _MODEL_STREAM = 0, 1, 2


def apply_filter(f: RationalFilter, x, allow_unstable: bool = False) -> np.ndarray:
    """Run ``y = num/den x`` as a difference equation with zero presample."""
    if not allow_unstable:
        f.check_stable()
    x = np.asarray(x, dtype=float)
    return lfilter(f.num.coeffs, f.den.coeffs, x)


def simulate_bj(model: BjModel, u, e) -> np.ndarray:
    model.validate()
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    if u.shape != e.shape:
        raise ValueError(f"u and e must have equal length, got {u.shape} and {e.shape}")
    return apply_filter(RationalFilter(model.B, model.F), u) + apply_filter(
        RationalFilter(model.C, model.D), e
    )


@dataclass(frozen=True)
class InputSpec:
    """How an open-loop input is formed from white reference noise ``r``.

    kind
        ``"white"``: ``u = r``.
        ``"filtered"``: ``u = filter r``.
        ``"sensitivity"``: ``u = 1/(1 + B/F) r = F/(F + B) r``.
    """

    kind: str = "white"
    variance: float = 1.0
    filter: RationalFilter | None = None

    def __post_init__(self):
        if self.kind not in ("white", "filtered", "sensitivity"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.kind == "filtered" and self.filter is None:
            raise ValueError("a filtered input needs a filter")
        if self.variance <= 0:
            raise ValueError("input variance must be positive")

    def input_filter(self, model: BjModel) -> RationalFilter | None:
        if self.kind == "white":
            return None
        if self.kind == "filtered":
            return self.filter
        return RationalFilter(model.F, model.F + model.B)

    def to_dict(self):
        d = {"kind": self.kind, "variance": self.variance}
        if self.filter is not None:
            d["filter"] = self.filter.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        flt = RationalFilter.from_dict(d["filter"]) if d.get("filter") else None
        return cls(d.get("kind", "white"), float(d.get("variance", 1.0)), flt)


@dataclass(frozen=True)
class ClosedLoopSpec:
    """Feedback ``u = -K y + r`` with white ``r`` of variance ``r_variance``."""

    K: RationalFilter
    r_variance: float = 1.0

    def to_dict(self):
        return {"K": self.K.to_dict(), "r_variance": self.r_variance}

    @classmethod
    def from_dict(cls, d):
        return cls(RationalFilter.from_dict(d["K"]), float(d.get("r_variance", 1.0)))


def lowpass_input(pole: float) -> InputSpec:
    """Unit-variance white noise through ``1/(1 - pole q^-1)^2``."""
    den = Polynomial([1.0, -pole]) * Polynomial([1.0, -pole])
    return InputSpec("filtered", 1.0, RationalFilter(Polynomial([1.0]), den))


@dataclass
class Dataset:
    u: np.ndarray
    y: np.ndarray
    seed: int = 0
    regime: str = OPEN_LOOP
    truth: BjModel | None = None
    e: np.ndarray | None = field(default=None, repr=False)
    r: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.u.ndim != 1 or self.u.shape != self.y.shape:
            raise ValueError("u and y must be 1-D sequences of equal length")
        if self.regime not in (OPEN_LOOP, CLOSED_LOOP):
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def n(self) -> int:
        return self.u.size

    def prefix(self, n: int) -> "Dataset":
        if not 1 <= n <= self.n:
            raise ValueError(f"prefix length {n} outside 1..{self.n}")
        cut = lambda a: None if a is None else a[:n]  # noqa: E731
        return Dataset(self.u[:n], self.y[:n], self.seed, self.regime, self.truth, cut(self.e), cut(self.r))

    def to_csv(self, path):
        """Write ``t,u,y`` CSV and a ``.json`` sidecar next to it."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u", "y"])
            for t, (ut, yt) in enumerate(zip(self.u, self.y), start=1):
                w.writerow([t, repr(float(ut)), repr(float(yt))])
        meta = {
            "n": self.n,
            "seed": int(self.seed),
            "regime": self.regime,
            "model": None if self.truth is None else self.truth.to_dict(),
            "sigma2": None if self.truth is None else float(self.truth.sigma2),
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return path

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        u = np.array([float(r["u"]) for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            truth = BjModel.from_dict(meta["model"]) if meta.get("model") else None
            return cls(u, y, int(meta.get("seed", 0)), meta.get("regime", OPEN_LOOP), truth)
        return cls(u, y)


def scale_noise_for_snr(model: BjModel, u, e_raw, target: float, mode: str = "raw_noise") -> float:
    """Noise standard deviation giving ``sum((B/F u)^2) / sum(noise^2) == target``.

    ``mode="raw_noise"`` measures the noise as ``sigma * e_raw``;
    ``mode="filtered_noise"`` as ``C/D (sigma * e_raw)``.
    """
    if not target > 0:
        raise ValueError("target SNR must be positive")
    signal = apply_filter(RationalFilter(model.B, model.F), u)
    if mode == "raw_noise":
        noise = np.asarray(e_raw, dtype=float)
    elif mode == "filtered_noise":
        noise = apply_filter(RationalFilter(model.C, model.D), e_raw)
    else:
        raise ValueError(f"unknown SNR mode {mode!r}")
    num = float(np.dot(signal, signal))
    den = float(np.dot(noise, noise))
    if num <= 0:
        raise ValueError("noise-free output has zero energy")
    if den <= 0:
        raise ValueError("noise sequence has zero energy")
    return math.sqrt(num / (target * den))


def gen_open_loop(
    model: BjModel,
    spec: InputSpec,
    n: int,
    seed: int,
    snr: float | None = None,
    snr_mode: str = "raw_noise",
) -> Dataset:
    """Draw ``r`` and ``e``, form ``u`` per ``spec`` and simulate ``y``.

    With ``snr`` set, the noise variance is chosen per realization and the
    returned ``truth`` carries it; otherwise ``model.sigma2`` is used.
    """
    model.validate()
    flt = spec.input_filter(model)
    if flt is not None and not flt.is_stable:
        raise UnstableFilterError("unstable input filter", max_root_magnitude([flt.den]))
    r = math.sqrt(spec.variance) * make_rng(seed, _R_STREAM).standard_normal(n)
    e_raw = make_rng(seed, _E_STREAM).standard_normal(n)
    u = r if flt is None else apply_filter(flt, r)
    if snr is not None:
        sigma = scale_noise_for_snr(model, u, e_raw, snr, snr_mode)
    else:
        sigma = math.sqrt(model.sigma2)
    e = sigma * e_raw
    y = simulate_bj(model, u, e)
    return Dataset(u, y, seed, OPEN_LOOP, model.with_sigma2(sigma * sigma), e, r)


def closed_loop_polynomial(model: BjModel, K: RationalFilter) -> Polynomial:
    """Characteristic polynomial ``F K_den + B K_num`` of the loop."""
    return model.F * K.den + model.B * K.num


def gen_closed_loop(model: BjModel, K: RationalFilter, r_variance: float, n: int, seed: int) -> Dataset:
    """Simulate ``y = B/F u + C/D e`` under feedback ``u = -K y + r``.

    Runs the difference equations sample by sample; ``B`` being strictly
    delayed makes ``y(t)`` depend on past ``u`` only.
    """
    model.validate()
    if not model.B.is_delayed:
        raise ModelValidationError("closed-loop simulation needs b_0 = 0")
    if K.den.degree > 0 and not K.is_stable:
        raise UnstableFilterError("feedback K is unbounded on the unit circle", max_root_magnitude([K.den]))
    char = closed_loop_polynomial(model, K)
    if not is_stable(char):
        raise UnstableFilterError("closed loop is unstable", max_root_magnitude([char]))

    r = math.sqrt(r_variance) * make_rng(seed, _R_STREAM).standard_normal(n)
    e = math.sqrt(model.sigma2) * make_rng(seed, _E_STREAM).standard_normal(n)
    u, y = simulate_closed_loop(model, K, r, e)
    return Dataset(u, y, seed, CLOSED_LOOP, model, e, r)


def simulate_closed_loop(model: BjModel, K: RationalFilter, r, e):
    """Per-sample recursion of the feedback loop; returns ``(u, y)``."""
    r = np.asarray(r, dtype=float)
    e = np.asarray(e, dtype=float)
    if r.shape != e.shape:
        raise ValueError("r and e must have equal length")
    n = r.size

    b, f = model.B.coeffs.tolist(), model.F.coeffs.tolist()
    c, d = model.C.coeffs.tolist(), model.D.coeffs.tolist()
    kn, kd = K.num.coeffs.tolist(), K.den.coeffs.tolist()
    x = [0.0] * n  # B/F u
    v = [0.0] * n  # C/D e
    z = [0.0] * n  # K y
    u = [0.0] * n
    y = [0.0] * n
    el, rl = e.tolist(), r.tolist()
    for t in range(n):
        acc = 0.0
        for k in range(1, len(b)):
            if t - k < 0:
                break
            acc += b[k] * u[t - k]
        for k in range(1, len(f)):
            if t - k < 0:
                break
            acc -= f[k] * x[t - k]
        x[t] = acc
        acc = el[t]
        for k in range(1, len(c)):
            if t - k < 0:
                break
            acc += c[k] * el[t - k]
        for k in range(1, len(d)):
            if t - k < 0:
                break
            acc -= d[k] * v[t - k]
        v[t] = acc
        y[t] = x[t] + v[t]
        acc = 0.0
        for k in range(len(kn)):
            if t - k < 0:
                break
            acc += kn[k] * y[t - k]
        for k in range(1, len(kd)):
            if t - k < 0:
                break
            acc -= kd[k] * z[t - k]
        z[t] = acc
        u[t] = rl[t] - z[t]
    return np.array(u), np.array(y)


def sample_random_bj(orders=(4, 2, 2, 4), seed: int = 0, max_retries: int = 100) -> BjModel:
    """Random model with uniform ``B`` coefficients and annulus-sampled poles/zeros.

    ``B`` coefficients are U[-1, 1]. Each conjugate root pair of ``C``,
    ``D``, ``F`` has modulus U[0.6, 0.95] and phase U[0, 90] degrees.
    Draws failing validation are redrawn.
    """
    pb, pc, pd, pf = orders
    if any(p % 2 for p in (pc, pd, pf)):
        raise ValueError("C, D and F orders must be even (roots come in conjugate pairs)")
    rng = make_rng(seed, _MODEL_STREAM)

    def pairs(order):
        mag = rng.uniform(0.6, 0.95, order // 2)
        phase = rng.uniform(0.0, np.pi / 2, order // 2)
        roots = mag * np.exp(1j * phase)
        return poly_from_roots(np.concatenate((roots, roots.conj())))

    for _ in range(max_retries):
        B = Polynomial.delayed(rng.uniform(-1.0, 1.0, pb))
        C, D, F = pairs(pc), pairs(pd), pairs(pf)
        model = BjModel(B, C, D, F)
        if not model.problems():
            return model
    raise RuntimeError(f"no valid model after {max_retries} draws (seed {seed})")
