"""Dynamical-decoupling pulse sequences, switching functions and filter functions.

A sequence is stored as the ordered pulse positions ``mu_k = t_k / T`` in
``(0, 1)``.  Pulses are ideal and instantaneous.  The closing pi pulse at
``t = T`` that completes the cycle never changes the switching function; it only
matters when composing the gate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np


@dataclass(frozen=True)
class PulseSequence:
    fractions: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        mu = tuple(float(m) for m in self.fractions)
        object.__setattr__(self, "fractions", mu)
        if any(not (0.0 < m < 1.0) for m in mu):
            raise ValueError(f"pulse fractions must lie in (0, 1): {mu}")
        if any(b <= a for a, b in zip(mu, mu[1:])):
            raise ValueError(f"pulse fractions must be strictly increasing: {mu}")

    @property
    def n(self) -> int:
        return len(self.fractions)

    @property
    def mu(self) -> np.ndarray:
        return np.array(self.fractions)

    @property
    def edges(self) -> np.ndarray:
        """``[0, mu_1, ..., mu_n, 1]``."""
        return np.concatenate([[0.0], self.mu, [1.0]])

    def reversed(self) -> "PulseSequence":
        return PulseSequence(tuple(1.0 - m for m in reversed(self.fractions)), self.name + "-reversed")

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "fractions": list(self.fractions)})

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        data = json.loads(text)
        return cls(tuple(data["fractions"]), data.get("name", "custom"))


def fid() -> PulseSequence:
    return PulseSequence((), "FID")


def spin_echo() -> PulseSequence:
    return PulseSequence((0.5,), "SE")


def cpmg(n: int) -> PulseSequence:
    """Equidistant pulses ``mu_k = (k - 1/2) / n``."""
    if n < 1:
        raise ValueError(f"CPMG needs at least one pulse, got n={n}")
    return PulseSequence(tuple((k - 0.5) / n for k in range(1, n + 1)), f"CPMG{n}")


def udd(n: int) -> PulseSequence:
    """Uhrig sequence ``mu_j = sin^2(j pi / (2n + 2))``.

    Evaluated in extended precision so the positions are correctly rounded;
    UDD1 and UDD2 then coincide exactly with SE and CPMG2.
    """
    if n < 1:
        raise ValueError(f"UDD needs at least one pulse, got n={n}")
    with mpmath.workdps(30):
        mu = tuple(float(mpmath.sin(j * mpmath.pi / (2 * n + 2)) ** 2) for j in range(1, n + 1))
    return PulseSequence(mu, f"UDD{n}")


def custom(fractions: Sequence[float], name: str = "custom") -> PulseSequence:
    """Sequence from user-supplied fractions; sorted, duplicates rejected."""
    mu = sorted(float(m) for m in fractions)
    if len(set(mu)) != len(mu):
        raise ValueError(f"duplicate pulse positions in {list(fractions)}")
    return PulseSequence(tuple(mu), name)


def parse_sequence(spec: str) -> PulseSequence:
    """Parse ``fid``, ``se``, ``cpmg:N``, ``udd:N`` or ``custom:0.2,0.6``."""
    kind, _, arg = spec.strip().lower().partition(":")
    if kind == "fid":
        return fid()
    if kind == "se":
        return spin_echo()
    if kind == "cpmg":
        return cpmg(int(arg))
    if kind == "udd":
        return udd(int(arg))
    if kind == "custom":
        return custom([float(v) for v in arg.split(",") if v.strip()])
    raise ValueError(f"unknown sequence {spec!r}")


def switching(seq: PulseSequence, t_frac):
    """Sign ``(-1)^k`` where ``k`` counts pulses at or before ``t_frac``."""
    k = np.searchsorted(seq.mu, t_frac, side="right")
    return np.where(k % 2 == 0, 1.0, -1.0)


def switching_integral(seq: PulseSequence) -> float:
    """``int_0^1 f(u) du``: the fraction of the noise-free dynamical phase that survives."""
    return float(np.sum((-1.0) ** np.arange(seq.n + 1) * np.diff(seq.edges)))


def _weights(seq: PulseSequence) -> np.ndarray:
    # omega f~(omega) = -i * sum_k c_k exp(-i z mu_k) over the edges
    n = seq.n
    c = np.empty(n + 2)
    c[0] = 1.0
    c[1 : n + 1] = 2.0 * (-1.0) ** np.arange(1, n + 1)
    c[n + 1] = (-1.0) ** (n + 1)
    return c


def _phi1(w):
    """``(exp(w) - 1) / w`` with the removable singularity filled in."""
    w = np.asarray(w, dtype=complex)
    # Taylor series near zero; the complex division overflows for subnormal w
    out = 1.0 + w / 2.0 + w * w / 6.0
    big = np.abs(w) > 1e-5
    out[big] = np.expm1(w[big]) / w[big]
    return out


def fourier_switching(seq: PulseSequence, z) -> np.ndarray:
    """Dimensionless transform ``f~(omega)/T = int_0^1 exp(-i z u) f(u) du`` at ``z = omega T``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    c, e = _weights(seq), seq.edges
    # sum_k c_k exp(-i z e_k) = sum_k c_k (exp(-i z e_k) - 1) since sum_k c_k = 0
    terms = c[None, :] * e[None, :] * _phi1(-1j * z[:, None] * e[None, :])
    return -terms.sum(axis=1)


def filter_function_reduced(seq: PulseSequence, z) -> np.ndarray:
    """``F(z) / z^2``, finite and accurate down to ``z = 0``."""
    return 0.5 * np.abs(fourier_switching(seq, z)) ** 2


def filter_function(seq: PulseSequence, z):
    """Filter function ``F(z) = |omega f~|^2 / 2`` at ``z = omega T``."""
    z_arr = np.asarray(z, dtype=float)
    out = filter_function_reduced(seq, z_arr) * np.atleast_1d(z_arr) ** 2
    return out.reshape(z_arr.shape) if z_arr.ndim else float(out[0])


def filter_cosine_series(seq: PulseSequence) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies ``d`` and amplitudes ``A`` with ``F(z) = sum A cos(d z)``.

    ``d = 0`` carries the constant part.
    """
    c, e = _weights(seq), seq.edges
    d = np.abs(e[:, None] - e[None, :]).ravel()
    a = 0.5 * (c[:, None] * c[None, :]).ravel()
    key = np.round(d, 14)
    freqs, inverse = np.unique(key, return_inverse=True)
    amps = np.zeros(len(freqs))
    np.add.at(amps, inverse, a)
    return freqs, amps
