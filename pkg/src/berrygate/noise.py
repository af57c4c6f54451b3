"""Stationary Ornstein-Uhlenbeck dephasing noise.

The noise has zero mean and correlation ``C(tau) = (Gamma gamma / 2) exp(-gamma |tau|)``.
Its spectrum ``S(omega) = int exp(i omega t) C(t) dt = Gamma gamma^2 / (omega^2 + gamma^2)``
is Lorentzian (inverse quadratic at high frequency).

Paths are sampled with the exact AR(1) transition of the process, so there is
no step-size bias at the grid points, and the first point is drawn from the
stationary distribution.  Trajectory ``j`` of a batch draws its normals from
``SeedSequence(master_seed, spawn_key=(j,))``; a batch is therefore identical
to sampling each trajectory on its own, whatever the chunking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class OUParams:
    """Noise strength ``Gamma`` (rad^2/us) and memory rate ``gamma`` (1/us)."""

    Gamma: float
    gamma: float

    def __post_init__(self):
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def variance(self) -> float:
        return 0.5 * self.Gamma * self.gamma

    @classmethod
    def from_dimensionless(cls, y: float, x: float, T: float = 1.0) -> "OUParams":
        """Parameters with ``Gamma/gamma = y`` and ``gamma T = x``."""
        gamma = x / T
        return cls(Gamma=y * gamma, gamma=gamma)


def correlation(params: OUParams, tau):
    return params.variance * np.exp(-params.gamma * np.abs(tau))


def spectral_density(params: OUParams, omega):
    """Fourier transform of :func:`correlation`, so that ``(1/2pi) int S = C(0)``."""
    return params.Gamma * params.gamma**2 / (np.asarray(omega) ** 2 + params.gamma**2)


@dataclass(frozen=True)
class NoisePath:
    grid: np.ndarray
    values: np.ndarray
    seed: Optional[tuple] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "delta"])
            for t, d in zip(self.grid, self.values):
                writer.writerow([repr(float(t)), repr(float(d))])


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed of trajectory ``index`` derived from ``master_seed``."""
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _seed_record(seed: np.random.SeedSequence) -> tuple:
    return (seed.entropy, tuple(seed.spawn_key))


def transition_coefficients(params: OUParams, grid) -> tuple[np.ndarray, np.ndarray]:
    """Decay factors and innovation scales of the exact transition between grid points."""
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise ValueError("grid must be strictly increasing")
    decay = np.exp(-params.gamma * steps)
    scale = np.sqrt(params.variance * -np.expm1(-2.0 * params.gamma * steps))
    return decay, scale


def _ar1(params: OUParams, grid, normals: np.ndarray) -> np.ndarray:
    """Map standard normals of shape ``(..., N)`` onto OU values on ``grid``."""
    decay, scale = transition_coefficients(params, grid)
    out = np.empty_like(normals)
    out[..., 0] = np.sqrt(params.variance) * normals[..., 0]
    for i in range(len(decay)):
        out[..., i + 1] = decay[i] * out[..., i] + scale[i] * normals[..., i + 1]
    return out


def sample_ou(params: OUParams, grid, seed: SeedLike) -> NoisePath:
    """One stationary OU realisation on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    normals = np.random.default_rng(ss).standard_normal(len(grid))
    return NoisePath(grid=grid, values=_ar1(params, grid, normals), seed=_seed_record(ss))


def sample_ou_batch(params: OUParams, grid, master_seed: int, start: int, count: int) -> np.ndarray:
    """Trajectories ``start .. start+count-1`` as an array of shape ``(count, len(grid))``."""
    grid = np.asarray(grid, dtype=float)
    normals = np.empty((count, len(grid)))
    for k in range(count):
        rng = np.random.default_rng(trajectory_seed(master_seed, start + k))
        normals[k] = rng.standard_normal(len(grid))
    return _ar1(params, grid, normals)
