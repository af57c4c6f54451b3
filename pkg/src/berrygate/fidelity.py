"""Gate fidelity under Gaussian OU noise: closed forms, quadrature and Monte Carlo.

Every route produces the decay exponent ``chi`` with ``F = exp(-chi)``:

* closed forms for free induction decay with field noise (:func:`fid_b_analytic`),
  phase-rate noise with ``theta = omega t`` (:func:`fid_phi_analytic`) and the spin
  echo (:func:`fid_se_analytic`);
* the time-domain double integral of the correlation function weighted by the
  switching function (:func:`chi_time_domain`);
* the frequency-domain overlap of the filter function with the noise spectrum
  (:func:`chi_freq_domain`);
* an ensemble average over sampled noise paths (:func:`mc_fidelity`).

Dimensionless parameters follow the figures: ``x = gamma T`` and ``y = Gamma / gamma``.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import bisect

from .drive_model import SIGMA_Y, SIGMA_Z, GateSchedule, QubitState, expm_hermitian
from .noise import NoisePath, OUParams, sample_ou_batch, spectral_density
from .optimizer import chi_exact
from .sequences import PulseSequence, cpmg, fid, filter_cosine_series, filter_function_reduced, switching

METHODS = ("analytic", "time_quad", "freq_quad", "monte_carlo")


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class FidelityResult:
    value: float
    method: str
    chi: float
    stderr: float = 0.0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @classmethod
    def from_chi(cls, chi: float, method: str, **details) -> "FidelityResult":
        return cls(value=math.exp(-chi), method=method, chi=float(chi), details=details)

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "chi": self.chi, "stderr": self.stderr, **self.details}


@dataclass(frozen=True)
class NoiseTarget:
    """Which control parameter carries the noise.

    ``field_B`` noise enters the phase with unit weight.  ``phase_dot`` noise is
    weighted by ``1 - cos theta``; ``theta`` is given as a function of the
    fractional time ``u = t / T``.
    """

    kind: str
    theta: Optional[Callable[[float], float]] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("field_B", "phase_dot"):
            raise ValueError(f"unknown noise target {self.kind!r}")
        if self.kind == "phase_dot" and self.theta is None:
            raise ValueError("phase_dot noise needs a theta schedule")

    @classmethod
    def field_b(cls) -> "NoiseTarget":
        return cls("field_B", label="field_B")

    @classmethod
    def phase_linear(cls) -> "NoiseTarget":
        return cls("phase_dot", lambda u: 2 * np.pi * u, "phase_dot:linear")

    @classmethod
    def phase_cycloid(cls) -> "NoiseTarget":
        return cls("phase_dot", lambda u: 2 * np.pi * u - np.sin(2 * np.pi * u), "phase_dot:cycloid")

    @classmethod
    def from_schedule(cls, schedule: GateSchedule) -> "NoiseTarget":
        return cls("phase_dot", lambda u: schedule.theta(u * schedule.T), "phase_dot:schedule")

    def weight(self, u):
        if self.kind == "field_B":
            return np.ones_like(u, dtype=float) if np.ndim(u) else 1.0
        return 1.0 - np.cos(self.theta(u))


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _exp_remainder(x, k: int):
    """``e^{-x} - sum_{j<k} (-x)^j / j!`` without cancellation at small ``x``."""
    x = np.asarray(x, dtype=float)
    direct = np.exp(-x) - sum((-x) ** j / math.factorial(j) for j in range(k))
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small] if x.ndim else x
        series = sum((-xs) ** j / math.factorial(j) for j in range(k + 20, k - 1, -1))
        if x.ndim:
            direct[small] = series
        else:
            direct = series
    return direct


def chi_b(y, x):
    return 0.5 * np.asarray(y) * _exp_remainder(x, 2)


def chi_phi(y, x):
    x = np.asarray(x, dtype=float)
    pi2 = np.pi**2
    bracket = 32 * pi2**2 * _exp_remainder(x, 2) + 20 * pi2 * x**3 + 3 * x**5
    return np.asarray(y) * bracket / (4 * (4 * pi2 + x**2) ** 2)


def chi_se(y, x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.asarray(y) * (4 * _exp_remainder(0.5 * x, 3) - _exp_remainder(x, 3))


def chi_n_approx(n: int, y, x):
    return np.asarray(y) * np.asarray(x, dtype=float) ** 3 / (24 * n**2)


def _check_xy(y, x):
    if x < 0 or y < 0:
        raise ValueError(f"need x >= 0 and y >= 0, got x={x}, y={y}")


def fid_b_analytic(y: float, x: float) -> FidelityResult:
    """Free induction decay with noisy field magnitude."""
    _check_xy(y, x)
    return FidelityResult.from_chi(float(chi_b(y, x)), "analytic", x=x, y=y, formula="fid_b")


def fid_phi_analytic(y: float, x: float) -> FidelityResult:
    """Noisy phase rate with ``theta = 2 pi t / T``."""
    _check_xy(y, x)
    return FidelityResult.from_chi(float(chi_phi(y, x)), "analytic", x=x, y=y, formula="fid_phi")


def fid_se_analytic(y: float, x: float) -> FidelityResult:
    """Spin echo with noisy field magnitude."""
    _check_xy(y, x)
    return FidelityResult.from_chi(float(chi_se(y, x)), "analytic", x=x, y=y, formula="fid_se")


def fid_n_approx(n: int, y: float, x: float) -> FidelityResult:
    """Leading-order CPMG-n fidelity ``exp(-y x^3 / (24 n^2))``."""
    _check_xy(y, x)
    return FidelityResult.from_chi(float(chi_n_approx(n, y, x)), "analytic", x=x, y=y, n=n, formula="fid_n_approx")


# ---------------------------------------------------------------------------
# Quadrature routes
# ---------------------------------------------------------------------------


def _quad(fn, a, b, where, epsabs, epsrel, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, err = quad(fn, a, b, epsabs=epsabs, epsrel=epsrel, limit=200, **kw)
        except IntegrationWarning as exc:
            raise QuadratureError(f"{where} on [{a:.6g}, {b:.6g}]: {str(exc).splitlines()[0]}") from exc
    return value


def chi_time_domain(
    seq: PulseSequence,
    target: NoiseTarget,
    params: OUParams,
    T: float,
    epsabs: float = 1e-13,
    epsrel: float = 1e-12,
) -> float:
    """``chi = 1/2 int int w(t) w(s) f(t) f(s) C(t - s) dt ds`` by adaptive quadrature.

    The square is split at the pulse times.  Diagonal blocks are integrated as
    nested quadratures over the triangle ``s < t`` (the kernel has a kink on
    ``t = s``).  Off-diagonal blocks are smooth and the exponential kernel
    separates, so each reduces to a product of two one-dimensional quadratures.
    """
    x = params.gamma * T
    y = params.Gamma / params.gamma
    if x == 0.0 or y == 0.0:
        return 0.0
    w = target.weight
    e = seq.edges
    nseg = len(e) - 1

    def inner(u, lo):
        return _quad(lambda v: w(v) * math.exp(-x * (u - v)), lo, u, "inner", epsabs, epsrel) if u > lo else 0.0

    total = 0.0
    left = np.empty(nseg)
    right = np.empty(nseg)
    for a in range(nseg):
        lo, hi = e[a], e[a + 1]
        total += 2.0 * _quad(lambda u: w(u) * inner(u, lo), lo, hi, f"diagonal block {a}", epsabs, epsrel)
        left[a] = _quad(lambda v: w(v) * math.exp(-x * (hi - v)), lo, hi, f"block {a}", epsabs, epsrel)
        right[a] = _quad(lambda u: w(u) * math.exp(-x * (u - lo)), lo, hi, f"block {a}", epsabs, epsrel)
    for a in range(nseg):
        for b in range(a + 1, nseg):
            sign = 1.0 if (a + b) % 2 == 0 else -1.0
            total += 2.0 * sign * left[a] * right[b] * math.exp(-x * (e[b] - e[a + 1]))
    return 0.25 * y * x * x * total


def chi_freq_domain(seq: PulseSequence, params: OUParams, T: float, epsabs: float = 1e-14, epsrel: float = 1e-12) -> float:
    """``chi = (1/pi) int_0^inf F(omega T) S(omega) / omega^2 d omega`` for field noise.

    Integrated in ``z = omega T`` as ``(T/pi) int_0^inf [F(z)/z^2] S(z/T) dz``.
    The range up to ``max(100 x, 200 pi)`` is integrated piecewise; beyond it the
    filter function is expanded in cosines and each tail term is integrated
    with a Fourier-weighted rule.
    """
    x = params.gamma * T
    if x == 0.0 or params.Gamma == 0.0:
        return 0.0
    z_max = max(100.0 * x, 200.0 * math.pi)
    pieces = np.linspace(0.0, z_max, int(math.ceil(z_max / math.pi)) + 1)

    def integrand(z):
        return filter_function_reduced(seq, z)[0] * spectral_density(params, z / T)

    body = sum(_quad(integrand, a, b, "spectral body", epsabs, epsrel) for a, b in zip(pieces[:-1], pieces[1:]))

    kernel = lambda z: spectral_density(params, z / T) / (z * z)  # noqa: E731
    tail = 0.0
    for d, amp in zip(*filter_cosine_series(seq)):
        if abs(amp) < 1e-15:
            continue
        if d == 0.0:
            tail += amp * _quad(kernel, z_max, np.inf, "spectral tail", epsabs * 1e-3, epsrel)
        else:
            tail += amp * quad(kernel, z_max, np.inf, weight="cos", wvar=d, epsabs=epsabs * 1e-3, limlst=200)[0]
    return T / math.pi * (body + tail)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def phase_grid(seq: PulseSequence, T: float, gamma: float, n_steps: Optional[int] = None) -> np.ndarray:
    """Time grid with ``gamma dt <= 0.01``, resolving the pulse spacing and containing every pulse time."""
    gaps = np.diff(seq.edges) * T
    if n_steps is None:
        step = min(0.01 / gamma, gaps.min() / 10.0)
        n_steps = int(math.ceil(T / step))
    elif T / n_steps > gaps.min():
        raise ValueError(f"grid step {T / n_steps:.3g} is coarser than the minimum pulse gap {gaps.min():.3g}")
    grid = np.linspace(0.0, T, n_steps + 1)
    for t_k in seq.mu * T:
        i = int(np.argmin(np.abs(grid - t_k)))
        if abs(grid[i] - t_k) <= 1e-9 * T:
            grid[i] = t_k
        else:
            grid = np.insert(grid, np.searchsorted(grid, t_k), t_k)
    return grid


def phase_weights(seq: PulseSequence, target: NoiseTarget, grid: np.ndarray) -> np.ndarray:
    """Trapezoid weights ``W`` such that ``Phi = W . delta`` approximates ``int w f delta dt``."""
    T = grid[-1]
    h = np.diff(grid)
    f_mid = switching(seq, 0.5 * (grid[:-1] + grid[1:]) / T)
    wu = target.weight(grid / T)
    W = np.zeros_like(grid)
    W[:-1] += 0.5 * h * f_mid * wu[:-1]
    W[1:] += 0.5 * h * f_mid * wu[1:]
    return W


def mc_fidelity(
    seq: PulseSequence,
    target: NoiseTarget,
    params: OUParams,
    T: float,
    n_traj: int,
    seed: int,
    n_steps: Optional[int] = None,
    chunk: int = 4096,
    workers: int = 1,
) -> FidelityResult:
    """Ensemble average of ``exp(-i Phi)`` over sampled OU paths.

    The estimate is the real part of the sample mean; its standard error comes
    from the sample variance of ``cos Phi``.  The imaginary part should vanish
    within its own standard error; a warning is issued when it exceeds three.
    """
    if n_traj < 100:
        raise ValueError(f"need at least 100 trajectories, got {n_traj}")
    grid = phase_grid(seq, T, params.gamma, n_steps)
    W = phase_weights(seq, target, grid)

    def run(start):
        count = min(chunk, n_traj - start)
        phases = sample_ou_batch(params, grid, seed, start, count) @ W
        return np.cos(phases), np.sin(phases)

    starts = range(0, n_traj, chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    re = np.concatenate([p[0] for p in parts])
    im = np.concatenate([p[1] for p in parts])

    value = float(re.mean())
    stderr = float(re.std(ddof=1) / math.sqrt(n_traj))
    im_mean = float(im.mean())
    im_stderr = float(im.std(ddof=1) / math.sqrt(n_traj))
    if abs(im_mean) > 3.0 * im_stderr + 1e-15:
        warnings.warn(
            f"imaginary part of the ensemble mean {im_mean:.3g} exceeds 3 standard errors ({im_stderr:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    chi = -math.log(value) if value > 0 else math.inf
    return FidelityResult(
        value=value,
        method="monte_carlo",
        chi=chi,
        stderr=stderr,
        details={
            "imag_mean": im_mean,
            "imag_stderr": im_stderr,
            "n_traj": n_traj,
            "seed": seed,
            "n_grid": len(grid),
        },
    )


# ---------------------------------------------------------------------------
# Input-state independence
# ---------------------------------------------------------------------------


def input_state_independence(
    noise_path: NoisePath,
    schedule: GateSchedule,
    alpha1: float,
    alpha2: float,
    target: str = "field_B",
) -> complex:
    """Ratio ``<+|rho(T)|-> / (<+|psi(T)><psi(T)|->)`` for one noise realisation.

    The density matrix is evolved step by step under the diagonal Hamiltonian
    of the counterdiabatic frame with the noise added to ``B0`` (``field_B``) or
    to the phase rate (``phase_dot``), then rotated back to the field frame.
    The ideal state is evolved with the same steps and no noise.
    """
    grid, delta = noise_path.grid, noise_path.values
    T = schedule.T
    if abs(grid[0]) > 1e-12 * T or abs(grid[-1] - T) > 1e-9 * T:
        raise ValueError("noise path must cover [0, T] of the schedule")
    schedule.check_cyclic()
    psi0 = QubitState.from_angles(alpha1, alpha2).vector
    if abs(psi0[0] * psi0[1]) < 1e-12:
        raise ValueError("input state has no coherence between |+> and |->; the ratio is undefined")

    cos_theta = np.cos([schedule.theta(t) for t in grid])
    if target == "field_B":
        noise_weight = np.ones_like(grid)
    elif target == "phase_dot":
        noise_weight = -cos_theta
    else:
        raise ValueError(f"unknown noise target {target!r}")

    start = expm_hermitian(-0.5 * schedule.phi(0.0) * SIGMA_Z, 1.0)
    rho = start @ np.outer(psi0, psi0.conj()) @ start.conj().T
    psi = start @ psi0
    for i in range(len(grid) - 1):
        h = grid[i + 1] - grid[i]
        tm = grid[i] + 0.5 * h
        ideal = (schedule.B0 - schedule.dphi(tm) * math.cos(schedule.theta(tm))) * h
        noisy = ideal + 0.5 * h * (noise_weight[i] * delta[i] + noise_weight[i + 1] * delta[i + 1])
        U = np.diag([np.exp(-0.5j * noisy), np.exp(0.5j * noisy)])
        U0 = np.diag([np.exp(-0.5j * ideal), np.exp(0.5j * ideal)])
        rho = U @ rho @ U.conj().T
        psi = U0 @ psi

    phi_T = schedule.phi(T)
    theta_T = schedule.theta(T)
    rotation = lambda phi: expm_hermitian(0.5 * phi * SIGMA_Z, 1.0) @ expm_hermitian(0.5 * theta_T * SIGMA_Y, 1.0)  # noqa: E731
    shift = np.trapezoid(delta, grid) if target == "phase_dot" else 0.0
    V_noisy, V_ideal = rotation(phi_T + shift), rotation(phi_T)
    rho = V_noisy @ rho @ V_noisy.conj().T
    psi = V_ideal @ psi
    return complex(rho[0, 1] / (psi[0] * psi[1].conj()))


# ---------------------------------------------------------------------------
# Coherence time
# ---------------------------------------------------------------------------


def t2_formula(params: OUParams, n: int = 0) -> float:
    """Short-time coherence time: ``2/sqrt(Gamma gamma)`` for FID, ``(24 n^2/(Gamma gamma^2))^{1/3}`` with ``n`` pulses."""
    if params.Gamma == 0:
        return math.inf
    if n == 0:
        return 2.0 / math.sqrt(params.Gamma * params.gamma)
    return (24.0 / (params.Gamma * params.gamma**2)) ** (1.0 / 3.0) * n ** (2.0 / 3.0)


def t2_exact(params: OUParams, n: int = 0, method: str = "closed", xtol: float = 1e-12) -> float:
    """Solve ``chi(T2) = 1`` for FID (``n = 0``) or CPMG-n by bisection.

    ``method`` selects the closed-form exponent (``closed``) or the
    time-domain quadrature (``quad``).
    """
    if params.Gamma == 0:
        return math.inf
    seq = fid() if n == 0 else cpmg(n)
    y = params.Gamma / params.gamma
    if method == "closed":
        chi = lambda T: chi_exact(seq, params.gamma * T, y)  # noqa: E731
    elif method == "quad":
        chi = lambda T: chi_time_domain(seq, NoiseTarget.field_b(), params, T)  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")
    lo = hi = t2_formula(params, n)
    while chi(hi) < 1.0:
        hi *= 2.0
    while chi(lo) > 1.0:
        lo *= 0.5
    return bisect(lambda T: chi(T) - 1.0, lo, hi, xtol=xtol * hi)


def t2(kind: str, params: OUParams, n: int = 0, exact: bool = False) -> float:
    """``kind`` is ``"fid"`` or ``"dd"`` (CPMG with ``n`` pulses)."""
    if kind == "fid":
        n = 0
    elif kind != "dd" or n < 1:
        raise ValueError(f"kind must be 'fid' or 'dd' with n >= 1, got {kind!r}, n={n}")
    return t2_exact(params, n) if exact else t2_formula(params, n)


# ---------------------------------------------------------------------------
# Landscapes
# ---------------------------------------------------------------------------


DEFAULT_AXIS = np.linspace(0.0, 4.0, 101)


@dataclass
class LandscapeGrid:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # shape (len(y), len(x))
    label: str = ""

    def value_at(self, y: float, x: float) -> float:
        i = int(np.argmin(np.abs(self.y - y)))
        j = int(np.argmin(np.abs(self.x - x)))
        return float(self.values[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gammaT", "Gamma_over_gamma", "F"])
            for i, yv in enumerate(self.y):
                for j, xv in enumerate(self.x):
                    writer.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.values[i, j]))])


def _as_chi(result) -> float:
    return result.chi if isinstance(result, FidelityResult) else -math.log(result)


def landscape(
    fidelity: Callable[[float, float], object],
    x_values=None,
    y_values=None,
    linear_in_y: bool = False,
    label: str = "",
    workers: int = 1,
) -> LandscapeGrid:
    """Evaluate ``fidelity(y, x)`` over a ``(gamma T, Gamma/gamma)`` grid.

    ``fidelity`` may return a :class:`FidelityResult` or a bare fidelity.  With
    ``linear_in_y`` the exponent is computed once per ``x`` at ``y = 1`` and
    rescaled, which is exact for Gaussian noise (``chi`` is proportional to
    ``Gamma``).
    """
    xs = DEFAULT_AXIS if x_values is None else np.asarray(x_values, dtype=float)
    ys = DEFAULT_AXIS if y_values is None else np.asarray(y_values, dtype=float)

    def mapper(fn, items):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    if linear_in_y:
        unit = np.array(mapper(lambda xv: _as_chi(fidelity(1.0, xv)), xs))
        chi = ys[:, None] * unit[None, :]
    else:
        cells = [(yv, xv) for yv in ys for xv in xs]
        chi = np.array(mapper(lambda c: _as_chi(fidelity(*c)), cells)).reshape(len(ys), len(xs))
    return LandscapeGrid(x=xs, y=ys, values=np.exp(-chi), label=label)
