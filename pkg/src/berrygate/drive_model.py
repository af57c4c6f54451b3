"""Driven-qubit Hamiltonians, counterdiabatic correction and the Berry-phase gate.

Three descriptions of the same parametrically driven qubit are provided:

* the lab-frame Rabi Hamiltonian ``H(t)``,
* the rotating-wave Hamiltonian ``H'(t)`` obtained in the frame ``R(t)``,
* the modified rotating-wave Hamiltonian ``H1(t) = B0/2 n(t).sigma`` which keeps
  the first-order counter-rotating contribution through the extra frame ``S(t)``.

A gate cycle is described by a :class:`GateSchedule` (constant field magnitude,
polar and azimuthal angles of the field direction).  Adding the counterdiabatic
term makes the evolution follow the instantaneous eigenstates exactly, so the
cyclic gate is diagonal and its phases split into a dynamical and a geometric
part.

Angular frequencies are in rad/us and times in us throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

Schedule = Union[float, Callable[[float], float]]

NORM_TOL = 1e-9
PHASE_QUAD_TOL = 1e-10


class NormDriftError(RuntimeError):
    """Raised when a propagated state loses normalisation."""


def _as_function(value: Schedule) -> Callable[[float], float]:
    if callable(value):
        return value
    constant = float(value)
    return lambda t: constant


def _derivative(fn: Callable[[float], float], t: float, h: float) -> float:
    return (fn(t + h) - fn(t - h)) / (2.0 * h)


def pauli_vector(v) -> np.ndarray:
    """Return ``v . sigma`` for a real 3-vector ``v``."""
    return v[0] * SIGMA_X + v[1] * SIGMA_Y + v[2] * SIGMA_Z


def pauli_components(H: np.ndarray) -> tuple[float, float, float, float]:
    """Decompose a 2x2 Hermitian matrix as ``a0 I + a . sigma``."""
    a0 = 0.5 * (H[0, 0] + H[1, 1]).real
    az = 0.5 * (H[0, 0] - H[1, 1]).real
    ax = H[1, 0].real
    ay = H[1, 0].imag
    return a0, ax, ay, az


def expm_hermitian(H: np.ndarray, dt: float) -> np.ndarray:
    """Exact ``exp(-i H dt)`` for a 2x2 Hermitian ``H``."""
    a0, ax, ay, az = pauli_components(H)
    r = math.sqrt(ax * ax + ay * ay + az * az)
    phase = np.exp(-1j * a0 * dt)
    if r == 0.0:
        return phase * IDENTITY
    c = math.cos(r * dt)
    s = math.sin(r * dt) / r
    return phase * (c * IDENTITY - 1j * s * (ax * SIGMA_X + ay * SIGMA_Y + az * SIGMA_Z))


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriveParams:
    """Physical driving parameters of the lab-frame Rabi model.

    ``omega_b``, ``omega_r`` and ``phi_r`` may be constants or callables of
    time.  A constant ``omega_b`` lets the accumulated drive phase be evaluated
    in closed form; otherwise it is integrated numerically.
    """

    omega_a: float
    omega_b: Schedule = 0.0
    omega_r: Schedule = 0.0
    phi_r: Schedule = 0.0

    def __post_init__(self):
        if not self.omega_a > 0:
            raise ValueError(f"omega_a must be positive, got {self.omega_a}")

    def wb(self, t: float) -> float:
        return _as_function(self.omega_b)(t)

    def rabi(self, t: float) -> float:
        return _as_function(self.omega_r)(t)

    def phase(self, t: float) -> float:
        return _as_function(self.phi_r)(t)

    def drive_phase_integral(self, t: float) -> float:
        """Accumulated drive phase ``int_0^t omega_b(s) ds``."""
        if not callable(self.omega_b):
            return float(self.omega_b) * t
        value, _ = quad(self.omega_b, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)
        return value


@dataclass(frozen=True)
class GateSchedule:
    """Effective-field description of one gate cycle.

    Parameters
    ----------
    B0 : float
        Constant field magnitude.
    theta, phi : callable
        Polar and azimuthal angle of the field direction as functions of time.
    T : float
        Cycle period; ``theta(T)`` must equal ``2 pi``.
    omega : float, optional
        Base rate of ``theta``-type schedules, informational.
    theta_dot, phi_dot : callable, optional
        Analytic derivatives.  Central differences are used when omitted.
    """

    B0: float
    theta: Callable[[float], float]
    phi: Callable[[float], float]
    T: float
    omega: Optional[float] = None
    theta_dot: Optional[Callable[[float], float]] = field(default=None, repr=False)
    phi_dot: Optional[Callable[[float], float]] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"period T must be positive, got {self.T}")

    @classmethod
    def linear(cls, B0: float, omega: float, phi_rate: float) -> "GateSchedule":
        """``theta = omega t``, ``phi = phi_rate t`` over ``T = 2 pi / omega``."""
        return cls(
            B0=B0,
            theta=lambda t: omega * t,
            phi=lambda t: phi_rate * t,
            T=2 * math.pi / omega,
            omega=omega,
            theta_dot=lambda t: omega,
            phi_dot=lambda t: phi_rate,
        )

    @classmethod
    def cycloid(cls, B0: float, omega: float, phi_rate: float) -> "GateSchedule":
        """``theta = omega t - sin(omega t)``; same boundary values as :meth:`linear`."""
        return cls(
            B0=B0,
            theta=lambda t: omega * t - math.sin(omega * t),
            phi=lambda t: phi_rate * t,
            T=2 * math.pi / omega,
            omega=omega,
            theta_dot=lambda t: omega * (1.0 - math.cos(omega * t)),
            phi_dot=lambda t: phi_rate,
        )

    @property
    def _h(self) -> float:
        return 1e-6 * self.T

    def dtheta(self, t: float) -> float:
        if self.theta_dot is not None:
            return self.theta_dot(t)
        return _derivative(self.theta, t, self._h)

    def dphi(self, t: float) -> float:
        if self.phi_dot is not None:
            return self.phi_dot(t)
        return _derivative(self.phi, t, self._h)

    def direction(self, t: float) -> np.ndarray:
        th, ph = self.theta(t), self.phi(t)
        return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])

    def check_cyclic(self, tol: float = 1e-9) -> None:
        if abs(self.theta(0.0)) > tol or abs(self.theta(self.T) - 2 * math.pi) > tol:
            raise ValueError(
                "gate schedule is not cyclic: need theta(0)=0 and theta(T)=2*pi, "
                f"got theta(0)={self.theta(0.0):.3g}, theta(T)={self.theta(self.T):.6g}"
            )


@dataclass(frozen=True)
class QubitState:
    """Pure qubit state ``amp_plus |+> + amp_minus |->``."""

    amp_plus: complex
    amp_minus: complex

    @classmethod
    def from_angles(cls, alpha1: float, alpha2: float) -> "QubitState":
        return cls(math.cos(alpha1), math.sin(alpha1) * np.exp(1j * alpha2))

    @classmethod
    def plus(cls) -> "QubitState":
        return cls(1.0, 0.0)

    @classmethod
    def minus(cls) -> "QubitState":
        return cls(0.0, 1.0)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_plus, self.amp_minus], dtype=complex)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


def effective_field(params: DriveParams, t: float) -> tuple[float, float, float]:
    """Field magnitude and direction ``(B0, theta, phi)`` of the modified-RWA Hamiltonian.

    ``theta`` is resolved with a two-argument arctangent so it lies in
    ``[0, pi]`` and varies continuously.  A negative Rabi amplitude is folded
    into the azimuth (``phi -> phi + pi``).
    """
    wa, wb, rabi = params.omega_a, params.wb(t), params.rabi(t)
    if wa + wb <= 0:
        raise ValueError(f"omega_a + omega_b(t) must be positive, got {wa + wb} at t={t}")
    detuning = wa - wb
    coupling = 2.0 * rabi * wa / (wa + wb)
    phi = params.phase(t)
    if coupling == 0.0 and detuning == 0.0:
        raise ValueError(f"resonant and undriven at t={t}: field direction is undefined")
    if coupling < 0:
        coupling, phi = -coupling, phi + math.pi
    B0 = math.hypot(detuning, coupling)
    # atan2(2 Omega_R omega_a, omega_a^2 - omega_b^2) with the common factor (wa+wb) > 0 removed
    theta = math.atan2(coupling, detuning)
    return B0, theta, phi


def hamiltonian_original(params: DriveParams, t: float) -> np.ndarray:
    """Lab-frame ``(omega_a/2) sz + Omega_R cos(Omega_b + phi_R) sx``."""
    arg = params.drive_phase_integral(t) + params.phase(t)
    return 0.5 * params.omega_a * SIGMA_Z + params.rabi(t) * math.cos(arg) * SIGMA_X


def hamiltonian_rwa(params: DriveParams, t: float) -> np.ndarray:
    """Rotating-wave Hamiltonian in the frame ``R(t) = exp(i Omega_b sz / 2)``."""
    ph = params.phase(t)
    transverse = 0.5 * params.rabi(t) * (math.cos(ph) * SIGMA_X + math.sin(ph) * SIGMA_Y)
    return 0.5 * (params.omega_a - params.wb(t)) * SIGMA_Z + transverse


def _adiabaticity_warning(params: DriveParams, t: float) -> None:
    scale = params.omega_a + params.wb(t)
    h = 1e-6 / scale
    rates = []
    for value, power in ((params.omega_b, 2), (params.omega_r, 2), (params.phi_r, 1)):
        if callable(value):
            rates.append(abs(_derivative(value, t, h)) / scale**power)
    if rates and max(rates) > 0.1:
        warnings.warn(
            f"drive parameters vary quickly at t={t} (ratio {max(rates):.2g}); "
            "the modified rotating-wave Hamiltonian may be inaccurate",
            RuntimeWarning,
            stacklevel=3,
        )


def hamiltonian_effective(params: DriveParams, t: float) -> np.ndarray:
    """Modified-RWA Hamiltonian ``H1 = (B0/2) n . sigma``."""
    _adiabaticity_warning(params, t)
    B0, theta, phi = effective_field(params, t)
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    return 0.5 * B0 * pauli_vector(n)


def hamiltonian_schedule(schedule: GateSchedule, t: float) -> np.ndarray:
    """``(B0/2) n(t) . sigma`` for a gate schedule."""
    return 0.5 * schedule.B0 * pauli_vector(schedule.direction(t))


def counterdiabatic(schedule: GateSchedule, t: float) -> np.ndarray:
    """Transitionless-driving term ``(1/2) (n x dn/dt) . sigma``.

    Raises ``ValueError`` at a kink of ``theta`` or ``phi`` when the
    derivatives are estimated numerically.
    """
    if schedule.theta_dot is None or schedule.phi_dot is None:
        h = schedule._h
        for fn, name in ((schedule.theta, "theta"), (schedule.phi, "phi")):
            left = (fn(t) - fn(t - h)) / h
            right = (fn(t + h) - fn(t)) / h
            if abs(left - right) > 1e-3 * max(1.0, abs(left), abs(right)):
                raise ValueError(f"{name} is not differentiable at t={t}")
    th, ph = schedule.theta(t), schedule.phi(t)
    thd, phd = schedule.dtheta(t), schedule.dphi(t)
    st, ct, sp, cp = math.sin(th), math.cos(th), math.sin(ph), math.cos(ph)
    v = (
        -thd * sp - phd * st * ct * cp,
        thd * cp - phd * st * ct * sp,
        phd * st * st,
    )
    return 0.5 * pauli_vector(v)


def hamiltonian_total(schedule: GateSchedule, t: float) -> np.ndarray:
    return hamiltonian_schedule(schedule, t) + counterdiabatic(schedule, t)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------


def _steps(interval, dt):
    t0, t1 = interval
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-12)))
    return np.linspace(t0, t1, n + 1)


def _step_operator(H, t_mid, h):
    Hm = H(t_mid)
    _, ax, ay, az = pauli_components(Hm)
    gap = 2.0 * math.sqrt(ax * ax + ay * ay + az * az)
    if gap > 0 and h > 0.01 * 2 * math.pi / gap:
        raise ValueError(
            f"step {h:.3g} does not resolve the level splitting {gap:.3g} at t={t_mid:.4g}; "
            f"use dt <= {0.01 * 2 * math.pi / gap:.3g}"
        )
    return expm_hermitian(Hm, h)


def propagate(H: Callable[[float], np.ndarray], psi0, interval, dt: float):
    """Integrate the Schrodinger equation with midpoint exponential steps.

    Each step applies the exact exponential of ``H`` at the step midpoint, so
    the scheme is second order and unitary to rounding.

    Parameters
    ----------
    H : callable
        ``t -> 2x2`` Hermitian matrix.
    psi0 : QubitState or array_like
        Initial state.
    interval : (float, float)
        Start and end time.
    dt : float
        Maximum step; the interval is divided into equal steps no larger than it.

    Returns
    -------
    times : ndarray, shape (N+1,)
    states : ndarray, shape (N+1, 2)
    """
    psi = psi0.vector if isinstance(psi0, QubitState) else np.asarray(psi0, dtype=complex)
    times = _steps(interval, dt)
    states = np.empty((len(times), 2), dtype=complex)
    states[0] = psi
    norm0 = np.linalg.norm(psi)
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        psi = _step_operator(H, times[i] + 0.5 * h, h) @ psi
        states[i + 1] = psi
    drift = np.max(np.abs(np.linalg.norm(states, axis=1) - norm0))
    if not drift <= NORM_TOL:
        raise NormDriftError(f"state norm drifted by {drift:.3g}; reduce dt (currently {dt:.3g})")
    return times, states


def propagate_unitary(H: Callable[[float], np.ndarray], interval, dt: float) -> np.ndarray:
    """Time-evolution operator over ``interval`` with the same stepping as :func:`propagate`."""
    times = _steps(interval, dt)
    U = IDENTITY.copy()
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        U = _step_operator(H, times[i] + 0.5 * h, h) @ U
    drift = np.max(np.abs(U.conj().T @ U - IDENTITY))
    if not drift <= NORM_TOL:
        raise NormDriftError(f"propagator lost unitarity by {drift:.3g}; reduce dt")
    return U


# ---------------------------------------------------------------------------
# Rabi comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RabiTraces:
    t: np.ndarray
    exact: np.ndarray
    rwa: np.ndarray
    mrwa: np.ndarray

    def l2(self, trace: np.ndarray) -> float:
        """Root-mean-square distance of ``trace`` to the exact population."""
        span = self.t[-1] - self.t[0]
        return math.sqrt(np.trapezoid((trace - self.exact) ** 2, self.t) / span)

    @property
    def l2_rwa(self) -> float:
        return self.l2(self.rwa)

    @property
    def l2_mrwa(self) -> float:
        return self.l2(self.mrwa)


def _frame_S(params: DriveParams, t: float) -> np.ndarray:
    wa, wb, rabi = params.omega_a, params.wb(t), params.rabi(t)
    angle = rabi / (wa + wb) * math.sin(params.drive_phase_integral(t) + params.phase(t))
    return math.cos(angle) * IDENTITY + 1j * math.sin(angle) * SIGMA_X


def _frame_R(params: DriveParams, t: float) -> np.ndarray:
    half = 0.5 * params.drive_phase_integral(t)
    return np.diag([np.exp(1j * half), np.exp(-1j * half)])


def rabi_compare(params: DriveParams, t_final: float, n_steps: Optional[int] = None) -> RabiTraces:
    """Population on ``|+>`` from ``|+>`` under the exact, RWA and modified-RWA Hamiltonians.

    The modified-RWA state lives in the frame ``R S`` and is mapped back with
    ``S^dag R^dag`` before taking the population; the RWA frame ``R`` is
    diagonal and leaves populations unchanged.
    """
    if n_steps is None:
        gap = math.hypot(params.omega_a, 2 * abs(params.rabi(0.0)))
        n_steps = int(math.ceil(t_final / (0.005 * 2 * math.pi / gap)))
    dt = t_final / n_steps
    plus = QubitState.plus().vector

    t, exact = propagate(lambda s: hamiltonian_original(params, s), plus, (0.0, t_final), dt)
    _, rwa = propagate(lambda s: hamiltonian_rwa(params, s), plus, (0.0, t_final), dt)
    start = _frame_R(params, 0.0) @ _frame_S(params, 0.0) @ plus
    _, mrwa = propagate(lambda s: hamiltonian_effective(params, s), start, (0.0, t_final), dt)
    lab = np.array(
        [_frame_S(params, s).conj().T @ _frame_R(params, s).conj().T @ psi for s, psi in zip(t, mrwa)]
    )
    return RabiTraces(
        t=t,
        exact=np.abs(exact[:, 0]) ** 2,
        rwa=np.abs(rwa[:, 0]) ** 2,
        mrwa=np.abs(lab[:, 0]) ** 2,
    )


# ---------------------------------------------------------------------------
# Gate phases and unitary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GatePhases:
    total: tuple[float, float]
    dynamical: tuple[float, float]
    geometric: tuple[float, float]

    @property
    def eta(self) -> float:
        """Relative geometric phase ``gamma_-^g - gamma_+^g``."""
        return self.geometric[1] - self.geometric[0]


def _integrate(fn, T):
    value, err = quad(fn, 0.0, T, epsabs=PHASE_QUAD_TOL, epsrel=1e-12, limit=500)
    return value


def gate_phases(schedule: GateSchedule) -> GatePhases:
    """Total, dynamical and geometric phases picked up by ``|+>`` and ``|->``.

    Each tuple is ``(gamma_+, gamma_-)``.
    """
    schedule.check_cyclic()
    solid = _integrate(lambda t: schedule.dphi(t) * (1.0 - math.cos(schedule.theta(t))), schedule.T)
    dyn = 0.5 * schedule.B0 * schedule.T
    geo = 0.5 * solid
    return GatePhases(
        total=(-(dyn + geo), dyn + geo),
        dynamical=(-dyn, dyn),
        geometric=(-geo, geo),
    )


def gate_unitary(schedule: GateSchedule) -> np.ndarray:
    """Closed-form cyclic gate ``diag(exp(-i Lambda/2), exp(i Lambda/2))``.

    ``Lambda = alpha(T) + phi(T) - phi(0)`` with
    ``alpha(T) = int (B0 - phi' cos theta) dt``.  The result equals the
    evolution generated by ``H1 + H_CD`` up to the global factor ``-1``.
    """
    schedule.check_cyclic()
    alpha = _integrate(lambda t: schedule.B0 - schedule.dphi(t) * math.cos(schedule.theta(t)), schedule.T)
    lam = alpha + schedule.phi(schedule.T) - schedule.phi(0.0)
    return np.diag([np.exp(-0.5j * lam), np.exp(0.5j * lam)])


def geometric_gate(schedule: GateSchedule) -> np.ndarray:
    """Phase gate left once the dynamical phase is cancelled: ``diag(e^{i g+}, e^{i g-})``."""
    phases = gate_phases(schedule)
    return np.diag(np.exp(1j * np.asarray(phases.geometric)))


def propagate_gate(schedule: GateSchedule, dt: float) -> np.ndarray:
    """Numerically propagate ``H1 + H_CD`` over one cycle."""
    return propagate_unitary(lambda t: hamiltonian_total(schedule, t), (0.0, schedule.T), dt)


def equal_up_to_phase(U: np.ndarray, V: np.ndarray) -> float:
    """Max entrywise distance between ``U`` and ``V`` after removing a global phase."""
    overlap = np.trace(V.conj().T @ U)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(U - phase * V)))
