"""Randomised invariants checked with hypothesis."""

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from berrygate.drive_model import (
    DriveParams,
    GateSchedule,
    gate_phases,
    hamiltonian_effective,
    hamiltonian_original,
    hamiltonian_rwa,
    propagate,
    QubitState,
)
from berrygate.noise import OUParams, spectral_density, transition_coefficients
from berrygate.optimizer import chi_exact, coefficients, phase_constraint
from berrygate.sequences import PulseSequence, filter_function, switching

positions = st.lists(st.floats(min_value=1e-3, max_value=1 - 1e-3), min_size=0, max_size=12, unique=True)


def as_sequence(values):
    mu = sorted(values)
    assume(all(b - a > 1e-6 for a, b in zip(mu, mu[1:])))
    return PulseSequence(tuple(mu))


@given(positions)
def test_low_order_coefficients_vanish(values):
    c = coefficients(as_sequence(values))
    assert abs(c.C0) <= 1e-12
    assert abs(c.C1) <= 1e-12


@given(positions)
def test_second_coefficient_is_perfect_square(values):
    seq = as_sequence(values)
    c = coefficients(seq)
    assert abs(c.C2 - 0.5 * phase_constraint(seq) ** 2) <= 1e-12
    assert c.C2 >= -1e-12


@given(positions, st.floats(min_value=0.0, max_value=8.0), st.floats(min_value=0.0, max_value=5.0))
def test_chi_nonnegative_and_linear_in_y(values, x, y):
    seq = as_sequence(values)
    chi = chi_exact(seq, x, y)
    assert chi >= -1e-12
    assert math.isclose(chi, y * chi_exact(seq, x, 1.0), rel_tol=1e-12, abs_tol=1e-14)


@given(positions, st.floats(min_value=0.0, max_value=200.0))
def test_filter_nonnegative_and_reflection_symmetric(values, z):
    seq = as_sequence(values)
    F = filter_function(seq, z)
    assert F >= 0
    assert math.isclose(F, filter_function(seq.reversed(), z), rel_tol=1e-9, abs_tol=1e-12)


@given(positions)
def test_switching_flips_at_each_pulse(values):
    seq = as_sequence(values)
    for k, m in enumerate(seq.mu, start=1):
        assert switching(seq, m) == (-1) ** k
    assert switching(seq, 0.0) == 1


@given(
    st.floats(min_value=0.1, max_value=50.0),
    st.floats(min_value=-0.05, max_value=40.0),
    st.floats(min_value=-5.0, max_value=5.0),
    st.floats(min_value=-math.pi, max_value=math.pi),
    st.floats(min_value=0.0, max_value=10.0),
)
def test_hamiltonians_hermitian(wa, wb, rabi, phase, t):
    p = DriveParams(omega_a=wa, omega_b=wb * wa, omega_r=rabi, phi_r=phase)
    assume(abs(wa - wb * wa) > 1e-9 or rabi != 0.0)
    for H in (hamiltonian_original(p, t), hamiltonian_rwa(p, t), hamiltonian_effective(p, t)):
        assert np.max(np.abs(H - H.conj().T)) <= 1e-12


@given(st.floats(min_value=0.0, max_value=5.0), st.floats(min_value=0.2, max_value=3.0), st.floats(min_value=-2.0, max_value=2.0))
@settings(deadline=None, max_examples=30)
def test_phase_decomposition(B0, omega, rate):
    ph = gate_phases(GateSchedule.linear(B0, omega, rate))
    for pair in (ph.total, ph.dynamical, ph.geometric):
        assert pair[0] + pair[1] == 0.0
    for k in range(2):
        assert math.isclose(ph.total[k], ph.dynamical[k] + ph.geometric[k], abs_tol=1e-12)
    assert math.isclose(ph.geometric[0], -0.5 * rate * 2 * math.pi / omega, abs_tol=1e-9)


@given(st.floats(min_value=0.1, max_value=3.0), st.floats(min_value=0.0, max_value=math.pi), st.floats(min_value=0.0, max_value=2 * math.pi))
@settings(deadline=None, max_examples=20)
def test_propagation_preserves_norm(amp, a1, a2):
    H = lambda t: hamiltonian_rwa(DriveParams(omega_a=3.0, omega_b=2.0, omega_r=amp * math.cos(t)), t)  # noqa: E731
    _, psi = propagate(H, QubitState.from_angles(a1, a2), (0.0, 5.0), 0.01)
    assert np.max(np.abs(np.linalg.norm(psi, axis=1) - 1.0)) <= 1e-9


@given(
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=1e-3, max_value=10.0),
    st.lists(st.floats(min_value=1e-5, max_value=100.0), min_size=1, max_size=20),
)
def test_exact_transition_keeps_stationary_variance(Gamma, gamma, steps):
    p = OUParams(Gamma, gamma)
    grid = np.concatenate([[0.0], np.cumsum(steps)])
    assume(np.all(np.diff(grid) > 0))
    decay, scale = transition_coefficients(p, grid)
    assert np.allclose(decay**2 * p.variance + scale**2, p.variance, rtol=1e-12)


@given(st.floats(min_value=1e-3, max_value=10.0), st.floats(min_value=1e-3, max_value=10.0), st.floats(min_value=0, max_value=1e3))
def test_spectrum_even_and_bounded(Gamma, gamma, w):
    p = OUParams(Gamma, gamma)
    s = spectral_density(p, w)
    assert s == spectral_density(p, -w)
    assert 0 <= s <= spectral_density(p, 0.0)
