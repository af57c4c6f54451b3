import math

import numpy as np
import pytest
from scipy.integrate import quad

from berrygate.drive_model import GateSchedule
from berrygate.fidelity import (
    DEFAULT_AXIS,
    FidelityResult,
    NoiseTarget,
    chi_freq_domain,
    chi_time_domain,
    fid_b_analytic,
    fid_n_approx,
    fid_phi_analytic,
    fid_se_analytic,
    input_state_independence,
    landscape,
    mc_fidelity,
    phase_grid,
    t2,
    t2_exact,
    t2_formula,
)
from berrygate.noise import NoisePath, OUParams, sample_ou
from berrygate.optimizer import chi_exact
from berrygate.sequences import cpmg, fid, spin_echo, udd

FIELD = NoiseTarget.field_b()


def dense_chi(seq, target, y, x, m=3000):
    """Midpoint-rule double sum of (y x^2/4) w f w f exp(-x|u-v|); an independent rough oracle.

    ``m`` is a multiple of 4 and 6 so the cells line up with the pulses used below.
    """
    u = (np.arange(m) + 0.5) / m
    g = target.weight(u) * np.where(np.searchsorted(seq.mu, u, side="right") % 2 == 0, 1.0, -1.0)
    K = np.exp(-x * np.abs(u[:, None] - u[None, :]))
    return 0.25 * y * x * x * (g @ K @ g) / m**2


def test_result_invariants():
    r = FidelityResult.from_chi(0.3, "time_quad")
    assert r.value == pytest.approx(math.exp(-0.3), rel=1e-15) and r.stderr == 0.0
    with pytest.raises(ValueError):
        FidelityResult.from_chi(0.3, "guess")
    assert r.to_dict()["method"] == "time_quad"


def test_closed_form_examples():
    for fn in (fid_b_analytic, fid_phi_analytic, fid_se_analytic):
        assert fn(3.0, 0.0).value == 1.0
    assert fid_b_analytic(1.0, 0.72).value == pytest.approx(math.exp(-0.5 * (0.72 + math.exp(-0.72) - 1)), rel=1e-14)
    assert fid_b_analytic(1.0, 0.72).value == pytest.approx(0.9018, abs=1e-4)
    assert fid_se_analytic(2.0, 1.0).chi == pytest.approx(1.0 - math.exp(-1) - 3 + 4 * math.exp(-0.5), rel=1e-14)
    assert fid_se_analytic(2.0, 1.0).value == pytest.approx(0.9434, abs=1e-4)
    assert fid_n_approx(10, 4.0, 4.0).value == pytest.approx(math.exp(-256 / 2400), rel=1e-14)
    assert fid_n_approx(10**6, 4.0, 4.0).value == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        fid_b_analytic(-1.0, 1.0)


@pytest.mark.parametrize("x", [1e-3, 1e-2, 5e-2])
def test_short_time_limits(x):
    y = 2.0
    assert fid_b_analytic(y, x).chi == pytest.approx(y * x * x / 4, rel=2 * x)
    assert fid_phi_analytic(y, x).chi == pytest.approx(y * x * x / 4, rel=2 * x)
    assert fid_se_analytic(y, x).chi == pytest.approx(y * x**3 / 24, rel=2 * x)
    assert fid_n_approx(1, y, x).chi == pytest.approx(fid_se_analytic(y, x).chi, rel=2 * x)


def test_small_x_series_branch_is_continuous():
    for fn in (fid_b_analytic, fid_phi_analytic, fid_se_analytic):
        below, above = fn(1.0, 0.1 - 1e-12).chi, fn(1.0, 0.1 + 1e-12).chi
        assert below == pytest.approx(above, rel=1e-9)


@pytest.mark.parametrize(
    "seq, target",
    [(fid(), FIELD), (spin_echo(), FIELD), (cpmg(3), FIELD), (fid(), NoiseTarget.phase_cycloid()), (udd(2), NoiseTarget.phase_linear())],
    ids=["fid", "se", "cpmg3", "fid-cycloid", "udd2-linear"],
)
def test_time_domain_against_dense_sum(seq, target):
    x, y = 1.7, 2.0
    chi = chi_time_domain(seq, target, OUParams.from_dimensionless(y, x), 1.0)
    assert chi == pytest.approx(dense_chi(seq, target, y, x), rel=1e-4)


def test_time_domain_scales_with_T():
    p = OUParams(Gamma=0.8, gamma=0.6)
    chi_a = chi_time_domain(cpmg(2), FIELD, p, 2.5)
    chi_b = chi_exact(cpmg(2), 0.6 * 2.5, 0.8 / 0.6)
    assert chi_a == pytest.approx(chi_b, rel=1e-10)


def test_phase_closed_form_matches_quadrature():
    for y, x in ((0.5, 0.3), (2.0, 3.0)):
        q = chi_time_domain(fid(), NoiseTarget.phase_linear(), OUParams.from_dimensionless(y, x), 1.0)
        assert q == pytest.approx(fid_phi_analytic(y, x).chi, rel=1e-8)


@pytest.mark.parametrize("seq", [fid(), spin_echo(), cpmg(2), cpmg(3), cpmg(4), udd(3)], ids=lambda s: s.name)
def test_three_way_agreement(seq):
    for y in (0.5, 2.0, 4.0):
        for x in (0.5, 2.0, 4.0):
            p = OUParams.from_dimensionless(y, x)
            t = chi_time_domain(seq, FIELD, p, 1.0)
            assert abs(t - chi_freq_domain(seq, p, 1.0)) <= 1e-6
            assert t == pytest.approx(chi_exact(seq, x, y), rel=1e-8)
    for y, x in ((0.5, 0.5), (4.0, 4.0)):
        p = OUParams.from_dimensionless(y, x)
        mc = mc_fidelity(seq, FIELD, p, 1.0, n_traj=20000, seed=17)
        assert abs(mc.value - math.exp(-chi_exact(seq, x, y))) <= 3 * mc.stderr


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_cpmg_leading_order(n):
    x, y = 0.01, 1.0
    chi = chi_freq_domain(cpmg(n), OUParams.from_dimensionless(y, x), 1.0)
    assert chi * 24 * n * n / (y * x**3) == pytest.approx(1.0, rel=0.01)


@pytest.mark.parametrize("seq, order", [(fid(), 2), (spin_echo(), 3), (cpmg(2), 3), (cpmg(6), 3)], ids=["fid", "se", "cpmg2", "cpmg6"])
def test_short_time_ratio(seq, order):
    n = max(seq.n, 1)
    for x in (0.02, 0.05, 0.1):
        lead = x * x / 4 if order == 2 else x**3 / (24 * n * n)
        assert abs(chi_exact(seq, x, 1.0) / lead - 1) <= 0.15


def test_sequence_orderings():
    for x, y in ((1.0, 1.0), (4.0, 4.0)):
        chis = [chi_exact(cpmg(n), x, y) for n in range(1, 12)]
        assert all(b <= a for a, b in zip(chis, chis[1:]))
    for n in (3, 5, 10):
        assert chi_exact(cpmg(n), 4.0, 4.0) <= chi_exact(udd(n), 4.0, 4.0)


def test_cycloid_reduces_weight_and_decay():
    lin, cyc = NoiseTarget.phase_linear(), NoiseTarget.phase_cycloid()
    assert quad(cyc.weight, 0, 1)[0] < quad(lin.weight, 0, 1)[0]
    for y, x in ((1.0, 0.5), (3.1, 0.69), (4.0, 4.0)):
        p = OUParams.from_dimensionless(y, x)
        assert chi_time_domain(fid(), cyc, p, 1.0) < chi_time_domain(fid(), lin, p, 1.0)


def test_noise_target_validation():
    with pytest.raises(ValueError):
        NoiseTarget("theta")
    with pytest.raises(ValueError):
        NoiseTarget("phase_dot")
    sched = GateSchedule.cycloid(1.0, 2 * math.pi, 1.0)
    assert NoiseTarget.from_schedule(sched).weight(0.3) == pytest.approx(NoiseTarget.phase_cycloid().weight(0.3))


# --- Monte Carlo ------------------------------------------------------------------


def test_mc_zero_noise_is_exact():
    r = mc_fidelity(cpmg(2), FIELD, OUParams(0.0, 1.0), 1.0, n_traj=500, seed=0)
    assert r.value == 1.0 and r.stderr == 0.0 and r.method == "monte_carlo"


def test_mc_deterministic_and_worker_independent():
    p = OUParams.from_dimensionless(2.0, 1.0)
    a = mc_fidelity(spin_echo(), FIELD, p, 1.0, n_traj=3000, seed=9, chunk=700)
    b = mc_fidelity(spin_echo(), FIELD, p, 1.0, n_traj=3000, seed=9, chunk=1000, workers=3)
    assert a.value == b.value and a.stderr == b.stderr


def test_mc_phase_noise_against_quadrature():
    p = OUParams.from_dimensionless(3.0, 1.0)
    target = NoiseTarget.phase_cycloid()
    r = mc_fidelity(fid(), target, p, 1.0, n_traj=20000, seed=4)
    assert abs(r.value - math.exp(-chi_time_domain(fid(), target, p, 1.0))) <= 3 * r.stderr


def test_mc_input_checks():
    p = OUParams(1.0, 1.0)
    with pytest.raises(ValueError):
        mc_fidelity(fid(), FIELD, p, 1.0, n_traj=10, seed=0)
    with pytest.raises(ValueError):
        mc_fidelity(cpmg(10), FIELD, p, 1.0, n_traj=100, seed=0, n_steps=5)


def test_phase_grid_contains_pulses():
    g = phase_grid(udd(5), 2.0, 3.0)
    for t in udd(5).mu * 2.0:
        assert np.any(g == t)
    assert np.max(np.diff(g)) * 3.0 <= 0.01 + 1e-12


# --- input-state independence ------------------------------------------------------


@pytest.mark.parametrize("target", ["field_B", "phase_dot"])
def test_input_state_independence(target):
    sched = GateSchedule.linear(2.0, 1.0, 0.5)
    grid = np.linspace(0.0, sched.T, 1501)
    path = sample_ou(OUParams(1.0, 0.5), grid, seed=3)
    r1 = input_state_independence(path, sched, math.pi / 3, 0.0, target)
    r2 = input_state_independence(path, sched, math.pi / 5, 1.1, target)
    assert abs(r1 - r2) < 1e-10
    w = np.ones_like(grid) if target == "field_B" else 1 - np.cos(grid)
    assert abs(r1 - np.exp(-1j * np.trapezoid(w * path.values, grid))) < 1e-10
    quiet = NoisePath(grid, np.zeros_like(grid))
    assert abs(input_state_independence(quiet, sched, 0.4, 0.2, target) - 1.0) < 1e-10


def test_input_state_independence_checks():
    sched = GateSchedule.linear(2.0, 1.0, 0.5)
    grid = np.linspace(0.0, sched.T, 11)
    with pytest.raises(ValueError):
        input_state_independence(NoisePath(grid, np.zeros(11)), sched, 0.0, 0.0)
    with pytest.raises(ValueError):
        input_state_independence(NoisePath(grid[:-1], np.zeros(10)), sched, 0.3, 0.0)


# --- coherence time ---------------------------------------------------------------


def test_t2_examples():
    assert t2("fid", OUParams(Gamma=4.0, gamma=0.25)) == pytest.approx(2.0)
    assert t2("dd", OUParams(1.0, 1.0), n=1) == pytest.approx(24 ** (1 / 3))
    with pytest.raises(ValueError):
        t2("dd", OUParams(1.0, 1.0), n=0)
    assert t2_formula(OUParams(0.0, 1.0), 3) == math.inf


def test_t2_exact_solves_unit_decay():
    p = OUParams(2.0, 0.7)
    for n in (0, 1, 4):
        T2 = t2_exact(p, n)
        seq = fid() if n == 0 else cpmg(n)
        assert chi_exact(seq, p.gamma * T2, p.Gamma / p.gamma) == pytest.approx(1.0, abs=1e-9)
    assert t2_exact(p, 2, method="quad") == pytest.approx(t2_exact(p, 2), rel=1e-8)


def test_dd_never_shortens_t2():
    p = OUParams(1.0, 1.0)
    base = t2_exact(p, 0)
    assert all(t2_exact(p, n) >= base for n in range(1, 21))


# --- landscapes ------------------------------------------------------------------


def test_landscape_basics(tmp_path):
    grid = landscape(fid_b_analytic, label="F_B")
    assert grid.values.shape == (101, 101)
    assert np.all(grid.values[:, 0] == 1.0)
    assert np.all(np.diff(grid.values, axis=0) <= 0) and np.all(np.diff(grid.values, axis=1) <= 0)
    assert grid.value_at(1.0, 0.72) == pytest.approx(fid_b_analytic(1.0, 0.72).value)
    fast = landscape(fid_b_analytic, linear_in_y=True, workers=2)
    assert np.allclose(fast.values, grid.values, rtol=1e-13)
    grid.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "gammaT,Gamma_over_gamma,F"
    assert len(DEFAULT_AXIS) == 101
