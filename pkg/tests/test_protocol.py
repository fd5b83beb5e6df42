import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraion.dynamics import HamiltonianSpec, SidebandTerm, build_hamiltonian, evolve_unitary
from paraion.errors import IllConditionedWarning, InvalidArgumentError
from paraion.fockspace import DensityMatrix, StateVector, basis_state, make_space, mode_populations
from paraion.protocol import (
    PrepPlan,
    PulseStep,
    ReadoutScan,
    default_n_max,
    fit_populations,
    flop_scan,
    plan_fock_prep,
    rabi_ratio_report,
    readout_signal,
    simulate_bsb_scan,
    simulate_sequence,
    spin_reset,
    step_hamiltonian,
)

RABI = 2 * math.pi * 10e3


def fock_mixture(space, weights, mode="x", spin="down"):
    states = [basis_state(space, spin, k, 0) if mode == "x" else basis_state(space, spin, 0, k)
              for k in range(len(weights))]
    return DensityMatrix.mixture(states, weights)


def test_plan_examples():
    plan = plan_fock_prep("x", 3, RABI)
    assert [s.kind for s in plan.steps] == ["bsb_x", "rsb_x", "bsb_x", "carrier"]
    expected = [math.pi / (2 * RABI * math.sqrt(k)) for k in (1, 2, 3)] + [math.pi / (2 * RABI)]
    np.testing.assert_allclose([s.duration for s in plan.steps], expected, rtol=1e-15)
    assert plan_fock_prep("y", 0, RABI).steps == ()
    assert [s.kind for s in plan_fock_prep("y", 1, RABI).steps] == ["bsb_y", "carrier"]
    assert [s.kind for s in plan_fock_prep("x", 2, RABI).steps] == ["bsb_x", "rsb_x"]


def test_plan_walks_through_expected_states():
    space = make_space(6, 3)
    plan = plan_fock_prep("x", 3, RABI)
    walk = [("up", 1, 0), ("down", 2, 0), ("up", 3, 0), ("down", 3, 0)]
    psi = basis_state(space, "down", 0, 0)
    for k, target in enumerate(walk):
        partial = PrepPlan("x", 3, plan.steps[:k + 1], RABI)
        out = simulate_sequence(space, partial, psi)
        assert out.fidelity(basis_state(space, *target)) > 1 - 1e-12


def test_plan_errors():
    with pytest.raises(InvalidArgumentError):
        plan_fock_prep("x", 6, RABI, truncation=6)
    with pytest.raises(InvalidArgumentError):
        plan_fock_prep("z", 1, RABI)
    with pytest.raises(InvalidArgumentError):
        plan_fock_prep("x", -1, RABI)
    with pytest.raises(InvalidArgumentError):
        plan_fock_prep("x", 1, 0.0)
    with pytest.raises(InvalidArgumentError):
        PulseStep("bsb_x", 0.0)
    with pytest.raises(InvalidArgumentError):
        PulseStep("rsb_z", 1.0)


def test_plan_json_round_trip():
    plan = plan_fock_prep("y", 4, RABI)
    data = plan.to_dict()
    assert set(data["pulses"][0]) == {"kind", "duration_s", "phase_rad"}
    assert PrepPlan.from_dict(data) == plan


@pytest.mark.filterwarnings("ignore::paraion.errors.LeakageWarning")
def test_empty_plan_and_two_pi_pulses():
    space = make_space(4, 3)
    psi = StateVector.normalized(space, np.arange(space.dim) + 0.5j)
    same = simulate_sequence(space, plan_fock_prep("x", 0, RABI), psi)
    np.testing.assert_array_equal(same.amplitudes, psi.amplitudes)
    plan = plan_fock_prep("x", 1, RABI)
    doubled = PrepPlan("x", 1, tuple(PulseStep(s.kind, 2 * s.duration) for s in plan.steps), RABI)
    start = basis_state(space, "down", 0, 0)
    assert simulate_sequence(space, doubled, start).fidelity(start) > 1 - 1e-12


@pytest.mark.parametrize("mode", ["x", "y"])
@pytest.mark.parametrize("n", range(6))
def test_prep_fidelity_and_no_cross_talk(mode, n):
    space = make_space(n + 3, 4) if mode == "x" else make_space(4, n + 3)
    start = basis_state(space, "down", 0, 0)
    final = simulate_sequence(space, plan_fock_prep(mode, n, RABI), start)
    target = basis_state(space, "down", n, 0) if mode == "x" else basis_state(space, "down", 0, n)
    assert final.fidelity(target) > 0.999
    other = "y" if mode == "x" else "x"
    np.testing.assert_allclose(mode_populations(final, other), mode_populations(start, other),
                               atol=1e-12)


def test_step_coupling_matches_cos_squared_convention():
    # a bsb step flips |down, n> at frequency RABI * sqrt(n+1) in the cos^2 convention
    space = make_space(7, 3)
    H = step_hamiltonian(space, PulseStep("bsb_x", 1.0), RABI)
    for n in range(3):
        t = np.linspace(0, 2 / RABI, 9)
        traj = evolve_unitary(H, basis_state(space, "down", n, 0), t)
        np.testing.assert_allclose(1 - traj.p_up, np.cos(RABI * math.sqrt(n + 1) * t) ** 2, atol=1e-12)


def test_spin_reset():
    space = make_space(4, 3)
    rho = basis_state(space, "up", 2, 0).to_density()
    out = spin_reset(rho)
    np.testing.assert_allclose(out.matrix, basis_state(space, "down", 2, 0).to_density().matrix)
    rng = np.random.default_rng(7)
    states = [StateVector.normalized(space, rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim))
              for _ in range(10)]
    w = rng.random(10)
    mix = DensityMatrix.mixture(states, w / w.sum())
    reset = spin_reset(mix)
    assert np.trace(reset.matrix).real == pytest.approx(1.0, abs=1e-12)
    for mode in ("x", "y"):
        np.testing.assert_allclose(mode_populations(reset, mode), mode_populations(mix, mode), atol=1e-12)
    # the motional reduced state, coherences included, is kept
    m = space.d_x * space.d_y
    before = mix.matrix.reshape(2, m, 2, m)
    np.testing.assert_allclose(reset.matrix[:m, :m], before[0, :, 0, :] + before[1, :, 1, :], atol=1e-15)
    np.testing.assert_array_equal(spin_reset(reset).matrix, reset.matrix)
    assert reset.min_eigenvalue() > -1e-12


def test_scan_single_component_and_exact_mode():
    space = make_space(4, 3)
    rho = basis_state(space, "down", 0, 0).to_density()
    t = np.linspace(0, 6 * math.pi / RABI, 40)
    scan = simulate_bsb_scan(rho, "x", RABI, 0.0, t, shots=None)
    np.testing.assert_allclose(scan.p_up, 0.5 * (1 + np.cos(RABI * t)), atol=1e-15)
    np.testing.assert_array_equal(scan.p_up, scan.p_exact)


def test_readout_signal_equals_simulated_bsb_dynamics():
    # as_printed polarity is the stay-down probability of a blue sideband with
    # coupling RABI/2, evaluated here by matrix exponentials
    space = make_space(6, 3)
    weights = np.array([0.5, 0.3, 0.2])
    rho = fock_mixture(space, weights)
    t = np.linspace(0, 4 * math.pi / RABI, 25)
    scan = simulate_bsb_scan(rho, "x", RABI, 0.0, t)
    H = build_hamiltonian(space, HamiltonianSpec("sideband", terms=(SidebandTerm("blue", RABI, "x"),)))
    p_down = sum(w * (1 - evolve_unitary(H, basis_state(space, "down", n, 0), t).p_up)
                 for n, w in enumerate(weights))
    np.testing.assert_allclose(scan.p_up, p_down, atol=1e-12)
    comp = simulate_bsb_scan(rho, "x", RABI, 0.0, t, polarity="complemented")
    np.testing.assert_allclose(comp.p_up, 1 - p_down, atol=1e-12)


def test_scan_requires_reset_and_valid_shots():
    space = make_space(3, 3)
    t = np.linspace(0, 1e-4, 5)
    with pytest.raises(InvalidArgumentError):
        simulate_bsb_scan(basis_state(space, "up", 1, 0).to_density(), "x", RABI, 0.0, t)
    with pytest.raises(InvalidArgumentError):
        ReadoutScan("x", t, np.full(5, 0.5), shots=0)
    with pytest.raises(InvalidArgumentError):
        ReadoutScan("x", t, np.full(5, 1.5))


def test_scan_sampling_statistics_and_reproducibility():
    space = make_space(4, 3)
    rho = fock_mixture(space, [0.6, 0.4])
    t = np.linspace(0, 20 * math.pi / RABI, 2000)
    a = simulate_bsb_scan(rho, "x", RABI, 500.0, t, shots=300, seed=11)
    b = simulate_bsb_scan(rho, "x", RABI, 500.0, t, shots=300, seed=11)
    c = simulate_bsb_scan(rho, "x", RABI, 500.0, t, shots=300, seed=12)
    np.testing.assert_array_equal(a.p_up, b.p_up)
    assert not np.array_equal(a.p_up, c.p_up)
    err = a.p_up - a.p_exact
    assert np.std(err) <= 0.5 / math.sqrt(300)
    np.testing.assert_allclose(a.p_up * 300, np.round(a.p_up * 300), atol=1e-9)


def test_fit_noiseless_examples():
    t = np.linspace(0, 3 * 2 * math.pi / RABI, 40)
    scan = ReadoutScan("x", t, readout_signal([1.0], t, RABI, 0.0))
    fit = fit_populations(scan, RABI, 0.0, 3)
    np.testing.assert_allclose(fit.populations, [1, 0, 0, 0], atol=1e-10)
    assert fit.residual < 1e-10
    scan = ReadoutScan("x", t, readout_signal([0.5, 0.3, 0.2], t, RABI, 300.0))
    fit = fit_populations(scan, RABI, 300.0, 2)
    np.testing.assert_allclose(fit.populations, [0.5, 0.3, 0.2], atol=1e-6)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5), st.floats(0.0, 2000.0),
       st.sampled_from(["as_printed", "complemented"]))
@settings(max_examples=40, deadline=None)
def test_fit_round_trip(raw, gamma, polarity):
    w = np.asarray(raw)
    if w.sum() == 0:
        w = np.ones_like(w)
    w = w / w.sum()
    t = np.linspace(0, 3 * 2 * math.pi / RABI, 40)
    scan = ReadoutScan("x", t, readout_signal(w, t, RABI, gamma, polarity))
    fit = fit_populations(scan, RABI, gamma, len(w) - 1, polarity)
    np.testing.assert_allclose(fit.populations, w, atol=1e-8)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_fit_invariants_on_noisy_scans(seed):
    space = make_space(5, 3)
    rho = fock_mixture(space, [0.7, 0.2, 0.1])
    t = np.linspace(0, 3 * 2 * math.pi / RABI, 40)
    scan = simulate_bsb_scan(rho, "x", RABI, 0.0, t, shots=50, seed=seed)
    fit = fit_populations(scan, RABI, 0.0, 3)
    assert np.all(fit.populations >= 0)
    assert fit.populations.sum() <= 1 + 1e-9


def test_fit_sum_constraint_active():
    # a scan pushed beyond full contrast would need sum(P_n) > 1
    t = np.linspace(0, 3 * 2 * math.pi / RABI, 40)
    p = np.clip(0.5 * (1 + 1.3 * np.cos(RABI * t)), 0, 1)
    fit = fit_populations(ReadoutScan("x", t, p), RABI, 0.0, 2)
    assert fit.populations.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(fit.populations >= 0)


def test_fit_ill_conditioned_warning():
    t = np.linspace(0, 0.2 / RABI, 12)
    scan = ReadoutScan("x", t, readout_signal([1.0], t, RABI, 0.0))
    with pytest.warns(IllConditionedWarning):
        fit = fit_populations(scan, RABI, 0.0, 8)
    assert fit.condition_number > 1e6 and fit.warnings
    with pytest.raises(InvalidArgumentError):
        fit_populations(scan, RABI, 0.0, -1)


def test_default_n_max():
    assert default_n_max([0.5, 0.3, 0.1999, 0.0001]) == 2
    assert default_n_max([0.5, 0.3, 0.2, 0.0], cap=1) == 1
    assert default_n_max([0.2, 0.2]) == 1


def test_rabi_ratios_ideal():
    t = np.linspace(0, 20 / RABI, 400)
    report = rabi_ratio_report([flop_scan(n, RABI, 0.0, t) for n in range(6)])
    np.testing.assert_allclose(report.ratios, np.sqrt(np.arange(6) + 1), atol=1e-3)
    assert report.ratios[0] == 1.0
    assert all(f.converged for f in report.fits)


def test_rabi_fit_reports_failure():
    report = rabi_ratio_report([ReadoutScan("x", [0.0, 1.0], [1.0, 0.5])])
    assert not report.fits[0].converged and report.fits[0].message
    with pytest.raises(InvalidArgumentError):
        rabi_ratio_report([])
