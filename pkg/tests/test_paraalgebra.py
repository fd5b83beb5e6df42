import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraion.errors import InvalidArgumentError
from paraion.fockspace import StateVector, basis_state, expectation, make_space
from paraion.paraalgebra import (
    ParaModel,
    exact_step_coefficient,
    ladder_states,
    number_operator,
    para_lowering,
    parity_operator,
    vacuum_state,
    verify_relations,
)

ORDERS = [2, 4, 6, 8, 10]


def pf_rung(k, p):
    # A^dag alternates a_y (spin up) and a_x^dag (spin down) starting from |down, 0, p/2>
    h, j = p // 2, k // 2
    return ("down", j, h - j) if k % 2 == 0 else ("up", j, h - j - 1)


def pb_rung(k, p):
    h, j = p // 2, k // 2
    return ("down", h - 1 + j, j) if k % 2 == 0 else ("up", h + j, j)


def test_lowering_examples():
    space = make_space(3, 3)
    assert not np.any(para_lowering(space, "pF") @ basis_state(space, "down", 0, 1))
    assert not np.any(para_lowering(space, "pB") @ basis_state(space, "down", 0, 0))
    raised = para_lowering(space, "pF").dag() @ basis_state(space, "down", 0, 1)
    np.testing.assert_allclose(raised, np.sqrt(2) * basis_state(space, "up", 0, 0).amplitudes,
                               atol=1e-15)


def test_model_validation():
    for bad in (0, 3, -2, 2.0, True):
        with pytest.raises(InvalidArgumentError):
            ParaModel("pF", bad)
    with pytest.raises(InvalidArgumentError):
        ParaModel("pF", 2, branch="spin_up")
    with pytest.raises(InvalidArgumentError):
        ParaModel("para_anyon", 2)
    assert ParaModel("para-Bose", 4).kind == "para_bose"


def test_vacuum_examples():
    space = make_space(8, 8)
    pf10 = vacuum_state(space, ParaModel("pF", 10))
    assert pf10.fidelity(basis_state(space, "down", 0, 5)) == 1.0
    assert vacuum_state(space, ParaModel("pF", 2)).fidelity(basis_state(space, "down", 0, 1)) == 1.0
    assert vacuum_state(space, ParaModel("pB", 2)).fidelity(basis_state(space, "down", 0, 0)) == 1.0
    assert vacuum_state(space, ParaModel("pB", 4, "spin_up")).fidelity(
        basis_state(space, "up", 0, 1)) == 1.0
    with pytest.raises(InvalidArgumentError):
        vacuum_state(make_space(3, 3), ParaModel("pF", 10))


@pytest.mark.parametrize("p", ORDERS)
@pytest.mark.parametrize("kind,branch", [("pF", "spin_down"), ("pB", "spin_down"), ("pB", "spin_up")])
def test_vacuum_eigenvalue(kind, branch, p):
    space = make_space(p // 2 + 3, p // 2 + 3)
    model = ParaModel(kind, p, branch)
    A = para_lowering(space, kind)
    vac = vacuum_state(space, model)
    assert np.max(np.abs(A @ vac)) < 1e-15
    assert np.max(np.abs((A @ A.dag()) @ vac - p * vac.amplitudes)) < 1e-10


def test_p2_ladders():
    space = make_space(3, 3)
    fam = ladder_states(space, ParaModel("pF", 2), depth=2)
    expected = [("down", 0, 1), ("up", 0, 0), ("down", 1, 0)]
    for s, lab in zip(fam.states, expected):
        assert s.fidelity(basis_state(space, *lab)) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(fam.step_coefficients, [np.sqrt(2), np.sqrt(2)], atol=1e-14)
    # at p = 2 the two-mode ladder agrees with sqrt((k+1)(p-k))
    np.testing.assert_allclose(fam.step_coefficients, [np.sqrt((k + 1) * (2 - k)) for k in range(2)])

    space = make_space(5, 5)
    fam = ladder_states(space, ParaModel("pB", 2), depth=2)
    for s, lab in zip(fam.states, [("down", 0, 0), ("up", 1, 0), ("down", 1, 1)]):
        assert s.fidelity(basis_state(space, *lab)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("p", ORDERS)
def test_pf_ladder_matches_hand_derived_rungs(p):
    space = make_space(p // 2 + 1, p // 2 + 1)
    model = ParaModel("pF", p)
    fam = ladder_states(space, model)
    assert len(fam.states) == p + 1
    for k, s in enumerate(fam.states):
        assert s.fidelity(basis_state(space, *pf_rung(k, p))) == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(fam.step_coefficients,
                               [exact_step_coefficient(model, k) for k in range(p)], atol=1e-13)
    # closed top rung
    top = para_lowering(space, "pF").dag() @ fam.states[-1]
    assert not np.any(top)
    with pytest.raises(InvalidArgumentError):
        ladder_states(space, model, depth=p + 1)


@pytest.mark.parametrize("p", [2, 4, 6])
def test_pb_ladder_matches_hand_derived_rungs(p):
    space = make_space(12, 12)
    model = ParaModel("pB", p)
    fam = ladder_states(space, model, depth=8)
    for k, s in enumerate(fam.states):
        assert s.fidelity(basis_state(space, *pb_rung(k, p))) == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(fam.step_coefficients,
                               [exact_step_coefficient(model, k) for k in range(8)], atol=1e-12)


def test_pb_ladder_overflow():
    with pytest.raises(InvalidArgumentError):
        ladder_states(make_space(4, 4), ParaModel("pB", 2), depth=10)


@pytest.mark.parametrize("kind,p,branch,dims", [
    ("pF", 2, "spin_down", (2, 2)), ("pF", 6, "spin_down", (4, 4)), ("pF", 10, "spin_down", (6, 6)),
    ("pB", 2, "spin_down", (10, 10)), ("pB", 4, "spin_up", (10, 10)),
])
def test_ladder_properties(kind, p, branch, dims):
    space = make_space(*dims)
    model = ParaModel(kind, p, branch)
    fam = ladder_states(space, model)
    B = fam.basis_matrix()
    np.testing.assert_allclose(B.conj().T @ B, np.eye(B.shape[1]), atol=1e-10)
    Ad = para_lowering(space, kind).dag()
    R = parity_operator(space, model)
    N = number_operator(space, model)
    for k, s in enumerate(fam.states):
        np.testing.assert_allclose(R @ s, (-1) ** k * s.amplitudes, atol=1e-12)
        assert expectation(s, N) == pytest.approx(k, abs=1e-12)
        if k + 1 < len(fam.states):
            nxt = Ad @ s
            assert abs(np.vdot(fam.states[k + 1].amplitudes, nxt)) == pytest.approx(
                np.linalg.norm(nxt), abs=1e-10)


@given(st.lists(st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False),
                min_size=5, max_size=5).filter(lambda z: np.linalg.norm(z) > 1e-3))
@settings(max_examples=30, deadline=None)
def test_para_number_matches_ladder_expectation(coeffs):
    space = make_space(4, 4)
    model = ParaModel("pF", 4)
    fam = ladder_states(space, model)
    psi = StateVector.normalized(space, fam.basis_matrix() @ np.asarray(coeffs))
    ladder_mean = float(np.arange(5) @ fam.populations(psi))
    assert expectation(psi, number_operator(space, model)) == pytest.approx(ladder_mean, abs=1e-8)


def test_number_and_parity_examples():
    space = make_space(3, 3)
    pf, pb = ParaModel("pF", 2), ParaModel("pB", 2)
    assert expectation(basis_state(space, "down", 0, 1), number_operator(space, pf)) == 0
    assert expectation(basis_state(space, "up", 0, 0), number_operator(space, pf)) == 1
    assert expectation(basis_state(space, "down", 1, 1), number_operator(space, pb)) == 2
    assert expectation(basis_state(space, "down", 0, 1), parity_operator(space, pf)) == 1
    assert expectation(basis_state(space, "up", 1, 0), parity_operator(space, pb)) == -1
    for m in (pf, pb):
        R = parity_operator(space, m).toarray()
        np.testing.assert_array_equal(R @ R, np.eye(space.dim))


def test_verify_pf2_all_pass():
    report = verify_relations(make_space(3, 3), ParaModel("pF", 2))
    assert report.all_passed, report.residuals
    assert max(report.residuals.values()) < 1e-9
    # the reversed inner-commutator order gives the opposite sign
    assert report.reversed_order["trilinear_pF"] > 1.0


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("branch", ["spin_down", "spin_up"])
def test_verify_pb_all_pass(p, branch):
    report = verify_relations(make_space(20, 20), ParaModel("pB", p, branch))
    assert report.all_passed, report.failures
    assert len(report.rungs) > 10


@pytest.mark.parametrize("p", [4, 10])
def test_pf_higher_order_two_mode_ladder_is_parity_deformed_only(p):
    # the two-mode ladder carries c_k^2 = p - k / k + 1, not (k+1)(p-k): the
    # parity-deformed relations hold but the cubic relation does not
    report = verify_relations(make_space(p // 2 + 3, p // 2 + 3), ParaModel("pF", p))
    assert set(report.failures) == {"trilinear_pF", "trilinear_pF_dag"}
    space = report.space
    A = para_lowering(space, "pF")
    fam = ladder_states(space, ParaModel("pF", p))
    B = fam.basis_matrix()
    inner = B.conj().T @ (A @ A.dag() - A.dag() @ A).toarray() @ B
    k = np.arange(p + 1)
    np.testing.assert_allclose(np.diag(inner).real, -2 * (k - p / 2) * (-1.0) ** k, atol=1e-12)


def test_parity_realization_branches():
    pf = verify_relations(make_space(3, 3), ParaModel("pF", 2)).to_dict()
    assert pf["parity_realization"]["table_form_holds"]
    up = verify_relations(make_space(12, 12), ParaModel("pB", 2, "spin_up")).to_dict()
    assert up["parity_realization"]["table_form_holds"]
    down = verify_relations(make_space(12, 12), ParaModel("pB", 2, "spin_down")).to_dict()
    assert not down["parity_realization"]["table_form_holds"]
    assert down["parity_realization"]["residuals"]["-sigma_z"] < 1e-12


def test_pb_half_anticommutator_on_vacuum():
    space = make_space(5, 5)
    A = para_lowering(space, "pB")
    vac = vacuum_state(space, ParaModel("pB", 2))
    np.testing.assert_allclose(0.5 * ((A @ A.dag() + A.dag() @ A) @ vac), vac.amplitudes, atol=1e-14)


def test_pf_commutator_on_vacuum():
    space = make_space(3, 3)
    A = para_lowering(space, "pF")
    vac = vacuum_state(space, ParaModel("pF", 2))
    np.testing.assert_allclose((A.dag() @ A - A @ A.dag()) @ vac, -2 * vac.amplitudes, atol=1e-14)


def test_corrupted_operator_fails_and_report_is_json():
    space = make_space(3, 3)
    report = verify_relations(space, ParaModel("pF", 2), lowering=1.01 * para_lowering(space, "pF"))
    assert "trilinear_pF" in report.failures
    data = json.loads(json.dumps(report.to_dict()))
    assert data["identities"]["trilinear_pF"]["passed"] is False
    assert all(v["residual"] >= 0 for v in data["identities"].values())
