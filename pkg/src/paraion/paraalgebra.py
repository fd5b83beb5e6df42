"""Para-Fermi and para-Bose ladder operators realized on one spin and two modes.

The effective operators are

    A_pF = sqrt(2) (a_x s+ + a_y^dag s-)
    A_pB = sqrt(2) (a_x s- - a_y s+)

with para-particle number N_pF = n_x - n_y + p/2, N_pB = n_x + n_y + 1 - p/2 and
parity R = (-1)^N.  ``verify_relations`` checks the trilinear, parity-deformed
and ion-frame identities on the span of ladder states that hard truncation
cannot corrupt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .fockspace import (
    Operator,
    SpaceSpec,
    StateVector,
    anticommutator,
    basis_state,
    commutator,
    diagonal_op,
    identity,
    mode_op,
    spin_op,
)

PARA_FERMI = "para_fermi"
PARA_BOSE = "para_bose"
RELATION_TOL = 1e-9
# Levels kept free at the top of each mode when selecting rungs for verification.
GUARD_LEVELS = 2

_KIND_ALIASES = {
    "para_fermi": PARA_FERMI, "pf": PARA_FERMI, "parafermi": PARA_FERMI, "fermi": PARA_FERMI,
    "para_bose": PARA_BOSE, "pb": PARA_BOSE, "parabose": PARA_BOSE, "bose": PARA_BOSE,
}


def parse_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[str(kind).lower().replace("-", "_")]
    except KeyError:
        raise InvalidArgumentError(f"unknown para-particle kind {kind!r}") from None


def short_kind(kind: str) -> str:
    return "pF" if parse_kind(kind) == PARA_FERMI else "pB"


@dataclass(frozen=True)
class ParaModel:
    kind: str
    order: int
    branch: str = "spin_down"
    g: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        p = self.order
        if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 2 or p % 2:
            raise InvalidArgumentError(f"order must be an even integer >= 2, got {p!r}")
        if self.branch not in ("spin_down", "spin_up"):
            raise InvalidArgumentError(f"unknown vacuum branch {self.branch!r}")
        if self.kind == PARA_FERMI and self.branch != "spin_down":
            raise InvalidArgumentError("para-Fermi models only have the spin_down vacuum")
        if not np.isfinite(self.g) or self.g < 0:
            raise InvalidArgumentError(f"coupling g must be finite and >= 0, got {self.g!r}")

    @property
    def is_fermi(self) -> bool:
        return self.kind == PARA_FERMI


def para_lowering(space: SpaceSpec, kind: str) -> Operator:
    kind = parse_kind(kind)
    ax = mode_op(space, "x", "annihilate")
    ay = mode_op(space, "y", "annihilate")
    sp_, sm = spin_op(space, "raise"), spin_op(space, "lower")
    if kind == PARA_FERMI:
        return np.sqrt(2) * (ax @ sp_ + ay.dag() @ sm)
    return np.sqrt(2) * (ax @ sm - ay @ sp_)


def vacuum_labels(model: ParaModel) -> Tuple[str, int, int]:
    half = model.order // 2
    if model.is_fermi:
        return ("down", 0, half)
    if model.branch == "spin_down":
        return ("down", half - 1, 0)
    return ("up", 0, half - 1)


def vacuum_state(space: SpaceSpec, model: ParaModel) -> StateVector:
    spin, nx, ny = vacuum_labels(model)
    if nx >= space.d_x or ny >= space.d_y:
        raise InvalidArgumentError(
            f"truncation ({space.d_x}, {space.d_y}) too small for vacuum |{spin}, {nx}, {ny}>")
    return basis_state(space, spin, nx, ny)


def number_operator(space: SpaceSpec, model: ParaModel) -> Operator:
    _, nx, ny = space.labels()
    half = model.order / 2
    if model.is_fermi:
        values = nx - ny + half
    else:
        values = nx + ny + 1 - half
    return diagonal_op(space, values.astype(float))


def parity_operator(space: SpaceSpec, model: ParaModel) -> Operator:
    n = np.rint(number_operator(space, model).matrix.diagonal().real).astype(int)
    return diagonal_op(space, np.where(n % 2 == 0, 1.0, -1.0))


def fock_support(state: StateVector, threshold: float = 1e-20) -> Tuple[int, int]:
    """Highest occupied Fock level of (mode x, mode y)."""
    space = state.space
    cube = state.probabilities().reshape(2, space.d_x, space.d_y) > threshold
    xs = np.nonzero(cube.any(axis=(0, 2)))[0]
    ys = np.nonzero(cube.any(axis=(0, 1)))[0]
    return (int(xs.max()) if xs.size else 0, int(ys.max()) if ys.size else 0)


def _headroom(state: StateVector) -> int:
    sx, sy = fock_support(state)
    return min(state.space.d_x - 1 - sx, state.space.d_y - 1 - sy)


@dataclass
class LadderFamily:
    """Rungs |p;0>, |p;1>, ..., |p;depth> with A^dag|p;k> = c_k |p;k+1>."""

    model: ParaModel
    states: List[StateVector]
    step_coefficients: List[float]

    @property
    def depth(self) -> int:
        return len(self.states) - 1

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack([s.amplitudes for s in self.states])

    def populations(self, psi: StateVector) -> np.ndarray:
        return np.abs(self.basis_matrix().conj().T @ psi.amplitudes) ** 2


def default_depth(space: SpaceSpec, model: ParaModel) -> int:
    """Full ladder for pF; deepest guarded rung for pB."""
    if model.is_fermi:
        return model.order
    a_dag = para_lowering(space, model.kind).dag()
    state = vacuum_state(space, model)
    if _headroom(state) < GUARD_LEVELS:
        raise InvalidArgumentError("truncation leaves no guarded para-Bose rungs")
    k = 0
    while True:
        nxt = a_dag @ state
        candidate = StateVector.normalized(space, nxt)
        if _headroom(state) < 1 or _headroom(candidate) < GUARD_LEVELS:
            return k
        state, k = candidate, k + 1


def ladder_states(space: SpaceSpec, model: ParaModel, depth: Optional[int] = None,
                  lowering: Optional[Operator] = None) -> LadderFamily:
    """Build rungs by repeated application of A^dag and normalization.

    ``depth`` is the index of the highest rung (so ``depth + 1`` states). A
    custom ``lowering`` operator may be supplied to inspect a modified algebra.
    """
    if depth is None:
        depth = default_depth(space, model)
    if depth < 0:
        raise InvalidArgumentError("depth must be >= 0")
    if model.is_fermi and depth > model.order:
        raise InvalidArgumentError(
            f"para-Fermi ladder of order {model.order} has only {model.order + 1} rungs")
    if model.is_fermi and min(space.d_x, space.d_y) <= model.order // 2:
        raise InvalidArgumentError(
            f"para-Fermi order {model.order} needs at least {model.order // 2 + 1} levels per mode")
    a_dag = (lowering if lowering is not None else para_lowering(space, model.kind)).dag()
    states = [vacuum_state(space, model)]
    coeffs: List[float] = []
    for k in range(depth):
        current = states[-1]
        # the pF ladder is closed below p/2 in both modes; pB rungs climb without bound
        if not model.is_fermi and _headroom(current) < 1:
            raise InvalidArgumentError(
                f"truncation overflow: rung {k + 1} needs Fock levels beyond ({space.d_x}, {space.d_y})")
        raised = a_dag @ current
        norm = float(np.linalg.norm(raised))
        if norm < 1e-12:
            raise InvalidArgumentError(f"ladder terminates at rung {k}")
        coeffs.append(norm)
        states.append(StateVector(space, raised / norm))
    return LadderFamily(model, states, coeffs)


def exact_step_coefficient(model: ParaModel, k: int) -> float:
    """Norm of A^dag|p;k> in the two-mode realization (parity-deformed ladder)."""
    p = model.order
    if model.is_fermi:
        if k >= p:
            return 0.0
        return float(np.sqrt(p - k if k % 2 == 0 else k + 1))
    return float(np.sqrt(p + k if k % 2 == 0 else k + 1))


def guarded_rungs(space: SpaceSpec, model: ParaModel, family: LadderFamily) -> List[int]:
    """Rungs on which products of up to two raisings stay inside the truncation."""
    if model.is_fermi:
        return list(range(len(family.states)))
    return [k for k, s in enumerate(family.states) if _headroom(s) >= GUARD_LEVELS]


@dataclass
class RelationReport:
    model: ParaModel
    space: SpaceSpec
    rungs: List[int]
    residuals: Dict[str, float] = field(default_factory=dict)
    # Residuals of R = +sigma_z and R = -sigma_z on the ladder (informational).
    parity_realization: Dict[str, float] = field(default_factory=dict)
    # pF trilinear identities with the inner commutator written as [A, A^dag] (informational).
    reversed_order: Dict[str, float] = field(default_factory=dict)
    tolerance: float = RELATION_TOL

    @property
    def passed(self) -> Dict[str, bool]:
        return {name: r < self.tolerance for name, r in self.residuals.items()}

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    @property
    def failures(self) -> List[str]:
        return [name for name, ok in self.passed.items() if not ok]

    def to_dict(self) -> dict:
        table_sign = "-sigma_z" if self.model.is_fermi else "+sigma_z"
        return {
            "kind": short_kind(self.model.kind),
            "order": self.model.order,
            "branch": self.model.branch,
            "truncation": [self.space.d_x, self.space.d_y],
            "rungs": self.rungs,
            "tolerance": self.tolerance,
            "identities": {
                name: {"residual": r, "passed": r < self.tolerance}
                for name, r in self.residuals.items()
            },
            "parity_realization": {
                "residuals": dict(self.parity_realization),
                "table_form": table_sign,
                "table_form_holds": self.parity_realization.get(table_sign, np.inf) < self.tolerance,
            },
            "reversed_inner_commutator": dict(self.reversed_order),
            "all_passed": self.all_passed,
        }


def verify_relations(space: SpaceSpec, model: ParaModel,
                     lowering: Optional[Operator] = None) -> RelationReport:
    """Evaluate every algebraic identity on the guarded ladder subspace.

    Residual = max |(LHS - RHS) v| over the guarded ladder vectors v.
    Failures are reported, never raised.
    """
    A = lowering if lowering is not None else para_lowering(space, model.kind)
    Ad = A.dag()
    family = ladder_states(space, model, lowering=A) if lowering is not None \
        else ladder_states(space, model)
    rungs = guarded_rungs(space, model, family)
    if not rungs:
        raise InvalidArgumentError("no guarded ladder rungs inside the truncation")
    B = family.basis_matrix()[:, rungs]

    one = identity(space)
    N = number_operator(space, model)
    R = parity_operator(space, model)
    sz = spin_op(space, "z")
    nx, ny = mode_op(space, "x", "number"), mode_op(space, "y", "number")
    p = model.order

    def residual(lhs: Operator, rhs: Operator) -> float:
        diff = (lhs - rhs) @ B
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    checks: Dict[str, Callable[[], float]] = {}
    comm = commutator(A, Ad)
    if model.is_fermi:
        # Green's ordering [[A^dag, A], A] = -2A; the reversed inner commutator
        # flips sign (already for ordinary fermions) and is kept as informational.
        checks["trilinear_pF"] = lambda: residual(commutator(-1 * comm, A), -2 * A)
        checks["trilinear_pF_dag"] = lambda: residual(commutator(-1 * comm, Ad), 2 * Ad)
        checks["anticomm_pF_parity"] = lambda: residual(anticommutator(Ad, A), (p + 1) * one - R)
        checks["anticomm_pF_parity_sigma_z"] = lambda: residual(anticommutator(Ad, A),
                                                                (p + 1) * one + sz)
        checks["comm_pF_parity"] = lambda: residual(commutator(Ad, A), 2 * (N - p / 2) @ R)
        checks["table_comm_pF"] = lambda: residual(comm, 2 * (nx - ny) @ sz)
        checks["table_anticomm_pF"] = lambda: residual(anticommutator(Ad, A),
                                                       2 * (nx + ny + 1 + sz))
    else:
        acomm = anticommutator(A, Ad)
        checks["trilinear_pB"] = lambda: residual(commutator(acomm, A), -2 * A)
        checks["trilinear_pB_dag"] = lambda: residual(commutator(acomm, Ad), 2 * Ad)
        checks["comm_pB_parity"] = lambda: residual(comm, 1 + (p - 1) * R)
        checks["half_anticomm_pB_number"] = lambda: residual(0.5 * acomm, N + p / 2)
        checks["table_comm_pB"] = lambda: residual(comm, 2 * (ny - nx) @ sz + 2)
        checks["table_anticomm_pB"] = lambda: residual(anticommutator(Ad, A), 2 * (nx + ny + 1))
    checks["parity_anticomm_A"] = lambda: residual(anticommutator(R, A), 0 * one)
    checks["parity_anticomm_Adag"] = lambda: residual(anticommutator(R, Ad), 0 * one)
    checks["parity_squared"] = lambda: residual(R @ R, one)
    checks["vacuum_eigenvalue"] = lambda: float(np.max(np.abs(
        (A @ Ad) @ family.states[0] - p * family.states[0].amplitudes)))

    report = RelationReport(model, space, rungs)
    for name, fn in checks.items():
        report.residuals[name] = fn()
    if model.is_fermi:
        report.reversed_order["trilinear_pF"] = residual(commutator(comm, A), -2 * A)
        report.reversed_order["trilinear_pF_dag"] = residual(commutator(comm, Ad), 2 * Ad)
    report.parity_realization["+sigma_z"] = residual(R, sz)
    report.parity_realization["-sigma_z"] = residual(R, -1 * sz)
    return report
