"""Truncated spin-1/2 x mode-x x mode-y Hilbert space and its elementary operators.

Basis ordering is spin-major, then n_x, then n_y::

    index = spin * (d_x * d_y) + n_x * d_y + n_y,   spin: down=0, up=1

which is exactly the ordering produced by ``kron(spin, kron(mode_x, mode_y))``.
Truncation is hard: the creation operator annihilates the top retained level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, SpaceMismatchError

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10
IMAG_TOL = 1e-9

SPIN_DOWN = 0
SPIN_UP = 1

_SPIN_ALIASES = {
    "down": SPIN_DOWN, "dn": SPIN_DOWN, "↓": SPIN_DOWN, 0: SPIN_DOWN,
    "up": SPIN_UP, "↑": SPIN_UP, 1: SPIN_UP,
}


def parse_spin(spin) -> int:
    try:
        return _SPIN_ALIASES[spin.lower() if isinstance(spin, str) else spin]
    except (KeyError, TypeError):
        raise InvalidArgumentError(f"unknown spin label {spin!r}") from None


@dataclass(frozen=True)
class SpaceSpec:
    d_x: int
    d_y: int

    def __post_init__(self):
        for name in ("d_x", "d_y"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")

    @property
    def dim(self) -> int:
        return 2 * self.d_x * self.d_y

    def index(self, spin, n_x: int, n_y: int) -> int:
        s = parse_spin(spin)
        if not 0 <= n_x < self.d_x:
            raise InvalidArgumentError(f"n_x={n_x} outside truncation 0..{self.d_x - 1}")
        if not 0 <= n_y < self.d_y:
            raise InvalidArgumentError(f"n_y={n_y} outside truncation 0..{self.d_y - 1}")
        return s * self.d_x * self.d_y + n_x * self.d_y + n_y

    def labels(self):
        """Arrays (spin, n_x, n_y) giving the quantum numbers of every basis index."""
        idx = np.arange(self.dim)
        return idx // (self.d_x * self.d_y), (idx // self.d_y) % self.d_x, idx % self.d_y


def make_space(d_x: int, d_y: int) -> SpaceSpec:
    return SpaceSpec(d_x, d_y)


def _check_same(a: SpaceSpec, b: SpaceSpec):
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class Operator:
    """Sparse complex matrix tagged with the space it acts on.

    Supports ``+``, ``-``, scalar ``*`` and ``/``, and ``@`` with operators
    (giving an Operator) or with state vectors / ndarrays (giving an ndarray).
    """

    space: SpaceSpec
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise InvalidArgumentError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}")
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            res = hermiticity_residual(m)
            if res >= HERMITIAN_TOL:
                raise InvalidArgumentError(f"operator flagged Hermitian has residual {res:.3e}")

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T.tocsr(), self.hermitian)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return hermiticity_residual(self.matrix) < tol

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_same(self.space, other.space)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            _check_same(self.space, other.space)
            return self.matrix @ other.amplitudes
        return self.matrix @ np.asarray(other)

    def __add__(self, other):
        if isinstance(other, Operator):
            _check_same(self.space, other.space)
            return Operator(self.space, self.matrix + other.matrix)
        if np.isscalar(other):
            return Operator(self.space, self.matrix + other * sp.identity(self.space.dim))
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __rsub__(self, other):
        return (-1) * self + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __neg__(self):
        return self * -1


def hermiticity_residual(matrix) -> float:
    diff = matrix - matrix.conj().T
    if sp.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def anticommutator(a: Operator, b: Operator) -> Operator:
    return a @ b + b @ a


def identity(space: SpaceSpec) -> Operator:
    return Operator(space, sp.identity(space.dim, format="csr"), hermitian=True)


def _embed(space: SpaceSpec, spin=None, x=None, y=None) -> sp.csr_matrix:
    spin = sp.identity(2) if spin is None else spin
    x = sp.identity(space.d_x) if x is None else x
    y = sp.identity(space.d_y) if y is None else y
    return sp.kron(spin, sp.kron(x, y)).tocsr()


def _ladder(d: int) -> sp.csr_matrix:
    # <n-1|a|n> = sqrt(n)
    return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), 1, shape=(d, d), format="csr")


def mode_op(space: SpaceSpec, mode: str, kind: str) -> Operator:
    """Annihilation, creation or number operator of mode ``'x'`` or ``'y'``."""
    if mode not in ("x", "y"):
        raise InvalidArgumentError(f"mode must be 'x' or 'y', got {mode!r}")
    d = space.d_x if mode == "x" else space.d_y
    if kind == "annihilate":
        local = _ladder(d)
    elif kind == "create":
        local = _ladder(d).T.tocsr()
    elif kind == "number":
        local = sp.diags(np.arange(d, dtype=float), 0, format="csr")
    else:
        raise InvalidArgumentError(f"unknown mode operator kind {kind!r}")
    mat = _embed(space, x=local) if mode == "x" else _embed(space, y=local)
    return Operator(space, mat, hermitian=(kind == "number"))


def spin_op(space: SpaceSpec, kind: str) -> Operator:
    """sigma_+ (``'raise'``), sigma_- (``'lower'``) or sigma_z (``'z'``, -1 on down)."""
    if kind == "raise":
        local = sp.csr_matrix(([1.0], ([SPIN_UP], [SPIN_DOWN])), shape=(2, 2))
    elif kind == "lower":
        local = sp.csr_matrix(([1.0], ([SPIN_DOWN], [SPIN_UP])), shape=(2, 2))
    elif kind == "z":
        local = sp.diags([-1.0, 1.0], 0, format="csr")
    else:
        raise InvalidArgumentError(f"unknown spin operator kind {kind!r}")
    return Operator(space, _embed(space, spin=local), hermitian=(kind == "z"))


def diagonal_op(space: SpaceSpec, values) -> Operator:
    values = np.asarray(values)
    if values.shape != (space.dim,):
        raise InvalidArgumentError("diagonal length does not match space dimension")
    return Operator(space, sp.diags(values, 0, format="csr"),
                    hermitian=bool(np.all(np.isreal(values))))


@dataclass(frozen=True, eq=False)
class StateVector:
    space: SpaceSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.space.dim,):
            raise InvalidArgumentError(
                f"amplitude length {amps.shape[0]} does not match space dimension {self.space.dim}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"state is not normalized (norm {norm:.12g})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, space: SpaceSpec, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidArgumentError("cannot normalize the zero vector")
        return cls(space, amps / norm)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: "StateVector") -> complex:
        _check_same(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def to_density(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(self.space, np.outer(psi, psi.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix; validated on construction unless ``validate=False``."""

    space: SpaceSpec
    matrix: np.ndarray
    validate: bool = True

    TRACE_TOL = 1e-8
    HERM_TOL = 1e-10
    POS_TOL = 1e-8

    def __post_init__(self):
        m = np.array(self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix,
                     dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise InvalidArgumentError(
                f"density matrix shape {m.shape} does not match dimension {self.space.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.validate:
            tr = np.trace(m)
            if abs(tr - 1.0) > self.TRACE_TOL:
                raise InvalidArgumentError(f"trace {tr.real:.12g} differs from 1")
            if hermiticity_residual(m) > self.HERM_TOL:
                raise InvalidArgumentError("density matrix is not Hermitian")
            if self.min_eigenvalue() < -self.POS_TOL:
                raise InvalidArgumentError("density matrix has a negative eigenvalue")

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    @classmethod
    def mixture(cls, states, weights) -> "DensityMatrix":
        states = list(states)
        if not states:
            raise InvalidArgumentError("empty mixture")
        space = states[0].space
        rho = np.zeros((space.dim, space.dim), dtype=complex)
        for state, w in zip(states, weights):
            _check_same(space, state.space)
            rho += w * np.outer(state.amplitudes, state.amplitudes.conj())
        return cls(space, rho)


def basis_state(space: SpaceSpec, spin, n_x: int, n_y: int) -> StateVector:
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.index(spin, n_x, n_y)] = 1.0
    return StateVector(space, amps)


State = Union[StateVector, DensityMatrix]


def expectation(state: State, obs: Operator) -> float:
    """Real expectation value of a Hermitian observable."""
    _check_same(state.space, obs.space)
    if not obs.is_hermitian():
        raise InvalidArgumentError("expectation requires a Hermitian observable")
    if isinstance(state, StateVector):
        psi = state.amplitudes
        value = np.vdot(psi, obs.matrix @ psi)
    elif isinstance(state, DensityMatrix):
        value = (obs.matrix.multiply(state.matrix.T)).sum()
    else:
        raise InvalidArgumentError(f"unsupported state type {type(state).__name__}")
    if abs(value.imag) > IMAG_TOL:
        raise InvalidArgumentError(f"expectation has imaginary residue {value.imag:.3e}")
    return float(value.real)


def mode_populations(state: State, mode: str) -> np.ndarray:
    """Marginal Fock distribution of one mode (spin and other mode traced out)."""
    space = state.space
    probs = state.probabilities() if isinstance(state, StateVector) else state.populations()
    cube = probs.reshape(2, space.d_x, space.d_y)
    if mode == "x":
        return cube.sum(axis=(0, 2))
    if mode == "y":
        return cube.sum(axis=(0, 1))
    raise InvalidArgumentError(f"mode must be 'x' or 'y', got {mode!r}")


def top_level_population(probabilities: np.ndarray, space: SpaceSpec, levels: int = 2) -> float:
    """Probability weight on the top ``levels`` Fock states of either mode."""
    _, nx, ny = space.labels()
    mask = (nx >= space.d_x - levels) | (ny >= space.d_y - levels)
    return float(np.sum(np.asarray(probabilities)[mask]))
