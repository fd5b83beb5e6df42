"""Hamiltonians, unitary and Lindblad evolution, and observable trajectories.

Units: hbar = 1, couplings are angular frequencies (rad/s), times are seconds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy import constants
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .errors import InvalidArgumentError, LeakageError, LeakageWarning, NumericalError
from .fockspace import (
    DensityMatrix,
    Operator,
    SpaceSpec,
    StateVector,
    hermiticity_residual,
    make_space,
    mode_op,
    spin_op,
    top_level_population,
)
from .integrate import rk4_propagate
from .paraalgebra import ParaModel, number_operator, para_lowering, parse_kind, vacuum_state

LEAKAGE_THRESHOLD = 1e-4
DENSE_EXPM_MAX_DIM = 512
# RK4 step is chosen so that step * ||generator|| stays below this value.
RK_STEP_FRACTION = 0.01
UNITARY_NORM_TOL = 1e-9
TRACE_TOL = 1e-6

COLUMNS = ("t_s", "P_up", "n_x", "n_y", "N_para", "leakage")


@dataclass(frozen=True)
class SidebandTerm:
    """One laser drive: ``red``/``blue`` sideband on a mode, or the ``carrier``.

    red:     (eta*rabi/2) (a s+ e^{i phase} + a^dag s- e^{-i phase})
    blue:    (eta*rabi/2) (a s- e^{i phase} + a^dag s+ e^{-i phase})
    carrier: (rabi/2)     (s+ e^{i phase} + s- e^{-i phase})
    """

    type: str
    rabi: float
    mode: Optional[str] = None
    eta: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.type not in ("red", "blue", "carrier"):
            raise InvalidArgumentError(f"unknown sideband type {self.type!r}")
        if self.type != "carrier" and self.mode not in ("x", "y"):
            raise InvalidArgumentError(f"{self.type} sideband needs mode 'x' or 'y'")
        if self.rabi < 0 or self.eta < 0:
            raise InvalidArgumentError("Rabi frequency and Lamb-Dicke parameter must be >= 0")


@dataclass(frozen=True)
class HamiltonianSpec:
    """``form`` is one of para_driven, ion_pF, ion_pB, sideband.

    ``coupling`` is g for para_driven (with ``kind``) and Omega for the ion forms.
    """

    form: str
    coupling: float = 0.0
    kind: Optional[str] = None
    terms: Tuple[SidebandTerm, ...] = ()

    def __post_init__(self):
        if self.form not in ("para_driven", "ion_pF", "ion_pB", "sideband"):
            raise InvalidArgumentError(f"unknown Hamiltonian form {self.form!r}")
        if not np.isfinite(self.coupling) or self.coupling < 0:
            raise InvalidArgumentError("coupling must be finite and >= 0")
        if self.form == "para_driven" and self.kind is None:
            raise InvalidArgumentError("para_driven Hamiltonian needs a para-particle kind")
        if self.form == "sideband" and not self.terms:
            raise InvalidArgumentError("sideband Hamiltonian needs at least one term")
        if self.form != "sideband" and self.terms:
            raise InvalidArgumentError(f"form {self.form!r} does not take sideband terms")


def _sideband(space: SpaceSpec, term: SidebandTerm) -> Operator:
    sp_, sm = spin_op(space, "raise"), spin_op(space, "lower")
    e = np.exp(1j * term.phase)
    if term.type == "carrier":
        return (term.rabi / 2) * (e * sp_ + np.conj(e) * sm)
    a = mode_op(space, term.mode, "annihilate")
    ad = a.dag()
    pref = term.eta * term.rabi / 2
    if term.type == "red":
        return pref * (e * (a @ sp_) + np.conj(e) * (ad @ sm))
    return pref * (e * (a @ sm) + np.conj(e) * (ad @ sp_))


def build_hamiltonian(space: SpaceSpec, spec: HamiltonianSpec) -> Operator:
    if spec.form == "para_driven":
        A = para_lowering(space, spec.kind)
        H = (spec.coupling / 2) * (A + A.dag())
    elif spec.form in ("ion_pF", "ion_pB"):
        ax, ay = mode_op(space, "x", "annihilate"), mode_op(space, "y", "annihilate")
        sp_ = spin_op(space, "raise")
        if spec.form == "ion_pF":
            half = (ax + ay) @ sp_
        else:
            half = (ax.dag() - ay) @ sp_
        H = (spec.coupling / 2) * (half + half.dag())
    else:
        H = _sideband(space, spec.terms[0])
        for term in spec.terms[1:]:
            H = H + _sideband(space, term)
    return Operator(space, H.matrix, hermitian=True)


def para_hamiltonian(space: SpaceSpec, model: ParaModel) -> Operator:
    return build_hamiltonian(space, HamiltonianSpec("para_driven", model.g, model.kind))


def conserved_charge(space: SpaceSpec, kind: str) -> Operator:
    """n_x + n_y + s_z/2 for pF, n_x - n_y - s_z/2 for pB."""
    nx, ny = mode_op(space, "x", "number"), mode_op(space, "y", "number")
    sz = spin_op(space, "z")
    if parse_kind(kind) == "para_fermi":
        return nx + ny + 0.5 * sz
    return nx - ny - 0.5 * sz


@dataclass(frozen=True)
class NoiseSpec:
    """Motional heating.

    ``heating_rate`` r is the phonon growth rate d<n>/dt at the vacuum. With the
    factor-2 dissipator L[O]rho = 2 O rho O^dag - {O^dag O, rho}, this fixes
    gamma*n_th = r/2. ``n_th=None`` uses gamma*(n_th+1) ~ gamma*n_th.
    """

    heating_rate: float = 0.0
    n_th: Optional[float] = None
    per_mode: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        rates = [self.heating_rate, *self.per_mode.values()]
        if any((not np.isfinite(r)) or r < 0 for r in rates):
            raise InvalidArgumentError("heating rates must be finite and >= 0")
        if set(self.per_mode) - {"x", "y"}:
            raise InvalidArgumentError("per-mode overrides only accept 'x' and 'y'")
        if self.n_th is not None and not self.n_th > 0:
            raise InvalidArgumentError("n_th must be > 0 when given")

    def rate(self, mode: str) -> float:
        return float(self.per_mode.get(mode, self.heating_rate))

    def coefficients(self, mode: str) -> Tuple[float, float]:
        """(coefficient of L[a^dag], coefficient of L[a]) for one mode."""
        up = self.rate(mode) / 2
        if self.n_th is None:
            return up, up
        return up, up * (self.n_th + 1) / self.n_th

    @property
    def is_zero(self) -> bool:
        return self.rate("x") == 0 and self.rate("y") == 0


@dataclass
class Trajectory:
    times: np.ndarray
    p_up: np.ndarray
    n_x: np.ndarray
    n_y: np.ndarray
    n_para: np.ndarray
    leakage: np.ndarray
    snapshots: Optional[List[np.ndarray]] = None
    warnings: List[str] = field(default_factory=list)
    meta: Dict[str, object] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return {
            "t_s": self.times, "P_up": self.p_up, "n_x": self.n_x, "n_y": self.n_y,
            "N_para": self.n_para, "leakage": self.leakage,
        }[name]

    def table(self) -> np.ndarray:
        return np.column_stack([self.column(c) for c in COLUMNS])

    @property
    def max_leakage(self) -> float:
        return float(np.max(self.leakage)) if self.leakage.size else 0.0


class _Recorder:
    """Accumulates observables from basis-state probabilities."""

    def __init__(self, space: SpaceSpec, model: Optional[ParaModel], keep_states: bool):
        self.space = space
        spin, nx, ny = space.labels()
        self.up = (spin == 1).astype(float)
        self.nx = nx.astype(float)
        self.ny = ny.astype(float)
        self.npara = None if model is None else number_operator(space, model).matrix.diagonal().real
        self.keep = keep_states
        self.rows: List[Tuple[float, ...]] = []
        self.totals: List[float] = []
        self.states: List[np.ndarray] = []

    def add(self, t: float, probs: np.ndarray, state: np.ndarray):
        probs = probs.real
        self.totals.append(float(probs.sum()))
        probs = np.clip(probs, 0.0, None)
        n_para = float(probs @ self.npara) if self.npara is not None else float("nan")
        self.rows.append((t, float(np.clip(probs @ self.up, 0.0, 1.0)), float(probs @ self.nx),
                          float(probs @ self.ny), n_para,
                          top_level_population(probs, self.space)))
        if self.keep:
            self.states.append(np.array(state, copy=True))

    def finish(self, strict: bool, meta: dict) -> Trajectory:
        arr = np.array(self.rows, dtype=float).reshape(-1, 6)
        traj = Trajectory(*(arr[:, i].copy() for i in range(6)),
                          snapshots=self.states if self.keep else None, meta=meta)
        if traj.max_leakage > LEAKAGE_THRESHOLD:
            msg = (f"truncation leakage {traj.max_leakage:.3e} exceeds {LEAKAGE_THRESHOLD:g} "
                   f"at truncation ({self.space.d_x}, {self.space.d_y})")
            if strict:
                raise LeakageError(msg)
            warnings.warn(msg, LeakageWarning, stacklevel=3)
            traj.warnings.append(msg)
        return traj


def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size == 0:
        raise InvalidArgumentError("time list is empty")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError("times must be finite and nonnegative")
    if np.any(np.diff(t) < 0):
        raise InvalidArgumentError("times must be sorted")
    return t


def _norm1(matrix) -> float:
    return float(abs(matrix).sum(axis=0).max()) if matrix.nnz else 0.0


def _is_uniform(t: np.ndarray) -> bool:
    if t.size < 3:
        return True
    d = np.diff(t)
    return bool(np.allclose(d, d[0], rtol=1e-10, atol=0.0))


def evolve_unitary(H: Operator, psi0: StateVector, times: Sequence[float],
                   method: str = "matrix_exponential", model: Optional[ParaModel] = None,
                   snapshots: bool = False, strict: bool = False,
                   max_step: Optional[float] = None) -> Trajectory:
    """psi(t) = exp(-iHt) psi0 at each requested time.

    ``matrix_exponential`` uses dense Pade scaling-and-squaring up to dimension
    512 and the truncated-Taylor action of the exponential above; ``ode_rk``
    uses fixed-step RK4.
    """
    if H.space != psi0.space:
        raise InvalidArgumentError("Hamiltonian and state live on different spaces")
    if hermiticity_residual(H.matrix) >= 1e-12:
        raise InvalidArgumentError("Hamiltonian is not Hermitian")
    t = _check_times(times)
    space = H.space
    rec = _Recorder(space, model, snapshots)
    psi = psi0.amplitudes.astype(complex)
    if t[0] > 0:
        psi = _expm_apply(H, psi, t[0])
    Hm = H.matrix

    if method == "matrix_exponential":
        if space.dim > DENSE_EXPM_MAX_DIM and _is_uniform(t) and t.size > 2:
            states = expm_multiply(-1j * Hm.tocsc(), psi, start=t[0], stop=t[-1],
                                   num=t.size, endpoint=True)
            for tk, state in zip(t, states):
                rec.add(tk, np.abs(state) ** 2, state)
        else:
            cache: Dict[float, np.ndarray] = {}
            rec.add(t[0], np.abs(psi) ** 2, psi)
            for prev, tk in zip(t[:-1], t[1:]):
                dt = tk - prev
                if dt > 0:
                    psi = _expm_apply(H, psi, dt, cache)
                rec.add(tk, np.abs(psi) ** 2, psi)
    elif method == "ode_rk":
        norm = _norm1(Hm)
        step = max_step or (RK_STEP_FRACTION / norm if norm > 0 else max(t[-1] - t[0], 1.0))
        rhs = lambda _t, y: -1j * (Hm @ y)
        for tk, state in rk4_propagate(rhs, psi, t, step):
            rec.add(tk, np.abs(state) ** 2, state)
    else:
        raise InvalidArgumentError(f"unknown unitary method {method!r}")

    traj = rec.finish(strict, {"method": method, "dim": space.dim,
                               "truncation": [space.d_x, space.d_y]})
    drift = float(np.max(np.abs(np.sqrt(rec.totals) - 1.0)))
    traj.meta["norm_drift"] = drift
    if drift > UNITARY_NORM_TOL:
        raise NumericalError(f"norm drifted by {drift:.3e} during unitary evolution",
                             time_reached=float(t[-1]))
    return traj


def _expm_apply(H: Operator, psi: np.ndarray, dt: float, cache: Optional[dict] = None) -> np.ndarray:
    if H.space.dim > DENSE_EXPM_MAX_DIM:
        return expm_multiply(-1j * dt * H.matrix.tocsc(), psi)
    key = float(f"{dt:.13e}")
    U = None if cache is None else cache.get(key)
    if U is None:
        U = sla.expm(-1j * dt * H.toarray())
        if cache is not None:
            cache[key] = U
    return U @ psi


def simulate_model(space: SpaceSpec, model: ParaModel, psi0: Optional[StateVector],
                   times: Sequence[float], method: str = "matrix_exponential",
                   **kwargs) -> Trajectory:
    """Evolve under (g/2)(A + A^dag) from ``psi0`` (the model vacuum when None)."""
    psi0 = vacuum_state(space, model) if psi0 is None else psi0
    traj = evolve_unitary(para_hamiltonian(space, model), psi0, times, method=method,
                          model=model, **kwargs)
    traj.meta["g"] = model.g
    return traj


def _lindblad_parts(space: SpaceSpec, H: Operator, noise: NoiseSpec):
    jumps = []
    for mode in ("x", "y"):
        c_up, c_down = noise.coefficients(mode)
        a = mode_op(space, mode, "annihilate").matrix
        if c_up > 0:
            jumps.append((c_up, a.conj().T.tocsr()))
        if c_down > 0:
            jumps.append((c_down, a))
    # rho' = -i(Heff rho - rho Heff^dag) + sum 2c O rho O^dag,  Heff = H - i sum c O^dag O
    heff = H.matrix.astype(complex)
    for c, op in jumps:
        heff = heff - 1j * c * (op.conj().T @ op)
    return heff.tocsr(), jumps


def evolve_master(H: Operator, rho0: DensityMatrix, times: Sequence[float], noise: NoiseSpec,
                  method: str = "rk4", model: Optional[ParaModel] = None,
                  snapshots: bool = False, strict: bool = False,
                  max_step: Optional[float] = None, check_positivity: Optional[bool] = None,
                  rtol: float = 1e-9, atol: float = 1e-11) -> Trajectory:
    """Integrate d rho/dt = -i[H, rho] + sum_j (c_up L[a_j^dag] + c_down L[a_j]) rho.

    ``method`` is ``rk4`` (fixed step) or ``adaptive`` (Dormand-Prince via SciPy).
    Trace, Hermiticity and (for dim <= 1024 unless overridden) positivity are
    checked at every output time and recorded in ``meta``.
    """
    if H.space != rho0.space:
        raise InvalidArgumentError("Hamiltonian and density matrix live on different spaces")
    if hermiticity_residual(H.matrix) >= 1e-12:
        raise InvalidArgumentError("Hamiltonian is not Hermitian")
    t = _check_times(times)
    space = H.space
    dim = space.dim
    heff, jumps = _lindblad_parts(space, H, noise)
    heff_dag = heff.conj().T.tocsr()
    jump_daggers = [(c, op, op.conj().T.tocsr()) for c, op in jumps]

    def rhs(_t, rho):
        out = -1j * (heff @ rho) + 1j * (heff_dag.T @ rho.T).T
        for c, op, opd in jump_daggers:
            out += (2 * c) * (op @ (opd.T @ rho.T).T)
        return out

    rho = np.array(rho0.matrix, dtype=complex)
    if check_positivity is None:
        check_positivity = dim <= 1024
    rec = _Recorder(space, model, snapshots)
    herm_max = 0.0
    min_eig = float("inf")

    def record(tk, r):
        nonlocal herm_max, min_eig
        rec.add(tk, np.real(np.diag(r)), r)
        herm_max = max(herm_max, hermiticity_residual(r))
        if check_positivity:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]))

    if method == "rk4":
        gen_norm = 2 * _norm1(heff) + sum(2 * c * _norm1(op) ** 2 for c, op in jumps)
        step = max_step or (RK_STEP_FRACTION / gen_norm if gen_norm > 0 else max(t[-1], 1.0))
        for tk, r in rk4_propagate(rhs, rho, t, step):
            record(tk, r)
    elif method == "adaptive":
        flat_rhs = lambda tt, y: rhs(tt, y.reshape(dim, dim)).reshape(-1)
        sol = solve_ivp(flat_rhs, (t[0], t[-1]), rho.reshape(-1), method="DOP853",
                        t_eval=t, rtol=rtol, atol=atol, max_step=max_step or np.inf)
        if sol.status != 0 or sol.y.shape[1] != t.size:
            reached = float(sol.t[-1]) if sol.t.size else float(t[0])
            raise NumericalError(f"adaptive integration failed: {sol.message}", time_reached=reached)
        for k, tk in enumerate(t):
            record(tk, sol.y[:, k].reshape(dim, dim))
    else:
        raise InvalidArgumentError(f"unknown master-equation method {method!r}")

    traj = rec.finish(strict, {"method": method, "dim": dim, "truncation": [space.d_x, space.d_y],
                               "heating": {m: noise.rate(m) for m in ("x", "y")}})
    trace_dev = float(np.max(np.abs(np.array(rec.totals) - 1.0)))
    traj.meta.update(trace_deviation=trace_dev, hermiticity_residual=herm_max,
                     min_eigenvalue=(min_eig if check_positivity else None))
    if trace_dev > TRACE_TOL:
        raise NumericalError(f"trace drifted by {trace_dev:.3e}", time_reached=float(t[-1]))
    if check_positivity and min_eig < -1e-6:
        traj.warnings.append(f"density matrix lost positivity (min eigenvalue {min_eig:.3e})")
    if herm_max > 1e-8:
        traj.warnings.append(f"density matrix lost Hermiticity (residual {herm_max:.3e})")
    return traj


@dataclass
class RWAReport:
    max_deviation: float
    deviations: Dict[str, float]
    exact: Trajectory
    rwa: Trajectory


def rwa_check(model: ParaModel, omega: float, omega_d: float, times: Sequence[float],
              space: Optional[SpaceSpec] = None, rtol: float = 1e-10,
              atol: float = 1e-12) -> RWAReport:
    """Compare the driven interaction-picture evolution with its RWA form.

    Integrates H(t) = g (A e^{-i omega t} + A^dag e^{i omega t}) cos(omega_d t)
    and evolves (g/2)(A + A^dag) from the model vacuum; reports the largest
    absolute difference in P_up, <n_x>, <n_y>.
    """
    t = _check_times(times)
    if space is None:
        if not model.is_fermi:
            raise InvalidArgumentError("para-Bose RWA checks need an explicit truncation")
        # closed pF ladder plus two empty levels so the leakage monitor stays quiet
        half = model.order // 2
        space = make_space(half + 3, half + 3)
    psi0 = vacuum_state(space, model)
    rwa = simulate_model(space, model, psi0, t)

    A = para_lowering(space, model.kind).matrix
    Ad = A.conj().T.tocsr()
    g = model.g

    def rhs(tt, y):
        c = g * np.cos(omega_d * tt)
        return -1j * c * (np.exp(-1j * omega * tt) * (A @ y) + np.exp(1j * omega * tt) * (Ad @ y))

    rec = _Recorder(space, model, False)
    if g == 0 or t[-1] == t[0]:
        states = np.repeat(psi0.amplitudes[:, None], t.size, axis=1)
    else:
        sol = solve_ivp(rhs, (t[0], t[-1]), psi0.amplitudes.astype(complex), method="DOP853",
                        t_eval=t, rtol=rtol, atol=atol, max_step=np.pi / (4 * max(omega, omega_d, g)))
        if sol.status != 0:
            raise NumericalError(f"time-dependent integration failed: {sol.message}",
                                 time_reached=float(sol.t[-1]))
        states = sol.y
    for k, tk in enumerate(t):
        rec.add(tk, np.abs(states[:, k]) ** 2, states[:, k])
    exact = rec.finish(False, {"omega": omega, "omega_d": omega_d, "g": g})
    devs = {name: float(np.max(np.abs(exact.column(name) - rwa.column(name))))
            for name in ("P_up", "n_x", "n_y")}
    return RWAReport(max(devs.values()), devs, exact, rwa)


def coupling_bounds(omega_r: float, omega_b: float) -> Tuple[float, float]:
    """(g_plus, g_minus) = Omega_pB +/- delta from the sideband Rabi frequencies."""
    if not (omega_r > 0 and omega_b > 0):
        raise InvalidArgumentError("sideband Rabi frequencies must be positive")
    mean = 0.5 * (omega_r + omega_b)
    delta = 0.5 * abs(omega_r - omega_b)
    return mean + delta, mean - delta


def anisotropy_envelope(space: SpaceSpec, model: ParaModel, psi0: Optional[StateVector],
                        times: Sequence[float], omega_r: float, omega_b: float,
                        method: str = "matrix_exponential",
                        **kwargs) -> Tuple[Trajectory, Trajectory]:
    """Trajectories at the upper and lower coupling bounds g_plus, g_minus."""
    g_plus, g_minus = coupling_bounds(omega_r, omega_b)
    out = []
    for g in (g_plus, g_minus):
        m = ParaModel(model.kind, model.order, model.branch, g)
        out.append(simulate_model(space, m, psi0, times, method=method, **kwargs))
    return out[0], out[1]


def local_maxima(values) -> np.ndarray:
    """Indices of interior local maxima; a flat top counts once, at its first sample."""
    v = np.asarray(values, dtype=float)
    out = []
    i = 1
    while i < v.size - 1:
        if v[i] > v[i - 1]:
            j = i
            while j < v.size - 1 and v[j + 1] == v[i]:
                j += 1
            if j < v.size - 1 and v[j + 1] < v[i]:
                out.append(i)
            i = j + 1
        else:
            i += 1
    return np.array(out, dtype=int)


def local_minima(values) -> np.ndarray:
    return local_maxima(-np.asarray(values, dtype=float))


def peak_to_trough(values) -> Tuple[np.ndarray, np.ndarray]:
    """(indices, swings): |difference| between consecutive extrema, indexed at the later one."""
    v = np.asarray(values, dtype=float)
    ext = np.union1d(local_maxima(v), local_minima(v))
    if ext.size < 2:
        return np.array([], dtype=int), np.array([])
    return ext[1:], np.abs(np.diff(v[ext]))


def collapse_then_revival(envelope, low: float, high: float) -> Tuple[Optional[int], Optional[int]]:
    """First position where ``envelope`` drops below ``low`` and a later one above ``high``."""
    env = np.asarray(envelope, dtype=float)
    below = np.nonzero(env < low)[0]
    if not below.size:
        return None, None
    above = np.nonzero(env[below[0] + 1:] > high)[0]
    return int(below[0]), (int(below[0] + 1 + above[0]) if above.size else None)


ATOMIC_MASS = constants.physical_constants["atomic mass constant"][0]
# Multiplier inside the square root: 1.0 is the form hbar/(M w); the common
# zero-point convention hbar/(2 M w) corresponds to 0.5.
LAMB_DICKE_UNIT = 1.0
LAMB_DICKE_ZERO_POINT = 0.5


def lamb_dicke(delta_k: float, omega: float, mass: float,
               factor: float = LAMB_DICKE_UNIT) -> float:
    """eta = delta_k * sqrt(factor * hbar / (mass * omega)); SI units."""
    if delta_k < 0 or not omega > 0 or not mass > 0:
        raise InvalidArgumentError("lamb_dicke needs delta_k >= 0 and positive omega, mass")
    return float(delta_k * math.sqrt(factor * constants.hbar / (mass * omega)))
