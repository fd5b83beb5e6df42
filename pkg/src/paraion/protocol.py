"""Fock-state preparation, spin reset, blue-sideband readout and population fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.optimize import curve_fit, nnls
from scipy.sparse.linalg import expm_multiply

from .dynamics import DENSE_EXPM_MAX_DIM, LEAKAGE_THRESHOLD, HamiltonianSpec, SidebandTerm, build_hamiltonian
from .errors import IllConditionedWarning, InvalidArgumentError, LeakageWarning
from .fockspace import (
    DensityMatrix,
    Operator,
    SpaceSpec,
    StateVector,
    basis_state,
    mode_populations,
    top_level_population,
)

PULSE_KINDS = ("carrier", "rsb_x", "rsb_y", "bsb_x", "bsb_y")
POLARITIES = ("as_printed", "complemented")
CONDITION_LIMIT = 1e6


@dataclass(frozen=True)
class PulseStep:
    kind: str
    duration: float
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise InvalidArgumentError(f"unknown pulse kind {self.kind!r}")
        if not self.duration > 0:
            raise InvalidArgumentError("pulse duration must be > 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "duration_s": self.duration, "phase_rad": self.phase}


@dataclass(frozen=True)
class PrepPlan:
    """Pulse program taking |down, 0> to |down, n> on one mode.

    ``rabi`` is the n=0 -> 1 sideband Rabi frequency in the cos^2(rabi*t)
    convention; the carrier is assumed to flop at the same rate.
    """

    mode: str
    n: int
    steps: Tuple[PulseStep, ...]
    rabi: float

    def to_dict(self) -> dict:
        return {
            "target": {"mode": self.mode, "n": self.n},
            "rabi_frequency_rad_s": self.rabi,
            "pulses": [s.to_dict() for s in self.steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrepPlan":
        steps = tuple(PulseStep(p["kind"], float(p["duration_s"]), float(p.get("phase_rad", 0.0)))
                      for p in data["pulses"])
        return cls(data["target"]["mode"], int(data["target"]["n"]), steps,
                   float(data["rabi_frequency_rad_s"]))


def plan_fock_prep(mode: str, n: int, omega01: float,
                   truncation: Optional[int] = None) -> PrepPlan:
    """Alternate blue/red sideband pi-pulses up the ladder, then a carrier if needed.

    The walk is |down,0> -> |up,1> -> |down,2> -> ...; the pulse between
    levels k-1 and k lasts pi / (2 * omega01 * sqrt(k)).
    """
    if mode not in ("x", "y"):
        raise InvalidArgumentError(f"mode must be 'x' or 'y', got {mode!r}")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise InvalidArgumentError(f"Fock number must be a nonnegative integer, got {n!r}")
    if truncation is not None and n >= truncation:
        raise InvalidArgumentError(f"Fock state {n} exceeds truncation of {truncation} levels")
    if not omega01 > 0:
        raise InvalidArgumentError("omega01 must be positive")
    steps = []
    for k in range(1, n + 1):
        kind = ("bsb_" if k % 2 == 1 else "rsb_") + mode
        steps.append(PulseStep(kind, math.pi / (2 * omega01 * math.sqrt(k))))
    if n % 2 == 1:
        steps.append(PulseStep("carrier", math.pi / (2 * omega01)))
    return PrepPlan(mode, int(n), tuple(steps), float(omega01))


def step_hamiltonian(space: SpaceSpec, step: PulseStep, omega01: float) -> Operator:
    """Coupling matrix element omega01*sqrt(k) between adjacent sideband levels."""
    if step.kind == "carrier":
        term = SidebandTerm("carrier", 2 * omega01, phase=step.phase)
    else:
        side, mode = step.kind.split("_")
        term = SidebandTerm("red" if side == "rsb" else "blue", 2 * omega01, mode=mode,
                            eta=1.0, phase=step.phase)
    return build_hamiltonian(space, HamiltonianSpec("sideband", terms=(term,)))


def _propagate(H: Operator, psi: np.ndarray, duration: float) -> np.ndarray:
    if H.space.dim > DENSE_EXPM_MAX_DIM:
        return expm_multiply(-1j * duration * H.matrix.tocsc(), psi)
    return sla.expm(-1j * duration * H.toarray()) @ psi


def simulate_sequence(space: SpaceSpec, plan: PrepPlan, initial: StateVector) -> StateVector:
    if initial.space != space:
        raise InvalidArgumentError("initial state lives on a different space")
    psi = initial.amplitudes.astype(complex)
    for step in plan.steps:
        psi = _propagate(step_hamiltonian(space, step, plan.rabi), psi, step.duration)
    leak = top_level_population(np.abs(psi) ** 2, space)
    if leak > LEAKAGE_THRESHOLD:
        warnings.warn(f"prepared state has {leak:.3e} population in the top Fock levels",
                      LeakageWarning, stacklevel=2)
    return StateVector(space, psi)


def prep_fidelity(space: SpaceSpec, plan: PrepPlan) -> float:
    """Fidelity of the simulated plan from |down,0,0> with its target."""
    start = basis_state(space, "down", 0, 0)
    final = simulate_sequence(space, plan, start)
    nx, ny = (plan.n, 0) if plan.mode == "x" else (0, plan.n)
    return final.fidelity(basis_state(space, "down", nx, ny))


def spin_reset(rho: DensityMatrix) -> DensityMatrix:
    """Trace out the spin and re-prepare it in |down>; motion is untouched."""
    space = rho.space
    m = space.d_x * space.d_y
    blocks = rho.matrix.reshape(2, m, 2, m)
    motional = blocks[0, :, 0, :] + blocks[1, :, 1, :]
    out = np.zeros((space.dim, space.dim), dtype=complex)
    out[:m, :m] = motional
    return DensityMatrix(space, out, validate=False)


@dataclass
class ReadoutScan:
    mode: str
    times: np.ndarray
    p_up: np.ndarray
    shots: Optional[int] = None
    seed: Optional[int] = None
    p_exact: Optional[np.ndarray] = None
    # motional populations used to synthesize the scan, when known
    populations: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_up = np.asarray(self.p_up, dtype=float)
        if self.times.shape != self.p_up.shape or self.times.ndim != 1:
            raise InvalidArgumentError("scan times and probabilities must be equal-length vectors")
        if self.times.size == 0:
            raise InvalidArgumentError("scan is empty")
        if np.any((self.p_up < 0) | (self.p_up > 1)):
            raise InvalidArgumentError("scan probabilities must lie in [0, 1]")
        if self.shots is not None and self.shots < 1:
            raise InvalidArgumentError("shots must be >= 1")


def readout_design(times, omega01: float, gamma: float, n_max: int) -> np.ndarray:
    """Columns exp(-gamma sqrt(n+1) t) cos(omega01 sqrt(n+1) t), n = 0..n_max."""
    t = np.asarray(times, dtype=float)[:, None]
    root = np.sqrt(np.arange(n_max + 1) + 1.0)[None, :]
    return np.exp(-gamma * root * t) * np.cos(omega01 * root * t)


def readout_signal(populations, times, omega01: float, gamma: float,
                   polarity: str = "as_printed") -> np.ndarray:
    """P(t) = (1 +/- sum_n P_n exp(-gamma_n t) cos(Omega_{n,n+1} t)) / 2."""
    if polarity not in POLARITIES:
        raise InvalidArgumentError(f"unknown signal polarity {polarity!r}")
    pops = np.asarray(populations, dtype=float)
    s = readout_design(times, omega01, gamma, pops.size - 1) @ pops
    sign = 1.0 if polarity == "as_printed" else -1.0
    return np.clip(0.5 * (1.0 + sign * s), 0.0, 1.0)


def sample_probabilities(p, shots: Optional[int], seed: Optional[int]) -> np.ndarray:
    """Binomial estimate of each probability from ``shots`` trials (PCG64 stream)."""
    p = np.asarray(p, dtype=float)
    if shots is None:
        return p.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.binomial(int(shots), np.clip(p, 0.0, 1.0)) / float(shots)


def simulate_bsb_scan(rho: DensityMatrix, mode: str, omega01: float, gamma: float,
                      times: Sequence[float], shots: Optional[int] = None,
                      seed: Optional[int] = 0, polarity: str = "as_printed") -> ReadoutScan:
    """Blue-sideband readout of one mode after a spin reset.

    ``shots=None`` returns the exact curve.
    """
    up = rho.populations()[rho.space.dim // 2:].sum()
    if up > 1e-9:
        raise InvalidArgumentError("readout expects a spin-reset state (spin up population > 0)")
    pops = mode_populations(rho, mode)
    exact = readout_signal(pops, times, omega01, gamma, polarity)
    sampled = sample_probabilities(exact, shots, seed)
    return ReadoutScan(mode, np.asarray(times, dtype=float), sampled, shots, seed, exact, pops)


def default_n_max(populations, cap: Optional[int] = None, level: float = 0.999) -> int:
    """Smallest n whose cumulative population exceeds ``level``, capped."""
    cum = np.cumsum(np.asarray(populations, dtype=float))
    hits = np.nonzero(cum > level)[0]
    n = int(hits[0]) if hits.size else len(cum) - 1
    return n if cap is None else min(n, cap)


@dataclass
class PopulationFit:
    populations: np.ndarray
    residual: float
    omega01: float
    gamma: float
    condition_number: float
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "populations": [float(v) for v in self.populations],
            "residual_rms": self.residual,
            "omega01_rad_s": self.omega01,
            "gamma_per_s": self.gamma,
            "condition_number": self.condition_number,
            "warnings": list(self.warnings),
        }


def _simplex_nnls(M: np.ndarray, y: np.ndarray) -> np.ndarray:
    """min ||M x - y|| subject to x >= 0 and sum(x) <= 1."""
    x, _ = nnls(M, y)
    if x.sum() <= 1.0 + 1e-12:
        return x
    # active sum constraint: heavily weighted equality row, then an exact KKT polish on the support
    n = M.shape[1]
    w = 1e4 * (np.linalg.norm(M, 2) + 1.0)
    x, _ = nnls(np.vstack([M, w * np.ones((1, n))]), np.append(y, w))
    support = np.nonzero(x > 0)[0]
    k = support.size
    if k:
        Ms = M[:, support]
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = 2 * Ms.T @ Ms
        kkt[:k, k] = kkt[k, :k] = 1.0
        rhs = np.append(2 * Ms.T @ y, 1.0)
        try:
            sol = np.linalg.solve(kkt, rhs)[:k]
            if np.all(sol >= 0):
                x = np.zeros(n)
                x[support] = sol
        except np.linalg.LinAlgError:
            pass
    return x


def fit_populations(scan: ReadoutScan, omega01: float, gamma: float, n_max: int,
                    polarity: str = "as_printed") -> PopulationFit:
    """Fock populations from a readout scan with fixed frequencies and decays.

    The model is linear in P_n, so this is a nonnegative least-squares problem
    with the extra constraint sum(P_n) <= 1.
    """
    if n_max < 0:
        raise InvalidArgumentError("n_max must be >= 0")
    if polarity not in POLARITIES:
        raise InvalidArgumentError(f"unknown signal polarity {polarity!r}")
    M = readout_design(scan.times, omega01, gamma, n_max)
    sign = 1.0 if polarity == "as_printed" else -1.0
    y = sign * (2.0 * scan.p_up - 1.0)
    cond = float(np.linalg.cond(M)) if M.size else float("inf")
    notes = []
    if not cond <= CONDITION_LIMIT:
        msg = f"design matrix condition number {cond:.3e} exceeds {CONDITION_LIMIT:g}; reduce n_max"
        warnings.warn(msg, IllConditionedWarning, stacklevel=2)
        notes.append(msg)
    pops = _simplex_nnls(M, y)
    model = 0.5 * (1.0 + sign * (M @ pops))
    rms = float(np.sqrt(np.mean((model - scan.p_up) ** 2)))
    return PopulationFit(pops, rms, float(omega01), float(gamma), cond, notes)


def flop_signal(n: int, omega01: float, gamma: float, times) -> np.ndarray:
    """exp(-gamma_n t) cos^2(Omega_{n,n+1} t) with Omega_{n,n+1} = omega01 sqrt(n+1)."""
    t = np.asarray(times, dtype=float)
    root = math.sqrt(n + 1)
    return np.exp(-gamma * root * t) * np.cos(omega01 * root * t) ** 2


def flop_scan(n: int, omega01: float, gamma: float, times, shots: Optional[int] = None,
              seed: Optional[int] = 0, mode: str = "x") -> ReadoutScan:
    exact = flop_signal(n, omega01, gamma, times)
    return ReadoutScan(mode, np.asarray(times, dtype=float),
                       sample_probabilities(exact, shots, seed), shots, seed, exact)


@dataclass
class RabiFit:
    frequency: float
    decay: float
    converged: bool
    message: str = ""


@dataclass
class RabiRatioReport:
    fits: List[RabiFit]

    @property
    def ratios(self) -> np.ndarray:
        base = self.fits[0].frequency
        return np.array([f.frequency / base for f in self.fits])


def _flop_model(t, omega, gamma):
    return np.exp(-gamma * t) * np.cos(omega * t) ** 2


def fit_flop(scan: ReadoutScan) -> RabiFit:
    """Fit exp(-gamma t) cos^2(omega t) with omega and gamma free."""
    t, y = scan.times, scan.p_up
    if t.size < 3:
        return RabiFit(float("nan"), float("nan"), False, "need at least 3 points")
    span = t[-1] - t[0]
    dt = np.min(np.diff(t)) if t.size > 1 else span
    if not (span > 0 and dt > 0):
        return RabiFit(float("nan"), float("nan"), False, "degenerate time grid")
    # coarse scan below the sampling limit, then local least squares
    grid = np.linspace(math.pi / (8 * span), math.pi / (2 * dt), 4000)
    sse = [np.sum((_flop_model(t, w, 0.0) - y) ** 2) for w in grid]
    w0 = grid[int(np.argmin(sse))]
    try:
        (w, gam), _ = curve_fit(_flop_model, t, y, p0=(w0, 0.0), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        return RabiFit(float(w0), float("nan"), False, str(exc))
    return RabiFit(float(abs(w)), float(gam), True)


def rabi_ratio_report(scans: Sequence[ReadoutScan]) -> RabiRatioReport:
    """Fit one flop scan per prepared Fock state n = 0..N; ratios are relative to n = 0."""
    if not scans:
        raise InvalidArgumentError("need at least one scan")
    return RabiRatioReport([fit_flop(s) for s in scans])
