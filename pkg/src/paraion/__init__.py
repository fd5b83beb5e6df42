"""Simulation of para-Bose and para-Fermi oscillators on a trapped ion.

The ion is a spin-1/2 coupled to two motional modes x and y; red and blue
sideband drives combine into the para-particle ladder operators.
"""

__version__ = "0.1.0"

from .dynamics import (
    HamiltonianSpec,
    NoiseSpec,
    SidebandTerm,
    Trajectory,
    anisotropy_envelope,
    build_hamiltonian,
    evolve_master,
    evolve_unitary,
    lamb_dicke,
    rwa_check,
    simulate_model,
)
from .errors import (
    IllConditionedWarning,
    InvalidArgumentError,
    LeakageError,
    LeakageWarning,
    NumericalError,
    ParaionError,
)
from .fockspace import DensityMatrix, Operator, SpaceSpec, StateVector, basis_state, make_space
from .paraalgebra import ParaModel, ladder_states, para_lowering, vacuum_state, verify_relations
from .protocol import (
    PopulationFit,
    PrepPlan,
    PulseStep,
    ReadoutScan,
    fit_populations,
    plan_fock_prep,
    rabi_ratio_report,
    simulate_bsb_scan,
    simulate_sequence,
    spin_reset,
)
