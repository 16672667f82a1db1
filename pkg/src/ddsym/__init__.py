"""Dynamical-decoupling sequences, exact spin-bath propagation and average Hamiltonians."""

from ddsym.opcore import (
    TOL,
    BranchCutError,
    ValidationError,
    commutator,
    embed_spin_op,
    principal_log,
    propagator,
)
from ddsym.model import HamiltonianParts, HamiltonianSpec, build_hamiltonian, sample_couplings
from ddsym.seq import (
    Delay,
    Pulse,
    PulseSequence,
    build_cdd,
    build_cpmg,
    build_xy4,
    build_xy8,
    build_xy16,
    phase_invert,
    time_reverse,
)
from ddsym.dsl import format_sequence, parse_sequence
from ddsym.aht import (
    AverageHamiltonian,
    TogglingSegment,
    average_hamiltonian,
    bch_truncated,
    closed_form_reference,
    error_decompose,
    toggling_frame,
    toggling_time_symmetric,
)
from ddsym.sim import (
    QuantumState,
    Trajectory,
    cycle_propagator,
    decay_time,
    evolve,
    precession_angle,
    prepare_state,
    process_fidelity,
)

__version__ = "0.1.0"
