"""Quantum-trajectory simulation of a three-qubit bit-flip repetition code
operating between a hot (error-inducing) and a cold (ancilla-resetting)
thermal reservoir, with a dense master-equation oracle and closed-form rate
models."""

__version__ = "0.1.0"

from .compiler import (
    ControlTerm,
    GateSchedule,
    Step,
    build_measured_round,
    build_measurement_free_round,
    compile_cnot,
    compile_toffoli,
    phase_aligned_distance,
    schedule_net_unitary,
)
from .dynamics import (
    EnsembleAccumulator,
    NoiseParams,
    TrajectoryRecord,
    evolve_master_equation,
    run_ensemble,
    run_round,
    trajectory_stream,
    trajectory_substep,
)
from .metrics import RoundMetrics, compute_step_metrics
from .qstate import (
    DensityMatrix,
    StateVector,
    apply_single_qubit_unitary,
    apply_two_qubit_phase,
    measure_qubits_projective,
    partial_trace,
    squared_fidelity,
    trace_distance,
    von_neumann_entropy,
)

__all__ = [
    "ControlTerm",
    "DensityMatrix",
    "EnsembleAccumulator",
    "GateSchedule",
    "NoiseParams",
    "RoundMetrics",
    "StateVector",
    "Step",
    "TrajectoryRecord",
    "apply_single_qubit_unitary",
    "apply_two_qubit_phase",
    "build_measured_round",
    "build_measurement_free_round",
    "compile_cnot",
    "compile_toffoli",
    "compute_step_metrics",
    "evolve_master_equation",
    "measure_qubits_projective",
    "partial_trace",
    "phase_aligned_distance",
    "run_ensemble",
    "run_round",
    "schedule_net_unitary",
    "squared_fidelity",
    "trace_distance",
    "trajectory_stream",
    "trajectory_substep",
    "von_neumann_entropy",
]
