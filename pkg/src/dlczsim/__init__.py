"""Simulator and analysis toolkit for a heralded atomic-ensemble memory node."""

from .analysis import (
    CorrelationTable,
    classical_bound_check,
    conditional_probabilities,
    entanglement_fidelity_bound,
    fringe_fit,
    rates,
    reconstruct_density,
    state_fidelity_from_table,
    time_binned_fidelity,
)
from .errors import ConfigError, DataFormatError, PhysicsError
from .memory import DecayShape, DecoherenceModel, MemoryQubit, decohere, prepare_from_signal, read_out
from .optics import AnalyzerSetting, measure_polarization
from .qstate import DensityMatrix, StateVector, bell_state, fidelity, partial_trace
from .simkernel import (
    Channel,
    EventStream,
    ImperfectionModel,
    PulseSchedule,
    noisy_joint_state,
    run_experiment,
    run_trial,
)
from .tia import CoincidenceWindow, gate, histogram, match_coincidences, split_into_quarters

__version__ = "0.1.0"
