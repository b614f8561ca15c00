"""Parameter estimation for quantum Markov chains with repeated atom probes."""

from .chain import (
    ChainModel,
    NotMixingError,
    SuperOperator,
    heisenberg_map,
    schrodinger_map,
    spectral_report,
    transfer_map,
    xy_benchmark,
    xy_model,
)
from .fisher import classical_fisher, clt_parameters, quantum_fisher, scan_observables
from .overlap import overlap, qfi_finite_n
from .trajectory import TrajectoryConfig, run_ensemble

__all__ = [
    "ChainModel",
    "NotMixingError",
    "SuperOperator",
    "TrajectoryConfig",
    "classical_fisher",
    "clt_parameters",
    "heisenberg_map",
    "overlap",
    "qfi_finite_n",
    "quantum_fisher",
    "run_ensemble",
    "scan_observables",
    "schrodinger_map",
    "spectral_report",
    "transfer_map",
    "xy_benchmark",
    "xy_model",
]
