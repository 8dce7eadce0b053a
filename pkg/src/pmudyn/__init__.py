"""Ambient-data estimation of power system dynamic state matrices.

Simulates the stochastic swing equations around an operating point, recovers
the linearized state matrix purely from the sampled fluctuations, and uses
model-vs-measurement discrepancies to detect and localize undetected network
topology changes.
"""

from .network import (
    Bus, Branch, Load, Generator, BusNetwork, ReducedNetwork,
    build_admittance, augmented_admittance, kron_reduce,
    apply_branch_outage, compute_internal_emf, reduce_network,
)
from .simulator import (
    GeneratorParams, NoiseSpec, Event, Trajectory,
    coi_transform, electrical_power, simulate, add_measurement_noise,
    drop_reference, save_trajectory_csv, load_trajectory_csv,
)
from .model_matrix import (
    SystemMatrix, NoiseInputMatrix,
    equilibrium_solve, coi_jacobian, noise_input_matrix,
    stationary_covariance, save_system_matrix, load_system_matrix,
)
from .estimator import (
    EstimatorConfig, EstimatorState, RecursiveTrace,
    batch_stats, invert_covariance, real_matrix_log, estimate_a,
    batch_estimate, init_state, recursive_update, adaptive_alpha,
    run_recursive, lyapunov_estimate, hybrid_state_matrix,
)
from .detection import (
    ObservedSet, DiscrepancyReport,
    normalized_frobenius, element_diff, localize, submatrix_select,
    monitor, save_report,
)

__version__ = "0.1.0"
