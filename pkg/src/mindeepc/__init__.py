"""Minimum-dimension data-enabled predictive control.

Behavioral data libraries (Hankel, Page, mosaic-Hankel), their SVD reduction
to ``rank`` columns, and a DeePC controller whose decision variable lives in
the reduced space. Optimizers of the full and reduced problems map onto each
other through ``V1``.
"""
from .data_matrices import (BlockMatrix, DimensionError, ExcitationReport, Trajectory,
                            build_hankel, build_mosaic_hankel, build_page,
                            check_collective_excitation, check_page_excitation,
                            check_persistent_excitation, io_library, membership_residual,
                            mosaic_io_library)
from .deepc import (ClosedLoopLog, DeepcConfig, DeepcController, InfeasibleProblemError,
                    LtiPlant, QpProblem, assemble_full, assemble_reduced, partition,
                    run_closed_loop, solve_problem, verify_theorem1)
from .lti import (LtiSystem, UnobservableError, collect_data, observability_index,
                  benchmark_plant, random_plant, simulate)
from .qp import QpSolution, QpSpec, Settings, solve
from .reduction import RankRule, ReducedLibrary, range_distance, reduce, svd

__version__ = "0.1.0"

__all__ = [
    "assemble_full",
    "assemble_reduced",
    "BlockMatrix",
    "build_hankel",
    "build_mosaic_hankel",
    "build_page",
    "check_collective_excitation",
    "check_page_excitation",
    "check_persistent_excitation",
    "ClosedLoopLog",
    "collect_data",
    "DeepcConfig",
    "DeepcController",
    "DimensionError",
    "ExcitationReport",
    "InfeasibleProblemError",
    "io_library",
    "LtiPlant",
    "LtiSystem",
    "membership_residual",
    "mosaic_io_library",
    "observability_index",
    "benchmark_plant",
    "partition",
    "QpProblem",
    "QpSolution",
    "QpSpec",
    "random_plant",
    "range_distance",
    "RankRule",
    "reduce",
    "ReducedLibrary",
    "run_closed_loop",
    "Settings",
    "simulate",
    "solve",
    "solve_problem",
    "svd",
    "Trajectory",
    "UnobservableError",
    "verify_theorem1",
]
