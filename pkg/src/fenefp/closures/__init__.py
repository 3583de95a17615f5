"""Closure models for the moment evolution, benchmarked against the kinetic solver."""

from .dataset import QeDataset, gen_dataset, load_dataset, save_dataset
from .eigen import symmetric_eigen3
from .models import (
    ClosureAdmissibilityError,
    ClosureTrajectory,
    FeneP,
    NetworkMultipliers,
    NewtonMultipliers,
    QuasiEquilibrium,
    TableMultipliers,
    fene_p_density,
    integrate_closure,
    make_model,
    qe_density,
)
from .nn import MlpWeights, nn_infer, nn_load, nn_save, verify_probes
from .pla import PlaTable, build_table, load_table, pla_lookup, save_table
from .qe import (
    MULTIPLIER_LIMIT,
    NewtonConvergenceError,
    QuadratureAccuracyError,
    equilibrium_constant,
    equilibrium_moment_triple,
    qe_forward,
    qe_forward_with_jacobian,
    qe_invert_newton,
)

__all__ = [
    "QeDataset", "gen_dataset", "load_dataset", "save_dataset",
    "symmetric_eigen3",
    "ClosureAdmissibilityError", "ClosureTrajectory", "FeneP",
    "NetworkMultipliers", "NewtonMultipliers", "QuasiEquilibrium",
    "TableMultipliers", "fene_p_density", "integrate_closure", "make_model",
    "qe_density",
    "MlpWeights", "nn_infer", "nn_load", "nn_save", "verify_probes",
    "PlaTable", "build_table", "load_table", "pla_lookup", "save_table",
    "MULTIPLIER_LIMIT", "NewtonConvergenceError", "QuadratureAccuracyError",
    "equilibrium_constant", "equilibrium_moment_triple", "qe_forward",
    "qe_forward_with_jacobian", "qe_invert_newton",
]
