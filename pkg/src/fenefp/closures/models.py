"""Closed moment-evolution models benchmarked against the kinetic solver.

Two families are provided. The Peterlin-type model closes the moment
equation algebraically; the quasi-equilibrium family reconstructs the
multiplier tensor from the conformation eigenframe, with the multiplier
triple supplied by an exchangeable provider (direct Newton inversion,
table interpolation, or network inference).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import symmetric_eigen3
from .nn import MlpWeights, nn_infer
from .pla import PlaTable, pla_lookup
from .qe import qe_invert_newton

__all__ = [
    "ClosureAdmissibilityError",
    "NewtonMultipliers",
    "TableMultipliers",
    "NetworkMultipliers",
    "FeneP",
    "QuasiEquilibrium",
    "make_model",
    "ClosureTrajectory",
    "integrate_closure",
    "fene_p_density",
    "qe_density",
]


class ClosureAdmissibilityError(RuntimeError):
    """Conformation left the admissible set during integration."""

    def __init__(self, message: str, step: int, time: float):
        super().__init__(f"{message} at step {step}, t = {time:.6g}")
        self.step = step
        self.time = time


# ---------------------------------------------------------------------------
# multiplier providers: sorted moment triple -> multiplier triple
# ---------------------------------------------------------------------------


class NewtonMultipliers:
    """Ground-truth provider, warm-started along a trajectory."""

    def __init__(self, extensibility: float, tol: float = 1e-12):
        self.extensibility = extensibility
        self.tol = tol
        self._last: np.ndarray | None = None

    def __call__(self, moments: np.ndarray) -> np.ndarray:
        lam = qe_invert_newton(
            moments, self.extensibility, tol=self.tol, initial=self._last
        )
        self._last = lam
        return lam


class TableMultipliers:
    def __init__(self, table: PlaTable):
        self.table = table

    def __call__(self, moments: np.ndarray) -> np.ndarray:
        return pla_lookup(self.table, moments)


class NetworkMultipliers:
    def __init__(self, model: MlpWeights):
        self.model = model

    def __call__(self, moments: np.ndarray) -> np.ndarray:
        return nn_infer(self.model, moments)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def _check_trace(conformation: np.ndarray):
    trace = float(np.trace(conformation))
    if trace >= 1.0:
        raise ValueError(f"conformation trace {trace:.6g} is not below one")
    return trace


@dataclass
class FeneP:
    """Peterlin-closed moment equation.

    The default relaxation term is -(b/De) C / (1 - tr C) as commonly
    printed; consistent_relaxation=True selects -(2b/De) C / (1 - tr C),
    the coefficient obtained by substituting the Peterlin average into the
    unclosed moment equation. The two have different fixed points and the
    benchmark experiments report both.
    """

    extensibility: float
    deborah: float
    consistent_relaxation: bool = False

    def equilibrium(self) -> np.ndarray:
        if self.consistent_relaxation:
            return np.eye(3) / (self.extensibility + 3.0)
        return 2.0 * np.eye(3) / (self.extensibility + 6.0)

    def rhs(self, conformation: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        trace = _check_trace(conformation)
        coefficient = self.extensibility / self.deborah
        if self.consistent_relaxation:
            coefficient *= 2.0
        flow = gradient @ conformation + conformation @ gradient.T
        return (
            flow
            + (2.0 / self.deborah) * np.eye(3)
            - coefficient * conformation / (1.0 - trace)
        )

    def stress(self, conformation: np.ndarray) -> np.ndarray:
        trace = _check_trace(conformation)
        return self.extensibility * conformation / (1.0 - trace) - np.eye(3)

    def density(self, conformation: np.ndarray):
        return fene_p_density(conformation)


@dataclass
class QuasiEquilibrium:
    """Constrained-entropy closure with an exchangeable multiplier provider."""

    extensibility: float
    deborah: float
    multipliers: object = None

    def __post_init__(self):
        if self.multipliers is None:
            self.multipliers = NewtonMultipliers(self.extensibility)

    def equilibrium(self) -> np.ndarray:
        return np.eye(3) / (self.extensibility + 5.0)

    def multiplier_matrix(self, conformation: np.ndarray) -> np.ndarray:
        """Eigenframe pipeline: diagonalize, map sorted triple, rotate back."""
        _check_trace(conformation)
        values, vectors = symmetric_eigen3(conformation)
        if values[-1] <= 0.0:
            raise ClosureAdmissibilityError(
                "conformation is not positive definite", step=-1, time=float("nan")
            )
        lam = np.asarray(self.multipliers(values), dtype=float)
        return (vectors * lam) @ vectors.T

    def rhs(self, conformation: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        lam = self.multiplier_matrix(conformation)
        flow = gradient @ conformation + conformation @ gradient.T
        relax = (2.0 / self.deborah) * (conformation @ lam + lam @ conformation)
        return flow - relax

    def stress(self, conformation: np.ndarray) -> np.ndarray:
        lam = self.multiplier_matrix(conformation)
        return conformation @ lam + lam @ conformation

    def density(self, conformation: np.ndarray):
        return qe_density(self.extensibility, self.multiplier_matrix(conformation))


def make_model(name: str, extensibility: float, deborah: float, *,
               table: PlaTable | None = None, weights: MlpWeights | None = None):
    """Build a closure model by registry name.

    Names: fene-p, fene-p-consistent, qe-newton, qe-pla (needs table),
    qe-nn (needs weights).
    """
    key = name.lower()
    if key == "fene-p":
        return FeneP(extensibility, deborah)
    if key == "fene-p-consistent":
        return FeneP(extensibility, deborah, consistent_relaxation=True)
    if key == "qe-newton":
        return QuasiEquilibrium(extensibility, deborah)
    if key == "qe-pla":
        if table is None:
            raise ValueError("qe-pla requires a lookup table")
        return QuasiEquilibrium(extensibility, deborah, TableMultipliers(table))
    if key == "qe-nn":
        if weights is None:
            raise ValueError("qe-nn requires network weights")
        return QuasiEquilibrium(extensibility, deborah, NetworkMultipliers(weights))
    raise ValueError(f"unknown closure model {name!r}")


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------


@dataclass
class ClosureTrajectory:
    times: np.ndarray
    tensors: np.ndarray  # shape (n_records, 3, 3)
    steps: int
    steady: bool
    final_rhs_norm: float

    @property
    def final(self) -> np.ndarray:
        return self.tensors[-1]


def _admissibility_guard(conformation: np.ndarray, step: int, time: float,
                         floor: float = 0.0):
    trace = float(np.trace(conformation))
    if trace >= 1.0:
        raise ClosureAdmissibilityError(
            f"conformation trace {trace:.6g} reached the extensibility bound",
            step, time,
        )
    values, _ = symmetric_eigen3(conformation)
    if values[-1] <= floor:
        raise ClosureAdmissibilityError(
            f"conformation lost positive definiteness (min eigenvalue "
            f"{values[-1]:.3e})", step, time,
        )


def integrate_closure(model, initial: np.ndarray, gradient: np.ndarray, *,
                      t_end: float, dt: float | None = None,
                      steady_tol: float = 1e-10, record_every: int = 0
                      ) -> ClosureTrajectory:
    """Classical fourth-order Runge-Kutta with fixed step.

    Stops early once the instantaneous rhs norm drops below steady_tol.
    Each accepted state is symmetrized by averaging and checked for
    admissibility (trace bound and eigenvalue floor); a violation raises
    with the offending step, which is the known failure mode of the
    Peterlin closure in strong flows.
    """
    gradient = np.asarray(gradient, dtype=float)
    conformation = 0.5 * (np.asarray(initial, dtype=float) + np.asarray(initial).T)
    if dt is None:
        dt = 1e-3 * model.deborah
    n_steps = max(1, int(round(t_end / dt)))
    times = [0.0]
    records = [conformation.copy()]
    steady = False
    rhs_norm = float("nan")
    step = 0
    for step in range(1, n_steps + 1):
        k1 = model.rhs(conformation, gradient)
        rhs_norm = float(np.sqrt((k1 * k1).sum()))
        if rhs_norm < steady_tol:
            steady = True
            step -= 1
            break
        k2 = model.rhs(conformation + 0.5 * dt * k1, gradient)
        k3 = model.rhs(conformation + 0.5 * dt * k2, gradient)
        k4 = model.rhs(conformation + dt * k3, gradient)
        conformation = conformation + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        conformation = 0.5 * (conformation + conformation.T)
        _admissibility_guard(conformation, step, step * dt)
        if record_every and step % record_every == 0:
            times.append(step * dt)
            records.append(conformation.copy())
    if not times or times[-1] != step * dt:
        times.append(step * dt)
        records.append(conformation.copy())
    if not steady:
        final_rhs = model.rhs(conformation, gradient)
        rhs_norm = float(np.sqrt((final_rhs * final_rhs).sum()))
        steady = rhs_norm < steady_tol
    return ClosureTrajectory(
        np.asarray(times), np.asarray(records), step, steady, rhs_norm
    )


# ---------------------------------------------------------------------------
# reconstructed configuration densities (unnormalized)
# ---------------------------------------------------------------------------


def fene_p_density(conformation: np.ndarray):
    """Gaussian-form density of the Peterlin closure, restricted to the ball.

    Returned unnormalized; comparison norms renormalize to unit mass on
    their own quadrature grid.
    """
    precision = np.linalg.inv(np.asarray(conformation, dtype=float))

    def density(q1, q2, q3):
        quad = (
            precision[0, 0] * q1 * q1
            + precision[1, 1] * q2 * q2
            + precision[2, 2] * q3 * q3
            + 2.0 * (precision[0, 1] * q1 * q2
                     + precision[0, 2] * q1 * q3
                     + precision[1, 2] * q2 * q3)
        )
        return np.exp(-0.5 * quad)

    return density


def qe_density(extensibility: float, multiplier_matrix: np.ndarray):
    """Quasi-equilibrium density for a full multiplier tensor (unnormalized)."""
    lam = np.asarray(multiplier_matrix, dtype=float)

    def density(q1, q2, q3):
        r2 = q1 * q1 + q2 * q2 + q3 * q3
        quad = (
            lam[0, 0] * q1 * q1
            + lam[1, 1] * q2 * q2
            + lam[2, 2] * q3 * q3
            + 2.0 * (lam[0, 1] * q1 * q2 + lam[0, 2] * q1 * q3 + lam[1, 2] * q2 * q3)
        )
        return (1.0 - r2) ** (extensibility / 2.0) * np.exp(quad)

    return density
