"""Semi-implicit spectral time integration of the dumbbell configuration
density on the unit ball.

The distribution ``f`` is represented through the transformed variable
``h = f / (1 - |q|^2)^s`` expanded in real spherical harmonics of even
degree times mapped Jacobi radial functions (see :mod:`fenefp.radial`).
Diffusion and the finite-extensibility spring term are treated implicitly
with a second-order backward differentiation formula while the
velocity-gradient convection term is extrapolated explicitly, so every
time step reduces to independent banded solves, one per spherical-harmonic
degree.
"""

from __future__ import annotations

import dataclasses
import math
import time as _time
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from . import angular, radial, special

__all__ = [
    "SolverConfig",
    "SpectralState",
    "AssembledOperator",
    "SimulationResult",
    "SolverDivergenceError",
    "ModeLayout",
    "QuadratureGrid",
    "stability_threshold",
    "stability_max_dt",
    "assemble_operator",
    "project_function",
    "function_moments",
    "convection_moments",
    "bdf2_step",
    "bootstrap_first_step",
    "run_simulation",
    "run_until_steady",
    "evaluate_state",
    "mass",
    "energy",
    "state_norm",
    "measure_constant",
    "equilibrium_normalization",
    "equilibrium_profile",
    "steady_flow_profile",
]

#: Relative tolerance on the trace of the velocity gradient (incompressibility).
TRACE_TOLERANCE = 1e-14

#: Runaway guard: abort once the discrete energy exceeds this multiple of the
#: initial energy.
ENERGY_BLOWUP_FACTOR = 1e6


class SolverDivergenceError(RuntimeError):
    """Raised when the time march produces non-finite or runaway values."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


def measure_constant(weight_exponent: float) -> float:
    """Constant mapping the (1-p)^s (1+p)^(1/2) line integral to ball measure.

    Writing q in spherical coordinates and substituting p = 2|q|^2 - 1 gives
    dq = 2^(-5/2) (1+p)^(1/2) dp dOmega, and pulling the weight out of the
    density contributes the remaining 2^(-s).
    """
    return 2.0 ** (-(weight_exponent + 2.5))


def stability_threshold(weight_exponent: float) -> float:
    """Coercivity constant gamma(s) controlling the conditional time-step bound."""
    if weight_exponent <= 1.0:
        raise ValueError("weight exponent must exceed 1")
    sm1 = weight_exponent - 1.0
    return 0.75 * (1.0 + sm1 / 3.0 + 3.0 / (4.0 * sm1))


def _max_stable_dt(extensibility: float, deborah: float, weight_exponent: float) -> float:
    gap = extensibility - 2.0 * weight_exponent
    if gap <= 0.0:
        return math.inf
    return 3.0 * deborah / (2.0 * gap * stability_threshold(weight_exponent))


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class SolverConfig:
    """Physical and numerical parameters of one simulation.

    Attributes:
        extensibility: maximum squared extension of the dumbbell spring (the
            density vanishes as (1-|q|^2)^(extensibility/2) at the boundary).
        deborah: relaxation-time scale multiplying diffusion and spring terms.
        weight_exponent: exponent s pulled out of the density; must satisfy
            1 < s <= extensibility / 2.
        kind: radial basis family, "jg1" or "jginf".
        lmax: largest (even) spherical-harmonic degree retained.
        nmax: radial resolution parameter of the basis.
        gradient: 3x3 trace-free velocity-gradient tensor.
        dt: time-step size; validated against the conditional stability bound
            when weight_exponent < extensibility / 2.
        t0: initial time.
        allow_unstable_dt: bypass the stability gate (expert use only).
        radial_quad_pad / polar_quad_pad / azimuthal_quad_pad: extra quadrature
            points beyond the bare resolution, used for projection, moments
            and error norms.
    """

    extensibility: float
    deborah: float
    weight_exponent: float
    kind: str
    lmax: int
    nmax: int
    gradient: np.ndarray
    dt: float
    t0: float = 0.0
    allow_unstable_dt: bool = False
    radial_quad_pad: int = 48
    polar_quad_pad: int = 48
    azimuthal_quad_pad: int = 96

    def __post_init__(self) -> None:
        self.gradient = np.array(self.gradient, dtype=float)
        if self.gradient.shape != (3, 3):
            raise ValueError(f"gradient must be 3x3, got shape {self.gradient.shape}")
        if not np.all(np.isfinite(self.gradient)):
            raise ValueError("gradient entries must be finite")
        scale = max(1.0, float(np.abs(self.gradient).max()))
        if abs(float(np.trace(self.gradient))) > TRACE_TOLERANCE * scale:
            raise ValueError(
                f"velocity gradient must be trace-free, got trace {np.trace(self.gradient):.3e}"
            )
        if self.extensibility <= 0.0:
            raise ValueError("extensibility must be positive")
        if self.deborah <= 0.0:
            raise ValueError("deborah must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 1.0 < self.weight_exponent <= self.extensibility / 2.0:
            raise ValueError(
                "weight exponent must lie in (1, extensibility/2], got "
                f"{self.weight_exponent} with extensibility {self.extensibility}"
            )
        self.basis()  # validates kind / lmax / nmax combination
        bound = _max_stable_dt(self.extensibility, self.deborah, self.weight_exponent)
        if self.dt >= bound and not self.allow_unstable_dt:
            raise ValueError(
                f"dt = {self.dt} violates the stability bound {bound:.6g}; "
                "set allow_unstable_dt=True to override"
            )

    def basis(self) -> radial.RadialBasis:
        return radial.RadialBasis(
            kind=self.kind,
            weight_exponent=self.weight_exponent,
            lmax=self.lmax,
            nmax=self.nmax,
        )


def stability_max_dt(cfg: SolverConfig) -> float:
    """Largest stable time step; infinite when the scheme is unconditional."""
    return _max_stable_dt(cfg.extensibility, cfg.deborah, cfg.weight_exponent)


class ModeLayout:
    """Canonical flat ordering of expansion coefficients.

    Coefficients are ordered by spherical-harmonic degree l (even, ascending),
    then by the azimuthal modes of that degree as produced by
    :func:`fenefp.angular.mode_list` (order m ascending, cosine before sine),
    and finally by the radial index. The block belonging to one degree is
    contiguous and reshapes to (2l+1, radial_dim(l)).
    """

    def __init__(self, basis: radial.RadialBasis):
        self.basis = basis
        self.l_values = list(basis.l_values())
        self.offsets: dict[int, int] = {}
        offset = 0
        for l in self.l_values:
            self.offsets[l] = offset
            offset += (2 * l + 1) * basis.radial_dim(l)
        self.size = offset

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def block(self, vec: np.ndarray, l: int) -> np.ndarray:
        """Writable (2l+1, radial_dim) view of one degree's coefficients."""
        dim = self.basis.radial_dim(l)
        start = self.offsets[l]
        return vec[start : start + (2 * l + 1) * dim].reshape(2 * l + 1, dim)


@dataclasses.dataclass
class SpectralState:
    """Flat coefficient vector in canonical layout plus its current time."""

    coeffs: np.ndarray
    time: float

    def copy(self) -> "SpectralState":
        return SpectralState(self.coeffs.copy(), self.time)


# ---------------------------------------------------------------------------
# quadrature, projection and synthesis
# ---------------------------------------------------------------------------


class QuadratureGrid:
    """Tensor-product quadrature with precomputed basis tables.

    The radial direction uses a Gauss-Jacobi rule absorbing the weight
    (1-p)^s (1+p)^(1/2), the polar direction a Gauss-Legendre rule in
    cos(theta), and the azimuthal direction a uniform (trapezoidal) rule.
    """

    def __init__(self, basis: radial.RadialBasis, layout: ModeLayout,
                 n_radial: int, n_polar: int, n_azimuthal: int):
        self.basis = basis
        self.layout = layout
        self.p, self.wp = special.gauss_jacobi(n_radial, basis.weight_exponent, 0.5)
        self.x, self.wx = special.gauss_legendre(n_polar)
        self.phi = 2.0 * math.pi * np.arange(n_azimuthal) / n_azimuthal
        self.wphi = 2.0 * math.pi / n_azimuthal
        self.legendre = special.legendre_table(basis.lmax, self.x)
        self.modes = angular.mode_list(basis.lmax)
        self.m_of_mode = np.array([m for m, _ in self.modes])
        self.azimuthal = np.stack(
            [special.azimuthal_eval(m, v, self.phi) for m, v in self.modes]
        )
        self.radial_tables = {l: basis.eval_table(l, self.p) for l in layout.l_values}
        self.weight3 = (
            self.wp[:, None, None] * self.wx[None, :, None] * self.wphi
        )
        self.shape = (n_radial, n_polar, n_azimuthal)

    def evaluate(self, fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate fn(p, cos_theta, phi) on the tensor grid (broadcasting)."""
        vals = fn(
            self.p[:, None, None], self.x[None, :, None], self.phi[None, None, :]
        )
        return np.broadcast_to(np.asarray(vals, dtype=float), self.shape).copy()

    def moments(self, values: np.ndarray) -> np.ndarray:
        """Inner products of gridded values against every basis function."""
        weighted = values * self.weight3
        # contract the azimuthal direction first, then polar, then radial
        azim = np.tensordot(weighted, self.azimuthal, axes=([2], [1]))
        leg = self.legendre[:, self.m_of_mode, :]
        polar = np.einsum("pxv,lvx->vpl", azim, leg, optimize=True)
        out = self.layout.zeros()
        for l in self.layout.l_values:
            block = self.layout.block(out, l)
            block[:] = polar[: 2 * l + 1, :, l] @ self.radial_tables[l].T
        return out

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate the expansion with the given coefficients on the grid."""
        accum = np.zeros((len(self.modes),) + self.shape[:2])
        for l in self.layout.l_values:
            radial_part = self.layout.block(coeffs, l) @ self.radial_tables[l]
            m_arr = self.m_of_mode[: 2 * l + 1]
            accum[: 2 * l + 1] += (
                radial_part[:, :, None] * self.legendre[l, m_arr, :][:, None, :]
            )
        return np.tensordot(accum, self.azimuthal, axes=([0], [0]))

    def mass_of_values(self, values: np.ndarray) -> float:
        """Integral of (1-|q|^2)^s * h over the unit ball from gridded h."""
        return measure_constant(self.basis.weight_exponent) * float(
            np.sum(values * self.weight3)
        )

    def weighted_norm(self, values: np.ndarray) -> float:
        """L2 norm of the physical density reconstructed from gridded h."""
        return math.sqrt(
            measure_constant(self.basis.weight_exponent)
            * float(np.sum(values * values * self.weight3))
        )


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class AssembledOperator:
    """Pre-factorized implicit blocks and convection applier for one config.

    Immutable after construction; safe to share between concurrent runs.
    The implicit left-hand side couples neither degrees nor azimuthal modes,
    so a single banded factorization per degree serves all its modes.
    """

    config: SolverConfig
    basis: radial.RadialBasis
    layout: ModeLayout
    grid: QuadratureGrid
    mass_blocks: dict[int, np.ndarray]
    lhs_bdf2: dict[int, radial.BandedMatrix]
    lhs_euler: dict[int, radial.BandedMatrix]
    conv_terms: list[tuple[int, int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    mass_vector_radial: np.ndarray


def _build_grid(cfg: SolverConfig, basis: radial.RadialBasis, layout: ModeLayout) -> QuadratureGrid:
    return QuadratureGrid(
        basis,
        layout,
        n_radial=cfg.nmax + 1 + cfg.radial_quad_pad,
        n_polar=cfg.lmax + 1 + cfg.polar_quad_pad,
        n_azimuthal=2 * cfg.lmax + cfg.azimuthal_quad_pad,
    )


def assemble_operator(cfg: SolverConfig) -> AssembledOperator:
    """Build mass blocks, factorized implicit blocks and convection tables."""
    basis = cfg.basis()
    layout = ModeLayout(basis)
    grid = _build_grid(cfg, basis, layout)

    de = cfg.deborah
    spring_strength = 4.0 * (cfg.extensibility - 2.0 * cfg.weight_exponent) / de
    mass_blocks: dict[int, np.ndarray] = {}
    lhs_bdf2: dict[int, radial.BandedMatrix] = {}
    lhs_euler: dict[int, radial.BandedMatrix] = {}
    for l in layout.l_values:
        mass_block = radial.mass_radial(basis, l)
        relax = (8.0 / de) * radial.stiffness_radial(basis, l)
        relax += spring_strength * radial.spring_radial(basis, l)
        if l >= 2:
            relax += (2.0 * l * (l + 1) / de) * radial.pole_radial(basis, l)
        try:
            lhs_bdf2[l] = radial.BandedMatrix.from_dense(
                1.5 / cfg.dt * mass_block + relax, 3, 3, tol=1e-10
            )
            lhs_euler[l] = radial.BandedMatrix.from_dense(
                1.0 / cfg.dt * mass_block + relax, 3, 3, tol=1e-10
            )
        except ValueError as exc:  # pragma: no cover - assembly invariant
            raise RuntimeError(f"implicit block for degree {l} is not banded: {exc}")
        mass_blocks[l] = mass_block

    conv_terms: list[tuple[int, int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    grad = cfg.gradient
    if np.any(grad != 0.0):
        tables = angular.build_angular_tables(cfg.lmax)
        for l_test in layout.l_values:
            for l_src in layout.l_values:
                if abs(l_test - l_src) > 2:
                    continue
                n_test = 2 * l_test + 1
                n_src = 2 * l_src + 1
                gu = np.zeros((n_test, n_src))
                gvw = np.zeros((n_test, n_src))
                for i in range(3):
                    for j in range(3):
                        if grad[i, j] == 0.0:
                            continue
                        gu += grad[i, j] * angular.angular_block(
                            tables, "u", i, j, l_trial=l_src, l_test=l_test
                        )
                        gvw += grad[i, j] * (
                            angular.angular_block(
                                tables, "v", i, j, l_trial=l_src, l_test=l_test
                            )
                            + angular.angular_block(
                                tables, "w", i, j, l_trial=l_src, l_test=l_test
                            )
                        )
                if not (np.any(gu) or np.any(gvw)):
                    continue
                conv_radial_t = 2.0 * radial.convection_radial(basis, l_test, l_src).T
                overlap_t = radial.overlap_radial(basis, l_test, l_src).T
                conv_terms.append((l_test, l_src, gu, gvw, conv_radial_t, overlap_t))

    mass_vector_radial = grid.radial_tables[0] @ grid.wp
    return AssembledOperator(
        config=cfg,
        basis=basis,
        layout=layout,
        grid=grid,
        mass_blocks=mass_blocks,
        lhs_bdf2=lhs_bdf2,
        lhs_euler=lhs_euler,
        conv_terms=conv_terms,
        mass_vector_radial=mass_vector_radial,
    )


def convection_moments(op: AssembledOperator, coeffs: np.ndarray) -> np.ndarray:
    """Apply the explicit convection operator, returning weak-form moments."""
    out = op.layout.zeros()
    for l_test, l_src, gu, gvw, conv_radial_t, overlap_t in op.conv_terms:
        source = op.layout.block(coeffs, l_src)
        contribution = (gu @ source) @ conv_radial_t + (gvw @ source) @ overlap_t
        op.layout.block(out, l_test)[:] += contribution
    return out


# ---------------------------------------------------------------------------
# projection / reconstruction
# ---------------------------------------------------------------------------


def _grid_for(cfg_or_op: "SolverConfig | AssembledOperator") -> tuple[ModeLayout, QuadratureGrid, float]:
    if isinstance(cfg_or_op, AssembledOperator):
        return cfg_or_op.layout, cfg_or_op.grid, cfg_or_op.config.t0
    basis = cfg_or_op.basis()
    layout = ModeLayout(basis)
    return layout, _build_grid(cfg_or_op, basis, layout), cfg_or_op.t0


def function_moments(cfg_or_op, fn) -> np.ndarray:
    """Inner products of a pointwise function against every basis function."""
    layout, grid, _ = _grid_for(cfg_or_op)
    return grid.moments(grid.evaluate(fn))


def project_function(cfg_or_op, fn) -> SpectralState:
    """Galerkin projection of fn(p, cos_theta, phi) onto the expansion."""
    layout, grid, t0 = _grid_for(cfg_or_op)
    moments = grid.moments(grid.evaluate(fn))
    coeffs = layout.zeros()
    for l in layout.l_values:
        mass_block = radial.mass_radial(layout.basis, l)
        rhs = layout.block(moments, l)
        layout.block(coeffs, l)[:] = np.linalg.solve(mass_block, rhs.T).T
    return SpectralState(coeffs, t0)


def evaluate_state(op: AssembledOperator, state: SpectralState,
                   p: np.ndarray, x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate the expansion at scattered points (p, cos_theta, phi)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    leg = special.legendre_table(op.basis.lmax, x)
    vals = np.zeros(p.shape)
    for l in op.layout.l_values:
        radial_part = op.layout.block(state.coeffs, l) @ op.basis.eval_table(l, p)
        for idx, (m, v) in enumerate(angular.mode_list(l)):
            vals += radial_part[idx] * leg[l, m] * special.azimuthal_eval(m, v, phi)
    return vals


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def mass(op: AssembledOperator, state: SpectralState) -> float:
    """Integral of the physical density over the unit ball."""
    isotropic_row = op.layout.block(state.coeffs, 0)[0]
    return (
        measure_constant(op.basis.weight_exponent)
        * math.sqrt(4.0 * math.pi)
        * float(isotropic_row @ op.mass_vector_radial)
    )


def state_norm(op: AssembledOperator, state_or_coeffs) -> float:
    """Weighted L2 norm of the transformed density."""
    coeffs = getattr(state_or_coeffs, "coeffs", state_or_coeffs)
    total = 0.0
    for l in op.layout.l_values:
        block = op.layout.block(coeffs, l)
        total += float(np.einsum("an,nm,am->", block, op.mass_blocks[l], block))
    return math.sqrt(measure_constant(op.basis.weight_exponent) * total)


def energy(op: AssembledOperator, state: SpectralState, prev: SpectralState) -> float:
    """Discrete two-level energy monitored by the stability estimate."""
    lead = state_norm(op, state.coeffs)
    trail = state_norm(op, 2.0 * state.coeffs - prev.coeffs)
    return lead * lead + trail * trail


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _solve_step(op: AssembledOperator, rhs: np.ndarray, lhs: dict[int, radial.BandedMatrix],
                t_next: float) -> SpectralState:
    new = op.layout.zeros()
    for l in op.layout.l_values:
        block = op.layout.block(rhs, l)
        op.layout.block(new, l)[:] = lhs[l].solve(block.T).T
    if not np.all(np.isfinite(new)):
        raise SolverDivergenceError(
            f"non-finite coefficients at t = {t_next:.6g}", time=t_next
        )
    return SpectralState(new, t_next)


def bdf2_step(state_n: SpectralState, state_nm1: SpectralState, op: AssembledOperator,
              source: np.ndarray | None = None) -> SpectralState:
    """Advance one step: implicit relaxation, extrapolated convection."""
    dt = op.config.dt
    history = (4.0 * state_n.coeffs - state_nm1.coeffs) / (2.0 * dt)
    rhs = convection_moments(op, 2.0 * state_n.coeffs - state_nm1.coeffs)
    for l in op.layout.l_values:
        block = op.layout.block(rhs, l)
        block += op.layout.block(history, l) @ op.mass_blocks[l]
    if source is not None:
        rhs += source
    return _solve_step(op, rhs, op.lhs_bdf2, state_n.time + dt)


def bootstrap_first_step(state_0: SpectralState, op: AssembledOperator,
                         source: np.ndarray | None = None) -> SpectralState:
    """Produce the second starting level with one backward-Euler step."""
    dt = op.config.dt
    rhs = convection_moments(op, state_0.coeffs)
    for l in op.layout.l_values:
        block = op.layout.block(rhs, l)
        block += (op.layout.block(state_0.coeffs, l) / dt) @ op.mass_blocks[l]
    if source is not None:
        rhs += source
    return _solve_step(op, rhs, op.lhs_euler, state_0.time + dt)


@dataclasses.dataclass
class SimulationResult:
    final_state: SpectralState
    diagnostics: list[dict]
    operator: AssembledOperator


def _record(op, step, state, prev, extra):
    rec = {
        "step": step,
        "time": state.time,
        "mass": mass(op, state),
        "energy": energy(op, state, prev),
    }
    if extra is not None:
        rec.update(extra(state))
    return rec


def run_simulation(cfg: SolverConfig, initial: SpectralState, *, t_end: float,
                   source: Callable[[float], np.ndarray] | None = None,
                   second_level: SpectralState | None = None,
                   operator: AssembledOperator | None = None,
                   record_every: int = 1,
                   extra_diagnostics: Callable[[SpectralState], dict] | None = None,
                   max_wall_seconds: float | None = None) -> SimulationResult:
    """March from the initial state to t_end with fixed steps.

    The first step uses backward Euler unless second_level (the exact or
    otherwise known state one step after the initial time) is supplied.
    Diagnostics (step, time, mass, energy, plus any extras) are recorded
    every record_every steps.
    """
    op = operator if operator is not None else assemble_operator(cfg)
    span = t_end - initial.time
    n_steps = int(round(span / cfg.dt))
    if n_steps < 1:
        raise ValueError("t_end must lie at least one step beyond the initial time")
    if abs(n_steps * cfg.dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError("simulation span must be an integer number of steps")

    started = _time.monotonic()
    energy_ref = max(energy(op, initial, initial), 1e-300)
    records = [_record(op, 0, initial, initial, extra_diagnostics)]

    prev = initial
    if second_level is not None:
        cur = second_level
        first = 2
    else:
        src = source(initial.time + cfg.dt) if source is not None else None
        cur = bootstrap_first_step(initial, op, source=src)
        first = 2
    if 1 % record_every == 0 or n_steps == 1:
        records.append(_record(op, 1, cur, prev, extra_diagnostics))

    for step in range(first, n_steps + 1):
        t_next = initial.time + step * cfg.dt
        src = source(t_next) if source is not None else None
        try:
            nxt = bdf2_step(cur, prev, op, source=src)
        except SolverDivergenceError as exc:
            raise SolverDivergenceError(str(exc), step=step, time=t_next) from None
        prev, cur = cur, nxt
        current_energy = energy(op, cur, prev)
        if not math.isfinite(current_energy) or current_energy > ENERGY_BLOWUP_FACTOR * energy_ref:
            raise SolverDivergenceError(
                f"energy {current_energy:.3e} exceeds {ENERGY_BLOWUP_FACTOR:.0e} x initial "
                f"{energy_ref:.3e} at step {step}",
                step=step,
                time=t_next,
            )
        if step % record_every == 0 or step == n_steps:
            records.append(_record(op, step, cur, prev, extra_diagnostics))
        if max_wall_seconds is not None and _time.monotonic() - started > max_wall_seconds:
            raise TimeoutError(f"wall-clock budget exceeded at step {step}")
    return SimulationResult(final_state=cur, diagnostics=records, operator=op)


def run_until_steady(cfg: SolverConfig, initial: SpectralState, *,
                     operator: AssembledOperator | None = None,
                     tol: float = 1e-10, max_steps: int = 2_000_000,
                     max_wall_seconds: float | None = None) -> tuple[SpectralState, dict]:
    """March until the relative coefficient change per unit time drops below tol."""
    op = operator if operator is not None else assemble_operator(cfg)
    started = _time.monotonic()
    energy_ref = max(energy(op, initial, initial), 1e-300)
    prev = initial
    cur = bootstrap_first_step(initial, op)
    for step in range(2, max_steps + 1):
        t_next = initial.time + step * cfg.dt
        try:
            nxt = bdf2_step(cur, prev, op)
        except SolverDivergenceError as exc:
            raise SolverDivergenceError(str(exc), step=step, time=t_next) from None
        prev, cur = cur, nxt
        current_energy = energy(op, cur, prev)
        if not math.isfinite(current_energy) or current_energy > ENERGY_BLOWUP_FACTOR * energy_ref:
            raise SolverDivergenceError(
                f"energy blow-up during steady march at step {step}",
                step=step,
                time=t_next,
            )
        scale = max(float(np.linalg.norm(cur.coeffs)), 1e-300)
        residual = float(np.linalg.norm(cur.coeffs - prev.coeffs)) / (cfg.dt * scale)
        if residual < tol:
            return cur, {
                "steps": step,
                "residual": residual,
                "time": cur.time,
                "converged": True,
                "wall_seconds": _time.monotonic() - started,
            }
        if max_wall_seconds is not None and _time.monotonic() - started > max_wall_seconds:
            raise TimeoutError(f"steady march exceeded wall-clock budget at step {step}")
    raise RuntimeError(
        f"steady march did not converge within {max_steps} steps (residual {residual:.3e})"
    )


# ---------------------------------------------------------------------------
# reference profiles
# ---------------------------------------------------------------------------


def equilibrium_normalization(extensibility: float) -> float:
    """Normalizing constant of the zero-flow steady density (1-|q|^2)^(b/2)."""
    half = extensibility / 2.0
    return math.exp(
        gammaln(half + 2.5) - gammaln(half + 1.0) - 1.5 * math.log(math.pi)
    )


def equilibrium_profile(cfg: SolverConfig) -> Callable:
    """Transformed zero-flow equilibrium h(p) with unit total mass."""
    norm = equilibrium_normalization(cfg.extensibility)
    power = cfg.extensibility / 2.0 - cfg.weight_exponent
    def profile(p, x, phi):
        return norm * ((1.0 - p) / 2.0) ** power + 0.0 * (x + phi)
    return profile


def steady_flow_profile(cfg: SolverConfig,
                        operator: AssembledOperator | None = None) -> Callable:
    """Exact steady transformed density for a symmetric velocity gradient.

    For a symmetric (purely straining) gradient the drift is the gradient of
    a potential and the dynamics admit the closed-form steady density
    proportional to (1-|q|^2)^(b/2) exp(De/2 * q.D.q). Normalized to unit
    total mass by quadrature.
    """
    grad = cfg.gradient
    scale = max(1.0, float(np.abs(grad).max()))
    if float(np.abs(grad - grad.T).max()) > 1e-12 * scale:
        raise ValueError("exact steady profile requires a symmetric velocity gradient")
    sym = 0.5 * (grad + grad.T)
    power = cfg.extensibility / 2.0 - cfg.weight_exponent
    half_de = 0.5 * cfg.deborah

    def raw(p, x, phi):
        r2 = (1.0 + p) / 2.0
        sin_theta = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
        u1 = sin_theta * np.cos(phi)
        u2 = sin_theta * np.sin(phi)
        u3 = x + 0.0 * phi
        quad_form = (
            sym[0, 0] * u1 * u1
            + sym[1, 1] * u2 * u2
            + sym[2, 2] * u3 * u3
            + 2.0 * (sym[0, 1] * u1 * u2 + sym[0, 2] * u1 * u3 + sym[1, 2] * u2 * u3)
        )
        return ((1.0 - p) / 2.0) ** power * np.exp(half_de * r2 * quad_form)

    if operator is not None:
        grid = operator.grid
    else:
        basis = cfg.basis()
        layout = ModeLayout(basis)
        grid = _build_grid(cfg, basis, layout)
    total = grid.mass_of_values(grid.evaluate(raw))

    def profile(p, x, phi):
        return raw(p, x, phi) / total

    return profile
