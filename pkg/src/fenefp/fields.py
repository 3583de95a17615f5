"""Reconstruction, moments, norms and slice export for spectral states.

All routines are pure, read-only consumers of solver states. The physical
density is f = (1 - |q|^2)^s * h, where h is the expanded transformed
variable; moments of f reduce to exact Gauss-Jacobi sums because the
monomial factors fold into the quadrature weight.
"""

from __future__ import annotations

import csv
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks

from . import angular, radial, special
from .solver import (
    AssembledOperator,
    ModeLayout,
    SpectralState,
    assemble_operator,
    evaluate_state,
    mass,
    measure_constant,
)

__all__ = [
    "synthesize_on",
    "evaluate_f",
    "density_evaluator",
    "weighted_l2_error",
    "conformation_tensor",
    "stress_tensor",
    "first_normal_stress_difference",
    "is_positive_definite",
    "conformation_is_admissible",
    "BallGrid",
    "spectral_density_on",
    "relative_density_error",
    "axis_slice",
    "plane_slice",
    "count_peaks",
    "export_axis_slice",
    "export_plane_grid",
    "export_field_grid",
    "write_csv",
]


def _resources(cfg_or_op) -> AssembledOperator:
    if isinstance(cfg_or_op, AssembledOperator):
        return cfg_or_op
    return assemble_operator(cfg_or_op)


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


def synthesize_on(basis: radial.RadialBasis, layout: ModeLayout, coeffs: np.ndarray,
                  p: np.ndarray, x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate the transformed variable h on an arbitrary tensor grid."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    modes = angular.mode_list(basis.lmax)
    legendre = special.legendre_table(basis.lmax, x)
    azim = np.stack([special.azimuthal_eval(m, v, phi) for m, v in modes])
    accum = np.zeros((len(modes), p.size, x.size))
    for l in layout.l_values:
        radial_part = layout.block(coeffs, l) @ basis.eval_table(l, p)
        m_arr = np.array([m for m, _ in angular.mode_list(l)])
        accum[: 2 * l + 1] += (
            radial_part[:, :, None] * legendre[l, m_arr, :][:, None, :]
        )
    return np.tensordot(accum, azim, axes=([0], [0]))


def evaluate_f(op, state: SpectralState, r: np.ndarray, theta: np.ndarray,
               phi: np.ndarray) -> np.ndarray:
    """Physical density at scattered points given in spherical coordinates."""
    op = _resources(op)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any(r >= 1.0) or np.any(r < 0.0):
        raise ValueError("sample radii must lie in [0, 1)")
    p = 2.0 * r * r - 1.0
    x = np.cos(theta)
    h_vals = evaluate_state(op, state, p, x, phi)
    return (1.0 - r * r) ** op.basis.weight_exponent * h_vals


def density_evaluator(op, state: SpectralState) -> Callable:
    """Wrap a state as a Cartesian density f(q1, q2, q3)."""
    op = _resources(op)

    def density(q1, q2, q3):
        q1 = np.asarray(q1, dtype=float)
        q2 = np.asarray(q2, dtype=float)
        q3 = np.asarray(q3, dtype=float)
        r = np.sqrt(q1 * q1 + q2 * q2 + q3 * q3)
        theta = np.arccos(np.clip(np.divide(q3, r, out=np.zeros_like(r), where=r > 0.0), -1.0, 1.0))
        phi = np.arctan2(q2, q1)
        return evaluate_f(op, state, r.ravel(), theta.ravel(), phi.ravel()).reshape(r.shape)

    return density


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------


def weighted_l2_error(op, state: SpectralState, reference_f: Callable) -> float:
    """Relative error against a pointwise density in the boundary-weighted norm.

    The norm divides the squared density by the boundary weight, so it equals
    the plain L2 norm of the transformed variable under the Jacobi weight;
    reference_f is called with broadcastable (r, theta, phi) arrays.
    """
    op = _resources(op)
    grid = op.grid
    numeric = grid.synthesize(state.coeffs)
    r = np.sqrt((1.0 + grid.p) / 2.0)[:, None, None]
    theta = np.arccos(grid.x)[None, :, None]
    phi = grid.phi[None, None, :]
    f_ref = np.broadcast_to(
        np.asarray(reference_f(r, theta, phi), dtype=float), grid.shape
    )
    h_ref = f_ref / ((1.0 - grid.p[:, None, None]) / 2.0) ** op.basis.weight_exponent
    scale = grid.weighted_norm(h_ref)
    if scale == 0.0:
        raise ValueError("reference density has zero norm")
    return grid.weighted_norm(numeric - h_ref) / scale


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def _angular_second_moment_table(op) -> np.ndarray:
    """Integrals of Y * unit_i * unit_j over the sphere for degrees 0 and 2."""
    grid = op.grid
    x, phi = grid.x, grid.phi
    sin_theta = np.sqrt(1.0 - x * x)
    units = [
        sin_theta[:, None] * np.cos(phi)[None, :],
        sin_theta[:, None] * np.sin(phi)[None, :],
        x[:, None] * np.ones_like(phi)[None, :],
    ]
    weights = grid.wx[:, None] * grid.wphi
    rows = []
    for l in (0, 2):
        if l > op.basis.lmax:
            break
        for m, v in angular.mode_list(l):
            harmonic = (
                grid.legendre[l, m][:, None]
                * special.azimuthal_eval(m, v, phi)[None, :]
            )
            row = np.empty((3, 3))
            for i in range(3):
                for j in range(3):
                    row[i, j] = float(np.sum(harmonic * units[i] * units[j] * weights))
            rows.append(row)
    return np.array(rows)


def _second_moment(op, state: SpectralState, radial_integrals: dict[int, np.ndarray],
                   normalize: bool) -> np.ndarray:
    angular_table = _angular_second_moment_table(op)
    tensor = np.zeros((3, 3))
    row = 0
    for l in (0, 2):
        if l > op.basis.lmax or l not in radial_integrals:
            break
        block = op.layout.block(state.coeffs, l)
        amplitudes = block @ radial_integrals[l]
        for a in range(2 * l + 1):
            tensor += amplitudes[a] * angular_table[row]
            row += 1
    tensor *= measure_constant(op.basis.weight_exponent)
    if normalize:
        total = mass(op, state)
        if abs(total) < 1e-300:
            raise ValueError("cannot normalize a zero-mass state")
        tensor /= total
    return 0.5 * (tensor + tensor.T)


def conformation_tensor(op, state: SpectralState, normalize: bool = True) -> np.ndarray:
    """Second moment <q q> of the density (3x3, symmetric).

    Only spherical-harmonic degrees 0 and 2 contribute because the quadratic
    monomials span exactly those degrees.
    """
    op = _resources(op)
    radial_integrals = {
        l: op.grid.radial_tables[l] @ (((1.0 + op.grid.p) / 2.0) * op.grid.wp)
        for l in (0, 2)
        if l <= op.basis.lmax
    }
    return _second_moment(op, state, radial_integrals, normalize)


def stress_tensor(op, state: SpectralState, normalize: bool = True) -> np.ndarray:
    """Polymer stress b*<q q / (1 - |q|^2)> - I of a spectral state.

    The inner moment sees the spring divergence, so its radial integrals use
    the Jacobi rule with the weight exponent lowered by one (exact for the
    basis polynomials).
    """
    op = _resources(op)
    basis = op.basis
    n_nodes = op.grid.p.size
    p_low, w_low = special.gauss_jacobi(n_nodes, basis.weight_exponent - 1.0, 0.5)
    radial_integrals = {
        l: basis.eval_table(l, p_low) @ ((1.0 + p_low) * w_low)
        for l in (0, 2)
        if l <= basis.lmax
    }
    moment = _second_moment(op, state, radial_integrals, normalize)
    return op.config.extensibility * moment - np.eye(3)


def first_normal_stress_difference(stress: np.ndarray) -> float:
    return float(stress[0, 0] - stress[1, 1])


def is_positive_definite(matrix: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.linalg.eigvalsh(np.asarray(matrix)).min() > tol)


def conformation_is_admissible(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    """Symmetric, positive definite, trace below the extensibility bound."""
    matrix = np.asarray(matrix, dtype=float)
    if np.abs(matrix - matrix.T).max() > 1e-14 * max(1.0, np.abs(matrix).max()):
        return False
    return is_positive_definite(matrix, tol=tol) and float(np.trace(matrix)) < 1.0


# ---------------------------------------------------------------------------
# unweighted comparison norm over the ball
# ---------------------------------------------------------------------------


class BallGrid:
    """Tensor quadrature for plain (unweighted) integrals over the unit ball."""

    def __init__(self, n_radial: int = 96, n_polar: int = 96, n_azimuthal: int = 192):
        self.p, self.wp = special.gauss_jacobi(n_radial, 0.0, 0.5)
        self.x, self.wx = special.gauss_legendre(n_polar)
        self.phi = 2.0 * math.pi * np.arange(n_azimuthal) / n_azimuthal
        self.wphi = 2.0 * math.pi / n_azimuthal
        self.weight3 = self.wp[:, None, None] * self.wx[None, :, None] * self.wphi
        self.shape = (n_radial, n_polar, n_azimuthal)
        self.r = np.sqrt((1.0 + self.p) / 2.0)
        sin_theta = np.sqrt(1.0 - self.x * self.x)
        self.q1 = (
            self.r[:, None, None]
            * sin_theta[None, :, None]
            * np.cos(self.phi)[None, None, :]
        )
        self.q2 = (
            self.r[:, None, None]
            * sin_theta[None, :, None]
            * np.sin(self.phi)[None, None, :]
        )
        self.q3 = (
            self.r[:, None, None]
            * self.x[None, :, None]
            * np.ones_like(self.phi)[None, None, :]
        )

    def evaluate_cartesian(self, fn: Callable) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(fn(self.q1, self.q2, self.q3), dtype=float), self.shape
        ).copy()

    def integral(self, values: np.ndarray) -> float:
        return measure_constant(0.0) * float(np.sum(values * self.weight3))

    def norm(self, values: np.ndarray) -> float:
        return math.sqrt(self.integral(values * values))


def spectral_density_on(op, state: SpectralState, ball: BallGrid) -> np.ndarray:
    """Physical density of a spectral state on a BallGrid tensor grid."""
    op = _resources(op)
    h_vals = synthesize_on(op.basis, op.layout, state.coeffs, ball.p, ball.x, ball.phi)
    return ((1.0 - ball.p[:, None, None]) / 2.0) ** op.basis.weight_exponent * h_vals


def relative_density_error(values_num: np.ndarray, values_ref: np.ndarray,
                           ball: BallGrid, renormalize: bool = True) -> float:
    """Relative unweighted L2 difference of two densities on the ball.

    With renormalize=True each field is first scaled to unit total mass,
    making the comparison insensitive to normalization drift.
    """
    num = np.asarray(values_num, dtype=float)
    ref = np.asarray(values_ref, dtype=float)
    if renormalize:
        num = num / ball.integral(num)
        ref = ref / ball.integral(ref)
    scale = ball.norm(ref)
    if scale == 0.0:
        raise ValueError("reference density has zero norm")
    return ball.norm(num - ref) / scale


# ---------------------------------------------------------------------------
# slices and export
# ---------------------------------------------------------------------------


def axis_slice(fn: Callable, axis: int = 0, resolution: int = 401,
               extent: float = 0.999) -> tuple[np.ndarray, np.ndarray]:
    """Sample a Cartesian density along one coordinate axis through the origin."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    coords = np.linspace(-extent, extent, resolution)
    zeros = np.zeros_like(coords)
    args = [zeros, zeros, zeros]
    args[axis] = coords
    return coords, np.asarray(fn(*args), dtype=float)


def plane_slice(fn: Callable, resolution: int = 201, extent: float = 0.999
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Sample a Cartesian density on the q3 = 0 plane.

    Returns (q1 grid, q2 grid, values with NaN outside the ball, skipped count).
    """
    coords = np.linspace(-extent, extent, resolution)
    g1, g2 = np.meshgrid(coords, coords, indexing="ij")
    inside = g1 * g1 + g2 * g2 < 1.0
    values = np.full(g1.shape, np.nan)
    values[inside] = np.asarray(
        fn(g1[inside], g2[inside], np.zeros(int(inside.sum()))), dtype=float
    )
    return g1, g2, values, int((~inside).sum())


def count_peaks(values: np.ndarray, prominence_fraction: float = 1e-4) -> int:
    """Number of interior local maxima with non-negligible prominence."""
    values = np.asarray(values, dtype=float)
    scale = float(np.abs(values).max())
    if scale == 0.0:
        return 0
    peaks, _ = find_peaks(values, prominence=prominence_fraction * scale)
    return int(peaks.size)


def write_csv(path, columns: dict[str, Sequence], comments: Iterable[str] = ()) -> None:
    """Write named columns as CSV with optional leading comment lines."""
    names = list(columns)
    arrays = [np.asarray(columns[name]).ravel() for name in names]
    length = len(arrays[0])
    if any(len(arr) != length for arr in arrays):
        raise ValueError("all columns must have equal length")
    with open(path, "w", newline="") as handle:
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle)
        writer.writerow(names)
        for row in range(length):
            writer.writerow([repr(float(arr[row])) for arr in arrays])


def export_axis_slice(fn: Callable, axis: int, path, resolution: int = 401,
                      extent: float = 0.999) -> tuple[np.ndarray, np.ndarray]:
    coords, values = axis_slice(fn, axis=axis, resolution=resolution, extent=extent)
    name = f"q{axis + 1}"
    write_csv(path, {name: coords, "f": values})
    return coords, values


def export_plane_grid(fn: Callable, path, resolution: int = 201,
                      extent: float = 0.999) -> int:
    g1, g2, values, skipped = plane_slice(fn, resolution=resolution, extent=extent)
    inside = ~np.isnan(values)
    write_csv(
        path,
        {"q1": g1[inside], "q2": g2[inside], "f": values[inside]},
        comments=[f"plane q3 = 0; skipped {skipped} out-of-ball grid points"],
    )
    return skipped


def export_field_grid(subject, spec: dict, path, *, operator=None, **kwargs):
    """Export a slice of a density to CSV.

    subject is either a Cartesian callable f(q1, q2, q3) or a SpectralState
    (in which case operator must be supplied). spec selects the slice:
    {"plane": "q3"} for the equatorial contour grid or {"axis": 0|1|2} for a
    1D profile through the origin.
    """
    if isinstance(subject, SpectralState):
        if operator is None:
            raise ValueError("exporting a spectral state requires its operator")
        fn = density_evaluator(operator, subject)
    else:
        fn = subject
    if "plane" in spec:
        if spec["plane"] != "q3":
            raise ValueError("only the q3 = 0 plane is supported")
        return export_plane_grid(fn, path, **kwargs)
    if "axis" in spec:
        return export_axis_slice(fn, spec["axis"], path, **kwargs)
    raise ValueError("slice spec must contain 'plane' or 'axis'")
