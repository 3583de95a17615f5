"""Weighted Jacobi radial bases on the mapped interval and their Galerkin matrices.

The solver works on the mapped radial coordinate p in [-1, 1] (p = 2 r^2 - 1,
with r the dumbbell extension as a fraction of maximum length). After pulling
the equilibrium-like factor (1 - r^2)^s out of the distribution, the remaining
smooth part is expanded per spherical-harmonic degree l in radial functions

    phi_{l,n}(p) = (1 + p)^{g_l} * J_n^{(s - 2, beta_l)}(p),

where J_n is the Jacobi polynomial and the prefactor power g_l enforces the
behavior required at the coordinate pole r = 0. Two families are provided:

* ``jg1``: g_l = 1 for all l >= 2 (minimal pole regularity, one radial
  dimension per degree independent of l),
* ``jginf``: g_l = l (fully smooth at the pole, radial dimension shrinking
  with l).

All inner products carry the fixed weight (1 - p)^s (1 + p)^(1/2), which is
the mapped image of the (1 - r^2)^s ball weight; every matrix entry below is
a polynomial against a Gauss-Jacobi weight and is therefore computed exactly.
Row indices are always test functions, column indices trial functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .special import gauss_jacobi, jacobi_derivative_table, jacobi_table

__all__ = [
    "RadialBasis",
    "BandedMatrix",
    "mass_radial",
    "stiffness_radial",
    "pole_radial",
    "spring_radial",
    "convection_radial",
    "overlap_radial",
]

MASS_HALF_BANDWIDTH = 3
STIFFNESS_HALF_BANDWIDTH = 2
POLE_HALF_BANDWIDTH = 2
SPRING_HALF_BANDWIDTH = 2
CROSS_HALF_BANDWIDTH = 3


@dataclass(frozen=True)
class RadialBasis:
    """One radial expansion family at fixed weight exponent and resolution.

    Attributes:
        kind: "jg1" or "jginf".
        s: Weight exponent pulled out of the distribution; must satisfy
            s > 1 so the Jacobi parameter s - 2 stays admissible.
        lmax: Highest spherical-harmonic degree carried (even).
        nmax: Radial resolution parameter. Family "jg1" uses nmax + 1 radial
            functions at every degree; "jginf" uses nmax - l + 1 at degree l
            and therefore requires lmax <= nmax.
    """

    kind: str
    weight_exponent: float
    lmax: int
    nmax: int

    def __post_init__(self) -> None:
        if self.kind not in ("jg1", "jginf"):
            raise ValueError(f"unknown radial family {self.kind!r}")
        if self.weight_exponent <= 1.0:
            raise ValueError(f"weight exponent must exceed 1, got {self.weight_exponent}")
        if self.lmax < 0 or self.lmax % 2 != 0:
            raise ValueError(f"lmax must be even and nonnegative, got {self.lmax}")
        if self.nmax < 0:
            raise ValueError(f"nmax must be nonnegative, got {self.nmax}")
        if self.kind == "jginf" and self.lmax > self.nmax:
            raise ValueError(
                f"jginf needs lmax <= nmax, got lmax={self.lmax}, nmax={self.nmax}"
            )

    def l_values(self) -> list[int]:
        """Even spherical-harmonic degrees carried by the expansion."""
        return list(range(0, self.lmax + 1, 2))

    def radial_dim(self, l: int) -> int:
        """Number of radial functions at degree l."""
        self._check_degree(l)
        if self.kind == "jg1":
            return self.nmax + 1
        return self.nmax - l + 1

    def prefactor_power(self, l: int) -> int:
        """Power of (1 + p) multiplying the Jacobi polynomials at degree l."""
        self._check_degree(l)
        if l == 0:
            return 0
        return 1 if self.kind == "jg1" else l

    def jacobi_beta(self, l: int) -> float:
        """Second Jacobi parameter of the degree-l family."""
        if l == 0:
            return 0.5
        return 2.0 * self.prefactor_power(l) - 0.5

    def dof(self) -> int:
        """Total number of expansion coefficients across all harmonics."""
        return sum((2 * l + 1) * self.radial_dim(l) for l in self.l_values())

    def eval_table(self, l: int, p: np.ndarray) -> np.ndarray:
        """Values of all degree-l radial functions, shape (radial_dim, len(p))."""
        g = self.prefactor_power(l)
        dim = self.radial_dim(l)
        tab = jacobi_table(dim - 1, self.weight_exponent - 2.0, self.jacobi_beta(l), p)
        return (1.0 + p) ** g * tab

    def eval_derivative_table(self, l: int, p: np.ndarray) -> np.ndarray:
        """p-derivatives of all degree-l radial functions."""
        g = self.prefactor_power(l)
        dim = self.radial_dim(l)
        alpha = self.weight_exponent - 2.0
        beta = self.jacobi_beta(l)
        tab = jacobi_table(dim - 1, alpha, beta, p)
        dtab = jacobi_derivative_table(dim - 1, alpha, beta, p)
        out = (1.0 + p) ** g * dtab
        if g > 0:
            out = out + g * (1.0 + p) ** (g - 1) * tab
        return out

    def _check_degree(self, l: int) -> None:
        if l < 0 or l % 2 != 0 or l > self.lmax:
            raise ValueError(f"degree must be even in [0, {self.lmax}], got {l}")


@dataclass(frozen=True)
class BandedMatrix:
    """Square banded matrix in LAPACK band storage with validated bandwidth."""

    lower: int
    upper: int
    bands: np.ndarray
    n: int

    @classmethod
    def from_dense(
        cls, dense: np.ndarray, lower: int, upper: int, tol: float = 1e-13
    ) -> "BandedMatrix":
        """Wrap a dense matrix, asserting entries outside the band are noise.

        Raises ValueError if any out-of-band entry exceeds tol times the
        largest magnitude in the matrix.
        """
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        if dense.shape != (n, n):
            raise ValueError(f"expected square matrix, got {dense.shape}")
        scale = np.abs(dense).max()
        if scale > 0.0:
            rows, cols = np.indices(dense.shape)
            outside = (cols - rows > upper) | (rows - cols > lower)
            worst = np.abs(dense[outside]).max() if outside.any() else 0.0
            if worst > tol * scale:
                raise ValueError(
                    f"out-of-band entry {worst:.3e} exceeds {tol:.1e} * max {scale:.3e}"
                )
        bands = np.zeros((lower + upper + 1, n), dtype=float)
        for diag in range(-lower, upper + 1):
            row = upper - diag
            if diag >= 0:
                bands[row, diag:] = np.diagonal(dense, diag)
            else:
                bands[row, : n + diag] = np.diagonal(dense, diag)
        return cls(lower=lower, upper=upper, bands=bands, n=n)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=float)
        for diag in range(-self.lower, self.upper + 1):
            row = self.upper - diag
            if diag >= 0:
                idx = np.arange(self.n - diag)
                out[idx, idx + diag] = self.bands[row, diag:]
            else:
                idx = np.arange(self.n + diag)
                out[idx - diag, idx] = self.bands[row, : self.n + diag]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve this matrix against one or more right-hand-side columns."""
        return solve_banded(
            (self.lower, self.upper), self.bands, rhs, check_finite=False
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_dense() @ x


@lru_cache(maxsize=None)
def _rule(npts: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    return gauss_jacobi(npts, alpha, beta)


def _npts(basis: RadialBasis) -> int:
    return basis.nmax + 8


def mass_radial(basis: RadialBasis, l: int) -> np.ndarray:
    """Weighted overlap of the degree-l functions with themselves (symmetric)."""
    p, w = _rule(_npts(basis), basis.weight_exponent, 0.5)
    tab = basis.eval_table(l, p)
    return (tab * w) @ tab.T


def stiffness_radial(basis: RadialBasis, l: int) -> np.ndarray:
    """Radial diffusion matrix: (1 + p)-weighted overlap of derivatives."""
    p, w = _rule(_npts(basis), basis.weight_exponent, 0.5)
    dtab = basis.eval_derivative_table(l, p)
    return (dtab * (w * (1.0 + p))) @ dtab.T


def pole_radial(basis: RadialBasis, l: int) -> np.ndarray:
    """Angular-diffusion pole matrix: overlap against 1/(1 + p).

    Only defined for l >= 2; at l = 0 its prefactor l (l + 1) vanishes and
    the integrand would not be polynomial, so it is never assembled there.
    """
    if l < 2:
        raise ValueError("pole matrix is only assembled for l >= 2")
    p, w = _rule(_npts(basis), basis.weight_exponent, 0.5)
    tab = basis.eval_table(l, p)
    return (tab * (w / (1.0 + p))) @ tab.T


def spring_radial(basis: RadialBasis, l: int) -> np.ndarray:
    """Spring-force matrix: trial functions against test derivatives.

    Entry [i, j] integrates (1 + p)/(1 - p) * phi_j * phi_i' against the
    expansion weight; the 1/(1 - p) is folded into a Gauss-Jacobi rule with
    first parameter s - 1, keeping the evaluation exact.
    """
    p, w = _rule(_npts(basis), basis.weight_exponent - 1.0, 0.5)
    tab = basis.eval_table(l, p)
    dtab = basis.eval_derivative_table(l, p)
    return (dtab * (w * (1.0 + p))) @ tab.T


def convection_radial(basis: RadialBasis, l_test: int, l_trial: int) -> np.ndarray:
    """Convection coupling block: (1 + p)-weighted trial against test derivative.

    Shape (radial_dim(l_test), radial_dim(l_trial)); couples harmonics whose
    degrees differ by at most 2.
    """
    p, w = _rule(_npts(basis), basis.weight_exponent, 0.5)
    dtest = basis.eval_derivative_table(l_test, p)
    trial = basis.eval_table(l_trial, p)
    return (dtest * (w * (1.0 + p))) @ trial.T


def overlap_radial(basis: RadialBasis, l_test: int, l_trial: int) -> np.ndarray:
    """Plain weighted overlap between the degree-l_test and l_trial functions."""
    p, w = _rule(_npts(basis), basis.weight_exponent, 0.5)
    test = basis.eval_table(l_test, p)
    trial = basis.eval_table(l_trial, p)
    return (test * w) @ trial.T
