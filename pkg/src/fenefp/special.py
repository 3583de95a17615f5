"""Orthogonal-polynomial and spherical-harmonic primitives.

Everything downstream (radial bases, angular coupling, quadrature-exact
Galerkin matrices) is built from the functions in this module: Jacobi
polynomial evaluation on [-1, 1], Gauss-Jacobi and Gauss-Legendre rules,
and orthonormalized associated Legendre functions with their polar-angle
derivatives.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, roots_jacobi

__all__ = [
    "jacobi_table",
    "jacobi_derivative_table",
    "jacobi_norm_squared",
    "gauss_jacobi",
    "gauss_legendre",
    "legendre_table",
    "legendre_theta_derivative_table",
    "azimuthal_eval",
    "real_harmonic_eval",
]


def jacobi_table(nmax: int, alpha: float, beta: float, p: np.ndarray) -> np.ndarray:
    """Evaluate Jacobi polynomials of all degrees 0..nmax on given points.

    Uses the standard three-term recurrence, which is stable for the
    parameter ranges used here (alpha > -1, beta > -1, including the large
    beta values of the smooth-pole radial family).

    Args:
        nmax: Highest polynomial degree.
        alpha: Exponent of the (1 - p) weight factor.
        beta: Exponent of the (1 + p) weight factor.
        p: Evaluation points in [-1, 1], any shape.

    Returns:
        Array of shape (nmax + 1,) + p.shape with values of each degree.
    """
    if alpha <= -1 or beta <= -1:
        raise ValueError(f"Jacobi parameters must exceed -1, got ({alpha}, {beta})")
    p = np.asarray(p, dtype=float)
    out = np.empty((nmax + 1,) + p.shape, dtype=float)
    out[0] = 1.0
    if nmax == 0:
        return out
    ab = alpha + beta
    out[1] = (alpha + 1.0) + (ab + 2.0) * (p - 1.0) / 2.0
    for n in range(2, nmax + 1):
        c1 = 2.0 * n * (n + ab) * (2.0 * n + ab - 2.0)
        c2 = (2.0 * n + ab - 1.0) * (alpha**2 - beta**2)
        c3 = (2.0 * n + ab - 1.0) * (2.0 * n + ab) * (2.0 * n + ab - 2.0)
        c4 = 2.0 * (n + alpha - 1.0) * (n + beta - 1.0) * (2.0 * n + ab)
        out[n] = ((c2 + c3 * p) * out[n - 1] - c4 * out[n - 2]) / c1
    return out


def jacobi_derivative_table(
    nmax: int, alpha: float, beta: float, p: np.ndarray
) -> np.ndarray:
    """First derivatives of Jacobi polynomials of all degrees 0..nmax.

    Uses the shift identity: the derivative of the degree-n polynomial with
    parameters (alpha, beta) is (n + alpha + beta + 1)/2 times the degree
    n-1 polynomial with parameters (alpha + 1, beta + 1).
    """
    p = np.asarray(p, dtype=float)
    out = np.zeros((nmax + 1,) + p.shape, dtype=float)
    if nmax == 0:
        return out
    shifted = jacobi_table(nmax - 1, alpha + 1.0, beta + 1.0, p)
    n = np.arange(1, nmax + 1, dtype=float)
    scale = (n + alpha + beta + 1.0) / 2.0
    out[1:] = scale.reshape((-1,) + (1,) * p.ndim) * shifted
    return out


def jacobi_norm_squared(n: int, alpha: float, beta: float) -> float:
    """Weighted L2 norm squared of the degree-n Jacobi polynomial.

    The weight is (1 - p)^alpha (1 + p)^beta on [-1, 1].
    """
    ab = alpha + beta
    logh = (
        (ab + 1.0) * np.log(2.0)
        - np.log(2.0 * n + ab + 1.0)
        + gammaln(n + alpha + 1.0)
        + gammaln(n + beta + 1.0)
        - gammaln(n + ab + 1.0)
        - gammaln(n + 1.0)
    )
    return float(np.exp(logh))


def gauss_jacobi(npts: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi rule: exact for degree <= 2*npts - 1 against the Jacobi weight."""
    if npts < 1:
        raise ValueError("quadrature rule needs at least one point")
    nodes, weights = roots_jacobi(npts, alpha, beta)
    return np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)


def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [-1, 1], exact for degree <= 2*npts - 1."""
    if npts < 1:
        raise ValueError("quadrature rule needs at least one point")
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    return nodes, weights


def legendre_table(lmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormalized associated Legendre functions on given points.

    Normalization: the integral of the square over x in [-1, 1] is 1 for
    every (degree, order) pair, and no Condon-Shortley sign is applied.
    The (0, 0) function is the constant 1/sqrt(2).

    Args:
        lmax: Highest degree.
        x: Points in [-1, 1] (cosine of the polar angle), 1-D.

    Returns:
        Array of shape (lmax + 1, lmax + 1, len(x)); entry [l, m] holds the
        degree-l order-m function (zero where m > l).
    """
    x = np.asarray(x, dtype=float)
    nx = x.shape[0]
    out = np.zeros((lmax + 1, lmax + 1, nx), dtype=float)
    sx = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    out[0, 0] = 1.0 / np.sqrt(2.0)
    for m in range(1, lmax + 1):
        out[m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sx * out[m - 1, m - 1]
    for m in range(0, lmax):
        out[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * out[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(
                (2.0 * l + 1.0)
                / (2.0 * l - 3.0)
                * ((l - 1.0) ** 2 - m * m)
                / (l * l - m * m)
            )
            out[l, m] = a * x * out[l - 1, m] - b * out[l - 2, m]
    return out


def legendre_theta_derivative_table(
    lmax: int, x: np.ndarray, table: np.ndarray | None = None
) -> np.ndarray:
    """Polar-angle derivatives of the orthonormalized Legendre functions.

    Returns d/dtheta of each function from :func:`legendre_table`, evaluated
    at x = cos(theta). The points must lie strictly inside (-1, 1); interior
    quadrature nodes always do.

    Args:
        lmax: Highest degree.
        x: Points strictly inside (-1, 1), 1-D.
        table: Optional precomputed output of ``legendre_table(lmax, x)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= 1.0):
        raise ValueError("theta-derivative evaluation requires |x| < 1")
    if table is None:
        table = legendre_table(lmax, x)
    sx = np.sqrt(1.0 - x * x)
    out = np.zeros_like(table)
    for m in range(0, lmax + 1):
        for l in range(m, lmax + 1):
            acc = l * x * table[l, m]
            if l - 1 >= m:
                gamma = np.sqrt((2.0 * l + 1.0) * (l * l - m * m) / (2.0 * l - 1.0))
                acc = acc - gamma * table[l - 1, m]
            out[l, m] = acc / sx
    return out


def azimuthal_eval(m: int, v: int, phi: np.ndarray) -> np.ndarray:
    """Orthonormal azimuthal factor of the real spherical harmonics.

    v = 0 selects the cosine branch (the constant 1/sqrt(2*pi) when m = 0),
    v = 1 the sine branch (only defined for m >= 1). The functions are
    orthonormal over one period.
    """
    phi = np.asarray(phi, dtype=float)
    if m == 0:
        if v != 0:
            raise ValueError("the m = 0 azimuthal factor has no sine branch")
        return np.full(phi.shape, 1.0 / np.sqrt(2.0 * np.pi))
    if v == 0:
        return np.cos(m * phi) / np.sqrt(np.pi)
    if v == 1:
        return np.sin(m * phi) / np.sqrt(np.pi)
    raise ValueError(f"branch index must be 0 or 1, got {v}")


def real_harmonic_eval(
    l: int, m: int, v: int, theta: np.ndarray, phi: np.ndarray
) -> np.ndarray:
    """Real orthonormal spherical harmonic at matching theta/phi arrays."""
    if not 0 <= m <= l:
        raise ValueError(f"order must satisfy 0 <= m <= l, got l={l}, m={m}")
    theta = np.asarray(theta, dtype=float)
    x = np.cos(theta)
    tab = legendre_table(l, np.atleast_1d(x).ravel())
    polar = tab[l, m].reshape(np.atleast_1d(x).shape)
    return polar.reshape(theta.shape) * azimuthal_eval(m, v, phi)
