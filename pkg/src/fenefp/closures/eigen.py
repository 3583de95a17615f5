"""Symmetric 3x3 eigendecomposition by cyclic Jacobi rotations.

Self-contained so the closure pipeline does not depend on a general-purpose
eigensolver; for 3x3 symmetric input the cyclic sweep converges to machine
precision in a handful of iterations.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["symmetric_eigen3", "sorted_eigenframe"]

_PAIRS = ((0, 1), (0, 2), (1, 2))


def symmetric_eigen3(matrix: np.ndarray, max_sweeps: int = 50
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvector columns.

    The input is symmetrized by averaging; a symmetry defect beyond roundoff
    is the caller's bug and is reported.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    scale = max(1.0, float(np.abs(mat).max()))
    if float(np.abs(mat - mat.T).max()) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (mat + mat.T)
    vecs = np.eye(3)
    for _ in range(max_sweeps):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= 1e-15 * scale:
            break
        for p, q in _PAIRS:
            apq = a[p, q]
            if abs(apq) <= 1e-18 * scale:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            vecs = vecs @ rot
    values = np.diag(a).copy()
    order = np.argsort(values)[::-1]
    return values[order], vecs[:, order]


def sorted_eigenframe(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Alias emphasizing the descending-eigenvalue convention."""
    return symmetric_eigen3(matrix)
