"""Tests for the angular coupling tables.

The factored assembly (polar times azimuthal primitives) is validated against
a brute-force 2D tensor quadrature of the defining integrals on the sphere,
plus closed-form pinned entries and structural identities.
"""

from __future__ import annotations

import numpy as np
import pytest

from fenefp.angular import (
    angular_block,
    build_angular_tables,
    mode_list,
    vm_index,
)
from fenefp.special import (
    azimuthal_eval,
    gauss_legendre,
    legendre_table,
    legendre_theta_derivative_table,
)

LMAX = 8


@pytest.fixture(scope="module")
def tables():
    return build_angular_tables(LMAX)


@pytest.fixture(scope="module")
def sphere_grid():
    """Tensor quadrature grid exact for the integrands under test."""
    nx = 2 * LMAX + 12
    x, wx = gauss_legendre(nx)
    nphi = 8 * LMAX + 16
    phi = np.arange(nphi) * (2.0 * np.pi / nphi)
    wphi = 2.0 * np.pi / nphi
    weight = wx[:, None] * wphi
    return x, phi, weight


def direct_block(kind, i, j, l_trial, l_test, grid):
    """Brute-force quadrature of one coupling block, [trial, test] indexed."""
    x, phi, weight = grid
    sx = np.sqrt(1.0 - x * x)
    theta_grid = {
        "r": [sx, sx, x],          # radial unit vector components / phi factors
        "t": [x, x, -sx],          # polar unit vector
        "p": [-np.ones_like(x), np.ones_like(x), np.zeros_like(x)],
    }
    phi_grid = {
        "r": [np.cos(phi), np.sin(phi), np.ones_like(phi)],
        "t": [np.cos(phi), np.sin(phi), np.ones_like(phi)],
        "p": [np.sin(phi), np.cos(phi), np.zeros_like(phi)],
    }

    def unit(name, comp):
        return theta_grid[name][comp][:, None] * phi_grid[name][comp][None, :]

    first = {"u": "r", "v": "t", "w": "p"}[kind]
    geom = unit(first, i) * unit("r", j)
    if kind == "w":
        geom = geom / sx[:, None]

    ptab = legendre_table(max(l_trial, l_test), x)
    dtab = legendre_theta_derivative_table(max(l_trial, l_test), x, table=ptab)

    def harmonics(l, differentiate):
        vals = []
        for m, v in mode_list(l):
            polar = dtab[l, m] if differentiate == "theta" else ptab[l, m]
            azim = azimuthal_eval(m, v, phi)
            if differentiate == "phi":
                azim = (
                    -m * np.sin(m * phi) / np.sqrt(np.pi)
                    if v == 0
                    else m * np.cos(m * phi) / np.sqrt(np.pi)
                )
                if m == 0:
                    azim = np.zeros_like(phi)
            vals.append(polar[:, None] * azim[None, :])
        return np.stack(vals)

    trial = harmonics(l_trial, None)
    diff = {"u": None, "v": "theta", "w": "phi"}[kind]
    test = harmonics(l_test, diff)
    return np.einsum("axy,bxy,xy,xy->ab", trial, test, geom, weight)


class TestPinnedEntries:
    def test_e00_identity(self, tables):
        nvm = tables.e["e00"].shape[0]
        assert np.allclose(tables.e["e00"], np.eye(nvm), atol=1e-14)

    def test_cosine_coupling_entry(self, tables):
        got = tables.e["e01"][vm_index(1, 0), vm_index(0, 0)]
        assert got == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-14)

    def test_double_angle_polar_entry(self, tables):
        got = tables.f["f02"][0, 2, 0, 0]
        assert got == pytest.approx(-1.0 / 3.0, rel=1e-13)

    def test_polar_orthonormality_diagonal(self, tables):
        for m in range(LMAX + 1):
            for l in range(m, LMAX + 1):
                for lp in range(m, LMAX + 1):
                    want = 1.0 if l == lp else 0.0
                    assert tables.f["f00"][m, 2, l, lp] == pytest.approx(
                        want, abs=1e-13
                    )


class TestStructure:
    def test_block_degree_locality(self, tables):
        """U and the combined V + W couple only degrees within 2 of each other.

        The polar/azimuthal derivative pieces carry 1/sin(theta) tails that
        cancel only in the sum V + W (together they form the surface
        gradient), so locality is a property of U and of V + W, not of V and
        W separately. The solver consumes exactly U and V + W.
        """
        for l_trial in range(0, LMAX + 1, 2):
            for l_test in range(0, LMAX + 1, 2):
                if abs(l_trial - l_test) <= 2:
                    continue
                for i in range(3):
                    for j in range(3):
                        u = angular_block(tables, "u", i, j, l_trial, l_test)
                        vw = angular_block(
                            tables, "v", i, j, l_trial, l_test
                        ) + angular_block(tables, "w", i, j, l_trial, l_test)
                        assert np.abs(u).max() <= 2e-13
                        assert np.abs(vw).max() <= 2e-13

    def test_azimuthal_order_locality(self, tables):
        branches = [(0, 0)] + [(m, v) for m in range(1, LMAX + 1) for v in (0, 1)]
        for name, tab in tables.e.items():
            for m, v in branches:
                for mp, vp in branches:
                    if abs(m - mp) > 2:
                        assert tab[vm_index(m, v), vm_index(mp, vp)] == 0.0, name

    def test_vanishing_azimuthal_rows(self, tables):
        for l_trial in (0, 2, 4):
            for l_test in (0, 2, 4):
                for j in range(3):
                    block = angular_block(tables, "w", 2, j, l_trial, l_test)
                    assert np.abs(block).max() == 0.0

    def test_geometric_symmetry(self, tables):
        for i in range(3):
            for j in range(3):
                a = angular_block(tables, "u", i, j, 4, 2)
                b = angular_block(tables, "u", j, i, 4, 2)
                assert np.allclose(a, b, atol=1e-14)

    def test_unit_vector_identity(self, tables):
        """Summing the diagonal geometric blocks reproduces the Gram identity."""
        for l_trial in (0, 2, 6):
            for l_test in (0, 2, 4, 6):
                total = sum(
                    angular_block(tables, "u", i, i, l_trial, l_test)
                    for i in range(3)
                )
                if l_trial == l_test:
                    assert np.allclose(total, np.eye(2 * l_trial + 1), atol=1e-13)
                else:
                    assert np.abs(total).max() <= 1e-13

    def test_rejects_bad_arguments(self, tables):
        with pytest.raises(ValueError):
            angular_block(tables, "x", 0, 0, 2, 2)
        with pytest.raises(ValueError):
            angular_block(tables, "u", 3, 0, 2, 2)
        with pytest.raises(ValueError):
            angular_block(tables, "u", 0, 0, 2, LMAX + 2)


class TestAgainstDirectQuadrature:
    """The factored assembly must match brute-force 2D quadrature exactly."""

    @pytest.mark.parametrize("kind", ["u", "v", "w"])
    def test_all_blocks(self, tables, sphere_grid, kind):
        degrees = [0, 2, 4, 6, 8]
        worst = 0.0
        for l_trial in degrees:
            for l_test in degrees:
                if abs(l_trial - l_test) > 2:
                    continue
                for i in range(3):
                    for j in range(3):
                        fast = angular_block(tables, kind, i, j, l_trial, l_test)
                        ref = direct_block(kind, i, j, l_trial, l_test, sphere_grid)
                        worst = max(worst, np.abs(fast - ref.T).max())
        assert worst < 1e-12

    def test_distant_degrees_vanish(self, tables, sphere_grid):
        """Direct quadrature confirms locality of U and V + W at distant degrees."""
        for l_trial, l_test in [(0, 4), (2, 6), (0, 8)]:
            for i in range(3):
                for j in range(3):
                    fast_u = angular_block(tables, "u", i, j, l_trial, l_test)
                    fast_vw = angular_block(
                        tables, "v", i, j, l_trial, l_test
                    ) + angular_block(tables, "w", i, j, l_trial, l_test)
                    ref_u = direct_block("u", i, j, l_trial, l_test, sphere_grid)
                    ref_vw = direct_block(
                        "v", i, j, l_trial, l_test, sphere_grid
                    ) + direct_block("w", i, j, l_trial, l_test, sphere_grid)
                    assert np.abs(fast_u).max() <= 2e-13
                    assert np.abs(fast_vw).max() <= 2e-13
                    assert np.abs(ref_u).max() <= 1e-12
                    assert np.abs(ref_vw).max() <= 1e-12
