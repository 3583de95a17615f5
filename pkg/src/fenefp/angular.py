"""Angular interaction matrices for the convection term.

The convection term couples spherical-harmonic modes through products of
harmonics with components of the radial/polar/azimuthal unit vectors. Each
coupling integral factorizes into a polar part (integrals of two normalized
associated Legendre functions against low-order trigonometric factors) and an
azimuthal part (integrals of two azimuthal basis functions against single- or
double-angle factors). The azimuthal integrals are evaluated in closed form
via product-to-sum identities; the polar integrals by Gauss-Legendre
quadrature in cos(theta), which is exact because every polar entry that
multiplies a nonzero azimuthal entry has a polynomial integrand (the stray
1/sin(theta) factors cancel at the order parities where the azimuthal factor
survives, and entries at the complementary parity are masked to zero).

Index convention throughout: the first index of every table is the trial
(expansion) mode and the second the test mode, matching the weak form where
derivatives fall on the test function. The assembled per-degree-pair blocks
returned by :func:`angular_block` are transposed to [test, trial] so they can
left-multiply coefficient blocks directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .special import gauss_legendre, legendre_table, legendre_theta_derivative_table

__all__ = [
    "AngularTables",
    "build_angular_tables",
    "angular_block",
    "mode_list",
    "vm_index",
]

E_NAMES = ["e00", "e01", "e11", "e02", "e12", "e00d", "e01d", "e11d", "e02d", "e12d"]
F_NAMES = ["f00", "f01", "f02", "f12", "f00d", "f02d", "f12d"]

# Azimuthal factor multiplying the product inside each E integral.
_E_FACTOR = {
    "e00": None,
    "e01": ("c", 1),
    "e11": ("s", 1),
    "e02": ("c", 2),
    "e12": ("s", 2),
}

# Polar factor and parity of (m + m') at which each F integrand is polynomial.
# Entries at the complementary parity multiply vanishing azimuthal integrals
# and are masked to exact zero.
_F_PARITY = {
    "f00": 0,
    "f01": 1,
    "f02": 0,
    "f12": 1,
    "f00d": 1,
    "f02d": 1,
    "f12d": 0,
}

# Appendix-style assembly: each (kind, i, j) maps to a list of
# (coefficient, polar primitive, azimuthal primitive) terms.
_TERMS: dict[tuple[str, int, int], list[tuple[float, str, str]]] = {
    ("u", 0, 0): [(0.25, "f00", "e00"), (0.25, "f00", "e02"),
                  (-0.25, "f02", "e00"), (-0.25, "f02", "e02")],
    ("u", 1, 1): [(0.25, "f00", "e00"), (-0.25, "f00", "e02"),
                  (-0.25, "f02", "e00"), (0.25, "f02", "e02")],
    ("u", 2, 2): [(0.5, "f00", "e00"), (0.5, "f02", "e00")],
    ("u", 0, 1): [(0.25, "f00", "e12"), (-0.25, "f02", "e12")],
    ("u", 0, 2): [(0.5, "f12", "e01")],
    ("u", 1, 2): [(0.5, "f12", "e11")],
    ("v", 0, 0): [(0.25, "f12d", "e00"), (0.25, "f12d", "e02")],
    ("v", 1, 1): [(0.25, "f12d", "e00"), (-0.25, "f12d", "e02")],
    ("v", 2, 2): [(-0.5, "f12d", "e00")],
    ("v", 0, 1): [(0.25, "f12d", "e12")],
    ("v", 1, 0): [(0.25, "f12d", "e12")],
    ("v", 0, 2): [(0.5, "f00d", "e01"), (0.5, "f02d", "e01")],
    ("v", 1, 2): [(0.5, "f00d", "e11"), (0.5, "f02d", "e11")],
    ("v", 2, 0): [(-0.5, "f00d", "e01"), (0.5, "f02d", "e01")],
    ("v", 2, 1): [(-0.5, "f00d", "e11"), (0.5, "f02d", "e11")],
    ("w", 0, 0): [(-0.5, "f00", "e12d")],
    ("w", 1, 1): [(0.5, "f00", "e12d")],
    ("w", 0, 1): [(-0.5, "f00", "e00d"), (0.5, "f00", "e02d")],
    ("w", 1, 0): [(0.5, "f00", "e00d"), (0.5, "f00", "e02d")],
    ("w", 0, 2): [(-1.0, "f01", "e11d")],
    ("w", 1, 2): [(1.0, "f01", "e01d")],
    ("w", 2, 0): [],
    ("w", 2, 1): [],
    ("w", 2, 2): [],
}
# Symmetric completions for the geometric blocks.
for _i, _j in [(0, 1), (0, 2), (1, 2)]:
    _TERMS[("u", _j, _i)] = _TERMS[("u", _i, _j)]


def mode_list(l: int) -> list[tuple[int, int]]:
    """Angular modes (m, v) of degree l in canonical order: m ascending, v ascending."""
    out = [(0, 0)]
    for m in range(1, l + 1):
        out.append((m, 0))
        out.append((m, 1))
    return out


def vm_index(m: int, v: int) -> int:
    """Flat azimuthal index of branch (m, v), shared by all degrees."""
    return 0 if m == 0 else 2 * m - 1 + v


def _fourier_dict(m: int, v: int) -> dict[tuple[str, int], float]:
    """The azimuthal basis function as {('c'|'s', frequency): coefficient}."""
    if m == 0:
        return {("c", 0): 1.0 / np.sqrt(2.0 * np.pi)}
    kind = "c" if v == 0 else "s"
    return {(kind, m): 1.0 / np.sqrt(np.pi)}


def _fourier_add(d: dict, key: tuple[str, int], val: float) -> None:
    kind, freq = key
    if freq < 0:
        freq = -freq
        if kind == "s":
            val = -val
    if kind == "s" and freq == 0:
        return
    d[(kind, freq)] = d.get((kind, freq), 0.0) + val


def _fourier_mul_term(d: dict, term: tuple[str, int]) -> dict:
    """Multiply a Fourier dictionary by cos(k phi) or sin(k phi)."""
    kind2, k = term
    out: dict[tuple[str, int], float] = {}
    for (kind1, m), c in d.items():
        half = 0.5 * c
        if kind1 == "c" and kind2 == "c":
            _fourier_add(out, ("c", m - k), half)
            _fourier_add(out, ("c", m + k), half)
        elif kind1 == "s" and kind2 == "s":
            _fourier_add(out, ("c", m - k), half)
            _fourier_add(out, ("c", m + k), -half)
        elif kind1 == "s" and kind2 == "c":
            _fourier_add(out, ("s", m - k), half)
            _fourier_add(out, ("s", m + k), half)
        else:  # cos * sin: sin(k) cos(m) = [sin(k-m) + sin(k+m)] / 2
            _fourier_add(out, ("s", k - m), half)
            _fourier_add(out, ("s", k + m), half)
    return out


def _fourier_derivative(d: dict) -> dict:
    out: dict[tuple[str, int], float] = {}
    for (kind, m), c in d.items():
        if m == 0:
            continue
        if kind == "c":
            _fourier_add(out, ("s", m), -m * c)
        else:
            _fourier_add(out, ("c", m), m * c)
    return out


def _fourier_product_integral(d1: dict, d2: dict) -> float:
    """Integral over one period of the product of two Fourier dictionaries."""
    acc = 0.0
    for (kind1, m), c1 in d1.items():
        for (kind2, k), c2 in d2.items():
            if kind1 != kind2 or m != k:
                continue
            if m == 0:
                acc += 2.0 * np.pi * c1 * c2
            else:
                acc += np.pi * c1 * c2
    return acc


def _build_e_tables(mmax: int) -> dict[str, np.ndarray]:
    """All ten azimuthal primitives as (n_vm, n_vm) arrays, trial index first."""
    branches = [(0, 0)] + [(m, v) for m in range(1, mmax + 1) for v in (0, 1)]
    nvm = len(branches)
    tables = {name: np.zeros((nvm, nvm)) for name in E_NAMES}
    dicts = {(m, v): _fourier_dict(m, v) for m, v in branches}
    for mt, vt in branches:
        test = dicts[(mt, vt)]
        test_d = _fourier_derivative(test)
        col = vm_index(mt, vt)
        for base_name, fac in _E_FACTOR.items():
            for primed, name in ((False, base_name), (True, base_name + "d")):
                g = test_d if primed else test
                g = _fourier_mul_term(g, fac) if fac is not None else g
                for ms, vs in branches:
                    if abs(ms - mt) > 2:
                        continue
                    row = vm_index(ms, vs)
                    val = _fourier_product_integral(dicts[(ms, vs)], g)
                    if abs(val) > 1e-15:
                        tables[name][row, col] = val
    return tables


def _build_f_tables(lmax: int) -> dict[str, np.ndarray]:
    """All seven polar primitives as (lmax+1, 5, lmax+1, lmax+1) arrays.

    Indexed [m_trial, dm + 2, l_trial, l_test] with m_test = m_trial + dm;
    slots whose (m + m') parity does not match the primitive's polynomial
    parity are exact zeros, as are slots with m_test out of range.
    """
    npts = 2 * lmax + 12
    x, w = gauss_legendre(npts)
    sx = np.sqrt(1.0 - x * x)
    ptab = legendre_table(lmax, x)
    dtab = legendre_theta_derivative_table(lmax, x, table=ptab)
    factors = {
        "f00": np.ones_like(x),
        "f01": x / sx,
        "f02": 2.0 * x * x - 1.0,
        "f12": 2.0 * x * sx,
        "f00d": np.ones_like(x),
        "f02d": 2.0 * x * x - 1.0,
        "f12d": 2.0 * x * sx,
    }
    tables = {
        name: np.zeros((lmax + 1, 5, lmax + 1, lmax + 1)) for name in F_NAMES
    }
    for name in F_NAMES:
        primed = name.endswith("d")
        test_tab = dtab if primed else ptab
        fw = factors[name] * w
        for m in range(lmax + 1):
            for dm in range(-2, 3):
                mt = m + dm
                if not 0 <= mt <= lmax:
                    continue
                if (m + mt) % 2 != _F_PARITY[name]:
                    continue
                trial = ptab[:, m, :]
                test = test_tab[:, mt, :]
                tables[name][m, dm + 2] = (trial * fw) @ test.T
    return tables


@dataclass(frozen=True)
class AngularTables:
    """Precomputed azimuthal and polar coupling primitives up to a max degree."""

    lmax: int
    e: dict[str, np.ndarray]
    f: dict[str, np.ndarray]


def build_angular_tables(lmax: int) -> AngularTables:
    """Build all azimuthal and polar primitives needed up to degree lmax."""
    if lmax < 0:
        raise ValueError("lmax must be nonnegative")
    return AngularTables(lmax=lmax, e=_build_e_tables(lmax), f=_build_f_tables(lmax))


def angular_block(
    tables: AngularTables,
    kind: str,
    i: int,
    j: int,
    l_trial: int,
    l_test: int,
) -> np.ndarray:
    """One angular coupling block, indexed [test mode, trial mode].

    kind selects the geometric family: "u" couples plain harmonics through
    the radial-radial dyad, "v" through the polar-derivative dyad, "w"
    through the azimuthal-derivative dyad. i, j in {0, 1, 2} are Cartesian
    components of the velocity-gradient pairing.
    """
    if kind not in ("u", "v", "w"):
        raise ValueError(f"kind must be 'u', 'v' or 'w', got {kind!r}")
    if not (0 <= i <= 2 and 0 <= j <= 2):
        raise ValueError("component indices must lie in {0, 1, 2}")
    if max(l_trial, l_test) > tables.lmax:
        raise ValueError("degree exceeds the precomputed table range")
    modes_s = mode_list(l_trial)
    modes_t = mode_list(l_test)
    ms = np.array([m for m, _ in modes_s])
    mt = np.array([m for m, _ in modes_t])
    vm_s = np.array([vm_index(m, v) for m, v in modes_s])
    vm_t = np.array([vm_index(m, v) for m, v in modes_t])
    dm = mt[None, :] - ms[:, None]
    valid = np.abs(dm) <= 2
    dm_clamped = np.clip(dm, -2, 2) + 2
    block = np.zeros((len(modes_s), len(modes_t)))
    for coef, f_name, e_name in _TERMS[(kind, i, j)]:
        fvals = tables.f[f_name][ms[:, None], dm_clamped, l_trial, l_test]
        evals = tables.e[e_name][vm_s[:, None], vm_t[None, :]]
        block += coef * np.where(valid, fvals, 0.0) * evals
    return block.T
