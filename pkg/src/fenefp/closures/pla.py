"""Piecewise-linear lookup acceleration of the multiplier inversion.

The admissible sorted moment triples (c1 >= c2 >= c3 > 0, sum < 1) are
parameterized by trace-simplex coordinates

    t = c1 + c2 + c3,   u = c1 / t,   v = c2 / t,

which form a box-like domain suited to a structured grid: t captures the
approach to the finite-extensibility limit, (u, v) the anisotropy. Nodes
outside the sorted-simplex feasibility region are filled with the inversion
at the clamped feasible point so that interpolation cells touching the
boundary stay well defined. Lookups clamp out-of-range queries with a
logged warning and interpolate trilinearly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .qe import is_admissible_triple, qe_invert_newton

__all__ = [
    "SCHEMA_TAG",
    "PlaTable",
    "simplex_coordinates",
    "moments_from_coordinates",
    "clamp_to_feasible",
    "build_table",
    "save_table",
    "load_table",
    "pla_lookup",
]

SCHEMA_TAG = "fenefp-pla/1"
_FEASIBILITY_MARGIN = 1e-9
# Smallest normalized share kept for the second and third components when a
# grid node is projected onto the sorted simplex.
_DEGENERACY_MARGIN = 0.02
# Absolute floor on each moment component at projected nodes.  A component of
# 2e-3 corresponds to a multiplier of roughly -250, which keeps every node
# inversion cheap and far inside the calibrated quadrature envelope.  Nodes
# below the floor describe near-zero-extension states with extreme shape
# anisotropy that closure dynamics never reach.
_MOMENT_FLOOR = 2e-3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlaTable:
    """Structured multiplier table over trace-simplex coordinates."""

    extensibility: float
    t_axis: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray
    multipliers: np.ndarray  # shape (nt, nu, nv, 3)

    def __post_init__(self):
        expected = (self.t_axis.size, self.u_axis.size, self.v_axis.size, 3)
        if self.multipliers.shape != expected:
            raise ValueError(
                f"multiplier grid shape {self.multipliers.shape} does not "
                f"match axes {expected}"
            )
        for name in ("t_axis", "u_axis", "v_axis"):
            axis = getattr(self, name)
            if axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 points")
        object.__setattr__(self, "regularized_values", _regularized_node_values(self))


def simplex_coordinates(moments: np.ndarray) -> np.ndarray:
    """(t, u, v) coordinates of sorted moment triples."""
    c = np.asarray(moments, dtype=float)
    trace = c[..., 0] + c[..., 1] + c[..., 2]
    return np.stack([trace, c[..., 0] / trace, c[..., 1] / trace], axis=-1)


def moments_from_coordinates(coords: np.ndarray) -> np.ndarray:
    """Inverse map from (t, u, v) to the sorted moment triple."""
    coords = np.asarray(coords, dtype=float)
    t, u, v = coords[..., 0], coords[..., 1], coords[..., 2]
    return np.stack([t * u, t * v, t * (1.0 - u - v)], axis=-1)


def clamp_to_feasible(u: np.ndarray, v: np.ndarray,
                      trace: float | np.ndarray = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Project (u, v) onto the sorted-simplex region c1 >= c2 >= c3 > 0.

    The degenerate edges (where the second or third component vanishes) are
    held back by a share margin of _DEGENERACY_MARGIN, widened at small trace
    so each absolute component stays at or above _MOMENT_FLOOR; every
    projected node then remains cheaply solvable by the Newton inversion.
    """
    margin = np.maximum(_DEGENERACY_MARGIN, _MOMENT_FLOOR / np.asarray(trace, dtype=float))
    u = np.clip(u, 1.0 / 3.0, 1.0 - 2.0 * margin)
    upper = np.minimum(u, 1.0 - u - margin)
    lower = (1.0 - u) / 2.0
    upper = np.maximum(upper, lower)
    v = np.clip(v, lower, upper)
    return u, v


def default_grid_spec() -> dict:
    return {
        "t_range": (0.02, 0.98),
        "u_range": (1.0 / 3.0, 1.0 - 2.0 * _DEGENERACY_MARGIN),
        "v_range": (_DEGENERACY_MARGIN, 0.5 - _DEGENERACY_MARGIN),
        "resolution": (40, 40, 40),
    }


def _solve_slice(args, initial_slice: np.ndarray | None = None) -> np.ndarray:
    """Newton inversion over one constant-t slice, row-wise warm-started."""
    t, u_axis, v_axis, extensibility = args
    nu, nv = u_axis.size, v_axis.size
    out = np.empty((nu, nv, 3))
    previous_row = None
    for i, u in enumerate(u_axis):
        uu, vv = clamp_to_feasible(np.full(nv, u), v_axis.copy(), t)
        targets = moments_from_coordinates(
            np.stack([np.full(nv, t), uu, vv], axis=-1)
        )
        if initial_slice is not None:
            initial = initial_slice[i]
        else:
            initial = previous_row
        out[i] = qe_invert_newton(targets, extensibility, initial=initial)
        previous_row = out[i]
    return out


def build_table(extensibility: float, spec: dict | None = None,
                workers: int = 1, progress=None) -> PlaTable:
    """Fill a structured grid by Newton inversion at every node.

    Slices of constant trace are independent (parallelizable); within a
    slice each u-row warm-starts from the previous row's multipliers.  A
    serial build walks the slices from largest to smallest trace, chaining
    each slice's warm start from the previous one.
    """
    params = default_grid_spec()
    if spec:
        params.update(spec)
    nt, nu, nv = params["resolution"]
    t_axis = np.linspace(*params["t_range"], nt)
    u_axis = np.linspace(*params["u_range"], nu)
    v_axis = np.linspace(*params["v_range"], nv)
    jobs = [(t, u_axis, v_axis, float(extensibility)) for t in t_axis]
    values = np.empty((nt, nu, nv, 3))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, result in enumerate(pool.map(_solve_slice, jobs)):
                values[k] = result
                if progress:
                    progress(k + 1, nt)
    else:
        previous = None
        for count, k in enumerate(range(nt - 1, -1, -1)):
            values[k] = _solve_slice(jobs[k], initial_slice=previous)
            previous = values[k]
            if progress:
                progress(count + 1, nt)
    return PlaTable(float(extensibility), t_axis, u_axis, v_axis, values)


def save_table(table: PlaTable, path) -> None:
    np.savez(
        path,
        schema=np.array(SCHEMA_TAG),
        extensibility=np.array(table.extensibility),
        t_axis=table.t_axis,
        u_axis=table.u_axis,
        v_axis=table.v_axis,
        multipliers=table.multipliers,
    )


def load_table(path) -> PlaTable:
    with np.load(path, allow_pickle=False) as data:
        schema = str(data["schema"])
        if schema != SCHEMA_TAG:
            raise ValueError(f"unsupported table schema {schema!r}")
        return PlaTable(
            float(data["extensibility"]),
            data["t_axis"].copy(),
            data["u_axis"].copy(),
            data["v_axis"].copy(),
            data["multipliers"].copy(),
        )


def _locate(axis: np.ndarray, query: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Cell index and fraction for clamped linear interpolation on one axis."""
    lo, hi = axis[0], axis[-1]
    outside = (query < lo - 1e-12) | (query > hi + 1e-12)
    if outside.any():
        logger.warning(
            "%d %s lookup(s) outside the table range [%.4g, %.4g]; clamped",
            int(outside.sum()), name, lo, hi,
        )
    clamped = np.clip(query, lo, hi)
    idx = np.clip(np.searchsorted(axis, clamped, side="right") - 1, 0, axis.size - 2)
    frac = (clamped - axis[idx]) / (axis[idx + 1] - axis[idx])
    return idx, np.clip(frac, 0.0, 1.0)


def _regularized_node_values(table: PlaTable) -> np.ndarray:
    """Pole-free nodal quantity interpolated by the lookup.

    The raw multiplier field has simple poles on both boundaries of the
    admissible set: lam_i ~ -1/(2 c_i) as a component degenerates, and all
    components grow like 1/(1 - trace) toward the extensibility limit.  The
    rescaling z_i = (lam_i + 1/(2 c_i)) (1 - t) cancels both, leaving a
    slowly-varying field that piecewise-multilinear interpolation resolves;
    the exact back-transform at the query point restores the poles.
    """
    tt, uu, vv = np.meshgrid(table.t_axis, table.u_axis, table.v_axis, indexing="ij")
    coords = np.stack([tt, uu, vv], axis=-1)
    c_nodes = moments_from_coordinates(coords)
    return (table.multipliers + 0.5 / c_nodes) * (1.0 - coords[..., :1])


def pla_lookup(table: PlaTable, moments) -> np.ndarray:
    """Multilinear interpolation of the multiplier triple at sorted moments.

    Interpolation acts on a pole-free rescaling of the stored multipliers
    (see _regularized_node_values); at a grid node the back-transform is the
    algebraic inverse of the rescaling, so node lookups return the stored
    triple.
    """
    c = np.asarray(moments, dtype=float)
    single = c.shape == (3,)
    batch = c[None, :] if single else c
    if not is_admissible_triple(batch):
        raise ValueError(
            "lookup requires sorted admissible moment triples "
            "(c1 >= c2 >= c3 > 0, trace < 1)"
        )
    nodal = table.regularized_values
    coords = simplex_coordinates(batch)
    it, ft = _locate(table.t_axis, coords[:, 0], "trace")
    iu, fu = _locate(table.u_axis, coords[:, 1], "u")
    iv, fv = _locate(table.v_axis, coords[:, 2], "v")
    out = np.zeros((batch.shape[0], 3))
    for dt in (0, 1):
        wt = np.where(dt == 0, 1.0 - ft, ft)
        for du in (0, 1):
            wu = np.where(du == 0, 1.0 - fu, fu)
            for dv in (0, 1):
                wv = np.where(dv == 0, 1.0 - fv, fv)
                weight = (wt * wu * wv)[:, None]
                out += weight * nodal[it + dt, iu + du, iv + dv]
    # back-transform at the clamped query coordinates (matching the cell the
    # interpolation actually used, so clamped lookups stay continuous)
    t_q = np.clip(coords[:, 0], table.t_axis[0], table.t_axis[-1])
    u_q = np.clip(coords[:, 1], table.u_axis[0], table.u_axis[-1])
    v_q = np.clip(coords[:, 2], table.v_axis[0], table.v_axis[-1])
    c_q = moments_from_coordinates(np.stack([t_q, u_q, v_q], axis=-1))
    lam = out / (1.0 - t_q[:, None]) - 0.5 / c_q
    return lam[0] if single else lam
