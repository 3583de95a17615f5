"""Sampled multiplier/moment pairs for fitting the inverse map.

Multiplier triples are Latin-hypercube sampled over a calibrated box,
sorted descending, and pushed through the forward map; records whose
moment trace crosses the cap are discarded. Files are CSV with a JSON
metadata sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .qe import qe_forward

__all__ = [
    "DEFAULT_BOX",
    "DEFAULT_TRACE_CAP",
    "QeDataset",
    "gen_dataset",
    "save_dataset",
    "load_dataset",
    "sidecar_path",
]

DEFAULT_BOX = (-10.0, 60.0)
DEFAULT_TRACE_CAP = 0.99
_CHUNK = 512


@dataclass
class QeDataset:
    moments: np.ndarray      # (n, 3) sorted descending
    multipliers: np.ndarray  # (n, 3) sorted descending
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.moments.shape != self.multipliers.shape or self.moments.shape[1:] != (3,):
            raise ValueError("moments and multipliers must both be (n, 3)")

    def __len__(self) -> int:
        return self.moments.shape[0]

    def validate(self) -> None:
        c = self.moments
        if np.any(c <= 0.0):
            raise ValueError("dataset contains non-positive moments")
        if np.any(c.sum(axis=1) >= 1.0):
            raise ValueError("dataset contains moment traces >= 1")
        if np.any(np.diff(c, axis=1) > 1e-14):
            raise ValueError("dataset moments are not sorted descending")
        if np.any(np.diff(self.multipliers, axis=1) > 1e-14):
            raise ValueError("dataset multipliers are not sorted descending")


def gen_dataset(extensibility: float, count: int, seed: int,
                box: tuple[float, float] = DEFAULT_BOX,
                trace_cap: float = DEFAULT_TRACE_CAP) -> QeDataset:
    """Sample sorted multiplier triples and solve the forward problem."""
    sampler = qmc.LatinHypercube(d=3, seed=seed)
    low, high = box
    raw = low + (high - low) * sampler.random(count)
    multipliers = np.sort(raw, axis=1)[:, ::-1]
    moment_chunks = [
        qe_forward(multipliers[start:start + _CHUNK], extensibility)
        for start in range(0, count, _CHUNK)
    ]
    moments = np.vstack(moment_chunks)
    keep = moments.sum(axis=1) < trace_cap
    if not keep.any():
        raise ValueError("every sample was filtered out; widen the box or cap")
    dataset = QeDataset(
        np.ascontiguousarray(moments[keep]),
        np.ascontiguousarray(multipliers[keep]),
        metadata={
            "id": f"qe-b{extensibility:g}-n{count}-s{seed}",
            "extensibility": float(extensibility),
            "box": [float(low), float(high)],
            "trace_cap": float(trace_cap),
            "requested": int(count),
            "count": int(keep.sum()),
            "seed": int(seed),
        },
    )
    dataset.validate()
    return dataset


def sidecar_path(csv_path) -> str:
    return f"{csv_path}.meta.json"


def save_dataset(dataset: QeDataset, csv_path) -> None:
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["c1", "c2", "c3", "l1", "l2", "l3"])
        for c, lam in zip(dataset.moments, dataset.multipliers):
            writer.writerow([repr(float(v)) for v in (*c, *lam)])
    with open(sidecar_path(csv_path), "w") as handle:
        json.dump(dataset.metadata, handle, indent=2)


def load_dataset(csv_path) -> QeDataset:
    rows = []
    with open(csv_path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["c1", "c2", "c3", "l1", "l2", "l3"]:
            raise ValueError(f"unexpected dataset header {header}")
        for row in reader:
            rows.append([float(cell) for cell in row])
    data = np.asarray(rows, dtype=float)
    try:
        with open(sidecar_path(csv_path)) as handle:
            metadata = json.load(handle)
    except FileNotFoundError:
        metadata = {}
    return QeDataset(data[:, :3].copy(), data[:, 3:].copy(), metadata)
