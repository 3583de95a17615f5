"""Feed-forward network inference for the multiplier map.

Weights are stored as JSON with full decimal precision: architecture
descriptor, row-major weight matrices ([out][in]), biases, Z-score
normalization statistics for inputs and outputs, and a block of probe
input/output pairs that lets an independently built trainer verify
bit-level agreement of the two forward-pass implementations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SCHEMA_TAG", "MlpWeights", "nn_load", "nn_save", "nn_infer", "verify_probes"]

SCHEMA_TAG = "fenefp-mlp/1"


@dataclass(frozen=True)
class MlpWeights:
    arch: tuple[int, ...]
    activation: str
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: np.ndarray
    output_std: np.ndarray
    probe_inputs: np.ndarray | None = None
    probe_outputs: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.arch) - 1 or len(self.biases) != len(self.arch) - 1:
            raise ValueError("layer count does not match the architecture descriptor")
        for k, (mat, vec) in enumerate(zip(self.weights, self.biases)):
            expected = (self.arch[k + 1], self.arch[k])
            if mat.shape != expected:
                raise ValueError(
                    f"layer {k} weight shape {mat.shape} does not match {expected}"
                )
            if vec.shape != (self.arch[k + 1],):
                raise ValueError(f"layer {k} bias shape {vec.shape} mismatched")
        for name, stat in (
            ("input_mean", self.input_mean), ("input_std", self.input_std),
            ("output_mean", self.output_mean), ("output_std", self.output_std),
        ):
            if stat.shape != (self.arch[0],) and "input" in name:
                raise ValueError(f"{name} must have length {self.arch[0]}")
            if stat.shape != (self.arch[-1],) and "output" in name:
                raise ValueError(f"{name} must have length {self.arch[-1]}")
        if np.any(self.input_std <= 0.0) or np.any(self.output_std <= 0.0):
            raise ValueError("normalization std entries must be positive")


def nn_infer(model: MlpWeights, inputs) -> np.ndarray:
    """Forward pass: Z-score, tanh hidden layers, linear output, un-Z-score."""
    x = np.asarray(inputs, dtype=float)
    single = x.shape == (model.arch[0],)
    batch = x[None, :] if single else x
    z = (batch - model.input_mean) / model.input_std
    for mat, vec in zip(model.weights[:-1], model.biases[:-1]):
        z = np.tanh(z @ mat.T + vec)
    z = z @ model.weights[-1].T + model.biases[-1]
    out = z * model.output_std + model.output_mean
    return out[0] if single else out


def verify_probes(model: MlpWeights) -> float:
    """Max abs deviation of the forward pass against the stored probe block."""
    if model.probe_inputs is None or model.probe_outputs is None:
        raise ValueError("weight file carries no probe block")
    predicted = nn_infer(model, model.probe_inputs)
    return float(np.abs(predicted - model.probe_outputs).max())


def nn_save(model: MlpWeights, path) -> None:
    payload = {
        "schema": SCHEMA_TAG,
        "arch": list(model.arch),
        "activation": model.activation,
        "weights": [mat.tolist() for mat in model.weights],
        "biases": [vec.tolist() for vec in model.biases],
        "input_mean": model.input_mean.tolist(),
        "input_std": model.input_std.tolist(),
        "output_mean": model.output_mean.tolist(),
        "output_std": model.output_std.tolist(),
        "metadata": model.metadata,
    }
    if model.probe_inputs is not None:
        payload["probes"] = {
            "inputs": model.probe_inputs.tolist(),
            "outputs": model.probe_outputs.tolist(),
        }
    with open(path, "w") as handle:
        json.dump(payload, handle)


def nn_load(path) -> MlpWeights:
    with open(path) as handle:
        payload = json.load(handle)
    if payload.get("schema") != SCHEMA_TAG:
        raise ValueError(f"unsupported weight schema {payload.get('schema')!r}")
    probes = payload.get("probes")
    return MlpWeights(
        arch=tuple(int(n) for n in payload["arch"]),
        activation=payload["activation"],
        weights=tuple(np.asarray(mat, dtype=float) for mat in payload["weights"]),
        biases=tuple(np.asarray(vec, dtype=float) for vec in payload["biases"]),
        input_mean=np.asarray(payload["input_mean"], dtype=float),
        input_std=np.asarray(payload["input_std"], dtype=float),
        output_mean=np.asarray(payload["output_mean"], dtype=float),
        output_std=np.asarray(payload["output_std"], dtype=float),
        probe_inputs=None if probes is None else np.asarray(probes["inputs"], dtype=float),
        probe_outputs=None if probes is None else np.asarray(probes["outputs"], dtype=float),
        metadata=payload.get("metadata", {}),
    )
