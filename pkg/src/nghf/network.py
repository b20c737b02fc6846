"""Fully connected feed-forward network on flat parameter vectors.

Hidden layers use sigmoid or ReLU; the output layer is always linear
(pre-softmax activations). Besides the usual forward/backprop pair there
is a forward-mode directional derivative that computes Jacobian-vector
products in a single pass, which the curvature operators build on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import GradientVector, LayoutEntry, ParameterVector, build_layout


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "sigmoid"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if self.activation not in ("sigmoid", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def num_layers(self) -> int:
        return len(self.hidden_dims) + 1


def layout_for(spec: NetworkSpec) -> tuple[LayoutEntry, ...]:
    """Flat layout: weight matrix (out, in) then bias per layer."""
    dims = spec.layer_dims
    named = []
    for i in range(spec.num_layers):
        named.append((f"W{i}", (dims[i + 1], dims[i])))
        named.append((f"b{i}", (dims[i + 1],)))
    return build_layout(named)


def _activate(spec: NetworkSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    # numerically stable sigmoid on both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activation_derivative(spec: NetworkSpec, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        # subgradient at exactly 0 fixed to 0
        return (z > 0).astype(np.float64)
    return a * (1.0 - a)


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre-activations and activations for one batch of frames.

    Keeps the parameters it was computed with so backprop and directional
    derivatives are guaranteed to use matching weights.
    """

    spec: NetworkSpec
    theta: ParameterVector
    inputs: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def num_frames(self) -> int:
        return self.inputs.shape[0]


def forward(spec: NetworkSpec, theta: ParameterVector, frames: np.ndarray):
    """Run the network on ``frames`` [T x input_dim].

    Returns (outputs [T x output_dim], ForwardTrace). Outputs are the
    linear output-layer activations; no softmax is applied.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != spec.input_dim:
        raise ValueError(
            f"frames have shape {frames.shape}, expected [T x {spec.input_dim}]"
        )
    a = frames
    pres, acts = [], []
    for i in range(spec.num_layers):
        z = a @ theta.view(f"W{i}").T + theta.view(f"b{i}")
        pres.append(z)
        if i < spec.num_layers - 1:
            a = _activate(spec, z)
            acts.append(a)
    trace = ForwardTrace(spec, theta, frames, tuple(pres), tuple(acts))
    return pres[-1], trace


def backprop(spec: NetworkSpec, trace: ForwardTrace, output_grad: np.ndarray) -> GradientVector:
    """Pull an activation-space gradient back to parameter space.

    ``output_grad`` [T x output_dim] is dF/d(outputs) for some scalar F;
    the result is dF/d(theta) under the trace's parameters.
    """
    output_grad = np.asarray(output_grad, dtype=np.float64)
    last = trace.pre_activations[-1]
    if output_grad.shape != last.shape:
        raise ValueError(
            f"output_grad shape {output_grad.shape} does not match outputs {last.shape}"
        )
    theta = trace.theta
    grad = np.zeros(theta.size)
    layer_inputs = (trace.inputs, *trace.activations)
    delta = output_grad
    for i in range(spec.num_layers - 1, -1, -1):
        a_prev = layer_inputs[i]
        _write_view(grad, theta, f"W{i}", delta.T @ a_prev)
        _write_view(grad, theta, f"b{i}", delta.sum(axis=0))
        if i > 0:
            dphi = _activation_derivative(
                spec, trace.pre_activations[i - 1], trace.activations[i - 1]
            )
            delta = (delta @ theta.view(f"W{i}")) * dphi
    return GradientVector(grad, theta.layout, batch_size=1)


def _write_view(flat: np.ndarray, theta: ParameterVector, name: str, block: np.ndarray):
    for entry in theta.layout:
        if entry.name == name:
            flat[entry.offset : entry.offset + entry.size] = block.ravel()
            return
    raise ValueError(f"no layer named {name!r}")


def jvp_from_trace(spec: NetworkSpec, trace: ForwardTrace, v: ParameterVector) -> np.ndarray:
    """Directional derivative of the outputs along ``v``, reusing a trace.

    Forward-mode sweep: one pass, cost comparable to a forward call. ReLU
    layers reuse the forward active-set mask.
    """
    theta = trace.theta
    if v.layout != theta.layout:
        raise ValueError("direction vector layout does not match parameters")
    layer_inputs = (trace.inputs, *trace.activations)
    r_a = np.zeros_like(trace.inputs)
    for i in range(spec.num_layers):
        a_prev = layer_inputs[i]
        r_z = a_prev @ v.view(f"W{i}").T + r_a @ theta.view(f"W{i}").T + v.view(f"b{i}")
        if i < spec.num_layers - 1:
            dphi = _activation_derivative(
                spec, trace.pre_activations[i], trace.activations[i]
            )
            r_a = dphi * r_z
    return r_z


def jacobian_vector_product(
    spec: NetworkSpec, theta: ParameterVector, frames: np.ndarray, v: ParameterVector
) -> np.ndarray:
    """J v, the change of the outputs to first order along direction v."""
    _, trace = forward(spec, theta, frames)
    return jvp_from_trace(spec, trace, v)


def softmax(outputs: np.ndarray) -> np.ndarray:
    """Row-wise softmax of linear output activations."""
    shifted = outputs - outputs.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def init_network(spec: NetworkSpec, seed: int, scheme: str = "uniform-fan-in") -> ParameterVector:
    from .params import init_parameters

    return init_parameters(layout_for(spec), seed, scheme)
