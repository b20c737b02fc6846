"""Flat parameter vectors with named per-layer views.

Every optimizer in this package operates on a single flat float64 vector.
Layer structure (name, offset, shape) is carried alongside so the network
module can slice out weight matrices, but the vector algebra here is
layout-agnostic. Vectors are treated as immutable values: operations
return new arrays and never modify their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class LayoutError(ValueError):
    """Raised when a layout is overlapping, gappy, or mismatched."""


class LayoutEntry(NamedTuple):
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def build_layout(named_shapes: Sequence[tuple[str, tuple[int, ...]]]) -> tuple[LayoutEntry, ...]:
    """Assign consecutive offsets to a list of (name, shape) pairs."""
    entries = []
    offset = 0
    for name, shape in named_shapes:
        shape = tuple(int(d) for d in shape)
        if not shape or any(d <= 0 for d in shape):
            raise LayoutError(f"layer {name!r} has non-positive shape {shape}")
        entries.append(LayoutEntry(name, offset, shape))
        offset += int(np.prod(shape))
    return validate_layout(tuple(entries))


def validate_layout(layout: Sequence[LayoutEntry]) -> tuple[LayoutEntry, ...]:
    """Check that views are non-overlapping and cover the vector exactly."""
    if not layout:
        raise LayoutError("layout is empty")
    layout = tuple(LayoutEntry(e[0], int(e[1]), tuple(e[2])) for e in layout)
    expected = 0
    for entry in layout:
        if any(d <= 0 for d in entry.shape):
            raise LayoutError(f"layer {entry.name!r} has non-positive shape {entry.shape}")
        if entry.offset != expected:
            raise LayoutError(
                f"layer {entry.name!r} at offset {entry.offset}, expected {expected} "
                "(views must be non-overlapping and gap-free)"
            )
        expected += entry.size
    return layout


def layout_size(layout: Sequence[LayoutEntry]) -> int:
    last = layout[-1]
    return last.offset + last.size


@dataclass(frozen=True)
class ParameterVector:
    """All network weights as one flat vector plus the per-layer layout."""

    values: np.ndarray
    layout: tuple[LayoutEntry, ...]

    def __post_init__(self):
        layout = validate_layout(self.layout)
        object.__setattr__(self, "layout", layout)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != layout_size(layout):
            raise LayoutError(
                f"vector length {values.shape} does not match layout size {layout_size(layout)}"
            )
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def view(self, name: str) -> np.ndarray:
        """Read-only view of one layer, reshaped to its layout shape."""
        for entry in self.layout:
            if entry.name == name:
                v = self.values[entry.offset : entry.offset + entry.size].reshape(entry.shape)
                v.flags.writeable = False
                return v
        raise LayoutError(f"no layer named {name!r}")

    def with_values(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.layout)

    def zeros_like(self) -> "ParameterVector":
        return ParameterVector(np.zeros(self.size), self.layout)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.layout)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class GradientVector:
    """Gradient of a criterion w.r.t. a ParameterVector.

    ``batch_size`` records how many utterances the gradient was averaged
    over, so callers can re-weight when merging batches.
    """

    values: np.ndarray
    layout: tuple[LayoutEntry, ...]
    batch_size: int = 1

    def __post_init__(self):
        layout = validate_layout(self.layout)
        object.__setattr__(self, "layout", layout)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != layout_size(layout):
            raise LayoutError("gradient length does not match layout")
        object.__setattr__(self, "values", values)

    def as_params(self) -> ParameterVector:
        return ParameterVector(self.values, self.layout)


def _check_same_layout(x, y):
    if x.layout != y.layout:
        raise LayoutError("operands have different layouts")


def init_parameters(
    layout: Sequence[LayoutEntry], seed: int, scheme: str = "uniform-fan-in"
) -> ParameterVector:
    """Deterministically initialize a parameter vector.

    ``zeros`` fills everything with 0. ``uniform-fan-in`` draws matrix
    entries uniformly from +/- 1/sqrt(fan-in), where fan-in is the last
    dimension of the layer shape; 1-d entries (biases) start at zero.
    """
    layout = validate_layout(layout)
    values = np.zeros(layout_size(layout))
    if scheme == "zeros":
        pass
    elif scheme == "uniform-fan-in":
        rng = np.random.default_rng(seed)
        for entry in layout:
            if len(entry.shape) >= 2:
                bound = 1.0 / np.sqrt(entry.shape[-1])
                values[entry.offset : entry.offset + entry.size] = rng.uniform(
                    -bound, bound, size=entry.size
                )
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return ParameterVector(values, layout)


def axpy(a: float, x, y) -> ParameterVector:
    """Return a*x + y without modifying either input."""
    _check_same_layout(x, y)
    return ParameterVector(a * x.values + y.values, x.layout)


def dot(x, y) -> float:
    """Euclidean dot product, fixed summation order for reproducibility."""
    _check_same_layout(x, y)
    return float(np.dot(x.values, y.values))


CHECKPOINT_MAGIC = b"NGPV"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ParameterVector) -> None:
    """Write a parameter vector to a binary checkpoint.

    Format: magic, u32 version, layout table, then the values as
    little-endian 64-bit floats. Round-trips exactly.
    """
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(params.layout)))
        for entry in params.layout:
            name = entry.name.encode("utf-8")
            f.write(struct.pack("<H", len(name)))
            f.write(name)
            f.write(struct.pack("<Q", entry.offset))
            f.write(struct.pack("<B", len(entry.shape)))
            for d in entry.shape:
                f.write(struct.pack("<Q", d))
        f.write(struct.pack("<Q", params.size))
        f.write(np.ascontiguousarray(params.values, dtype="<f8").tobytes())


def load_checkpoint(path) -> ParameterVector:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (n_entries,) = struct.unpack("<I", f.read(4))
        entries = []
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (offset,) = struct.unpack("<Q", f.read(8))
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
            entries.append(LayoutEntry(name, int(offset), tuple(int(d) for d in shape)))
        (count,) = struct.unpack("<Q", f.read(8))
        values = np.frombuffer(f.read(8 * count), dtype="<f8").astype(np.float64)
    return ParameterVector(values, tuple(entries))
