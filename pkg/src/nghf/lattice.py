"""Hypothesis lattices: weighted DAGs of time-aligned phone arcs.

A lattice has one source node (time 0), one sink node (time T), and arcs
that each cover at least one frame; consecutive arcs abut exactly, so
every path through the lattice segments the full utterance. Within an
arc, frames map onto the phone's states by a canonical even split, which
makes the text format (one arc per line) lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


class LatticeError(ValueError):
    """Raised when a lattice violates its structural invariants."""


class Lattice:
    """Immutable arc-level representation plus cached kernel indices.

    ``node_times[i]`` is the frame index of node ``i``; nodes are
    renumbered at construction into topological (time) order with the
    source first and the sink last. Arcs are (start, end, phone, prior)
    with their frame span implied by the node times.
    """

    def __init__(self, node_times, arcs, states_per_phone):
        if states_per_phone < 1:
            raise LatticeError("states_per_phone must be >= 1")
        self.states_per_phone = int(states_per_phone)

        node_times = [int(t) for t in node_times]
        order = sorted(range(len(node_times)), key=lambda i: (node_times[i], i))
        renumber = {old: new for new, old in enumerate(order)}
        self.node_times = np.array([node_times[i] for i in order], dtype=np.int32)

        arcs = sorted(
            (renumber[int(s)], renumber[int(e)], int(p), float(prior))
            for s, e, p, prior in arcs
        )
        if not arcs:
            raise LatticeError("lattice has no arcs")
        self.arc_start = np.array([a[0] for a in arcs], dtype=np.int32)
        self.arc_end = np.array([a[1] for a in arcs], dtype=np.int32)
        self.arc_phone = np.array([a[2] for a in arcs], dtype=np.int32)
        self.arc_prior = np.array([a[3] for a in arcs])
        self._validate()
        self._build_indices()
        self.arc_acoustic = None  # slot filled by score_arcs

    @property
    def num_nodes(self) -> int:
        return self.node_times.shape[0]

    @property
    def num_arcs(self) -> int:
        return self.arc_start.shape[0]

    @property
    def num_frames(self) -> int:
        return int(self.node_times[-1])

    @property
    def arc_t0(self) -> np.ndarray:
        return self.node_times[self.arc_start]

    @property
    def arc_t1(self) -> np.ndarray:
        return self.node_times[self.arc_end]

    def _validate(self):
        n = self.num_nodes
        if n < 2:
            raise LatticeError("lattice needs at least a source and a sink node")
        if self.node_times[0] != 0:
            raise LatticeError("source node must sit at time 0")
        t0 = self.node_times[self.arc_start]
        t1 = self.node_times[self.arc_end]
        if np.any(t1 - t0 < 1):
            raise LatticeError("every arc must span at least one frame")
        has_in = np.zeros(n, dtype=bool)
        has_out = np.zeros(n, dtype=bool)
        has_in[self.arc_end] = True
        has_out[self.arc_start] = True
        sources = np.flatnonzero(~has_in)
        sinks = np.flatnonzero(~has_out)
        if sources.tolist() != [0]:
            raise LatticeError(f"expected the single source node 0, got {sources.tolist()}")
        if sinks.tolist() != [n - 1]:
            raise LatticeError(f"expected the single sink node {n - 1}, got {sinks.tolist()}")
        if self.node_times[-1] <= 0:
            raise LatticeError("sink node must sit at the final frame")

    def _build_indices(self):
        n, a = self.num_nodes, self.num_arcs
        order_in = np.argsort(self.arc_end, kind="stable").astype(np.int32)
        order_out = np.argsort(self.arc_start, kind="stable").astype(np.int32)
        self.in_offsets = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(self.arc_end, minlength=n), out=self.in_offsets[1:])
        self.out_offsets = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(self.arc_start, minlength=n), out=self.out_offsets[1:])
        self.in_arcs = order_in
        self.out_arcs = order_out

        # canonical per-arc state sequences (even split of the span)
        spans = (self.arc_t1 - self.arc_t0).astype(np.int64)
        self.state_offsets = np.zeros(a + 1, dtype=np.int32)
        self.state_offsets[1:] = np.cumsum(spans)
        states = np.empty(int(spans.sum()), dtype=np.int32)
        frames = np.empty(int(spans.sum()), dtype=np.int32)
        S = self.states_per_phone
        pos = 0
        for i in range(a):
            d = int(spans[i])
            bounds = _kernels.segment_state_bounds(d, S)
            for j in range(S):
                for k in range(bounds[j], bounds[j + 1]):
                    states[pos] = self.arc_phone[i] * S + j
                    frames[pos] = self.arc_t0[i] + k
                    pos += 1
        self.arc_states = states
        self.arc_frames = frames

    def score_arcs(self, acoustic_loglik: np.ndarray, kappa: float) -> np.ndarray:
        """Total per-arc log score: kappa * summed state scores + prior.

        ``acoustic_loglik`` is [T x K] with K covering every state id used
        by the lattice. Fills the per-arc acoustic slot as a side effect.
        """
        acoustic_loglik = np.asarray(acoustic_loglik, dtype=np.float64)
        if acoustic_loglik.ndim != 2 or acoustic_loglik.shape[0] < self.num_frames:
            raise LatticeError(
                f"acoustic matrix {acoustic_loglik.shape} does not cover "
                f"{self.num_frames} frames"
            )
        if not np.all(np.isfinite(acoustic_loglik)):
            raise LatticeError("acoustic scores must be finite")
        vals = acoustic_loglik[self.arc_frames, self.arc_states]
        acoustic = np.add.reduceat(vals, self.state_offsets[:-1])
        self.arc_acoustic = acoustic
        return kappa * acoustic + self.arc_prior

    def frame_state_sums(self, weights: np.ndarray, n_states: int) -> np.ndarray:
        """Scatter per-arc weights onto the [T x n_states] grid."""
        return _kernels.accumulate_frame_state(
            self.num_frames,
            n_states,
            self.arc_t0.astype(np.int32),
            self.state_offsets,
            self.arc_states,
            np.ascontiguousarray(weights, dtype=np.float64),
        )


@dataclass(frozen=True)
class PosteriorField:
    """Per-frame state posteriors and per-arc occupancies."""

    gamma: np.ndarray
    arc_occupancy: np.ndarray
    log_total: float


def forward_backward(lattice: Lattice, acoustic_loglik: np.ndarray, kappa: float):
    """State posteriors of a lattice under scaled acoustic scores.

    Per-frame rows of ``gamma`` sum to 1 because every path covers every
    frame exactly once.
    """
    if kappa <= 0:
        raise ValueError(f"acoustic scale must be positive, got {kappa}")
    scores = lattice.score_arcs(acoustic_loglik, kappa)
    zeros = np.zeros(lattice.num_arcs)
    log_total, occ, _, _ = _kernels.forward_backward(
        lattice.num_nodes,
        lattice.arc_start,
        lattice.arc_end,
        np.ascontiguousarray(scores),
        zeros,
        lattice.in_offsets,
        lattice.in_arcs,
        lattice.out_offsets,
        lattice.out_arcs,
    )
    gamma = lattice.frame_state_sums(occ, acoustic_loglik.shape[1])
    return PosteriorField(gamma, occ, log_total)


def forward_backward_with_accuracy(
    lattice: Lattice, acoustic_loglik: np.ndarray, kappa: float, arc_accuracy: np.ndarray
):
    """Forward-backward plus accuracy recursions.

    Returns (PosteriorField, c_arc, c_avg) where ``c_arc[a]`` is the
    expected path accuracy given the path crosses arc ``a`` and ``c_avg``
    the lattice-average path accuracy.
    """
    if kappa <= 0:
        raise ValueError(f"acoustic scale must be positive, got {kappa}")
    scores = lattice.score_arcs(acoustic_loglik, kappa)
    log_total, occ, c_arc, c_avg = _kernels.forward_backward(
        lattice.num_nodes,
        lattice.arc_start,
        lattice.arc_end,
        np.ascontiguousarray(scores),
        np.ascontiguousarray(arc_accuracy, dtype=np.float64),
        lattice.in_offsets,
        lattice.in_arcs,
        lattice.out_offsets,
        lattice.out_arcs,
    )
    gamma = lattice.frame_state_sums(occ, acoustic_loglik.shape[1])
    return PosteriorField(gamma, occ, log_total), c_arc, c_avg


def save_lattice_text(path, lattice: Lattice) -> None:
    """One arc per line: ``start end phone t0 t1 prior-score``."""
    t0 = lattice.arc_t0
    t1 = lattice.arc_t1
    with open(path, "w") as f:
        for i in range(lattice.num_arcs):
            f.write(
                f"{lattice.arc_start[i]} {lattice.arc_end[i]} {lattice.arc_phone[i]} "
                f"{t0[i]} {t1[i]} {float(lattice.arc_prior[i])!r}\n"
            )


def load_lattice_text(path, states_per_phone: int) -> Lattice:
    arcs = []
    times = {}
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise LatticeError(f"{path}:{line_no}: expected 6 fields, got {len(parts)}")
            s, e, p, t0, t1, prior = parts
            s, e, p, t0, t1 = int(s), int(e), int(p), int(t0), int(t1)
            for node, t in ((s, t0), (e, t1)):
                if times.setdefault(node, t) != t:
                    raise LatticeError(
                        f"{path}:{line_no}: node {node} has inconsistent times"
                    )
            arcs.append((s, e, p, float(prior)))
    if not arcs:
        raise LatticeError(f"{path}: no arcs")
    n = max(times) + 1
    if sorted(times) != list(range(n)):
        raise LatticeError(f"{path}: node ids must be dense 0..{n - 1}")
    node_times = [times[i] for i in range(n)]
    return Lattice(node_times, arcs, states_per_phone)
