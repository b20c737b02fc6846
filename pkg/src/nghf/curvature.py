"""Matrix-free curvature operators in parameter space.

Two positive semi-definite approximations of the criterion's second
derivative, both applied to vectors without ever forming a matrix:

* outer-product ("fisher"): the average of g_r g_r^T over per-utterance
  gradient samples g_r;
* linearized ("gn"): J^T H J averaged over frames, where J is the
  network Jacobian at the cached forward traces and H the per-frame
  curvature of the lattice log-partition, kappa * (diag(p) - p p^T)
  with p the frame's state posterior row.

Small problems can be materialized to dense matrices for eigenanalysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import backprop, jvp_from_trace


@dataclass(frozen=True)
class EigenReport:
    """Dense eigendecomposition of a damped curvature matrix.

    Eigenvalues are sorted descending; ``vectors[:, j]`` pairs with
    ``values[j]``. ``residual`` is the relative Frobenius error of the
    reconstruction V diag(values) V^T against the materialized matrix.
    """

    values: np.ndarray
    vectors: np.ndarray
    residual: float

    def apply_inverse(self, b):
        """Solve A x = b via the eigenbasis: sum_j (v_j . b / mu_j) v_j."""
        if np.any(self.values <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        coeffs = self.vectors.T @ b
        return self.vectors @ (coeffs / self.values)


class CurvatureOperator:
    """Both curvature products for one batch at fixed parameters."""

    def __init__(self, net, theta, traces, gammas, utt_grads, kappa):
        if len(traces) != len(gammas):
            raise ValueError("one posterior matrix per trace required")
        if utt_grads.ndim != 2 or utt_grads.shape[1] != theta.size:
            raise ValueError(
                f"utterance gradients must be [R x {theta.size}], got {utt_grads.shape}"
            )
        self.net = net
        self.theta = theta
        self.traces = traces
        self.gammas = gammas
        self.utt_grads = utt_grads
        self.kappa = kappa
        self.total_frames = sum(g.shape[0] for g in gammas)

    @property
    def dim(self) -> int:
        return self.theta.size

    def fisher_product(self, v):
        """Average outer-product action: (1/R) sum_r g_r (g_r . v)."""
        v = np.asarray(v, dtype=np.float64)
        coeffs = self.utt_grads @ v
        return (self.utt_grads.T @ coeffs) / self.utt_grads.shape[0]

    def gn_product(self, v):
        """Frame-averaged J^T H J v using forward-over-reverse passes."""
        vec = self.theta.with_values(np.asarray(v, dtype=np.float64))
        out = np.zeros(self.dim)
        for trace, gamma in zip(self.traces, self.gammas):
            jv = jvp_from_trace(self.net, trace, vec)
            dots = (gamma * jv).sum(axis=1, keepdims=True)
            hjv = self.kappa * (gamma * jv - gamma * dots)
            out += backprop(self.net, trace, hjv).values
        return out / self.total_frames

    def product(self, kind, v):
        if kind == "fisher":
            return self.fisher_product(v)
        if kind == "gn":
            return self.gn_product(v)
        raise ValueError(f"unknown curvature kind {kind!r}")

    def damped_apply(self, kind, v, damping):
        """(A + damping * I) v for the chosen curvature."""
        if damping < 0:
            raise ValueError(f"damping must be non-negative, got {damping}")
        v = np.asarray(v, dtype=np.float64)
        return self.product(kind, v) + damping * v

    def materialize(self, kind, damping=0.0, limit=200):
        """Dense matrix of the damped operator, column by column.

        Guarded by ``limit`` because the cost is one operator application
        per parameter; intended for analysis and verification only.
        """
        n = self.dim
        if n > limit:
            raise ValueError(f"refusing to materialize a {n} x {n} matrix (limit {limit})")
        mat = np.empty((n, n))
        basis = np.zeros(n)
        for j in range(n):
            basis[j] = 1.0
            mat[:, j] = self.damped_apply(kind, basis, damping)
            basis[j] = 0.0
        return mat

    def eigenspectrum(self, kind, damping=0.0, limit=200):
        """Eigendecomposition of the damped curvature, descending order."""
        mat = self.materialize(kind, damping, limit)
        sym = 0.5 * (mat + mat.T)
        values, vectors = np.linalg.eigh(sym)
        order = np.argsort(values)[::-1]
        values = values[order]
        vectors = vectors[:, order]
        recon = (vectors * values) @ vectors.T
        denom = np.linalg.norm(mat)
        residual = float(np.linalg.norm(recon - mat) / denom) if denom > 0 else 0.0
        return EigenReport(values, vectors, residual)
