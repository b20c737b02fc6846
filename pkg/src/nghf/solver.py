"""Truncated conjugate-gradient solves and the composite update.

The solver minimizes phi(x) = x.A.x/2 - b.x from x0 = 0 with an
optional caller-supplied first search direction. Each new direction is
re-conjugated against every stored previous direction (full
Gram-Schmidt in the A-inner product), which keeps the directions
A-conjugate regardless of how the first one was chosen; with exact
arithmetic the solve then terminates in at most dim steps.

The composite update runs two solves: one against the outer-product
curvature for a natural-gradient direction, then one against the
linearized curvature seeded with that direction. The first step size of
the second solve is the weight on the natural-gradient component; the
remaining conjugate steps form the second component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericalError(ArithmeticError):
    """Raised when a solve meets non-finite values or bad curvature."""


@dataclass(frozen=True)
class CGConfig:
    max_iterations: int = 8
    tolerance: float = 1e-4  # relative residual stop

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 <= self.tolerance < 1:
            raise ValueError("tolerance must lie in [0, 1)")


@dataclass
class CGTrace:
    """Per-iteration record of one solve.

    residual_norms[k] is ||b - A x_k||, so entry 0 is ||b||; phi[k] is
    the quadratic objective at x_k (phi[0] = 0). alphas and directions
    have one entry per completed iteration.
    """

    residual_norms: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def cg_solve(apply_a, b, config, init_direction=None):
    """Solve (approximately) A x = b; returns (x, CGTrace).

    apply_a must be the action of a symmetric positive definite matrix;
    a direction of non-positive curvature raises NumericalError.
    """
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains non-finite values")
    trace = CGTrace()
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    trace.residual_norms.append(b_norm)
    trace.phi.append(0.0)
    if b_norm == 0.0:
        trace.converged = True
        return x, trace

    r = b.copy()
    ax = np.zeros_like(b)
    basis = []  # (p, Ap, p.A.p) per accepted direction
    for k in range(config.max_iterations):
        if trace.residual_norms[-1] <= config.tolerance * b_norm:
            trace.converged = True
            break
        if k == 0 and init_direction is not None:
            p = np.array(init_direction, dtype=np.float64)
            if not np.all(np.isfinite(p)):
                raise NumericalError("initial direction contains non-finite values")
            if not p.any():
                raise NumericalError("initial direction is zero")
        else:
            p = r.copy()
            for q, aq, qaq in basis:
                p -= (np.dot(aq, p) / qaq) * q
        p_norm = float(np.linalg.norm(p))
        if p_norm == 0.0 or not np.isfinite(p_norm):
            break
        ap = apply_a(p)
        if not np.all(np.isfinite(ap)):
            raise NumericalError("operator produced non-finite values")
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            raise NumericalError(f"non-positive curvature along search direction ({pap:g})")
        alpha = float(np.dot(r, p)) / pap
        x += alpha * p
        ax += alpha * ap
        r -= alpha * ap
        basis.append((p, ap, pap))
        trace.alphas.append(alpha)
        trace.directions.append(p.copy())
        trace.residual_norms.append(float(np.linalg.norm(r)))
        trace.phi.append(float(0.5 * np.dot(x, ax) - np.dot(b, x)))
        trace.iterations = k + 1
    else:
        if trace.residual_norms[-1] <= config.tolerance * b_norm:
            trace.converged = True
    return x, trace


@dataclass(frozen=True)
class CompositeUpdate:
    """Two-part parameter update from the paired solves.

    delta == ng_weight * ng_direction + hf_component holds exactly by
    construction; ng_weight is the first step size of the second solve.
    """

    delta: np.ndarray
    ng_direction: np.ndarray
    ng_weight: float
    hf_component: np.ndarray
    trace_ng: CGTrace
    trace_gn: CGTrace


def compute_ng_direction(curvature, grad, config, damping):
    """Natural-gradient direction: solve damped outer-product system."""
    return cg_solve(
        lambda v: curvature.damped_apply("fisher", v, damping), grad, config
    )


def compute_hf_update(curvature, grad, config, damping, init_direction=None):
    """Plain linearized-curvature solve, optionally warm-started."""
    return cg_solve(
        lambda v: curvature.damped_apply("gn", v, damping),
        grad,
        config,
        init_direction=init_direction,
    )


def compute_nghf_update(curvature, grad, config, damping, rhs="gradient",
                        gn_config=None):
    """Composite update: seed the second solve with the first's result.

    rhs selects the right-hand side of the second solve: "gradient"
    reuses the criterion gradient, "ng-direction" solves against the
    natural-gradient direction itself.  gn_config, when given, sets a
    separate budget for the second solve.
    """
    if rhs not in ("gradient", "ng-direction"):
        raise ValueError(f"unknown rhs choice {rhs!r}")
    ng, trace_ng = compute_ng_direction(curvature, grad, config, damping)
    if not ng.any():
        raise NumericalError("natural-gradient direction is zero; cannot seed second solve")
    b2 = grad if rhs == "gradient" else ng
    x, trace_gn = cg_solve(
        lambda v: curvature.damped_apply("gn", v, damping),
        b2,
        gn_config if gn_config is not None else config,
        init_direction=ng,
    )
    weight = trace_gn.alphas[0] if trace_gn.alphas else 0.0
    hf_component = x - weight * ng
    return CompositeUpdate(
        delta=x,
        ng_direction=ng,
        ng_weight=weight,
        hf_component=hf_component,
        trace_ng=trace_ng,
        trace_gn=trace_gn,
    )
