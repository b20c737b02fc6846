"""Training-step rules and the budgeted training loop.

All methods maximize the sequence criterion. SGD climbs the gradient
with momentum and per-epoch annealing. The second-order methods solve a
damped curvature system for the step: "ng" against the outer-product
curvature, "hf" against the linearized curvature (warm-started with the
previous step), "nghf" the composite of the two. A second-order step is
kept only if the gradient-batch criterion does not get worse; otherwise
the damping is doubled once for a single retry and the update is skipped
if that also fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import (
    CGConfig,
    NumericalError,
    compute_hf_update,
    compute_ng_direction,
    compute_nghf_update,
)

METHODS = ("sgd", "ng", "hf", "nghf")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "nghf"
    epochs: int = 4
    updates_per_epoch: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    anneal: float = 0.75  # multiplies the learning rate each epoch
    step_scale: float = 1.0  # scales second-order updates
    damping: float = 0.1
    curvature_fraction: float = 0.25  # share of the corpus per curvature batch
    cg_iterations: int = 8
    ng_cg_iterations: int = 16  # outer-product solves cost a matmul per step
    cg_tolerance: float = 1e-4
    nghf_rhs: str = "gradient"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.epochs < 1 or self.updates_per_epoch < 1:
            raise ValueError("epochs and updates_per_epoch must be positive")
        if self.learning_rate <= 0 or self.step_scale <= 0:
            raise ValueError("learning_rate and step_scale must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.anneal <= 1:
            raise ValueError("anneal must lie in (0, 1]")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not 0 < self.curvature_fraction <= 1:
            raise ValueError("curvature_fraction must lie in (0, 1]")
        if self.ng_cg_iterations < 1:
            raise ValueError("ng_cg_iterations must be positive")

    def cg_config(self) -> CGConfig:
        return CGConfig(max_iterations=self.cg_iterations, tolerance=self.cg_tolerance)

    def ng_cg_config(self) -> CGConfig:
        return CGConfig(max_iterations=self.ng_cg_iterations, tolerance=self.cg_tolerance)


@dataclass(frozen=True)
class UpdateRecord:
    """What one training update did on its gradient batch."""

    value_before: float
    value_after: float
    step_norm: float
    cg_iterations: int
    ng_weight: float | None
    phi_decrease: float | None
    damping_used: float | None
    skipped: bool


def sgd_step(problem, theta, velocity, indices, learning_rate, momentum):
    """Momentum ascent step; returns (theta, velocity, record)."""
    value0, grad = problem.criterion_and_grad(theta, indices)
    if not np.all(np.isfinite(grad.values)):
        raise NumericalError("non-finite gradient in sgd step")
    velocity = momentum * velocity + grad.values
    step = learning_rate * velocity
    theta = theta.with_values(theta.values + step)
    value1 = problem.criterion(theta, indices)
    record = UpdateRecord(
        value_before=value0,
        value_after=value1,
        step_norm=float(np.linalg.norm(step)),
        cg_iterations=0,
        ng_weight=None,
        phi_decrease=None,
        damping_used=None,
        skipped=False,
    )
    return theta, velocity, record


def _solve_step(method, curvature, grad, cg, ng_cg, damping, nghf_rhs, prev_delta):
    if method == "ng":
        x, tr = compute_ng_direction(curvature, grad, ng_cg, damping)
        return x, tr.iterations, None, -tr.phi[-1]
    if method == "hf":
        init = prev_delta if prev_delta is not None and np.any(prev_delta) else None
        x, tr = compute_hf_update(curvature, grad, cg, damping, init_direction=init)
        return x, tr.iterations, None, -tr.phi[-1]
    if method == "nghf":
        upd = compute_nghf_update(
            curvature, grad, ng_cg, damping, rhs=nghf_rhs, gn_config=cg
        )
        iters = upd.trace_ng.iterations + upd.trace_gn.iterations
        return upd.delta, iters, upd.ng_weight, -upd.trace_gn.phi[-1]
    raise ValueError(f"unknown second-order method {method!r}")


def second_order_step(
    problem, theta, grad_indices, curv_indices, config, prev_delta=None
):
    """One curvature-solved update with acceptance control.

    Returns (theta, applied_delta, record); applied_delta is None when
    the update was skipped so warm starts do not chain across skips.
    """
    value0, grad = problem.criterion_and_grad(theta, grad_indices)
    if not grad.values.any():
        record = UpdateRecord(value0, value0, 0.0, 0, None, None, config.damping, True)
        return theta, None, record
    # outer-product metric over the full gradient batch, linearized
    # products over the subsampled curvature batch
    curvature = problem.curvature(theta, curv_indices, fisher_indices=grad_indices)
    cg = config.cg_config()
    ng_cg = config.ng_cg_config()

    damping = config.damping
    delta, iters, weight, phi_dec = _solve_step(
        config.method, curvature, grad.values, cg, ng_cg, damping, config.nghf_rhs,
        prev_delta,
    )
    step = config.step_scale * delta
    candidate = theta.with_values(theta.values + step)
    value1 = problem.criterion(candidate, grad_indices)
    if value1 < value0:
        # one retry under heavier damping; the doubling is not persisted
        damping = 2.0 * config.damping
        delta, iters2, weight, phi_dec = _solve_step(
            config.method, curvature, grad.values, cg, ng_cg, damping, config.nghf_rhs,
            prev_delta,
        )
        iters += iters2
        step = config.step_scale * delta
        candidate = theta.with_values(theta.values + step)
        value1 = problem.criterion(candidate, grad_indices)
        if value1 < value0:
            record = UpdateRecord(
                value0, value0, 0.0, iters, weight, phi_dec, damping, True
            )
            return theta, None, record
    record = UpdateRecord(
        value0,
        value1,
        float(np.linalg.norm(step)),
        iters,
        weight,
        phi_dec,
        damping,
        False,
    )
    return candidate, step, record


@dataclass(frozen=True)
class RunLogRow:
    """One line of a training run log."""

    update: int
    method: str
    seed: int
    train_criterion: float
    valid_criterion: float
    valid_error_rate: float
    entropy: float
    step_norm: float
    cg_iterations: int
    ng_weight: float | None
    phi_decrease: float | None


def train(problem, theta, config, seed, train_indices, valid_indices):
    """Run the full update budget; returns (theta, [RunLogRow])."""
    rng = np.random.default_rng(seed)
    train_indices = list(train_indices)
    valid_indices = list(valid_indices)
    rows = []
    velocity = np.zeros(theta.size)
    prev_delta = None
    update = 0
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.anneal**epoch
        for _ in range(config.updates_per_epoch):
            if config.method == "sgd":
                theta, velocity, rec = sgd_step(
                    problem, theta, velocity, train_indices, lr, config.momentum
                )
            else:
                size = max(1, round(config.curvature_fraction * len(train_indices)))
                curv_indices = sorted(
                    rng.choice(len(train_indices), size=size, replace=False)
                )
                curv_indices = [train_indices[i] for i in curv_indices]
                theta, prev_delta, rec = second_order_step(
                    problem, theta, train_indices, curv_indices, config, prev_delta
                )
            row = RunLogRow(
                update=update,
                method=config.method,
                seed=seed,
                train_criterion=rec.value_after,
                valid_criterion=problem.criterion(theta, valid_indices),
                valid_error_rate=problem.decode_error_rate(theta, valid_indices),
                entropy=problem.entropy(theta, valid_indices),
                step_norm=rec.step_norm,
                cg_iterations=rec.cg_iterations,
                ng_weight=rec.ng_weight,
                phi_decrease=rec.phi_decrease,
            )
            gauges = (row.train_criterion, row.valid_criterion,
                      row.valid_error_rate, row.entropy, row.step_norm)
            if not all(np.isfinite(v) for v in gauges):
                raise NumericalError(f"non-finite criterion at update {update}")
            rows.append(row)
            update += 1
    return theta, rows


def pretrain_frame_ce(
    problem, theta, seed, epochs=5, batch_size=8, learning_rate=0.2, momentum=0.9, anneal=0.8
):
    """Frame cross-entropy warm-up with minibatch momentum ascent."""
    rng = np.random.default_rng(seed)
    indices = np.arange(problem.num_utterances)
    velocity = np.zeros(theta.size)
    for epoch in range(epochs):
        lr = learning_rate * anneal**epoch
        order = rng.permutation(indices)
        for lo in range(0, len(order), batch_size):
            batch = [int(i) for i in order[lo : lo + batch_size]]
            _, grad = problem.ce_criterion_and_grad(theta, batch)
            velocity = momentum * velocity + grad.values
            theta = theta.with_values(theta.values + lr * velocity)
    return theta
