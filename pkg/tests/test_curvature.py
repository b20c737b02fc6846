import numpy as np
import pytest

from nghf.network import NetworkSpec, init_network
from nghf.task import (
    SequenceProblem,
    build_lattice,
    emission_logliks,
    generate_corpus,
    make_world,
)

from oracles import explicit_fisher_matrix, explicit_gn_matrix


def make_operator(seed=0, hidden=(5,), n_utts=3, kappa=0.5):
    world = make_world(
        num_phones=3,
        states_per_phone=2,
        input_dim=4,
        seed=seed,
        separation=3.0,
        emission_scale=0.8,
        dur_min=2,
        dur_max=5,
    )
    utts = generate_corpus(world, n_utts, seed=seed + 1, min_phones=2, max_phones=3)
    spec = NetworkSpec(world.input_dim, hidden, world.num_states, activation="sigmoid")
    theta = init_network(spec, seed=seed + 2)
    lattices = [
        build_lattice(world, u, emission_logliks(world, u.frames), beam=3, kappa=kappa)
        for u in utts
    ]
    problem = SequenceProblem(spec, world, utts, lattices, kappa=kappa)
    idx = list(range(n_utts))
    return problem, theta, problem.curvature(theta, idx), idx


def test_gn_product_matches_explicit_matrix():
    problem, theta, op, idx = make_operator()
    assert op.dim <= 500
    g = explicit_gn_matrix(op.net, op.traces, op.gammas, op.kappa, op.dim)
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.standard_normal(op.dim)
        got = op.gn_product(v)
        want = g @ v
        assert np.linalg.norm(got - want) <= 1e-8 * max(np.linalg.norm(want), 1.0)


def test_fisher_product_matches_explicit_matrix():
    problem, theta, op, idx = make_operator(seed=5)
    f = explicit_fisher_matrix(op.utt_grads)
    rng = np.random.default_rng(4)
    for _ in range(5):
        v = rng.standard_normal(op.dim)
        got = op.fisher_product(v)
        want = f @ v
        assert np.linalg.norm(got - want) <= 1e-8 * max(np.linalg.norm(want), 1.0)


def test_products_are_symmetric_and_psd():
    problem, theta, op, idx = make_operator(seed=7)
    rng = np.random.default_rng(9)
    for kind in ("gn", "fisher"):
        a = op.materialize(kind)
        np.testing.assert_allclose(a, a.T, atol=1e-12)
        for _ in range(8):
            v = rng.standard_normal(op.dim)
            assert v @ (a @ v) >= -1e-10


def test_damped_apply_adds_identity_scale():
    problem, theta, op, idx = make_operator(seed=11)
    rng = np.random.default_rng(12)
    v = rng.standard_normal(op.dim)
    lam = 0.3
    np.testing.assert_allclose(
        op.damped_apply("gn", v, lam), op.gn_product(v) + lam * v, rtol=1e-12
    )
    with pytest.raises(ValueError):
        op.damped_apply("gn", v, -0.1)
    with pytest.raises(ValueError):
        op.product("hessian", v)


def test_materialize_refuses_large_models():
    problem, theta, op, idx = make_operator()
    with pytest.raises(ValueError):
        op.materialize("gn", limit=10)


def test_eigenspectrum_reconstructs_matrix():
    problem, theta, op, idx = make_operator(seed=13)
    report = op.eigenspectrum("gn", damping=1e-3)
    assert report.residual < 1e-10
    assert np.all(np.diff(report.values) <= 1e-12)  # sorted descending
    a = op.materialize("gn", damping=1e-3)
    rebuilt = (report.vectors * report.values) @ report.vectors.T
    np.testing.assert_allclose(rebuilt, a, atol=1e-10)


def test_eigen_inverse_matches_dense_solve():
    problem, theta, op, idx = make_operator(seed=17)
    lam = 1e-3
    report = op.eigenspectrum("gn", damping=lam)
    rng = np.random.default_rng(18)
    b = rng.standard_normal(op.dim)
    want = np.linalg.solve(op.materialize("gn", damping=lam), b)
    got = report.apply_inverse(b)
    assert np.linalg.norm(got - want) <= 1e-8 * np.linalg.norm(want)


def test_eigen_inverse_rejects_singular_spectrum():
    problem, theta, op, idx = make_operator(seed=19)
    report = op.eigenspectrum("fisher")  # rank <= n_utts, undamped
    assert report.values.min() < 1e-10
    with pytest.raises(np.linalg.LinAlgError):
        report.apply_inverse(np.ones(op.dim))


def test_fisher_rank_bounded_by_batch():
    problem, theta, op, idx = make_operator(seed=23, n_utts=2)
    report = op.eigenspectrum("fisher")
    rank = int((report.values > 1e-10 * report.values.max()).sum())
    assert rank <= 2
