import numpy as np
import pytest

from nghf.params import (
    GradientVector,
    LayoutEntry,
    LayoutError,
    ParameterVector,
    axpy,
    build_layout,
    dot,
    init_parameters,
    layout_size,
    load_checkpoint,
    save_checkpoint,
    validate_layout,
)


def small_layout():
    return build_layout([("W0", (3, 2)), ("b0", (3,)), ("W1", (2, 3))])


def test_build_layout_offsets():
    layout = small_layout()
    assert [e.offset for e in layout] == [0, 6, 9]
    assert layout_size(layout) == 15


def test_layout_rejects_bad_shapes():
    with pytest.raises(LayoutError):
        build_layout([("W0", (0, 2))])
    with pytest.raises(LayoutError):
        build_layout([("W0", ())])
    with pytest.raises(LayoutError):
        validate_layout(())


def test_layout_rejects_gaps_and_overlaps():
    with pytest.raises(LayoutError):
        validate_layout((LayoutEntry("a", 0, (2,)), LayoutEntry("b", 3, (2,))))
    with pytest.raises(LayoutError):
        validate_layout((LayoutEntry("a", 0, (2,)), LayoutEntry("b", 1, (2,))))


def test_view_shapes_and_values():
    layout = small_layout()
    values = np.arange(15.0)
    p = ParameterVector(values, layout)
    assert p.view("W0").shape == (3, 2)
    assert p.view("b0").tolist() == [6.0, 7.0, 8.0]
    assert p.view("W1")[1, 2] == 14.0
    with pytest.raises(LayoutError):
        p.view("nope")


def test_view_is_read_only():
    p = ParameterVector(np.zeros(15), small_layout())
    with pytest.raises(ValueError):
        p.view("W0")[0, 0] = 1.0


def test_vector_length_checked():
    with pytest.raises(LayoutError):
        ParameterVector(np.zeros(14), small_layout())


def test_axpy_and_dot_against_numpy():
    rng = np.random.default_rng(0)
    layout = small_layout()
    x = ParameterVector(rng.standard_normal(15), layout)
    y = ParameterVector(rng.standard_normal(15), layout)
    z = axpy(2.5, x, y)
    assert np.allclose(z.values, 2.5 * x.values + y.values)
    assert x.values[0] != z.values[0]  # inputs untouched
    assert dot(x, y) == pytest.approx(float(np.dot(x.values, y.values)))


def test_axpy_layout_mismatch():
    x = ParameterVector(np.zeros(15), small_layout())
    y = ParameterVector(np.zeros(4), build_layout([("a", (4,))]))
    with pytest.raises(LayoutError):
        axpy(1.0, x, y)
    with pytest.raises(LayoutError):
        dot(x, y)


def test_init_zeros_and_fan_in():
    layout = small_layout()
    z = init_parameters(layout, seed=0, scheme="zeros")
    assert not z.values.any()
    p = init_parameters(layout, seed=0)
    q = init_parameters(layout, seed=0)
    assert np.array_equal(p.values, q.values)
    r = init_parameters(layout, seed=1)
    assert not np.array_equal(p.values, r.values)
    # matrices bounded by 1/sqrt(fan-in), biases zero
    assert np.abs(p.view("W0")).max() <= 1.0 / np.sqrt(2)
    assert np.abs(p.view("W1")).max() <= 1.0 / np.sqrt(3)
    assert not p.view("b0").any()
    with pytest.raises(ValueError):
        init_parameters(layout, seed=0, scheme="whatever")


def test_gradient_vector_as_params():
    g = GradientVector(np.ones(15), small_layout(), batch_size=4)
    assert g.batch_size == 4
    assert isinstance(g.as_params(), ParameterVector)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    p = ParameterVector(rng.standard_normal(15), small_layout())
    path = tmp_path / "ck.bin"
    save_checkpoint(path, p)
    q = load_checkpoint(path)
    assert q.layout == p.layout
    assert np.array_equal(q.values, p.values)  # bit-exact


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_checkpoint(path)
