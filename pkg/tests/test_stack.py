import numpy as np
import pytest

from deeplau.cells import cell_forward
from deeplau.numerics import ShapeError, finite_diff_grad, rel_error
from deeplau.stack import StackConfig, StackParams, layer_backward, stack_backward, stack_forward


def _random_stack(cfg, rng, std=0.5):
    params = StackParams.zeros(cfg)
    for cell in params.layers:
        for buf in cell.buffers().values():
            buf[...] = rng.standard_normal(buf.shape) * std
    return params


def _unroll(p, xs, reverse=False):
    """Manual single-layer unroll with the public cell API."""
    T = len(xs)
    out = [None] * T
    h = np.zeros((xs[0].shape[0], p.hidden_dim))
    for t in (reversed(range(T)) if reverse else range(T)):
        h, _ = cell_forward(p, xs[t], h)
        out[t] = h
    return np.stack(out)


def test_direction_policies():
    alt = StackConfig(4, 3, 3)
    assert [alt.direction(l) for l in range(1, 5)] == [-1, 1, -1, 1]
    fwd = StackConfig(4, 3, 3, direction_policy="fixed_forward")
    assert [fwd.direction(l) for l in range(1, 5)] == [-1] * 4
    flip = StackConfig(2, 3, 3, direction_policy="alternating_flipped")
    assert [flip.direction(l) for l in (1, 2)] == [1, -1]


@pytest.mark.parametrize("kind", ["gru", "lau"])
def test_single_layer_is_unrolled_cell(kind, rng):
    cfg = StackConfig(1, 3, 4, kind)
    params = _random_stack(cfg, rng)
    X = rng.standard_normal((5, 2, 3))
    out = stack_forward(params, cfg, X).outputs
    assert np.max(np.abs(out - _unroll(params.layers[0], list(X)))) < 1e-12
    fwd = StackConfig(1, 3, 4, kind, "fixed_forward")
    assert np.array_equal(out, stack_forward(params, fwd, X).outputs)


def test_length_one_direction_vacuous(rng):
    alt = StackConfig(3, 3, 3)
    fwd = StackConfig(3, 3, 3, direction_policy="fixed_forward")
    params = _random_stack(alt, rng)
    X = rng.standard_normal((1, 2, 3))
    assert np.array_equal(stack_forward(params, alt, X).outputs,
                          stack_forward(params, fwd, X).outputs)


def test_layer_two_runs_right_to_left(rng):
    cfg = StackConfig(2, 3, 4)
    params = _random_stack(cfg, rng)
    X = rng.standard_normal((3, 2, 3))
    acts = stack_forward(params, cfg, X)
    h1 = _unroll(params.layers[0], list(X))
    h2 = _unroll(params.layers[1], list(h1), reverse=True)
    assert np.max(np.abs(acts.outputs[1] - h2[1])) < 1e-12
    assert np.max(np.abs(acts.outputs - h2)) < 1e-12


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_reversal_equivariance(L, rng):
    cfg = StackConfig(L, 3, 3, "lau", residual=True)
    flipped = StackConfig(L, 3, 3, "lau", "alternating_flipped", residual=True)
    params = _random_stack(cfg, rng)
    X = rng.standard_normal((6, 2, 3))
    out = stack_forward(params, cfg, X).outputs
    out_rev = stack_forward(params, flipped, X[::-1]).outputs
    assert np.max(np.abs(out_rev[::-1] - out)) < 1e-10


def test_zero_upstream_zero_gradients(rng):
    cfg = StackConfig(2, 3, 4)
    params = _random_stack(cfg, rng)
    acts = stack_forward(params, cfg, rng.standard_normal((4, 2, 3)))
    dX, grads = stack_backward(params, cfg, acts, np.zeros_like(acts.outputs))
    assert not dX.any()
    assert all(not b.any() for c in grads.layers for b in c.buffers().values())


@pytest.mark.parametrize("kind", ["gru", "lau"])
@pytest.mark.parametrize("residual", [False, True])
def test_backward_matches_finite_differences(kind, residual, rng):
    cfg = StackConfig(2, 3, 3, kind, "alternating", residual)
    params = _random_stack(cfg, rng)
    X = rng.standard_normal((4, 2, 3))
    R = rng.standard_normal((4, 2, 3))

    def f(_):
        return float((R * stack_forward(params, cfg, X).outputs).sum())

    acts = stack_forward(params, cfg, X)
    dX, grads = stack_backward(params, cfg, acts, R)
    for p, g in zip(params.layers, grads.layers):
        for name, buf in p.buffers().items():
            assert rel_error(g.buffers()[name], finite_diff_grad(f, buf)) < 1e-4
    assert rel_error(dX, finite_diff_grad(f, X)) < 1e-4


def test_residual_adds_skip_term(rng):
    plain = StackConfig(2, 3, 3, "lau", residual=False)
    res = StackConfig(2, 3, 3, "lau", residual=True)
    params = _random_stack(plain, rng)
    X = rng.standard_normal((4, 2, 3))
    D = rng.standard_normal((4, 2, 3))
    acts_res = stack_forward(params, res, X)
    # same cell states, output of layer 2 differs by its input
    acts_plain = stack_forward(params, plain, X)
    assert np.array_equal(acts_res.hidden(2), acts_plain.hidden(2))
    assert np.allclose(acts_res.outputs, acts_plain.outputs + acts_plain.hidden(1), atol=1e-15)
    # gradient: layer-2 input grad = non-residual path + upstream
    la_res, la_plain = acts_res.layers[1], acts_plain.layers[1]
    g = params.layers[1].zeros_like()
    d_res = layer_backward(params.layers[1], la_res, D, g)
    d_plain = layer_backward(params.layers[1], la_plain, D, params.layers[1].zeros_like())
    assert np.allclose(d_res, d_plain + D, atol=1e-15)


def test_residual_zero_weight_skip_is_identity(rng):
    cfg = StackConfig(3, 4, 4, "lau", residual=True)
    params = _random_stack(cfg, rng)
    for cell in params.layers[1:]:
        for buf in cell.buffers().values():
            buf[...] = 0.0
    X = rng.standard_normal((5, 1, 4))
    acts = stack_forward(params, cfg, X)
    D = rng.standard_normal(acts.outputs.shape)
    # zero-weight layers have a zero input Jacobian, so only the skip carries gradient
    d_top_in = D
    for la, p in zip(reversed(acts.layers[1:]), reversed(params.layers[1:])):
        d_top_in = layer_backward(p, la, d_top_in, p.zeros_like())
        assert np.max(np.abs(d_top_in - D)) <= 1e-10


def test_input_validation(rng):
    cfg = StackConfig(2, 3, 4)
    params = _random_stack(cfg, rng)
    with pytest.raises(ShapeError):
        stack_forward(params, cfg, np.zeros((3, 2, 5)))
    with pytest.raises(ShapeError):
        stack_forward(params, cfg, np.zeros((0, 2, 3)))
    with pytest.raises(ValueError):
        StackConfig(0, 3, 4)
    out = stack_forward(params, cfg, [np.ones((2, 3)), np.zeros((2, 3))]).outputs
    assert out.shape == (2, 2, 4)
