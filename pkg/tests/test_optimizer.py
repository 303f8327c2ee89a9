import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deeplau.numerics import NonFiniteError
from deeplau.optimizer import (AdadeltaState, ClipSchedule, adadelta_step, clip_global,
                               global_norm, maybe_halve_tau, stalled)


def test_clip_examples():
    g = {"a": np.array([[2.0, 0.0]])}
    _, scale = clip_global(g, 1.0)
    assert scale == 0.5 and np.array_equal(g["a"], [[1.0, 0.0]])
    g = {"a": np.array([[0.3, 0.4]])}
    _, scale = clip_global(g, 1.0)
    assert scale == 1.0 and np.array_equal(g["a"], [[0.3, 0.4]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10.0))
def test_clip_postcondition(seed, tau):
    r = np.random.default_rng(seed)
    g = {k: r.standard_normal((3, 4)) * r.uniform(0.01, 3) for k in "abc"}
    before = {k: v.copy() for k, v in g.items()}
    norm = global_norm(g)
    clip_global(g, tau)
    assert abs(global_norm(g) - min(norm, tau)) < 1e-9
    for k in g:
        assert np.all(np.abs(g[k]) <= np.abs(before[k]))


def test_clip_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        clip_global({"a": np.array([[np.inf]])}, 1.0)


def test_adadelta_first_step_hand_value():
    p = {"w": np.array([[0.0]])}
    st_ = AdadeltaState.zeros_for(p)
    adadelta_step(p, {"w": np.array([[1.0]])}, st_)
    expected = -math.sqrt(1e-6 / (0.05 + 1e-6))
    assert abs(p["w"][0, 0] - expected) < 1e-15
    assert abs(expected + 4.4721e-3) < 1e-7
    assert abs(st_.eg2["w"][0, 0] - 0.05) < 1e-15


def test_adadelta_zero_gradient_is_noop():
    p = {"w": np.array([[1.0, -2.0]])}
    st_ = AdadeltaState.zeros_for(p)
    adadelta_step(p, {"w": np.zeros((1, 2))}, st_)
    assert np.array_equal(p["w"], [[1.0, -2.0]])
    assert not st_.eg2["w"].any() and not st_.edx2["w"].any()


def test_adadelta_step_opposes_gradient(rng):
    w0 = rng.standard_normal((4, 4))
    p = {"w": w0.copy()}
    g = rng.standard_normal((4, 4))
    adadelta_step(p, {"w": g}, AdadeltaState.zeros_for(p))
    assert np.array_equal(np.sign(p["w"] - w0), -np.sign(g))


def test_adadelta_quadratic_descends_every_step(rng):
    p = {"w": rng.standard_normal((5, 5))}
    st_ = AdadeltaState.zeros_for(p)
    f = 0.5 * float((p["w"] ** 2).sum())
    for _ in range(200):
        adadelta_step(p, {"w": p["w"].copy()}, st_)
        f_new = 0.5 * float((p["w"] ** 2).sum())
        assert f_new < f
        f = f_new


def test_adadelta_bit_identical_runs(rng):
    w0 = rng.standard_normal((3, 3))
    grads = [rng.standard_normal((3, 3)) for _ in range(20)]
    out = []
    for _ in range(2):
        p = {"w": w0.copy()}
        st_ = AdadeltaState.zeros_for(p)
        for g in grads:
            adadelta_step(p, {"w": g}, st_)
        out.append(p["w"].tobytes())
    assert out[0] == out[1]


def test_halving_examples():
    s = ClipSchedule()
    maybe_halve_tau(s, [10.0, 15.0, 20.0])
    assert s.tau == 1.0
    maybe_halve_tau(s, [20.0, 20.1, 20.05])
    assert s.tau == 0.5 and s.halved_at == [3]
    floor = ClipSchedule(tau=0.125)
    maybe_halve_tau(floor, [1.0, 1.0, 1.0, 1.0])
    assert floor.tau == 0.125


def test_halving_counts_only_evaluations_since_last_halving():
    s = ClipSchedule()
    hist = [20.0, 20.1, 20.05]
    maybe_halve_tau(s, hist)
    assert s.tau == 0.5
    hist.append(20.0)
    maybe_halve_tau(s, hist)
    assert s.tau == 0.5  # one fresh evaluation is not a full window
    hist += [20.0, 20.0]
    maybe_halve_tau(s, hist)
    assert s.tau == 0.25
    for _ in range(20):
        hist.append(20.0)
        maybe_halve_tau(s, hist)
    assert s.tau == 0.125


def test_stalled_reference_is_best_before_window():
    assert stalled([30.0, 10.0, 12.0, 14.0], 0.2, 3)
    assert not stalled([10.0, 10.0, 10.5, 10.1], 0.2, 3)
    assert not stalled([1.0, 1.0], 0.2, 3)
