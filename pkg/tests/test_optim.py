"""
Adam updates and the step learning-rate schedule.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.exceptions import NonFiniteError, ShapeError
from src.tensor import Tensor
from src.training.optim import AdamState, adam_step, lr_at
from src.training.trainer import TrainConfig


def named(values):
    return [(name, Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)) for name, v in values.items()]


def test_first_step_moves_by_lr_times_sign():
    params = named({"w": [1.0, -2.0, 3.0], "b": [0.5]})
    state = AdamState.create(params)
    grads = {"w": np.array([0.3, -4.0, 1e-3]), "b": np.array([-2.0])}
    updated, new_state = adam_step(params, grads, state, lr=0.01)
    assert_allclose(updated["w"].data, [0.99, -1.99, 2.99], atol=1e-6)
    assert_allclose(updated["b"].data, [0.51], atol=1e-6)
    assert new_state.step == 1


def test_step_does_not_modify_inputs():
    params = named({"w": [1.0, 2.0]})
    state = AdamState.create(params)
    adam_step(params, {"w": np.array([1.0, 1.0])}, state, lr=0.1)
    assert state.step == 0
    assert_array_equal(state.m["w"], [0.0, 0.0])
    assert_array_equal(params[0][1].data, [1.0, 2.0])


def test_moments_follow_the_recurrence():
    params = named({"w": [0.0]})
    state = AdamState.create(params)
    _, state = adam_step(params, {"w": np.array([2.0])}, state, lr=0.1)
    _, state = adam_step(params, {"w": np.array([-1.0])}, state, lr=0.1)
    assert state.m["w"][0] == pytest.approx(0.9 * 0.2 + 0.1 * -1.0)
    assert state.v["w"][0] == pytest.approx(0.999 * 0.004 + 0.001 * 1.0)
    assert state.step == 2


def test_converges_on_a_quadratic():
    target = np.array([1.5, -0.5, 2.0])
    params = named({"x": [0.0, 0.0, 0.0]})
    state = AdamState.create(params)
    for _ in range(2000):
        x = params[0][1]
        updated, state = adam_step(params, {"x": x.data - target}, state, lr=0.01)
        params = list(updated.items())
    assert_allclose(params[0][1].data, target, atol=1e-2)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_gradient_raises(bad):
    params = named({"w": [1.0, 2.0]})
    with pytest.raises(NonFiniteError, match="'w'"):
        adam_step(params, {"w": np.array([0.0, bad])}, AdamState.create(params), lr=0.1)


def test_gradient_shape_must_match():
    params = named({"w": [1.0, 2.0]})
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(3)}, AdamState.create(params), lr=0.1)


def test_update_keeps_parameter_dtype():
    params = [("w", Tensor(np.ones(4, dtype=np.float32)))]
    updated, state = adam_step(params, {"w": np.ones(4)}, AdamState.create(params), lr=0.1)
    assert updated["w"].dtype == np.float32
    assert state.m["w"].dtype == np.float32


@pytest.mark.parametrize("epoch,expected", [(0, 1e-4), (999, 1e-4), (1000, 1e-5), (1999, 1e-5),
                                            (2000, 1e-6), (2999, 1e-6)])
def test_published_schedule(epoch, expected):
    train_config = TrainConfig.from_profile("paper")
    assert lr_at(epoch, train_config) == pytest.approx(expected)


def test_schedule_for_short_runs():
    train_config = TrainConfig(lr0=1.0, decay_rate=0.5, epochs=3)
    assert [lr_at(e, train_config) for e in range(3)] == [1.0, 0.5, 0.25]
    assert lr_at(10, train_config) == 0.25
    with pytest.raises(ValueError):
        lr_at(-1, train_config)


def test_zero_learning_rate_leaves_parameters_unchanged():
    params = named({"w": [0.25, -1.5, 3.0], "b": [1e-3]})
    state = AdamState.create(params)
    for grad in (np.array([0.3, -4.0, 1e-3]), np.array([-2.0, 0.5, 7.0])):
        updated, state = adam_step(params, {"w": grad, "b": grad[:1]}, state, lr=0.0)
        for name, tensor in params:
            assert_array_equal(updated[name].data, tensor.data)
        params = list(updated.items())
    assert state.step == 2
    assert state.m["w"].any()
