import numpy as np
import pytest

from trajvrnn.autodiff import Parameter
from trajvrnn.errors import ConfigError
from trajvrnn.optim import Adam


def test_first_step_closed_form():
    # g=1 everywhere: m_hat = v_hat = 1, so the step is lr / (1 + eps)
    p = Parameter("p", [1.0, 1.0])
    opt = Adam([p], lr=0.001)
    p.grad[...] = 1.0
    opt.step()
    expected = 1.0 - 0.001 / (1.0 + 1e-8)
    np.testing.assert_allclose(p.data, [expected, expected], rtol=0, atol=1e-15)
    assert abs(1.0 - p.data[0] - 0.001) < 1e-6


def test_zero_gradient_is_identity():
    p = Parameter("p", [[0.3, -0.7]])
    before = p.data.copy()
    opt = Adam([p])
    for _ in range(5):
        opt.zero_grad()
        opt.step()
    assert np.array_equal(p.data, before)


def test_lr_decay_every_20_epochs():
    opt = Adam([Parameter("p", [0.0])], lr=0.001)
    for epoch in range(1, 21):
        opt.epoch_tick(epoch)
    assert opt.lr == 0.001 * 0.9
    for epoch in range(21, 41):
        opt.epoch_tick(epoch)
    assert opt.lr == 0.001 * 0.9 * 0.9


def test_non_boundary_epochs_keep_lr():
    opt = Adam([Parameter("p", [0.0])], lr=0.001)
    for epoch in (1, 5, 19):
        opt.epoch_tick(epoch)
    assert opt.lr == 0.001


def test_missing_gradient_rejected():
    p = Parameter("p", [1.0])
    opt = Adam([p])
    p.grad = None
    with pytest.raises(ConfigError):
        opt.step()


def test_state_roundtrip():
    rng = np.random.default_rng(3)
    p = Parameter("p", rng.normal(size=(2, 2)))
    opt = Adam([p], lr=0.01)
    for _ in range(3):
        p.grad = rng.normal(size=(2, 2))
        opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays().items()}

    opt2 = Adam([p], lr=0.01)
    opt2.load_state(arrays, step_count=opt.step_count, lr=opt.lr)
    assert opt2.step_count == opt.step_count
    assert np.array_equal(opt2.m["p"], opt.m["p"])
    assert np.array_equal(opt2.v["p"], opt.v["p"])
