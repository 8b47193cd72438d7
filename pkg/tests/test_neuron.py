"""IF neuron dynamics, arctan surrogate, and BPTT through the reset path."""

import numpy as np
import pytest

import has8.tensor as tt
from has8.errors import ShapeError
from has8.layers import Conv2d, TimeDistributed
from has8.neuron import IFConfig, IFNeuron, arctan_surrogate, if_run, run_over_time
from has8.tensor import Tensor, backward


def drive(neuron, currents):
    spikes, membranes = [], []
    for c in currents:
        s = neuron.step(Tensor(np.asarray(c, dtype=np.float64)))
        spikes.append(float(s.data))
        membranes.append(float(neuron.u.data))
    return spikes, membranes


def test_constant_current_trace():
    neuron = IFNeuron(IFConfig(v_threshold=1.0))
    spikes, membranes = drive(neuron, [0.6] * 8)
    assert membranes == [0.6, 1.2, 0.6, 1.2, 0.6, 1.2, 0.6, 1.2]
    assert spikes == [0, 1, 0, 1, 0, 1, 0, 1]


def test_zero_current_never_spikes():
    neuron = IFNeuron()
    spikes, membranes = drive(neuron, [0.0] * 8)
    assert spikes == [0.0] * 8
    assert membranes == [0.0] * 8


def test_threshold_inclusive():
    neuron = IFNeuron(IFConfig(v_threshold=1.0))
    spikes, _ = drive(neuron, [1.0])
    assert spikes == [1.0]


def test_surrogate_at_threshold_is_one():
    assert arctan_surrogate(0.0, alpha=2.0) == 1.0


def test_surrogate_even_peaked_decaying():
    xs = np.linspace(0, 3, 50)
    vals = arctan_surrogate(xs, alpha=2.0)
    assert np.allclose(arctan_surrogate(-xs, 2.0), vals)  # even
    assert vals[0] == 1.0 and np.all(np.diff(vals) < 0)  # max at 0, decaying


def test_step_shape_mismatch_rejected():
    neuron = IFNeuron()
    neuron.step(Tensor(np.zeros(3)))
    with pytest.raises(ShapeError):
        neuron.step(Tensor(np.zeros(4)))


def test_hard_reset_zeroes_carryover():
    neuron = IFNeuron(IFConfig(v_threshold=1.0))
    _, membranes = drive(neuron, [1.5, 0.0])
    # spike at t=0 resets: u(1) = (1-1)*1.5 + 0 = 0
    assert membranes == [1.5, 0.0]


def test_reset_restores_initial_state():
    neuron = IFNeuron()
    drive(neuron, [0.9, 0.9])
    neuron.reset()
    assert neuron.u is None and neuron.s_prev is None
    spikes_a, _ = drive(neuron, [0.6, 0.6])
    neuron.reset()
    spikes_b, _ = drive(neuron, [0.6, 0.6])
    assert spikes_a == spikes_b


def test_forgetting_reset_changes_output():
    neuron = IFNeuron()
    first, _ = drive(neuron, [0.6, 0.6])
    second, _ = drive(neuron, [0.6, 0.6])  # state carried over
    assert first != second


def test_run_rejects_wrong_step_count():
    neuron = IFNeuron()
    with pytest.raises(ShapeError):
        neuron.run(Tensor(np.zeros((5, 2))), t_steps=8)


def test_if_over_zero_train_is_zero():
    out = IFNeuron().run(Tensor(np.zeros((8, 3))))
    assert np.array_equal(out.data, np.zeros((8, 3)))


def test_fused_run_equals_stepped_run_bitwise():
    rng = np.random.default_rng(4)
    c0 = rng.normal(0.5, 0.6, (8, 5, 3))
    r = Tensor(rng.normal(size=(8, 5, 3)))
    a = Tensor(c0.copy(), requires_grad=True)
    backward(tt.tsum(IFNeuron().run(a, fused=True) * r))
    b = Tensor(c0.copy(), requires_grad=True)
    backward(tt.tsum(IFNeuron().run(b, fused=False) * r))
    assert np.array_equal(a.grad, b.grad)


def test_run_over_time_stateless_equals_batch_stacking():
    rng = np.random.default_rng(9)
    conv = Conv2d(2, 3, 3, rng, pad=1)
    xs = rng.normal(size=(8, 4, 2, 6, 6))
    looped = run_over_time(conv, Tensor(xs))
    merged = TimeDistributed(conv)(Tensor(xs))
    assert np.allclose(looped.data, merged.data, atol=1e-12)


def test_run_over_time_dispatches_stateful():
    out = run_over_time(IFNeuron(), Tensor(np.full((8, 2), 0.6)), t_steps=8)
    assert out.data[:, 0].tolist() == [0, 1, 0, 1, 0, 1, 0, 1]


def test_spikes_exactly_binary():
    rng = np.random.default_rng(2)
    out = IFNeuron().run(Tensor(rng.normal(0.5, 1.0, (8, 64))))
    assert np.all((out.data == 0.0) | (out.data == 1.0))


def test_bptt_two_step_hand_chain_rule():
    # weight w, current w per step, T=2, loss = sum of spikes
    w_val = 1.5
    w = Tensor(np.asarray(w_val), requires_grad=True)
    neuron = IFNeuron()
    outs = [neuron.step(w * 1.0) for _ in range(2)]
    backward(tt.tsum(tt.stack(outs, axis=0)))

    def surr(u):
        return 2.0 / (2.0 * (1.0 + (np.pi / 2 * 2.0 * (u - 1.0)) ** 2))

    # hand expansion: u1=w, s1=theta(u1-1); u2=(1-s1)u1+w
    u1 = w_val
    s1 = 1.0 if u1 - 1 >= 0 else 0.0
    ds1 = surr(u1) * 1.0
    du2 = (1 - s1) * 1.0 + u1 * (-ds1) + 1.0  # reset path contributes -u1*ds1
    ds2 = surr((1 - s1) * u1 + w_val) * du2
    assert float(w.grad) == pytest.approx(ds1 + ds2, abs=1e-12)


def test_if_config_validation():
    with pytest.raises(ValueError):
        IFConfig(v_threshold=0.0)


def test_if_run_gradient_flows_through_reset_path():
    # two different membrane histories must give different gradients
    c = Tensor(np.array([[1.5], [0.8], [0.8]]), requires_grad=True)
    out = if_run(c, IFConfig())
    backward(tt.tsum(out))
    assert c.grad.shape == (3, 1)
    assert not np.allclose(c.grad[0], c.grad[2])
