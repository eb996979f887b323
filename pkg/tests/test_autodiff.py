# Tape reverse-mode differentiation, MLP forward, Adam, and parameter storage.

import json

import numpy as np
import pytest

import _oracles as orc
from volterra_net import (
    AdamState,
    MlpSpec,
    NonScalarLoss,
    ShapeMismatch,
    Tape,
    ValidationError,
    adam_step,
    backward,
    build_param_vector,
    init_uniform,
    lipswish,
    load_params,
    mlp_forward,
    save_params,
    sigmoid,
)


# ---------------------------------------------------------------- activation

def test_lipswish_values():
    assert lipswish(0.0) == 0.0
    assert abs(sigmoid(1.0) - orc.SIGMOID_1) < 1e-15
    assert abs(lipswish(1.0) - orc.LIPSWISH_1) < 1e-15


def test_sigmoid_stable_in_tails():
    assert sigmoid(-800.0) == 0.0
    assert sigmoid(800.0) == 1.0
    assert np.isfinite(lipswish(-800.0))


def test_lipswish_is_one_lipschitz():
    z = np.linspace(-50.0, 50.0, 20001)
    vals = lipswish(z)
    diffs = np.abs(np.diff(vals))
    steps = np.abs(np.diff(z))
    assert np.all(diffs <= steps * (1.0 + 1e-9))
    # the closed-form derivative stays below 1 as well
    s = 1.0 / (1.0 + np.exp(-z))
    deriv = 0.909 * (s + z * s * (1.0 - s))
    assert np.max(np.abs(deriv)) <= 1.0


# ---------------------------------------------------------------- mlp forward

def _random_params(widths, seed, name="net"):
    pv = build_param_vector({name: MlpSpec(widths)})
    init_uniform(pv, np.random.default_rng(seed))
    return pv


def test_mlp_zero_params_zero_output():
    pv = build_param_vector({"net": MlpSpec((2, 3, 1))})
    tape = Tape()
    out = mlp_forward(MlpSpec((2, 3, 1)), pv, "net", tape.const(np.array([[1.0, -2.0]])), tape)
    np.testing.assert_array_equal(tape.val(out), [[0.0]])


def test_mlp_single_linear_layer():
    pv = build_param_vector({"net": MlpSpec((2, 2))})
    off, shape = pv.slices["net/0/W"]
    pv.values[off:off + 4] = np.eye(2).ravel()
    off_b, _ = pv.slices["net/0/b"]
    pv.values[off_b:off_b + 2] = [0.5, -0.5]
    tape = Tape()
    out = mlp_forward(MlpSpec((2, 2)), pv, "net", tape.const(np.array([[3.0, 4.0]])), tape)
    np.testing.assert_allclose(tape.val(out), [[3.5, 3.5]])


def test_mlp_matches_reference_forward():
    widths = (2, 3, 1)
    pv = _random_params(widths, seed=0)
    x = np.array([[0.3, -1.2], [2.0, 0.1]])
    tape = Tape()
    out = mlp_forward(MlpSpec(widths), pv, "net", tape.const(x), tape)
    ref = orc.ref_mlp(pv, "net", widths, x)
    np.testing.assert_allclose(tape.val(out), ref, atol=1e-12)


def test_mlp_shape_mismatch():
    pv = _random_params((2, 3, 1), seed=0)
    tape = Tape()
    with pytest.raises(ShapeMismatch):
        mlp_forward(MlpSpec((2, 3, 1)), pv, "net", tape.const(np.ones((1, 5))), tape)


def test_init_uniform_respects_fan_in_bounds():
    widths = (7, 11, 3)
    pv = _random_params(widths, seed=5)
    for key, (off, shape) in pv.slices.items():
        block = pv.values[off:off + int(np.prod(shape))]
        bound = 1.0 / np.sqrt(pv.fan_in[key])
        assert np.max(np.abs(block)) <= bound
        assert np.any(block != 0.0)


# ---------------------------------------------------------------- backward

def test_backward_quadratic():
    pv = build_param_vector({"net": MlpSpec((3, 3))})
    theta = np.arange(1.0, 13.0)
    pv.values[:] = theta
    tape = Tape()
    loss = tape.sumsq(tape.param(pv, "net/0/W"))
    loss = tape.add(loss, tape.sumsq(tape.param(pv, "net/0/b")))
    pv.zero_grad()
    backward(tape, loss, pv)
    np.testing.assert_allclose(pv.grad, 2.0 * theta)


def test_backward_constant_loss():
    pv = _random_params((2, 2), seed=1)
    tape = Tape()
    loss = tape.sumsq(tape.const(np.array([3.0])))
    pv.zero_grad()
    backward(tape, loss, pv)
    np.testing.assert_array_equal(pv.grad, np.zeros_like(pv.grad))


def test_backward_rejects_nonscalar():
    pv = _random_params((2, 3), seed=2)
    tape = Tape()
    out = mlp_forward(MlpSpec((2, 3)), pv, "net", tape.const(np.ones((1, 2))), tape)
    with pytest.raises(NonScalarLoss):
        backward(tape, out, pv)


def _fd_check(widths, seed, h=1e-5):
    pv = _random_params(widths, seed)
    rng = np.random.default_rng(seed + 1000)
    x = rng.normal(size=(1, widths[0]))
    target = rng.normal(size=(1, widths[-1]))

    def loss_of(theta):
        pv2 = build_param_vector({"net": MlpSpec(widths)})
        pv2.values[:] = theta
        tape = Tape()
        out = mlp_forward(MlpSpec(widths), pv2, "net", tape.const(x), tape)
        diff = tape.sub(out, tape.const(target))
        return tape.val(tape.sumsq(diff))

    tape = Tape()
    out = mlp_forward(MlpSpec(widths), pv, "net", tape.const(x), tape)
    diff = tape.sub(out, tape.const(target))
    loss = tape.sumsq(diff)
    pv.zero_grad()
    backward(tape, loss, pv)
    fd = orc.central_diff_grad(loss_of, pv.values.copy(), h=h)
    return orc.max_rel_err(pv.grad, fd)


def test_mlp_gradients_match_finite_differences():
    shapes = [(2, 3, 1), (1, 4, 4, 1), (3, 5, 2), (4, 4, 4, 4, 2)]
    worst = max(_fd_check(w, seed) for seed, w in enumerate(shapes))
    assert worst < 1e-4


def test_tape_replay_bit_determinism():
    widths = (3, 8, 8, 2)
    grads = []
    for _ in range(2):
        pv = _random_params(widths, seed=7)
        x = np.linspace(-1.0, 1.0, 3)[None, :]
        tape = Tape()
        out = mlp_forward(MlpSpec(widths), pv, "net", tape.const(x), tape)
        loss = tape.sumsq(out)
        pv.zero_grad()
        backward(tape, loss, pv)
        grads.append(pv.grad.copy())
    np.testing.assert_array_equal(grads[0], grads[1])


# ---------------------------------------------------------------- adam

def test_adam_zero_gradient_no_motion():
    pv = _random_params((2, 2), seed=3)
    before = pv.values.copy()
    state = AdamState.create(pv.values.size, lr=0.01)
    pv.zero_grad()
    adam_step(state, pv)
    np.testing.assert_array_equal(pv.values, before)
    assert state.t == 1


def test_adam_first_step_closed_form():
    pv = build_param_vector({"net": MlpSpec((2, 2))})
    pv.values[:] = 1.0
    pv.zero_grad()
    g = np.array([1.0, -2.0, 0.5, 3.0, 1e-4, 7.0])
    pv.grad[:] = g
    lr = 0.01
    state = AdamState.create(6, lr=lr)
    adam_step(state, pv)
    # bias-corrected first step: lr * g / (|g| + eps)
    expect = 1.0 - lr * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(pv.values, expect, rtol=1e-12)


def test_adam_two_steps_monotone():
    pv = build_param_vector({"net": MlpSpec((2, 2))})
    pv.values[:] = 0.0
    g = np.array([1.0, -1.0, 2.0, -2.0, 0.5, -0.5])
    state = AdamState.create(6, lr=0.01)
    prev = pv.values.copy()
    for _ in range(2):
        pv.zero_grad()
        pv.grad[:] = g
        adam_step(state, pv)
        step = pv.values - prev
        assert np.all(np.sign(step) == -np.sign(g))
        prev = pv.values.copy()


def test_adam_scale_invariance_of_first_step():
    # multiplying the gradient by 10 changes the first step by < 1%
    g = np.array([0.3, -1.5, 2.0])

    def first_step(grad):
        pv = build_param_vector({"net": MlpSpec((2, 1))})
        pv.values[:] = 0.0
        pv.zero_grad()
        pv.grad[:3] = grad
        state = AdamState.create(pv.values.size, lr=0.01)
        adam_step(state, pv)
        return pv.values[:3].copy()

    a = first_step(g)
    b = first_step(10.0 * g)
    assert np.max(np.abs(a - b) / np.abs(a)) < 0.01


# ---------------------------------------------------------------- storage

def test_param_roundtrip(tmp_path):
    pv = _random_params((3, 5, 2), seed=11)
    base = str(tmp_path / "params.bin")
    save_params(pv, base)
    loaded = load_params(base)
    np.testing.assert_array_equal(loaded.values, pv.values)
    assert loaded.slices == pv.slices
    assert loaded.fan_in == pv.fan_in
    with open(base + ".json") as fh:
        sidecar = json.load(fh)
    assert set(sidecar["slices"]) == set(pv.slices)


def test_param_load_rejects_bad_magic(tmp_path):
    pv = _random_params((2, 2), seed=1)
    base = str(tmp_path / "params.bin")
    save_params(pv, base)
    with open(base, "r+b") as fh:
        fh.write(b"XXXXXXXX")
    with pytest.raises(ValidationError):
        load_params(base)
