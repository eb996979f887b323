# Sanity-check the tape's reverse-mode gradients against central
# differences, then use them to drive Adam on a tiny curve-fitting
# problem: teach a 1-16-16-1 LipSwish network the map x -> sin(3x).

import numpy as np

from volterra_net import (
    AdamState,
    MlpSpec,
    Tape,
    adam_step,
    backward,
    build_param_vector,
    init_uniform,
    mlp_forward,
)


def loss_value(spec, pv, x, y):
    tape = Tape()
    pred = mlp_forward(spec, pv, "net", tape.const(x), tape)
    resid = tape.sub(pred, tape.const(y))
    return tape, tape.scale(tape.sumsq(resid), 1.0 / len(x))


def main():
    rng = np.random.default_rng(3)
    spec = MlpSpec((1, 16, 16, 1))
    pv = build_param_vector({"net": spec})
    init_uniform(pv, rng)

    x = np.linspace(-1.0, 1.0, 128)[:, None]
    y = np.sin(3.0 * x)

    # gradient check on the initial parameters
    tape, loss = loss_value(spec, pv, x, y)
    pv.zero_grad()
    backward(tape, loss, pv)
    analytic = pv.grad.copy()

    theta = pv.values.copy()
    fd = np.empty_like(theta)
    h = 1e-5
    for i in range(len(theta)):
        bump = theta.copy()
        bump[i] = theta[i] + h
        pv.values[:] = bump
        t_up, up = loss_value(spec, pv, x, y)
        bump[i] = theta[i] - h
        pv.values[:] = bump
        t_dn, dn = loss_value(spec, pv, x, y)
        fd[i] = (t_up.val(up) - t_dn.val(dn)) / (2.0 * h)
    pv.values[:] = theta

    denom = np.maximum(np.abs(fd), 1e-8)
    print("gradient check: %d parameters, max rel err %.3e"
          % (len(theta), np.max(np.abs(analytic - fd) / denom)))

    # now train
    state = AdamState.create(pv.size, lr=1e-2)
    for step in range(1, 2001):
        tape, loss = loss_value(spec, pv, x, y)
        pv.zero_grad()
        backward(tape, loss, pv)
        adam_step(state, pv)
        if step % 400 == 0 or step == 1:
            print("step %4d  mse %.6f" % (step, tape.val(loss)))

    tape, _ = loss_value(spec, pv, x, y)
    pred = mlp_forward(spec, pv, "net", tape.const(x), tape)
    err = np.max(np.abs(tape.val(pred) - y))
    print("max pointwise error after training: %.4f" % err)


if __name__ == "__main__":
    main()
