"""Train the neural Volterra model on the stochastic pendulum.

A short run on a small dataset -- enough to watch the loss fall by an
order of magnitude in about a minute.  The full-length protocol lives in
the command line driver:

    volterra-net config.json   with {"command": "train", ...}
"""

import time

import numpy as np

from volterra_net import (
    TrainConfig,
    build_experiment,
    derive_seed,
    evaluate,
    generate_dataset,
    init_model,
    train,
)


def main():
    seed = 1
    spec = build_experiment("pendulum")
    data = generate_dataset(spec, 100, seed=derive_seed(seed, 11), threads=2)
    print("dataset: %d train / %d test paths, %d nodes, d=%d"
          % (len(data.train_idx), len(data.test_idx), len(data.grid.nodes),
             spec.problem.d))

    model = init_model(spec.problem.d, spec.problem.m, 12, 12,
                       seed=derive_seed(seed, 101))
    print("model: %d parameters" % model.params.size)

    cfg = TrainConfig(epochs=120, seed=derive_seed(seed, 202))
    t0 = time.perf_counter()
    report = train(model, data, cfg)
    wall = time.perf_counter() - t0

    ep = np.asarray(report.epoch_train_loss)
    for k in (0, len(ep) // 4, len(ep) // 2, 3 * len(ep) // 4, len(ep) - 1):
        print("epoch %3d  train loss %.4f" % (k + 1, ep[k]))
    print("final: train %.4f, test %.4f  (%.0fs)"
          % (report.final_train_loss, report.final_test_loss, wall))

    tr, te = evaluate(model, data)
    print("re-evaluated on the same split: train %.4f, test %.4f" % (tr, te))


if __name__ == "__main__":
    main()
