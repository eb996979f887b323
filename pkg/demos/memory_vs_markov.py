# The path-dependent benchmark carries its history through a sign-
# switching convolution kernel, so a model whose state is only the
# current value hits a floor the convolution-based model does not.
# Train both on the same data and budget and compare.

import time

from volterra_net import (
    TrainConfig,
    build_experiment,
    derive_seed,
    generate_dataset,
    init_model,
    init_sde_model,
    train,
)


def run(kind, data, spec, seed, epochs):
    mseed = derive_seed(seed, 101)
    if kind == "nsve":
        model = init_model(spec.problem.d, spec.problem.m, 12, 12, seed=mseed)
    else:
        model = init_sde_model(spec.problem.d, spec.problem.m, 12, 12, seed=mseed)
    cfg = TrainConfig(epochs=epochs, seed=derive_seed(seed, 202))
    t0 = time.perf_counter()
    report = train(model, data, cfg)
    print("%-5s  train %.4f  test %.4f  (%.0fs)"
          % (kind, report.final_train_loss, report.final_test_loss,
             time.perf_counter() - t0))
    return report.final_test_loss


def main():
    seed = 1
    epochs = 600
    spec = build_experiment("path_dependent")
    data = generate_dataset(spec, 200, seed=derive_seed(seed, 11), threads=2)
    print("path_dependent, %d paths, identical %d-epoch budgets" % (200, epochs))

    sve = run("nsve", data, spec, seed, epochs)
    sde = run("nsde", data, spec, seed, epochs)
    print("test-loss ratio markov/memory: %.2fx" % (sde / sve))


if __name__ == "__main__":
    main()
