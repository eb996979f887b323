"""Configuration-driven command line: volterra-net <config.json> [--key=value ...].

Commands (the ``command`` key of the config): generate, train, eval,
stability, simulate.  Every ``--key=value`` flag overrides the matching
config key; values are parsed as JSON scalars with plain-string
fallback.  ``--threads N`` caps worker threads (1 guarantees
bit-reproducible runs) and ``--force`` allows writing into an existing
output directory.  The output root is $VOLTERRA_NET_OUT or ./runs.

The master ``seed`` never feeds a generator directly; generate, train,
and eval split it into independent derived streams (dataset 11, model
init 101, shuffle order 202), so the same seed always names the same
dataset across commands.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import json
import os
import sys

from .baselines import init_deeponet, init_sde_model
from .errors import (
    ConfigParseError,
    NumericalError,
    OutputExists,
    ValidationError,
    VolterraNetError,
)
from .experiments import (
    DEFAULT_DT,
    DEFAULT_T,
    EXPERIMENT_NAMES,
    TrainConfig,
    build_experiment,
    evaluate,
    generate_dataset,
    train,
    write_report,
)
from .model_io import load_model, save_model
from .nsve import init_model
from .paths import (
    derive_seed,
    make_uniform_grid,
    sample_brownian,
    save_brownian,
    save_sample_path,
    rng_from,
)
from .solver import euler_maruyama
from .stability import CHANNELS, make_default_plan, stability_scan, write_stability

COMMANDS = ("generate", "train", "eval", "stability", "simulate")

MODEL_KINDS = ("nsve", "nsde", "deeponet")

#: Every key a config file or flag may set.
KNOWN_KEYS = (
    "command", "experiment", "model", "n", "seed",
    "epochs", "batch_size", "lr0", "decay",
    "T", "dt", "d_h", "d_K", "p_basis",
    "out", "dump", "model_file",
    "channel", "p", "n_mc", "eps", "delta",
    "threads", "force",
)

_REQUIRED = {
    "generate": ("experiment", "n", "seed"),
    "train": ("experiment", "model", "n", "seed"),
    "eval": ("experiment", "model_file", "n", "seed"),
    "stability": ("channel", "seed"),
    "simulate": ("experiment", "n", "seed"),
}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(argv):
    """Read the config file and apply flag overrides; returns a plain dict."""
    if not argv or argv[0].startswith("--"):
        raise ConfigParseError("usage: volterra-net <config.json> [--key=value ...]")
    path = argv[0]
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigParseError("config %s is not valid JSON: %s" % (path, exc)) from exc
    if not isinstance(cfg, dict):
        raise ConfigParseError("config %s must hold a JSON object" % path)

    args = list(argv[1:])
    while args:
        arg = args.pop(0)
        if arg == "--force":
            cfg["force"] = True
        elif arg == "--threads":
            if not args:
                raise ConfigParseError("--threads needs a value")
            cfg["threads"] = _parse_value(args.pop(0))
        elif arg.startswith("--") and "=" in arg:
            key, _, value = arg[2:].partition("=")
            cfg[key] = _parse_value(value)
        else:
            raise ConfigParseError("cannot parse argument %r" % arg)

    for key in cfg:
        if key not in KNOWN_KEYS:
            raise ConfigParseError("unknown config key %r" % key)

    command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigParseError(
            "command must be one of %s, got %r" % (", ".join(COMMANDS), command)
        )
    for key in _REQUIRED[command]:
        if key not in cfg:
            raise ConfigParseError("command %r requires config key %r" % (command, key))
    return cfg


def _outdir(cfg):
    root = os.environ.get("VOLTERRA_NET_OUT", "runs")
    name = cfg.get("out")
    if name is None:
        parts = [cfg["command"]]
        for key in ("experiment", "model", "channel"):
            if cfg.get(key):
                parts.append(str(cfg[key]))
        for key in ("n", "seed"):
            if cfg.get(key) is not None:
                parts.append("%s%s" % (key, cfg[key]))
        name = "_".join(parts)
    path = name if os.path.isabs(name) else os.path.join(root, name)
    if os.path.exists(path) and not cfg.get("force"):
        raise OutputExists(
            "output directory %s exists; pass --force to overwrite" % path
        )
    os.makedirs(path, exist_ok=True)
    return path


def _echo_config(cfg, outdir):
    with open(os.path.join(outdir, "run_config.json"), "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _grid_of(cfg):
    return make_uniform_grid(cfg.get("T", DEFAULT_T), cfg.get("dt", DEFAULT_DT))


def _dataset_for(cfg, spec, grid, model_kind=None):
    ic = None
    if model_kind == "deeponet":
        if spec.ic_operator is None:
            raise ValidationError(
                "experiment %r has no deterministic start for the operator net"
                % spec.name
            )
        ic = spec.ic_operator
    return generate_dataset(
        spec, int(cfg["n"]), derive_seed(int(cfg["seed"]), 11), grid=grid, ic=ic,
        threads=int(cfg.get("threads", 1)),
    )


def _build_model(cfg, spec, grid, kind):
    if kind not in MODEL_KINDS:
        raise ValidationError(
            "model must be one of %s, got %r" % (", ".join(MODEL_KINDS), kind)
        )
    if kind not in spec.model_kinds:
        raise ValidationError(
            "experiment %r supports models %s, not %r"
            % (spec.name, ", ".join(spec.model_kinds), kind)
        )
    mseed = derive_seed(int(cfg["seed"]), 101)
    d_h = int(cfg.get("d_h", 12))
    d_K = int(cfg.get("d_K", 12))
    prob = spec.problem
    if kind == "nsve":
        return init_model(prob.d, prob.m, d_h, d_K, mseed)
    if kind == "nsde":
        return init_sde_model(prob.d, prob.m, d_h, d_K, mseed)
    return init_deeponet(grid, prob.m, mseed, p=int(cfg.get("p_basis", 64)))


def _cmd_generate(cfg, outdir):
    spec = build_experiment(cfg["experiment"], T=cfg.get("T", DEFAULT_T))
    grid = _grid_of(cfg)
    data = _dataset_for(cfg, spec, grid)
    summary = {
        "experiment": spec.name,
        "n": len(data),
        "train_size": int(len(data.train_idx)),
        "test_size": int(len(data.test_idx)),
        "d": data.d,
        "m": data.m,
        "T": grid.T,
        "dt": grid.dt,
        "seed": int(cfg["seed"]),
        "ic": spec.ic.describe(),
        "ic_convention": data.ic_convention,
        "xi_mean": [float(v) for v in data.xi.mean(axis=0)],
        "path_mean_final": [float(v) for v in data.values[:, -1, :].mean(axis=0)],
    }
    with open(os.path.join(outdir, "dataset.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _dump_paths(cfg, data, outdir)


def _dump_paths(cfg, data, outdir):
    dump = cfg.get("dump", 0)
    idx = range(int(dump)) if not isinstance(dump, list) else [int(i) for i in dump]
    for i in idx:
        _, w, x = data.record(i)
        save_sample_path(x, os.path.join(outdir, "path_%03d.csv" % i))
        save_brownian(w, os.path.join(outdir, "noise_%03d.csv" % i))


def _cmd_train(cfg, outdir):
    spec = build_experiment(cfg["experiment"], T=cfg.get("T", DEFAULT_T))
    grid = _grid_of(cfg)
    kind = cfg["model"]
    model = _build_model(cfg, spec, grid, kind)
    data = _dataset_for(cfg, spec, grid, model_kind=kind)
    tc = TrainConfig(
        epochs=cfg.get("epochs"),
        batch_size=int(cfg.get("batch_size", 32)),
        lr0=cfg.get("lr0"),
        decay=float(cfg.get("decay", 0.8)),
        seed=derive_seed(int(cfg["seed"]), 202),
    )
    report = train(model, data, tc)
    report.experiment = spec.name
    write_report(report, outdir)
    save_model(model, os.path.join(outdir, "model"))
    return report


def _model_base(path):
    """``model_file`` may name the saved base or either of its files."""
    for suffix in (".bin.json", ".json", ".bin"):
        if path.endswith(suffix):
            return path[: -len(suffix)]
    return path


def _cmd_eval(cfg, outdir):
    spec = build_experiment(cfg["experiment"], T=cfg.get("T", DEFAULT_T))
    grid = _grid_of(cfg)
    model = load_model(_model_base(cfg["model_file"]))
    data = _dataset_for(cfg, spec, grid, model_kind=model.kind)
    train_loss, test_loss = evaluate(model, data, threads=int(cfg.get("threads", 1)))
    payload = {
        "config": {k: cfg[k] for k in sorted(cfg)},
        "metrics": {"train_loss": train_loss, "test_loss": test_loss},
    }
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _cmd_stability(cfg, outdir):
    channel = cfg["channel"]
    if channel not in CHANNELS:
        raise ValidationError(
            "channel must be one of %s, got %r" % (", ".join(CHANNELS), channel)
        )
    plan = make_default_plan(
        channel,
        p=float(cfg.get("p", 2.0)),
        n_mc=int(cfg.get("n_mc", 10000)),
        eps=cfg.get("eps"),
        grid=_grid_of(cfg),
        delta=float(cfg.get("delta", 0.05)),
    )
    result = stability_scan(plan, int(cfg["seed"]))
    write_stability(result, outdir)
    return result


def _cmd_simulate(cfg, outdir):
    spec = build_experiment(cfg["experiment"], T=cfg.get("T", DEFAULT_T))
    grid = _grid_of(cfg)
    seed = int(cfg["seed"])
    prob = spec.problem
    for i in range(int(cfg["n"])):
        xi = spec.ic.draw(rng_from(seed, i, 0), prob.d)
        w = sample_brownian(grid, prob.m, derive_seed(seed, i, 1))
        x = euler_maruyama(prob, xi, w)
        save_sample_path(x, os.path.join(outdir, "path_%03d.csv" % i))


def run(cfg):
    """Execute a parsed config; returns the output directory."""
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    command = cfg["command"]
    if command == "generate":
        _cmd_generate(cfg, outdir)
    elif command == "train":
        _cmd_train(cfg, outdir)
    elif command == "eval":
        _cmd_eval(cfg, outdir)
    elif command == "stability":
        _cmd_stability(cfg, outdir)
    else:
        _cmd_simulate(cfg, outdir)
    return outdir


def main(argv=None):
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = parse_config(argv)
        outdir = run(cfg)
    except (OutputExists, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 4
    except NumericalError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except (ConfigParseError, ValidationError, VolterraNetError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    print(outdir)
    return 0


def entry():  # console-script hook
    raise SystemExit(main())
