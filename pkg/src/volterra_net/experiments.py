"""Benchmark equations, dataset generation, training, and loss reporting.

Five benchmark equations are registered by name.  Each provides the
ground-truth problem for the solver, an initial-condition law, and the
set of model kinds it is trained with.  Training optimizes the mean
relative L2 path loss for the recurrent models and mean squared error
for the operator net (whose report also carries the relative metric so
tables are comparable).
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, Tape, adam_step, backward
from .errors import (
    DimMismatch,
    DivergedLoss,
    NonFinitePath,
    ValidationError,
    ZeroTargetNorm,
)
from .paths import (
    PathDataset,
    ZERO_NORM_FLOOR,
    derive_seed,
    make_uniform_grid,
    relative_l2_batch,
    rng_from,
    sample_brownian,
)
from .solver import (
    AffineReversion,
    ExponentialKernel,
    IdentityCoeff,
    LinearLagKernel,
    PiecewiseSignKernel,
    PowerGammaKernel,
    SqrtAbsCoeff,
    SveProblem,
    euler_maruyama,
    exp_decay_g,
    unit_g,
)

DEFAULT_T = 5.0
DEFAULT_DT = 0.1


# ---------------------------------------------------------------------------
# Initial-condition laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalIc:
    """xi ~ N(mean, std^2) i.i.d. per component; the second parameter is a
    standard deviation (recorded as ic_convention \"std\" in datasets)."""

    mean: float
    std: float

    def draw(self, rng, d):
        return self.mean + self.std * rng.standard_normal(d)

    def describe(self):
        return {"law": "normal", "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class DeterministicIc:
    value: tuple

    def draw(self, rng, d):
        v = np.asarray(self.value, dtype=np.float64)
        if v.shape != (d,):
            raise DimMismatch("deterministic xi has shape %s, need (%d,)" % (v.shape, d))
        return v.copy()

    def describe(self):
        return {"law": "deterministic", "value": list(self.value)}


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark: its equation, initial-condition law, and which model
    kinds it is trained with.  ``ic_operator`` is the deterministic start
    used when training the operator net (which never sees xi)."""

    name: str
    problem: SveProblem
    ic: object
    model_kinds: tuple
    ic_operator: object = None


def build_experiment(name, T=DEFAULT_T):
    """Construct a benchmark by name: pendulum, ou1d, ou2d, rough_heston,
    or path_dependent.  ``T`` only moves the sign-switch lag T/4 of the
    path-dependent equation; the grid is chosen at generation time."""
    if name == "pendulum":
        return ExperimentSpec(
            name=name,
            problem=SveProblem(
                d=1, m=1, g=unit_g,
                k_mu=LinearLagKernel(), k_sigma=LinearLagKernel(),
                mu=IdentityCoeff(), sigma=IdentityCoeff(),
            ),
            ic=NormalIc(2.0, 0.2),
            model_kinds=("nsve", "nsde", "deeponet"),
            ic_operator=DeterministicIc((2.0,)),
        )
    if name == "ou1d":
        return ExperimentSpec(
            name=name,
            problem=SveProblem(
                d=1, m=1, g=exp_decay_g,
                k_mu=ExponentialKernel(1.0), k_sigma=ExponentialKernel(1.0),
                mu=IdentityCoeff(), sigma=SqrtAbsCoeff(),
            ),
            ic=NormalIc(2.0, 0.2),
            model_kinds=("nsve", "nsde", "deeponet"),
            ic_operator=DeterministicIc((2.0,)),
        )
    if name == "ou2d":
        return ExperimentSpec(
            name=name,
            problem=SveProblem(
                d=2, m=2, g=exp_decay_g,
                k_mu=ExponentialKernel(1.0), k_sigma=ExponentialKernel(1.0),
                mu=IdentityCoeff(), sigma=SqrtAbsCoeff(),
            ),
            ic=DeterministicIc((2.0, 2.0)),
            model_kinds=("nsve",),
        )
    if name == "rough_heston":
        return ExperimentSpec(
            name=name,
            problem=SveProblem(
                d=1, m=1, g=unit_g,
                k_mu=PowerGammaKernel(0.4), k_sigma=PowerGammaKernel(0.4),
                mu=AffineReversion(2.0), sigma=SqrtAbsCoeff(),
            ),
            ic=NormalIc(2.0, 0.2),
            model_kinds=("nsve", "nsde", "deeponet"),
            ic_operator=DeterministicIc((2.0,)),
        )
    if name == "path_dependent":
        return ExperimentSpec(
            name=name,
            problem=SveProblem(
                d=1, m=1, g=unit_g,
                k_mu=PiecewiseSignKernel(T / 4.0), k_sigma=PiecewiseSignKernel(T / 4.0),
                mu=AffineReversion(2.0), sigma=SqrtAbsCoeff(),
            ),
            ic=NormalIc(5.0, 0.5),
            model_kinds=("nsve", "nsde"),
        )
    raise ValidationError(
        "unknown experiment %r; choose one of %s" % (name, ", ".join(EXPERIMENT_NAMES))
    )


EXPERIMENT_NAMES = ("pendulum", "ou1d", "ou2d", "rough_heston", "path_dependent")


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

def generate_dataset(spec, n, seed, grid=None, ic=None, threads=1):
    """Simulate n i.i.d. supervised triples (xi_i, W_i, X_i).

    Sample i draws xi from the stream (seed, i, 0) and its Brownian path
    from (seed, i, 1), so the dataset is reproducible bit-for-bit and
    independent of generation order.  The first round(0.8 n) indices form
    the training split.

    Parameters
    ----------
    spec : ExperimentSpec
    n : int, at least 5
    seed : int
    grid : TimeGrid, optional (default: T=5, dt=0.1)
    ic : optional initial-condition law overriding ``spec.ic``
    threads : int, worker threads for the independent solves
    """
    n = int(n)
    if n < 5:
        raise ValidationError("need n >= 5 samples, got %d" % n)
    grid = grid if grid is not None else make_uniform_grid(DEFAULT_T, DEFAULT_DT)
    law = ic if ic is not None else spec.ic
    prob = spec.problem
    d, m = prob.d, prob.m

    xi = np.empty((n, d))
    inc = np.empty((n, grid.n_steps, m))
    vals = np.empty((n, grid.n_steps + 1, d))

    def solve(i):
        xi_i = law.draw(rng_from(seed, i, 0), d)
        w_i = sample_brownian(grid, m, derive_seed(seed, i, 1))
        try:
            x_i = euler_maruyama(prob, xi_i, w_i)
        except NonFinitePath as exc:
            raise NonFinitePath("sample %d: %s" % (i, exc), node=exc.node) from exc
        return xi_i, w_i.increments, x_i.values

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, range(n)))
    else:
        results = [solve(i) for i in range(n)]
    for i, (xi_i, inc_i, val_i) in enumerate(results):
        xi[i], inc[i], vals[i] = xi_i, inc_i, val_i

    n_train = int(round(0.8 * n))
    return PathDataset(
        grid=grid, xi=xi, increments=inc, values=vals,
        train_idx=np.arange(n_train), test_idx=np.arange(n_train, n),
        ic_convention="std",
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Optimization settings.

    ``epochs`` defaults by dataset size (400/300/200 for n up to 100 / up
    to 500 / beyond) and must be divisible by 4: the learning rate starts
    at ``lr0`` and shrinks by ``decay`` after every quarter of the epochs.
    ``lr0`` defaults to 0.01 for the recurrent models and 1e-3 for the
    operator net.
    """

    epochs: int = None
    batch_size: int = 32
    lr0: float = None
    decay: float = 0.8
    seed: int = 0
    divergence_cap: float = 1e6


def default_epochs(n):
    if n <= 100:
        return 400
    if n <= 500:
        return 300
    return 200


@dataclass
class LossReport:
    """Everything a training run produced, ready for report.json/losses.csv."""

    model_kind: str
    n: int
    d: int
    m: int
    T: float
    dt: float
    epochs: int
    batch_size: int
    lr0: float
    decay: float
    seed: int
    ic_convention: str
    final_train_loss: float
    final_test_loss: float
    epoch_train_loss: list
    epoch_lr: list
    wall_time_s: float
    mse_train: float = None
    mse_test: float = None
    experiment: str = None

    def metrics(self):
        out = {
            "final_train_loss": self.final_train_loss,
            "final_test_loss": self.final_test_loss,
        }
        if self.mse_train is not None:
            out["mse_train"] = self.mse_train
            out["mse_test"] = self.mse_test
        return out

    def config_echo(self):
        return {
            "experiment": self.experiment,
            "model": self.model_kind,
            "n": self.n,
            "d": self.d,
            "m": self.m,
            "T": self.T,
            "dt": self.dt,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr0": self.lr0,
            "decay": self.decay,
            "seed": self.seed,
            "ic_convention": self.ic_convention,
        }


def _target_layout(values):
    # stored (B, N, d) -> tape layout (N, B, d)
    return np.ascontiguousarray(np.transpose(values, (1, 0, 2)))


def _relative_loss_node(tape, pred, targets_nbd, dt):
    den = np.sqrt(np.einsum("nbd,nbd->b", targets_nbd, targets_nbd) * dt)
    if np.any(den < ZERO_NORM_FLOOR):
        raise ZeroTargetNorm("a target path in the batch has (near-)zero norm")
    diff = tape.sub(pred, tape.const(targets_nbd))
    per = tape.sum_axes(tape.mul(diff, diff), (0, 2))
    norms = tape.sqrt(tape.scale(per, dt))
    return tape.mean(tape.mul(norms, tape.const(1.0 / den)))


def _mse_loss_node(tape, pred, targets_nbd):
    diff = tape.sub(pred, tape.const(targets_nbd))
    return tape.scale(tape.sumsq(diff), 1.0 / targets_nbd.size)


def _check_model_data(model, data):
    if model.d != data.d or model.m != data.m:
        raise DimMismatch(
            "model is (d=%d, m=%d) but data is (d=%d, m=%d)"
            % (model.d, model.m, data.d, data.m)
        )


def train(model, data, cfg):
    """Optimize the model in place on the training split; returns a LossReport.

    The schedule is the 4-plateau geometric one: lr0 on the first quarter
    of epochs, then lr0*decay, and so on.  Test-split targets are never
    touched during optimization.
    """
    _check_model_data(model, data)
    n = len(data)
    epochs = cfg.epochs if cfg.epochs is not None else default_epochs(n)
    if epochs < 4 or epochs % 4 != 0:
        raise ValidationError("epochs must be a positive multiple of 4, got %d" % epochs)
    train_idx = data.train_idx
    if cfg.batch_size < 1 or cfg.batch_size > len(train_idx):
        raise ValidationError(
            "batch size %d must lie in [1, %d]" % (cfg.batch_size, len(train_idx))
        )
    is_operator = model.kind == "deeponet"
    if is_operator:
        if np.ptp(data.xi, axis=0).max() > 1e-12:
            raise ValidationError(
                "operator-net training needs a deterministic initial condition"
            )
    lr0 = cfg.lr0 if cfg.lr0 is not None else (1e-3 if is_operator else 0.01)

    xis = data.xi[train_idx]
    incs = data.increments[train_idx]
    targets = data.values[train_idx]
    state = AdamState.create(model.params.size, lr0)
    shuffle = rng_from(cfg.seed)
    dt = data.grid.dt

    epoch_losses = []
    epoch_lrs = []
    t0 = time.perf_counter()
    for epoch in range(1, epochs + 1):
        state.lr = lr0 * cfg.decay ** ((4 * (epoch - 1)) // epochs)
        epoch_lrs.append(state.lr)
        perm = shuffle.permutation(len(train_idx))
        total, weight = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            sel = perm[lo : lo + cfg.batch_size]
            tape = Tape()
            model.params.zero_grad()
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                pred = model.forward_batch(xis[sel], incs[sel], data.grid, tape)
                tgt = _target_layout(targets[sel])
                if is_operator:
                    loss = _mse_loss_node(tape, pred, tgt)
                else:
                    loss = _relative_loss_node(tape, pred, tgt, dt)
                loss_val = float(tape.val(loss))
                if not np.isfinite(loss_val) or loss_val > cfg.divergence_cap:
                    raise DivergedLoss(
                        "loss %.3g at epoch %d exceeded the divergence guard"
                        % (loss_val, epoch),
                        epoch=epoch,
                    )
                backward(tape, loss, model.params)
                adam_step(state, model.params)
            total += loss_val * len(sel)
            weight += len(sel)
        epoch_losses.append(total / weight)
    wall = time.perf_counter() - t0

    final_train, final_test = evaluate(model, data)
    report = LossReport(
        model_kind=model.kind,
        n=n, d=data.d, m=data.m,
        T=data.grid.T, dt=data.grid.dt,
        epochs=epochs, batch_size=cfg.batch_size,
        lr0=lr0, decay=cfg.decay, seed=cfg.seed,
        ic_convention=data.ic_convention,
        final_train_loss=final_train, final_test_loss=final_test,
        epoch_train_loss=epoch_losses, epoch_lr=epoch_lrs,
        wall_time_s=wall,
    )
    if is_operator:
        report.mse_train = _mse_value(model, data, data.train_idx)
        report.mse_test = _mse_value(model, data, data.test_idx)
    return report


def _forward_values(model, data, idx, chunk=256, threads=1):
    """Stacked predictions (len(idx), N, d) on throwaway tapes."""
    chunks = [idx[lo : lo + chunk] for lo in range(0, len(idx), chunk)]

    def run(sel):
        tape = Tape()
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            node = model.forward_batch(
                data.xi[sel], data.increments[sel], data.grid, tape
            )
            return np.transpose(tape.val(node), (1, 0, 2))

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(sel) for sel in chunks]
    out = np.concatenate(parts, axis=0) if parts else np.empty((0, data.grid.n_steps + 1, data.d))
    if not np.isfinite(out).all():
        raise NonFinitePath("model produced non-finite predictions during evaluation")
    return out


def _mse_value(model, data, idx):
    pred = _forward_values(model, data, idx)
    diff = pred - data.values[idx]
    return float(np.mean(diff * diff))


def evaluate(model, data, threads=1):
    """Mean relative L2 loss on (train split, test split)."""
    _check_model_data(model, data)
    out = []
    for idx in (data.train_idx, data.test_idx):
        pred = _forward_values(model, data, idx, threads=threads)
        out.append(float(np.mean(relative_l2_batch(pred, data.values[idx], data.grid.dt))))
    return tuple(out)


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def write_report(report, outdir):
    """Write report.json and losses.csv into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    payload = {
        "config": report.config_echo(),
        "metrics": report.metrics(),
        "wall_time_s": report.wall_time_s,
    }
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "losses.csv"), "w") as fh:
        fh.write("epoch,lr,train_loss\n")
        for k, (lr, lv) in enumerate(zip(report.epoch_lr, report.epoch_train_loss), 1):
            fh.write("%d,%.17g,%.17g\n" % (k, lr, lv))
