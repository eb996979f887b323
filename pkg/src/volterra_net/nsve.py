"""Neural stochastic Volterra model: seven networks through a differentiable unroll.

The latent state follows the same weighted recursion as the ground-truth
solver, with every ingredient replaced by a network:

    Z_0    = L(xi)
    Z(t_i) = Z_0 * g(t_i) + sum_{j<i} K_mu(t_i - t_j) mu(t_j, Z_j) dt
                          + sum_{j<i} K_sigma(t_i - t_j) sigma(t_j, Z_j) dB_j
    X(t_i) = Pi(Z(t_i))

The three 1-D networks (g and the two kernels) only ever see the n+1
node times and the n distinct lags of a uniform grid, so one forward
pass evaluates each exactly once and reuses the cached tables at every
step.  The whole unroll lives on one tape, so backpropagation
differentiates through the solver itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    MlpSpec,
    ParamVector,
    Tape,
    build_param_vector,
    init_uniform,
    mlp_forward,
)
from .errors import BadDims, DimMismatch, NonFinitePath, ShapeMismatch
from .paths import SamplePath, rng_from


def _sve_net_specs(d, m, d_h, d_K):
    return {
        "lift": MlpSpec((d, d_h)),
        "readout": MlpSpec((d_h, d)),
        "g": MlpSpec((1, d_K, d_K, 1)),
        "k_mu": MlpSpec((1, d_K, d_K, 1)),
        "k_sigma": MlpSpec((1, d_K, d_K, 1)),
        "mu": MlpSpec((1 + d_h, d_h, d_h)),
        "sigma": MlpSpec((1 + d_h, d_h * m, d_h * m)),
    }


@dataclass
class NeuralSveModel:
    """Bundle of the seven networks over one shared flat parameter vector."""

    d: int
    m: int
    d_h: int
    d_K: int
    params: ParamVector

    kind = "nsve"

    @property
    def specs(self):
        return _sve_net_specs(self.d, self.m, self.d_h, self.d_K)

    def forward_batch(self, xis, increments, grid, tape):
        """Forward a batch; returns the prediction node with layout
        (n_steps+1, B, d)."""
        xis = np.asarray(xis, dtype=np.float64)
        increments = np.asarray(increments, dtype=np.float64)
        _check_batch(self, xis, increments, grid)
        specs = self.specs
        xi_node = tape.const(xis)
        z0 = mlp_forward(specs["lift"], self.params, "lift", xi_node, tape)
        table = kernel_table(self, grid, tape)
        zs = _unroll(
            tape, self.params, specs, z0,
            table.gv, table.k_mu, table.k_sigma,
            grid, increments,
        )
        return _readout(tape, self.params, specs, zs, xis.shape[0], self.d_h, self.d)


def _check_batch(model, xis, increments, grid):
    if xis.ndim != 2 or xis.shape[1] != model.d:
        raise ShapeMismatch("xis must be (B, %d), got %s" % (model.d, (xis.shape,)))
    if increments.shape != (xis.shape[0], grid.n_steps, model.m):
        raise DimMismatch(
            "increments must be (B, %d, %d), got %s"
            % (grid.n_steps, model.m, (increments.shape,))
        )


@dataclass(frozen=True)
class KernelTable:
    """Tape nodes caching the 1-D nets on one grid: gv[i] = g(t_i) for
    i = 0..n, and k[idx] = K((idx+1) dt) for idx = 0..n-1."""

    gv: int
    k_mu: int
    k_sigma: int


def init_model(d, m, d_h, d_K, seed):
    """Seeded construction with the published widths.

    Shapes: lift d->d_h and readout d_h->d linear; g and both kernels
    1 -> d_K -> d_K -> 1; drift (1+d_h) -> d_h -> d_h; diffusion
    (1+d_h) -> d_h*m -> d_h*m, reshaped row-major to (d_h, m).

    Raises
    ------
    BadDims
        Unless d_h > d and all of d, m, d_K are positive.
    """
    d, m, d_h, d_K = int(d), int(m), int(d_h), int(d_K)
    if min(d, m, d_h, d_K) < 1:
        raise BadDims("dimensions must be positive, got d=%d m=%d d_h=%d d_K=%d"
                      % (d, m, d_h, d_K))
    if d_h <= d:
        raise BadDims("latent dimension d_h=%d must exceed d=%d" % (d_h, d))
    pv = build_param_vector(_sve_net_specs(d, m, d_h, d_K))
    init_uniform(pv, rng_from(seed))
    return NeuralSveModel(d=d, m=m, d_h=d_h, d_K=d_K, params=pv)


def kernel_table(model, grid, tape):
    """Evaluate g at all nodes and both kernel nets at all n lags, once."""
    specs = model.specs
    tt = tape.const(grid.nodes[:, None])
    lags = tape.const((np.arange(1, grid.n_steps + 1, dtype=np.float64) * grid.dt)[:, None])
    n1, n = grid.n_steps + 1, grid.n_steps
    gv = tape.reshape(mlp_forward(specs["g"], model.params, "g", tt, tape), (n1,))
    kmu = tape.reshape(mlp_forward(specs["k_mu"], model.params, "k_mu", lags, tape), (n,))
    ksig = tape.reshape(
        mlp_forward(specs["k_sigma"], model.params, "k_sigma", lags, tape), (n,)
    )
    return KernelTable(gv=gv, k_mu=kmu, k_sigma=ksig)


def _unroll(tape, pv, specs, z0, gv, kmu, ksig, grid, increments):
    """The shared latent recursion.

    ``kmu``/``ksig`` are 1-D weight-table nodes of length n_steps; the
    neural SDE passes constant-one tables and reuses this code path
    unchanged, so the two models agree exactly when the learned kernels
    are pinned to one.

    Returns the list of latent nodes Z(t_0) .. Z(t_n), each (B, d_h).
    """
    B = tape.val(z0).shape[0]
    d_h = tape.val(z0).shape[1]
    m = increments.shape[2]
    dt = grid.dt
    zs = [tape.mul(z0, tape.pick(gv, 0))]
    drift_hist = None
    noise_hist = None
    for i in range(1, grid.n_steps + 1):
        j = i - 1
        t_col = tape.const(np.full((B, 1), grid.nodes[j]))
        inp = tape.concat([t_col, zs[j]])
        f = mlp_forward(specs["mu"], pv, "mu", inp, tape)
        drift_hist = tape.append(drift_hist, f)
        s_flat = mlp_forward(specs["sigma"], pv, "sigma", inp, tape)
        s_mat = tape.reshape(s_flat, (B, d_h, m))
        db = tape.const(increments[:, j, :])
        noise_hist = tape.append(noise_hist, tape.matvec(s_mat, db))
        zi = tape.add(
            tape.add(
                tape.mul(z0, tape.pick(gv, i)),
                tape.scale(tape.lagsum(drift_hist, kmu, i), dt),
            ),
            tape.lagsum(noise_hist, ksig, i),
        )
        zs.append(zi)
    return zs


def _readout(tape, pv, specs, zs, B, d_h, d):
    """Apply the readout to every latent node; output layout (n+1, B, d)."""
    stacked = tape.stack(zs)
    flat = tape.reshape(stacked, (len(zs) * B, d_h))
    out = mlp_forward(specs["readout"], pv, "readout", flat, tape)
    return tape.reshape(out, (len(zs), B, d))


def nsve_forward(model, xi, w, tape=None):
    """One sample path of the neural SVE driven by the Brownian path ``w``.

    With an explicit ``tape`` the computation stays differentiable; without
    one a throwaway tape is used.  Raises NonFinitePath if the recursion
    blows up.
    """
    tape = tape if tape is not None else Tape()
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    node = model.forward_batch(xi[None, :], w.increments[None], w.grid, tape)
    values = tape.val(node)[:, 0, :]
    if not np.isfinite(values).all():
        bad = int(np.argmin(np.isfinite(values).all(axis=1)))
        raise NonFinitePath("model produced a non-finite value at node %d" % bad, node=bad)
    return SamplePath(grid=w.grid, values=values)
