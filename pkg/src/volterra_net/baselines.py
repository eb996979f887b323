"""Comparison models: a neural SDE and a DeepONet operator net.

The neural SDE is the Volterra model without kernels — the same latent
recursion with both weight tables pinned to one, so it shares the unroll
code verbatim.  The DeepONet maps the whole discretized driving path to
the whole solution path through a branch/trunk pair and is bound to the
grid it was built on: it has no notion of a lag structure to transfer.
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
from .errors import BadDims, GridMismatch, NonFinitePath, ShapeMismatch, ValidationError
from .nsve import _check_batch, _readout, _unroll, kernel_table  # noqa: F401
from .paths import SamplePath, rng_from


def _sde_net_specs(d, m, d_h, d_K):
    return {
        "lift": MlpSpec((d, d_h)),
        "readout": MlpSpec((d_h, d)),
        "g": MlpSpec((1, d_K, d_K, 1)),
        "mu": MlpSpec((1 + d_h, d_h, d_h)),
        "sigma": MlpSpec((1 + d_h, d_h * m, d_h * m)),
    }


@dataclass
class NeuralSdeModel:
    """The Volterra model minus the two kernel networks."""

    d: int
    m: int
    d_h: int
    d_K: int
    params: ParamVector

    kind = "nsde"

    @property
    def specs(self):
        return _sde_net_specs(self.d, self.m, self.d_h, self.d_K)

    def forward_batch(self, xis, increments, grid, tape):
        """Forward a batch; prediction node layout (n_steps+1, B, d)."""
        xis = np.asarray(xis, dtype=np.float64)
        increments = np.asarray(increments, dtype=np.float64)
        _check_batch(self, xis, increments, grid)
        specs = self.specs
        xi_node = tape.const(xis)
        z0 = mlp_forward(specs["lift"], self.params, "lift", xi_node, tape)
        n1 = grid.n_steps + 1
        tt = tape.const(grid.nodes[:, None])
        gv = tape.reshape(mlp_forward(specs["g"], self.params, "g", tt, tape), (n1,))
        ones = tape.const(np.ones(grid.n_steps))
        zs = _unroll(tape, self.params, specs, z0, gv, ones, ones, grid, increments)
        return _readout(tape, self.params, specs, zs, xis.shape[0], self.d_h, self.d)


def init_sde_model(d, m, d_h, d_K, seed):
    """Seeded neural SDE with the same shapes as the Volterra model minus kernels."""
    d, m, d_h, d_K = int(d), int(m), int(d_h), int(d_K)
    if min(d, m, d_h, d_K) < 1:
        raise BadDims("dimensions must be positive, got d=%d m=%d d_h=%d d_K=%d"
                      % (d, m, d_h, d_K))
    if d_h <= d:
        raise BadDims("latent dimension d_h=%d must exceed d=%d" % (d_h, d))
    pv = build_param_vector(_sde_net_specs(d, m, d_h, d_K))
    init_uniform(pv, rng_from(seed))
    return NeuralSdeModel(d=d, m=m, d_h=d_h, d_K=d_K, params=pv)


def nsde_forward(model, xi, w, tape=None):
    """One neural-SDE sample path; see nsve_forward for conventions."""
    tape = tape if tape is not None else Tape()
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    node = model.forward_batch(xi[None, :], w.increments[None], w.grid, tape)
    values = tape.val(node)[:, 0, :]
    if not np.isfinite(values).all():
        bad = int(np.argmin(np.isfinite(values).all(axis=1)))
        raise NonFinitePath("model produced a non-finite value at node %d" % bad, node=bad)
    return SamplePath(grid=w.grid, values=values)


# ---------------------------------------------------------------------------
# DeepONet
# ---------------------------------------------------------------------------

#: Fixed operator-net architecture: three hidden layers of this width in
#: both branch and trunk, and this many basis pairs.
DEEPONET_WIDTH = 128
DEEPONET_P = 64


def _deeponet_net_specs(n_steps, m, p, width):
    branch_in = m * (n_steps + 1)
    return {
        "branch": MlpSpec((branch_in, width, width, width, p + 1)),
        "trunk": MlpSpec((1, width, width, width, p)),
    }


@dataclass
class DeepOnetModel:
    """Branch/trunk operator net from the discretized Brownian path to X.

    The branch consumes the flattened cumulative path B(t_0..t_n); the
    trunk consumes a time point; the output is b_0 + sum_k b_k t_k.
    One-dimensional output only, and bound to the grid it was built on.
    """

    m: int
    p: int
    grid: object
    params: ParamVector
    width: int = DEEPONET_WIDTH

    kind = "deeponet"
    d = 1

    @property
    def specs(self):
        return _deeponet_net_specs(self.grid.n_steps, self.m, self.p, self.width)

    def forward_batch(self, xis, increments, grid, tape):
        """Predict whole paths for a batch; node layout (n_steps+1, B, 1).

        ``xis`` is accepted for interface parity with the recurrent models
        but ignored: the operator net sees only the driving path.
        """
        increments = np.asarray(increments, dtype=np.float64)
        if grid != self.grid:
            raise GridMismatch(
                "operator net is bound to dt=%g, n=%d; got dt=%g, n=%d"
                % (self.grid.dt, self.grid.n_steps, grid.dt, grid.n_steps)
            )
        if increments.ndim != 3 or increments.shape[1:] != (grid.n_steps, self.m):
            raise ShapeMismatch(
                "increments must be (B, %d, %d), got %s"
                % (grid.n_steps, self.m, (increments.shape,))
            )
        B = increments.shape[0]
        n1 = grid.n_steps + 1
        cum = np.concatenate(
            [np.zeros((B, 1, self.m)), np.cumsum(increments, axis=1)], axis=1
        )
        out = self._bilinear(tape, cum.reshape(B, n1 * self.m), grid.nodes[:, None])
        # (B, n1) -> (n1, B, 1) to match the recurrent models' layout
        return tape.reshape(tape.transpose2d(out), (n1, B, 1))

    def _bilinear(self, tape, branch_in, times):
        br = mlp_forward(self.specs["branch"], self.params, "branch",
                         tape.const(branch_in), tape)
        tr = mlp_forward(self.specs["trunk"], self.params, "trunk",
                         tape.const(times), tape)
        bk = tape.slice_last(br, 1, self.p + 1)
        b0 = tape.slice_last(br, 0, 1)
        return tape.addcol(tape.matmul_nt(bk, tr), b0)


def init_deeponet(grid, m, seed, p=DEEPONET_P, width=DEEPONET_WIDTH):
    """Seeded DeepONet bound to ``grid``."""
    m, p = int(m), int(p)
    if m < 1 or p < 1:
        raise BadDims("need m >= 1 and p >= 1, got m=%d p=%d" % (m, p))
    pv = build_param_vector(_deeponet_net_specs(grid.n_steps, m, p, width))
    init_uniform(pv, rng_from(seed))
    return DeepOnetModel(m=m, p=p, grid=grid, params=pv, width=int(width))


def deeponet_forward(model, w, t, tape=None):
    """Evaluate the operator net at one time for one driving path.

    Returns a 1-vector.  Raises GridMismatch when ``w`` lives on any grid
    other than the one the model was built on — the operator net cannot
    transfer across discretizations.
    """
    tape = tape if tape is not None else Tape()
    if w.grid != model.grid:
        raise GridMismatch(
            "operator net is bound to dt=%g, n=%d; got dt=%g, n=%d"
            % (model.grid.dt, model.grid.n_steps, w.grid.dt, w.grid.n_steps)
        )
    t = float(t)
    if not 0.0 <= t <= model.grid.T * (1 + 1e-12):
        raise ValidationError("t=%g outside [0, %g]" % (t, model.grid.T))
    flat = w.cumulative().reshape(1, -1)
    out = model._bilinear(tape, flat, np.array([[t]]))
    return tape.val(out)[0].copy()
