"""Reverse-mode automatic differentiation on numpy arrays, plus MLPs and Adam.

A :class:`Tape` records array-valued primitive operations as they execute;
:func:`backward` replays the record once in reverse and accumulates
gradients into the :class:`ParamVector` that owns the trainable storage.
The operation set is deliberately small — exactly what the recurrent
model unrolls and the losses need — and every reduction runs in a fixed
order, so repeated passes over identical inputs produce bit-identical
gradients.

Nodes are integer ids; values are float64 arrays.  Parameter reads are
memoized per tape, so a weight used at every unroll step appears once in
the record and collects all its step contributions before the final
flush into ``ParamVector.grad``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonScalarLoss,
    ShapeMismatch,
    ValidationError,
)

_MAGIC = b"NSVEPAR1"


def sigmoid(z):
    """Numerically stable logistic function (two-branch form)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lipswish(z):
    """rho(z) = 0.909 * z * sigmoid(z); 1-Lipschitz activation."""
    z = np.asarray(z, dtype=np.float64)
    return 0.909 * z * sigmoid(z)


@dataclass(frozen=True)
class MlpSpec:
    """Feedforward net shape: affine layers between ``widths``, LipSwish on
    hidden layers, linear output layer."""

    widths: tuple

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        if len(w) < 2 or any(v < 1 for v in w):
            raise ValidationError("widths must be >= 2 positive integers, got %s" % (w,))
        object.__setattr__(self, "widths", w)

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def n_params(self):
        return sum(
            self.widths[i + 1] * self.widths[i] + self.widths[i + 1]
            for i in range(self.n_layers)
        )


class ParamVector:
    """Flat storage for the weights of one or more named networks.

    ``values`` and ``grad`` are parallel float64 arrays; ``slices`` maps a
    string key ``"net/layer/W"`` / ``"net/layer/b"`` to ``(offset, shape)``
    and partitions the storage in insertion order.
    """

    def __init__(self, values, slices, fan_in):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.slices = dict(slices)
        self.fan_in = dict(fan_in)
        covered = sum(int(np.prod(shape)) for _, shape in self.slices.values())
        if covered != self.values.size:
            raise ShapeMismatch(
                "slices cover %d entries but storage holds %d" % (covered, self.values.size)
            )

    @property
    def size(self):
        return self.values.size

    def view(self, key):
        off, shape = self.slices[key]
        return self.values[off : off + int(np.prod(shape))].reshape(shape)

    def zero_grad(self):
        self.grad[:] = 0.0

    def copy(self):
        return ParamVector(self.values.copy(), self.slices, self.fan_in)


def build_param_vector(net_specs):
    """Allocate zeroed flat storage for ``{name: MlpSpec}`` in insertion order."""
    slices = {}
    fan_in = {}
    offset = 0
    for name, spec in net_specs.items():
        for layer in range(spec.n_layers):
            w_in, w_out = spec.widths[layer], spec.widths[layer + 1]
            for kind, shape in (("W", (w_out, w_in)), ("b", (w_out,))):
                key = "%s/%d/%s" % (name, layer, kind)
                slices[key] = (offset, shape)
                fan_in[key] = w_in
                offset += int(np.prod(shape))
    return ParamVector(np.zeros(offset), slices, fan_in)


def init_uniform(pv, rng):
    """Fan-in uniform init: each layer's W and b ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)].

    Draws in slice order, so a fixed generator state yields fixed parameters.
    """
    for key, (off, shape) in pv.slices.items():
        bound = 1.0 / np.sqrt(pv.fan_in[key])
        size = int(np.prod(shape))
        pv.values[off : off + size] = rng.uniform(-bound, bound, size)
    return pv


def save_params(pv, path):
    """Write values as `NSVEPAR1` + u64 count + little-endian f64s, plus a
    JSON sidecar ``<path>.json`` holding the slice table."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", pv.size))
        fh.write(pv.values.astype("<f8").tobytes())
    sidecar = {
        "slices": {k: [off, list(shape)] for k, (off, shape) in pv.slices.items()},
        "fan_in": pv.fan_in,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_params(path):
    """Inverse of :func:`save_params`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValidationError("bad magic %r in %s" % (magic, path))
        (count,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(count * 8)
    if len(raw) != count * 8:
        raise ValidationError("truncated parameter file %s" % path)
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    slices = {k: (off, tuple(shape)) for k, (off, shape) in sidecar["slices"].items()}
    return ParamVector(values, slices, sidecar["fan_in"])


# ---------------------------------------------------------------------------
# The tape
# ---------------------------------------------------------------------------

class Tape:
    """Append-only operation record; topological by construction."""

    def __init__(self):
        self._vals = []
        self._recs = []
        self._param_memo = {}

    def val(self, node):
        """Value array of a node."""
        return self._vals[node]

    def __len__(self):
        return len(self._recs)

    def _push(self, value, rec):
        self._vals.append(value)
        self._recs.append(rec)
        return len(self._vals) - 1

    # -- leaves ------------------------------------------------------------
    def const(self, value):
        """A leaf that never receives gradient."""
        return self._push(np.asarray(value, dtype=np.float64), None)

    def param(self, pv, key):
        """A leaf tied to a ParamVector slice; gradient flushes to pv.grad."""
        memo = (id(pv), key)
        node = self._param_memo.get(memo)
        if node is None:
            node = self._push(pv.view(key), ("param", None, pv, key))
            self._param_memo[memo] = node
        return node

    # -- primitive ops -----------------------------------------------------
    def affine(self, x, w, b):
        """x @ W.T + b for x (B, in), W (out, in), b (out,)."""
        xv, wv, bv = self._vals[x], self._vals[w], self._vals[b]
        if xv.ndim != 2 or xv.shape[1] != wv.shape[1]:
            raise ShapeMismatch(
                "affine input %s incompatible with weight %s" % (xv.shape, wv.shape)
            )
        return self._push(xv @ wv.T + bv, ("affine", (x, w, b)))

    def lipswish(self, x):
        xv = self._vals[x]
        s = sigmoid(xv)
        return self._push(0.909 * xv * s, ("lipswish", (x,), s))

    def add(self, a, b):
        av, bv = self._vals[a], self._vals[b]
        if av.shape != bv.shape:
            raise ShapeMismatch("add needs equal shapes, got %s and %s" % (av.shape, bv.shape))
        return self._push(av + bv, ("add", (a, b)))

    def sub(self, a, b):
        av, bv = self._vals[a], self._vals[b]
        if av.shape != bv.shape:
            raise ShapeMismatch("sub needs equal shapes, got %s and %s" % (av.shape, bv.shape))
        return self._push(av - bv, ("sub", (a, b)))

    def mul(self, a, b):
        """Elementwise product; b may also be a scalar () node."""
        av, bv = self._vals[a], self._vals[b]
        if bv.shape != () and av.shape != bv.shape:
            raise ShapeMismatch("mul needs equal shapes or scalar b, got %s and %s"
                                % (av.shape, bv.shape))
        return self._push(av * bv, ("mul", (a, b)))

    def scale(self, x, c):
        """Multiply by a plain (non-differentiated) float."""
        return self._push(self._vals[x] * float(c), ("scale", (x,), float(c)))

    def addcol(self, x, col):
        """x (B, N) plus a broadcast column col (B, 1)."""
        xv, cv = self._vals[x], self._vals[col]
        if xv.ndim != 2 or cv.shape != (xv.shape[0], 1):
            raise ShapeMismatch("addcol needs (B,N) and (B,1), got %s and %s"
                                % (xv.shape, cv.shape))
        return self._push(xv + cv, ("addcol", (x, col)))

    def pick(self, x, i):
        """Scalar node x[i] from a vector node."""
        return self._push(np.asarray(self._vals[x][i]), ("pick", (x,), int(i)))

    def reshape(self, x, shape):
        xv = self._vals[x]
        return self._push(xv.reshape(shape), ("reshape", (x,), xv.shape))

    def concat(self, nodes):
        """Concatenate 2-D nodes along the last axis."""
        vals = [self._vals[n] for n in nodes]
        widths = [v.shape[1] for v in vals]
        return self._push(np.concatenate(vals, axis=1), ("concat", tuple(nodes), widths))

    def stack(self, nodes):
        """Stack equal-shape nodes along a new leading axis."""
        vals = [self._vals[n] for n in nodes]
        return self._push(np.stack(vals, axis=0), ("stack", tuple(nodes)))

    def slice_last(self, x, lo, hi):
        """x[:, lo:hi] of a 2-D node."""
        return self._push(self._vals[x][:, lo:hi].copy(), ("slice_last", (x,), (lo, hi)))

    def transpose2d(self, x):
        """Transpose of a 2-D node."""
        return self._push(self._vals[x].T.copy(), ("transpose2d", (x,)))

    def matvec(self, a, v):
        """Batched matrix-vector product: (B, H, M) x (B, M) -> (B, H)."""
        av, vv = self._vals[a], self._vals[v]
        return self._push(np.einsum("bhm,bm->bh", av, vv), ("matvec", (a, v)))

    def matmul_nt(self, a, b):
        """(B, P) x (N, P) -> (B, N): a @ b.T."""
        return self._push(self._vals[a] @ self._vals[b].T, ("matmul_nt", (a, b)))

    def append(self, hist, x):
        """Grow a history (J, B, H) by one (B, H) row to (J+1, B, H).

        ``hist`` may be None to start an empty history.
        """
        xv = self._vals[x]
        if hist is None:
            return self._push(xv[None].copy(), ("append", (None, x)))
        hv = self._vals[hist]
        return self._push(np.concatenate([hv, xv[None]], axis=0), ("append", (hist, x)))

    def lagsum(self, hist, table, i):
        """Kernel-weighted history sum: out = sum_j table[i-1-j] * hist[j].

        ``hist`` is (i, B, H); ``table`` is a 1-D node of lag values with
        table[k-1] holding the weight for lag index k.  This is one step of
        the discrete Volterra convolution.
        """
        hv, tv = self._vals[hist], self._vals[table]
        if hv.shape[0] != i or tv.shape[0] < i:
            raise ShapeMismatch(
                "lagsum step %d needs history of %d rows and >= %d table entries,"
                " got %s and %s" % (i, i, i, hv.shape, tv.shape)
            )
        w = tv[i - 1 :: -1] if i > 0 else tv[:0]
        return self._push(np.einsum("j,jbh->bh", w, hv), ("lagsum", (hist, table), i))

    def sum_axes(self, x, axes):
        nd = self._vals[x].ndim
        axes = tuple(sorted(ax % nd for ax in axes))
        return self._push(self._vals[x].sum(axis=axes), ("sum_axes", (x,), axes))

    def sumsq(self, x):
        """Scalar sum of squares."""
        xv = self._vals[x]
        return self._push(np.asarray(np.sum(xv * xv)), ("sumsq", (x,)))

    def sqrt(self, x):
        out = np.sqrt(self._vals[x])
        return self._push(out, ("sqrt", (x,), out))

    def mean(self, x):
        xv = self._vals[x]
        return self._push(np.asarray(np.mean(xv)), ("mean", (x,), xv.size))


def backward(tape, loss_node, params=None):
    """Reverse sweep from a scalar node; fills ``grad`` of every ParamVector
    leaf on the tape (``params`` is accepted for interface symmetry and may
    be None — parameter records carry their own storage references).

    Raises
    ------
    NonScalarLoss
        If the starting node is not a scalar.
    """
    vals = tape._vals
    recs = tape._recs
    if np.asarray(vals[loss_node]).shape != ():
        raise NonScalarLoss(
            "backward must start from a scalar, got shape %s"
            % (np.asarray(vals[loss_node]).shape,)
        )
    grads = [None] * len(vals)
    grads[loss_node] = np.asarray(1.0)

    def acc(node, g):
        if grads[node] is None:
            grads[node] = np.zeros_like(vals[node])
        grads[node] += g

    for out in range(loss_node, -1, -1):
        rec = recs[out]
        g = grads[out]
        if rec is None or g is None:
            continue
        op = rec[0]
        if op == "param":
            _, _, pv, key = rec
            off, shape = pv.slices[key]
            pv.grad[off : off + int(np.prod(shape))] += g.ravel()
            continue
        ins = rec[1]
        if op == "affine":
            x, w, b = ins
            acc(x, g @ vals[w])
            acc(w, g.T @ vals[x])
            acc(b, g.sum(axis=0))
        elif op == "lipswish":
            (x,) = ins
            s = rec[2]
            acc(x, g * 0.909 * (s + vals[x] * s * (1.0 - s)))
        elif op == "add":
            a, b = ins
            acc(a, g)
            acc(b, g)
        elif op == "sub":
            a, b = ins
            acc(a, g)
            acc(b, -g)
        elif op == "mul":
            a, b = ins
            if vals[b].shape == ():
                acc(a, g * vals[b])
                acc(b, np.asarray(np.sum(g * vals[a])))
            else:
                acc(a, g * vals[b])
                acc(b, g * vals[a])
        elif op == "scale":
            (x,) = ins
            acc(x, g * rec[2])
        elif op == "addcol":
            x, col = ins
            acc(x, g)
            acc(col, g.sum(axis=1, keepdims=True))
        elif op == "pick":
            (x,) = ins
            gx = np.zeros_like(vals[x])
            gx[rec[2]] = g
            acc(x, gx)
        elif op == "reshape":
            (x,) = ins
            acc(x, g.reshape(rec[2]))
        elif op == "concat":
            widths = rec[2]
            lo = 0
            for node, wdt in zip(ins, widths):
                acc(node, g[:, lo : lo + wdt])
                lo += wdt
        elif op == "stack":
            for k, node in enumerate(ins):
                acc(node, g[k])
        elif op == "slice_last":
            (x,) = ins
            lo, hi = rec[2]
            gx = np.zeros_like(vals[x])
            gx[:, lo:hi] = g
            acc(x, gx)
        elif op == "transpose2d":
            (x,) = ins
            acc(x, g.T)
        elif op == "matvec":
            a, v = ins
            acc(a, np.einsum("bh,bm->bhm", g, vals[v]))
            acc(v, np.einsum("bh,bhm->bm", g, vals[a]))
        elif op == "matmul_nt":
            a, b = ins
            acc(a, g @ vals[b])
            acc(b, g.T @ vals[a])
        elif op == "append":
            hist, x = ins
            if hist is not None:
                acc(hist, g[:-1])
            acc(x, g[-1])
        elif op == "lagsum":
            hist, table = ins
            i = rec[2]
            w = vals[table][i - 1 :: -1]
            acc(hist, w[:, None, None] * g[None])
            gt = np.zeros_like(vals[table])
            gt[:i] = np.einsum("jbh,bh->j", vals[hist], g)[::-1]
            acc(table, gt)
        elif op == "sum_axes":
            (x,) = ins
            axes = rec[2]
            shape = list(vals[x].shape)
            for ax in axes:
                shape[ax] = 1
            acc(x, np.broadcast_to(g.reshape(shape), vals[x].shape).copy())
        elif op == "sumsq":
            (x,) = ins
            acc(x, 2.0 * g * vals[x])
        elif op == "sqrt":
            (x,) = ins
            acc(x, g / (2.0 * rec[2]))
        elif op == "mean":
            (x,) = ins
            acc(x, np.broadcast_to(g / rec[2], vals[x].shape).copy())
        else:  # pragma: no cover - would be a construction bug
            raise ValidationError("unknown op %r on tape" % op)


def mlp_forward(spec, pv, net, x, tape):
    """Run the named MLP on node ``x`` (shape (B, w_0)), recording on ``tape``.

    Returns the output node of shape (B, w_L).
    """
    xv = tape.val(x)
    if xv.ndim != 2 or xv.shape[1] != spec.widths[0]:
        raise ShapeMismatch(
            "input shape %s does not match first width %d" % (xv.shape, spec.widths[0])
        )
    out = x
    for layer in range(spec.n_layers):
        w = tape.param(pv, "%s/%d/W" % (net, layer))
        b = tape.param(pv, "%s/%d/b" % (net, layer))
        out = tape.affine(out, w, b)
        if layer < spec.n_layers - 1:
            out = tape.lipswish(out)
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam optimizer state over one ParamVector's storage."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, size, lr):
        return cls(lr=float(lr), m=np.zeros(size), v=np.zeros(size))


def adam_step(state, pv):
    """One in-place Adam update from ``pv.grad`` with bias correction."""
    g = pv.grad
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    pv.values -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
