"""Uniform time grids, Brownian drivers, discrete paths, and the shared loss metric.

Everything downstream (the solver, the neural models, the experiment
pipeline) works on the three value types defined here: ``TimeGrid``,
``BrownianPath`` and ``SamplePath``.  All arrays are 64-bit floats; all
randomness flows through counter-based generators keyed by
``(seed, *indices)`` so that per-sample streams never depend on iteration
order or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    GridMismatch,
    IncommensurateGrid,
    IndivisibleFactor,
    NonPositiveInput,
    ShapeMismatch,
    ValidationError,
    ZeroTargetNorm,
)

#: Relative slack when deciding whether T/dt is an integer.
_GRID_RTOL = 1e-8

#: Target norms below this are considered zero for relative errors.
ZERO_NORM_FLOOR = 1e-12


def derive_seed(seed, *key):
    """Derive an independent 64-bit child seed from ``seed`` and an index key.

    Built on splittable seed sequences, so ``derive_seed(s, i, j)`` streams
    are statistically independent across distinct ``(i, j)`` and identical
    across runs, regardless of the order in which they are drawn.
    """
    seed = int(seed)
    if seed < 0:
        raise ValidationError("seed must be a non-negative integer, got %d" % seed)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def rng_from(seed, *key):
    """Counter-based generator for ``derive_seed(seed, *key)``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *key)))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < t_1 < ... < t_n = T with t_i = i*dt."""

    T: float
    dt: float
    n_steps: int
    nodes: np.ndarray = field(repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.n_steps == other.n_steps and self.dt == other.dt

    def __hash__(self):
        return hash((self.n_steps, self.dt))


def make_uniform_grid(T, dt):
    """Build the uniform grid on [0, T] with step dt.

    Parameters
    ----------
    T : float
        Horizon, strictly positive.
    dt : float
        Step size, strictly positive; T/dt must be an integer up to
        floating-point slack.

    Raises
    ------
    NonPositiveInput
        If ``T <= 0`` or ``dt <= 0``.
    IncommensurateGrid
        If ``T/dt`` is not within rounding slack of an integer
        (e.g. T=5, dt=0.3).
    """
    T = float(T)
    dt = float(dt)
    if T <= 0.0:
        raise NonPositiveInput("horizon T must be positive, got %g" % T)
    if dt <= 0.0:
        raise NonPositiveInput("step dt must be positive, got %g" % dt)
    ratio = T / dt
    n_steps = int(round(ratio))
    if n_steps < 1 or abs(ratio - n_steps) > _GRID_RTOL * max(1.0, abs(ratio)):
        raise IncommensurateGrid(
            "T/dt = %.6g is not an integer; choose dt dividing T" % ratio
        )
    nodes = np.arange(n_steps + 1, dtype=np.float64) * dt
    return TimeGrid(T=T, dt=dt, n_steps=n_steps, nodes=nodes)


@dataclass(frozen=True)
class BrownianPath:
    """Increments of an m-dimensional Brownian motion on a uniform grid.

    ``increments[j]`` is B(t_{j+1}) - B(t_j), one row per step.
    """

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim != 2 or inc.shape[0] != self.grid.n_steps:
            raise ShapeMismatch(
                "increments must have shape (n_steps, m) = (%d, m), got %s"
                % (self.grid.n_steps, (inc.shape,))
            )
        object.__setattr__(self, "increments", inc)

    @property
    def m(self):
        return self.increments.shape[1]

    def cumulative(self):
        """Path values B(t_i), shape (n_steps+1, m), starting at zero."""
        out = np.empty((self.grid.n_steps + 1, self.m))
        out[0] = 0.0
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


@dataclass(frozen=True)
class SamplePath:
    """A discretized d-dimensional trajectory: values[i] approximates X(t_i)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != self.grid.n_steps + 1:
            raise ShapeMismatch(
                "values must have shape (n_steps+1, d) = (%d, d), got %s"
                % (self.grid.n_steps + 1, (vals.shape,))
            )
        object.__setattr__(self, "values", vals)

    @property
    def d(self):
        return self.values.shape[1]


def sample_brownian(grid, m, seed):
    """Draw a Brownian path on ``grid`` with ``m`` components.

    A pure function of its arguments: the same (grid, m, seed) always
    yields bit-identical increments.  Increments are i.i.d. N(0, dt).
    """
    m = int(m)
    if m < 1:
        raise NonPositiveInput("m must be >= 1, got %d" % m)
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    inc = rng.normal(0.0, np.sqrt(grid.dt), size=(grid.n_steps, m))
    return BrownianPath(grid=grid, increments=inc)


def _tree_sum(blocks):
    # Sum over axis 1 in fixed binary-tree order.  The recursion splits at
    # k//2, so coarsening by 2 twice adds in exactly the same order as
    # coarsening by 4 once — composition is bit-exact, not just close.
    k = blocks.shape[1]
    if k == 1:
        return blocks[:, 0].copy()
    half = k // 2
    return _tree_sum(blocks[:, :half]) + _tree_sum(blocks[:, half:])


def coarsen_brownian(path, factor):
    """Merge each run of ``factor`` consecutive increments into one.

    The result is the same Brownian motion sampled on the grid with step
    ``factor * dt``.  ``factor`` must divide the step count.
    """
    factor = int(factor)
    if factor < 1:
        raise NonPositiveInput("factor must be >= 1, got %d" % factor)
    n = path.grid.n_steps
    if n % factor != 0:
        raise IndivisibleFactor(
            "factor %d does not divide n_steps = %d" % (factor, n)
        )
    if factor == 1:
        return BrownianPath(grid=path.grid, increments=path.increments.copy())
    coarse = make_uniform_grid(path.grid.T, path.grid.dt * factor)
    blocks = path.increments.reshape(n // factor, factor, path.m)
    return BrownianPath(grid=coarse, increments=_tree_sum(blocks))


def path_norm(values, dt):
    """Discrete L2([0,T]) norm sqrt(sum_k |Y(t_k)|^2 dt), initial node included."""
    values = np.asarray(values)
    return float(np.sqrt(np.sum(values * values) * dt))


def relative_l2_batch(pred, target, dt):
    """Per-sample relative L2 errors for stacked paths.

    Parameters
    ----------
    pred, target : ndarray, shape (B, n_steps+1, d)
    dt : float

    Returns
    -------
    ndarray, shape (B,)
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(
            "pred shape %s != target shape %s" % (pred.shape, target.shape)
        )
    diff = pred - target
    num = np.sqrt(np.einsum("bkd,bkd->b", diff, diff) * dt)
    den = np.sqrt(np.einsum("bkd,bkd->b", target, target) * dt)
    if np.any(den < ZERO_NORM_FLOOR):
        bad = int(np.argmax(den < ZERO_NORM_FLOOR))
        raise ZeroTargetNorm(
            "target path %d has L2 norm %.3g below %.0e" % (bad, den[bad], ZERO_NORM_FLOOR)
        )
    return num / den


def mean_relative_l2(pred, target):
    """Mean over samples of ||pred_i - target_i|| / ||target_i||.

    The norm is the discrete path L2 norm of :func:`path_norm`.  Both lists
    must be nonempty, equally long, and share one grid and one dimension.

    Raises
    ------
    GridMismatch, DimMismatch, ShapeMismatch, ZeroTargetNorm
    """
    if len(pred) != len(target) or len(pred) == 0:
        raise ShapeMismatch(
            "need equally many (>=1) predictions and targets, got %d and %d"
            % (len(pred), len(target))
        )
    grid = target[0].grid
    d = target[0].d
    for sp in list(pred) + list(target):
        if sp.grid != grid:
            raise GridMismatch("all paths must share one time grid")
        if sp.d != d:
            raise DimMismatch("all paths must share one dimension d=%d" % d)
    pred_arr = np.stack([sp.values for sp in pred])
    target_arr = np.stack([sp.values for sp in target])
    return float(np.mean(relative_l2_batch(pred_arr, target_arr, grid.dt)))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def _write_rows(fname, header, times, rows):
    # %.17g prints enough significant digits that float64 round-trips exactly.
    with open(fname, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, rows):
            fh.write("%.17g,%s\n" % (t, ",".join("%.17g" % v for v in row)))


def _read_rows(fname, prefix):
    with open(fname) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t" or any(not c.startswith(prefix) for c in header[1:]):
            raise ValidationError(
                "unexpected CSV header %r in %s" % (",".join(header), fname)
            )
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    return body[:, 0], body[:, 1:]


def save_sample_path(path, fname):
    """Write one path as CSV with header ``t,x1,...,xd``, one row per node."""
    header = "t," + ",".join("x%d" % (k + 1) for k in range(path.d))
    _write_rows(fname, header, path.grid.nodes, path.values)


def load_sample_path(fname):
    """Inverse of :func:`save_sample_path`; the grid is rebuilt from the t column."""
    times, vals = _read_rows(fname, "x")
    if len(times) < 2:
        raise ValidationError("path file %s has fewer than two nodes" % fname)
    grid = make_uniform_grid(times[-1], times[1] - times[0])
    if grid.n_steps != len(times) - 1:
        raise IncommensurateGrid("t column of %s is not a uniform grid" % fname)
    return SamplePath(grid=grid, values=vals)


def save_brownian(path, fname):
    """Write increments as CSV with header ``t,db1,...,dbm``; t is the left node."""
    header = "t," + ",".join("db%d" % (k + 1) for k in range(path.m))
    _write_rows(fname, header, path.grid.nodes[:-1], path.increments)


def load_brownian(fname):
    """Inverse of :func:`save_brownian`."""
    times, inc = _read_rows(fname, "db")
    if len(times) < 2:
        raise ValidationError(
            "increment file %s needs >= 2 rows to recover the step size" % fname
        )
    dt = times[1] - times[0]
    grid = make_uniform_grid(times[-1] + dt, dt)
    if grid.n_steps != len(times):
        raise IncommensurateGrid("t column of %s is not a uniform grid" % fname)
    return BrownianPath(grid=grid, increments=inc)


@dataclass
class PathDataset:
    """Supervised path data: n triples (xi_i, W_i, X_i) on one shared grid.

    Stored column-wise as stacked arrays for fast batched access;
    :meth:`record` reassembles the i-th triple.  ``train_idx`` and
    ``test_idx`` partition ``range(n)`` with ``len(train_idx) = round(0.8 n)``.
    ``ic_convention`` records how the second parameter of a Normal
    initial-condition law was read ("std": standard deviation).
    """

    grid: TimeGrid
    xi: np.ndarray          # (n, d)
    increments: np.ndarray  # (n, n_steps, m)
    values: np.ndarray      # (n, n_steps+1, d)
    train_idx: np.ndarray
    test_idx: np.ndarray
    ic_convention: str = "std"

    def __post_init__(self):
        n = self.xi.shape[0]
        if self.increments.shape[0] != n or self.values.shape[0] != n:
            raise ShapeMismatch("xi, increments and values disagree on sample count")
        overlap = np.intersect1d(self.train_idx, self.test_idx)
        if overlap.size:
            raise ValidationError("train and test splits overlap at %s" % overlap[:4])

    def __len__(self):
        return self.xi.shape[0]

    @property
    def d(self):
        return self.xi.shape[1]

    @property
    def m(self):
        return self.increments.shape[2]

    def record(self, i):
        """The i-th triple (xi, W, X) as value objects."""
        w = BrownianPath(grid=self.grid, increments=self.increments[i])
        x = SamplePath(grid=self.grid, values=self.values[i])
        return self.xi[i].copy(), w, x
