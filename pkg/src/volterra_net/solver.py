"""Ground-truth simulation of stochastic Volterra equations.

The state at time t is

    X_t = xi * g(t) + int_0^t K_mu(t-s) mu(s, X_s) ds
                    + int_0^t K_sigma(t-s) sigma(s, X_s) dB_s,

driven by an m-dimensional Brownian motion.  The scheme freezes the
coefficients at the left node of each subinterval and integrates the
kernel exactly across the subinterval, i.e. step i uses the weights

    w_k = (1/dt) * int_{(k-1) dt}^{k dt} K(u) du,   k = i - j,

so the drift quadrature is exact for constant integrands (the discrete
mean of the Ornstein-Uhlenbeck benchmark stays at its fixed point
instead of drifting), and the integrable singularity of the power-law
kernel contributes its full mass on the first lag cell.  Coefficients
are evaluated only at left nodes, so the Ito sums stay adapted.

Weights depend on the lag index only, so a solve costs Theta(n) kernel
evaluations plus Theta(n^2) weighted accumulations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn

from .errors import (
    BadDims,
    DimMismatch,
    NonFinitePath,
    NonPositiveInput,
    ShapeMismatch,
    SingularAtZero,
    ValidationError,
)
from .paths import SamplePath


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

class Kernel:
    """A convolution kernel K: (0, T] -> R.

    Subclasses provide pointwise evaluation and the exact mean over a lag
    cell [lo, hi]; both accept scalars or arrays.
    """

    def value(self, lag):
        raise NotImplementedError

    def cell_average(self, lo, hi):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(Kernel):
    c: float = 1.0

    def value(self, lag):
        return np.full_like(np.asarray(lag, dtype=np.float64), self.c)

    def cell_average(self, lo, hi):
        return np.full_like(np.asarray(lo, dtype=np.float64), self.c)


@dataclass(frozen=True)
class LinearLagKernel(Kernel):
    """K(lag) = lag."""

    def value(self, lag):
        return np.asarray(lag, dtype=np.float64).copy()

    def cell_average(self, lo, hi):
        # exact: the integrand is linear
        return (np.asarray(lo) + np.asarray(hi)) / 2.0


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """K(lag) = exp(-theta * lag)."""

    theta: float = 1.0

    def value(self, lag):
        return np.exp(-self.theta * np.asarray(lag, dtype=np.float64))

    def cell_average(self, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if self.theta == 0.0:
            return np.ones_like(lo)
        width = hi - lo
        return (np.exp(-self.theta * lo) - np.exp(-self.theta * hi)) / (self.theta * width)


@dataclass(frozen=True)
class PowerGammaKernel(Kernel):
    """K(lag) = lag^(-alpha) / Gamma(alpha), singular at lag 0, alpha in (0, 1/2)."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError(
                "power kernel exponent must lie in (0, 1/2), got %g" % self.alpha
            )

    def value(self, lag):
        lag = np.asarray(lag, dtype=np.float64)
        return lag ** (-self.alpha) / _gamma_fn(self.alpha)

    def cell_average(self, lo, hi):
        # int lag^-a = lag^(1-a)/(1-a); finite down to lo = 0
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        a = self.alpha
        return (hi ** (1.0 - a) - lo ** (1.0 - a)) / (
            (1.0 - a) * (hi - lo) * _gamma_fn(a)
        )


@dataclass(frozen=True)
class PiecewiseSignKernel(Kernel):
    """K(lag) = +1 for lag <= tau, -1 beyond; makes the equation path-dependent."""

    tau: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise NonPositiveInput("sign-switch time tau must be positive, got %g" % self.tau)

    def value(self, lag):
        lag = np.asarray(lag, dtype=np.float64)
        return np.where(lag <= self.tau, 1.0, -1.0)

    def cell_average(self, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        clipped = np.clip(self.tau, lo, hi)
        # +1 on [lo, clipped], -1 on [clipped, hi]
        return ((clipped - lo) - (hi - clipped)) / (hi - lo)


@dataclass(frozen=True)
class ShiftedKernel(Kernel):
    """base + eps; used to realize kernel perturbations K~ = K + eps."""

    base: Kernel
    eps: float

    def value(self, lag):
        return self.base.value(lag) + self.eps

    def cell_average(self, lo, hi):
        return self.base.cell_average(lo, hi) + self.eps


def kernel_eval(kernel, lag):
    """Pointwise kernel value at a single nonnegative lag.

    Raises
    ------
    SingularAtZero
        For the power-law kernel at lag 0.
    ValidationError
        For negative lag.
    """
    lag = float(lag)
    if lag < 0.0:
        raise ValidationError("lag must be nonnegative, got %g" % lag)
    if lag == 0.0 and isinstance(kernel, PowerGammaKernel):
        raise SingularAtZero("power-law kernel diverges at lag 0")
    if isinstance(kernel, ShiftedKernel) and lag == 0.0:
        if isinstance(kernel.base, PowerGammaKernel):
            raise SingularAtZero("power-law kernel diverges at lag 0")
    return float(kernel.value(lag))


# ---------------------------------------------------------------------------
# Coefficient functions
# ---------------------------------------------------------------------------

class CoefficientFn:
    """A componentwise coefficient map f(t, x).

    Used either as the drift (vector f) or as the diffusion, in which case
    the matrix is diag(f(t, x)) and m must equal d.  All provided variants
    ignore t; the argument is kept so custom time-dependent coefficients
    plug in unchanged.
    """

    def apply(self, t, x):
        raise NotImplementedError

    def drift(self, t, x):
        return self.apply(t, x)

    def diffusion(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        a = self.apply(t, x)
        d = x.shape[-1]
        out = np.zeros(x.shape[:-1] + (d, d))
        idx = np.arange(d)
        out[..., idx, idx] = a
        return out


@dataclass(frozen=True)
class IdentityCoeff(CoefficientFn):
    """f(t, x) = x."""

    def apply(self, t, x):
        return np.asarray(x, dtype=np.float64).copy()


@dataclass(frozen=True)
class ConstantCoeff(CoefficientFn):
    value: float = 0.0

    def apply(self, t, x):
        return np.full_like(np.asarray(x, dtype=np.float64), self.value)


@dataclass(frozen=True)
class AffineReversion(CoefficientFn):
    """f(t, x) = level - x."""

    level: float

    def apply(self, t, x):
        return self.level - np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class SqrtAbsCoeff(CoefficientFn):
    """f(t, x) = sqrt(|x|), componentwise, no clipping."""

    def apply(self, t, x):
        return np.sqrt(np.abs(np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class SmoothedSqrtAbs(CoefficientFn):
    """Lipschitz surrogate (x^2 + delta^2)^(1/4) of sqrt(|x|)."""

    delta: float = 0.05

    def __post_init__(self):
        if self.delta <= 0.0:
            raise NonPositiveInput("smoothing delta must be positive, got %g" % self.delta)

    def apply(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        return (x * x + self.delta * self.delta) ** 0.25


@dataclass(frozen=True)
class ShiftedCoeff(CoefficientFn):
    """base + eps, realizing the sup-norm perturbations mu~ = mu + eps."""

    base: CoefficientFn
    eps: float

    def apply(self, t, x):
        return self.base.apply(t, x) + self.eps


def unit_g(t):
    """g identically 1."""
    return np.ones_like(np.asarray(t, dtype=np.float64))


def exp_decay_g(t):
    """g(t) = exp(-t)."""
    return np.exp(-np.asarray(t, dtype=np.float64))


# ---------------------------------------------------------------------------
# Problems and the solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SveProblem:
    """The full data (d, m, g, K_mu, K_sigma, mu, sigma) of one equation.

    ``g`` must satisfy g(0) = 1 (the usual normalization); pass
    ``check_g0=False`` only for deliberately perturbed comparison problems.
    """

    d: int
    m: int
    g: object
    k_mu: Kernel
    k_sigma: Kernel
    mu: CoefficientFn
    sigma: CoefficientFn
    check_g0: bool = True

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise BadDims("need d >= 1 and m >= 1, got d=%d m=%d" % (self.d, self.m))
        if self.check_g0:
            g0 = float(np.asarray(self.g(0.0)))
            if abs(g0 - 1.0) > 1e-12:
                raise ValidationError("g(0) must equal 1, got %.6g" % g0)


def _kernel_weights(kernel, grid):
    # w[k] = mean of K over the k-th lag cell [(k-1) dt, k dt], k = 1..n;
    # w[0] is a placeholder and never read.
    n, dt = grid.n_steps, grid.dt
    k = np.arange(n + 1, dtype=np.float64)
    w = np.empty(n + 1)
    w[0] = np.nan
    if n >= 1:
        w[1:] = np.asarray(kernel.cell_average((k[1:] - 1.0) * dt, k[1:] * dt), dtype=np.float64)
    return w


def simulate_paths(problem, xis, increments, grid):
    """Solve the SVE for a batch of initial conditions and noise paths.

    Parameters
    ----------
    problem : SveProblem
    xis : ndarray, shape (P, d)
    increments : ndarray, shape (P, n_steps, m)
    grid : TimeGrid

    Returns
    -------
    ndarray, shape (P, n_steps+1, d)

    Raises
    ------
    NonFinitePath
        If any value overflows or turns NaN; the first bad node is reported.
    """
    xis = np.asarray(xis, dtype=np.float64)
    increments = np.asarray(increments, dtype=np.float64)
    if xis.ndim != 2 or xis.shape[1] != problem.d:
        raise ShapeMismatch("xis must have shape (P, %d), got %s" % (problem.d, (xis.shape,)))
    P = xis.shape[0]
    n, dt = grid.n_steps, grid.dt
    if increments.shape != (P, n, problem.m):
        raise DimMismatch(
            "increments must have shape (%d, %d, %d), got %s"
            % (P, n, problem.m, (increments.shape,))
        )

    gv = np.asarray(problem.g(grid.nodes), dtype=np.float64)
    w_mu = _kernel_weights(problem.k_mu, grid)
    w_sig = _kernel_weights(problem.k_sigma, grid)

    X = np.empty((P, n + 1, problem.d))
    X[:, 0] = xis * gv[0]
    drift_hist = np.empty((n, P, problem.d))
    noise_hist = np.empty((n, P, problem.d))

    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for i in range(1, n + 1):
            j = i - 1
            t_j = grid.nodes[j]
            x_j = X[:, j]
            drift_hist[j] = problem.mu.drift(t_j, x_j)
            noise_hist[j] = np.einsum(
                "pdm,pm->pd", problem.sigma.diffusion(t_j, x_j), increments[:, j]
            )
            # weights run k = i..1 as j runs 0..i-1
            X[:, i] = (
                xis * gv[i]
                + dt * np.einsum("j,jpd->pd", w_mu[i:0:-1], drift_hist[:i])
                + np.einsum("j,jpd->pd", w_sig[i:0:-1], noise_hist[:i])
            )

    if not np.isfinite(X).all():
        node_ok = np.isfinite(X).all(axis=(0, 2))
        bad = int(np.argmin(node_ok))
        raise NonFinitePath(
            "simulation produced a non-finite value at node %d (t=%.4g)"
            % (bad, grid.nodes[bad]),
            node=bad,
        )
    return X


def euler_maruyama(problem, xi, w):
    """Solve one path of the SVE driven by the Brownian path ``w``.

    ``xi`` is the d-dimensional initial value.  Returns the trajectory on
    ``w``'s grid.  See the module docstring for the scheme.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if xi.shape != (problem.d,):
        raise ShapeMismatch("xi must have shape (%d,), got %s" % (problem.d, xi.shape))
    if w.m != problem.m:
        raise DimMismatch("noise has m=%d but the problem needs m=%d" % (w.m, problem.m))
    values = simulate_paths(problem, xi[None, :], w.increments[None], w.grid)[0]
    return SamplePath(grid=w.grid, values=values)
