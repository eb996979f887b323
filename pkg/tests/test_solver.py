# Kernels, coefficient functions, and the Volterra Euler-Maruyama solver.

import time

import numpy as np
import pytest
from scipy import integrate

import _oracles as orc
from volterra_net import (
    AffineReversion,
    ShapeMismatch,
    ConstantCoeff,
    ConstantKernel,
    DimMismatch,
    ExponentialKernel,
    IdentityCoeff,
    LinearLagKernel,
    NonFinitePath,
    PiecewiseSignKernel,
    PowerGammaKernel,
    ShiftedCoeff,
    ShiftedKernel,
    SingularAtZero,
    SmoothedSqrtAbs,
    SqrtAbsCoeff,
    SveProblem,
    ValidationError,
    build_experiment,
    derive_seed,
    euler_maruyama,
    exp_decay_g,
    kernel_eval,
    make_uniform_grid,
    sample_brownian,
    simulate_paths,
    unit_g,
)


# ---------------------------------------------------------------- kernel values

def test_kernel_point_values():
    assert kernel_eval(ExponentialKernel(1.0), 0.0) == 1.0
    assert abs(kernel_eval(ExponentialKernel(2.0), 0.5) - np.exp(-1.0)) < 1e-15
    assert kernel_eval(PiecewiseSignKernel(1.25), 2.0) == -1.0
    assert kernel_eval(PiecewiseSignKernel(1.25), 1.25) == 1.0
    assert kernel_eval(PiecewiseSignKernel(1.25), 0.3) == 1.0
    assert kernel_eval(LinearLagKernel(), 0.7) == 0.7
    assert kernel_eval(ConstantKernel(3.0), 9.9) == 3.0


def test_power_gamma_frozen_value():
    got = kernel_eval(PowerGammaKernel(0.4), 0.1)
    assert abs(got - orc.POWER_GAMMA_04_AT_01) < 1e-13
    assert abs(got - 0.1 ** (-0.4) / orc.GAMMA_04) < 1e-13


def test_power_gamma_singularity_and_domain():
    with pytest.raises(SingularAtZero):
        kernel_eval(PowerGammaKernel(0.4), 0.0)
    with pytest.raises(SingularAtZero):
        kernel_eval(ShiftedKernel(PowerGammaKernel(0.4), 0.1), 0.0)
    for alpha in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ValidationError):
            PowerGammaKernel(alpha)


def test_kernel_negative_lag_rejected():
    with pytest.raises(ValidationError):
        kernel_eval(ExponentialKernel(1.0), -0.1)


def test_shifted_kernel():
    base = ExponentialKernel(1.0)
    sh = ShiftedKernel(base, 0.25)
    assert abs(kernel_eval(sh, 0.5) - (np.exp(-0.5) + 0.25)) < 1e-15


# ---------------------------------------------------------------- cell averages

@pytest.mark.parametrize("kernel", [
    ConstantKernel(2.5),
    LinearLagKernel(),
    ExponentialKernel(1.0),
    ExponentialKernel(3.0),
    PiecewiseSignKernel(1.25),
    ShiftedKernel(ExponentialKernel(1.0), 0.1),
])
def test_cell_average_matches_quadrature(kernel):
    for lo, hi in [(0.0, 0.1), (0.3, 0.4), (1.2, 1.3), (1.25, 1.35), (4.9, 5.0)]:
        ref, _ = integrate.quad(lambda u: kernel.value(u), lo, hi,
                                points=[1.25] if lo < 1.25 < hi else None)
        got = kernel.cell_average(lo, hi)
        assert abs(got - ref / (hi - lo)) < 1e-10


def test_cell_average_straddling_sign_flip():
    # cell [1.2, 1.3] around tau=1.25: average is (0.05 - 0.05)/0.1 = 0
    assert abs(PiecewiseSignKernel(1.25).cell_average(1.2, 1.3)) < 1e-15


def test_power_gamma_cell_average():
    k = PowerGammaKernel(0.4)
    # interior cell: plain quadrature oracle
    ref, _ = integrate.quad(k.value, 0.3, 0.4)
    assert abs(k.cell_average(0.3, 0.4) - ref / 0.1) < 1e-10
    # first cell contains the integrable singularity; closed form
    # (1/dt) * int_0^dt u^-a du / Gamma(a) = dt^-a / ((1-a) Gamma(a))
    dt = 0.1
    expect = dt ** (-0.4) / (0.6 * orc.GAMMA_04)
    assert np.isfinite(k.cell_average(0.0, dt))
    assert abs(k.cell_average(0.0, dt) - expect) < 1e-12


# ---------------------------------------------------------------- coefficients

def test_coefficient_variants():
    x = np.array([[1.0, -4.0]])
    np.testing.assert_array_equal(IdentityCoeff().apply(0.0, x), x)
    np.testing.assert_array_equal(AffineReversion(2.0).apply(0.0, x), 2.0 - x)
    np.testing.assert_allclose(SqrtAbsCoeff().apply(0.0, x), [[1.0, 2.0]])
    np.testing.assert_array_equal(ConstantCoeff(0.0).apply(0.0, x), 0.0 * x)
    smooth = SmoothedSqrtAbs(0.05).apply(0.0, np.array([[0.0]]))
    assert abs(smooth[0, 0] - 0.05 ** 0.5) < 1e-15
    shifted = ShiftedCoeff(IdentityCoeff(), 0.25).apply(0.0, x)
    np.testing.assert_array_equal(shifted, x + 0.25)


def test_g_normalization_enforced():
    kern = ConstantKernel(1.0)
    with pytest.raises(ValidationError):
        SveProblem(1, 1, lambda t: 2.0 * np.ones_like(t), kern, kern,
                   IdentityCoeff(), IdentityCoeff())
    # the documented escape hatch for perturbed-g studies
    prob = SveProblem(1, 1, lambda t: np.ones_like(t) + 0.1, kern, kern,
                      IdentityCoeff(), IdentityCoeff(), check_g0=False)
    assert prob.d == 1


# ---------------------------------------------------------------- solver

def test_zero_coefficient_identity():
    grid = make_uniform_grid(5.0, 0.1)
    kern = ExponentialKernel(1.0)
    prob = SveProblem(1, 1, exp_decay_g, kern, kern,
                      ConstantCoeff(0.0), ConstantCoeff(0.0))
    w = sample_brownian(grid, 1, seed=5)
    path = euler_maruyama(prob, np.array([2.0]), w)
    np.testing.assert_allclose(path.values[:, 0], 2.0 * np.exp(-grid.nodes),
                               rtol=0.0, atol=1e-14)


def test_constant_kernel_reduces_to_classical_em():
    # K == Constant(1): the scheme must match a separately coded SDE stepper
    grid = make_uniform_grid(5.0, 0.1)
    kern = ConstantKernel(1.0)
    prob = SveProblem(1, 1, unit_g, kern, kern,
                      AffineReversion(2.0), SqrtAbsCoeff())
    w = sample_brownian(grid, 1, seed=77)
    path = euler_maruyama(prob, np.array([1.5]), w)

    x = 1.5
    ref = [x]
    for i in range(grid.n_steps):
        x = x + (2.0 - x) * grid.dt + np.sqrt(abs(x)) * w.increments[i, 0]
        ref.append(x)
    np.testing.assert_allclose(path.values[:, 0], ref, rtol=1e-12)


def test_ou_mean_is_flat():
    # mean function of the exponential-kernel benchmark solves
    # m(t) = 2 e^-t + int_0^t e^-(t-s) m(s) ds  =>  m == 2
    spec = build_experiment("ou1d")
    grid = make_uniform_grid(5.0, 0.1)
    n_paths = 2000
    rng = np.random.default_rng(123)
    xis = np.full((n_paths, 1), 2.0)
    incs = np.stack([sample_brownian(grid, 1, seed=derive_seed(9, i)).increments
                     for i in range(n_paths)])
    paths = simulate_paths(spec.problem, xis, incs, grid)
    mean = paths.mean(axis=0)[:, 0]
    se = paths.std(axis=0)[:, 0] / np.sqrt(n_paths)
    assert np.all(np.abs(mean - 2.0) <= 3.0 * se + 0.05)


def test_pendulum_mean_is_cosh():
    # m(t) = 2 + int_0^t (t-s) m(s) ds  =>  m'' = m, m(0)=2, m'(0)=0
    spec = build_experiment("pendulum")
    grid = make_uniform_grid(2.0, 0.01)
    n_paths = 2000
    xis = np.full((n_paths, 1), 2.0)
    incs = np.stack([sample_brownian(grid, 1, seed=derive_seed(10, i)).increments
                     for i in range(n_paths)])
    paths = simulate_paths(spec.problem, xis, incs, grid)
    mean = paths.mean(axis=0)[:, 0]
    ref = 2.0 * np.cosh(grid.nodes)
    assert np.max(np.abs(mean - ref) / ref) < 0.05


def test_all_benchmarks_stay_finite():
    # bulk seeded runs across every benchmark problem: no overflow, no NaN
    grid = make_uniform_grid(5.0, 0.1)
    for name in ("pendulum", "ou1d", "ou2d", "rough_heston", "path_dependent"):
        spec = build_experiment(name)
        d, m = spec.problem.d, spec.problem.m
        n_paths = 2000
        xis = np.tile(np.linspace(0.5, 5.0, n_paths)[:, None], (1, d))
        incs = np.stack(
            [sample_brownian(grid, m, seed=derive_seed(32, i)).increments
             for i in range(n_paths)])
        paths = simulate_paths(spec.problem, xis, incs, grid)
        assert np.all(np.isfinite(paths)), name


def test_multidim_solver_shapes():
    spec = build_experiment("ou2d")
    grid = make_uniform_grid(5.0, 0.1)
    w = sample_brownian(grid, 2, seed=4)
    path = euler_maruyama(spec.problem, np.array([2.0, 2.0]), w)
    assert path.values.shape == (51, 2)
    assert np.all(np.isfinite(path.values))


def test_solver_input_validation():
    spec = build_experiment("ou1d")
    grid = make_uniform_grid(1.0, 0.1)
    w = sample_brownian(grid, 2, seed=1)  # wrong driver dim
    with pytest.raises(DimMismatch):
        euler_maruyama(spec.problem, np.array([2.0]), w)
    w1 = sample_brownian(grid, 1, seed=1)
    with pytest.raises(ShapeMismatch):
        euler_maruyama(spec.problem, np.array([2.0, 2.0]), w1)


def test_nonfinite_path_reports_node():
    # exponential blow-up: x' = 40 x with dt=0.1 overflows within 200 steps
    grid = make_uniform_grid(20.0, 0.1)
    kern = ConstantKernel(1.0)
    prob = SveProblem(1, 1, unit_g, kern, kern,
                      ShiftedCoeff(IdentityCoeff(), 0.0), ConstantCoeff(0.0))
    big = SveProblem(1, 1, unit_g, ConstantKernel(40.0), kern,
                     IdentityCoeff(), ConstantCoeff(0.0))
    w = sample_brownian(grid, 1, seed=2)
    with pytest.raises(NonFinitePath) as err:
        euler_maruyama(big, np.array([1e300]), w)
    assert err.value.node > 0


def test_quadratic_cost_scaling():
    # doubling n_steps at fixed T should cost ~4x; allow slack for timer noise
    spec = build_experiment("ou1d")
    n_paths = 2000
    xis = np.full((n_paths, 1), 2.0)

    def timed(dt):
        grid = make_uniform_grid(5.0, dt)
        incs = np.stack(
            [sample_brownian(grid, 1, seed=derive_seed(33, i)).increments
             for i in range(n_paths)])
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            simulate_paths(spec.problem, xis, incs, grid)
            best = min(best, time.perf_counter() - t0)
        return best

    slow = timed(0.025)  # 200 steps
    fast = timed(0.05)   # 100 steps
    assert slow / fast > 2.0
    assert slow / fast < 8.5
