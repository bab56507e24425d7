import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from heatvp.kernels import (
    DerivativeIndex,
    KernelSampler,
    bound_ratio,
    check_kernel_bound,
    derivative_polynomial,
    heat_kernel,
    heat_kernel_derivative,
    laplace_kernel,
    laplace_kernel_gradient,
    monitored_indices,
    sphere_measure,
)

# frozen reference values (direct formula evaluation)
S1_T1_X0 = 0.28209479177387814
S3_T1_R2 = 0.008258301266124230


def test_heat_kernel_reference_values():
    assert heat_kernel(1.0, 0.0, 1) == pytest.approx(S1_T1_X0, rel=1e-14)
    assert heat_kernel(1.0, [2.0, 0.0, 0.0], 3) == pytest.approx(S3_T1_R2, rel=1e-12)
    assert heat_kernel(1.0, [0.0, 0.0, 2.0], 3) == pytest.approx((4 * math.pi) ** -1.5 * math.exp(-1), rel=1e-14)


def test_heat_kernel_vanishes_for_nonpositive_time():
    assert heat_kernel(-1.0, [0.3, -2.0, 1.0], 3) == 0.0
    assert heat_kernel(0.0, [0.5], 1) == 0.0


def test_heat_kernel_rejects_origin_and_dimension():
    with pytest.raises(ValueError):
        heat_kernel(0.0, [0.0, 0.0], 2)
    with pytest.raises(ValueError):
        heat_kernel(1.0, [0.0] * 4, 4)
    with pytest.raises(ValueError):
        heat_kernel_derivative(DerivativeIndex.zero(2), 0.0, [0.0, 0.0], 2)


def test_heat_kernel_batch_shapes():
    t = np.array([0.5, 1.0, -1.0])
    x = np.zeros((3, 2))
    out = heat_kernel(t, x, 2)
    assert out.shape == (3,)
    assert out[2] == 0.0
    assert out[1] == pytest.approx(1 / (4 * math.pi))


def test_time_derivative_reference_value():
    v = heat_kernel_derivative(DerivativeIndex.of(1, h=1), 1.0, 0.0, 1)
    assert v == pytest.approx(-0.5 * (4 * math.pi) ** -0.5, rel=1e-14)
    # finite-difference oracle, step 1e-5
    h = 1e-5
    fd = (heat_kernel(1 + h, 0.0, 1) - heat_kernel(1 - h, 0.0, 1)) / (2 * h)
    assert abs(fd - v) < 1e-6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_odd_derivative_vanishes_at_origin(n):
    assert heat_kernel_derivative(DerivativeIndex.of(n, {0: 1}), 1.0, np.zeros(n), n) == 0.0


def test_derivative_index_validation():
    with pytest.raises(ValueError):
        DerivativeIndex.of(2, {0: 2}, h=2).validate(2)
    with pytest.raises(ValueError):
        DerivativeIndex((1, 0), 0).validate(3)
    idx = DerivativeIndex.of(3, {0: 1, 2: 1}, h=1)
    assert idx.order == 2 and idx.h == 1


def test_derivative_polynomial_of_zero_index():
    assert derivative_polynomial(DerivativeIndex.zero(2), 2) == (((0, 0, 0), 1.0),)


def _fd_derivative(idx, t, x, n, step=1e-3):
    """Nested central differences of heat_kernel."""

    def f(tt, xx):
        return heat_kernel(tt, xx, n)

    def apply(fun, axis):
        def g(tt, xx):
            if axis == "t":
                return (fun(tt + step, xx) - fun(tt - step, xx)) / (2 * step)
            e = np.zeros(n)
            e[axis] = step
            return (fun(tt, xx + e) - fun(tt, xx - e)) / (2 * step)

        return g

    fun = f
    for i, k in enumerate(idx.eta):
        for _ in range(k):
            fun = apply(fun, i)
    for _ in range(idx.h):
        fun = apply(fun, "t")
    return fun(t, np.asarray(x, dtype=float))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_derivatives_match_finite_differences(n):
    rng = np.random.default_rng(4)
    for idx in monitored_indices(n):
        for _ in range(3):
            t = rng.uniform(0.5, 2.0)
            x = rng.uniform(-1, 1, n)
            exact = heat_kernel_derivative(idx, t, x, n)
            coarse = abs(_fd_derivative(idx, t, x, n, 2e-3) - exact)
            fine = abs(_fd_derivative(idx, t, x, n, 1e-3) - exact)
            assert fine < 1e-5
            # O(step^2): halving the step cuts the error ~4x (unless at roundoff)
            assert fine < 0.35 * coarse or fine < 1e-9


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kernel_solves_heat_equation(n):
    rng = np.random.default_rng(n)
    t = rng.uniform(0.05, 3.0, 50)
    x = rng.uniform(-2, 2, (50, n))
    dt = heat_kernel_derivative(DerivativeIndex.of(n, h=1), t, x, n)
    lap = sum(heat_kernel_derivative(DerivativeIndex.of(n, {i: 2}), t, x, n) for i in range(n))
    scale = np.abs(dt) + np.abs(lap) + 1e-300
    assert np.max(np.abs(dt - lap) / scale) < 1e-10


def test_kernel_normalization_1d():
    x = np.linspace(-40, 40, 200001)
    vals = heat_kernel(np.full(x.size, 2.0), x[:, None], 1)
    total = trapezoid(vals, x)
    assert total == pytest.approx(1.0, abs=1e-10)
    inside = x[(x > -1) & (x < 1)]
    part = trapezoid(heat_kernel(np.full(inside.size, 2.0), inside[:, None], 1), inside)
    assert part < 1.0


def test_sphere_measure_values():
    assert sphere_measure(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_measure(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_measure(4) == pytest.approx(2 * math.pi**2, rel=1e-15)
    assert sphere_measure(1) == 2.0
    with pytest.raises(ValueError):
        sphere_measure(0)


def test_laplace_kernel_values():
    assert laplace_kernel([1.0, 0.0], 2) == 0.0
    assert laplace_kernel([0.0, 0.0, 1.0], 3) == pytest.approx(-1 / (4 * math.pi), rel=1e-14)
    assert laplace_kernel([2.0, 0.0, 0.0], 3) == pytest.approx(-1 / (8 * math.pi), rel=1e-14)
    assert laplace_kernel([3.0], 1) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        laplace_kernel([0.0, 0.0], 2)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_laplace_gradient_matches_fd(n):
    x = np.linspace(0.3, 0.9, n)
    g = laplace_kernel_gradient(x, n)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd = (laplace_kernel(x + e, n) - laplace_kernel(x - e, n)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bound_fit_zero_index(n):
    exact = (4 * math.pi) ** (-n / 2)
    fit = check_kernel_bound(DerivativeIndex.zero(n), n, KernelSampler(count=10_000))
    assert abs(fit.fitted_constant / exact - 1) < 0.01
    origin = check_kernel_bound(DerivativeIndex.zero(n), n, KernelSampler(count=100, origin_only=True))
    assert origin.fitted_constant == pytest.approx(exact, rel=1e-14)


def test_bound_fit_mixed_index_stable():
    idx = DerivativeIndex.of(2, {0: 1, 1: 1}, h=1)
    a = check_kernel_bound(idx, 2, KernelSampler(count=10_000, seed=0))
    b = check_kernel_bound(idx, 2, KernelSampler(count=40_000, seed=1))
    assert math.isfinite(a.fitted_constant)
    assert abs(b.fitted_constant / a.fitted_constant - 1) < 0.10


def test_bound_ratio_dominates_samples():
    idx = DerivativeIndex.of(3, {0: 1}, h=1)
    fit = check_kernel_bound(idx, 3, KernelSampler(count=2000))
    t, x = KernelSampler(count=2000).points(3)
    lhs = np.abs(heat_kernel_derivative(idx, t, x, 3))
    rhs = fit.fitted_constant * t ** (-1.5 - 0.5 - 1) * np.exp(-np.sum(x * x, axis=1) / (8 * t))
    assert np.all(lhs <= rhs * (1 + 1e-12))
    with pytest.raises(ValueError):
        bound_ratio(idx, [-1.0], [[0.1, 0, 0]], 3)


def test_empty_sampler_rejected():
    with pytest.raises(ValueError):
        check_kernel_bound(DerivativeIndex.zero(1), 1, KernelSampler(count=0))
