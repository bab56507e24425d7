import math

import numpy as np
import pytest

from heatvp.domains import Domain
from heatvp.kernels import DerivativeIndex, heat_kernel
from heatvp.quadrature import (
    QuadConfig,
    QuadratureError,
    build_space_rule,
    build_time_rule,
    gauss_legendre,
    graded_rule,
    kernel_on_grid,
    lag_rule,
    singular_product_integrate,
)


def ones(t, y):
    return np.ones(np.shape(t))


def test_gauss_legendre_exact_degree():
    x, w = gauss_legendre(4)
    for k in range(8):
        assert np.sum(w * x**k) == pytest.approx(1 / (k + 1), rel=1e-14)


def test_graded_rule_weights_sum_to_one():
    x, w = graded_rule(6, 2.0, 5)
    assert np.all(w > 0) and np.all((x > 0) & (x < 1))
    assert w.sum() == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize(
    "domain,volume",
    [
        (Domain.unit_ball(3), 4 * math.pi / 3),
        (Domain.unit_ball(2), math.pi),
        (Domain.unit_ball(1), 2.0),
        (Domain.box((0, -1), (2, 1)), 4.0),
        (Domain.unit_box(3), 1.0),
    ],
)
def test_space_rule_volume_and_positivity(domain, volume):
    rule = build_space_rule(domain, QuadConfig())
    assert rule.weights.sum() == pytest.approx(volume, rel=1e-10)
    assert np.all(rule.weights > 0)
    assert np.all(domain.contains(rule.nodes))


def test_box_rule_integrates_polynomials():
    rule = build_space_rule(Domain.unit_box(2), QuadConfig())
    assert rule.integrate(rule.nodes[:, 0] * rule.nodes[:, 1]) == pytest.approx(0.25, abs=1e-12)
    # degree 2m - 1 = 11 in one variable
    assert rule.integrate(rule.nodes[:, 0] ** 11) == pytest.approx(1 / 12, rel=1e-12)


def test_ball_rule_weakly_singular_integrand():
    rule = build_space_rule(Domain.unit_ball(3), QuadConfig())
    val = rule.integrate(1.0 / np.linalg.norm(rule.nodes, axis=1))
    assert val == pytest.approx(2 * math.pi, abs=1e-4)


@pytest.mark.parametrize("center", [(0.3, 0.2), (0.0, 0.5), (1.0, 1.0)])
def test_centered_box_rule_keeps_volume(center):
    # singularity-adapted rule about interior, edge and corner points
    rule = build_space_rule(Domain.unit_box(2), QuadConfig(), center=center)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-10)
    c = np.asarray(center)
    val = rule.integrate(1.0 / np.linalg.norm(rule.nodes - c, axis=1))
    fine = build_space_rule(Domain.unit_box(2), QuadConfig().refined(), center=center)
    assert val == pytest.approx(fine.integrate(1.0 / np.linalg.norm(fine.nodes - c, axis=1)), rel=1e-6)


def test_centered_rule_rejects_outside_point():
    with pytest.raises(ValueError):
        build_space_rule(Domain.unit_ball(2), QuadConfig(), center=(2.0, 0.0))


def test_sqrt_lag_rule_endpoint_singularity():
    s, w = lag_rule(1.0, QuadConfig())
    assert np.sum(w / np.sqrt(s)) == pytest.approx(2.0, abs=1e-8)


def test_lemma31_substitution_gamma_half():
    # int_0^inf s^-3/2 e^-1/s ds = Gamma(1/2); the tail beyond the span is ~2/sqrt(span)
    s, w = lag_rule(1e20, QuadConfig(), "lemma31")
    assert np.sum(w * s**-1.5 * np.exp(-1 / s)) == pytest.approx(math.sqrt(math.pi), abs=1e-8)


def test_time_rule_covers_support_exactly():
    cfg = QuadConfig()
    rule = build_time_rule(1.0, 0.0, cfg)
    assert rule.integrate(np.ones(len(rule.lags))) == pytest.approx(1.0, abs=1e-12)
    # nodes are stored as lags; t - lag can round to t for the tiniest ones
    assert np.all(rule.lags > 0) and np.all(rule.lags <= 1.0) and not rule.truncated
    wide = build_time_rule(1.0, 0.0, QuadConfig(horizon=5.0))
    assert np.array_equal(wide.lags, rule.lags)


def test_time_rule_truncation_and_empty():
    cfg = QuadConfig(horizon=50.0)
    r = build_time_rule(1.0, -math.inf, cfg)
    assert r.truncated and r.span == 50.0
    e = build_time_rule(-1.0, 0.0, cfg)
    assert e.empty and len(e.lags) == 0


def test_quad_config_validation():
    with pytest.raises(ValueError):
        QuadConfig(grading_exponent=1.0)
    with pytest.raises(ValueError):
        QuadConfig(time_points=0)
    with pytest.raises(ValueError):
        QuadConfig(substitution="cubic")
    r = QuadConfig().refined()
    assert r.space_points_per_dim == 12 and r.time_points == 16


def test_kernel_on_grid_matches_direct():
    rng = np.random.default_rng(1)
    s = rng.uniform(0.01, 2, (7, 1))
    z = rng.uniform(-1, 1, (1, 5, 2))
    K = kernel_on_grid(DerivativeIndex.zero(2), s, z, 2)
    direct = heat_kernel(np.broadcast_to(s, (7, 5)), np.broadcast_to(z, (7, 5, 2)), 2)
    assert np.allclose(K, direct, rtol=1e-14, atol=0)


def test_singular_integrate_zero_density():
    B = Domain.unit_ball(3)
    cfg = QuadConfig()
    res = singular_product_integrate(
        DerivativeIndex.zero(3), lambda t, y: np.zeros(np.shape(t)), 1.0, np.zeros(3), build_space_rule(B, cfg, center=np.zeros(3)), build_time_rule(1.0, 0.0, cfg)
    )
    assert res.value == 0.0


def test_singular_integrate_ball_center_long_time():
    B = Domain.unit_ball(3)
    cfg = QuadConfig()
    t = 1e8
    res = singular_product_integrate(DerivativeIndex.zero(3), ones, t, np.zeros(3), build_space_rule(B, cfg, center=np.zeros(3)), build_time_rule(t, 0.0, cfg))
    assert res.value == pytest.approx(0.5, abs=1e-3)
    fine = singular_product_integrate(
        DerivativeIndex.zero(3), ones, t, np.zeros(3), build_space_rule(B, cfg.refined(), center=np.zeros(3)), build_time_rule(t, 0.0, cfg.refined())
    )
    assert abs(fine.value - res.value) < 1e-8


def test_singular_integrate_reports_non_finite():
    B = Domain.unit_box(1)
    cfg = QuadConfig()

    def bad(t, y):
        return np.full(np.shape(t), np.nan)

    with pytest.raises(QuadratureError):
        singular_product_integrate(DerivativeIndex.zero(1), bad, 1.0, np.array([0.5]), build_space_rule(B, cfg), build_time_rule(1.0, 0.0, cfg))


def test_exclusion_radius_reports_mass():
    B = Domain.unit_box(2)
    cfg = QuadConfig()
    x = np.array([0.5, 0.5])
    args = (DerivativeIndex.zero(2), ones, 1.0, x, build_space_rule(B, cfg, center=x), build_time_rule(1.0, 0.0, cfg))
    full = singular_product_integrate(*args)
    cut = singular_product_integrate(*args, exclusion_radius=0.05)
    assert cut.excluded > 0
    assert cut.value + cut.excluded == pytest.approx(full.value, rel=1e-12)
