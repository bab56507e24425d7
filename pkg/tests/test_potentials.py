import math

import numpy as np
import pytest
from scipy.integrate import quad

from heatvp.domains import Domain
from heatvp.fields import catalog_field
from heatvp.potentials import (
    PotentialEvaluator,
    b_operator,
    b_operator_detail,
    b_operator_many,
    gradient_many,
    newtonian_ball_constant,
    newtonian_potential,
    pde_residual,
    potential_of_time_derivative,
    volume_potential,
    volume_potential_detail,
    volume_potential_gradient,
    volume_potential_many,
)
from heatvp.quadrature import QuadConfig

BOX2 = Domain.unit_box(2, T=1.0)
BALL3 = Domain.unit_ball(3)
P0 = (0.5, (0.3, 0.6))

# regression values at the default QuadConfig (see the 1D oracle below for accuracy)
FROZEN_B_SEPARABLE_T2 = 0.058686629943397885
FROZEN_P_SEPARABLE_T2 = 0.011775176992646188


def _sep(n=2, **kw):
    return catalog_field("separable", n, **kw)


def _quad_potential_1d(t, x):
    """P[t sin(pi y)](t, x) on (0, 1) by nested adaptive quadrature."""

    def inner(tau):
        s = t - tau
        return quad(lambda y: math.exp(-((x - y) ** 2) / (4 * s)) / math.sqrt(4 * math.pi * s) * math.sin(math.pi * y), 0, 1, points=[x], epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    return quad(lambda tau: tau * inner(tau), 0, t, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def test_zero_density_gives_zero():
    z = catalog_field("zero", 2)
    ev = PotentialEvaluator(BOX2, z, QuadConfig())
    assert volume_potential(ev, P0) == 0.0
    assert b_operator(ev, P0) == 0.0
    assert potential_of_time_derivative(ev, P0) == 0.0
    assert np.all(volume_potential_gradient(ev, P0) == 0.0)
    assert newtonian_potential(z, BOX2, (0.5, 0.5)) == 0.0
    assert pde_residual(ev, P0) == 0.0


def test_ball_center_value_3d():
    ev = PotentialEvaluator(BALL3, catalog_field("constant", 3), QuadConfig())
    det = volume_potential_detail(ev, (0.3, (0.0, 0.0, 0.0)))
    assert det.value == pytest.approx(0.5, abs=1e-3)
    # the only deficit is the truncated tail, and it is reported
    assert abs(det.value - 0.5) <= 1.01 * det.tail_bound


@pytest.mark.parametrize("r", [0.0, 0.5])
def test_newtonian_ball_closed_form(r):
    h = catalog_field("constant", 3)
    val = newtonian_potential(h, BALL3, (r, 0.0, 0.0))
    assert val == pytest.approx(-(3 - r * r) / 6, abs=1e-4)
    assert newtonian_ball_constant((r, 0, 0), 3) == pytest.approx(-(3 - r * r) / 6)


def test_newtonian_disk_closed_form():
    h = catalog_field("constant", 2)
    disk = Domain.ball((0.0, 0.0), 2.0)
    for x in [(0.0, 0.0), (0.7, -0.4)]:
        assert newtonian_potential(h, disk, x) == pytest.approx(newtonian_ball_constant(x, 2, 2.0), abs=1e-6)


def test_one_dimensional_potential_against_adaptive_quadrature():
    I = Domain.unit_box(1, T=1.0)
    ev = PotentialEvaluator(I, _sep(1, t_terms=[[1.0, 1.0]]), QuadConfig())
    assert volume_potential(ev, (0.7, (0.25,))) == pytest.approx(_quad_potential_1d(0.7, 0.25), abs=1e-12)
    h = 1e-4
    fd = (_quad_potential_1d(0.7 + h, 0.25) - _quad_potential_1d(0.7 - h, 0.25)) / (2 * h)
    assert b_operator(ev, (0.7, (0.25,))) == pytest.approx(fd, abs=1e-8)


def test_frozen_regression_values():
    ev = PotentialEvaluator(BOX2, _sep(t_terms=[[1.0, 2.0]]), QuadConfig())
    assert b_operator(ev, P0) == pytest.approx(FROZEN_B_SEPARABLE_T2, rel=1e-9)
    assert volume_potential(ev, P0) == pytest.approx(FROZEN_P_SEPARABLE_T2, rel=1e-9)


def test_x0_independence_for_supported_density():
    f = catalog_field("bump", 2, t_terms=[[1.0, 2.0]])
    a = PotentialEvaluator(BOX2, f, QuadConfig(), x0=(0.5, 0.5))
    b = PotentialEvaluator(BOX2, f, QuadConfig(), x0=(0.2, 0.7))
    for p in [(0.4, (0.3, 0.3)), (0.9, (0.8, 0.45))]:
        assert abs(volume_potential(a, p) - volume_potential(b, p)) <= 1e-6


def test_x0_shifts_autonomous_potential_by_constant():
    h = catalog_field("constant", 2)
    disk = Domain.unit_ball(2)
    a = PotentialEvaluator(disk, h, QuadConfig(), x0=(0.0, 0.0))
    b = PotentialEvaluator(disk, h, QuadConfig(), x0=(0.5, 0.0))
    d1 = volume_potential(a, (0.0, (0.1, 0.2))) - volume_potential(b, (0.0, (0.1, 0.2)))
    d2 = volume_potential(a, (1.0, (-0.4, 0.3))) - volume_potential(b, (1.0, (-0.4, 0.3)))
    assert d1 == pytest.approx(d2, abs=1e-9)
    expected = newtonian_potential(h, disk, (0.0, 0.0)) - newtonian_potential(h, disk, (0.5, 0.0))
    assert d1 == pytest.approx(expected, abs=1e-6)


def test_evaluator_validation():
    with pytest.raises(ValueError):
        PotentialEvaluator(BOX2, catalog_field("constant", 3), QuadConfig())
    with pytest.raises(ValueError):
        PotentialEvaluator(BOX2, catalog_field("constant", 2), QuadConfig(), x0=(2.0, 0.0))
    ev = PotentialEvaluator(BOX2, _sep(), QuadConfig())
    with pytest.raises(ValueError):
        volume_potential(ev, (0.5, (1.5, 0.5)))
    with pytest.raises(ValueError):
        volume_potential(ev, (2.0, (0.5, 0.5)))


def test_unbounded_support_rejected_in_one_dimension():
    ev = PotentialEvaluator(Domain.unit_box(1), catalog_field("constant", 1), QuadConfig())
    with pytest.raises(ValueError):
        volume_potential(ev, (0.5, (0.5,)))


def test_time_independent_density_b_vanishes():
    for fam, kw in [("radial-power", {"power": 2.0}), ("spatial-polynomial", {"terms": [[1.0, [1, 2]], [-2.0, [0, 1]]]}), ("constant", {})]:
        ev = PotentialEvaluator(Domain.unit_ball(2), catalog_field(fam, 2, **kw), QuadConfig())
        assert abs(b_operator(ev, (0.3, (0.2, -0.1)))) <= 1e-6


def test_lemma42_finite_difference_oracle():
    f = _sep(t_terms=[[1.0, 1.0]])
    ev = PotentialEvaluator(BOX2, f, QuadConfig())
    t, x = 0.6, (0.3, 0.7)
    errs = []
    for h in (2e-3, 1e-3):
        fd = (volume_potential(ev, (t + h, x)) - volume_potential(ev, (t - h, x))) / (2 * h)
        errs.append(abs(fd - b_operator(ev, (t, x))))
    assert errs[1] <= max(1e-3, 100 * 1e-6)
    assert errs[1] < errs[0] / 3


def test_representative_independence():
    f = _sep(t_terms=[[1.0, 1.0], [0.3, 2.0]])
    g = f + catalog_field("spatial-polynomial", 2, terms=[[1.0, [2, 0]]])
    p = (0.7, (0.25, 0.5))
    a = potential_of_time_derivative(PotentialEvaluator(BOX2, f, QuadConfig()), p)
    b = potential_of_time_derivative(PotentialEvaluator(BOX2, g, QuadConfig()), p)
    assert abs(a - b) <= 1e-6


def test_zero_before_support():
    ev = PotentialEvaluator(BOX2, _sep(t_terms=[[1.0, 2.0]]), QuadConfig())
    assert potential_of_time_derivative(ev, (-0.3, (0.5, 0.5))) == 0.0
    assert volume_potential(ev, (0.0, (0.5, 0.5))) == 0.0


def test_supported_density_ignores_horizon():
    f = _sep(t_terms=[[1.0, 2.0]])
    a = volume_potential(PotentialEvaluator(BOX2, f, QuadConfig()), P0)
    b = volume_potential(PotentialEvaluator(BOX2, f, QuadConfig(horizon=3.0)), P0)
    assert a == b
    det = b_operator_detail(PotentialEvaluator(BOX2, f, QuadConfig()), P0)
    assert det.tail_bound == 0.0


def test_gradient_symmetry_and_fd():
    ev = PotentialEvaluator(Domain.unit_ball(2), catalog_field("radial-power", 2, power=2.0), QuadConfig())
    assert np.max(np.abs(volume_potential_gradient(ev, (0.5, (0.0, 0.0))))) <= 1e-6
    f = catalog_field("bump", 2, t_terms=[[1.0, 1.0]], center=[0.4, 0.6])
    ev = PotentialEvaluator(BOX2, f, QuadConfig())
    t, x = 0.5, np.array([0.35, 0.55])
    h = 1e-4
    for flag, op in ((False, volume_potential), (True, b_operator)):
        g = volume_potential_gradient(ev, (t, x), of_time_derivative=flag)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (op(ev, (t, x + e)) - op(ev, (t, x - e))) / (2 * h)
            assert g[i] == pytest.approx(fd, abs=1e-3)


def test_boundary_gradient_one_sided():
    f = _sep(t_terms=[[1.0, 2.0]], factors=[{"kind": "cos", "k": 1}, {"kind": "cos", "k": 1}])
    ev = PotentialEvaluator(BOX2, f, QuadConfig())
    t, x = 0.5, np.array([0.0, 0.4])
    g = volume_potential_gradient(ev, (t, x), of_time_derivative=True)
    h = 1e-4
    vals = [b_operator(ev, (t, x + np.array([k * h, 0.0]))) for k in range(3)]
    fd = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
    assert g[0] == pytest.approx(fd, abs=1e-4)


def test_batch_matches_pointwise():
    f = _sep(t_terms=[[1.0, 2.0]])
    ev = PotentialEvaluator(BOX2, f, QuadConfig())
    X = np.array([[0.3, 0.6], [0.0, 0.5], [1.0, 1.0]])
    B = b_operator_many(ev, 0.5, X)
    P = volume_potential_many(ev, 0.5, X)
    G = gradient_many(ev, 0.5, X[:1])
    for k, x in enumerate(X):
        assert B[k] == pytest.approx(b_operator(ev, (0.5, tuple(x))), rel=1e-12, abs=1e-15)
        assert P[k] == pytest.approx(volume_potential(ev, (0.5, tuple(x))), rel=1e-12, abs=1e-15)
    assert np.allclose(G[0], volume_potential_gradient(ev, (0.5, tuple(X[0]))), rtol=1e-12)


def test_linearity():
    f = _sep(t_terms=[[1.0, 1.0]])
    g = catalog_field("bump", 2, t_terms=[[1.0, 2.0]])
    cfg = QuadConfig()
    pf = b_operator(PotentialEvaluator(BOX2, f, cfg), P0)
    pg = b_operator(PotentialEvaluator(BOX2, g, cfg), P0)
    combo = b_operator(PotentialEvaluator(BOX2, f.scaled(2.0) + g.scaled(-3.0), cfg), P0)
    assert combo == pytest.approx(2 * pf - 3 * pg, rel=1e-12)


def test_pde_residual_and_trend():
    f = _sep(t_terms=[[1.0, 2.0]])
    ev = PotentialEvaluator(BOX2, f, QuadConfig())
    p = (0.6, (0.4, 0.55))
    r1 = abs(pde_residual(ev, p, (1e-3, 1e-3)))
    r2 = abs(pde_residual(ev, p, (5e-4, 5e-4)))
    assert r1 <= 1e-2
    assert r1 / r2 >= 4.0 or r2 < 1e-7
    with pytest.raises(ValueError):
        pde_residual(ev, (0.6, (0.0005, 0.5)), (1e-3, 1e-3))
