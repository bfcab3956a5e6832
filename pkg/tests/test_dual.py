import numpy as np
import pytest

from sphereflow.curvfun import SigmaK
from sphereflow.dual import (
    check_dual_curvatures,
    dual_curvature_errors,
    even_spline,
    polar_dual,
    support_bracket,
)
from sphereflow.errors import HemisphereError
from sphereflow.hypersurface import AxiGrid, GraphFunction, perturbed_sphere, shape_operator, sphere


def prolate(N):
    return perturbed_sphere(AxiGrid(N, 2), np.pi / 4, 0.05, 2)


def test_sphere_dual():
    p = polar_dual(sphere(AxiGrid(64, 2), np.pi / 6))
    np.testing.assert_allclose(p.dual.u, np.pi / 3, atol=1e-14)
    assert p.dual.center == "-x0"
    assert polar_dual(p.dual).dual.center == "x0"


def test_sphere_reciprocity_and_bracket():
    p = polar_dual(sphere(AxiGrid(64, 2), np.pi / 6))
    # resampling roundoff is amplified by the second difference
    assert check_dual_curvatures(p, SigmaK(2)) <= 1e-10
    assert support_bracket(p) == (pytest.approx(0.0, abs=1e-15), pytest.approx(0.0, abs=1e-15))


def test_involution():
    for N in (64, 128):
        g = prolate(N)
        back = polar_dual(polar_dual(g).dual).dual
        assert np.max(np.abs(back.u - g.u)) <= 5 * g.grid.h**2


def test_support_relation():
    g = prolate(256)
    p = polar_dual(g)
    h = g.grid.h
    assert abs(g.u.max() - (np.pi / 2 - p.dual.u.min())) <= 5 * h**2
    lo, hi = support_bracket(p)
    assert abs(lo) <= 1e-4 and abs(hi) <= 1e-4


def test_reciprocity_converges():
    errs = [dual_curvature_errors(polar_dual(prolate(N)), SigmaK(2)) for N in (128, 256)]
    assert errs[1][0] <= 1e-3 and errs[1][1] <= 1e-3
    assert np.log2(errs[0][0] / errs[1][0]) >= 2.0


def test_order_reversal():
    grid = AxiGrid(128, 2)
    inner = perturbed_sphere(grid, 0.6, 0.04, 2)
    outer = perturbed_sphere(grid, 0.7, 0.04, 2)
    assert np.all(inner.u < outer.u)
    assert np.all(polar_dual(outer).dual.u < polar_dual(inner).dual.u)


def test_dual_stays_in_hemisphere():
    p = polar_dual(perturbed_sphere(AxiGrid(128, 2), 1.2, 0.1, 2))
    assert np.all(p.dual.u < np.pi / 2)
    shape_operator(p.dual)


def test_hemisphere_error():
    grid = AxiGrid(64, 2)
    with pytest.raises(HemisphereError):
        polar_dual(GraphFunction(grid, np.full(65, 1.6)))


def test_node_map_monotone():
    p = polar_dual(prolate(128))
    assert np.all(np.diff(p.theta_star) > 0)
    assert p.theta_star[0] == 0.0 and p.theta_star[-1] == np.pi


def test_even_spline_is_smooth_and_even():
    x = np.linspace(0, np.pi, 33)
    s = even_spline(x, np.cos(2 * x))
    t = np.linspace(0, np.pi, 200)
    assert np.max(np.abs(s(t) - np.cos(2 * t))) < 1e-5
    assert abs(s(0.0, 1)) < 1e-12 and abs(s(np.pi, 1)) < 1e-12


def test_transport_constant():
    p = polar_dual(prolate(64))
    np.testing.assert_allclose(p.transport(np.full(65, 2.5)), 2.5, rtol=1e-13)
