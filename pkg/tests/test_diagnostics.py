import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereflow.curvfun import SigmaK, evaluate_batch
from sphereflow.diagnostics import (
    decay_series,
    default_window,
    f_sigma_values,
    fit_decay,
    gradient_bound,
    radii_estimates,
    snapshot_diagnostics,
    trajectory_diagnostics,
    tracefree_identity,
)
from sphereflow.dual import polar_dual
from sphereflow.flow import (
    CONTRACTING,
    EXPANDING,
    FlowSpec,
    MaxRadiusAbove,
    MinRadiusBelow,
    run,
    spherical_Tstar,
)
from sphereflow.hypersurface import AxiGrid, perturbed_sphere, sphere


@pytest.fixture(scope="module")
def small_run():
    g = perturbed_sphere(AxiGrid(64, 2), np.pi / 4, 0.05, 2)
    traj = run(FlowSpec(CONTRACTING, SigmaK(2), 0.2, 40, MinRadiusBelow(0.05)), g)
    return traj, trajectory_diagnostics(traj, SigmaK(2))


def test_tracefree_examples():
    assert tracefree_identity([2.0, 2.0, 2.0]) == (0.0, 0.0)
    lhs, rhs = tracefree_identity([1.0, 2.0, 3.0])
    assert lhs == pytest.approx(2.0, rel=1e-15) and rhs == pytest.approx(2.0, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8))
def test_tracefree_identity_property(kap):
    lhs, rhs = tracefree_identity(kap)
    A2 = float(np.dot(kap, kap))
    assert abs(lhs - rhs) <= 1e-13 * A2
    assert rhs >= 0


def test_sphere_snapshot():
    r = 0.6
    g = sphere(AxiGrid(64, 2), r)
    T = spherical_Tstar(r)
    rec = snapshot_diagnostics(g, SigmaK(2), 0.0, T)
    assert rec.tracefree == 0.0 and rec.pinch_ratio == pytest.approx(1.0, abs=1e-14)
    assert rec.u_rescaled_dev <= 1e-14
    assert rec.theta == pytest.approx(r) and rec.tau == pytest.approx(-np.log(r))
    assert rec.rho_minus == pytest.approx(r, abs=1e-9) and rec.rho_plus == pytest.approx(r, abs=1e-9)
    assert rec.Ftilde_min == pytest.approx(r / np.tan(r), rel=1e-12)


def test_f_sigma_scale_invariant_at_zero():
    rng = np.random.Generator(np.random.MT19937(1))
    K = np.exp(rng.uniform(-1, 1, size=(50, 3)))
    for lam in (0.5, 2.0, 10.0):
        vals = []
        for M in (K, lam * K):
            F, _ = evaluate_batch(SigmaK(2), M)
            A2 = np.sum(M * M, axis=1)
            vals.append(f_sigma_values(F, A2, 3, 0.0))
        np.testing.assert_allclose(vals[0], vals[1], rtol=1e-12)
        assert np.argmax(vals[0]) == np.argmax(vals[1])


def test_fit_decay_examples():
    tau = np.linspace(0, 5, 40)
    f = fit_decay(list(zip(tau, 5 * np.exp(-3 * tau))), (0.0, 5.0))
    assert f.rate == pytest.approx(3.0, rel=1e-12) and f.residual <= 1e-12
    assert f.intercept == pytest.approx(np.log(5.0))
    tau = np.linspace(0, 10, 200)
    f = fit_decay(list(zip(tau, np.exp(-tau) * (1 + 0.01 * np.sin(tau)))), (0.0, 10.0))
    assert abs(f.rate - 1.0) <= 0.02
    f = fit_decay(list(zip(tau, np.full(200, 0.3))))
    assert abs(f.rate) < 1e-12


def test_fit_decay_errors():
    tau = np.linspace(0, 1, 20)
    with pytest.raises(ValueError):
        fit_decay(list(zip(tau, -np.ones(20))), (0.0, 1.0))
    with pytest.raises(ValueError):
        fit_decay(list(zip(tau[:5], np.ones(5))), (0.0, 1.0))
    with pytest.raises(ValueError):
        fit_decay(list(zip(tau, np.ones(20))), (1.0, 0.5))


def test_default_window():
    tau = np.linspace(0, 10, 101)
    vals = np.exp(-4 * tau)
    lo, hi = default_window(tau, vals)
    assert lo == pytest.approx(4.0)
    assert vals[tau <= hi].min() > 1e3 * np.finfo(float).eps


def test_radii():
    r = 0.7
    assert radii_estimates(sphere(AxiGrid(64, 2), r)) == (pytest.approx(r, abs=1e-9), pytest.approx(r, abs=1e-9))
    g = perturbed_sphere(AxiGrid(128, 2), np.pi / 4, 0.05, 2)
    lo, hi = radii_estimates(g)
    assert g.u.min() - 1e-9 <= lo < hi <= g.u.max() + 1e-9


def test_run_invariants(small_run):
    traj, recs = small_run
    taus = np.array([r.tau for r in recs])
    assert np.all(np.diff(taus) > 0)
    for r in recs:
        assert r.tracefree >= 0 and r.pinch_ratio >= 1.0
        assert r.rho_minus <= r.theta + 1e-6 and r.theta <= r.rho_plus + 1e-6
        assert np.isfinite(r.deviation_ratio)
    rng = np.array([r.Ftilde_max - r.Ftilde_min for r in recs])
    assert rng[-1] < rng[len(rng) // 2] < rng[0]
    for q in ("tracefree_rescaled", "Ftilde_range", "u_rescaled_dev", "dFtilde"):
        assert fit_decay(decay_series(recs, q)).rate > 0


def test_decay_series_rejects_unknown(small_run):
    with pytest.raises(ValueError):
        decay_series(small_run[1], "nonsense")


def test_expanding_diagnostics_and_gradient_bound():
    g = polar_dual(perturbed_sphere(AxiGrid(64, 2), np.pi / 4, 0.05, 2)).dual
    traj = run(FlowSpec(EXPANDING, SigmaK(2), 0.2, 40, MaxRadiusAbove(np.pi / 2 - 0.1)), g)
    recs = trajectory_diagnostics(traj, SigmaK(2))
    for (t, snap), rec in zip(traj.snapshots, recs):
        assert 0.1 <= rec.w_min <= rec.w_max <= 10.0
        v, bound = gradient_bound(snap)
        assert v <= bound
