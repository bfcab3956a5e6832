"""Rescaled-flow observables and exponential decay fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvfun import Inverse, as_kappa, evaluate_batch
from .flow import CONTRACTING, EXPANDING, spherical_theta
from .hypersurface import derivatives, kappa_matrix, shape_operator

DEFAULT_SIGMAS = (0.1, 0.0)
GOLDEN_TOL = 1e-10


@dataclass
class DiagnosticsRecord:
    t: float
    tau: float
    theta: float
    u_min: float
    u_max: float
    pinch_ratio: float
    tracefree: float
    f_sigma: dict
    Ftilde_min: float
    Ftilde_max: float
    u_rescaled_dev: float
    w_min: float = float("nan")
    w_max: float = float("nan")
    rho_minus: float = float("nan")
    rho_plus: float = float("nan")
    # min over nodes of kappa_min / H
    pinch_min: float = float("nan")
    # max over nodes of (|A|^2 - n F^2) / (|A|^2 - H^2/n)
    deviation_ratio: float = float("nan")
    # max |d(F Theta)/d theta|, surrogate for the covariant gradient norm
    dFtilde_max: float = float("nan")
    extra: dict = field(default_factory=dict)


@dataclass
class DecayFit:
    rate: float
    intercept: float
    residual: float
    window: tuple


def tracefree_identity(kappa):
    """Both sides of |A|^2 - H^2/n = (1/n) sum_{i<j} (k_i - k_j)^2."""
    kap = np.asarray(kappa, dtype=float).reshape(-1)
    n = kap.size
    A2 = float(kap @ kap)
    H = float(kap.sum())
    d = kap[:, None] - kap[None, :]
    rhs = 0.5 * float(np.sum(d * d)) / n
    return A2 - H * H / n, rhs


def f_sigma_values(F, A2, n, sigma):
    """F^(sigma - 2) (|A|^2 - n F^2) nodewise."""
    return F ** (sigma - 2.0) * (A2 - n * F * F)


def _golden(f, a, b, tol=GOLDEN_TOL):
    """Minimize a unimodal f on [a, b] by golden-section search."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _axis_distances(g, s):
    """Geodesic distance from the axis point at signed offset s to each profile node."""
    u, th = g.u, g.theta
    c = np.cos(s) * np.cos(u) + np.sin(s) * np.sin(u) * np.cos(th)
    return np.arccos(np.clip(c, -1.0, 1.0))


def radii_estimates(g):
    """(inradius, circumradius) over centers on the symmetry axis."""
    lo, hi = -g.u[-1], g.u[0]
    _, rho_plus = _golden(lambda s: _axis_distances(g, s).max(), lo, hi)
    _, neg = _golden(lambda s: -_axis_distances(g, s).min(), lo, hi)
    return float(-neg), float(rho_plus)


def gradient_bound(g):
    """(max v, exp(kbar (u_max - u_min))) with kbar = cot(u_min), the slice curvature bound."""
    geo = shape_operator(g)
    kbar = 1.0 / np.tan(g.u.min())
    return float(geo.v.max()), float(np.exp(kbar * (g.u.max() - g.u.min())))


def snapshot_diagnostics(g, spec, t, Tstar, direction=CONTRACTING, sigmas=DEFAULT_SIGMAS):
    theta = spherical_theta(t, Tstar)
    n = g.grid.n
    geo = shape_operator(g, spec)
    kp, ko = geo.kappa_profile, geo.kappa_orbit
    K = kappa_matrix(kp, ko, n)
    kmin, kmax = K.min(axis=1), K.max(axis=1)
    A2, H = geo.normA2, geo.H
    F = geo.F
    tf = A2 - H * H / n
    if direction == CONTRACTING:
        Fscaled = F * theta
        dev = np.abs(g.u / theta - 1.0)
        w = None
    else:
        # speed 1/F_tilde of the expanding flow equals F on the polar hypersurface
        Ft, _ = evaluate_batch(Inverse(spec), K)
        Fscaled = theta / Ft
        w = (np.pi / 2 - g.u) / theta
        dev = np.abs(w - 1.0)
    denom = A2 - H * H / n
    num = A2 - n * F * F
    mask = denom > 1e-12 * A2
    dratio = float(np.max(num[mask] / denom[mask])) if mask.any() else 0.0
    dFt, _ = derivatives(g.grid, Fscaled, check=False)
    rho_m, rho_p = radii_estimates(g)
    return DiagnosticsRecord(
        t=float(t),
        tau=float(-np.log(theta)),
        theta=float(theta),
        u_min=float(g.u.min()),
        u_max=float(g.u.max()),
        pinch_ratio=float(kmax.max() / kmin.min()),
        tracefree=float(max(tf.max(), 0.0)),
        f_sigma={float(s): float(f_sigma_values(F, A2, n, s).max()) for s in sigmas},
        Ftilde_min=float(Fscaled.min()),
        Ftilde_max=float(Fscaled.max()),
        u_rescaled_dev=float(dev.max()),
        w_min=float(w.min()) if w is not None else float("nan"),
        w_max=float(w.max()) if w is not None else float("nan"),
        rho_minus=rho_m,
        rho_plus=rho_p,
        pinch_min=float((kmin / H).min()),
        deviation_ratio=dratio,
        dFtilde_max=float(np.abs(dFt).max()),
    )


def trajectory_diagnostics(traj, spec, sigmas=DEFAULT_SIGMAS, Tstar=None):
    """Diagnostics at every snapshot strictly before the estimated extinction time."""
    T = traj.Tstar_est if Tstar is None else Tstar
    return [snapshot_diagnostics(g, spec, t, T, traj.direction, sigmas) for t, g in traj.snapshots if t < T]


def default_window(taus, values):
    """Last 60% of the recorded tau range, restricted to values above 1e3 machine epsilon."""
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values > 1e3 * np.finfo(float).eps
    lo = taus[0] + 0.4 * (taus[-1] - taus[0])
    sel = ok & (taus >= lo)
    if not sel.any():
        return (float(lo), float(taus[-1]))
    return (float(taus[sel].min()), float(taus[sel].max()))


def fit_decay(series, window=None):
    """Least-squares fit log(value) = intercept - rate * tau over the window."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a list of (tau, value) pairs")
    taus, values = arr[:, 0], arr[:, 1]
    if window is None:
        window = default_window(taus, values)
    lo, hi = window
    if not hi > lo:
        raise ValueError(f"empty fit window {window}")
    sel = (taus >= lo) & (taus <= hi)
    if np.count_nonzero(sel) < 8:
        raise ValueError(f"need at least 8 points in the window, got {np.count_nonzero(sel)}")
    x, y = taus[sel], values[sel]
    if np.any(y <= 0.0):
        raise ValueError("values in the fit window must be positive")
    slope, intercept = np.polyfit(x, np.log(y), 1)
    resid = np.log(y) - (slope * x + intercept)
    return DecayFit(float(-slope), float(intercept), float(np.sqrt(np.mean(resid**2))), (float(lo), float(hi)))


def decay_series(records, quantity):
    """(tau, value) pairs of a named rescaled quantity over a list of records."""
    out = []
    for r in records:
        if quantity == "tracefree_rescaled":
            val = r.tracefree * r.theta**2
        elif quantity == "Ftilde_range":
            val = r.Ftilde_max - r.Ftilde_min
        elif quantity == "Ftilde_dev":
            val = max(abs(r.Ftilde_max - 1.0), abs(r.Ftilde_min - 1.0))
        elif quantity == "u_rescaled_dev":
            val = r.u_rescaled_dev
        elif quantity == "dFtilde":
            val = r.dFtilde_max
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
        out.append((r.tau, val))
    return out


def deviation_ratio(spec, kappa):
    """(|A|^2 - n F^2) / (|A|^2 - H^2/n) at a non-umbilic point."""
    kap = as_kappa(kappa)
    n = kap.size
    F = float(evaluate_batch(spec, kap[None, :])[0][0])
    A2 = float(kap @ kap)
    H = float(kap.sum())
    return (A2 - n * F * F) / (A2 - H * H / n)


__all__ = [
    "DecayFit",
    "DiagnosticsRecord",
    "EXPANDING",
    "decay_series",
    "fit_decay",
    "gradient_bound",
    "deviation_ratio",
    "radii_estimates",
    "snapshot_diagnostics",
    "tracefree_identity",
    "trajectory_diagnostics",
]
