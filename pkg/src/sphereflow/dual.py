"""Polar duality through the Gauss map.

For a strictly convex graph u around a center c, the exterior unit normal
x_tilde(theta) traces the polar hypersurface.  Read in geodesic polar
coordinates around -c it is again an axisymmetric graph u*(theta*), which is
resampled onto the uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .curvfun import Inverse, evaluate_batch
from .errors import ConvexityError, HemisphereError
from .hypersurface import GraphFunction, antipode_label, embed, kappa_matrix, shape_operator


@dataclass
class DualPair:
    primal: GraphFunction
    dual: GraphFunction
    # dual polar angle and dual radius of each primal node, before resampling
    theta_star: np.ndarray
    u_star: np.ndarray

    def transport(self, values):
        """Move nodal values of the primal onto the dual grid via theta -> theta*."""
        return even_spline(self.theta_star, values)(self.dual.theta)


def even_spline(nodes, values):
    """Periodic quintic spline of data that is even about 0 and pi.

    ``nodes`` increase strictly from 0 to pi.  Quintic rather than cubic: the
    resampled graph is differentiated twice on the grid, and the cubic's
    irregular O(h^4) node errors would leave only O(h^2) curvatures.
    """
    t = np.concatenate((-nodes[:0:-1], nodes))
    y = np.concatenate((values[:0:-1], values))
    t[0] = -np.pi
    t[-1] = np.pi
    return make_interp_spline(t, y, k=5, bc_type="periodic")


def polar_dual(g):
    if np.any(g.u >= np.pi / 2):
        j = int(np.argmax(g.u >= np.pi / 2))
        raise HemisphereError(j, g.u[j], f"primal leaves the open hemisphere at node {j} (u = {g.u[j]:.6g})")
    shape_operator(g)
    xt = embed(g).xt
    u_star = np.arctan2(np.hypot(xt[:, 1], xt[:, 2]), -xt[:, 0])
    theta_star = np.arctan2(xt[:, 2], xt[:, 1])
    theta_star[0] = 0.0
    theta_star[-1] = np.pi
    steps = np.diff(theta_star)
    if np.any(steps <= 0.0):
        j = int(np.argmax(steps <= 0.0))
        raise ConvexityError(j, steps[j], f"dual polar angle not strictly increasing at node {j}")
    u_dual = even_spline(theta_star, u_star)(g.theta)
    dual = GraphFunction(g.grid, u_dual, antipode_label(g.center))
    return DualPair(g, dual, theta_star, u_star)


def dual_curvature_errors(p, spec):
    """(max |kappa_tilde_i kappa_i - 1|, max |F(primal) F_tilde(dual) - 1|) on the dual grid."""
    n = p.primal.grid.n
    gp = shape_operator(p.primal, spec)
    gd = shape_operator(p.dual)
    kp = p.transport(gp.kappa_profile)
    ko = p.transport(gp.kappa_orbit)
    Fp = p.transport(gp.F)
    err_k = max(np.max(np.abs(gd.kappa_profile * kp - 1.0)), np.max(np.abs(gd.kappa_orbit * ko - 1.0)))
    Ft, _ = evaluate_batch(Inverse(spec), kappa_matrix(gd.kappa_profile, gd.kappa_orbit, n))
    err_F = np.max(np.abs(Fp * Ft - 1.0))
    return float(err_k), float(err_F)


def check_dual_curvatures(p, spec):
    """Largest deviation from curvature reciprocity (and from F * F_tilde = 1)."""
    return max(dual_curvature_errors(p, spec))


def support_bracket(p):
    """Residuals (u_max + u*_min - pi/2, u_min + u*_max - pi/2)."""
    u, us = p.primal.u, p.dual.u
    return float(u.max() + us.min() - np.pi / 2), float(u.min() + us.max() - np.pi / 2)
