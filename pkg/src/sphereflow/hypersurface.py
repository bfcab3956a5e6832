"""Axisymmetric radial graphs over S^n and their discrete geometry.

A hypersurface is stored as the geodesic radius u(theta) from a center point,
sampled at theta_j = j pi / N for j = 0..N, where theta is the polar angle on
S^n measured from the symmetry axis.  The profile curve lives in the great
2-sphere spanned by the center e0 and the axis direction e1, so a profile
point embeds as (cos u, sin u cos theta, sin u sin theta).

Derivatives use fourth-order central stencils with ghost nodes obtained by
even reflection across both poles.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .curvfun import evaluate_batch
from .errors import ConvexityError, DomainError, HemisphereError, NumericError, ParityError

GAMMA = 0.05  # distance kept from the antipode of the center
R2 = 1.0  # reference radius of the phi substitution
PARITY_TOL = 0.05


@dataclass(frozen=True)
class AxiGrid:
    N: int
    n: int

    def __post_init__(self):
        if self.N < 32 or self.N % 2:
            raise ValueError(f"N must be even and >= 32, got {self.N}")
        if not 1 <= self.n <= 8:
            raise ValueError(f"n must be in [1, 8], got {self.n}")

    @property
    def h(self):
        return np.pi / self.N

    @cached_property
    def theta(self):
        t = np.arange(self.N + 1) * self.h
        t[-1] = np.pi
        t.setflags(write=False)
        return t

    @cached_property
    def cot_theta(self):
        """cot(theta) at interior nodes (poles excluded)."""
        c = 1.0 / np.tan(self.theta[1:-1])
        c.setflags(write=False)
        return c


@dataclass
class GraphFunction:
    grid: AxiGrid
    u: np.ndarray
    center: str = "x0"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        if self.u.size != self.grid.N + 1:
            raise ValueError(f"expected {self.grid.N + 1} samples, got {self.u.size}")
        if not np.all(np.isfinite(self.u)):
            raise NumericError("graph contains non-finite values")
        bad = np.flatnonzero((self.u <= 0.0) | (self.u >= np.pi - GAMMA))
        if bad.size:
            raise HemisphereError(bad[0], self.u[bad[0]], f"u[{bad[0]}] = {self.u[bad[0]]:.6g} outside (0, pi - {GAMMA})")

    @property
    def theta(self):
        return self.grid.theta

    def copy(self, u=None):
        return GraphFunction(self.grid, self.u.copy() if u is None else u, self.center)


def antipode_label(center):
    return center[1:] if center.startswith("-") else "-" + center


@dataclass
class GeometryFields:
    phi: np.ndarray
    phi_d1: np.ndarray
    phi_d2: np.ndarray
    v: np.ndarray
    kappa_profile: np.ndarray
    kappa_orbit: np.ndarray
    H: np.ndarray
    normA2: np.ndarray
    F: np.ndarray | None = None
    F_grad: np.ndarray | None = None
    n: int = field(default=2, repr=False)

    @property
    def kappa(self):
        """Principal curvatures per node, shape (N+1, n)."""
        return kappa_matrix(self.kappa_profile, self.kappa_orbit, self.n)


@dataclass
class EmbeddedProfile:
    x: np.ndarray
    xt: np.ndarray


def kappa_matrix(kp, ko, n):
    K = np.empty((kp.size, n))
    K[:, 0] = kp
    K[:, 1:] = ko[:, None]
    return K


# ----------------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------------


def sphere(grid, r, center="x0"):
    if not 0.0 < r < np.pi / 2:
        raise ValueError(f"sphere radius must lie in (0, pi/2), got {r}")
    return GraphFunction(grid, np.full(grid.N + 1, float(r)), center)


def perturbed_sphere(grid, r, amp, mode, center="x0"):
    """u = r + amp cos(mode theta); raises ConvexityError if not strictly convex."""
    if mode < 1:
        raise ValueError("mode must be >= 1")
    g = GraphFunction(grid, r + amp * np.cos(mode * grid.theta), center)
    shape_operator(g)
    return g


# ----------------------------------------------------------------------------
# finite differences
# ----------------------------------------------------------------------------


def _extend(f):
    # even reflection: f(-theta) = f(theta), f(pi + theta) = f(pi - theta)
    return np.concatenate((f[2:0:-1], f, f[-2:-4:-1]))


def parity_defect(grid, f):
    """One-sided slopes at theta = 0 and theta = pi relative to the interior slope scale."""
    h = grid.h
    a = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    b = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    scale = np.max(np.abs(np.diff(f))) / h
    return max(abs(a), abs(b)), scale


def derivatives(grid, f, check=True):
    """Fourth-order first and second theta-derivatives of even nodal data."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.N + 1,):
        raise ValueError(f"expected {grid.N + 1} nodal values, got shape {f.shape}")
    if check:
        slope, scale = parity_defect(grid, f)
        if slope > PARITY_TOL * scale + 1e-10:
            raise ParityError(f"data is not even about the poles (one-sided slope {slope:.3g}, scale {scale:.3g})")
    return _stencils(grid.h, f)


def _stencils(h, f):
    e = _extend(f)
    fm2, fm1, fp1, fp2 = e[:-4], e[1:-3], e[3:-1], e[4:]
    outer = fm2 + fp2
    inner = fm1 + fp1
    d1 = ((fm2 - fp2) + 8.0 * (fp1 - fm1)) * (1.0 / (12.0 * h))
    d2 = (16.0 * inner - outer - 30.0 * f) * (1.0 / (12.0 * h * h))
    d1[0] = 0.0
    d1[-1] = 0.0
    return d1, d2


# ----------------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------------


def phi_from_u(g, r2=R2):
    """phi = log tan(u/2) - log tan(r2/2), the primitive of 1/sin u."""
    return np.log(np.tan(0.5 * g.u)) - np.log(np.tan(0.5 * r2))


def principal_curvatures(grid, u, check=True):
    """(phi, phi_theta, phi_thetatheta, v, kappa_profile, kappa_orbit) for nodal radii u."""
    phi = np.log(np.tan(0.5 * u)) - np.log(np.tan(0.5 * R2))
    if check:
        p1, p2 = derivatives(grid, phi)
    else:
        p1, p2 = _stencils(grid.h, phi)
    s, c = np.sin(u), np.cos(u)
    v2 = 1.0 + p1 * p1
    v = np.sqrt(v2)
    kp = (-p2 + v2 * c) / (v2 * v * s)
    ko = np.empty_like(kp)
    ko[1:-1] = (-p1[1:-1] * grid.cot_theta + c[1:-1]) / (v[1:-1] * s[1:-1])
    ko[0] = kp[0]
    ko[-1] = kp[-1]
    return phi, p1, p2, v, kp, ko


def _first_nonconvex(kp, ko):
    m = np.minimum(kp, ko)
    bad = np.flatnonzero(~(m > 0.0))
    if bad.size:
        j = bad[0]
        return j, m[j]
    return None


def shape_operator(g, spec=None, check_convex=True):
    """Principal curvatures (and optionally F and its gradient) at every node."""
    grid = g.grid
    phi, p1, p2, v, kp, ko = principal_curvatures(grid, g.u)
    if check_convex:
        hit = _first_nonconvex(kp, ko)
        if hit is not None:
            raise ConvexityError(*hit)
    n = grid.n
    H = kp + (n - 1) * ko
    A2 = kp * kp + (n - 1) * ko * ko
    F = dF = None
    if spec is not None:
        F, dF = evaluate_batch(spec, kappa_matrix(kp, ko, n))
    return GeometryFields(phi, p1, p2, v, kp, ko, H, A2, F, dF, n)


def embed(g):
    """Profile point x and its Gauss-map image x_tilde (exterior normal) in R^3."""
    th = g.theta.copy()
    u = g.u
    _, p1, _, v, _, _ = principal_curvatures(g.grid, u)
    s, c = np.sin(u), np.cos(u)
    if np.any(s * v < 1e-12):
        raise NumericError("degenerate profile tangent")
    ct, st = np.cos(th), np.sin(th)
    st[0] = 0.0
    st[-1] = 0.0
    x = np.stack((c, s * ct, s * st), axis=1)
    e_r = np.stack((-s, c * ct, c * st), axis=1)
    e_t = np.stack((np.zeros_like(th), -st, ct), axis=1)
    xt = (e_r - p1[:, None] * e_t) / v[:, None]
    return EmbeddedProfile(x, xt)


def arc_length(g):
    """Length of the profile curve from pole to pole (Simpson rule)."""
    d1, _ = derivatives(g.grid, g.u)
    integrand = np.sqrt(d1 * d1 + np.sin(g.u) ** 2)
    h = g.grid.h
    w = np.ones_like(integrand)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(h / 3.0 * np.dot(w, integrand))


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------


def dumps_graph(g):
    buf = io.StringIO()
    buf.write(f"{g.grid.n} {g.grid.N} {g.center}\n")
    for t, u in zip(g.theta, g.u):
        buf.write(f"{t:.17g} {u:.17g}\n")
    return buf.getvalue()


def loads_graph(text):
    lines = text.strip().splitlines()
    n, N, center = lines[0].split()
    data = np.array([[float(x) for x in line.split()] for line in lines[1:]])
    grid = AxiGrid(int(N), int(n))
    if data.shape != (grid.N + 1, 2):
        raise ValueError(f"expected {grid.N + 1} rows of 'theta u', got {data.shape}")
    if np.max(np.abs(data[:, 0] - grid.theta)) > 1e-12:
        raise ValueError("theta column does not match the uniform grid")
    return GraphFunction(grid, data[:, 1], center)


def write_graph(path, g):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_graph(g))


def read_graph(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="ascii") as fh:
        return loads_graph(fh.read())
