"""Method-of-lines integration of the contracting and expanding graph flows.

Contracting:  du/dt  = -F(kappa) v
Expanding:    du*/dt = v / F_tilde(kappa)      with F_tilde the inverse of F

Both are integrated with classical RK4 and a parabolic step-size bound; a step
that loses convexity or leaves the hemisphere is rejected and retried with
half the step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .curvfun import FunctionSpec, Inverse, evaluate_axisymmetric
from .dual import polar_dual
from .errors import ConvexityError, DomainError, HemisphereError, IntegratorError, SphereFlowError
from .hypersurface import GraphFunction, principal_curvatures

log = logging.getLogger(__name__)

CONTRACTING = "contracting"
EXPANDING = "expanding"

DT_MIN = 1e-12
DT_MAX = 1e-2
MAX_STEPS = 10_000_000


# ----------------------------------------------------------------------------
# stop rules and specs
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class MinRadiusBelow:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("threshold must be positive")

    def fired(self, t, u, kappa):
        return u.min() < self.eps


@dataclass(frozen=True)
class MaxRadiusAbove:
    val: float

    def __post_init__(self):
        if not self.val > 0:
            raise ValueError("threshold must be positive")

    def fired(self, t, u, kappa):
        return u.max() > self.val


@dataclass(frozen=True)
class TimeReached:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("threshold must be positive")

    def fired(self, t, u, kappa):
        return t >= self.t * (1.0 - 1e-14)


@dataclass(frozen=True)
class PinchRatioAbove:
    val: float

    def __post_init__(self):
        if not self.val > 0:
            raise ValueError("threshold must be positive")

    def fired(self, t, u, kappa):
        return kappa.max() / kappa.min() > self.val


@dataclass
class FlowSpec:
    direction: str
    curvature: FunctionSpec
    cfl: float = 0.2
    snapshot_stride: int = 100
    stop: object = field(default_factory=lambda: MinRadiusBelow(0.05))

    def __post_init__(self):
        if self.direction not in (CONTRACTING, EXPANDING):
            raise ValueError(f"direction must be {CONTRACTING!r} or {EXPANDING!r}")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.direction == EXPANDING and isinstance(self.stop, MaxRadiusAbove) and self.stop.val >= np.pi / 2:
            raise ValueError("MaxRadiusAbove threshold must be below pi/2 for expanding flows")

    @property
    def speed_function(self):
        return self.curvature if self.direction == CONTRACTING else Inverse(self.curvature)


@dataclass
class FlowState:
    t: float
    u: GraphFunction
    last_dt: float = 0.0
    step_count: int = 0


@dataclass
class Trajectory:
    snapshots: list
    Tstar_bracket: tuple
    Tstar_est: float
    direction: str = CONTRACTING
    dts: list = field(default_factory=list)
    snapshot_steps: list = field(default_factory=list)
    monotone: bool = True
    final: FlowState | None = None

    @property
    def times(self):
        return np.array([t for t, _ in self.snapshots])


class StepRejected(SphereFlowError):
    pass


# ----------------------------------------------------------------------------
# right-hand sides
# ----------------------------------------------------------------------------


def _geometry(grid, u):
    _, _, _, v, kp, ko = principal_curvatures(grid, u, check=False)
    m = np.minimum(kp, ko)
    if not np.all(m > 0.0):
        j = int(np.argmax(~(m > 0.0)))
        raise ConvexityError(j, m[j])
    return v, kp, ko


def _stage(grid, u, direction, spec):
    """Right-hand side and parabolic stiffness scale at every node."""
    v, kp, ko = _geometry(grid, u)
    if direction == CONTRACTING:
        F, Fp, Fo = evaluate_axisymmetric(spec, kp, ko, grid.n)
        return -F * v, np.maximum(Fp, Fo), v
    G, Gp, Go = evaluate_axisymmetric(Inverse(spec), kp, ko, grid.n)
    if np.any(G <= 0.0):
        raise DomainError("non-positive inverse curvature function")
    return v / G, np.maximum(Gp, Go) / G**2, v


def rhs_contracting(g, spec):
    """du/dt = -F v at every node."""
    return _stage(g.grid, g.u, CONTRACTING, spec)[0]


def rhs_expanding(g, spec):
    """du/dt = v / F_tilde at every node, F_tilde = Inverse(spec)."""
    return _stage(g.grid, g.u, EXPANDING, spec)[0]


# ----------------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------------


def _check_range(u, direction):
    if not np.all(np.isfinite(u)):
        raise StepRejected("non-finite values")
    if np.any(u <= 0.0):
        raise StepRejected("radius reached zero")
    if direction == EXPANDING and np.any(u >= np.pi / 2):
        j = int(np.argmax(u >= np.pi / 2))
        raise StepRejected(f"left the hemisphere at node {j}")
    if direction == CONTRACTING and np.any(u >= np.pi):
        raise StepRejected("left the sphere chart")


_REJECT = (ConvexityError, DomainError, HemisphereError, FloatingPointError)


def _rk4(grid, u, k1, dt, direction, spec):
    """RK4 update from a precomputed first stage; returns (u_new, stage at u_new)."""
    try:
        # trial states may leave the chart; the NaNs they produce fail the convexity test
        with np.errstate(invalid="ignore", divide="ignore"):
            return _rk4_stages(grid, u, k1, dt, direction, spec)
    except _REJECT as exc:
        raise StepRejected(str(exc)) from exc


def _rk4_stages(grid, u, k1, dt, direction, spec):
    k2 = _stage(grid, u + 0.5 * dt * k1, direction, spec)[0]
    k3 = _stage(grid, u + 0.5 * dt * k2, direction, spec)[0]
    k4 = _stage(grid, u + dt * k3, direction, spec)[0]
    unew = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_range(unew, direction)
    return unew, _stage(grid, unew, direction, spec)


def step_rk4(state, spec, dt):
    """One RK4 step; raises StepRejected if the result is not admissible."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.u.grid
    k1 = _stage(grid, state.u.u, spec.direction, spec.curvature)[0]
    unew, _ = _rk4(grid, state.u.u, k1, dt, spec.direction, spec.curvature)
    return FlowState(state.t + dt, state.u.copy(unew), dt, state.step_count + 1)


def _dt_from_stage(grid, u, v_lam, cfl):
    v, lam = v_lam
    dt = cfl * grid.h**2 * np.min(np.sin(u) ** 2 / (lam * v))
    return float(np.clip(dt, DT_MIN, DT_MAX))


def adaptive_dt(state, spec):
    """cfl * h^2 * min(sin^2 u / (lambda v)), lambda the largest speed derivative."""
    g = state.u
    _, lam, v = _stage(g.grid, g.u, spec.direction, spec.curvature)
    return _dt_from_stage(g.grid, g.u, (v, lam), spec.cfl)


class _Stepper:
    """Keeps the first RK stage of the current state so it is computed once per step."""

    def __init__(self, spec, g0):
        self.spec = spec
        self.grid = g0.grid
        self.t = 0.0
        self.u = g0.u.copy()
        self.steps = 0
        self._stage = _stage(self.grid, self.u, spec.direction, spec.curvature)

    def dt(self):
        return _dt_from_stage(self.grid, self.u, (self._stage[2], self._stage[1]), self.spec.cfl)

    def try_step(self, dt):
        unew, stage = _rk4(self.grid, self.u, self._stage[0], dt, self.spec.direction, self.spec.curvature)
        self.t += dt
        self.u = unew
        self.steps += 1
        self._stage = stage

    def advance(self, dt):
        """Step by dt, halving on rejection; returns the dt actually used."""
        while True:
            try:
                self.try_step(dt)
                return dt
            except StepRejected as exc:
                dt *= 0.5
                log.debug("step rejected at t=%.6g (%s); retrying with dt=%.3g", self.t, exc, dt)
                if dt < DT_MIN:
                    raise IntegratorError(f"{self.spec.direction} flow: step size underflow at t = {self.t:.9g} ({exc})") from exc

    def advance_exact(self, dt):
        """Advance by exactly dt, splitting into halves when a full step is rejected."""
        try:
            self.try_step(dt)
            return
        except StepRejected as exc:
            if dt / 2 < DT_MIN:
                raise IntegratorError(f"{self.spec.direction} flow: step size underflow at t = {self.t:.9g} ({exc})") from exc
        steps = self.steps
        self.advance_exact(dt / 2)
        self.advance_exact(dt / 2)
        self.steps = steps + 1

    def state(self, g0):
        return FlowState(self.t, g0.copy(self.u.copy()), 0.0, self.steps)


# ----------------------------------------------------------------------------
# spherical reference solution
# ----------------------------------------------------------------------------


def spherical_Tstar(r0):
    """Extinction time of the contracting sphere of radius r0."""
    return -np.log(np.cos(r0))


def spherical_theta(t, Tstar):
    """Radius arccos(exp(t - T*)) of the contracting sphere with extinction time T*."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= Tstar):
        raise DomainError(f"t must be below T* = {Tstar}")
    out = np.arccos(np.exp(t - Tstar))
    return float(out) if out.ndim == 0 else out


def tstar_bracket(t, u, direction=CONTRACTING):
    """Extinction-time bracket implied by min u <= Theta(t, T*) <= max u."""
    if direction == CONTRACTING:
        a = t - np.log(np.cos(u.min()))
        b = t - np.log(np.cos(u.max()))
    else:
        # the polar radii satisfy pi/2 - max u* <= Theta <= pi/2 - min u*
        a = t - np.log(np.sin(u.max()))
        b = t - np.log(np.sin(u.min()))
    return (float(min(a, b)), float(max(a, b)))


# ----------------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------------


def _finish(snapshots, steps, dts, direction, state):
    lo, hi = tstar_bracket(state.t, state.u.u, direction)
    if direction == CONTRACTING:
        ext = np.array([g.u.max() for _, g in snapshots])
        monotone = bool(np.all(np.diff(ext) <= 0.0))
    else:
        ext = np.array([g.u.min() for _, g in snapshots])
        monotone = bool(np.all(np.diff(ext) >= 0.0))
    return Trajectory(snapshots, (lo, hi), 0.5 * (lo + hi), direction, dts, steps, monotone, state)


def run(spec, g0, max_steps=MAX_STEPS, on_step=None):
    """Integrate from g0 until the stop rule fires."""
    if spec.direction == EXPANDING and np.any(g0.u >= np.pi / 2):
        j = int(np.argmax(g0.u >= np.pi / 2))
        raise HemisphereError(j, g0.u[j])
    st = _Stepper(spec, g0)
    snapshots = [(0.0, g0.copy())]
    steps = [0]
    dts = []
    stop = spec.stop
    while True:
        dt = st.dt()
        if isinstance(stop, TimeReached):
            dt = min(dt, stop.t - st.t)
        dts.append(st.advance(dt))
        if on_step is not None:
            on_step(st.t, st.u)
        kappa = None
        if isinstance(stop, PinchRatioAbove):
            _, kp, ko = _geometry(st.grid, st.u)
            kappa = np.concatenate((kp, ko))
        fired = stop.fired(st.t, st.u, kappa)
        if fired or st.steps % spec.snapshot_stride == 0:
            snapshots.append((st.t, g0.copy(st.u.copy())))
            steps.append(st.steps)
        if fired:
            break
        if st.steps >= max_steps:
            raise IntegratorError(f"{spec.direction} flow: no stop after {max_steps} steps (t = {st.t:.9g})")
    return _finish(snapshots, steps, dts, spec.direction, st.state(g0))


def replay(spec, g0, dts, snapshot_steps):
    """Integrate with a prescribed sequence of step sizes, snapshotting at given step counts."""
    st = _Stepper(spec, g0)
    wanted = set(snapshot_steps)
    snapshots = [(0.0, g0.copy())] if 0 in wanted else []
    steps = [0] if 0 in wanted else []
    for i, dt in enumerate(dts, start=1):
        try:
            st.advance_exact(dt)
        except IntegratorError as exc:
            raise IntegratorError(f"replayed {spec.direction} flow failed at step {i}: {exc}") from exc
        if i in wanted:
            snapshots.append((st.t, g0.copy(st.u.copy())))
            steps.append(i)
    return _finish(snapshots, steps, list(dts), spec.direction, st.state(g0))


class DualRunError(SphereFlowError):
    """Failure inside dual_run, tagged with the flow and time it came from."""

    def __init__(self, flow, t, cause):
        self.flow = flow
        self.t = t
        self.cause = cause
        where = "" if t is None else f" at t = {t:.9g}"
        super().__init__(f"{flow}{where}: {cause}")


@dataclass
class DualRunReport:
    times: np.ndarray
    distance: np.ndarray
    contracting: Trajectory
    expanding: Trajectory

    @property
    def max_d(self):
        return float(self.distance.max())


def dual_run(specF, g0, stop, cfl=0.2, snapshot_stride=100):
    """Run the contracting flow from g0 and the expanding flow from its polar dual on
    the same time grid, comparing polar(M(t)) with the expanding solution."""
    cspec = FlowSpec(CONTRACTING, specF, cfl, snapshot_stride, stop)
    espec = FlowSpec(EXPANDING, specF, cfl, snapshot_stride, stop)
    try:
        ctraj = run(cspec, g0)
    except SphereFlowError as exc:
        raise DualRunError(CONTRACTING, None, exc) from exc
    try:
        d0 = polar_dual(g0).dual
        etraj = replay(espec, d0, ctraj.dts, ctraj.snapshot_steps)
    except SphereFlowError as exc:
        raise DualRunError(EXPANDING, None, exc) from exc
    times, dist = [], []
    for (tc, gc), (te, ge) in zip(ctraj.snapshots, etraj.snapshots):
        try:
            pd = polar_dual(gc).dual
        except SphereFlowError as exc:
            raise DualRunError("polar dual of " + CONTRACTING, tc, exc) from exc
        times.append(tc)
        dist.append(float(np.max(np.abs(pd.u - ge.u))))
    return DualRunReport(np.array(times), np.array(dist), ctraj, etraj)
