"""Command line front end: ``sphereflow run|dual-check|concavity-audit|benchmark``.

Exit codes: 0 success, 1 tolerance not met, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import svg
from .curvfun import (
    Inverse,
    MeanNormalized,
    SigmaK,
    check_classK_bound,
    check_ineq_371,
    check_strict_concavity,
    parse_spec,
)
from .diagnostics import DEFAULT_SIGMAS, decay_series, fit_decay, gradient_bound, snapshot_diagnostics
from .dual import polar_dual
from .errors import SphereFlowError
from .flow import (
    CONTRACTING,
    EXPANDING,
    FlowSpec,
    MaxRadiusAbove,
    MinRadiusBelow,
    PinchRatioAbove,
    TimeReached,
    dual_run,
    run,
    spherical_theta,
    tstar_bracket,
)
from .hypersurface import AxiGrid, perturbed_sphere, sphere, write_graph

log = logging.getLogger("sphereflow")

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_OUT = "sphereflow_out"

STOP_RULES = {
    "min_radius_below": MinRadiusBelow,
    "max_radius_above": MaxRadiusAbove,
    "time_reached": TimeReached,
    "pinch_ratio_above": PinchRatioAbove,
}

FIT_QUANTITIES = ("tracefree_rescaled", "Ftilde_range", "Ftilde_dev", "u_rescaled_dev", "dFtilde")

SERIES_COLUMNS = ("t", "theta_ref", "u_min", "u_max", "pinch_ratio", "F_tilde_min", "F_tilde_max", "f_sigma", "tracefree")


class ConfigError(Exception):
    pass


def num(x):
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


# ----------------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    name: str
    n: int = 2
    N: int = 128
    curvature: dict = field(default_factory=lambda: {"name": "sigma", "k": 2})
    shape: dict = field(default_factory=lambda: {"type": "sphere", "r": 0.7853981633974483})
    direction: str = CONTRACTING
    cfl: float = 0.2
    stop: dict = field(default_factory=lambda: {"type": "min_radius_below", "value": 0.05})
    snapshot_stride: int = 100
    sigmas: list = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    tolerance: float | None = None
    seed: int = 42
    samples: int = 1000
    out: str | None = None

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        if "name" not in d:
            raise ConfigError("config needs a 'name'")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", self.name) or self.name in (".", ".."):
            raise ConfigError(f"name must be a nonempty filesystem-safe string, got {self.name!r}")
        if self.direction not in (CONTRACTING, EXPANDING):
            raise ConfigError(f"direction must be {CONTRACTING!r} or {EXPANDING!r}")
        if not isinstance(self.sigmas, list) or not self.sigmas:
            raise ConfigError("sigmas must be a nonempty list")
        try:
            self.grid()
            self.spec().check_dim(self.n)
            self.flow_spec()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(self.shape, dict) or self.shape.get("type") not in ("sphere", "perturbed_sphere"):
            raise ConfigError(f"shape type must be 'sphere' or 'perturbed_sphere', got {self.shape!r}")
        try:
            self.initial()
        except (SphereFlowError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid initial shape: {exc}") from exc

    def grid(self):
        return AxiGrid(int(self.N), int(self.n))

    def spec(self):
        c = self.curvature
        if not isinstance(c, dict) or "name" not in c:
            raise ConfigError("curvature must be an object with a 'name'")
        return parse_spec(str(c["name"]), c.get("k"))

    def stop_rule(self):
        s = self.stop
        if not isinstance(s, dict) or "type" not in s or "value" not in s:
            raise ConfigError("stop must be an object with 'type' and 'value'")
        key = re.sub(r"(?<!^)(?=[A-Z])", "_", str(s["type"])).lower()
        if key not in STOP_RULES:
            raise ConfigError(f"unknown stop rule {s['type']!r}")
        return STOP_RULES[key](float(s["value"]))

    def flow_spec(self):
        return FlowSpec(self.direction, self.spec(), float(self.cfl), int(self.snapshot_stride), self.stop_rule())

    def initial(self):
        """Initial graph; ``shape.polar_dual`` replaces it by its polar hypersurface."""
        grid = self.grid()
        sh = self.shape
        if sh["type"] == "sphere":
            g = sphere(grid, float(sh["r"]))
        else:
            g = perturbed_sphere(grid, float(sh["r"]), float(sh.get("amp", 0.0)), int(sh.get("mode", 2)))
        if sh.get("polar_dual", False):
            g = polar_dual(g).dual
        return g


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def scenario_dir(cfg, out_root):
    root = out_root or cfg.out or os.environ.get("SPHEREFLOW_OUT") or DEFAULT_OUT
    path = os.path.join(root, cfg.name)
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([num(x) if isinstance(x, (float, np.floating)) else x for x in row])


# ----------------------------------------------------------------------------
# run
# ----------------------------------------------------------------------------


def _fits(records):
    out = []
    for q in FIT_QUANTITIES:
        entry = {"quantity": q}
        try:
            f = fit_decay(decay_series(records, q))
            entry.update(rate=f.rate, residual=f.residual, window=list(f.window))
        except ValueError as exc:
            entry.update(rate=None, residual=None, window=None, note=str(exc))
        out.append(entry)
    return out


def _write_run_outputs(path, cfg, spec, snapshots, Tstar, direction):
    records = [snapshot_diagnostics(g, spec, t, Tstar, direction, cfg.sigmas) for t, g in snapshots if t < Tstar]
    s0 = float(cfg.sigmas[0])
    write_csv(
        os.path.join(path, "series.csv"),
        SERIES_COLUMNS,
        [
            (r.t, r.theta, r.u_min, r.u_max, r.pinch_ratio, r.Ftilde_min, r.Ftilde_max, r.f_sigma[s0], r.tracefree)
            for r in records
        ],
    )
    sig = [float(s) for s in cfg.sigmas]
    extra_cols = ["tau", "u_rescaled_dev", "w_min", "w_max", "rho_minus", "rho_plus", "pinch_min", "deviation_ratio", "dFtilde_max"]
    write_csv(
        os.path.join(path, "diagnostics.csv"),
        ["t"] + extra_cols + [f"f_sigma_{s:g}" for s in sig],
        [[r.t] + [getattr(r, c) for c in extra_cols] + [r.f_sigma[s] for s in sig] for r in records],
    )
    snapdir = os.path.join(path, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    chosen = svg.pick_indices(len(snapshots), 11)
    for i in chosen:
        write_graph(os.path.join(snapdir, f"snap_{i:06d}.txt"), snapshots[i][1])
    svg.write_plot(
        os.path.join(path, "profiles.svg"),
        [(f"t={snapshots[i][0]:.4g}", snapshots[i][1].theta, snapshots[i][1].u) for i in chosen],
        title=f"{cfg.name}: u(theta)",
        xlabel="theta",
        ylabel="u",
    )
    if records:
        taus = [r.tau for r in records]
        svg.write_plot(
            os.path.join(path, "decay.svg"),
            [(q, taus, [v for _, v in decay_series(records, q)]) for q in ("tracefree_rescaled", "Ftilde_range", "u_rescaled_dev")],
            title=f"{cfg.name}: rescaled deviations",
            xlabel="tau",
            ylabel="log10 value",
            logy=True,
        )
    return records


def cmd_run(cfg, out_root=None):
    path = scenario_dir(cfg, out_root)
    spec = cfg.spec()
    fspec = cfg.flow_spec()
    g0 = cfg.initial()
    # snapshots collected on the side so that a failed run still reports what it reached
    seen = [(0.0, g0.copy())]
    count = [0]

    def on_step(t, u):
        count[0] += 1
        if count[0] % fspec.snapshot_stride == 0:
            seen.append((t, g0.copy(u.copy())))

    meta = {"name": cfg.name, "config": asdict(cfg), "curvature": str(spec), "direction": cfg.direction}
    try:
        traj = run(fspec, g0, on_step=on_step)
    except SphereFlowError as exc:
        log.error("%s: flow failed: %s", cfg.name, exc)
        t_last, g_last = seen[-1]
        lo, hi = tstar_bracket(t_last, g_last.u, cfg.direction)
        meta.update(status="error", error=str(exc), Tstar_bracket=[lo, hi], Tstar_est=0.5 * (lo + hi), steps=count[0])
        try:
            _write_run_outputs(path, cfg, spec, seen, 0.5 * (lo + hi), cfg.direction)
        except SphereFlowError as exc2:
            meta["diagnostics_error"] = str(exc2)
        write_json(os.path.join(path, "meta.json"), meta)
        return EXIT_RUNTIME
    records = _write_run_outputs(path, cfg, spec, traj.snapshots, traj.Tstar_est, cfg.direction)
    meta.update(
        status="ok",
        Tstar_bracket=list(traj.Tstar_bracket),
        Tstar_est=traj.Tstar_est,
        steps=len(traj.dts),
        t_final=traj.final.t,
        snapshots=len(traj.snapshots),
        monotone=traj.monotone,
        fits=_fits(records),
    )
    if cfg.direction == EXPANDING:
        ok = True
        for _, g in traj.snapshots:
            v, bound = gradient_bound(g)
            ok &= v <= bound * (1.0 + 1e-12)
        meta["gradient_bound_holds"] = bool(ok)
    write_json(os.path.join(path, "meta.json"), meta)
    print(f"{cfg.name}: Tstar_est {num(traj.Tstar_est)} ({len(traj.dts)} steps)")
    return EXIT_OK


# ----------------------------------------------------------------------------
# dual check
# ----------------------------------------------------------------------------


def cmd_dual_check(cfg, out_root=None):
    if cfg.direction != CONTRACTING:
        log.error("%s: dual-check needs a contracting scenario", cfg.name)
        return EXIT_CONFIG
    tol = 5e-3 if cfg.tolerance is None else float(cfg.tolerance)
    path = scenario_dir(cfg, out_root)
    try:
        g0 = cfg.initial()
        rep = dual_run(cfg.spec(), g0, cfg.stop_rule(), float(cfg.cfl), int(cfg.snapshot_stride))
    except SphereFlowError as exc:
        log.error("%s: %s", cfg.name, exc)
        write_json(os.path.join(path, "meta.json"), {"name": cfg.name, "status": "error", "error": str(exc)})
        return EXIT_RUNTIME
    write_csv(os.path.join(path, "dual.csv"), ("t", "d"), zip(rep.times.tolist(), rep.distance.tolist()))
    ok = rep.max_d <= tol
    write_json(
        os.path.join(path, "meta.json"),
        {
            "name": cfg.name,
            "status": "ok" if ok else "tolerance",
            "max_d": rep.max_d,
            "tolerance": tol,
            "Tstar_est": rep.contracting.Tstar_est,
            "Tstar_est_dual": rep.expanding.Tstar_est,
            "steps": len(rep.contracting.dts),
        },
    )
    print(f"max_d {num(rep.max_d)}")
    return EXIT_OK if ok else EXIT_TOLERANCE


# ----------------------------------------------------------------------------
# benchmark
# ----------------------------------------------------------------------------


def cmd_benchmark(cfg, out_root=None):
    if cfg.shape.get("type") != "sphere" or cfg.shape.get("polar_dual", False):
        log.error("%s: benchmark needs a plain sphere shape", cfg.name)
        return EXIT_CONFIG
    tol = 1e-6 if cfg.tolerance is None else float(cfg.tolerance)
    path = scenario_dir(cfg, out_root)
    r0 = float(cfg.shape["r"])
    fspec = cfg.flow_spec()
    g0 = cfg.initial()
    start = time.perf_counter()
    try:
        traj = run(fspec, g0)
    except SphereFlowError as exc:
        log.error("%s: %s", cfg.name, exc)
        write_json(os.path.join(path, "benchmark.json"), {"name": cfg.name, "status": "error", "error": str(exc)})
        return EXIT_RUNTIME
    runtime = time.perf_counter() - start
    if cfg.direction == CONTRACTING:
        Tstar = -np.log(np.cos(r0))

        def ref(t):
            return spherical_theta(t, Tstar)
    else:
        # the expanding sphere is the polar of a contracting one of radius pi/2 - r0
        Tstar = -np.log(np.sin(r0))

        def ref(t):
            return np.pi / 2 - spherical_theta(t, Tstar)
    rows = []
    for t, g in traj.snapshots:
        rows.append((t, ref(t), float(np.max(np.abs(g.u - ref(t))))))
    err = max(r[2] for r in rows)
    terr = abs(traj.Tstar_est - Tstar)
    write_csv(os.path.join(path, "benchmark.csv"), ("t", "u_ref", "error"), rows)
    ok = err <= tol and terr <= tol
    write_json(
        os.path.join(path, "benchmark.json"),
        {
            "name": cfg.name,
            "status": "ok" if ok else "tolerance",
            "max_error": err,
            "Tstar_exact": float(Tstar),
            "Tstar_est": traj.Tstar_est,
            "Tstar_error": terr,
            "tolerance": tol,
            "steps": len(traj.dts),
            "runtime_s": runtime,
        },
    )
    print(f"{cfg.name}: max error {num(err)}, Tstar error {num(terr)}, runtime {runtime:.2f} s")
    return EXIT_OK if ok else EXIT_TOLERANCE


# ----------------------------------------------------------------------------
# concavity audit
# ----------------------------------------------------------------------------

AUDIT_COLUMNS = (
    "n",
    "function",
    "expected",
    "samples",
    "strict_count",
    "max_null_multiplicity",
    "max_nonnull_eig_rel",
    "max_null_residual",
    "min_hk_ineq_rel",
    "min_classK_eig_rel",
    "violations",
)


def audit_functions(n):
    fns = [MeanNormalized(), Inverse(MeanNormalized())]
    fns += [SigmaK(k) for k in range(2, n + 1)]
    fns += [Inverse(SigmaK(k)) for k in range(2, n + 1)]
    return fns


def _ineq_order(spec):
    """k such that the audited function is a root of H_{k+1}, or None."""
    if isinstance(spec, MeanNormalized):
        return 0
    if isinstance(spec, SigmaK):
        return spec.k - 1
    return None


def audit_dimension(n, samples, seed):
    """Rows of the audit table for dimension n; sampling is reproducible from (seed, n)."""
    rng = np.random.Generator(np.random.MT19937(np.random.SeedSequence([int(seed), int(n)])))
    K = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=(samples, n)))
    XI = rng.standard_normal((samples, n))
    rows = []
    for spec in audit_functions(n):
        expect_strict = not isinstance(spec, MeanNormalized)
        strict = viol = 0
        mult = 0
        top = -np.inf
        resid = 0.0
        ineq = np.inf
        ck = np.inf
        k = _ineq_order(spec)
        for kap, xi in zip(K, XI):
            v = check_strict_concavity(spec, kap)
            strict += v.is_strictly_concave_at_point
            mult = max(mult, v.null_multiplicity)
            resid = max(resid, v.null_residual)
            scale = float(np.max(np.abs(v.eigenvalues)))
            if scale > 0 and v.null_multiplicity < n:
                # drop the eigenvalue nearest zero (the homogeneity direction)
                rest = np.delete(v.eigenvalues, np.argmin(np.abs(v.eigenvalues)))
                top = max(top, float(rest.max()) / scale)
            bad = v.is_strictly_concave_at_point != expect_strict
            if k is not None:
                r = check_ineq_371(kap, k, xi)
                ref = float(xi @ xi) * float(np.sum(kap)) ** max(k - 1, 0) + abs(r)
                ineq = min(ineq, r / ref)
                bad |= r < -1e-10 * ref
            if isinstance(spec, Inverse):
                M = check_classK_bound(spec, kap)
                e = np.linalg.eigvalsh(M)
                rel = float(e.min()) / max(1.0, float(np.abs(e).max()))
                ck = min(ck, rel)
                bad |= rel < -1e-10
            viol += bool(bad)
        rows.append(
            (
                n,
                str(spec),
                "strict" if expect_strict else "not strict",
                samples,
                strict,
                mult,
                float(top) if np.isfinite(top) else "",
                float(resid),
                float(ineq) if np.isfinite(ineq) else "",
                float(ck) if np.isfinite(ck) else "",
                viol,
            )
        )
    return rows


def cmd_concavity_audit(dims, samples, seed, out_dir, jobs=1):
    for n in dims:
        if not 2 <= n <= 8:
            log.error("audit dimension must lie in [2, 8], got %d", n)
            return EXIT_CONFIG
    if samples < 1:
        log.error("samples must be positive")
        return EXIT_CONFIG
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        parts = list(ex.map(lambda n: audit_dimension(n, samples, seed), dims))
    rows = [r for part in parts for r in part]
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "audit.csv"), AUDIT_COLUMNS, rows)
    total = sum(r[-1] for r in rows)
    print(f"concavity audit: {len(rows)} checks, {total} violations")
    return EXIT_OK if total == 0 else EXIT_TOLERANCE


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

COMMANDS = {"run": cmd_run, "dual-check": cmd_dual_check, "benchmark": cmd_benchmark}


def build_parser():
    p = argparse.ArgumentParser(prog="sphereflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "dual-check", "benchmark"):
        s = sub.add_parser(name)
        s.add_argument("--config", action="append", required=True, help="scenario JSON (repeatable)")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--out", default=None)
    s = sub.add_parser("concavity-audit")
    s.add_argument("--config", action="append", default=None)
    s.add_argument("--n", type=int, nargs="+", default=None, help="dimensions (default 2..6)")
    s.add_argument("--samples", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default=None)
    return p


def _audit_main(args):
    dims, samples, seed, name = [2, 3, 4, 5, 6], 1000, 42, "concavity_audit"
    cfg_out = None
    if args.config:
        cfg = load_config(args.config[0])
        dims, samples, seed, name, cfg_out = [cfg.n], cfg.samples, cfg.seed, cfg.name, cfg.out
    dims = args.n or dims
    samples = samples if args.samples is None else args.samples
    seed = seed if args.seed is None else args.seed
    root = args.out or cfg_out or os.environ.get("SPHEREFLOW_OUT") or DEFAULT_OUT
    return cmd_concavity_audit(dims, samples, seed, os.path.join(root, name), args.jobs)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        log.error("--jobs must be >= 1")
        return EXIT_CONFIG
    try:
        if args.command == "concavity-audit":
            return _audit_main(args)
        cfgs = [load_config(p) for p in args.config]
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        log.error("scenario names must be distinct")
        return EXIT_CONFIG
    cmd = COMMANDS[args.command]

    def work(cfg):
        try:
            return cmd(cfg, args.out)
        except SphereFlowError as exc:
            log.error("%s: %s", cfg.name, exc)
            return EXIT_RUNTIME

    with ThreadPoolExecutor(max_workers=args.jobs) as ex:
        codes = list(ex.map(work, cfgs))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
