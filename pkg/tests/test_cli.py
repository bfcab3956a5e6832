import csv
import json
import logging
import math

import pytest

from sphereflow.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_TOLERANCE, main


def write_cfg(tmp_path, label, **kw):
    cfg = {
        "name": label,
        "n": 2,
        "N": 64,
        "curvature": {"name": "sigma", "k": 2},
        "shape": {"type": "perturbed_sphere", "r": math.pi / 4, "amp": 0.05, "mode": 2},
        "direction": "contracting",
        "cfl": 0.2,
        "stop": {"type": "min_radius_below", "value": 0.1},
        "snapshot_stride": 50,
    }
    cfg.update(kw)
    path = tmp_path / f"{label}.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_outputs_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path, "prolate")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    d = out / "prolate"
    for name in ("series.csv", "diagnostics.csv", "meta.json", "profiles.svg", "decay.svg"):
        assert (d / name).exists()
    assert list((d / "snapshots").glob("snap_*.txt"))
    first = (d / "series.csv").read_bytes()
    header = first.decode().splitlines()[0]
    assert header == "t,theta_ref,u_min,u_max,pinch_ratio,F_tilde_min,F_tilde_max,f_sigma,tracefree"
    meta = json.loads((d / "meta.json").read_text())
    assert meta["status"] == "ok"
    assert {f["quantity"] for f in meta["fits"]} >= {"tracefree_rescaled", "Ftilde_range", "u_rescaled_dev"}
    assert all(set(f) >= {"quantity", "rate", "residual", "window"} for f in meta["fits"])
    assert "runtime" not in json.dumps(meta)
    meta_bytes = (d / "meta.json").read_bytes()
    assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert (d / "series.csv").read_bytes() == first
    assert (d / "meta.json").read_bytes() == meta_bytes
    assert (d / "profiles.svg").read_text().startswith("<svg")


def test_csv_uses_17_digits(tmp_path):
    cfg = write_cfg(tmp_path, "digits")
    main(["run", "--config", cfg, "--out", str(tmp_path)])
    with open(tmp_path / "digits" / "series.csv") as fh:
        rows = list(csv.reader(fh))
    value = rows[2][1]
    assert float(value) == float(format(float(value), ".17g"))
    assert "," not in value and len(value.replace(".", "").lstrip("0")) >= 15


def test_sphere_run_tstar(tmp_path):
    cfg = write_cfg(tmp_path, "sphere", shape={"type": "sphere", "r": math.pi / 3}, stop={"type": "min_radius_below", "value": 0.05})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "sphere" / "meta.json").read_text())
    assert meta["Tstar_est"] == pytest.approx(0.693147, abs=1e-6)


def test_env_var_output_root(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "envout", stop={"type": "min_radius_below", "value": 0.5})
    monkeypatch.setenv("SPHEREFLOW_OUT", str(tmp_path / "envroot"))
    assert main(["run", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "envroot" / "envout" / "series.csv").exists()


def test_missing_config(tmp_path, caplog):
    path = str(tmp_path / "nope.json")
    with caplog.at_level(logging.ERROR):
        assert main(["run", "--config", path]) == EXIT_CONFIG
    assert path in caplog.text


@pytest.mark.parametrize(
    "override",
    [
        {"N": 30},
        {"direction": "up"},
        {"cfl": 0.9},
        {"bogus": 1},
        {"name": "../x"},
        {"curvature": {"name": "sigma", "k": 5}},
        {"stop": {"type": "never", "value": 1}},
        {"shape": {"type": "perturbed_sphere", "r": 0.8, "amp": 0.3, "mode": 6}},
    ],
)
def test_bad_configs(tmp_path, override):
    cfg = write_cfg(tmp_path, "bad", **override)
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["benchmark", "--config", str(p)]) == EXIT_CONFIG


def test_runtime_error_exit(tmp_path):
    cfg = write_cfg(tmp_path, "dies", N=32, shape={"type": "sphere", "r": 0.3}, stop={"type": "time_reached", "value": 1.0})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == EXIT_RUNTIME
    meta = json.loads((tmp_path / "dies" / "meta.json").read_text())
    assert meta["status"] == "error" and meta["error"]
    assert (tmp_path / "dies" / "series.csv").exists()


def test_dual_check(tmp_path):
    cfg = write_cfg(tmp_path, "sph", shape={"type": "sphere", "r": math.pi / 3}, tolerance=1e-9)
    assert main(["dual-check", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "sph" / "meta.json").read_text())
    assert meta["max_d"] <= 1e-9
    rows = (tmp_path / "sph" / "dual.csv").read_text().splitlines()
    assert rows[0] == "t,d" and len(rows) > 2
    cfg = write_cfg(tmp_path, "tight", tolerance=1e-12)
    assert main(["dual-check", "--config", cfg, "--out", str(tmp_path)]) == EXIT_TOLERANCE
    cfg = write_cfg(tmp_path, "loose", tolerance=5e-3)
    assert main(["dual-check", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK


def test_dual_check_needs_contracting(tmp_path):
    cfg = write_cfg(tmp_path, "exp", direction="expanding", stop={"type": "max_radius_above", "value": 1.4})
    assert main(["dual-check", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_benchmark(tmp_path):
    cfg = write_cfg(tmp_path, "bench", shape={"type": "sphere", "r": math.pi / 3}, stop={"type": "min_radius_below", "value": 0.05})
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "bench" / "benchmark.json").read_text())
    assert res["max_error"] <= 1e-6 and "runtime_s" in res
    cfg = write_cfg(
        tmp_path,
        "bench_exp",
        shape={"type": "sphere", "r": math.pi / 6},
        direction="expanding",
        stop={"type": "max_radius_above", "value": math.pi / 2 - 0.05},
    )
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    cfg = write_cfg(tmp_path, "not_sphere")
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_jobs_fan_out(tmp_path):
    a = write_cfg(tmp_path, "a", stop={"type": "min_radius_below", "value": 0.5})
    b = write_cfg(tmp_path, "b", stop={"type": "min_radius_below", "value": 0.5}, n=3)
    assert main(["run", "--config", a, "--config", b, "--jobs", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "a" / "meta.json").exists() and (tmp_path / "b" / "meta.json").exists()
    assert main(["run", "--config", a, "--config", a, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_concavity_audit(tmp_path):
    args = ["concavity-audit", "--n", "3", "--samples", "1000", "--seed", "42", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    text = (tmp_path / "concavity_audit" / "audit.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    assert {r["function"] for r in rows} == {"mean", "inv_mean", "sigma2", "sigma3", "inv_sigma2", "inv_sigma3"}
    assert all(r["violations"] == "0" for r in rows)
    mean = next(r for r in rows if r["function"] == "mean")
    assert mean["expected"] == "not strict" and mean["max_null_multiplicity"] == "3"
    assert main(args) == EXIT_OK
    assert (tmp_path / "concavity_audit" / "audit.csv").read_text() == text


def test_concavity_audit_bad_dimension(tmp_path):
    assert main(["concavity-audit", "--n", "9", "--out", str(tmp_path)]) == EXIT_CONFIG
