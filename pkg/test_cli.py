"""测试配置解析、校验、命令行运行与审计"""
import json

import numpy as np
import pytest

from vseed.analysis.rates import fit_slope
from vseed.cli.audit import manufactured_errors, oracle_check, property_checks
from vseed.cli.main import PRESETS, load_source, main, preset_text
from vseed.cli.runner import EXIT_ERROR, EXIT_FAILED, EXIT_OK, audit_run_dir
from vseed.cli.validation import validate_experiment
from vseed.config import settings
from vseed.core.boundary import make_test_flux
from vseed.models.experiment import load_config_file, load_config_text, parse_config_text
from vseed.models.fields import ChannelGrid, PressureField, VelocityField, WallData
from vseed.models.state import Snapshot
from vseed.storage.run_storage import RunStorage, config_hash, read_wall_csv, write_wall_csv
from vseed.utils.exceptions import ConfigValidationError, FluxDataError, StorageError, VseedError

SMALL_RUN = """
# 小网格无滑移运行
mode = noslip
grid.nx = 8
grid.ny = 8
time.dt = 0.01
time.nt = 3
initial.kind = zero
output.name = small
"""


@pytest.fixture(autouse=True)
def no_file_logging(monkeypatch):
    monkeypatch.setattr(settings, "log_enable_file", False)
    monkeypatch.setattr(settings, "log_enable_console", False)


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_nested_keys_and_comments():
    data = parse_config_text("grid.nx = 16  # 注释\n\n# 整行注释\nsweep.deltas = 0.4, 0.2, 0.1\n")
    assert data == {"grid": {"nx": "16"}, "sweep": {"deltas": "0.4, 0.2, 0.1"}}
    cfg = load_config_text("grid.nx = 16\nsweep.deltas = 0.4, 0.2, 0.1\nflux.tones = 1:6.28:1.0; 2:3.0:0.5\n")
    assert cfg.grid.nx == 16
    assert cfg.sweep.deltas == [0.4, 0.2, 0.1]
    assert cfg.flux.tones == [(1.0, 6.28, 1.0), (2.0, 3.0, 0.5)]


def test_parse_errors_are_collected():
    with pytest.raises(ConfigValidationError) as exc_info:
        parse_config_text("grid.nx = 8\ngrid.nx = 16\nno equals sign\n")
    assert len(exc_info.value.violations) == 2


def test_field_violations_are_aggregated():
    with pytest.raises(ConfigValidationError) as exc_info:
        load_config_text("time.dt = -0.01\ngrid.nx = 2\nphysics.delta = 1.5\nbogus.key = 1\n")
    violations = exc_info.value.violations
    assert len(violations) == 4
    assert any(v.startswith("time.dt") for v in violations)
    assert any(v.startswith("physics.delta") for v in violations)


def test_presets_load():
    for name in PRESETS:
        cfg = load_config_text(preset_text(name))
        assert cfg.output.name == name
    with pytest.raises(VseedError):
        preset_text("missing")


def test_acceptance_preset_is_valid(capsys):
    assert main(["validate", "acceptance_alpha1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "valid"
    cfg, _, _ = load_source("acceptance_alpha1")
    assert validate_experiment(cfg).advisories == []


def test_incompatible_csv_names_worst_slice(tmp_path):
    g_bottom = np.ones((8, 4))
    g_bottom[:, 2] = 3.0
    write_wall_csv(tmp_path / "wall.csv", WallData(g_bottom=g_bottom, g_top=np.ones((8, 4)), dt=0.01))
    cfg = load_config_text("mode = split\ngrid.nx = 8\ngrid.ny = 8\ntime.dt = 0.01\ntime.nt = 3\n"
                           "flux.kind = csv\nflux.csv = wall.csv\n")
    report = validate_experiment(cfg, tmp_path)
    assert not report.valid
    assert any("第 2 个时间层" in v for v in report.violations)


def test_missing_csv_is_a_violation(tmp_path):
    cfg = load_config_text("flux.kind = csv\nflux.csv = nowhere.csv\ngrid.nx = 8\ngrid.ny = 8\ntime.nt = 3\n")
    report = validate_experiment(cfg, tmp_path)
    assert not report.valid


def test_coarse_grid_advisory():
    cfg = load_config_text("mode = split\ngrid.nx = 8\ngrid.ny = 8\ntime.nt = 3\nphysics.delta = 0.1\n")
    report = validate_experiment(cfg)
    assert report.valid
    assert any("delta/4" in a for a in report.advisories)


def test_multitone_without_tones_is_a_violation():
    cfg = load_config_text("flux.kind = multitone\ngrid.nx = 8\ngrid.ny = 8\ntime.nt = 3\n")
    report = validate_experiment(cfg)
    assert report.violations and report.violations[0].startswith("flux.tones")


def test_run_noslip_writes_run_directory(tmp_path, capsys):
    config = _write(tmp_path, SMALL_RUN)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    for name in ("config.cfg", "diagnostics.csv", "manifest.json", "summary.txt", "audit.json"):
        assert (run_dir / name).exists()
    summary = (run_dir / "summary.txt").read_text(encoding="utf-8")
    assert "energy_max = 0.000000e+00" in summary
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["exit_code"] == EXIT_OK
    assert manifest["config_hash"] == config_hash(SMALL_RUN)
    lines = (run_dir / "diagnostics.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "step,t,energy,deform_sq,boundary_diss,div_max"
    assert len(lines) == 5
    assert f"run_dir = {run_dir}" in capsys.readouterr().out


def test_invalid_config_exits_with_error(tmp_path, capsys):
    config = _write(tmp_path, SMALL_RUN.replace("time.dt = 0.01", "time.dt = -0.01"))
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == EXIT_ERROR
    out = capsys.readouterr().out
    assert "invalid" in out
    assert "violation: time.dt" in out
    assert not (tmp_path / "out").exists()


def test_unknown_source_exits_with_error():
    assert main(["validate", "no_such_preset_or_file"]) == EXIT_ERROR


def test_diagnostics_are_reproducible(tmp_path):
    text = SMALL_RUN.replace("initial.kind = zero", "initial.kind = shear_mode\ninitial.amplitude = 1.0")
    config = _write(tmp_path, text)
    assert main(["run", str(config), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", str(config), "--out", str(tmp_path / "b")]) == EXIT_OK
    first = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    second = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert first == second
    assert b"\r\n" not in first


def test_audit_of_existing_run(tmp_path):
    config = _write(tmp_path, SMALL_RUN)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    assert main(["audit", str(run_dir)]) == EXIT_OK
    result = audit_run_dir(run_dir)
    assert all(c.status == "pass" for c in result.checks)

    # 篡改配置后哈希不再匹配
    (run_dir / "config.cfg").write_text(SMALL_RUN.replace("time.nt = 3", "time.nt = 4"), encoding="utf-8")
    assert main(["audit", str(run_dir)]) == 2


def test_oracle_check_passes():
    checks = oracle_check(nx=8, ny=8, delta=0.1, dt=0.005)
    assert len(checks) == 4
    assert all(c.status == "pass" for c in checks)


def test_property_checks_pass():
    checks = property_checks(nu=1.0, delta=0.1, dt=0.005, n=16)
    failed = [c.name for c in checks if c.status != "pass"]
    assert failed == []


def test_manufactured_error_decreases_with_refinement():
    errors = manufactured_errors([8, 16, 32], nt=4)
    assert [h for h, _ in errors] == [1 / 8, 1 / 16, 1 / 32]
    values = [e for _, e in errors]
    assert all(b < a for a, b in zip(values, values[1:]))
    fit = fit_slope("manufactured", [h for h, _ in errors], values)
    assert fit is not None
    assert 1.7 <= fit.slope <= 2.3


def _csv_config(tmp_path):
    return _write(tmp_path, "mode = split\ngrid.nx = 8\ngrid.ny = 8\ntime.dt = 0.01\ntime.nt = 3\n"
                            "flux.kind = csv\nflux.csv = wall.csv\n")


def test_non_finite_csv_value_is_a_violation(tmp_path, capsys):
    path = write_wall_csv(tmp_path / "wall.csv", make_test_flux("tone", nx=8, nt=3, T=0.03))
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",inf"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(FluxDataError, match="第 6 行"):
        read_wall_csv(path, dt=0.01)

    report = validate_experiment(load_config_text(_csv_config(tmp_path).read_text(encoding="utf-8")), tmp_path)
    assert not report.valid
    assert report.violations[0].startswith("flux:")
    assert main(["validate", str(tmp_path / "run.cfg")]) == EXIT_ERROR
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "invalid"
    assert any(line.startswith("violation: flux") for line in out.splitlines())


def test_wall_data_rejection_becomes_flux_error(tmp_path):
    path = write_wall_csv(tmp_path / "wall.csv", make_test_flux("tone", nx=8, nt=3, T=0.03))
    with pytest.raises(FluxDataError, match="无法构成壁面数据"):
        read_wall_csv(path, dt=-0.01)


def test_corrupted_diagnostics_row_is_a_storage_error(tmp_path):
    config = _write(tmp_path, SMALL_RUN)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    target = run_dir / "diagnostics.csv"
    lines = target.read_text(encoding="utf-8").splitlines()
    fields = lines[2].split(",")
    fields[2] = "not-a-number"
    lines[2] = ",".join(fields)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(StorageError, match="第 3 行"):
        RunStorage(run_dir).read_diagnostics("diagnostics.csv")
    assert main(["audit", str(run_dir)]) == EXIT_ERROR


def test_snapshot_file_roundtrip(tmp_path):
    grid = ChannelGrid(nx=8, ny=4)
    rng = np.random.default_rng(4)
    snapshots = [
        Snapshot(step=k, t=0.1 * k,
                 velocity=VelocityField(grid=grid, u=rng.standard_normal((8, 6)), v=rng.standard_normal((8, 5))),
                 pressure=PressureField(grid=grid, p=rng.standard_normal((8, 4))))
        for k in range(3)
    ]
    storage = RunStorage(tmp_path)
    storage.write_snapshots("snapshots.bin", grid, 0.1, snapshots)
    read_grid, dt, fields = storage.read_snapshots("snapshots.bin")
    assert (read_grid.nx, read_grid.ny, dt) == (8, 4, 0.1)
    assert len(fields) == 3
    for snap, (velocity, pressure) in zip(snapshots, fields):
        assert np.array_equal(velocity.u, snap.velocity.u)
        assert np.array_equal(velocity.v, snap.velocity.v)
        assert np.array_equal(pressure.p, snap.pressure.p)

    (tmp_path / "snapshots.bin").write_bytes((tmp_path / "snapshots.bin").read_bytes()[:-8])
    with pytest.raises(StorageError):
        storage.read_snapshots("snapshots.bin")


def test_audit_recomputes_diagnostics_from_snapshots(tmp_path):
    text = SMALL_RUN.replace("initial.kind = zero", "initial.kind = shear_mode\ninitial.amplitude = 1.0")
    text += "output.snapshots = true\noutput.save_stride = 2\n"
    config = _write(tmp_path, text)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    assert (run_dir / "snapshots.bin").exists()
    result = audit_run_dir(run_dir)
    check = next(c for c in result.checks if c.name == "snapshots match diagnostics")
    assert check.status == "pass"
    assert result.exit_code == EXIT_OK

    # 改动第 2 步的能量后重算不再一致
    target = run_dir / "diagnostics.csv"
    lines = target.read_text(encoding="utf-8").splitlines()
    fields = lines[3].split(",")
    fields[2] = repr(float(fields[2]) * 1.001)
    lines[3] = ",".join(fields)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["audit", str(run_dir)]) == EXIT_FAILED


def test_split_run_records_gronwall_curve(tmp_path):
    text = SMALL_RUN.replace("mode = noslip", "mode = split")
    config = _write(tmp_path, text)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    curve = RunStorage(run_dir).read_gronwall("gronwall.csv")
    assert len(curve) == 4
    assert not any(exceeded for _, _, _, exceeded in curve)
    check = next(c for c in audit_run_dir(run_dir).checks if c.name == "gronwall violations == 0")
    assert check.status == "pass"

    # 实测值抬到上界之上，审计按重算结果判失败
    target = run_dir / "gronwall.csv"
    lines = target.read_text(encoding="utf-8").splitlines()
    fields = lines[-1].split(",")
    fields[3] = repr(float(fields[2]) * 2.0 + 1.0)
    lines[-1] = ",".join(fields)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["audit", str(run_dir)]) == EXIT_FAILED


def test_load_config_file_errors(tmp_path):
    with pytest.raises(VseedError) as exc_info:
        load_config_file(tmp_path / "missing.cfg")
    assert exc_info.value.error_code == "config_unreadable"
    broken = tmp_path / "broken.cfg"
    broken.write_bytes(b"grid.nx = \xff\xfe\n")
    with pytest.raises(VseedError):
        load_config_file(broken)

    config = _write(tmp_path, SMALL_RUN)
    cfg, text, base_dir = load_source(str(config))
    assert text == SMALL_RUN
    assert cfg.grid.nx == 8
    assert base_dir == tmp_path.resolve()


def test_run_writes_its_own_log(tmp_path):
    config = _write(tmp_path, SMALL_RUN)
    run_dir = tmp_path / "out"
    assert main(["run", str(config), "--out", str(run_dir)]) == EXIT_OK
    log_text = (run_dir / "run.log").read_text(encoding="utf-8")
    assert "开始运行" in log_text
    assert "[out]" in log_text
    assert "运行结束" in log_text


def test_run_log_can_be_disabled(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_enable_run_file", False)
    config = _write(tmp_path, SMALL_RUN)
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == EXIT_OK
    assert not (tmp_path / "out" / "run.log").exists()
