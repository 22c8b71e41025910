import dataclasses
import json

import jsonschema
import pytest

import bench_cli
from bench_cli import (PRESETS, SCHEMA_PATH, ExperimentConfig, main, run, run_matrix, scalability_table)
from errors import ConfigurationError, ErrorCode

SCHEMA = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def _config(tmp_path, **fields):
    base = dict(element="bfs", h_exponent=4, H_exponent=2, overlap_layers=1, output=str(tmp_path / "run"))
    base.update(fields)
    return ExperimentConfig.from_dict(base)


@pytest.mark.parametrize("fields, code", [
    ({"element": "morley"}, ErrorCode.INVALID_CONFIG),
    ({"precond": "multigrid"}, ErrorCode.INVALID_CONFIG),
    ({"h_exponent": 2}, ErrorCode.NON_NESTED),
    ({"overlap_layers": 4}, ErrorCode.OVERLAP_RANGE),
    ({"overlap_layers": 0}, ErrorCode.INVALID_CONFIG),
    ({"element": "c0ip", "eta": 0.0}, ErrorCode.INVALID_PENALTY),
    ({"element": "jinwu", "rhs": "manufactured-m2"}, ErrorCode.INVALID_CONFIG),
    ({"tol": -1.0}, ErrorCode.INVALID_CONFIG),
])
def test_validate_names_the_violated_constraint(tmp_path, fields, code):
    with pytest.raises(ConfigurationError) as exc:
        _config(tmp_path, **fields).validate()
    assert exc.value.code is code


def test_from_dict_rejects_unknown_and_missing_fields():
    with pytest.raises(ConfigurationError, match="unknown"):
        ExperimentConfig.from_dict({"element": "bfs", "h_exponent": 4, "H_exponent": 2,
                                    "overlap_layers": 1, "delta": 0.1})
    with pytest.raises(ConfigurationError, match="missing"):
        ExperimentConfig.from_dict({"element": "bfs"})


def test_resolved_defaults(tmp_path):
    config = _config(tmp_path, element="jinwu")
    assert config.resolved_rhs == "manufactured-m3"
    assert config.resolved_eta is None
    assert _config(tmp_path, element="c0ip").resolved_eta == 5.0
    assert config.delta == pytest.approx(1 / 16)
    assert config.ratio == 4


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"element": "adini", "h_exponent": 5, "H_exponent": 2, "overlap_layers": 2}),
                    encoding="utf-8")
    config = ExperimentConfig.from_json_file(path).with_overrides(overlap_layers=3, tol=None)
    assert config.element == "adini"
    assert config.overlap_layers == 3
    assert config.tol == 1e-8


def test_unpreconditioned_run_starts_at_one(tmp_path):
    result = run(_config(tmp_path, precond="none", h_exponent=3))
    csv_path, json_path = result.files
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "iter,relres"
    assert lines[1] == "0,1"
    assert len(lines) == result.report.iterations + 2
    summary = json.loads(json_path.read_text(encoding="utf-8"))
    jsonschema.validate(summary, SCHEMA)
    assert summary["coarse_dim"] == 0
    assert summary["converged"] is True
    assert result.exit_code == 0


def test_two_level_summary(tmp_path):
    result = run(_config(tmp_path, element="c0ip", check_error=True, check_kappa=True))
    summary = result.summary
    jsonschema.validate(summary, SCHEMA)
    assert summary["eta"] == 5.0
    assert summary["m"] == 2
    assert summary["subdomains"] == 16
    assert summary["coarse_dim"] == 9 * 3
    assert summary["delta"] == pytest.approx(1 / 16)
    assert summary["energy_error"] >= 0
    assert summary["kappa_estimate"] <= summary["kappa_dense"] * (1 + 1e-2)


def test_check_error_without_exact_solution(tmp_path):
    summary = run(_config(tmp_path, rhs="ones", check_error=True)).summary
    assert summary["energy_error"] is None
    jsonschema.validate(summary, SCHEMA)


def test_runs_are_reproducible(tmp_path):
    first = run(_config(tmp_path, element="jinwu", output=str(tmp_path / "a"))).files[0]
    second = run(_config(tmp_path, element="jinwu", output=str(tmp_path / "b"))).files[0]
    assert first.read_bytes() == second.read_bytes()


def test_not_converged_exit_code(tmp_path):
    result = run(_config(tmp_path, precond="none", max_iters=2))
    assert not result.report.converged
    assert result.exit_code == ErrorCode.NOT_CONVERGED.value


def test_run_matrix_isolates_failures(tmp_path):
    good = dict(element="bfs", h_exponent=4, H_exponent=2, overlap_layers=1, output=str(tmp_path / "good"))
    bad = dict(good, overlap_layers=9, output=str(tmp_path / "bad"))
    result = run_matrix([good, bad], output_dir=tmp_path)
    assert [row["status"] for row in result.rows] == ["converged", "failed"]
    assert result.rows[1]["code"] == ErrorCode.OVERLAP_RANGE.value
    assert result.exit_code == ErrorCode.OVERLAP_RANGE.value
    assert (tmp_path / "sweep.summary.json").exists()


def test_empty_sweep():
    result = run_matrix([])
    assert result.rows == [] and result.table == []
    assert result.exit_code == 0


def test_scalability_table_groups_by_ratio_and_overlap():
    rows = [
        {"status": "converged", "element": "bfs", "h": h, "H": 16 * h, "overlap_layers": 2,
         "precond": "two-level", "kappa_estimate": kappa, "iterations": it}
        for h, kappa, it in [(2 ** -6, 11.0, 20), (2 ** -5, 10.0, 19), (2 ** -7, 11.0, 20)]
    ]
    rows.append({"status": "failed", "error": "boom", "code": 1})
    table = scalability_table(rows)
    assert len(table) == 1
    group = table[0]
    assert group["H_over_h"] == 16
    assert group["kappa_estimate"] == [10.0, 11.0, 11.0]
    assert group["max_kappa_variation"] == pytest.approx(0.1)


def test_presets_are_valid():
    assert {"fig-comparison-bfs", "fig-scaling-c0ip-d2", "fig-scaling-jinwu-d4"} <= set(PRESETS)
    for entries in PRESETS.values():
        for entry in entries:
            ExperimentConfig.from_dict(entry).validate()
    levels = [entry["precond"] for entry in PRESETS["fig-comparison-adini"]]
    assert levels == ["none", "one-level", "two-level"]


def test_main_single_run(tmp_path, capsys):
    prefix = tmp_path / "cli"
    code = main(["--element", "bfs", "--h-exp", "4", "--H-exp", "2", "--overlap-layers", "1",
                 "--output", str(prefix)])
    assert code == 0
    assert "✅" in capsys.readouterr().out
    assert (tmp_path / "cli.residuals.csv").exists()
    assert (tmp_path / "cli.summary.json").exists()


def test_main_reports_configuration_errors(tmp_path, capsys):
    code = main(["--element", "bfs", "--h-exp", "4", "--H-exp", "2", "--overlap-layers", "4",
                 "--output", str(tmp_path / "x")])
    assert code == ErrorCode.OVERLAP_RANGE.value
    assert "❌" in capsys.readouterr().out


def test_main_config_file_with_override(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"element": "adini", "h_exponent": 4, "H_exponent": 2, "overlap_layers": 1,
                                "output": str(tmp_path / "from-file")}), encoding="utf-8")
    assert main(["--config", str(path), "--precond", "one-level"]) == 0
    summary = json.loads((tmp_path / "from-file.summary.json").read_text(encoding="utf-8"))
    assert summary["precond"] == "one-level"
    assert summary["element"] == "adini"


def test_main_sweep(tmp_path):
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps([
        {"element": "bfs", "h_exponent": h, "H_exponent": h - 2, "overlap_layers": 1,
         "output": str(tmp_path / f"h{h}")} for h in (3, 4)
    ]), encoding="utf-8")
    assert main(["--sweep", str(sweep), "--workers", "2"]) == 0
    assert (tmp_path / "sweep" / "sweep.summary.json").exists()


@pytest.mark.parametrize("bad", [
    {"tol": "1e-8"},
    {"eta": "5"},
    {"h_exponent": "4"},
    {"output": 7},
])
def test_wrongly_typed_sweep_entry_fails_alone(tmp_path, bad):
    good = dict(element="c0ip", h_exponent=4, H_exponent=2, overlap_layers=1, output=str(tmp_path / "good"))
    result = run_matrix([good, {**good, "output": str(tmp_path / "bad"), **bad}])
    assert [row["status"] for row in result.rows] == ["converged", "failed"]
    assert result.rows[1]["code"] == ErrorCode.INVALID_CONFIG.value
    assert result.exit_code == ErrorCode.INVALID_CONFIG.value


def test_non_object_sweep_entry_fails_alone(tmp_path):
    good = dict(element="bfs", h_exponent=4, H_exponent=2, overlap_layers=1, output=str(tmp_path / "good"))
    result = run_matrix([["bfs", 4], good], output_dir=tmp_path)
    assert [row["status"] for row in result.rows] == ["failed", "converged"]
    assert result.rows[0]["config"] == repr(["bfs", 4])


def test_sweep_rows_without_output_get_their_own_files(tmp_path):
    sweep = tmp_path / "grid.json"
    sweep.write_text(json.dumps([
        {"element": "bfs", "h_exponent": h, "H_exponent": h - 2, "overlap_layers": 1} for h in (3, 4)
    ]), encoding="utf-8")
    assert main(["--sweep", str(sweep), "--workers", "2"]) == 0
    written = sorted(p.name for p in (tmp_path / "grid").glob("*.residuals.csv"))
    assert written == ["bfs-h3-H1-l1-two-level.residuals.csv", "bfs-h4-H2-l1-two-level.residuals.csv"]


def test_run_matrix_defaults_output_below_output_dir(tmp_path):
    entries = [dict(element="adini", h_exponent=4, H_exponent=2, overlap_layers=1, precond=level)
               for level in ("one-level", "two-level")]
    result = run_matrix(entries, output_dir=tmp_path)
    assert [row["output"] for row in result.rows] == [
        str(tmp_path / "adini-h4-H2-l1-one-level"), str(tmp_path / "adini-h4-H2-l1-two-level")]


def test_main_exports_matrix_market(tmp_path):
    code = main(["--element", "bfs", "--h-exp", "3", "--H-exp", "1", "--overlap-layers", "1",
                 "--output", str(tmp_path / "run"), "--export", str(tmp_path / "system" / "bfs3")])
    assert code == 0
    assert (tmp_path / "system" / "bfs3.A.mtx").exists()
    assert (tmp_path / "system" / "bfs3.f.mtx").exists()


def test_full_scaling_presets_reach_finest_meshes():
    for family in ("bfs", "adini", "c0ip", "jinwu"):
        for layers in (2, 4):
            entries = PRESETS[f"fig-scaling-{family}-d{layers}-full"]
            assert [e["h_exponent"] for e in entries] == [8, 9, 10]
            assert all(e["h_exponent"] - e["H_exponent"] == 4 for e in entries)
            assert len({e["output"] for e in entries}) == 3


def test_infinite_condition_estimate_is_written_as_null(tmp_path, monkeypatch):
    real_pcg = bench_cli.pcg

    def degenerate(*args, **kwargs):
        return dataclasses.replace(real_pcg(*args, **kwargs), kappa_estimate=float("inf"))

    monkeypatch.setattr(bench_cli, "pcg", degenerate)
    result = run(_config(tmp_path))
    summary = json.loads(result.files[1].read_text(encoding="utf-8"))
    assert summary["kappa_estimate"] is None
    jsonschema.validate(summary, SCHEMA)
