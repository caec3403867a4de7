"""Command-line harness: parsing, exit codes, report files, determinism."""
import dataclasses
import json
import os

import numpy as np
import pytest

from gridcoord import bench_cli as bc
from gridcoord import grid_model as gm
from gridcoord.adp_coordinator import CoordinationError


def toy_tso_case():
    buses = (gm.Bus(1, "slack"), gm.Bus(2, "load", 1.0, 0.3))
    lines = (gm.Line(1, 2, 0.0, 0.1),)
    gens = (gm.Generator(1, 0.0, 5.0, -3.0, 3.0, 0.5, 1.0, 0.0),)
    return gm.GridCase(100.0, buses, lines, gens)


def toy_dso_case():
    # reactive-quiet feeder keeps consensus runs fast (no flat-valley crawl)
    buses = (gm.Bus(1, "slack"), gm.Bus(2, "load", 0.5, 0.0))
    lines = (gm.Line(1, 2, 0.02, 0.04),)
    gens = (gm.Generator(2, 0.0, 2.0, -1.0, 1.0, 1.0, 0.5, 20.0),)
    return gm.GridCase(100.0, buses, lines, gens)


def forced_export_dso_case():
    buses = (gm.Bus(1, "slack"), gm.Bus(2, "load", 0.5, 0.2))
    lines = (gm.Line(1, 2, 0.05, 0.05),)
    gens = (gm.Generator(2, 10.0, 10.0, -3.0, 3.0, 0.0, 1.0),)
    return gm.GridCase(100.0, buses, lines, gens)


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_cases")
    tso = root / "tso.json"
    dso = root / "dso.json"
    bad = root / "bad_dso.json"
    tso.write_text(gm.serialize_case(toy_tso_case()))
    dso.write_text(gm.serialize_case(toy_dso_case()))
    bad.write_text(gm.serialize_case(forced_export_dso_case()))
    return {"tso": str(tso), "dso": str(dso), "bad": str(bad)}


def toy_args(toy_files, *extra):
    return ["--tso", toy_files["tso"], "--dso", f"2={toy_files['dso']}",
            *extra]


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def stripped_bytes(path):
    doc = load_json(path)
    del doc["timing"]
    return json.dumps(doc, sort_keys=True).encode()


class TestParsing:
    @pytest.mark.parametrize("method,flag", [
        ("centralized", "--rho=5"),
        ("centralized", "--value-fn=quadratic"),
        ("centralized", "--seed=1"),
        ("admm", "--samples=10"),
        ("admm", "--value-fn=none"),
        ("admm", "--weight=1.0"),
        ("adp", "--rho=1"),
        ("adp", "--tol=1e-5"),
        ("adp", "--max-iter=5"),
    ])
    def test_flag_rejected_for_method(self, method, flag, capsys):
        code = bc.main(["run", method, "--benchmark", flag])
        assert code == bc.EXIT_ERROR
        assert "not valid for method" in capsys.readouterr().err

    def test_invalid_method_choice_exits_with_error_code(self):
        with pytest.raises(SystemExit) as exc:
            bc.main(["run", "bogus", "--benchmark"])
        assert exc.value.code == bc.EXIT_ERROR

    def test_compare_has_no_model_selector(self):
        with pytest.raises(SystemExit) as exc:
            bc.main(["compare", "--benchmark", "--for-model", "ldf"])
        assert exc.value.code == bc.EXIT_ERROR

    def test_missing_case_source(self, capsys):
        code = bc.main(["run", "admm"])
        assert code == bc.EXIT_ERROR
        assert "--benchmark" in capsys.readouterr().err

    def test_dso_without_tso(self, toy_files, capsys):
        code = bc.main(["run", "centralized", "--dso", toy_files["dso"]])
        assert code == bc.EXIT_ERROR

    def test_threads_must_be_positive(self, capsys):
        code = bc.main(["run", "centralized", "--benchmark", "--threads",
                        "0"])
        assert code == bc.EXIT_ERROR
        assert "threads" in capsys.readouterr().err

    def test_extra_threads_accepted(self, toy_files, tmp_path):
        code = bc.main(["run", "centralized",
                        *toy_args(toy_files, "--threads", "4",
                                  "--out", str(tmp_path))])
        assert code == bc.EXIT_OK

    def test_unknown_log_level_warns_and_runs(self, toy_files, tmp_path,
                                              monkeypatch, capsys):
        monkeypatch.setenv("GRIDCOORD_LOG", "chatty")
        code = bc.main(["run", "centralized",
                        *toy_args(toy_files, "--out", str(tmp_path))])
        assert code == bc.EXIT_OK
        assert "GRIDCOORD_LOG" in capsys.readouterr().err

    def test_model_aliases_accepted(self, toy_files, tmp_path):
        for alias in ("ldf", "lindistflow"):
            code = bc.main(["run", "centralized",
                            *toy_args(toy_files, "--for-model", alias,
                                      "--out", str(tmp_path))])
            assert code == bc.EXIT_OK
        doc = load_json(tmp_path / "run_centralized.json")
        assert doc["result"]["model"] == "lindistflow"

    def test_missing_file_is_plain_error(self, tmp_path, capsys):
        code = bc.main(["run", "centralized", "--tso", "/nonexistent.json",
                        "--dso", "whatever.json", "--out", str(tmp_path)])
        assert code == bc.EXIT_ERROR


class TestRunConfig:
    def test_frozen(self):
        cfg = bc.RunConfig(command="run", method="admm")
        with pytest.raises(dataclasses.FrozenInstanceError):
            cfg.rho = 3.0

    def test_public_dict_lists_dsos(self):
        cfg = bc.RunConfig(command="run", method="adp", dsos=("a", "b"))
        doc = cfg.public_dict()
        assert doc["dsos"] == ["a", "b"]
        assert doc["method"] == "adp"
        json.dumps(doc)


class TestRunSubcommand:
    def test_centralized_result_document(self, toy_files, tmp_path):
        code = bc.main(["run", "centralized",
                        *toy_args(toy_files, "--out", str(tmp_path))])
        assert code == bc.EXIT_OK
        doc = load_json(tmp_path / "run_centralized.json")
        assert set(doc) == {"config", "result", "timing"}
        res = doc["result"]
        assert res["feasible"] is True
        assert res["operations"] == 1
        assert res["total_cost"] > 0
        assert res["interfaces"][0]["dso"] == 1
        assert doc["timing"]["solve_s"] >= 0
        assert "generated_at" in doc["timing"]

    def test_admm_matches_centralized_and_writes_history(self, toy_files,
                                                         tmp_path):
        out_c = tmp_path / "c"
        out_a = tmp_path / "a"
        assert bc.main(["run", "centralized",
                        *toy_args(toy_files, "--out", str(out_c))]) == 0
        assert bc.main(["run", "admm",
                        *toy_args(toy_files, "--out", str(out_a))]) == 0
        central = load_json(out_c / "run_centralized.json")["result"]
        admm = load_json(out_a / "run_admm.json")["result"]
        assert admm["converged"] is True
        rel = abs(admm["total_cost"] - central["total_cost"]) \
            / abs(central["total_cost"])
        assert rel < 1e-6
        history = (out_a / "admm_history.csv").read_text().splitlines()
        assert history[0] == "iter,primal_tau,primal_delta,dual,cost"
        assert len(history) == admm["iterations"] + 1

    def test_adp_run_document(self, toy_files, tmp_path):
        code = bc.main(["run", "adp",
                        *toy_args(toy_files, "--value-fn", "none",
                                  "--seed", "3", "--out", str(tmp_path))])
        assert code == bc.EXIT_OK
        doc = load_json(tmp_path / "run_adp.json")
        res = doc["result"]
        assert res["value_mode"] == "zero"
        assert res["feasible"] is True
        assert 2 <= res["operations"] <= 4
        assert doc["config"]["seed"] == 3
        assert "stages" in doc["timing"]

    def test_adp_repeat_is_deterministic(self, toy_files, tmp_path):
        args = ["run", "adp", *toy_args(toy_files, "--seed", "11",
                                        "--out", str(tmp_path))]
        assert bc.main(args) == bc.EXIT_OK
        first = stripped_bytes(tmp_path / "run_adp.json")
        assert bc.main(args) == bc.EXIT_OK
        assert stripped_bytes(tmp_path / "run_adp.json") == first

    def test_declared_infeasibility_exits_2(self, toy_files, tmp_path,
                                            capsys):
        code = bc.main(["run", "admm", "--tso", toy_files["tso"],
                        "--dso", f"2={toy_files['bad']}",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_DECLARED
        assert "declared failure" in capsys.readouterr().err

    def test_infeasible_centralized_writes_null_cost(self, toy_files,
                                                     tmp_path):
        code = bc.main(["run", "centralized", "--tso", toy_files["tso"],
                        "--dso", f"2={toy_files['bad']}",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_DECLARED
        doc = load_json(tmp_path / "run_centralized.json")
        assert doc["result"]["feasible"] is False
        assert doc["result"]["total_cost"] is None

    def test_explicit_link_spec_matches_bare(self, toy_files, tmp_path):
        out1 = tmp_path / "bare"
        out2 = tmp_path / "full"
        assert bc.main(["run", "centralized", "--tso", toy_files["tso"],
                        "--dso", toy_files["dso"],
                        "--out", str(out1)]) == 0
        assert bc.main(["run", "centralized", "--tso", toy_files["tso"],
                        "--dso", f"1:1={toy_files['dso']}",
                        "--out", str(out2)]) == 0
        c1 = load_json(out1 / "run_centralized.json")["result"]["total_cost"]
        c2 = load_json(out2 / "run_centralized.json")["result"]["total_cost"]
        assert c1 == pytest.approx(c2, rel=1e-9)

    def test_matpower_tso_loads(self, toy_files, tmp_path):
        code = bc.main(["run", "centralized", "--tso", "tests/data/case9.m",
                        "--dso", f"8={toy_files['dso']}",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_OK
        doc = load_json(tmp_path / "run_centralized.json")
        assert doc["result"]["feasible"] is True


@pytest.fixture(scope="module")
def compare_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare")
    code = bc.main(["compare", "--benchmark", "--seed", "7",
                    "--out", str(out)])
    return code, out


class TestCompare:
    def test_exit_ok(self, compare_out):
        code, _ = compare_out
        assert code == bc.EXIT_OK

    def test_csv_shape(self, compare_out):
        _, out = compare_out
        lines = (out / "compare.csv").read_text().splitlines()
        assert lines[0] == "algorithm,total_cost,operations,comp_time_s," \
                           "feasible"
        assert len(lines) == 7
        names = [ln.split(",")[0] for ln in lines[1:]]
        assert names == ["centralized", "admm", "adp_ll_none",
                         "adp_ll_quadratic", "adp_ldf_none",
                         "adp_ldf_quadratic"]
        for ln in lines[1:]:
            parts = ln.split(",")
            float(parts[1])
            int(parts[2])
            float(parts[3])
            assert parts[4] == "true"

    def test_json_rows_carry_no_wall_times(self, compare_out):
        _, out = compare_out
        doc = load_json(out / "compare.json")
        assert set(doc) == {"config", "rows", "timing"}
        assert len(doc["rows"]) == 6
        for row in doc["rows"]:
            assert set(row) == {"algorithm", "total_cost", "operations",
                                "feasible"}
        assert "generated_at" in doc["timing"]
        for row in doc["rows"]:
            assert row["algorithm"] in doc["timing"]

    def test_known_benchmark_costs(self, compare_out):
        _, out = compare_out
        rows = {r["algorithm"]: r for r in
                load_json(out / "compare.json")["rows"]}
        assert rows["centralized"]["total_cost"] == pytest.approx(
            1111.804022, rel=1e-6)
        assert rows["adp_ldf_quadratic"]["total_cost"] == pytest.approx(
            1110.496319, rel=1e-6)
        assert rows["centralized"]["operations"] == 1
        assert rows["admm"]["operations"] >= 10
        for name in ("adp_ll_none", "adp_ll_quadratic", "adp_ldf_none",
                     "adp_ldf_quadratic"):
            assert 2 <= rows[name]["operations"] <= 4

    def test_value_function_improves_dispatch(self, compare_out):
        _, out = compare_out
        rows = {r["algorithm"]: r["total_cost"] for r in
                load_json(out / "compare.json")["rows"]}
        assert rows["adp_ll_quadratic"] < rows["adp_ll_none"]
        assert rows["adp_ldf_quadratic"] < rows["adp_ldf_none"]
        slack = 1e-6 * abs(rows["centralized"])
        assert rows["centralized"] <= rows["admm"] + slack
        assert rows["admm"] <= rows["adp_ll_quadratic"] + slack

    def test_table_lists_all_rows(self, toy_files, tmp_path, capsys):
        code = bc.main(["compare", *toy_args(toy_files,
                                             "--out", str(tmp_path))])
        assert code == bc.EXIT_OK
        text = capsys.readouterr().out
        for name in ("Algorithm", "Total Cost", "# Operations", "Comp. Time",
                     "centralized", "admm", "adp_ll_none",
                     "adp_ldf_quadratic"):
            assert name in text

    def test_repeat_byte_identical_modulo_timing(self, tmp_path):
        args = ["compare", "--benchmark", "--seed", "7",
                "--out", str(tmp_path)]
        assert bc.main(args) == bc.EXIT_OK
        first = stripped_bytes(tmp_path / "compare.json")
        assert bc.main(args) == bc.EXIT_OK
        assert stripped_bytes(tmp_path / "compare.json") == first

    def test_partial_failure_flags_row(self, toy_files, tmp_path,
                                       monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise CoordinationError("admm", "consensus broke")

        monkeypatch.setattr(bc, "run_admm", boom)
        code = bc.main(["compare", *toy_args(toy_files,
                                             "--out", str(tmp_path))])
        assert code == bc.EXIT_DECLARED
        doc = load_json(tmp_path / "compare.json")
        rows = {r["algorithm"]: r for r in doc["rows"]}
        assert rows["admm"]["feasible"] is False
        assert rows["admm"]["total_cost"] is None
        assert "consensus broke" in rows["admm"]["error"]
        assert rows["centralized"]["feasible"] is True
        admm_line = [ln for ln in
                     (tmp_path / "compare.csv").read_text().splitlines()
                     if ln.startswith("admm,")][0]
        assert admm_line.split(",")[1] == ""
        assert admm_line.split(",")[4] == "false"
        assert "failed" in capsys.readouterr().out


class TestProjectFor:
    def test_benchmark_polygons(self, tmp_path, capsys):
        code = bc.main(["project-for", "--benchmark", "--for-model", "ldf",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_OK
        out = capsys.readouterr().out
        assert "dso 1" in out and "dso 2" in out
        for index in (1, 2):
            csv_path = tmp_path / f"for_dso{index}_ldf.csv"
            sidecar = load_json(tmp_path / f"for_dso{index}_ldf.json")
            assert sidecar["dso_index"] == index
            assert sidecar["nu_value"] == 1.0
            assert sidecar["model_kind"] == "lindistflow"
            lines = csv_path.read_text().splitlines()
            assert lines[0] == "p_if,q_if"
            verts = np.array([[float(v) for v in ln.split(",")]
                              for ln in lines[1:]])
            assert len(verts) >= 3
            # convex and counter-clockwise: every cross product non-negative
            n = len(verts)
            for i in range(n):
                a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
                cross = ((b[0] - a[0]) * (c[1] - a[1])
                         - (b[1] - a[1]) * (c[0] - a[0]))
                assert cross >= -1e-9

    def test_ll_default_nu(self, tmp_path):
        code = bc.main(["project-for", "--benchmark", "--for-model", "ll",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_OK
        assert (tmp_path / "for_dso1_ll.csv").exists()
        assert (tmp_path / "for_dso2_ll.csv").exists()

    def test_nu_outside_bounds_reports_empty(self, tmp_path, capsys):
        code = bc.main(["project-for", "--benchmark", "--nu", "9.9",
                        "--out", str(tmp_path)])
        assert code == bc.EXIT_DECLARED
        out = capsys.readouterr().out
        assert "empty region" in out

    def test_toy_feeder_polygon(self, toy_files, tmp_path):
        code = bc.main(["project-for",
                        *toy_args(toy_files, "--out", str(tmp_path))])
        assert code == bc.EXIT_OK
        assert (tmp_path / "for_dso1_ll.csv").exists()


class TestExportReport:
    def test_round_trip(self, tmp_path):
        rows = [{"algorithm": "centralized", "total_cost": 8.7814,
                 "operations": 1, "feasible": True},
                {"algorithm": "admm", "total_cost": None,
                 "operations": None, "feasible": False, "error": "x"}]
        timing = {"centralized": {"comp_s": 0.2}, "admm": {"comp_s": 0.0}}
        csv_path, json_path = bc.export_report(rows, timing, str(tmp_path),
                                               {"seed": 0})
        lines = open(csv_path).read().splitlines()
        assert lines[0] == bc.CSV_HEADER
        assert len(lines) == 3
        assert lines[2].startswith("admm,,,")
        doc = load_json(json_path)
        assert doc["rows"] == rows
        assert doc["config"] == {"seed": 0}
