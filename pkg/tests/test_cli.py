"""CLI surface: end-to-end runs, JSON schema, exit codes, determinism."""
import json
import os
from importlib import resources

import jsonschema
import numpy as np
import pytest

from cepa.cli import main


def load_schema():
    ref = resources.files("cepa") / "schema" / "cepa-report-1.json"
    return json.loads(ref.read_text())


def write_panel_csv(path, n=8, t=30, seed=0, cluster=False, covariate=False,
                    constant=False):
    rng = np.random.default_rng(seed)
    lines = ["unit,time,loss1,loss2"
             + (",x1" if covariate else "") + (",cluster" if cluster else "")]
    for u in range(1, n + 1):
        for tt in range(1, t + 1):
            l1 = 1.0 if constant else rng.uniform(0.5, 2.0)
            l2 = 0.0 if constant else rng.uniform(0.5, 2.0)
            row = f"{u},{tt},{l1:.6f},{l2:.6f}"
            if covariate:
                row += f",{rng.normal():.6f}"
            if cluster:
                row += f",{1 if u <= n // 2 else 2}"
            lines.append(row)
    path.write_text("\n".join(lines) + "\n")


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


class TestCmdTest:
    def test_oepa_json_report(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f)
        code, out = run_cli(["test", "--input", str(f), "--test", "oepa",
                             "--seed", "1", "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        jsonschema.validate(payload, load_schema())
        assert payload["report"]["test"] == "oepa"
        assert 0 <= payload["report"]["p_value"] <= 1

    def test_selective_cepa_end_to_end(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, n=12, t=40, seed=3)
        code, out = run_cli(["test", "--input", str(f), "--test", "selective-cepa",
                             "--k", "2", "--seed", "7", "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        jsonschema.validate(payload, load_schema())
        assert "pair_1_2" in payload["report"]["sub_p_values"]
        assert "oepa" in payload["report"]["sub_p_values"]

    def test_predetermined_requires_cluster_column(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, cluster=False)
        code, _ = run_cli(["test", "--input", str(f), "--test", "predetermined"],
                          capsys)
        assert code == 4

    def test_predetermined_with_clusters(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, cluster=True)
        code, out = run_cli(["test", "--input", str(f), "--test", "predetermined",
                             "--seed", "1", "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["report"]["test"] == "predetermined"
        assert payload["report"]["k"] == 2

    def test_conditioning_columns(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, covariate=True, t=40)
        code, out = run_cli(["test", "--input", str(f), "--test", "oepa",
                             "--condition-cols", "x1", "--tau", "1",
                             "--seed", "1", "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["report"]["diagnostics"]["dof"][0] == 2  # P = 2

    def test_missing_input_file_is_input_error(self, tmp_path, capsys):
        code, _ = run_cli(["test", "--input", str(tmp_path / "nope.csv"),
                           "--test", "oepa"], capsys)
        assert code == 2

    def test_numerical_error_exit_code(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, constant=True)  # zero-variance series, nonzero mean
        code, _ = run_cli(["test", "--input", str(f), "--test", "oepa",
                           "--seed", "1"], capsys)
        assert code == 3

    def test_bad_flag_combo_is_config_error(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f)
        code, _ = run_cli(["test", "--input", str(f), "--test", "split",
                           "--gamma", "1.5", "--seed", "1"], capsys)
        assert code == 4

    def test_unknown_flag_is_config_error(self, capsys):
        code, _ = run_cli(["test", "--nonsense"], capsys)
        assert code == 4

    def test_output_file_written(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f)
        out_file = tmp_path / "report.json"
        code, _ = run_cli(["test", "--input", str(f), "--test", "oepa",
                           "--seed", "1", "--output", str(out_file)], capsys)
        assert code == 0
        payload = json.loads(out_file.read_text())
        jsonschema.validate(payload, load_schema())

    def test_input_not_mutated(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f)
        before = f.read_bytes()
        run_cli(["test", "--input", str(f), "--test", "oepa", "--seed", "1"], capsys)
        assert f.read_bytes() == before


class TestCmdSimulate:
    def test_size_design_json(self, tmp_path, capsys):
        code, out = run_cli(["simulate", "--design", "size", "--n", "8", "--t", "16",
                             "--reps", "4", "--seed", "5",
                             "--tests", "predetermined,oepa",
                             "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        jsonschema.validate(payload, load_schema())
        assert {row["test"] for row in payload["results"]} == {"predetermined", "oepa"}

    def test_single_rep_se_not_applicable(self, capsys):
        code, out = run_cli(["simulate", "--design", "size", "--n", "8", "--t", "16",
                             "--reps", "1", "--seed", "5", "--tests", "oepa",
                             "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["results"][0]["mc_se"] is None

    def test_csv_table_written(self, tmp_path, capsys):
        csv_path = tmp_path / "rates.csv"
        code, _ = run_cli(["simulate", "--design", "size", "--n", "8", "--t", "16",
                           "--reps", "3", "--seed", "5", "--tests", "oepa",
                           "--csv", str(csv_path)], capsys)
        assert code == 0
        text = csv_path.read_text().splitlines()
        assert text[0] == "test,rejection_rate,mc_se,reps_used,failures"
        assert text[1].startswith("oepa,")

    def test_config_file_override(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"lam": 0.0}))
        code, out = run_cli(["simulate", "--design", "size", "--n", "8", "--t", "16",
                             "--reps", "2", "--seed", "5", "--tests", "oepa",
                             "--config", str(cfg_file), "--format", "json"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["config"]["lambda"] == 0.0

    def test_seed_reproducibility_bytes(self, tmp_path, capsys):
        args = ["simulate", "--design", "size", "--n", "8", "--t", "16",
                "--reps", "4", "--seed", "77", "--tests", "predetermined,naive",
                "--format", "json"]
        code1, out1 = run_cli(args, capsys)
        code2, out2 = run_cli(args, capsys)
        assert code1 == code2 == 0
        assert out1 == out2


class TestCmdKselect:
    def test_table_and_selection(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        rng = np.random.default_rng(9)
        lines = ["unit,time,loss1,loss2"]
        for u in range(1, 13):
            shift = 6.0 if u > 6 else 0.0
            for tt in range(1, 31):
                lines.append(f"{u},{tt},{rng.normal() + shift:.6f},{rng.normal():.6f}")
        f.write_text("\n".join(lines) + "\n")
        code, out = run_cli(["kselect", "--input", str(f), "--method", "both",
                             "--k-max", "4", "--seed", "3", "--format", "json"],
                            capsys)
        assert code == 0
        payload = json.loads(out)
        jsonschema.validate(payload, load_schema())
        assert payload["selected"]["ic"] == 2
        assert payload["selected"]["cv"] == 2
        assert len(payload["table"]) == 3

    def test_k_max_one_row(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f, n=8, t=20)
        code, out = run_cli(["kselect", "--input", str(f), "--method", "ic",
                             "--k-max", "2", "--seed", "3", "--format", "json"],
                            capsys)
        assert code == 0
        payload = json.loads(out)
        assert len(payload["table"]) == 1


class TestTableFormat:
    def test_human_readable_table(self, tmp_path, capsys):
        f = tmp_path / "p.csv"
        write_panel_csv(f)
        code, out = run_cli(["test", "--input", str(f), "--test", "oepa",
                             "--seed", "1", "--format", "table"], capsys)
        assert code == 0
        assert "p-value" in out
