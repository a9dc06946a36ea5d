"""Command-line surface tests: dispatch, exit codes, stream discipline, determinism."""

import json

import pytest

from embscale import costmodel
from embscale.arch import find_arch
from embscale.cli import main
from embscale.costmodel import FullFineTune


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def truth_params_file(tmp_path):
    path = tmp_path / "truth.json"
    path.write_text(json.dumps({
        "formula": "chinchilla",
        "coefficients": {"irreducible_loss": 0.25, "A": 180.0, "B": 200.0,
                         "alpha": 0.4, "beta": 0.4},
    }))
    return str(path)


class TestFlopsAndTokens:
    def test_flops_full_is_6nd(self, capsys):
        code, out, _ = run_cli(capsys, "flops", "--arch", "pythia-160m",
                               "--method", "full", "--tokens", "1e9", "--format", "json")
        assert code == 0
        payload = json.loads(out)
        counts = costmodel.param_counts(find_arch("pythia-160m"), FullFineTune())
        assert payload["flop"] == 6.0 * counts.n_forward * 1e9

    def test_tokens_inverts_flops(self, capsys):
        code, out, _ = run_cli(capsys, "tokens", "--arch", "pythia-70m",
                               "--method", "lora:32", "--budget", "1.5e16", "--format", "json")
        assert code == 0
        tokens = json.loads(out)["tokens"]
        code, out, _ = run_cli(capsys, "flops", "--arch", "pythia-70m",
                               "--method", "lora:32", "--tokens", repr(tokens), "--format", "json")
        assert abs(json.loads(out)["flop"] - 1.5e16) / 1.5e16 < 1e-12

    def test_scientific_notation_accepted(self, capsys):
        code, _, _ = run_cli(capsys, "flops", "--arch", "pythia-14m",
                             "--method", "bias", "--tokens", "2.5E8")
        assert code == 0


class TestPlan:
    def test_plan_large_budget_is_lora(self, capsys):
        code, out, _ = run_cli(capsys, "plan", "--budget", "1.5e18")
        assert code == 0
        assert json.loads(out)["method"] == "lora:128"

    def test_plan_small_budget_is_full(self, capsys):
        code, out, _ = run_cli(capsys, "plan", "--budget", "1.5e15")
        assert code == 0
        assert json.loads(out)["method"] == "full"

    def test_plan_freeze_mode(self, capsys):
        code, out, _ = run_cli(capsys, "plan", "--budget", "1e17", "--mode", "freeze")
        assert code == 0
        assert json.loads(out)["method"].startswith("freeze:")

    def test_plan_deterministic_bytes(self, capsys):
        _, first, _ = run_cli(capsys, "plan", "--budget", "3.7e16")
        _, second, _ = run_cli(capsys, "plan", "--budget", "3.7e16")
        assert first == second


class TestSynthFitPredictPipeline:
    def test_full_pipeline(self, capsys, tmp_path, truth_params_file):
        runs_path = str(tmp_path / "runs.jsonl")
        code, out, err = run_cli(
            capsys, "synth", "--truth", truth_params_file, "--sigma", "0",
            "--seed", "7", "--out", runs_path,
            "--methods", "full,lora:128",
        )
        assert code == 0
        assert out == ""  # results stream carries nothing; status goes to stderr
        assert "wrote" in err

        code, out, _ = run_cli(capsys, "ingest", "--runs", runs_path, "--format", "json")
        assert code == 0
        assert json.loads(out)["rejected"] == 0

        params_path = str(tmp_path / "params.json")
        code, _, _ = run_cli(capsys, "fit", "--runs", runs_path, "--formula", "chinchilla",
                             "--holdout", "largest", "--out", params_path)
        assert code == 0
        report = json.loads(open(params_path).read())
        for name, value in {"irreducible_loss": 0.25, "A": 180.0, "B": 200.0,
                            "alpha": 0.4, "beta": 0.4}.items():
            assert abs(report["coefficients"][name] - value) / value < 1e-3, name

        code, out, _ = run_cli(capsys, "predict", "--params", params_path,
                               "--n", "1e8", "--d", "1e9", "--format", "json")
        assert code == 0
        assert json.loads(out)["loss"] > 0.25

    def test_fit_modified_recovers_truth_coefficients(self, capsys, tmp_path):
        # Noiseless synthetic grid -> every coefficient back within 0.1%.
        # The slowest test here (~30 s): the full default init grid runs.
        truth = {"formula": "modified", "coefficients": {
            "irreducible_loss": 0.2, "a_d": 3.2, "b_d": 5.0, "a_s": 40.0,
            "b_s": 1.5, "c_s": 20.0, "alpha": 0.3, "beta": 0.25}}
        truth_file = tmp_path / "truth.json"
        truth_file.write_text(json.dumps(truth))
        runs_path = str(tmp_path / "runs.jsonl")
        code, _, _ = run_cli(
            capsys, "synth", "--truth", str(truth_file), "--sigma", "0", "--seed", "7",
            "--out", runs_path, "--budgets", "1.5e15,2.4e16,3.8e17,1.5e18",
            "--methods", "full,lora:32,freeze@0.25,freeze@0.5",
        )
        assert code == 0
        params_path = str(tmp_path / "params.json")
        code, _, _ = run_cli(capsys, "fit", "--runs", runs_path, "--formula", "modified",
                             "--holdout", "none", "--out", params_path)
        assert code == 0
        fitted = json.loads(open(params_path).read())["coefficients"]
        for name, value in truth["coefficients"].items():
            assert abs(fitted[name] - value) / abs(value) < 1e-3, name

    def test_synth_deterministic_bytes(self, capsys, tmp_path, truth_params_file):
        a, b = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        run_cli(capsys, "synth", "--truth", truth_params_file, "--sigma", "0.01",
                "--seed", "3", "--out", a, "--methods", "full,lora:32")
        run_cli(capsys, "synth", "--truth", truth_params_file, "--sigma", "0.01",
                "--seed", "3", "--out", b, "--methods", "full,lora:32")
        assert open(a, "rb").read() == open(b, "rb").read()


class TestIsoflopAndFrontier:
    @pytest.fixture()
    def runs_file(self, capsys, tmp_path, truth_params_file):
        path = str(tmp_path / "runs.jsonl")
        run_cli(capsys, "synth", "--truth", truth_params_file, "--sigma", "0",
                "--seed", "1", "--out", path, "--methods", "full,lora:32,lora:128")
        return path

    def test_isoflop_csv(self, capsys, runs_file):
        code, out, _ = run_cli(capsys, "isoflop", "--runs", runs_file, "--method", "lora")
        assert code == 0
        header, *rows = out.strip().splitlines()
        assert header == "budget,size,loss,hyper"
        assert len(rows) >= 8

    def test_frontier_json(self, capsys, runs_file):
        code, out, _ = run_cli(capsys, "frontier", "--runs", runs_file)
        assert code == 0
        payload = json.loads(out)
        assert set(payload["fits"]) == {"full", "lora"}


class TestCorr:
    def test_corr_on_scored_runs(self, capsys, tmp_path):
        rows = []
        for tokens, loss, score in [(1e8, 1.4, 0.30), (2e8, 1.1, 0.38), (4e8, 0.9, 0.45)]:
            rows.append({
                "model_name": "mystery", "n_total": 1e8, "n_nonembed": 9e7,
                "method": "full", "trainable_fraction": 1.0, "tokens": tokens,
                "flop": 6 * 9e7 * tokens, "final_loss": loss, "mteb_score": score,
            })
        path = tmp_path / "scored.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        code, out, err = run_cli(capsys, "corr", "--runs", str(path), "--format", "json")
        assert code == 0
        assert json.loads(out)["spearman"] == -1.0


class TestExitCodes:
    def test_unknown_flag_is_usage_error_with_suggestion(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["plan", "--budget", "1e16", "--artifcats", "x.json"])
        assert excinfo.value.code == 2
        assert "--artifacts" in capsys.readouterr().err

    def test_missing_file_is_validation_error(self, capsys):
        code, out, err = run_cli(capsys, "corr", "--runs", "/nonexistent/file.jsonl")
        assert code == 1
        assert out == ""
        assert "error" in err

    def test_unknown_arch_is_validation_error(self, capsys):
        code, _, err = run_cli(capsys, "flops", "--arch", "gpt-17t",
                               "--method", "full", "--tokens", "1e8")
        assert code == 1
        assert "unknown architecture" in err

    def test_bad_method_hyper(self, capsys):
        code, _, err = run_cli(capsys, "flops", "--arch", "pythia-70m",
                               "--method", "freeze:99", "--tokens", "1e8")
        assert code == 1
