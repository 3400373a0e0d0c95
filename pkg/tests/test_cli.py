import json

import numpy as np
import pandas as pd
import pytest

import cli
from cli import EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION, CommandResult, build_config, build_parser, main, render


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestClassify:
    def test_bogdanov_takens_point(self, capsys):
        code, out, _ = run(capsys, "classify", "--nu1", "0", "--nu3", "1")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["results"]["label"] == "BT"
        assert payload["results"]["p_plus"]["label"] == "BT"
        assert payload["inputs"]["nu1"] == 0.0

    def test_region_csv(self, capsys):
        code, out, _ = run(capsys, "classify", "--lambda", "0", "0.2", "0", "0", "--format", "csv")
        assert code == EXIT_OK
        assert out.splitlines() == ["label", "NN"]

    def test_ambiguous_region_is_numerical_failure(self, capsys):
        code, out, err = run(capsys, "classify", "--lambda", "0", "0", "0", "0")
        assert code == EXIT_NUMERICAL
        assert out == ""
        assert "数值计算失败" in err

    def test_michelson_spectrum(self, capsys):
        code, out, _ = run(capsys, "classify", "--c", "1.0")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["verdicts"] == {"divergence_free": True, "shilnikov": True}
        assert payload["results"]["real_rate"] == pytest.approx(2.0 * payload["results"]["rho"])

    def test_missing_selector(self, capsys):
        code, _, err = run(capsys, "classify")
        assert code == EXIT_PRECONDITION
        assert "参数错误" in err

    def test_off_circle(self, capsys):
        code, _, _ = run(capsys, "classify", "--nu1", "-0.5", "--nu3", "0.5")
        assert code == EXIT_PRECONDITION


class TestUsageErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["unknown"],
            ["classify", "--format", "xml"],
            ["hamiltonian", "--n", "four"],
            [],
        ],
    )
    def test_exit_code(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == EXIT_PRECONDITION

    def test_invalid_tolerance(self, capsys):
        code, _, _ = run(capsys, "classify", "--nu1", "0", "--nu3", "1", "--abs-tol", "0")
        assert code == EXIT_PRECONDITION

    def test_invalid_window(self, capsys):
        code, _, _ = run(capsys, "export-orbit", "--t-cut", "-1")
        assert code == EXIT_PRECONDITION


class TestHamiltonian:
    def test_default_run(self, capsys):
        code, out, _ = run(capsys, "hamiltonian")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["verdicts"] == {"energy_conserved": True, "hamiltonian_field_matches": True}
        nu3 = 0.5
        np.testing.assert_allclose(payload["results"]["S"], [[-nu3, 1.0], [1.0, 0.0]])
        assert payload["results"]["max_energy_drift"] <= 1e-8

    def test_full_vector(self, capsys):
        code, out, _ = run(capsys, "hamiltonian", "--n", "6", "--nu", "-0.5", "0", "0.3", "0", "0.2", "0", "--t-end", "1")
        assert code == EXIT_OK
        assert json.loads(out)["inputs"]["nu"] == [-0.5, 0.0, 0.3, 0.0, 0.2, 0.0]

    def test_dimension_from_nu(self, capsys):
        code, out, _ = run(capsys, "hamiltonian", "--nu", "-0.5", "0", "0.3", "0", "0.2", "0", "--t-end", "1")
        assert code == EXIT_OK
        assert np.asarray(json.loads(out)["results"]["S"]).shape == (3, 3)

    def test_other_dimension_needs_nu(self, capsys):
        code, _, _ = run(capsys, "hamiltonian", "--n", "6")
        assert code == EXIT_PRECONDITION

    def test_length_mismatch(self, capsys):
        code, _, _ = run(capsys, "hamiltonian", "--n", "6", "--nu", "-0.5", "0", "0.3", "0")
        assert code == EXIT_PRECONDITION

    def test_non_reversible(self, capsys):
        code, _, _ = run(capsys, "hamiltonian", "--nu", "-0.5", "0.1", "0.3", "0")
        assert code == EXIT_PRECONDITION


class TestOutput:
    def test_deterministic(self, capsys):
        first = run(capsys, "classify", "--nu1", "-0.6", "--nu3", "0.8")
        second = run(capsys, "classify", "--nu1", "-0.6", "--nu3", "0.8")
        assert first[1] == second[1]

    def test_output_file(self, tmp_path, capsys):
        path = tmp_path / "result.json"
        code, out, err = run(capsys, "classify", "--nu1", "0", "--nu3", "-1", "--output", str(path))
        assert code == EXIT_OK
        assert out == ""
        assert str(path) in err
        assert json.loads(path.read_text(encoding="utf-8"))["results"]["label"] == "HDZ"

    def test_export_kuramoto_csv(self, tmp_path, capsys):
        path = tmp_path / "orbit.csv"
        code, _, _ = run(capsys, "export-orbit", "--t-cut", "1", "--step", "0.5", "--format", "csv", "--output", str(path))
        assert code == EXIT_OK
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["t", "p1", "p2", "p3"]
        np.testing.assert_allclose(frame["t"], [-1.0, -0.5, 0.0, 0.5, 1.0])

    def test_render_json(self):
        frame = pd.DataFrame({"a": [1.0]})
        result = CommandResult({"x": np.float64(0.5)}, {"m": np.eye(2)}, {}, {"ok": np.bool_(True)}, frame)
        payload = json.loads(render(result, "json"))
        assert payload == {"inputs": {"x": 0.5}, "results": {"m": [[1.0, 0.0], [0.0, 1.0]]}, "budgets": {}, "verdicts": {"ok": True}}

    def test_render_csv_precision(self):
        result = CommandResult({}, {}, {}, {}, pd.DataFrame({"v": [1.0 / 3.0]}))
        assert float(render(result, "csv").splitlines()[1]) == 1.0 / 3.0

    def test_failed_verdict_exit_code(self, monkeypatch, capsys):
        failing = CommandResult({}, {}, {}, {"check": False, "skipped": None}, pd.DataFrame())
        monkeypatch.setitem(cli.COMMANDS, "crosscheck", lambda cfg: failing)
        code, _, err = run(capsys, "crosscheck")
        assert code == EXIT_NUMERICAL
        assert "check" in err


def test_config_defaults():
    cfg = build_config(build_parser().parse_args(["classify", "--lambda", "0", "0", "0", "0"]))
    assert cfg.tol.abs_tol == 1e-11 and cfg.tol.max_step == 0.005
    assert cfg.t_cut == 20.0 and cfg.T == 25.0 and cfg.kappa == 1.0
    assert cfg.options["lambda"] == [0.0, 0.0, 0.0, 0.0]
    assert cfg.output_format == "json"


class TestSplittingCommands:
    def test_hom4d(self, capsys):
        code, out, _ = run(capsys, "hom4d")
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["results"]["bounded_solutions"] == 1
        assert payload["results"]["report"]["xi"][1] == 0.0
        assert all(payload["verdicts"].values())

    def test_het_csv(self, capsys):
        code, out, _ = run(capsys, "het", "--format", "csv")
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[0] == "row,lambda1,lambda2,lambda3"
        assert [line.split(",")[0] for line in lines[1:]] == ["phi", "psi"]
