"""CLI: config validation, artifact determinism, exit codes."""

import json

import pytest

from ergolab import cli

BERNOULLI_SYSTEM = {
    "kind": "shift",
    "adjacency": [[1, 1], [1, 1]],
    "transition": [["1/2", "1/2"], ["1/2", "1/2"]],
}

INDICATOR_0 = {"variant": "cylinder", "radius": 0, "table": [{"word": [0], "value": 1.0}]}
INDICATOR_1 = {"variant": "cylinder", "radius": 0, "table": [{"word": [1], "value": 1.0}]}


def minimal_correlate():
    return {
        "schema_version": 1,
        "experiment": "correlate",
        "seed": 4,
        "system": BERNOULLI_SYSTEM,
        "observables": [INDICATOR_0, INDICATOR_1],
        "params": {"queries": [{"times": [0, 3]}, {"times": [0, 5]}], "method": "exact"},
    }


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestValidate:
    def test_required_window_derivation(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "experiment": "average",
            "seed": 1,
            "system": BERNOULLI_SYSTEM,
            "observables": [
                {"variant": "cylinder", "radius": 3, "table": [], "default": 1.0},
                INDICATOR_0,
            ],
            "params": {
                "multipliers": [1, 2],
                "sequence": {"kind": "polynomial", "coefficients": [0, 0, 1]},
                "n_max": 1024,
                "epsilon": 1.0,
                "delta": 2.0,
            },
        }
        _, report = cli.validate_config(cfg)
        assert report["ok"]
        assert report["derived"]["required_window_radius"] == 2 * 1024 ** 2 + 3

    def test_duplicate_multipliers_invalid(self):
        cfg = {
            "schema_version": 1,
            "experiment": "average",
            "seed": 1,
            "system": BERNOULLI_SYSTEM,
            "observables": [INDICATOR_0, INDICATOR_1],
            "params": {"multipliers": [2, 2], "n_max": 64},
        }
        _, report = cli.validate_config(cfg)
        assert not report["ok"]
        assert any("pairwise distinct" in msg for msg in report["errors"])

    def test_nonpositive_delta_invalid(self):
        cfg = {
            "schema_version": 1,
            "experiment": "average",
            "seed": 1,
            "system": BERNOULLI_SYSTEM,
            "observables": [INDICATOR_0],
            "params": {"multipliers": [1], "n_max": 64, "delta": 0.0},
        }
        _, report = cli.validate_config(cfg)
        assert not report["ok"]

    def test_unknown_keys_rejected(self):
        cfg = minimal_correlate()
        cfg["mystery"] = 1
        _, report = cli.validate_config(cfg)
        assert not report["ok"]
        assert any("unknown keys" in msg for msg in report["errors"])

    def test_non_stochastic_row_named(self):
        cfg = minimal_correlate()
        cfg["system"] = {
            "kind": "shift",
            "adjacency": [[1, 1], [1, 1]],
            "transition": [[0.7, 0.7], [0.5, 0.5]],
        }
        _, report = cli.validate_config(cfg)
        assert not report["ok"]
        assert any("row 0" in msg for msg in report["errors"])

    def test_schema_version_enforced(self):
        cfg = minimal_correlate()
        cfg["schema_version"] = 99
        _, report = cli.validate_config(cfg)
        assert not report["ok"]


class TestRun:
    def test_minimal_correlate(self, tmp_path):
        path = write_config(tmp_path, minimal_correlate())
        out = tmp_path / "out"
        assert cli.run(path, out, workers=1, emit_svg=True) == 0
        lines = (out / "correlations.csv").read_text().splitlines()
        assert lines[0] == "t_0,t_1,estimate,std_error,exact,defect"
        for line in lines[1:]:
            assert line.split(",")[-1] == "0"  # disjoint windows: defect 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"]["ok"]
        assert "correlations.csv" in summary["csv_columns"]

    def test_validation_failure_exit_code(self, tmp_path):
        cfg = minimal_correlate()
        cfg["params"]["queries"] = [{"times": [0, 0]}]
        path = write_config(tmp_path, cfg)
        assert cli.run(path, tmp_path / "out", workers=1, emit_svg=False) == 2

    def test_runtime_failure_exit_code(self, tmp_path):
        cfg = minimal_correlate()
        cfg["params"]["queries"] = [{"times": [0, 10 ** 6 + 7]}]
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert cli.run(path, out, workers=1, emit_svg=False) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"]["error"]["code"] == "correlations.span_too_large"

    def test_rerun_byte_identical(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "experiment": "ratecheck",
            "seed": 6,
            "system": BERNOULLI_SYSTEM,
            "observables": [
                dict(INDICATOR_0, centered=True),
                dict(INDICATOR_1, centered=True),
            ],
            "params": {
                "multipliers": [1, 2],
                "sequence": {"kind": "linear"},
                "n_max": 256,
                "point_count": 12,
                "epsilon": 1.0,
                "delta": 2.0,
                "min_checkpoint": 8,
            },
        }
        path = write_config(tmp_path, cfg)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert cli.run(path, out_a, workers=1, emit_svg=False) == 0
        assert cli.run(path, out_b, workers=2, emit_svg=False) == 0
        for name in ("ratecheck.csv", "ratecheck_summary.json", "summary.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        manifest_a = json.loads((out_a / "manifest.json").read_text())
        manifest_b = json.loads((out_b / "manifest.json").read_text())
        hashes_a = {e["name"]: e["sha256"] for e in manifest_a["artifacts"]}
        hashes_b = {e["name"]: e["sha256"] for e in manifest_b["artifacts"]}
        assert hashes_a == hashes_b

    def test_counting_run(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "experiment": "counting",
            "seed": 0,
            "params": {
                "checks": [
                    {
                        "type": "c",
                        "sequence": {"kind": "linear"},
                        "t_first": 3,
                        "t_second": 2,
                        "K": 500,
                        "n_max": 500,
                    }
                ]
            },
        }
        path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert cli.run(path, out, workers=1, emit_svg=False) == 0
        lines = (out / "counting.csv").read_text().splitlines()
        assert lines[0] == "condition,witness_M,pass,worst_n,worst_m,worst_count"
        assert lines[1].startswith("c,") and ",true," in lines[1]


class TestCommands:
    def test_decompose_command(self, capsys):
        assert cli.main(["decompose", "13"]) == 0
        output = capsys.readouterr().out
        assert "blocks=3" in output and "[1..8]" in output

    def test_validate_command(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal_correlate())
        assert cli.main(["validate", str(path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ok"]

    def test_validate_command_bad_config(self, tmp_path, capsys):
        cfg = minimal_correlate()
        cfg["experiment"] = "unknown"
        path = write_config(tmp_path, cfg)
        assert cli.main(["validate", str(path)]) == 2
        report = json.loads(capsys.readouterr().out)
        assert not report["ok"]

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.json")]) == 2


@pytest.mark.parametrize("value,expected", [(0.1, "0.10000000000000001"), (1.0, "1"), (True, "true")])
def test_float_formatting(value, expected):
    assert cli.fmt_value(value) == expected
