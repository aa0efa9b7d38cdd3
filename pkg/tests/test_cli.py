import csv
import json

import pytest

from splaynetsim.cli import _cell, emit_results, format_csv, main
from splaynetsim.const import (
    AGG_MEAN,
    CSV_COLUMNS,
    EVENT_LOG_HEADER,
    EXIT_DETECTOR,
    EXIT_MISMATCH,
    EXIT_OK,
    EXIT_USAGE,
)
from splaynetsim.exceptions import WorkloadError
from splaynetsim.modules.simulator import Simulator
from splaynetsim.utils import parse_int_list, parse_seeds, parse_workload

from .utils import get_path_to_data_file, make_report


def read_rows(path):
    with open(path) as csv_file:
        return list(csv.DictReader(csv_file))


class TestOutput:
    """
    Test result formatting
    """

    def test_empty_csv_is_header_only(self):
        assert format_csv([]) == ",".join(CSV_COLUMNS) + "\n"

    @pytest.mark.parametrize(
        "value, text",
        [
            [None, ""],
            [2.0, "2"],
            [1.5, "1.5"],
            [0.1234567, "0.123457"],
            ["zipf:1.2", "zipf:1.2"],
            [7, "7"],
        ],
    )
    def test_cell(self, value, text):
        assert _cell(value) == text

    def test_emit_to_stdout(self, capsys):
        emit_results([make_report(), make_report(seed=1)], "csv")
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("7,1,uniform,0,2,")

    def test_emit_single_json_object(self, tmp_path):
        path = tmp_path / "report.json"
        emit_results(make_report(), "json", str(path))
        content = json.loads(path.read_text())
        assert content["n"] == 7
        assert content["agg"] is None

    def test_emit_unknown_format(self):
        with pytest.raises(ValueError):
            emit_results([], "xml")


class TestParsers:
    @pytest.mark.parametrize(
        "text, kind, label",
        [
            ["uniform", "uniform", "uniform"],
            ["zipf", "zipf", "zipf:1.2"],
            ["zipf:2", "zipf", "zipf:2"],
        ],
    )
    def test_parse_workload(self, text, kind, label):
        spec = parse_workload(text, m=4)
        assert spec.kind == kind
        assert spec.label == label
        assert spec.m == 4

    def test_parse_trace_workload(self):
        spec = parse_workload(f"trace:{get_path_to_data_file('trace_small.csv')}")
        assert spec.path.endswith("trace_small.csv")

    @pytest.mark.parametrize("text", ["pareto", "zipf:x", "trace:", "uniform:3"])
    def test_parse_bad_workload(self, text):
        with pytest.raises(WorkloadError):
            parse_workload(text)

    @pytest.mark.parametrize(
        "value, seeds",
        [
            [None, []],
            ["7", [7]],
            ["1,2,5", [1, 2, 5]],
            ["1..4", [1, 2, 3, 4]],
        ],
    )
    def test_parse_seeds(self, value, seeds):
        assert parse_seeds(value) == seeds

    def test_empty_seed_range(self):
        with pytest.raises(ValueError):
            parse_seeds("5..1")

    def test_parse_int_list(self):
        assert parse_int_list("64, 128,") == [64, 128]
        assert parse_int_list([1, "2"]) == [1, 2]


class TestMain:
    """
    Test the command line entry point
    """

    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_run_csv(self, tmp_path):
        out = tmp_path / "run.csv"
        code = main(["run", "--nodes", "15", "--requests", "2", "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        [row] = read_rows(out)
        assert list(row) == CSV_COLUMNS
        assert row["n"] == "15"
        assert row["m"] == "2"
        assert row["agg"] == ""

    def test_run_json_with_events(self, tmp_path):
        out = tmp_path / "run.json"
        code = main(["run", "--nodes", "7", "--out", str(out), "--log", "events"])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["m"] == 2
        events = (tmp_path / "run.json.events.log").read_text().splitlines()
        assert events[0] == EVENT_LOG_HEADER

    def test_run_trace(self, tmp_path):
        out = tmp_path / "trace.csv"
        trace = get_path_to_data_file("trace_small.csv")
        assert main(["run", "--nodes", "7", "--workload", f"trace:{trace}", "--out", str(out)]) == 0
        assert read_rows(out)[0]["m"] == "3"

    @pytest.mark.parametrize(
        "argv",
        [
            ["run", "--nodes", "7", "--workload", "pareto"],
            ["run", "--nodes", "7,15"],
            ["run", "--nodes", "0"],
            ["sweep", "--nodes", "7", "--seeds", "3..1"],
            ["run", "--nodes", "7", "--workload", "trace:/does/not/exist.csv"],
        ],
    )
    def test_invalid_input(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_sweep_with_mean_rows(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            ["sweep", "--nodes", "7,15", "--seeds", "1..2", "--requests", "1", "--out", str(out)]
        )
        assert code == EXIT_OK
        rows = read_rows(out)
        assert [(row["n"], row["agg"]) for row in rows] == [
            ("7", ""),
            ("7", ""),
            ("7", AGG_MEAN),
            ("15", ""),
            ("15", ""),
            ("15", AGG_MEAN),
        ]
        assert rows[2]["seed"] == ""

    def test_sweep_store(self, tmp_path, mocker):
        add_many = mocker.patch("splaynetsim.modules.results.SplayNetResults.add_many")
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--nodes", "7", "--store", "--out", str(out)]) == EXIT_OK
        add_many.assert_called_once()

    def test_detector_fired(self, tmp_path, mocker):
        mocker.patch.object(
            Simulator, "detect_deadlock", return_value=[((1, 0, 0, 0), (3, 0, 0, 0))]
        )
        out = tmp_path / "run.csv"
        assert main(["run", "--nodes", "7", "--out", str(out)]) == EXIT_DETECTOR
        [row] = read_rows(out)
        assert row["n"] == "7"

    def test_verify(self, capsys):
        assert main(["verify", "--nodes", "7", "--exhaustive-pairs"]) == EXIT_OK
        assert "n=7: 42 passed, 0 failed" in capsys.readouterr().out

    def test_verify_mismatch(self, mocker, capsys):
        mocker.patch(
            "splaynetsim.modules.experiment.verify_pair", return_value="1->2: final topology"
        )
        assert main(["verify", "--nodes", "7", "--samples", "3"]) == EXIT_MISMATCH
        assert "n=7: 0 passed, 3 failed" in capsys.readouterr().out
