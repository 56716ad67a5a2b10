"""
Tests for worker fan-out and artifact helpers.
"""
import json
import logging
import threading
import time

import numpy as np
import pytest

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from app import __version__
from app.utils import (
    format_float,
    log_command,
    parallel_map,
    read_csv_columns,
    run_parallel,
    setup_logging,
    write_csv,
    write_report,
)


def _square(x):
    return x * x


def _fail_on_three(x):
    if x == 3:
        raise ValueError("bad point")
    return x


class TestParallelMap:
    """Test cases for the thread fan-out."""

    @pytest.mark.asyncio
    async def test_results_keep_input_order(self):
        """Results come back in input order regardless of finish order."""
        def slow_first(x):
            time.sleep(0.02 if x == 0 else 0.0)
            return x

        results = await parallel_map(slow_first, range(5), threads=4)
        assert results == [0, 1, 2, 3, 4]

    @pytest.mark.asyncio
    async def test_exceptions_returned_per_item(self):
        """A failing item does not abort the others."""
        results = await parallel_map(_fail_on_three, [1, 2, 3, 4], threads=2)
        assert results[:2] == [1, 2]
        assert isinstance(results[2], ValueError)
        assert results[3] == 4

    @pytest.mark.asyncio
    async def test_worker_cap(self):
        """No more than `threads` calls run at once."""
        active = []
        peak = []
        lock = threading.Lock()

        def track(x):
            with lock:
                active.append(x)
                peak.append(len(active))
            time.sleep(0.01)
            with lock:
                active.remove(x)
            return x

        await parallel_map(track, range(8), threads=2)
        assert max(peak) <= 2

    def test_run_parallel_serial_path(self):
        """One worker runs inline and still captures exceptions."""
        results = run_parallel(_fail_on_three, [3, 5], threads=1)
        assert isinstance(results[0], ValueError)
        assert results[1] == 5

    def test_run_parallel_threads(self):
        """The synchronous wrapper matches a plain map."""
        assert run_parallel(_square, [1, 2, 3], threads=3) == [1, 4, 9]


class TestArtifacts:
    """Test cases for CSV and JSON artifacts."""

    def test_format_float(self):
        """Floats print with 12 significant digits, None as empty."""
        assert format_float(0.1 + 0.2) == "0.3"
        assert format_float(None) == ""
        assert format_float(np.float64(1.5e-9)) == "1.5e-09"

    def test_write_csv_header_and_cells(self, tmp_path):
        """The provenance line precedes the column header."""
        path = write_csv(str(tmp_path / "sub" / "table.csv"), ("a", "b", "note"),
                         [[1.0, None, "ok"], [np.float64(2.5), 3, ""]], "abc123", "spectrum")

        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        assert lines[0] == f"# csdtc-sim {__version__} command=spectrum config-sha256=abc123"
        assert lines[1] == "a,b,note"
        assert lines[2] == "1,,ok"
        assert lines[3] == "2.5,3,"

    def test_write_csv_deterministic(self, tmp_path):
        """Same rows give byte-identical files."""
        rows = [[0.1, 2.0 / 3.0], [1e-12, -4.0]]
        first = write_csv(str(tmp_path / "a.csv"), ("x", "y"), rows, "d", "zz")
        second = write_csv(str(tmp_path / "b.csv"), ("x", "y"), rows, "d", "zz")
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()

    def test_read_csv_columns_skips_comments(self, tmp_path):
        """Artifacts read back column-wise."""
        path = write_csv(str(tmp_path / "t.csv"), ("m", "value"), [[1, 0.9], [5, 0.8]],
                         "d", "rbfit")
        columns = read_csv_columns(path)
        assert columns == {"m": ["1", "5"], "value": ["0.9", "0.8"]}

    def test_quoted_cells_round_trip(self, tmp_path):
        """Cells holding commas are quoted on write and kept whole on read."""
        path = write_csv(str(tmp_path / "q.csv"), ("phi", "error"),
                         [[0.1, "FitError: bounds (0, 1)"], [0.2, ""]], "d", "chevron")
        with open(path, encoding="utf-8") as handle:
            assert '"FitError: bounds (0, 1)"' in handle.read()
        columns = read_csv_columns(path)
        assert columns["error"] == ["FitError: bounds (0, 1)", ""]
        assert columns["phi"] == ["0.1", "0.2"]

    def test_write_report_provenance(self, tmp_path):
        """Reports embed tool, version, command and config hash."""
        path = write_report(str(tmp_path / "r.json"),
                            {"value": np.float64(1.25), "grid": np.arange(3),
                             "pair": (1, 2), "z": complex(1, -1)},
                            "feed", "gate")
        with open(path, encoding="utf-8") as handle:
            document = json.load(handle)
        assert document["tool"] == "csdtc-sim"
        assert document["version"] == __version__
        assert document["command"] == "gate"
        assert document["config_sha256"] == "feed"
        assert document["report"]["value"] == 1.25
        assert document["report"]["grid"] == [0, 1, 2]
        assert document["report"]["pair"] == [1, 2]
        assert document["report"]["z"] == {"real": 1.0, "imag": -1.0}


class TestLogging:
    """Test cases for logging setup."""

    def test_setup_logging_idempotent(self):
        """Repeated setup keeps a single simulator handler."""
        setup_logging("DEBUG")
        setup_logging("INFO")
        root = logging.getLogger()
        ours = [h for h in root.handlers if getattr(h, "_csdtc_handler", False)]
        assert len(ours) == 1
        assert root.level == logging.INFO

    def test_log_command_format(self, caplog):
        """Command milestones are single INFO lines."""
        with caplog.at_level(logging.INFO, logger="app.utils"):
            log_command("spectrum", "start", "config abc")
        assert "Command spectrum: start - config abc" in caplog.text
