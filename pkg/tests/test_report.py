import csv
import io
import json

import pytest

from pointdet.benchutil import peak_allocation, time_callable
from pointdet.report import ReportTable


def test_table_row_length_check():
    t = ReportTable("t", ["a", "b"])
    with pytest.raises(ValueError):
        t.add_row("r", [1.0])


def test_table_rejects_nonfinite_cells():
    t = ReportTable("t", ["a"])
    with pytest.raises(ValueError):
        t.add_row("r", [float("nan")])
    t.add_row("ok", [None])  # explicit null is allowed


def test_csv_and_json_carry_identical_values():
    t = ReportTable("metrics", ["x", "y"])
    t.add_row("r1", [1.5, None])
    t.add_row("r2", [2.25, 3.0])
    parsed_json = json.loads(t.to_json())
    reader = list(csv.reader(io.StringIO(t.to_csv())))
    assert reader[0] == ["metrics", "x", "y"]
    for (label, *cells), jrow, jlabel in zip(reader[1:], parsed_json["cells"],
                                             parsed_json["rows"]):
        assert label == jlabel
        got = [None if c == "" else float(c) for c in cells]
        assert got == jrow


def test_csv_roundtrips_float_precision():
    value = 0.1 + 0.2  # not exactly representable in short decimal
    t = ReportTable("t", ["v"])
    t.add_row("r", [value])
    cell = list(csv.reader(io.StringIO(t.to_csv())))[1][1]
    assert float(cell) == value


def test_emit_dispatch():
    t = ReportTable("t", ["a"])
    t.add_row("r", [1.0])
    assert t.emit("csv") == t.to_csv()
    assert t.emit("json") == t.to_json()
    with pytest.raises(ValueError):
        t.emit("xml")


def test_json_emission_deterministic():
    t = ReportTable("t", ["a"])
    t.add_row("r", [1.0])
    assert t.to_json() == t.to_json()


# ---------------------------------------------------------------------------
# benchmarking helpers


def test_time_callable_reports_all_fields():
    stats = time_callable(lambda: sum(range(100)), warmup=1, reps=5)
    assert set(stats) == {"median_ms", "p95_ms", "min_ms", "reps"}
    assert stats["reps"] == 5
    assert 0 <= stats["min_ms"] <= stats["median_ms"] <= stats["p95_ms"]


def test_peak_allocation_sees_large_buffer():
    small = peak_allocation(lambda: bytearray(10))
    big = peak_allocation(lambda: bytearray(5_000_000))
    assert big > small
    assert big >= 5_000_000
