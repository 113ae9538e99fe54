"""Rectangular result tables with CSV and JSON emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence


@dataclass
class ReportTable:
    """Row/column labelled numeric cells; None marks an explicit null."""

    title: str
    columns: list[str]
    rows: list[str] = field(default_factory=list)
    cells: list[list[Optional[float]]] = field(default_factory=list)

    def add_row(self, label: str, values: Sequence[Optional[float]]):
        values = list(values)
        if len(values) != len(self.columns):
            raise ValueError(
                f"row {label!r} has {len(values)} cells, table has {len(self.columns)} columns"
            )
        for v in values:
            if v is not None and not math.isfinite(v):
                raise ValueError(f"row {label!r} contains a non-finite cell")
        self.rows.append(label)
        self.cells.append(values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.title] + self.columns)
        for label, row in zip(self.rows, self.cells):
            writer.writerow([label] + ["" if v is None else repr(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "title": self.title,
                "columns": self.columns,
                "rows": self.rows,
                "cells": self.cells,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    def emit(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown table format {fmt!r}")
