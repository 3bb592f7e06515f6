import csv
import logging
import os
from typing import List

import orjson

from collapsesim.core.errors import ReportWriteError
from collapsesim.data.models import RunReport, Table

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv")
JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def to_json_bytes(report: RunReport) -> bytes:
    """Identical reports give identical bytes: keys sorted, no timestamps."""
    return orjson.dumps(report.model_dump(), option=JSON_OPTIONS) + b"\n"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_table(table: Table, path: str):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])


def _expectations_table(report: RunReport) -> Table:
    return Table(
        name="expectations",
        columns=["name", "observed", "expected", "tolerance", "passed", "basis"],
        rows=[
            [e.name, e.observed, e.expected, e.tolerance, e.passed, e.basis]
            for e in report.expectations
        ],
    )


def emit(report: RunReport, format: str, path: str) -> List[str]:
    """Writes the report under path and returns the files written.

    json: path is the target file when it ends in .json, otherwise a directory
    receiving <scenario>.json. csv: path is a directory receiving one file per
    table plus expectations.csv.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown report format {format!r}; choose json or csv")
    written: List[str] = []
    target = path
    try:
        if format == "json":
            if not path.endswith(".json"):
                os.makedirs(path, exist_ok=True)
                target = os.path.join(path, f"{report.scenario.name}.json")
            else:
                parent = os.path.dirname(path)
                if parent:
                    os.makedirs(parent, exist_ok=True)
            with open(target, "wb") as f:
                f.write(to_json_bytes(report))
            written.append(target)
        else:
            os.makedirs(path, exist_ok=True)
            for table in report.tables + [_expectations_table(report)]:
                target = os.path.join(path, f"{table.name}.csv")
                _write_table(table, target)
                written.append(target)
    except OSError as e:
        raise ReportWriteError(target, e) from e
    logger.debug("wrote %s", written)
    return written
