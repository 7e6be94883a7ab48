from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

HEADER = ("experiment", "kernel", "n", "d", "D", "trial", "metric", "value", "wall_time_s", "degeneracies")

# trial index used for rows that aggregate over trials
AGGREGATE = -1


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    kernel: str
    n: int
    d: int
    D: int
    trial: int
    metric: str
    value: float
    wall_time_s: float = 0.0
    degeneracies: int = 0

    def same_result(self, other: "ResultRecord") -> bool:
        """Equality ignoring wall time; NaN values compare equal."""
        a, b = asdict(self), asdict(other)
        a.pop("wall_time_s")
        b.pop("wall_time_s")
        va, vb = a.pop("value"), b.pop("value")
        return a == b and (va == vb or (math.isnan(va) and math.isnan(vb)))


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv_text(records, metadata=()) -> str:
    buf = io.StringIO()
    for line in metadata:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow([_fmt(getattr(r, name)) for name in HEADER])
    return buf.getvalue()


def emit_csv(records, path, metadata=()) -> None:
    """Write records with ``#``-prefixed metadata lines ahead of the header."""
    Path(path).write_text(to_csv_text(records, metadata))


def parse_csv_text(text: str) -> list[ResultRecord]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    types = {f.name: f.type for f in fields(ResultRecord)}
    out = []
    for row in reader:
        values = {}
        for name, raw in zip(HEADER, row):
            t = types[name]
            values[name] = int(raw) if t in (int, "int") else float(raw) if t in (float, "float") else raw
        out.append(ResultRecord(**values))
    return out


def read_csv(path) -> list[ResultRecord]:
    return parse_csv_text(Path(path).read_text())


def to_json_text(records, metadata=()) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    doc = {
        "metadata": list(metadata),
        "records": [{k: clean(v) for k, v in asdict(r).items()} for r in records],
    }
    return json.dumps(doc, indent=1) + "\n"


def emit_json(records, path, metadata=()) -> None:
    Path(path).write_text(to_json_text(records, metadata))
