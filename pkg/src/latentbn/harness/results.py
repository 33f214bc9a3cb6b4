"""Flat-file persistence: result rows, replicate logs and manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

RESULT_COLUMNS = (
    "kind", "K", "Kstar", "Kt", "M", "eta1", "eta2", "n", "replicates",
    "mean", "stderr", "master_seed", "wall_time_ms", "status",
)
REPLICATE_COLUMNS = ("kind", "eta1", "eta2", "n", "replicate", "seed", "value")


def fmt_float(v) -> str:
    """17 significant digits: enough for an exact round trip."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ResultRow:
    kind: str
    K: int
    Kstar: int
    Kt: int
    M: int
    eta1: float
    eta2: float
    n: int
    replicates: int
    mean: float | None
    stderr: float | None
    master_seed: int
    wall_time_ms: float | None = None
    status: str = "ok"

    def cells(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) or (v is None and f.name in ("mean", "stderr", "wall_time_ms")):
                out.append(fmt_float(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_cells(cls, d: dict) -> ResultRow:
        def opt(key):
            return float(d[key]) if d.get(key, "") != "" else None

        return cls(
            kind=d["kind"], K=int(d["K"]), Kstar=int(d["Kstar"]), Kt=int(d["Kt"]), M=int(d["M"]),
            eta1=float(d["eta1"]), eta2=float(d["eta2"]), n=int(d["n"]), replicates=int(d["replicates"]),
            mean=opt("mean"), stderr=opt("stderr"), master_seed=int(d["master_seed"]),
            wall_time_ms=opt("wall_time_ms"), status=d.get("status", "ok") or "ok",
        )

    @property
    def config_key(self) -> tuple:
        return (self.K, self.Kstar, self.Kt, self.M, self.eta1, self.eta2, self.replicates, self.master_seed)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_results(path, rows) -> None:
    Path(path).write_text(_csv_text(RESULT_COLUMNS, [r.cells() for r in rows]))


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS[:-2]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path} is missing columns {sorted(missing)}")
        return [ResultRow.from_cells(d) for d in reader]


def write_replicates(path, records) -> None:
    """``records``: iterable of (kind, eta1, eta2, n, replicate, seed, value)."""
    rows = [[k, fmt_float(e1), fmt_float(e2), str(n), str(r), str(s), fmt_float(v)] for k, e1, e2, n, r, s, v in records]
    Path(path).write_text(_csv_text(REPLICATE_COLUMNS, rows))


def read_replicates(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"kind": d["kind"], "eta1": float(d["eta1"]), "eta2": float(d["eta2"]), "n": int(d["n"]),
             "replicate": int(d["replicate"]), "seed": int(d["seed"]), "value": float(d["value"])}
            for d in csv.DictReader(fh)
        ]


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_gnuplot(path, header: str, columns) -> None:
    """Whitespace-separated columns with a ``#`` header line."""
    lines = ["# " + header]
    for row in zip(*columns):
        lines.append(" ".join(fmt_float(v) if not isinstance(v, str) else v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
