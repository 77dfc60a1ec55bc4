"""On-disk formats for benchmarks, edge lists, traces and parameter checkpoints.

Every reader is strict: malformed input raises :class:`DataFormatError` with the
line number and byte offset of the first offending record.  Floats are written
with ``repr`` so a read after a write is lossless.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Dataset, adjacency_from_edges, edges_of
from .errors import DataFormatError
from .initgraph import ExpertKnowledge

META_FORMAT = "coke-benchmark"
EXPERT_FORMAT = "coke-expert"
FORMAT_VERSION = 1

DATA_FILE = "data.csv"
META_FILE = "meta.json"
EXPERT_FILE = "expert.json"
TRUTH_FILE = "truth_edges.csv"
PRED_FILE = "pred_edges.csv"
TRACE_FILE = "trace.csv"
PARAMS_FILE = "params.json"

EDGE_HEADER = ("from", "to")
TRACE_HEADER = ("iter", "reward", "bic_term", "penalty", "edges", "theta_full", "theta_miss", "f1")


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_text(path, text: str) -> None:
    # newline="" keeps "\n" on every platform so files compare byte-for-byte
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_text(path) -> str:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: invalid UTF-8 at byte {exc.start}") from exc


class _Lines:
    """Split CSV text into records while keeping line numbers and byte offsets."""

    def __init__(self, text: str, path):
        self.path = path
        self.rows: list[tuple[int, int, list[str]]] = []
        if not text:
            raise DataFormatError(f"{path}: empty file (byte 0)")
        if not text.endswith("\n"):
            offset = len(text.encode("utf-8"))
            raise DataFormatError(f"{path}: truncated, last line has no newline (line {text.count(chr(10)) + 1}, byte {offset})")
        offset = 0
        for lineno, line in enumerate(text[:-1].split("\n"), start=1):
            fields = line.split(",")
            for f in fields:
                if '"' in f or "\r" in f:
                    self.fail(lineno, offset, "quoted fields and CR line endings are not allowed")
            self.rows.append((lineno, offset, fields))
            offset += len(line.encode("utf-8")) + 1

    def fail(self, lineno: int, offset: int, msg: str):
        raise DataFormatError(f"{self.path}: line {lineno} (byte {offset}): {msg}")

    def header(self, expected: Optional[Sequence[str]] = None) -> list[str]:
        lineno, offset, fields = self.rows[0]
        if expected is not None and tuple(fields) != tuple(expected):
            self.fail(lineno, offset, f"expected header {','.join(expected)!r}, got {','.join(fields)!r}")
        return fields

    def body(self, width: int):
        for lineno, offset, fields in self.rows[1:]:
            if len(fields) != width:
                self.fail(lineno, offset, f"expected {width} fields, got {len(fields)}")
            yield lineno, offset, fields


def _load_json(path, fmt: str) -> dict:
    text = _read_text(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno} (byte {exc.pos}): {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise DataFormatError(f"{path}: top-level value must be an object")
    if payload.get("format") != fmt:
        raise DataFormatError(f"{path}: expected format {fmt!r}, got {payload.get('format')!r}")
    if payload.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {payload.get('version')!r}")
    return payload


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------- benchmark


def write_dataset(path, ds: Dataset) -> None:
    lines = [",".join(("recipe",) + tuple(ds.sensor_names))]
    for row in range(ds.n_rows):
        cells = [ds.recipe_ids[ds.recipe_of[row]]]
        cells.extend(format_float(v) for v in ds.values[row])
        lines.append(",".join(cells))
    write_text(path, "\n".join(lines) + "\n")


def write_meta(path, ds: Dataset, extra: Optional[dict] = None) -> None:
    payload = {
        "format": META_FORMAT,
        "version": FORMAT_VERSION,
        "sensors": list(ds.sensor_names),
        "machine_of": [int(m) for m in ds.machine_of],
        "recipes": list(ds.recipe_ids),
        "n": ds.n_rows,
        "d": ds.n_vars,
        "k": ds.n_machines,
    }
    if extra:
        payload.update(extra)
    write_text(path, _dump_json(payload))


def read_meta(path) -> dict:
    meta = _load_json(path, META_FORMAT)
    for key in ("sensors", "machine_of", "n", "d", "k"):
        if key not in meta:
            raise DataFormatError(f"{path}: missing key {key!r}")
    sensors, machines = meta["sensors"], meta["machine_of"]
    if not all(isinstance(s, str) and s for s in sensors):
        raise DataFormatError(f"{path}: sensor names must be non-empty strings")
    if len(set(sensors)) != len(sensors):
        raise DataFormatError(f"{path}: duplicate sensor names")
    if len(sensors) != meta["d"] or len(machines) != meta["d"]:
        raise DataFormatError(f"{path}: sensors/machine_of length disagree with d={meta['d']}")
    if not all(isinstance(m, int) and not isinstance(m, bool) for m in machines):
        raise DataFormatError(f"{path}: machine_of must hold integers")
    if len(set(machines)) != meta["k"]:
        raise DataFormatError(f"{path}: machine_of uses {len(set(machines))} machines, k={meta['k']}")
    return meta


def read_dataset(data_path, meta_path) -> Dataset:
    meta = read_meta(meta_path)
    lines = _Lines(_read_text(data_path), data_path)
    lines.header(("recipe",) + tuple(meta["sensors"]))
    d = meta["d"]
    labels: list[str] = []
    values = []
    for lineno, offset, fields in lines.body(d + 1):
        if not fields[0]:
            lines.fail(lineno, offset, "empty recipe label")
        row = np.empty(d)
        for j, cell in enumerate(fields[1:]):
            if cell == "":
                row[j] = np.nan
                continue
            try:
                row[j] = float(cell)
            except ValueError:
                lines.fail(lineno, offset, f"column {meta['sensors'][j]!r}: not a number: {cell!r}")
            if not math.isfinite(row[j]):
                lines.fail(lineno, offset, f"column {meta['sensors'][j]!r}: non-finite value {cell!r}")
        labels.append(fields[0])
        values.append(row)
    if len(values) != meta["n"]:
        raise DataFormatError(f"{data_path}: {len(values)} data rows but meta declares n={meta['n']}")
    matrix = np.array(values).reshape(len(values), d)
    ds = Dataset.from_matrix(matrix, labels, meta["machine_of"], meta["sensors"])
    order = meta.get("recipes")
    if order is not None and sorted(order) != sorted(ds.recipe_ids):
        raise DataFormatError(f"{meta_path}: recipe list does not match {data_path}")
    return ds


def _pairs_to_names(pairs: Iterable[tuple[int, int]], names: Sequence[str]) -> list[list[str]]:
    return [[names[i], names[j]] for i, j in sorted(pairs)]


def write_expert(path, ek: ExpertKnowledge, names: Sequence[str]) -> None:
    payload = {
        "format": EXPERT_FORMAT,
        "version": FORMAT_VERSION,
        "required": _pairs_to_names(ek.required, names),
        "forbidden": _pairs_to_names(ek.forbidden, names),
    }
    write_text(path, _dump_json(payload))


def read_expert(path, names: Sequence[str]) -> ExpertKnowledge:
    payload = _load_json(path, EXPERT_FORMAT)
    index = {n: i for i, n in enumerate(names)}
    parsed = {}
    for key in ("required", "forbidden"):
        pairs = payload.get(key, [])
        if not isinstance(pairs, list):
            raise DataFormatError(f"{path}: {key!r} must be a list of [from, to] pairs")
        out = set()
        for pos, pair in enumerate(pairs):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise DataFormatError(f"{path}: {key}[{pos}] is not a [from, to] pair")
            try:
                out.add((index[pair[0]], index[pair[1]]))
            except (KeyError, TypeError):
                raise DataFormatError(f"{path}: {key}[{pos}] names an unknown sensor: {pair!r}") from None
        parsed[key] = frozenset(out)
    return ExpertKnowledge(parsed["required"], parsed["forbidden"])


def write_edges(path, adj: np.ndarray, names: Sequence[str]) -> None:
    lines = [",".join(EDGE_HEADER)]
    lines.extend(f"{names[i]},{names[j]}" for i, j in edges_of(adj))
    write_text(path, "\n".join(lines) + "\n")


def read_edges(path, names: Sequence[str]) -> np.ndarray:
    index = {n: i for i, n in enumerate(names)}
    lines = _Lines(_read_text(path), path)
    lines.header(EDGE_HEADER)
    pairs = []
    for lineno, offset, (src, dst) in lines.body(2):
        if src not in index or dst not in index:
            lines.fail(lineno, offset, f"unknown sensor in edge {src}->{dst}")
        if src == dst:
            lines.fail(lineno, offset, f"self loop on {src}")
        pairs.append((index[src], index[dst]))
    return adjacency_from_edges(len(names), pairs)


def read_named_edges(path) -> set:
    """Edge file as a set of ``(from, to)`` name pairs, without a sensor list."""
    lines = _Lines(_read_text(path), path)
    lines.header(EDGE_HEADER)
    edges = set()
    for lineno, offset, (src, dst) in lines.body(2):
        if not src or not dst:
            lines.fail(lineno, offset, "empty sensor name")
        if src == dst:
            lines.fail(lineno, offset, f"self loop on {src}")
        edges.add((src, dst))
    return edges


def write_benchmark(directory, bench) -> dict:
    """Write data, meta, truth and expert files; returns the written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    ds = bench.data
    paths = {
        "data": out / DATA_FILE,
        "meta": out / META_FILE,
        "truth": out / TRUTH_FILE,
        "expert": out / EXPERT_FILE,
    }
    write_dataset(paths["data"], ds)
    write_meta(paths["meta"], ds, {"missing_rate": bench.report.realized_rate})
    write_edges(paths["truth"], bench.truth.dag, ds.sensor_names)
    write_expert(paths["expert"], bench.expert_knowledge, ds.sensor_names)
    return paths


def read_benchmark(directory):
    """Returns ``(dataset, expert_knowledge, truth_adjacency_or_None)``."""
    root = Path(directory)
    ds = read_dataset(root / DATA_FILE, root / META_FILE)
    ek_path = root / EXPERT_FILE
    ek = read_expert(ek_path, ds.sensor_names) if ek_path.exists() else ExpertKnowledge()
    truth_path = root / TRUTH_FILE
    truth = read_edges(truth_path, ds.sensor_names) if truth_path.exists() else None
    return ds, ek, truth


# ---------------------------------------------------------------- traces


def write_trace(path, records) -> None:
    lines = [",".join(TRACE_HEADER)]
    for r in records:
        f1 = "" if r.f1 is None else format_float(r.f1)
        cells = [
            str(r.iteration),
            format_float(r.reward),
            format_float(r.bic_term),
            format_float(r.penalty),
            str(r.edge_count),
            format_float(r.theta_full),
            format_float(r.theta_miss),
            f1,
        ]
        lines.append(",".join(cells))
    write_text(path, "\n".join(lines) + "\n")


def read_trace(path) -> list:
    from .trainer import TraceRecord

    lines = _Lines(_read_text(path), path)
    lines.header(TRACE_HEADER)
    out = []
    for lineno, offset, f in lines.body(len(TRACE_HEADER)):
        try:
            rec = TraceRecord(
                int(f[0]),
                float(f[1]),
                float(f[2]),
                float(f[3]),
                int(f[4]),
                float(f[5]),
                float(f[6]),
                None if f[7] == "" else float(f[7]),
            )
        except ValueError as exc:
            lines.fail(lineno, offset, str(exc))
        out.append(rec)
    return out


# ---------------------------------------------------------------- checkpoints


def save_params(path, params) -> None:
    tmp = f"{path}.tmp"
    write_text(tmp, params.to_json())
    os.replace(tmp, path)


def load_params(path):
    from .nn import NetworkParams

    text = _read_text(path)
    try:
        return NetworkParams.from_json(text)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
