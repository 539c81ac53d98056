"""Reading, validating and writing the plain-text data formats.

Inputs (UTF-8, LF line endings, ``.`` decimal separator):

``risks.csv``    ``id,name,group,likelihood,stddev``
``edges.csv``    ``source,target,weight`` -- one row per undirected edge, source < target
``history.csv``  ``month,r1,...,rN`` -- month as ``YYYY-MM``, cells 0/1
``params.json``  keys ``alpha``, ``beta``, ``gamma``, ``time_unit``

The writers emit a canonical form (integer groups, shortest round-trip
floats, edges sorted), so ``save(load(f))`` reproduces any canonical file
byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import HistoricalSeries, InfluenceGraph, ModelParams, RiskCatalog, RiskRecord

RISKS_HEADER = ["id", "name", "group", "likelihood", "stddev"]
EDGES_HEADER = ["source", "target", "weight"]


def _read_rows(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file") from None
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    return path, rows


def _fail(path, line, msg):
    raise ValidationError(f"{path}:{line}: {msg}")


def _number(path, line, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        _fail(path, line, f"not a number: {text!r}")


def load_catalog(path) -> RiskCatalog:
    path, rows = _read_rows(path)
    if rows[0] != RISKS_HEADER:
        _fail(path, 1, f"header must be {','.join(RISKS_HEADER)}")
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(RISKS_HEADER):
            _fail(path, line, f"expected {len(RISKS_HEADER)} fields, got {len(row)}")
        rid = _number(path, line, row[0], int)
        if rid != len(records) + 1:
            _fail(path, line, f"risk ids must run 1..N in order, got {rid}")
        try:
            records.append(
                RiskRecord(rid, row[1], row[2], _number(path, line, row[3]), _number(path, line, row[4]))
            )
        except ValidationError as exc:
            _fail(path, line, str(exc))
    if not records:
        raise ValidationError(f"{path}: no risks")
    return RiskCatalog(tuple(records))


def load_graph(path, n: int) -> InfluenceGraph:
    """Edges file for ``n`` risks; an empty edge list gives an empty graph."""
    path, rows = _read_rows(path)
    if rows[0] != EDGES_HEADER:
        _fail(path, 1, f"header must be {','.join(EDGES_HEADER)}")
    edges = []
    seen = set()
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            _fail(path, line, f"expected 3 fields, got {len(row)}")
        s, t = _number(path, line, row[0], int), _number(path, line, row[1], int)
        w = _number(path, line, row[2], int)
        if s == t:
            _fail(path, line, f"self-loop on risk {s}")
        if s > t:
            _fail(path, line, f"edge ({s}, {t}) must be written with source < target")
        if not (1 <= s <= n and 1 <= t <= n):
            _fail(path, line, f"edge ({s}, {t}) refers to an unknown risk id (N={n})")
        if (s, t) in seen:
            _fail(path, line, f"duplicate edge ({s}, {t})")
        if w <= 0:
            _fail(path, line, f"weight must be a positive integer, got {w}")
        seen.add((s, t))
        edges.append((s - 1, t - 1, w))
    return InfluenceGraph.from_edges(n, edges)


def load_history(path, n: int | None = None) -> HistoricalSeries:
    path, rows = _read_rows(path)
    header = rows[0]
    if not header or header[0] != "month":
        _fail(path, 1, "first column must be 'month'")
    cols = header[1:]
    if cols != [f"r{i}" for i in range(1, len(cols) + 1)]:
        _fail(path, 1, "risk columns must be r1..rN")
    if n is not None and len(cols) != n:
        _fail(path, 1, f"history has {len(cols)} risk columns but the catalog has {n} risks")
    months, states = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            _fail(path, line, f"expected {len(header)} fields, got {len(row)}")
        if any(c not in ("0", "1") for c in row[1:]):
            _fail(path, line, "state values must be 0 or 1")
        if months:
            try:
                HistoricalSeries((months[-1], row[0]), np.zeros((2, 1), int))
            except ValidationError:
                _fail(path, line, f"month {row[0]!r} does not follow {months[-1]!r}")
        else:
            try:
                HistoricalSeries((row[0],), np.zeros((1, 1), int))
            except ValidationError as exc:
                _fail(path, line, str(exc))
        months.append(row[0])
        states.append([int(c) for c in row[1:]])
    return HistoricalSeries(tuple(months), np.array(states, dtype=np.int8).reshape(len(months), len(cols)))


def load_dataset(risks, edges, history=None):
    catalog = load_catalog(risks)
    graph = load_graph(edges, catalog.N)
    hist = load_history(history, catalog.N) if history is not None else None
    return catalog, graph, hist


def load_params(path) -> ModelParams:
    """Read ``params.json``; a ``fit.json`` written by the CLI is accepted too."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if "params_monthly" in data:
        data = data["params_monthly"]
    missing = {"alpha", "beta", "gamma", "time_unit"} - set(data)
    if missing:
        raise ValidationError(f"{path}: missing keys {sorted(missing)}")
    try:
        return ModelParams.from_unit(float(data["alpha"]), float(data["beta"]), float(data["gamma"]),
                                     data["time_unit"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def save_catalog(catalog: RiskCatalog, path):
    _write_csv(path, RISKS_HEADER, [
        [r.id, r.name, r.group, _fmt(r.likelihood), _fmt(r.stddev)] for r in catalog.entries
    ])


def save_graph(graph: InfluenceGraph, path):
    _write_csv(path, EDGES_HEADER, [[i + 1, j + 1, w] for i, j, w in graph.edges()])


def save_history(history: HistoricalSeries, path):
    header = ["month"] + [f"r{i}" for i in range(1, history.N + 1)]
    _write_csv(path, header, [[m, *map(int, row)] for m, row in zip(history.months, history.states)])


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n",
                          encoding="utf-8", newline="")


def save_params(params: ModelParams, path):
    dump_json(params.as_dict(), path)


def write_table(path, header, rows):
    """Plot-ready CSV; floats written with full round-trip precision."""
    out = []
    for row in rows:
        out.append([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    _write_csv(path, header, out)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
