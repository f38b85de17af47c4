"""Plain-text formats for graphs and trees, JSON for trial results.

Graph: header ``n m`` then one sorted ``u v`` pair per line (0-based).
Tree: header ``n delta`` then one line ``p1 .. pn`` of 1-based parents,
with ``0`` marking the root.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import TYPE_CHECKING, Union

from .graphs import Graph, GraphError
from .trees import Tree, TreeError

if TYPE_CHECKING:
    from .harness import TrialRecord

GRAPH_SUFFIX = ".edges"
TREE_SUFFIX = ".tree"
RESULTS_SUFFIX = ".json"

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based (0 for whole-file problems)."""

    def __init__(self, path: PathLike, line: int, msg: str) -> None:
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


def _ints(path: PathLike, lineno: int, text: str, count: int | None = None) -> list[int]:
    try:
        vals = [int(tok) for tok in text.split()]
    except ValueError:
        raise FormatError(path, lineno, f"expected integers, got {text.strip()!r}") from None
    if count is not None and len(vals) != count:
        raise FormatError(path, lineno, f"expected {count} integers, got {len(vals)}")
    return vals


def _content_lines(path: PathLike) -> list[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        return [(i, ln) for i, ln in enumerate(fh, start=1) if ln.strip() and not ln.lstrip().startswith("#")]


def format_graph(g: Graph) -> str:
    edges = g.edges()
    return "".join([f"{g.n} {len(edges)}\n", *(f"{u} {v}\n" for u, v in edges)])


def save_graph(g: Graph, path: PathLike) -> None:
    Path(path).write_text(format_graph(g), encoding="utf-8")


def load_graph(path: PathLike) -> Graph:
    lines = _content_lines(path)
    if not lines:
        raise FormatError(path, 0, "empty file, expected header 'n m'")
    hline, header = lines[0]
    n, m = _ints(path, hline, header, 2)
    body = lines[1:]
    if len(body) != m:
        last = body[-1][0] if body else hline
        raise FormatError(path, last + (len(body) < m), f"header promises {m} edges, found {len(body)}")
    edges = []
    for lineno, text in body:
        u, v = _ints(path, lineno, text, 2)
        if not (0 <= u < n and 0 <= v < n):
            raise FormatError(path, lineno, f"vertex out of range 0..{n - 1}")
        edges.append((u, v))
    try:
        return Graph.from_edges(n, edges)
    except GraphError as exc:
        raise FormatError(path, 0, str(exc)) from None


def format_tree(t: Tree, root: int = 0) -> str:
    par = t.parents(root)
    return f"{t.n} {t.delta}\n" + " ".join(str(p + 1) for p in par) + "\n"


def save_tree(t: Tree, path: PathLike, root: int = 0) -> None:
    Path(path).write_text(format_tree(t, root), encoding="utf-8")


def load_tree(path: PathLike) -> Tree:
    lines = _content_lines(path)
    if not lines:
        raise FormatError(path, 0, "empty file, expected header 'n delta'")
    hline, header = lines[0]
    n, delta = _ints(path, hline, header, 2)
    if len(lines) != 2:
        at = lines[2][0] if len(lines) > 2 else hline + 1
        raise FormatError(path, at, "expected exactly one parent-array line")
    lineno, text = lines[1]
    parents = _ints(path, lineno, text, n)
    if parents.count(0) != 1:
        raise FormatError(path, lineno, f"expected exactly one root marked 0, found {parents.count(0)}")
    edges = []
    for child, p in enumerate(parents):
        if p == 0:
            continue
        if not 1 <= p <= n or p == child + 1:
            raise FormatError(path, lineno, f"bad parent {p} for vertex {child + 1}")
        edges.append((p - 1, child))
    try:
        return Tree.from_edges(n, edges, delta)
    except TreeError as exc:
        raise FormatError(path, lineno, str(exc)) from None


def save_results(records: "list[TrialRecord]", path: PathLike) -> None:
    payload = {"records": [r.to_json() for r in records]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_results(path: PathLike, reverify: bool = True) -> "list[TrialRecord]":
    """Load trial records; with ``reverify`` every success is re-checked
    against a regenerated host and tree."""
    from .harness import TrialRecord, reverify_record

    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.lineno, exc.msg) from None
    if not isinstance(payload, dict) or "records" not in payload:
        raise FormatError(path, 1, "expected an object with a 'records' list")
    records = []
    for i, obj in enumerate(payload["records"]):
        try:
            rec = TrialRecord.from_json(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, 0, f"record {i}: {exc}") from None
        if reverify and rec.outcome == "success":
            reverify_record(rec)
        records.append(rec)
    return records


def io_roundtrip(path: PathLike) -> Union[Graph, Tree, "list[TrialRecord]"]:
    """Load whatever lives at ``path``, dispatching on the suffix."""
    suffix = Path(path).suffix
    if suffix == GRAPH_SUFFIX:
        return load_graph(path)
    if suffix == TREE_SUFFIX:
        return load_tree(path)
    if suffix == RESULTS_SUFFIX:
        return load_results(path)
    raise FormatError(path, 0, f"unknown suffix {suffix!r}; use {GRAPH_SUFFIX}, {TREE_SUFFIX} or {RESULTS_SUFFIX}")
