"""Independent acceptance oracle for embeddings."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..graphs import Graph
from ..trees import Tree

INTO_G = "into-G"
INTO_SQUARE = "into-G-square"


@dataclass
class VerifyResult:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _within_two(host: Graph, source: int, target: int) -> bool:
    # depth-limited BFS; deliberately avoids any cached square
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        if v == target:
            return True
        if dist[v] == 2:
            continue
        for u in host.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return False


def verify_embedding(
    host: Graph, t: Tree, mapping: Sequence[int] | Mapping[int, int], mode: str = INTO_G
) -> VerifyResult:
    """Check totality, injectivity and edge preservation of ``mapping``.

    In ``into-G-square`` mode a tree edge may land on any pair of host
    vertices at distance at most two.
    """
    if mode not in (INTO_G, INTO_SQUARE):
        return VerifyResult(False, f"unknown mode {mode!r}")
    if isinstance(mapping, Mapping):
        missing = [v for v in range(t.n) if v not in mapping]
        if missing:
            return VerifyResult(False, f"tree vertex {missing[0]} unmapped")
        image = [mapping[v] for v in range(t.n)]
    else:
        if len(mapping) != t.n:
            return VerifyResult(False, f"map has {len(mapping)} entries for {t.n} tree vertices")
        image = list(mapping)
    seen: dict[int, int] = {}
    for v, x in enumerate(image):
        if not 0 <= x < host.n:
            return VerifyResult(False, f"tree vertex {v} mapped outside the host ({x})")
        if x in seen:
            return VerifyResult(False, f"tree vertices {seen[x]} and {v} both map to {x}")
        seen[x] = v
    for u, v in t.edges():
        x, y = image[u], image[v]
        if mode == INTO_G:
            if y not in host.adjacency[x]:
                return VerifyResult(False, f"tree edge {u}-{v} maps to non-edge {x}-{y}")
        elif not _within_two(host, x, y):
            return VerifyResult(False, f"tree edge {u}-{v} maps to {x},{y} at distance > 2")
    return VerifyResult(True)
