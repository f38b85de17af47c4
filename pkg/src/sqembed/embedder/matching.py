"""Bipartite matching with a Hall-violation witness on failure."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from ..graphs import Graph


@dataclass
class HallResult:
    matching: dict[int, int] | None
    witness: frozenset[int] | None = None

    @property
    def perfect(self) -> bool:
        return self.matching is not None


def hopcroft_karp(left: list[int], adj: dict[int, list[int]]) -> dict[int, int]:
    """Maximum matching ``left -> right`` by shortest augmenting paths."""
    match_l: dict[int, int] = {}
    match_r: dict[int, int] = {}
    inf = len(left) + 1
    while True:
        dist: dict[int, int] = {}
        queue = deque()
        for a in left:
            if a not in match_l:
                dist[a] = 0
                queue.append(a)
        found = False
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                nxt = match_r.get(b)
                if nxt is None:
                    found = True
                elif nxt not in dist:
                    dist[nxt] = dist[a] + 1
                    queue.append(nxt)
        if not found:
            return match_l

        def augment(a: int) -> bool:
            # iterative DFS along layered edges
            stack = [(a, iter(adj[a]))]
            path = []
            while stack:
                u, it = stack[-1]
                for b in it:
                    nxt = match_r.get(b)
                    if nxt is None:
                        path.append((u, b))
                        for x, y in path:
                            match_l[x] = y
                            match_r[y] = x
                        return True
                    if dist.get(nxt, inf) == dist[u] + 1:
                        path.append((u, b))
                        stack.append((nxt, iter(adj[nxt])))
                        break
                else:
                    stack.pop()
                    dist[u] = inf
                    if path:
                        path.pop()
            return False

        grew = False
        for a in left:
            if a not in match_l and augment(a):
                grew = True
        if not grew:
            return match_l


def hall_finish(host: Graph, a: Iterable[int], b: Iterable[int]) -> HallResult:
    """Perfect matching between equal-sized disjoint sets ``A`` and ``B``
    using host edges, or a set ``U`` of ``A`` with ``|N(U) & B| < |U|``.

    The witness is the set of ``A`` vertices reachable by alternating paths
    from an unmatched ``A`` vertex, which is the standard Konig certificate.
    """
    left = sorted(set(a))
    right = frozenset(b)
    if len(left) != len(right):
        raise ValueError("hall_finish needs |A| == |B|")
    if right & set(left):
        raise ValueError("A and B must be disjoint")
    adj = {x: [y for y in host.adjacency[x] if y in right] for x in left}
    match_l = hopcroft_karp(left, adj)
    if len(match_l) == len(left):
        return HallResult(match_l)
    match_r = {y: x for x, y in match_l.items()}
    reach = {x for x in left if x not in match_l}
    queue = deque(reach)
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            z = match_r.get(y)
            if z is not None and z not in reach:
                reach.add(z)
                queue.append(z)
    return HallResult(None, frozenset(reach))
