"""Bounded-degree trees and the decompositions the embedder consumes.

Subtrees of a :class:`Tree` are represented as frozensets of its vertex ids;
a connected vertex subset of a tree induces a subtree, so nothing else is
needed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np


class TreeError(ValueError):
    pass


class PlanInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class Tree:
    n: int
    adjacency: tuple[tuple[int, ...], ...]
    delta: int

    def __post_init__(self) -> None:
        if self.n < 1 or len(self.adjacency) != self.n:
            raise TreeError("adjacency size does not match n")
        if sum(len(a) for a in self.adjacency) != 2 * (self.n - 1):
            raise TreeError("a tree on n vertices has n - 1 edges")
        sets = [set(a) for a in self.adjacency]
        for v, nbrs in enumerate(self.adjacency):
            if len(sets[v]) != len(nbrs) or v in sets[v]:
                raise TreeError(f"loop or repeated edge at {v}")
            if any(v not in sets[u] for u in nbrs):
                raise TreeError(f"asymmetric adjacency at {v}")
            if len(nbrs) > self.delta:
                raise TreeError(f"vertex {v} has degree {len(nbrs)} > delta={self.delta}")
        if len(_component(self.adjacency, 0)) != self.n:
            raise TreeError("tree is not connected")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], delta: int | None = None) -> "Tree":
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        adjacency = tuple(tuple(sorted(a)) for a in nbrs)
        if delta is None:
            delta = max((len(a) for a in adjacency), default=0)
        return cls(n, adjacency, max(delta, 0))

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    @property
    def max_degree(self) -> int:
        return max(len(a) for a in self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @cached_property
    def leaves(self) -> frozenset[int]:
        if self.n == 1:
            return frozenset()
        return frozenset(v for v in range(self.n) if len(self.adjacency[v]) == 1)

    def parents(self, root: int = 0) -> list[int]:
        """Parent array of a BFS from ``root``; the root's entry is -1."""
        par = [-2] * self.n
        par[root] = -1
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in self.adjacency[v]:
                if par[u] == -2:
                    par[u] = v
                    queue.append(u)
        return par

    def distances(self, source: int, limit: int | None = None) -> dict[int, int]:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            v = queue.popleft()
            if limit is not None and dist[v] >= limit:
                continue
            for u in self.adjacency[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist


def _component(adjacency: Sequence[Sequence[int]], start: int, within: frozenset[int] | None = None) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in adjacency[v]:
            if u not in seen and (within is None or u in within):
                seen.add(u)
                stack.append(u)
    return seen


def is_subtree(t: Tree, vertices: Iterable[int]) -> bool:
    vs = frozenset(vertices)
    if not vs:
        return False
    return len(_component(t.adjacency, next(iter(vs)), vs)) == len(vs)


# ---------------------------------------------------------------------------
# generators


def max_leaves(n: int, delta: int) -> int:
    if n <= 2:
        return n if n == 2 else 0
    if delta <= 2:
        return 2
    return ((delta - 2) * n + 2) // (delta - 1)


def gen_tree(n: int, delta: int, leaf_target: float | None = None, seed: int = 0) -> Tree:
    """Random tree with maximum degree at most ``delta``.

    Vertices arrive one at a time and attach to an existing vertex with spare
    degree. Without ``leaf_target`` the host is uniform among those; with it,
    each arrival extends a current leaf with probability ``bias`` (keeping the
    leaf count) or branches off an internal vertex, and ``bias`` is tuned by
    rejection until the leaf count is within 10% of ``leaf_target * n``.
    Labels are shuffled at the end.
    """
    if n < 2 or delta < 2:
        raise TreeError("need n >= 2 and delta >= 2")
    rng = np.random.default_rng(seed)
    if leaf_target is None:
        return _relabel(_attach(n, delta, None, rng), delta, rng)
    want = leaf_target * n
    lo, hi = 0.9 * want, 1.1 * want
    if hi < min(2, n) or lo > max_leaves(n, delta):
        raise TreeError(f"leaf_target={leaf_target} infeasible for n={n}, delta={delta}")
    lo_b, hi_b = 0.0, 1.0
    bias = min(max(1.0 - leaf_target, 0.0), 1.0)
    for _ in range(200):
        edges = _attach(n, delta, bias, rng)
        leaves = sum(1 for c in np.bincount(np.array(edges).ravel(), minlength=n) if c == 1)
        if lo <= leaves <= hi:
            return _relabel(edges, delta, rng)
        if leaves > hi:
            lo_b = bias
        else:
            hi_b = bias
        bias = (lo_b + hi_b) / 2 if hi_b - lo_b > 1e-6 else rng.uniform()
    raise TreeError(f"could not hit leaf_target={leaf_target} for n={n}, delta={delta}")


def _attach(n: int, delta: int, bias: float | None, rng: np.random.Generator) -> list[tuple[int, int]]:
    deg = [0] * n
    edges: list[tuple[int, int]] = []
    # vertices with spare degree, split into leaves/isolated and internal
    open_leaf: list[int] = [0]
    open_inner: list[int] = []
    pos: dict[int, tuple[list[int], int]] = {0: (open_leaf, 0)}

    def remove(v: int) -> None:
        lst, i = pos.pop(v)
        last = lst.pop()
        if last != v:
            lst[i] = last
            pos[last] = (lst, i)

    def add(v: int, lst: list[int]) -> None:
        pos[v] = (lst, len(lst))
        lst.append(v)

    for v in range(1, n):
        if bias is None:
            k = int(rng.integers(len(open_leaf) + len(open_inner)))
            host = open_leaf[k] if k < len(open_leaf) else open_inner[k - len(open_leaf)]
        elif open_inner and (not open_leaf or rng.uniform() >= bias):
            host = open_inner[int(rng.integers(len(open_inner)))]
        else:
            host = open_leaf[int(rng.integers(len(open_leaf)))]
        edges.append((host, v))
        remove(host)
        deg[host] += 1
        deg[v] = 1
        if deg[host] < delta:
            add(host, open_leaf if deg[host] <= 1 else open_inner)
        add(v, open_leaf)
    return edges


def _relabel(edges: list[tuple[int, int]], delta: int, rng: np.random.Generator) -> Tree:
    n = len(edges) + 1
    perm = rng.permutation(n)
    return Tree.from_edges(n, [(int(perm[u]), int(perm[v])) for u, v in edges], delta)


def path_tree(n: int, delta: int = 2) -> Tree:
    return Tree.from_edges(n, [(i, i + 1) for i in range(n - 1)], max(delta, 2))


def star_tree(n: int, delta: int | None = None) -> Tree:
    return Tree.from_edges(n, [(0, i) for i in range(1, n)], delta if delta is not None else n - 1)


def spider_tree(legs: int, leg_length: int, delta: int | None = None) -> Tree:
    edges = []
    nxt = 1
    for _ in range(legs):
        prev = 0
        for _ in range(leg_length):
            edges.append((prev, nxt))
            prev = nxt
            nxt += 1
    return Tree.from_edges(nxt, edges, delta if delta is not None else max(legs, 2))


def binary_tree(n: int, delta: int = 3) -> Tree:
    return Tree.from_edges(n, [((i - 1) // 2, i) for i in range(1, n)], max(delta, 3))


def caterpillar_tree(n: int, delta: int = 3, seed: int = 0, leg_prob: float = 0.5) -> Tree:
    """Spine path with pendant leaves; each spine vertex grows up to
    ``delta - 2`` legs, each present with probability ``leg_prob``."""
    if delta < 3:
        return path_tree(n, delta)
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = []
    spine_prev = 0
    nxt = 1
    while nxt < n:
        edges.append((spine_prev, nxt))
        spine_prev = nxt
        nxt += 1
        for _ in range(delta - 2):
            if nxt < n and rng.uniform() < leg_prob:
                edges.append((spine_prev, nxt))
                nxt += 1
    return Tree.from_edges(n, edges, delta)


def make_tree(family: str, n: int, delta: int, leaf_target: float | None = None, seed: int = 0) -> Tree:
    if family == "random":
        return gen_tree(n, delta, leaf_target, seed)
    if family == "path":
        return path_tree(n, max(delta, 2))
    if family == "caterpillar":
        return caterpillar_tree(n, delta, seed)
    if family == "binary":
        return binary_tree(n, delta)
    if family == "spider":
        legs = max(2, delta)
        base = (n - 1) // legs
        edges = []
        nxt = 1
        for leg in range(legs):
            prev = 0
            for _ in range(base + (1 if leg < (n - 1) % legs else 0)):
                edges.append((prev, nxt))
                prev = nxt
                nxt += 1
        return Tree.from_edges(n, edges, max(delta, legs))
    raise TreeError(f"unknown tree family {family!r}")


# ---------------------------------------------------------------------------
# leaves and bare paths


def leaf_census(t: Tree) -> tuple[frozenset[int], frozenset[int]]:
    """Leaves ``L`` and the set ``P`` of their neighbours."""
    if t.n < 2:
        raise TreeError("leaf census needs n >= 2")
    leaves = t.leaves
    parents = frozenset(t.adjacency[v][0] for v in leaves)
    return leaves, parents


@dataclass(frozen=True)
class BarePathSet:
    k: int
    paths: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.paths)

    def check(self, t: Tree) -> None:
        seen: set[int] = set()
        for p in self.paths:
            if len(p) != self.k + 1:
                raise TreeError(f"path {p} does not have length {self.k}")
            for a, b in zip(p, p[1:]):
                if b not in t.adjacency[a]:
                    raise TreeError(f"{a}-{b} is not a tree edge")
            for v in p:
                if t.degree(v) != 2:
                    raise TreeError(f"vertex {v} on path {p} has degree {t.degree(v)}")
                if v in seen:
                    raise TreeError(f"vertex {v} shared between paths")
                seen.add(v)


def bare_path_bound(n: int, k: int, num_leaves: int) -> int:
    """Guaranteed count ``ceil(n/(k+1) - (2l - 2))``, floored at 0."""
    num, den = n - (2 * num_leaves - 2) * (k + 1), k + 1
    return max(0, -(-num // den))


def degree_two_chains(t: Tree) -> list[list[int]]:
    """Maximal paths all of whose vertices have degree 2, each ordered from
    one end; chains are listed by their smallest vertex."""
    deg2 = {v for v in range(t.n) if t.degree(v) == 2}
    chains = []
    seen: set[int] = set()
    for v in sorted(deg2):
        if v in seen:
            continue
        comp = _component(t.adjacency, v, frozenset(deg2))
        ends = sorted(u for u in comp if sum(1 for w in t.adjacency[u] if w in comp) <= 1)
        # a tree cannot contain a cycle of degree-2 vertices
        start = ends[0]
        chain = [start]
        prev = -1
        cur = start
        while True:
            nxt = [w for w in t.adjacency[cur] if w in comp and w != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
        seen |= comp
        chains.append(chain)
    return chains


def extract_bare_paths(t: Tree, k: int) -> BarePathSet:
    """Cut every degree-2 chain into disjoint length-``k`` pieces, aligned
    from the start of the chain."""
    if k < 1:
        raise ValueError("k must be at least 1")
    paths = []
    for chain in degree_two_chains(t):
        for i in range(len(chain) // (k + 1)):
            paths.append(tuple(chain[i * (k + 1) : (i + 1) * (k + 1)]))
    return BarePathSet(k, tuple(paths))


# ---------------------------------------------------------------------------
# spike transform


@dataclass(frozen=True)
class SpikeRecord:
    original_tree: Tree
    transformed_tree: Tree
    replaced: tuple[tuple[int, int, int, int], ...]

    @property
    def spikes(self) -> frozenset[int]:
        """The new leaves (third vertex of each replaced path)."""
        return frozenset(c for _, _, c, _ in self.replaced)


def spike_transform(t: Tree, paths: BarePathSet) -> SpikeRecord:
    """Replace each bare path ``a-b-c-d`` by ``ab, bc, bd``.

    ``c`` becomes a leaf hanging off ``b`` and ``d`` keeps its outside
    neighbour, so a copy of the new tree in ``G`` gives a copy of ``t`` in
    the square of ``G``: ``c`` and ``d`` share the neighbour ``b``.
    """
    if paths.paths and paths.k != 3:
        raise TreeError("spike transform needs length-3 bare paths")
    paths.check(t)
    if not paths.paths:
        return SpikeRecord(t, t, ())
    edges = set(t.edges())
    replaced = []
    for a, b, c, d in paths.paths:
        edges.discard((min(c, d), max(c, d)))
        edges.add((min(b, d), max(b, d)))
        replaced.append((a, b, c, d))
    new = Tree.from_edges(t.n, sorted(edges), max(t.delta, 3))
    return SpikeRecord(t, new, tuple(replaced))


# ---------------------------------------------------------------------------
# dividing and separating


def divide_tree(
    t: Tree, q: Iterable[int], within: Iterable[int] | None = None, root: int | None = None
) -> tuple[frozenset[int], frozenset[int], int]:
    """Split a subtree into two subtrees sharing one vertex, each holding at
    least a third of ``q``.

    Descends from ``root`` (smallest vertex by default) into the child branch
    holding more than half of ``q`` until none does, then greedily groups the
    branches at that vertex, largest first, until the first side holds a
    third. Every branch then holds at most half, so the second side keeps at
    least a third as well.
    """
    verts = frozenset(range(t.n)) if within is None else frozenset(within)
    qset = frozenset(q) & verts
    if not qset:
        raise PlanInfeasible("cannot divide a tree with respect to an empty set")
    if root is None:
        root = min(verts)
    order, parent = _bfs_order(t, root, verts)
    count = {v: (1 if v in qset else 0) for v in order}
    for v in reversed(order):
        if parent[v] >= 0:
            count[parent[v]] += count[v]
    children: dict[int, list[int]] = {v: [] for v in order}
    for v in order:
        if parent[v] >= 0:
            children[parent[v]].append(v)
    total = len(qset)
    v = root
    while True:
        heavy = [c for c in children[v] if 2 * count[c] > total]
        if not heavy:
            break
        v = min(heavy)
    # branches at v: child subtrees plus the part above v
    branches: list[tuple[int, frozenset[int]]] = []
    for c in children[v]:
        branch = frozenset(_component(t.adjacency, c, verts - {v}))
        branches.append((count[c], branch))
    if parent[v] >= 0:
        above = frozenset(_component(t.adjacency, parent[v], verts - {v}))
        branches.append((total - count[v], above))
    branches.sort(key=lambda b: (-b[0], min(b[1])))
    own = 1 if v in qset else 0
    need = total / 3 - own
    first: set[int] = {v}
    got = 0
    i = 0
    while i < len(branches) and got < need:
        got += branches[i][0]
        first |= branches[i][1]
        i += 1
    second: set[int] = {v}
    for _, b in branches[i:]:
        second |= b
    return frozenset(first), frozenset(second), v


def _bfs_order(t: Tree, root: int, verts: frozenset[int]) -> tuple[list[int], dict[int, int]]:
    parent = {root: -1}
    order = [root]
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in t.adjacency[v]:
            if u in verts and u not in parent:
                parent[u] = v
                order.append(u)
                queue.append(u)
    return order, parent


def separated_subset(t: Tree, x: Iterable[int], sep: int) -> frozenset[int]:
    """Greedy subset of ``x`` with pairwise tree distance at least ``sep``:
    take the smallest remaining vertex and discard everything in ``x`` within
    distance ``sep - 1`` of it."""
    if sep < 2 or sep % 2:
        raise ValueError("sep must be an even integer >= 2")
    remaining = set(x)
    chosen = []
    for v in sorted(remaining):
        if v not in remaining:
            continue
        chosen.append(v)
        for u in t.distances(v, limit=sep - 1):
            remaining.discard(u)
    return frozenset(chosen)


def separated_bound(size: int, delta: int, sep: int) -> float:
    return size / (3 * delta ** (sep - 1))


# ---------------------------------------------------------------------------
# stage plan


@dataclass(frozen=True)
class StagePlan:
    subtrees: tuple[frozenset[int], ...]
    cut_vertices: tuple[int, ...]
    separated_sets: tuple[frozenset[int], ...]

    @property
    def ell(self) -> int:
        return len(self.subtrees)

    def check(self, t: Tree, t_prime: Iterable[int]) -> None:
        """Raise if the stage conditions do not hold verbatim."""
        tp = frozenset(t_prime)
        if frozenset().union(*self.subtrees) != tp:
            raise PlanInfeasible("stage subtrees do not cover T'")
        if self.cut_vertices[0] not in self.subtrees[0]:
            raise PlanInfeasible("t_1 not in T_1")
        for i, sub in enumerate(self.subtrees):
            if not is_subtree(t, sub):
                raise PlanInfeasible(f"T_{i + 1} is not connected")
            if i + 1 < self.ell and sub & self.subtrees[i + 1] != {self.cut_vertices[i + 1]}:
                raise PlanInfeasible(f"T_{i + 1} and T_{i + 2} do not meet exactly at t_{i + 2}")
            qi = self.separated_sets[i]
            if not qi <= sub or self.cut_vertices[i] in qi:
                raise PlanInfeasible(f"Q_{i + 1} misplaced")
            sep = 4 * (i + 1) + 8
            for v in qi:
                dist = t.distances(v, limit=sep - 1)
                if any(u in dist for u in qi if u != v):
                    raise PlanInfeasible(f"Q_{i + 1} is not {sep}-separated")


def build_stage_plan(
    t: Tree,
    t_prime: Iterable[int],
    q: Iterable[int],
    ell: int,
    t1: int,
    size_floor: Callable[[int], float] = lambda i: 1,
) -> StagePlan:
    """Cut ``T'`` into ``ell`` consecutive subtrees and pick their separated
    sets ``Q_i`` (separation ``4i + 8``, ``t_i`` removed)."""
    tp = frozenset(t_prime)
    qset = frozenset(q) & tp
    if t1 not in tp:
        raise PlanInfeasible("t_1 must lie in T'")
    if not qset:
        raise PlanInfeasible("plan infeasible: Q is empty")
    if ell < 1:
        raise ValueError("ell must be at least 1")
    subtrees: list[frozenset[int]] = []
    cuts = [t1]
    rest = tp
    for _ in range(ell - 1):
        here = qset & rest
        if not here:
            raise PlanInfeasible("plan infeasible: no Q vertices left to divide")
        s1, s2, shared = divide_tree(t, here, within=rest)
        ti = cuts[-1]
        mine, other = (s1, s2) if ti in s1 else (s2, s1)
        subtrees.append(mine)
        cuts.append(shared)
        rest = other
    subtrees.append(rest)
    sets = []
    for i, sub in enumerate(subtrees, start=1):
        qi = separated_subset(t, qset & sub, 4 * i + 8) - {cuts[i - 1]}
        if len(qi) < size_floor(i):
            raise PlanInfeasible(f"plan infeasible: |Q_{i}|={len(qi)} below floor {size_floor(i)}")
        sets.append(qi)
    return StagePlan(tuple(subtrees), tuple(cuts), tuple(sets))
