"""Partial embeddings with a rollback journal, and the extendability test."""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ..graphs import Graph, SpectralCertificate
from ..matchmakers import MatchmakerFamily
from ..trees import Tree


class EmbeddingError(RuntimeError):
    """An embedding step failed; ``step`` names it for diagnostics."""

    def __init__(self, step: str, message: str):
        super().__init__(f"{step}: {message}")
        self.step = step


class DeadEnd(EmbeddingError):
    def __init__(self, message: str):
        super().__init__("extend", message)


@dataclass
class Placement:
    tree_vertex: int
    host_vertex: int
    parent_image: int | None
    was_reserved: bool


class EmbeddingState:
    """Partial injective map of tree vertices into ``host = G - V1``.

    ``reserved`` vertices form the isolated subgraph ``I(X)``: they are off
    limits except for placements that explicitly prefer them. When a tree is
    attached, per-vertex pending-children counts drive a guard that never lets
    a placement take the last free neighbour an already placed vertex still
    needs. Vertices in ``late`` (leaves matched at the very end) may land on
    any unused vertex of ``full``, including the removed ones.
    """

    def __init__(
        self,
        host: Graph,
        d_param: int,
        m: int,
        reserved: Iterable[int] = (),
        excluded: Iterable[int] = (),
        full: Graph | None = None,
    ):
        if d_param < 3:
            raise ValueError("D must be at least 3")
        self.host = host
        self.full = full if full is not None else host
        self.d_param = d_param
        self.m = m
        self.excluded = frozenset(excluded)
        self.reserved: set[int] = set(reserved)
        if self.reserved & self.excluded:
            raise ValueError("reserved vertices must lie in the host")
        self.mapping: dict[int, int] = {}
        self.inverse: dict[int, int] = {}
        self.image_degrees: dict[int, int] = {}
        self.journal: list[Placement] = []
        self.rollbacks = 0
        self.audit: dict = {}
        self.free_avail = np.array(
            [
                0 if v in self.excluded else sum(1 for u in host.adjacency[v] if u not in self.reserved)
                for v in range(host.n)
            ],
            dtype=np.int64,
        )
        self.free_all = np.array([len(a) for a in self.full.adjacency], dtype=np.int64)
        self.tree: Tree | None = None
        self.late: frozenset[int] = frozenset()
        self.pend_all: list[int] = []
        self.pend_late: list[int] = []

    # -- tree bookkeeping -------------------------------------------------

    def attach_tree(self, tree: Tree, late: Iterable[int] = ()) -> None:
        self.tree = tree
        self.late = frozenset(late)
        self.pend_all = [len(a) for a in tree.adjacency]
        self.pend_late = [sum(1 for u in a if u in self.late) for a in tree.adjacency]
        for w in self.mapping:
            if not 0 <= w < tree.n:
                continue
            for u in tree.adjacency[w]:
                self.pend_all[u] -= 1
                if w in self.late:
                    self.pend_late[u] -= 1

    # -- basic queries ----------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.mapping)

    def is_used(self, v: int) -> bool:
        return v in self.inverse

    def is_available(self, v: int) -> bool:
        return v not in self.inverse and v not in self.reserved and v not in self.excluded

    def subgraph_vertices(self) -> set[int]:
        """``V(S)``: images plus the reserved isolated vertices."""
        return set(self.inverse) | self.reserved

    def embedded_edges(self) -> list[tuple[int, int]]:
        return [(p.parent_image, p.host_vertex) for p in self.journal if p.parent_image is not None]

    # -- mutation ---------------------------------------------------------

    def place(self, tree_vertex: int, host_vertex: int, parent_image: int | None = None) -> None:
        y = host_vertex
        if tree_vertex in self.mapping:
            raise ValueError(f"tree vertex {tree_vertex} already placed")
        if y in self.inverse:
            raise ValueError(f"host vertex {y} already used")
        if parent_image is not None:
            if not self.full.has_edge(parent_image, y):
                raise ValueError(f"{parent_image}-{y} is not a host edge")
            if self.image_degrees[parent_image] >= self.d_param:
                raise ValueError(f"image {parent_image} already has degree D")
        was_reserved = y in self.reserved
        counted = self.is_available(y)
        if was_reserved:
            self.reserved.discard(y)
        self.mapping[tree_vertex] = y
        self.inverse[y] = tree_vertex
        self.image_degrees[y] = 0
        if parent_image is not None:
            self.image_degrees[parent_image] += 1
            self.image_degrees[y] = 1
        if counted:
            for u in self.host.adjacency[y]:
                self.free_avail[u] -= 1
        for u in self.full.adjacency[y]:
            self.free_all[u] -= 1
        if self.tree is not None and 0 <= tree_vertex < self.tree.n:
            for u in self.tree.adjacency[tree_vertex]:
                self.pend_all[u] -= 1
                if tree_vertex in self.late:
                    self.pend_late[u] -= 1
        self.journal.append(Placement(tree_vertex, y, parent_image, was_reserved))

    def undo(self) -> Placement:
        p = self.journal.pop()
        y = p.host_vertex
        del self.mapping[p.tree_vertex]
        del self.inverse[y]
        del self.image_degrees[y]
        if p.parent_image is not None:
            self.image_degrees[p.parent_image] -= 1
        if p.was_reserved:
            self.reserved.add(y)
        if self.is_available(y):
            for u in self.host.adjacency[y]:
                self.free_avail[u] += 1
        for u in self.full.adjacency[y]:
            self.free_all[u] += 1
        if self.tree is not None and 0 <= p.tree_vertex < self.tree.n:
            for u in self.tree.adjacency[p.tree_vertex]:
                self.pend_all[u] += 1
                if p.tree_vertex in self.late:
                    self.pend_late[u] += 1
        return p

    def rollback_to(self, length: int) -> int:
        undone = 0
        while len(self.journal) > length:
            self.undo()
            undone += 1
        return undone

    def release(self, vertices: Iterable[int]) -> None:
        """Drop vertices from the reserved set, making them ordinary."""
        for x in list(vertices):
            if x in self.reserved:
                self.reserved.discard(x)
                if self.is_available(x):
                    for u in self.host.adjacency[x]:
                        self.free_avail[u] += 1

    def snapshot(self) -> tuple:
        return (dict(self.mapping), dict(self.image_degrees), frozenset(self.reserved))

    # -- candidate selection ---------------------------------------------

    def guard_ok(self, tree_vertex: int, y: int, parent_image: int | None) -> bool:
        """Would placing ``tree_vertex`` at ``y`` leave every placed vertex
        (and ``y`` itself) enough free neighbours for its unplaced children?"""
        if self.tree is None:
            return True
        w = tree_vertex
        is_late = w in self.late
        # the parent is already placed, so pending counts exclude it
        own_all = self.pend_all[w]
        own_late = self.pend_late[w]
        if self.free_all[y] < own_all or self.free_avail[y] < own_all - own_late:
            return False
        counted = self.is_available(y)
        parent_tv = self.inverse.get(parent_image) if parent_image is not None else None
        for z in self.full.adjacency[y]:
            u = self.inverse.get(z)
            if u is None:
                continue
            need_all = self.pend_all[u]
            need_late = self.pend_late[u]
            if u == parent_tv:
                need_all -= 1
                if is_late:
                    need_late -= 1
            if need_all <= 0:
                continue
            if self.free_all[z] - 1 < need_all:
                return False
            lost = 1 if counted and z not in self.excluded and self.host.has_edge(z, y) else 0
            if self.free_avail[z] - lost < need_all - need_late:
                return False
        return True

    def candidates(
        self,
        tree_vertex: int,
        parent_image: int,
        prefer: Iterable[int] | None = None,
        budget: int = 8,
        rng: np.random.Generator | None = None,
        allow_excluded: bool = False,
        scoring: str = "max-free",
    ) -> list[int]:
        """Up to ``budget`` feasible images for ``tree_vertex`` next to
        ``parent_image``, best first.

        Preferred vertices come first (reserved ones are only admissible when
        preferred). Within a class, more free neighbours is better; ties are
        broken by a seeded jitter, or by smallest id without ``rng``.
        ``scoring="min-free"`` reverses the order (Warnsdorff's rule), which
        strands fewer vertices when embedding long paths.
        """
        pref = set(prefer) if prefer is not None else set()
        graph = self.full if allow_excluded else self.host
        scored = []
        for y in graph.adjacency[parent_image]:
            if y in self.inverse:
                continue
            if y in self.reserved and y not in pref:
                continue
            if y in self.excluded and not allow_excluded:
                continue
            jitter = rng.random() if rng is not None else 0.0
            free = int(self.free_avail[y])
            key = free + jitter if scoring == "min-free" else -free - jitter
            scored.append((0 if y in pref else 1, key, y))
        scored.sort()
        out = []
        for _, _, y in scored:
            if self.guard_ok(tree_vertex, y, parent_image):
                out.append(y)
                if len(out) >= budget:
                    break
        return out

    def check_invariants(self) -> None:
        """Assert injectivity, adjacency of placed edges, degree caps and that
        reserved vertices are unused."""
        assert len(self.mapping) == len(self.inverse)
        assert all(self.inverse[y] == t for t, y in self.mapping.items())
        assert not (self.reserved & set(self.inverse))
        for p in self.journal:
            if p.parent_image is not None:
                assert self.full.has_edge(p.parent_image, p.host_vertex)
        assert all(0 <= deg <= self.d_param for deg in self.image_degrees.values())


# ---------------------------------------------------------------------------
# extendability


@dataclass
class ExtendabilityVerdict:
    extendable: bool
    mode: str
    checked: int
    witness: tuple[int, ...] | None = None
    sufficient: bool | None = None


EXACT_SUBSET_LIMIT = 3_000_000


def extendable_exact(
    host: Graph,
    vertices: Iterable[int],
    s_vertices: Iterable[int],
    s_degree: dict[int, int],
    d_param: int,
    m: int,
) -> ExtendabilityVerdict:
    """Evaluate the ``(D, m)``-extendability inequality for every ``U`` with
    ``1 <= |U| <= 2m``:

        |Gamma(U) - V(S)| >= (D - 1)|U| - sum_{u in U & V(S)} (d_S(u) - 1)

    ``vertices`` is ``V(host)``; ``s_degree`` gives ``d_S`` on ``V(S)``.
    """
    verts = sorted(vertices)
    svs = frozenset(s_vertices)
    if any(s_degree.get(v, 0) > d_param for v in svs):
        v = max(svs, key=lambda u: s_degree.get(u, 0))
        return ExtendabilityVerdict(False, "exact", 0, (v,))
    top = min(2 * m, len(verts))
    total = sum(math.comb(len(verts), r) for r in range(1, top + 1))
    if total > EXACT_SUBSET_LIMIT:
        raise ValueError(f"exact extendability needs {total} subsets; too many")
    outside = [host.neighbor_sets[v] - svs for v in range(host.n)]
    credit = {v: s_degree.get(v, 0) - 1 for v in svs}
    checked = 0
    for r in range(1, top + 1):
        for u in itertools.combinations(verts, r):
            checked += 1
            reach = set().union(*(outside[v] for v in u))
            rhs = (d_param - 1) * r - sum(credit[v] for v in u if v in credit)
            if len(reach) < rhs:
                return ExtendabilityVerdict(False, "exact", checked, u)
    return ExtendabilityVerdict(True, "exact", checked)


def check_extendable(
    state: EmbeddingState, mode: str = "exact", samples: int = 500, seed: int = 0
) -> ExtendabilityVerdict:
    """Extendability of ``S`` (the embedded edges plus ``I(reserved)``) in
    the host.

    ``exact`` is brute force and only allowed when ``2m <= 12`` or the host
    has at most 20 vertices. ``sampled`` checks all singletons and random
    sets, evaluating both the defining inequality and the stronger
    sufficient one ``|N(U) - V(S)| >= D |U|``.
    """
    vertices = [v for v in range(state.host.n) if v not in state.excluded]
    svs = state.subgraph_vertices()
    deg = {v: state.image_degrees.get(v, 0) for v in svs}
    if mode == "exact":
        if not (2 * state.m <= 12 or len(vertices) <= 20):
            raise ValueError("exact extendability is limited to 2m <= 12 or |host| <= 20")
        return extendable_exact(state.host, vertices, svs, deg, state.d_param, state.m)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if any(v > state.d_param for v in deg.values()):
        return ExtendabilityVerdict(False, "sampled", 0, None, False)
    rng = np.random.default_rng(seed)
    sets = state.host.neighbor_sets
    top = min(2 * state.m, len(vertices))
    cands = itertools.chain(
        ((v,) for v in vertices),
        (
            tuple(rng.choice(vertices, size=int(rng.integers(1, top + 1)), replace=False).tolist())
            for _ in range(samples)
        ),
    )
    checked = 0
    sufficient = True
    for u in cands:
        checked += 1
        uset = set(u)
        reach = set().union(*(sets[v] for v in u)) - svs
        rhs = (state.d_param - 1) * len(u) - sum(deg[v] - 1 for v in u if v in deg)
        if len(reach) < rhs:
            return ExtendabilityVerdict(False, "sampled", checked, u, False)
        if len(reach - uset) < state.d_param * len(u):
            sufficient = False
    return ExtendabilityVerdict(True, "sampled", checked, None, sufficient)


# ---------------------------------------------------------------------------
# construction


def init_state(
    g: Graph,
    fam: MatchmakerFamily,
    cert: SpectralCertificate,
    d_param: int,
    v0: int,
    tree: Tree | None = None,
    root: int | None = None,
    audit: str | None = "auto",
) -> EmbeddingState:
    """State for ``G' = G - V1`` with ``I(V2)`` reserved and ``root -> v0``.

    ``fam.sets`` is ``(V1, V2, V3, ...)``; a family with fewer sets leaves
    the missing ones empty. The audit records an extendability verdict for
    ``I(V2 + v0)``: exact when feasible, sampled otherwise.
    """
    sets = list(fam.sets) + [frozenset()] * max(0, 3 - len(fam.sets))
    v1, v2 = sets[0], sets[1]
    if any(v0 in s for s in sets):
        raise ValueError(f"v0={v0} lies in a matchmaker set")
    host = g.induced_removal(v1)
    state = EmbeddingState(host, d_param, cert.m, reserved=v2, excluded=v1, full=g)
    if tree is not None:
        state.attach_tree(tree)
    state.place(root if root is not None else -1, v0)
    if audit is not None:
        n_host = g.n - len(v1)
        exact = (2 * state.m <= 12 or n_host <= 20) and sum(
            math.comb(n_host, r) for r in range(1, min(2 * state.m, n_host) + 1)
        ) <= EXACT_SUBSET_LIMIT
        verdict = check_extendable(state, "exact" if exact else "sampled", samples=200)
        state.audit["init_extendable"] = verdict
    return state


def bfs_order(tree: Tree, root: int, within: Iterable[int] | None = None) -> list[tuple[int, int]]:
    """``(vertex, parent)`` pairs of a BFS of the subtree, root excluded."""
    allowed = None if within is None else frozenset(within)
    seen = {root}
    out = []
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in tree.adjacency[v]:
            if u not in seen and (allowed is None or u in allowed):
                seen.add(u)
                out.append((u, v))
                queue.append(u)
    return out


PreferFn = Callable[[EmbeddingState, int, int], "set[int] | None"]


def place_sequence(
    state: EmbeddingState,
    items: Sequence[tuple[int, int]],
    prefer: PreferFn | None = None,
    budget: int = 8,
    rollback_budget: int | None = None,
    rng: np.random.Generator | None = None,
    allow_excluded: Callable[[int], bool] | None = None,
    scoring: str = "max-free",
) -> None:
    """Place ``(tree_vertex, tree_parent)`` items in order, each next to its
    parent's image, backtracking chronologically through the ranked
    candidates of earlier items when one runs out of options."""
    if rollback_budget is None:
        rollback_budget = 50 * max(1, state.full.n)
    base = len(state.journal)
    stack: list[list[int]] = []
    i = 0
    while i < len(items):
        w, u = items[i]
        p = state.mapping[u]
        if len(stack) == i:
            pref = prefer(state, w, p) if prefer is not None else None
            ex = allow_excluded(w) if allow_excluded is not None else False
            stack.append(state.candidates(w, p, pref, budget, rng, ex, scoring))
        if stack[i]:
            y = stack[i].pop(0)
            state.place(w, y, p)
            i += 1
            continue
        stack.pop()
        if i == 0 or state.rollbacks >= rollback_budget:
            state.rollback_to(base)
            raise DeadEnd(f"no image for tree vertex {w} next to {p} after {state.rollbacks} rollbacks")
        state.undo()
        state.rollbacks += 1
        i -= 1


def extend_leaf(
    state: EmbeddingState,
    tree_vertex: int,
    parent_image: int,
    prefer: Iterable[int] | None = None,
    rng: np.random.Generator | None = None,
) -> int:
    """Add one tree vertex as a new leaf of ``parent_image``."""
    if state.image_degrees[parent_image] > state.d_param - 1:
        raise ValueError(f"image {parent_image} is saturated at degree D")
    cands = state.candidates(tree_vertex, parent_image, prefer, budget=1, rng=rng)
    if not cands:
        raise DeadEnd(f"no free neighbour of {parent_image} for tree vertex {tree_vertex}")
    state.place(tree_vertex, cands[0], parent_image)
    return cands[0]


def room_condition(host_size: int, s_size: int, d_param: int, m: int) -> bool:
    return host_size >= s_size + (2 * d_param + 3) * m + 1


def embed_subtree(
    state: EmbeddingState,
    t: Tree,
    root: int,
    at: int,
    rng: np.random.Generator | None = None,
    strict: bool = False,
    within: Iterable[int] | None = None,
) -> EmbeddingState:
    """Embed ``t`` (or its subtree on ``within``) with ``root`` at ``at`` by
    repeated leaf extension in BFS order.

    ``strict`` enforces ``Delta(t) <= D/2`` and the room condition
    ``|H| + |T| <= |G| - (2D + 3) m``.
    """
    items = bfs_order(t, root, within)
    if strict:
        if 2 * t.max_degree > state.d_param:
            raise ValueError("tree degree exceeds D/2")
        host_size = state.host.n - len(state.excluded)
        if state.size + len(items) + 1 > host_size - (2 * state.d_param + 3) * state.m:
            raise ValueError("room condition fails")
    if root in state.mapping:
        if state.mapping[root] != at:
            raise ValueError(f"root already placed at {state.mapping[root]}")
    else:
        if state.is_used(at):
            raise ValueError(f"host vertex {at} already used")
        state.place(root, at)
    if state.tree is None:
        state.attach_tree(t)
    place_sequence(state, items, rng=rng)
    return state
