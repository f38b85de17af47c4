"""Spanning-tree embedding into ``G`` (many leaves) and into ``G^2``."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..graphs import Graph, SpectralCertificate
from ..matchmakers import (
    MatchmakerError,
    MatchmakerFamily,
    random_matchmakers,
    select_matchmakers,
)
from ..trees import (
    PlanInfeasible,
    StagePlan,
    Tree,
    build_stage_plan,
    extract_bare_paths,
    leaf_census,
    separated_subset,
    spike_transform,
)
from .matching import hall_finish
from .state import (
    DeadEnd,
    EmbeddingError,
    EmbeddingState,
    bfs_order,
    init_state,
    place_sequence,
)
from .verify import INTO_G, INTO_SQUARE, verify_embedding


@dataclass(frozen=True)
class EmbedParams:
    """Runtime stand-ins for the asymptotic constants of the construction."""

    t_param: float = 4.0
    d_param: int | None = None
    alpha: float = 1 / 16
    leaf_floor: int = 2
    ratio_threshold: float = 2.0
    matchmaker_mode: str = "auto"
    matchmaker_retries: int = 200
    v1_fraction: float = 0.5
    q_sep: int = 12
    ell: int | None = None
    candidate_budget: int = 8
    rollback_factor: int = 50
    stage_retries: int = 3
    attempts: int = 5
    spike_fraction: float = 1 / 8
    scoring: str = "min-free"
    seed: int = 0

    def resolve_d(self, delta: int) -> int:
        return self.d_param if self.d_param is not None else max(3, 4 * delta)


@dataclass
class Embedding:
    target_tree: Tree
    host: Graph
    map: tuple[int, ...]
    mode: str
    verified: bool
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mode": self.mode, "map": list(self.map), "verified": self.verified}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def default_ell(d_param: int, m: int) -> int:
    """``floor(log_{D-1}(2m)) + 1``."""
    return int(math.floor(math.log(2 * m) / math.log(d_param - 1) + 1e-12)) + 1


def default_shrink_floor(d_param: int, m: int) -> Callable[[int], int]:
    return lambda i: max(1, math.ceil(2 * m / (d_param - 1) ** i))


def choose_root(t: Tree, leaves: frozenset[int], parents: frozenset[int]) -> int:
    """Smallest vertex that is neither a leaf nor a parent of a leaf, falling
    back to the smallest non-leaf."""
    for v in range(t.n):
        if v not in leaves and v not in parents:
            return v
    return min(v for v in range(t.n) if v not in leaves)


def matched_leaves(t: Tree, leaves: frozenset[int], parents: frozenset[int]) -> dict[int, int]:
    """For each parent its smallest leaf neighbour: a perfect matching
    ``P -> L'`` inside the tree."""
    return {p: min(u for u in t.adjacency[p] if u in leaves) for p in sorted(parents)}


# ---------------------------------------------------------------------------
# covering


def _stage_prefer(qi: frozenset[int], q_parents: frozenset[int]):
    def prefer(state: EmbeddingState, w: int, p: int) -> set[int] | None:
        if not state.reserved:
            return None
        if w in qi:
            return {x for x in state.host.adjacency[p] if x in state.reserved}
        if w in q_parents:
            res = state.reserved
            return {
                y
                for y in state.host.adjacency[p]
                if y not in res and not state.is_used(y) and any(x in res for x in state.host.adjacency[y])
            }
        return None

    return prefer


def cover_stages(
    state: EmbeddingState,
    tree: Tree,
    plan: StagePlan,
    rng: np.random.Generator | None = None,
    shrink_floor: Callable[[int], float] | None = None,
    stage_retries: int = 3,
    budget: int = 8,
    rollback_budget: int | None = None,
    scoring: str = "max-free",
) -> EmbeddingState:
    """Embed ``T_1, ..., T_ell`` in order, steering the vertices of ``Q_i``
    onto still-uncovered reserved vertices.

    After stage ``i`` the reserved set must have shrunk to
    ``shrink_floor(i)``; a stage that misses is rolled back and retried.
    After the last stage every reserved vertex must be covered, and each
    covered one must be the image of a vertex of some ``Q_j``.
    """
    if shrink_floor is None:
        shrink_floor = default_shrink_floor(state.d_param, state.m)
    covered_by: dict[int, int] = {}
    t1 = plan.cut_vertices[0]
    if t1 not in state.mapping:
        raise EmbeddingError("cover", "t_1 must be placed before covering")
    done: set[int] = {t1}
    for i, (sub, ti, qi) in enumerate(zip(plan.subtrees, plan.cut_vertices, plan.separated_sets), 1):
        items = bfs_order(tree, ti, within=sub)
        q_parents = frozenset(u for w, u in items if w in qi)
        prefer = _stage_prefer(qi, q_parents)
        floor = 0 if i == plan.ell else shrink_floor(i)
        for _ in range(stage_retries):
            mark = len(state.journal)
            before = set(state.reserved)
            try:
                place_sequence(state, items, prefer, budget, rollback_budget, rng, scoring=scoring)
            except DeadEnd:
                continue
            if len(state.reserved) <= floor:
                for x in before - state.reserved:
                    covered_by[x] = state.inverse[x]
                break
            state.rollback_to(mark)
        else:
            raise EmbeddingError(
                "cover", f"stage {i}: {len(state.reserved)} reserved vertices left, floor {floor}"
            )
        done |= sub
        if set(state.mapping) - {-1} != done:
            raise EmbeddingError("cover", f"stage {i} copy does not match T_1..T_{i}")
    qall = frozenset().union(*plan.separated_sets)
    bad = [x for x, w in covered_by.items() if w not in qall]
    if bad or state.reserved:
        raise EmbeddingError("cover", f"uncovered {sorted(state.reserved)[:5]}, foreign {bad[:5]}")
    state.audit["covered_by"] = covered_by
    return state


# ---------------------------------------------------------------------------
# full pipeline


def _build_plan(
    t: Tree, t_prime: frozenset[int], q: frozenset[int], ell: int, root: int
) -> StagePlan:
    for e in range(ell, 0, -1):
        try:
            return build_stage_plan(t, t_prime, q, e, root)
        except PlanInfeasible:
            continue
    return StagePlan((t_prime,), (root,), (frozenset(),))


def _matchmakers(
    g: Graph,
    cert: SpectralCertificate,
    params: EmbedParams,
    parents: int,
    cover_capacity: int,
    seed: int,
) -> MatchmakerFamily:
    mode = params.matchmaker_mode
    if mode in ("auto", "coloring"):
        try:
            return select_matchmakers(g, cert, params.t_param, 3, params.matchmaker_retries, seed)
        except (ValueError, MatchmakerError):
            if mode == "coloring":
                raise
    v1 = int(params.v1_fraction * parents)
    v2 = cover_capacity // 3
    v3 = min(v1, max(0, g.n - v1 - v2 - 1))
    return random_matchmakers(g, (v1, v2, v3), seed, params.t_param)


def _attempt(
    g: Graph, cert: SpectralCertificate, t: Tree, params: EmbedParams, seed: int, stats: dict
) -> tuple[int, ...]:
    rng = np.random.default_rng(seed)
    d_param = params.resolve_d(t.max_degree)
    leaves, parents = leaf_census(t)
    root = choose_root(t, leaves, parents)
    t_prime = frozenset(range(t.n)) - leaves
    q = separated_subset(t, parents, params.q_sep)
    ell = params.ell if params.ell is not None else default_ell(d_param, cert.m)
    plan = _build_plan(t, t_prime, q, ell, root)
    stats["ell"] = plan.ell
    stats["q_sizes"] = [len(s) for s in plan.separated_sets]

    stats["step"] = "matchmakers"
    fam = _matchmakers(g, cert, params, len(parents), len(plan.separated_sets[0]), seed)
    stats["matchmakers"] = fam.method
    stats["v_sizes"] = [len(s) for s in fam.sets]
    taken = fam.union
    v0 = min(v for v in range(g.n) if v not in taken)

    late_of = matched_leaves(t, leaves, parents)
    late = frozenset(late_of.values())
    stats["step"] = "init"
    state = init_state(g, fam, cert, d_param, v0, audit=None)
    # init_state maps a placeholder; rebind it to the real root
    state.undo()
    state.attach_tree(t, late)
    state.place(root, v0)

    budget = params.rollback_factor * g.n
    stats["step"] = "cover"
    try:
        cover_stages(
            state, t, plan, rng,
            stage_retries=params.stage_retries,
            budget=params.candidate_budget,
            rollback_budget=budget,
            scoring=params.scoring,
        )
        stats["step"] = "remainder"
        rest = [(w, t.adjacency[w][0]) for w in sorted(leaves - late)]
        place_sequence(state, rest, None, params.candidate_budget, budget, rng, scoring=params.scoring)
    finally:
        stats["rollbacks"] = stats.get("rollbacks", 0) + state.rollbacks

    stats["step"] = "hall"
    a = {state.mapping[p] for p in parents}
    b = [v for v in range(g.n) if not state.is_used(v)]
    res = hall_finish(g, a, b)
    if not res.perfect:
        raise EmbeddingError("hall", f"Hall violation on {len(res.witness)} parent images")
    image = dict(state.mapping)
    for p, leaf in late_of.items():
        image[leaf] = res.matching[state.mapping[p]]
    stats["step"] = "done"
    return tuple(image[v] for v in range(t.n))


def embed_spanning_tree(
    g: Graph, cert: SpectralCertificate, t: Tree, params: EmbedParams = EmbedParams()
) -> Embedding:
    """Embed a spanning tree with many leaves into ``g`` itself.

    Pipeline: separated parents ``Q``, stage plan for ``T - L``, matchmakers,
    staged covering of ``V2``, the remaining leaves except one per parent,
    and a perfect matching between parent images and the unused vertices.
    Each attempt uses a derived seed; the first failing step of every
    attempt is recorded in ``stats['failures']``.
    """
    if t.n != g.n:
        raise ValueError(f"tree has {t.n} vertices, host has {g.n}")
    d_param = params.resolve_d(t.max_degree)
    if 2 * t.max_degree > d_param:
        raise ValueError(f"Delta(T)={t.max_degree} exceeds D/2={d_param / 2}")
    if len(t.leaves) < params.leaf_floor:
        raise ValueError(f"tree has {len(t.leaves)} leaves, floor is {params.leaf_floor}")
    stats: dict = {"failures": [], "rollbacks": 0}
    if t.n <= 2:
        image = tuple(range(t.n)) if t.n == 1 else (0, g.adjacency[0][0]) if g.adjacency[0] else None
        if image is None:
            raise EmbeddingError("extend", "host has no edge")
        return _finish(g, t, image, INTO_G, stats, 1)
    for attempt in range(params.attempts):
        seed = int(np.random.SeedSequence([params.seed, attempt]).generate_state(1)[0])
        try:
            image = _attempt(g, cert, t, params, seed, stats)
        except (EmbeddingError, MatchmakerError) as exc:
            stats["failures"].append(getattr(exc, "step", stats.get("step", "unknown")))
            continue
        return _finish(g, t, image, INTO_G, stats, attempt + 1)
    raise EmbeddingError(stats["failures"][-1], f"all {params.attempts} attempts failed: {stats['failures']}")


def _finish(g: Graph, t: Tree, image: tuple[int, ...], mode: str, stats: dict, attempts: int) -> Embedding:
    check = verify_embedding(g, t, image, mode)
    if not check:
        raise EmbeddingError("verify", check.reason)
    stats["attempts"] = attempts
    return Embedding(t, g, image, mode, True, stats)


def embed_in_square(
    g: Graph, cert: SpectralCertificate, t: Tree, params: EmbedParams = EmbedParams()
) -> Embedding:
    """Embed any bounded-degree spanning tree into the square of ``g``.

    Trees with at least ``alpha n`` leaves go straight to
    :func:`embed_spanning_tree`. Otherwise length-3 bare paths ``a-b-c-d``
    are turned into spikes (``ab, bc, bd``); embedding the spiked tree in
    ``g`` places every original edge at distance at most two.
    """
    if cert.ratio < params.ratio_threshold:
        raise ValueError(f"d/lambda={cert.ratio:.3f} below threshold {params.ratio_threshold}")
    n = t.n
    if len(t.leaves) >= params.alpha * n:
        return embed_spanning_tree(g, cert, t, params)
    paths = extract_bare_paths(t, 3)
    want = max(1, math.floor(params.spike_fraction * n))
    chosen = replace(paths, paths=paths.paths[:want])
    rec = spike_transform(t, chosen)
    spiked = rec.transformed_tree
    if len(spiked.leaves) < params.alpha * n:
        raise EmbeddingError(
            "spike", f"{len(chosen)} bare paths give {len(spiked.leaves)} leaves, need {params.alpha * n:.0f}"
        )
    inner = embed_spanning_tree(g, cert, spiked, params)
    stats = dict(inner.stats)
    stats["spikes"] = len(chosen)
    return _finish(g, t, inner.map, INTO_SQUARE, stats, stats.get("attempts", 1))
