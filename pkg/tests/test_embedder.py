import itertools
import json
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import embedding_ok, eq1_extendable, has_perfect_matching
from sqembed.embedder import (
    INTO_G,
    INTO_SQUARE,
    DeadEnd,
    EmbeddingError,
    EmbeddingState,
    EmbedParams,
    check_extendable,
    cover_stages,
    embed_in_square,
    embed_spanning_tree,
    embed_subtree,
    extend_leaf,
    hall_finish,
    init_state,
    place_sequence,
    verify_embedding,
)
from sqembed.graphs import (
    Graph,
    complete_graph,
    cycle_graph,
    estimate_lambda,
    gen_paley,
    gen_random_regular,
    square,
)
from sqembed.matchmakers import MatchmakerFamily
from sqembed.embedder.state import bfs_order, extendable_exact
from sqembed.trees import (
    BarePathSet,
    StagePlan,
    Tree,
    extract_bare_paths,
    gen_tree,
    path_tree,
    spike_transform,
    star_tree,
)


def family(*sets):
    return MatchmakerFamily(tuple(frozenset(s) for s in sets), 1.0, 0.0, 0, "manual")


def bipartite_host(n_a, n_b, edges):
    """Left side ``0..n_a-1``, right side ``n_a..n_a+n_b-1``."""
    return Graph.from_edges(n_a + n_b, [(a, n_a + b) for a, b in edges], regular=False)


class TestInitState:
    def test_exact_audit_passes_on_complete(self):
        g = complete_graph(20)
        cert = estimate_lambda(g)
        state = init_state(g, family({0}, {1, 2}, {3}), cert, 3, v0=4)
        verdict = state.audit["init_extendable"]
        assert verdict.mode == "exact" and verdict.extendable
        assert state.reserved == {1, 2}
        assert state.host.adjacency[0] == ()

    def test_v0_in_matchmaker(self):
        g = complete_graph(20)
        with pytest.raises(ValueError):
            init_state(g, family({0}, {1, 2}, {3}), estimate_lambda(g), 3, v0=1)

    def test_reserved_is_v2(self):
        g = gen_paley(29)
        state = init_state(g, family({0, 1}, {5, 6, 7}, {9}), estimate_lambda(g), 4, v0=2, audit=None)
        assert state.reserved == {5, 6, 7}
        assert state.mapping == {-1: 2}


class TestExtendability:
    def test_empty_s_in_k5(self):
        state = EmbeddingState(complete_graph(5), 3, 1)
        assert check_extendable(state).extendable

    def test_star_in_k5_matches_oracle(self):
        g = complete_graph(5)
        state = EmbeddingState(g, 3, 1)
        state.place(0, 0)
        for v in range(1, 4):
            state.place(v, v, 0)
        verdict = check_extendable(state)
        s_edges = [(0, v) for v in range(1, 4)]
        assert verdict.extendable == eq1_extendable(5, g.edges(), range(4), s_edges, 3, 1)

    def test_spanning_star_in_k5(self):
        g = complete_graph(5)
        degrees = {0: 4, 1: 1, 2: 1, 3: 1, 4: 1}
        verdict = extendable_exact(g, range(5), range(5), degrees, 3, 1)
        s_edges = [(0, v) for v in range(1, 5)]
        assert verdict.extendable == eq1_extendable(5, g.edges(), range(5), s_edges, 3, 1) is False

    def test_singleton_condition(self):
        g = cycle_graph(6)
        state = EmbeddingState(g, 3, 1, reserved={1})
        verdict = check_extendable(state)
        # |Gamma(0) - V(S)| = |{5}| = 1 < D - 1 = 2
        assert not verdict.extendable

    def test_exact_infeasible(self):
        g = gen_random_regular(40, 4, 0)
        state = EmbeddingState(g, 3, 7)
        with pytest.raises(ValueError):
            check_extendable(state, "exact")

    def test_sampled_mode(self):
        g = gen_paley(101)
        state = EmbeddingState(g, 3, 3)
        verdict = check_extendable(state, "sampled", samples=200)
        assert verdict.extendable and verdict.mode == "sampled"


class TestExtendLeaf:
    def test_any_neighbour(self):
        state = EmbeddingState(complete_graph(10), 3, 1)
        state.place(0, 0)
        y = extend_leaf(state, 1, 0)
        assert y != 0 and state.mapping[1] == y

    def test_prefer(self):
        state = EmbeddingState(complete_graph(10), 3, 1)
        state.place(0, 0)
        assert extend_leaf(state, 1, 0, prefer={7}) == 7

    def test_saturated_parent(self):
        state = EmbeddingState(complete_graph(10), 3, 1)
        state.place(0, 0)
        for w in (1, 2, 3):
            extend_leaf(state, w, 0)
        with pytest.raises(ValueError):
            extend_leaf(state, 4, 0)

    def test_cycle_with_chord_needs_rollback(self):
        host = Graph.from_edges(8, [(i, (i + 1) % 8) for i in range(8)] + [(0, 4)], regular=False)
        tree = path_tree(8)
        state = EmbeddingState(host, 3, 1)
        state.attach_tree(tree)
        state.place(0, 0)
        trap = lambda st_, w, p: {4} if w == 1 else None  # noqa: E731
        place_sequence(state, [(w, w - 1) for w in range(1, 8)], prefer=trap)
        assert state.rollbacks >= 1
        image = [state.mapping[w] for w in range(8)]
        assert verify_embedding(host, tree, image, INTO_G)
        state.check_invariants()

    def test_dead_end_restores_state(self):
        host = Graph.from_edges(4, [(0, 1), (1, 2), (1, 3)], regular=False)
        state = EmbeddingState(host, 3, 1)
        state.place(0, 0)
        before = state.snapshot()
        with pytest.raises(DeadEnd):
            place_sequence(state, [(1, 0), (2, 1), (3, 2)])
        assert state.snapshot() == before


class TestEmbedSubtree:
    def test_single_vertex(self):
        state = EmbeddingState(complete_graph(5), 3, 1)
        embed_subtree(state, Tree(1, ((),), 0), 0, 3)
        assert state.mapping == {0: 3}

    def test_p5_in_k10(self):
        g = complete_graph(10)
        state = EmbeddingState(g, 3, 1)
        t = path_tree(5)
        embed_subtree(state, t, 0, 0)
        image = [state.mapping[v] for v in range(5)]
        assert embedding_ok(g.adjacency, t.edges(), 5, image, 1)

    def test_random_tree_in_paley(self):
        g = gen_paley(101)
        t = gen_tree(50, 3, seed=3)
        state = EmbeddingState(g, 6, estimate_lambda(g).m)
        embed_subtree(state, t, 0, 0, rng=np.random.default_rng(0))
        image = [state.mapping[v] for v in range(50)]
        assert embedding_ok(g.adjacency, t.edges(), 50, image, 1)
        state.check_invariants()

    def test_room_condition(self):
        g = complete_graph(10)
        state = EmbeddingState(g, 4, 2)
        with pytest.raises(ValueError):
            embed_subtree(state, path_tree(5), 0, 0, strict=True)


class TestCover:
    def test_empty_reserved_degenerates(self):
        g = complete_graph(12)
        t = path_tree(10)
        state = init_state(g, family((), (), ()), estimate_lambda(g), 4, v0=0, tree=t, root=0, audit=None)
        plan = StagePlan((frozenset(range(10)),), (0,), (frozenset({5}),))
        cover_stages(state, t, plan)
        assert set(state.mapping) == set(range(10))

    def test_single_stage_covers_reserved(self):
        g = complete_graph(30)
        t = path_tree(28)
        q1 = frozenset(range(3, 27, 3))
        assert len(q1) == 8
        state = init_state(g, family((), {28, 29}, ()), estimate_lambda(g), 4, v0=0, tree=t, root=0, audit=None)
        plan = StagePlan((frozenset(range(28)),), (0,), (q1,))
        cover_stages(state, t, plan, rng=np.random.default_rng(1))
        assert not state.reserved
        covered = state.audit["covered_by"]
        assert set(covered) == {28, 29}
        assert all(w in q1 for w in covered.values())
        state.check_invariants()

    def test_uncoverable_reports_cover(self):
        g = complete_graph(12)
        t = path_tree(6)
        state = init_state(g, family((), {10, 11}, ()), estimate_lambda(g), 4, v0=0, tree=t, root=0, audit=None)
        plan = StagePlan((frozenset(range(6)),), (0,), (frozenset(),))
        with pytest.raises(EmbeddingError) as exc:
            cover_stages(state, t, plan)
        assert exc.value.step == "cover"


class TestHall:
    def test_complete_bipartite(self):
        g = bipartite_host(5, 5, itertools.product(range(5), range(5)))
        res = hall_finish(g, range(5), range(5, 10))
        assert res.perfect
        assert sorted(res.matching.values()) == list(range(5, 10))

    def test_violation_witness(self):
        g = bipartite_host(2, 2, [(0, 0), (1, 0)])
        res = hall_finish(g, [0, 1], [2, 3])
        assert not res.perfect and res.witness == {0, 1}

    def test_unequal_sizes(self):
        with pytest.raises(ValueError):
            hall_finish(complete_graph(4), [0], [1, 2])

    @given(st.integers(1, 8), st.data())
    def test_against_subset_dp(self, k, data):
        edges = data.draw(st.sets(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1))))
        g = bipartite_host(k, k, edges)
        res = hall_finish(g, range(k), range(k, 2 * k))
        assert res.perfect == has_perfect_matching(k, k, edges)
        if res.perfect:
            assert all(g.has_edge(a, b) for a, b in res.matching.items())
            assert len(set(res.matching.values())) == k
        else:
            nbrs = {b for a in res.witness for b in g.adjacency[a]}
            assert len(nbrs) < len(res.witness)


class TestVerify:
    def test_identity(self):
        t = gen_tree(30, 3, seed=2)
        host = Graph.from_edges(30, t.edges(), regular=False)
        assert verify_embedding(host, t, list(range(30)), INTO_G)

    def test_injectivity_witness(self):
        t = path_tree(3)
        host = complete_graph(3)
        res = verify_embedding(host, t, [0, 1, 0], INTO_G)
        assert not res and "both map to" in res.reason

    def test_square_mode(self):
        t = path_tree(3)
        host = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], regular=False)
        assert not verify_embedding(host, t, [0, 2, 4], INTO_G)
        assert verify_embedding(host, t, [0, 2, 4], INTO_SQUARE)
        assert not verify_embedding(host, t, [0, 3, 4], INTO_SQUARE)

    def test_dict_map(self):
        t = path_tree(2)
        assert verify_embedding(complete_graph(2), t, {0: 1, 1: 0}, INTO_G)

    def test_partial_map(self):
        assert not verify_embedding(complete_graph(3), path_tree(3), [0, 1], INTO_G)


@pytest.fixture(scope="module")
def host_1000():
    g = gen_random_regular(1000, 50, 1)
    return g, estimate_lambda(g)


class TestPipeline:
    def test_star_in_complete(self):
        g = complete_graph(16)
        t = star_tree(16)
        emb = embed_spanning_tree(g, estimate_lambda(g), t, EmbedParams(d_param=30))
        assert emb.verified and verify_embedding(g, t, emb.map, INTO_G)
        obj = json.loads(emb.dumps())
        assert obj["mode"] == INTO_G and len(obj["map"]) == 16 and obj["verified"] is True

    def test_many_leaves(self, host_1000):
        g, cert = host_1000
        t = gen_tree(1000, 3, 0.3, seed=0)
        emb = embed_spanning_tree(g, cert, t)
        assert embedding_ok(g.adjacency, t.edges(), 1000, emb.map, 1)

    def test_leaf_floor(self):
        g = complete_graph(10)
        with pytest.raises(ValueError):
            embed_spanning_tree(g, estimate_lambda(g), path_tree(10), EmbedParams(leaf_floor=3))

    def test_degree_bound(self):
        g = complete_graph(10)
        with pytest.raises(ValueError):
            embed_spanning_tree(g, estimate_lambda(g), star_tree(10), EmbedParams(d_param=8))

    def test_hamilton_path_in_square(self, host_1000):
        g, cert = host_1000
        t = path_tree(1000)
        emb = embed_in_square(g, cert, t)
        assert emb.mode == INTO_SQUARE
        assert emb.stats["spikes"] >= 1000 // 8
        sq = square(g)
        assert all(sq.has_edge(emb.map[a], emb.map[b]) for a, b in t.edges())

    def test_many_leaves_delegates(self, host_1000):
        g, cert = host_1000
        t = gen_tree(1000, 3, 0.3, seed=4)
        a = embed_in_square(g, cert, t)
        b = embed_spanning_tree(g, cert, t)
        assert a.map == b.map and a.mode == INTO_G

    def test_spike_leaf_count(self):
        t = path_tree(800)
        paths = extract_bare_paths(t, 3)
        chosen = BarePathSet(3, paths.paths[: 800 // 8])
        assert len(chosen) == 800 // 8
        spiked = spike_transform(t, chosen).transformed_tree
        assert len(spiked.leaves) >= 800 // 8 >= EmbedParams().alpha * 800

    def test_ratio_threshold(self, host_1000):
        g, cert = host_1000
        with pytest.raises(ValueError):
            embed_in_square(g, cert, path_tree(1000), EmbedParams(ratio_threshold=100.0))


class TestRollbackSoundness:
    @given(st.lists(st.integers(0, 2), min_size=1, max_size=40), st.integers(0, 1000))
    def test_replay(self, ops, seed):
        g = gen_paley(29)
        t = gen_tree(29, 3, seed=seed)
        state = EmbeddingState(g, 6, 2, reserved={27, 28})
        state.attach_tree(t)
        state.place(0, 0)
        order = bfs_order(t, 0)
        rng = random.Random(seed)
        seen = {1: state.snapshot()}
        i = 0
        for op in ops:
            if op and i < len(order):
                w, p = order[i]
                cands = state.candidates(w, state.mapping[p], budget=29)
                if not cands:
                    continue
                state.place(w, rng.choice(cands), state.mapping[p])
                i += 1
                seen[len(state.journal)] = state.snapshot()
            elif len(state.journal) > 1:
                state.undo()
                i -= 1
                assert state.snapshot() == seen[len(state.journal)]
            state.check_invariants()
            assert int(state.free_all.sum()) == sum(
                sum(1 for u in g.adjacency[v] if not state.is_used(u)) for v in range(g.n)
            )
