"""Acceptance criteria 1-11, one PASS/FAIL line each in the terminal summary.

Criteria 1 and 4 aggregate evidence gathered by the other criteria in this
module, so they run last.
"""
import collections
import itertools
import math
import random
import time

import numpy as np
import pytest

from oracles import ball, embedding_ok, eq1_extendable, has_perfect_matching, labeled_trees, relabel, unlabeled_trees
from sqembed.embedder import INTO_G, INTO_SQUARE, EmbedParams, embed_spanning_tree, hall_finish, verify_embedding
from sqembed.embedder.state import extendable_exact
from sqembed.graphs import (
    Graph,
    audit_mixing,
    complete_graph,
    cycle_graph,
    estimate_lambda,
    gen_paley,
    gen_random_regular,
    petersen_graph,
)
from sqembed.harness import ExperimentConfig, build_host, build_tree, run_experiments, summarize
from sqembed.matchmakers import MatchmakerError, select_matchmakers, verify_matchmakers
from sqembed.trees import (
    Tree,
    bare_path_bound,
    divide_tree,
    extract_bare_paths,
    gen_tree,
    is_subtree,
    make_tree,
    separated_subset,
    spike_transform,
)

pytestmark = pytest.mark.slow

# evidence shared with criteria 1 and 4
EMBEDDINGS: list[tuple[Graph, Tree, tuple[int, ...], str]] = []
CERTIFICATES: list[tuple[str, int, int, float]] = []


def certify(name, g):
    cert = estimate_lambda(g)
    CERTIFICATES.append((name, cert.n, cert.d, cert.lam))
    return cert


def report(acceptance, num, ok, detail):
    line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    acceptance[num] = line
    print(line)
    assert ok, line


def record_successes(records):
    for r in records:
        if r.outcome == "success":
            g = build_host(r.host, r.n, r.d, r.seed)
            t = build_tree(r.tree_family, r.n, r.delta, r.leaf_target, r.seed)
            EMBEDDINGS.append((g, t, r.map, r.mode))
            CERTIFICATES.append((f"{r.host}({r.n},{r.d}) seed {r.seed}", r.n, r.d, r.lam))


def histogram(records):
    return dict(collections.Counter(r.failing_step for r in records if r.outcome != "success"))


# ---------------------------------------------------------------------------


def test_criterion_02_spectral_exactness(acceptance):
    cases = [
        ("Petersen", petersen_graph(), 2.0),
        ("K4", complete_graph(4), 1.0),
        ("Paley(13)", gen_paley(13), (1 + math.sqrt(13)) / 2),
        ("C6", cycle_graph(6), 2.0),
    ]
    errors, slowest = [], 0.0
    for name, g, want in cases:
        start = time.perf_counter()
        cert = certify(name, g)
        slowest = max(slowest, time.perf_counter() - start)
        errors.append((name, abs(cert.lam - want)))
    worst = max(e for _, e in errors)
    report(acceptance, 2, worst <= 1e-9 and slowest < 1.0, f"max |lambda error| {worst:.1e}, slowest {slowest:.3f} s")


def _regular_graphs_upto_6():
    for n in range(2, 7):
        pairs = list(itertools.combinations(range(n), 2))
        for mask in range(1, 1 << len(pairs)):
            edges = [p for i, p in enumerate(pairs) if mask >> i & 1]
            deg = [0] * n
            for a, b in edges:
                deg[a] += 1
                deg[b] += 1
            if len(set(deg)) == 1:
                yield f"labeled n={n} #{mask}", Graph.from_edges(n, edges)


def _complement(g):
    return Graph.from_edges(g.n, [(a, b) for a, b in itertools.combinations(range(g.n), 2) if not g.has_edge(a, b)])


def _regular_graphs_7_to_12():
    for n in range(7, 13):
        seeds = range(1) if n == 12 else range(2)
        for d in range(1, n):
            if n * d % 2:
                continue
            for s in seeds:
                if d == n - 1:
                    yield f"K{n}", complete_graph(n)
                    break
                if d <= n // 2:
                    yield f"rr({n},{d}) seed {s}", gen_random_regular(n, d, s)
                else:
                    yield f"co-rr({n},{d}) seed {s}", _complement(gen_random_regular(n, n - 1 - d, s))
    yield "Petersen", petersen_graph()
    cube = [(v, v ^ 1 << i) for v in range(8) for i in range(3) if v < v ^ 1 << i]
    yield "Q3", Graph.from_edges(8, cube)


def test_criterion_03_mixing_audit(acceptance):
    start = time.perf_counter()
    sampled = [("Paley(101)", gen_paley(101))] + [(f"rr(1000,50) seed {s}", gen_random_regular(1000, 50, s)) for s in range(5)]
    worst_sampled = -math.inf
    for name, g in sampled:
        rep = audit_mixing(g, certify(name, g), samples=10_000, seed=1)
        assert rep.samples_checked == 10_000
        worst_sampled = max(worst_sampled, rep.max_violation)
    small = list(_regular_graphs_upto_6()) + list(_regular_graphs_7_to_12())
    bad = []
    for name, g in small:
        rep = audit_mixing(g, certify(name, g))
        assert rep.samples_checked == (2**g.n - 1) ** 2
        if rep.max_violation > 0:
            bad.append(name)
    elapsed = time.perf_counter() - start
    ok = worst_sampled <= 0 and not bad and elapsed < 30
    report(
        acceptance,
        3,
        ok,
        f"sampled max_violation {worst_sampled:.3f}; exhaustive on {len(small)} regular graphs n<=12, "
        f"{len(bad)} violating; {elapsed:.1f} s",
    )


def test_criterion_05_tree_bounds(acceptance):
    # bare paths
    short = 0
    for n, delta in itertools.product((50, 500), (3, 5)):
        for seed in range(100):
            t = gen_tree(n, delta, seed=seed)
            paths = extract_bare_paths(t, 3)
            paths.check(t)
            short += len(paths) < bare_path_bound(n, 3, len(t.leaves))
    # divide_tree on every tree with n <= 9 (several labelings) and every labeled tree with n <= 6
    rng = random.Random(0)
    instances = []
    for n, shapes in unlabeled_trees(9).items():
        if n < 2:
            continue
        for edges in shapes:
            instances.append((n, edges))
            instances.extend((n, relabel(n, edges, rng)) for _ in range(3))
    for n in range(2, 7):
        instances.extend((n, edges) for edges in labeled_trees(n))
    divide_bad = checked = 0
    for n, edges in instances:
        t = Tree.from_edges(n, edges, delta=n)
        for mask in range(1, 1 << n):
            q = {v for v in range(n) if mask >> v & 1}
            s1, s2, shared = divide_tree(t, q)
            checked += 1
            good = (
                s1 | s2 == frozenset(range(n))
                and s1 & s2 == {shared}
                and is_subtree(t, s1)
                and is_subtree(t, s2)
                and 3 * len(s1 & q) >= len(q)
                and 3 * len(s2 & q) >= len(q)
            )
            divide_bad += not good
    # separated subsets
    sep_bad = 0
    for seed in range(100):
        t = gen_tree(500, 3 + seed % 3, seed=seed)
        x = random.Random(seed).sample(range(500), 200)
        sep = 2 * (1 + seed % 6)
        q = separated_subset(t, x, sep)
        sep_bad += not q <= set(x)
        for v in q:
            near = ball(t.adjacency, v, sep - 1)
            sep_bad += len(near & q) - 1
    ok = short == 0 and divide_bad == 0 and sep_bad == 0
    report(
        acceptance,
        5,
        ok,
        f"bare-path shortfalls {short}/400; divide_tree failures {divide_bad}/{checked}; separation violations {sep_bad}",
    )


def test_criterion_06_spike_correctness(acceptance):
    families = ("path", "caterpillar", "random")
    violations = failures = quads = 0
    hosts = {}
    for i in range(100):
        host_seed = i // 10
        if host_seed not in hosts:
            g = gen_random_regular(300, 40, 500 + host_seed)
            hosts[host_seed] = (g, certify(f"rr(300,40) seed {500 + host_seed}", g))
        g, cert = hosts[host_seed]
        t = make_tree(families[i % 3], 300, 3, seed=i)
        rec = spike_transform(t, extract_bare_paths(t, 3))
        try:
            emb = embed_spanning_tree(g, cert, rec.transformed_tree, EmbedParams(seed=i))
        except Exception:  # noqa: BLE001
            failures += 1
            continue
        image = emb.map
        EMBEDDINGS.append((g, rec.transformed_tree, image, INTO_G))
        EMBEDDINGS.append((g, t, image, INTO_SQUARE))
        for a, b, c, d in rec.replaced:
            quads += 1
            structural = g.has_edge(image[b], image[c]) and g.has_edge(image[b], image[d])
            in_square = all(image[y] in ball(g.adjacency, image[x], 2) for x, y in ((a, b), (b, c), (c, d)))
            violations += not (structural and in_square)
    ok = failures == 0 and violations == 0
    report(acceptance, 6, ok, f"{100 - failures}/100 spiked trees embedded; {violations} violations over {quads} quadruples")


def test_criterion_07_matchmakers(acceptance):
    start = time.perf_counter()
    outcomes = []
    for seed in range(10):
        g = gen_random_regular(2000, 64, seed)
        cert = certify(f"rr(2000,64) seed {seed}", g)
        try:
            fam = select_matchmakers(g, cert, t_param=4.0, ell=3, max_retries=200, seed=seed)
        except (ValueError, MatchmakerError) as exc:
            outcomes.append((False, f"seed {seed}: d/lambda={cert.ratio:.2f}: {exc}"))
            continue
        outcomes.append((verify_matchmakers(g, fam, cert).ok, f"seed {seed}: ok"))
    elapsed = time.perf_counter() - start
    passed = sum(ok for ok, _ in outcomes)
    first_bad = next((msg for ok, msg in outcomes if not ok), "")
    report(acceptance, 7, passed == 10 and elapsed < 60, f"{passed}/10 seeds verified, {elapsed:.1f} s. {first_bad}")


def test_criterion_08_matching_oracle(acceptance):
    rng = random.Random(8)
    discrepancies = bad_witness = bad_matching = 0
    for _ in range(1000):
        k = rng.randint(1, 8)
        p = rng.random()
        cross = [(a, b) for a in range(k) for b in range(k) if rng.random() < p]
        inside = [(a, b) for a, b in itertools.combinations(range(k), 2) if rng.random() < 0.3]
        g = Graph.from_edges(2 * k, [(a, k + b) for a, b in cross] + inside, regular=False)
        res = hall_finish(g, range(k), range(k, 2 * k))
        discrepancies += res.perfect != has_perfect_matching(k, k, cross)
        if res.perfect:
            m = res.matching
            bad_matching += sorted(m) != list(range(k)) or len(set(m.values())) != k or not all(
                g.has_edge(a, b) and b >= k for a, b in m.items()
            )
        else:
            u = res.witness
            nbrs = {b for a in u for b in g.adjacency[a] if b >= k}
            bad_witness += not (u and u <= set(range(k)) and len(nbrs) < len(u))
    ok = discrepancies == bad_witness == bad_matching == 0
    report(
        acceptance,
        8,
        ok,
        f"1000 instances: {discrepancies} disagreements, {bad_witness} bad witnesses, {bad_matching} bad matchings",
    )


def _hosts_upto_8():
    for n in range(1, 5):
        pairs = list(itertools.combinations(range(n), 2))
        for mask in range(1 << len(pairs)):
            yield Graph.from_edges(n, [p for i, p in enumerate(pairs) if mask >> i & 1], regular=False)
    named = [cycle_graph(5), complete_graph(5), cycle_graph(6), cycle_graph(8), complete_graph(6)]
    named.append(Graph.from_edges(6, [(a, b) for a in range(3) for b in range(3, 6)]))
    named.append(Graph.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)]))
    named.append(Graph.from_edges(8, [(v, v ^ 1 << i) for v in range(8) for i in range(3) if v < v ^ 1 << i]))
    named.append(Graph.from_edges(8, [(i, (i + 1) % 8) for i in range(8)] + [(i, i + 4) for i in range(4)]))
    yield from named
    rng = random.Random(9)
    for _ in range(40):
        n = rng.randint(5, 8)
        p = rng.choice((0.3, 0.5, 0.7))
        yield Graph.from_edges(n, [e for e in itertools.combinations(range(n), 2) if rng.random() < p], regular=False)


def test_criterion_09_extendability(acceptance):
    rng = random.Random(10)
    checked = discrepancies = 0
    for g in _hosts_upto_8():
        edges = g.edges()
        subsets = [s for r in range(0, min(4, len(edges)) + 1) for s in itertools.combinations(edges, r)]
        if len(edges) > 16:
            subsets = rng.sample(subsets, 300)
        for s_edges in subsets:
            s_vertices = {v for e in s_edges for v in e}
            variants = [s_vertices]
            if len(s_vertices) < g.n:
                variants.append(s_vertices | {rng.choice([v for v in range(g.n) if v not in s_vertices])})
            for sv in variants:
                if not sv:
                    continue
                deg = {v: 0 for v in sv}
                for a, b in s_edges:
                    deg[a] += 1
                    deg[b] += 1
                for d_param, m in itertools.product((3, 4), (1, 2)):
                    got = extendable_exact(g, range(g.n), sv, deg, d_param, m).extendable
                    want = eq1_extendable(g.n, edges, sv, s_edges, d_param, m)
                    checked += 1
                    discrepancies += got != want
    report(acceptance, 9, discrepancies == 0, f"{checked} (host, S, D, m) cases, {discrepancies} discrepancies")


def test_criterion_10_square_embedding(acceptance, tmp_path):
    cfg = ExperimentConfig(
        n=1000, d=50, tree_family=("path", "random", "caterpillar"), trials=20, seed=10, mode=INTO_SQUARE,
        output=str(tmp_path),
    )
    records = run_experiments(cfg)
    record_successes(records)
    summary = summarize(records)
    ratio = float(np.mean([r.ratio for r in records]))
    per_family = summary["groups"][0]["by_family"]
    slowest = max(r.millis for r in records) / 1000
    rates = {fam: f"{v['successes']}/{v['trials']}" for fam, v in per_family.items()}
    ok = all(v["successes"] >= 18 for v in per_family.values()) and slowest < 60
    report(
        acceptance,
        10,
        ok,
        f"mean d/lambda {ratio:.2f}; successes {rates}; slowest {slowest:.1f} s; failing steps {histogram(records)}",
    )


def test_criterion_11_many_leaves(acceptance, tmp_path):
    cfg = ExperimentConfig(
        n=1000, d=50, tree_family=("random",), leaf_target=0.35, trials=20, seed=11, mode=INTO_G,
        output=str(tmp_path),
    )
    records = run_experiments(cfg)
    record_successes(records)
    assert all(r.leaves >= 300 for r in records)
    wins = sum(r.outcome == "success" for r in records)
    slowest = max(r.millis for r in records) / 1000
    report(
        acceptance,
        11,
        wins >= 18 and slowest < 60,
        f"{wins}/20 verified, min leaves {min(r.leaves for r in records)}, slowest {slowest:.1f} s; "
        f"failing steps {histogram(records)}",
    )


def test_criterion_01_oracle_soundness(acceptance):
    if not EMBEDDINGS:
        records = run_experiments(ExperimentConfig(n=300, d=40, tree_family=("random", "path"), trials=3))
        record_successes(records)
    bad = 0
    for g, t, image, mode in EMBEDDINGS:
        reach = 1 if mode == INTO_G else 2
        bad += not (verify_embedding(g, t, image, mode) and embedding_ok(g.adjacency, t.edges(), t.n, image, reach))
    report(acceptance, 1, bad == 0 and len(EMBEDDINGS) > 0, f"{len(EMBEDDINGS)} reported successes re-verified, {bad} rejected")


def test_criterion_04_second_eigenvalue_bound(acceptance):
    if not CERTIFICATES:
        for s in range(3):
            certify(f"rr(200,20) seed {s}", gen_random_regular(200, 20, s))
    bad = [name for name, n, d, lam in CERTIFICATES if n > 1 and lam < math.sqrt(d * (n - d) / (n - 1)) - 1e-6]
    report(acceptance, 4, not bad, f"{len(CERTIFICATES)} certificates checked, {len(bad)} below the floor {bad[:3]}")
