"""Matchmaker sets: small disjoint vertex sets every vertex sees a lot of."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graphs import Graph, SpectralCertificate


class MatchmakerError(RuntimeError):
    pass


class HypothesisViolation(ValueError):
    pass


@dataclass(frozen=True)
class MatchmakerFamily:
    sets: tuple[frozenset[int], ...]
    t_param: float
    guaranteed_min_degree: float
    k: int
    method: str = "coloring"

    def to_json(self) -> dict:
        return {
            "t": self.t_param,
            "k": self.k,
            "sets": [sorted(s) for s in self.sets],
            "guaranteed_min_degree": self.guaranteed_min_degree,
            "method": self.method,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MatchmakerFamily":
        return cls(
            tuple(frozenset(s) for s in obj["sets"]),
            float(obj["t"]),
            float(obj.get("guaranteed_min_degree", 0.0)),
            int(obj["k"]),
            obj.get("method", "coloring"),
        )

    @property
    def union(self) -> frozenset[int]:
        return frozenset().union(*self.sets)


def size_cap(cert: SpectralCertificate, t_param: float) -> float:
    return 4 * t_param * cert.lam * cert.n / cert.d


def _class_degrees(g: Graph, colors: np.ndarray, k: int) -> np.ndarray:
    """``out[v, c]`` = number of neighbours of ``v`` with colour ``c``."""
    out = np.zeros((g.n, k), dtype=np.int64)
    for v, nbrs in enumerate(g.adjacency):
        if nbrs:
            out[v] = np.bincount(colors[list(nbrs)], minlength=k)
    return out


def select_matchmakers(
    g: Graph,
    cert: SpectralCertificate,
    t_param: float = 4.0,
    ell: int = 3,
    max_retries: int = 200,
    seed: int = 0,
) -> MatchmakerFamily:
    """Colour vertices uniformly with ``k = floor(d / (t lam))`` colours until
    every vertex has at least ``d / 2k`` neighbours of every colour, then
    return the ``ell`` smallest colour classes."""
    d = cert.d
    k = math.floor(d / (t_param * cert.lam)) if cert.lam > 0 else g.n
    if k < 2 * ell:
        raise ValueError(f"need k = floor(d/(t*lam)) = {k} >= 2*ell = {2 * ell}")
    threshold = d / (2 * k)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        colors = rng.integers(k, size=g.n)
        if _class_degrees(g, colors, k).min() < threshold:
            continue
        classes = [frozenset(np.flatnonzero(colors == c).tolist()) for c in range(k)]
        classes.sort(key=lambda s: (len(s), min(s, default=-1)))
        fam = MatchmakerFamily(tuple(classes[:ell]), t_param, threshold, k)
        cap = size_cap(cert, t_param)
        assert all(len(s) <= cap for s in fam.sets), "class larger than 4 t lam n / d"
        assert threshold >= t_param * cert.lam / 4 - 1e-9
        return fam
    raise MatchmakerError(
        f"no valid {k}-colouring in {max_retries} attempts (d/lam={cert.ratio:.2f}, t={t_param})"
    )


def random_matchmakers(
    g: Graph,
    sizes: Sequence[int],
    seed: int = 0,
    t_param: float = 0.0,
    avoid: Iterable[int] = (),
) -> MatchmakerFamily:
    """Disjoint uniformly random sets of the given sizes.

    Fallback for small ``d / lam`` where no colouring meets the degree
    guarantee; ``guaranteed_min_degree`` is the minimum actually observed.
    """
    banned = set(avoid)
    pool = np.array([v for v in range(g.n) if v not in banned])
    if sum(sizes) > len(pool):
        raise MatchmakerError("matchmaker sizes exceed the vertex count")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(pool)
    sets = []
    at = 0
    for s in sizes:
        sets.append(frozenset(int(v) for v in perm[at : at + s]))
        at += s
    worst = min((min_degree_into(g, s)[0] for s in sets), default=0)
    return MatchmakerFamily(tuple(sets), t_param, float(worst), 0, "random")


def min_degree_into(g: Graph, target: Iterable[int]) -> tuple[int, int]:
    """Smallest ``|N(v) & target|`` over all ``v`` and a vertex attaining it."""
    tset = set(target)
    best, arg = math.inf, -1
    for v, nbrs in enumerate(g.adjacency):
        c = sum(1 for u in nbrs if u in tset)
        if c < best:
            best, arg = c, v
    return int(best), arg


@dataclass
class MatchmakerReport:
    overlaps: list[tuple[int, int, int]] = field(default_factory=list)
    oversized: list[tuple[int, int]] = field(default_factory=list)
    starved: list[tuple[int, int, int]] = field(default_factory=list)
    worst_vertex: int = -1
    worst_set: int = -1
    margin: float = math.inf

    @property
    def ok(self) -> bool:
        return not (self.overlaps or self.oversized or self.starved)


def verify_matchmakers(g: Graph, fam: MatchmakerFamily, cert: SpectralCertificate) -> MatchmakerReport:
    """Exhaustive check of disjointness, the size cap ``4 t lam n / d`` and
    the per-vertex degree floor into every set.

    ``overlaps`` holds ``(i, j, vertex)``, ``oversized`` ``(i, size)`` and
    ``starved`` ``(vertex, i, degree)``.
    """
    rep = MatchmakerReport()
    for (i, a), (j, b) in itertools.combinations(enumerate(fam.sets), 2):
        for v in sorted(a & b):
            rep.overlaps.append((i, j, v))
    cap = size_cap(cert, fam.t_param)
    for i, s in enumerate(fam.sets):
        if len(s) > cap:
            rep.oversized.append((i, len(s)))
    floor = max(fam.guaranteed_min_degree, fam.t_param * cert.lam / 4)
    for i, s in enumerate(fam.sets):
        for v, nbrs in enumerate(g.adjacency):
            c = sum(1 for u in nbrs if u in s)
            if c - floor < rep.margin:
                rep.margin, rep.worst_vertex, rep.worst_set = c - floor, v, i
            if c < floor - 1e-9:
                rep.starved.append((v, i, c))
    return rep


@dataclass
class ExpansionReport:
    samples_checked: int
    violations: list[tuple[tuple[int, ...], int]]
    worst_ratio: float

    @property
    def ok(self) -> bool:
        return not self.violations


def check_expansion(
    g: Graph,
    x: Iterable[int],
    d_param: float,
    cert: SpectralCertificate,
    trials: int = 2000,
    seed: int = 0,
) -> ExpansionReport:
    """Audit ``|N(S) & X| >= D |S|`` for sets ``S`` of size at most
    ``lam n / d``, given every vertex has ``2 D lam`` neighbours in ``X``."""
    xset = frozenset(x)
    need = 2 * d_param * cert.lam
    low, v = min_degree_into(g, xset)
    if low < need - 1e-9:
        raise HypothesisViolation(f"vertex {v} has {low} neighbours in X, needs {need:.3f}")
    smax = max(1, math.floor(cert.lam * g.n / cert.d + 1e-9))
    sets = g.neighbor_sets

    def count(s: Sequence[int]) -> int:
        ss = set(s)
        reach: set[int] = set()
        for u in s:
            reach |= sets[u]
        return len((reach - ss) & xset)

    if g.n <= 12:
        cands: Iterable[Sequence[int]] = (
            c for r in range(1, min(smax, g.n) + 1) for c in itertools.combinations(range(g.n), r)
        )
    else:
        rng = np.random.default_rng(seed)
        singles = [(v,) for v in range(g.n)]
        randoms = (
            tuple(rng.choice(g.n, size=int(rng.integers(1, min(smax, g.n) + 1)), replace=False).tolist())
            for _ in range(trials)
        )
        cands = itertools.chain(singles, randoms)
    checked = 0
    violations = []
    worst = math.inf
    for s in cands:
        checked += 1
        c = count(s)
        worst = min(worst, c / len(s))
        if c < d_param * len(s):
            violations.append((tuple(s), c))
    return ExpansionReport(checked, violations, worst)
