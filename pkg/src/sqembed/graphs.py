"""Host graphs: generators, spectral certificates and pseudorandomness audits."""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

DENSE_THRESHOLD = 2048
REGULAR_RETRIES = 100


class GraphError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``.

    ``adjacency[v]`` is the sorted tuple of neighbours of ``v``.
    ``degree`` is set when the graph is known to be regular.
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]
    degree: int | None = None

    def __post_init__(self) -> None:
        if len(self.adjacency) != self.n:
            raise GraphError(f"adjacency has {len(self.adjacency)} rows, expected {self.n}")
        for v, nbrs in enumerate(self.adjacency):
            if any(a >= b for a, b in zip(nbrs, nbrs[1:])):
                raise GraphError(f"neighbours of {v} not strictly sorted (multi-edge?)")
            if v in nbrs:
                raise GraphError(f"self-loop at {v}")
            for u in nbrs:
                if not 0 <= u < self.n:
                    raise GraphError(f"vertex {u} out of range")
        sets = self.neighbor_sets
        for v, nbrs in enumerate(self.adjacency):
            for u in nbrs:
                if v not in sets[u]:
                    raise GraphError(f"asymmetric adjacency {v}->{u}")
        if self.degree is not None and any(len(a) != self.degree for a in self.adjacency):
            raise GraphError(f"graph is not {self.degree}-regular")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], regular: bool = True) -> "Graph":
        """Build a graph from an edge iterable; duplicates are an error."""
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if v in nbrs[u]:
                raise GraphError(f"multi-edge {u}-{v}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        return cls(n, adjacency, _common_degree(adjacency) if regular else None)

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(a) for a in self.adjacency)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.neighbor_sets[u]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def degrees(self) -> np.ndarray:
        return np.fromiter((len(a) for a in self.adjacency), dtype=np.int64, count=self.n)

    def sparse_adjacency(self) -> sp.csr_matrix:
        rows = np.repeat(np.arange(self.n), self.degrees())
        cols = np.fromiter(itertools.chain.from_iterable(self.adjacency), dtype=np.int64)
        data = np.ones(len(cols))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for v, nbrs in enumerate(self.adjacency):
            a[v, list(nbrs)] = 1.0
        return a

    def induced_removal(self, removed: Iterable[int]) -> "Graph":
        """``G - removed`` with vertex ids preserved; removed vertices become isolated."""
        gone = set(removed)
        adjacency = tuple(
            () if v in gone else tuple(u for u in nbrs if u not in gone)
            for v, nbrs in enumerate(self.adjacency)
        )
        return Graph(self.n, adjacency)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256(f"{self.n}".encode())
        for u, v in self.edges():
            h.update(f";{u},{v}".encode())
        return h.hexdigest()[:16]


def _common_degree(adjacency: Sequence[Sequence[int]]) -> int | None:
    degs = {len(a) for a in adjacency}
    return degs.pop() if len(degs) == 1 else None


# ---------------------------------------------------------------------------
# generators


def gen_random_regular(n: int, d: int, seed: int) -> Graph:
    """Random simple ``d``-regular graph from the pairing model.

    Stubs are paired at random; pairs forming loops or repeated edges are
    returned to the pool and re-paired. A whole attempt is discarded when the
    leftover stubs admit no valid pair, up to ``REGULAR_RETRIES`` attempts.
    """
    if (n * d) % 2 or d >= n or d < 1 or n < 1:
        raise GraphError(f"no simple {d}-regular graph on {n} vertices")
    rng = np.random.default_rng(seed)
    for _ in range(REGULAR_RETRIES):
        edges = _try_pairing(n, d, rng)
        if edges is not None:
            return Graph.from_edges(n, edges)
    raise GraphError(f"pairing model failed {REGULAR_RETRIES} times for n={n}, d={d}")


def _try_pairing(n: int, d: int, rng: np.random.Generator) -> set[tuple[int, int]] | None:
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(n), d)
    while stubs.size:
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        pairs.sort(axis=1)
        leftover: list[int] = []
        for u, v in pairs.tolist():
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                leftover.extend((u, v))
        if not leftover:
            break
        pool = sorted(set(leftover))
        if not any(
            a != b and (a, b) not in edges for a, b in itertools.combinations(pool, 2)
        ):
            return None
        stubs = np.array(leftover)
    return edges


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    return all(q % p for p in range(3, math.isqrt(q) + 1, 2))


def gen_paley(q: int) -> Graph:
    """Paley graph: ``u ~ v`` iff ``u - v`` is a nonzero square mod ``q``."""
    if not is_prime(q) or q % 4 != 1:
        raise GraphError(f"Paley graph needs a prime q = 1 mod 4, got {q}")
    residues = {x * x % q for x in range(1, q)}
    adjacency = tuple(tuple(sorted((u + r) % q for r in residues)) for u in range(q))
    return Graph(q, adjacency, (q - 1) // 2)


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple(tuple(u for u in range(n) if u != v) for v in range(n)), n - 1)


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], regular=False)


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph.from_edges(10, outer + spokes + inner)


# ---------------------------------------------------------------------------
# spectral certificate


@dataclass(frozen=True)
class SpectralCertificate:
    n: int
    d: int
    lam: float
    lambda_error: float

    @property
    def ratio(self) -> float:
        return math.inf if self.lam == 0 else self.d / self.lam

    @property
    def m(self) -> int:
        """Joinedness parameter ``ceil(lambda * n / d)``, at least 1."""
        return max(1, math.ceil(self.lam * self.n / self.d - 1e-12))

    @property
    def lower_bound(self) -> float:
        """Second-eigenvalue floor ``sqrt(d (n - d) / (n - 1))``."""
        if self.n <= 1:
            return 0.0
        return math.sqrt(self.d * (self.n - self.d) / (self.n - 1))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "lambda": self.lam,
            "lambda_error": self.lambda_error,
            "ratio": self.ratio,
            "m": self.m,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralCertificate":
        return cls(int(obj["n"]), int(obj["d"]), float(obj["lambda"]), float(obj["lambda_error"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def estimate_lambda(
    g: Graph,
    tol: float = 1e-8,
    dense_threshold: int = DENSE_THRESHOLD,
    max_iter: int = 20000,
    seed: int = 0,
) -> SpectralCertificate:
    """Largest nontrivial ``|eigenvalue|`` of a regular graph.

    The all-ones direction (eigenvalue ``d``) is deflated by working with
    ``A - (d/n) J``. Small graphs use a dense symmetric solve; larger ones run
    shifted power iteration for both ends of the spectrum and report the
    eigen-residual as ``lambda_error``.
    """
    d = g.degree
    if d is None:
        raise GraphError("estimate_lambda needs a regular graph")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = g.n
    if n <= dense_threshold:
        a = g.dense_adjacency() - d / n
        w = np.linalg.eigvalsh(a)
        lam = float(max(abs(w[0]), abs(w[-1])))
        err = float(np.finfo(float).eps * max(1, d) * n)
        return SpectralCertificate(n, d, lam, err)

    a = g.sparse_adjacency()
    top, res_top = _deflated_power(a, d, +1, tol, max_iter, seed)
    bottom, res_bottom = _deflated_power(a, d, -1, tol, max_iter, seed + 1)
    if abs(top) >= abs(bottom):
        return SpectralCertificate(n, d, abs(top), res_top)
    return SpectralCertificate(n, d, abs(bottom), res_bottom)


def _deflated_power(
    a: sp.csr_matrix, d: int, sign: int, tol: float, max_iter: int, seed: int
) -> tuple[float, float]:
    """Extreme eigenvalue of ``sign * A`` restricted to the complement of ones.

    Iterates ``sign * A + d I`` (positive semidefinite on that subspace) so
    the algebraically largest eigenvalue dominates.
    """
    n = a.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x -= x.mean()
    x /= np.linalg.norm(x)
    theta = 0.0
    for _ in range(max_iter):
        y = sign * (a @ x)
        y -= y.mean()
        theta = float(x @ y)
        res = float(np.linalg.norm(y - theta * x))
        if res <= tol:
            return sign * theta, res
        z = y + d * x
        x = z / np.linalg.norm(z)
    raise EigenSolverError(f"power iteration did not reach residual {tol} in {max_iter} steps")


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditReport:
    samples_checked: int
    max_violation: float
    violating_pair: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    @property
    def ok(self) -> bool:
        return self.violating_pair is None


def _neighbor_array(g: Graph) -> np.ndarray:
    if g.degree is None:
        raise GraphError("audit expects a regular graph")
    if g.degree == 0:
        return np.zeros((g.n, 0), dtype=np.int64)
    return np.array(g.adjacency, dtype=np.int64)


def edge_count(g: Graph, a: Iterable[int], b: Iterable[int]) -> int:
    """``e(A, B)``: ordered pairs ``(x, y)`` with ``x in A``, ``y in B`` adjacent."""
    bset = set(b)
    return sum(1 for x in a for y in g.adjacency[x] if y in bset)


def mixing_sizes(n: int) -> list[int]:
    return sorted({1, math.ceil(math.sqrt(n)), math.ceil(n / 10), math.ceil(n / 2), n})


def audit_mixing(g: Graph, cert: SpectralCertificate, samples: int = 10_000, seed: int = 0) -> AuditReport:
    """Check ``|e(A,B) - (d/n)|A||B|| < (lam + err) sqrt(|A||B|)`` on many pairs.

    All pairs of nonempty subsets are checked when ``n <= 12``; otherwise
    ``samples`` random pairs are drawn over the size schedule, half of them
    disjoint and half overlapping.
    """
    n, d = g.n, cert.d
    bound = cert.lam + cert.lambda_error
    if n <= 12:
        return _audit_exhaustive(g, d, bound)

    nbr = _neighbor_array(g)
    rng = np.random.default_rng(seed)
    sizes = mixing_sizes(n)
    worst = -math.inf
    witness = None
    for s in range(samples):
        sa = int(sizes[rng.integers(len(sizes))])
        sb = int(sizes[rng.integers(len(sizes))])
        if s % 5 == 0:
            sb = sa
            a = b = rng.choice(n, size=sa, replace=False)
        elif s % 2 == 0 and sa + sb <= n:
            perm = rng.permutation(n)
            a, b = perm[:sa], perm[sa : sa + sb]
        else:
            a = rng.choice(n, size=sa, replace=False)
            b = rng.choice(n, size=sb, replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[b] = True
        e = int(mask[nbr[a]].sum())
        viol = abs(e - d / n * sa * sb) - bound * math.sqrt(sa * sb)
        if viol > worst:
            worst = viol
            if viol > 0:
                witness = (tuple(sorted(a.tolist())), tuple(sorted(b.tolist())))
    return AuditReport(samples, worst, witness)


def _audit_exhaustive(g: Graph, d: int, bound: float) -> AuditReport:
    n = g.n
    masks = np.arange(1, 1 << n)
    ind = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    e = ind @ g.dense_adjacency() @ ind.T
    size = ind.sum(axis=1)
    prod = size[:, None] * size[None, :]
    viol = np.abs(e - d / n * prod) - bound * np.sqrt(prod)
    i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = float(viol[i, j])
    witness = None
    if worst > 0:
        witness = (
            tuple(int(v) for v in np.flatnonzero(ind[i])),
            tuple(int(v) for v in np.flatnonzero(ind[j])),
        )
    return AuditReport(int(viol.size), worst, witness)


def check_joined(g: Graph, m: int, trials: int = 10_000, seed: int = 0, exhaustive_limit: int = 200_000) -> AuditReport:
    """Look for disjoint ``m``-sets ``A``, ``B`` with no edge between them.

    ``max_violation`` is 1 when such a pair was found and 0 otherwise.
    """
    n = g.n
    if not 1 <= m <= n // 2:
        raise ValueError(f"m must lie in [1, n/2], got {m}")
    pairs = math.comb(n, m) * math.comb(n - m, m)
    if pairs <= exhaustive_limit:
        checked = 0
        for a in itertools.combinations(range(n), m):
            reach = set().union(*(g.neighbor_sets[v] for v in a))
            rest = [v for v in range(n) if v not in a and v not in reach]
            checked += 1
            if len(rest) >= m:
                return AuditReport(checked, 1.0, (a, tuple(rest[:m])))
        return AuditReport(checked, 0.0, None)

    rng = np.random.default_rng(seed)
    for s in range(trials):
        perm = rng.permutation(n)
        a, b = perm[:m], perm[m : 2 * m]
        if edge_count(g, a.tolist(), b.tolist()) == 0:
            return AuditReport(s + 1, 1.0, (tuple(sorted(a.tolist())), tuple(sorted(b.tolist()))))
    return AuditReport(trials, 0.0, None)


def square(g: Graph) -> Graph:
    """Add an edge between every pair of vertices at distance two."""
    sets = g.neighbor_sets
    adjacency = []
    for v in range(g.n):
        reach = set(sets[v])
        for u in g.adjacency[v]:
            reach |= sets[u]
        reach.discard(v)
        adjacency.append(tuple(sorted(reach)))
    adjacency_t = tuple(adjacency)
    return Graph(g.n, adjacency_t, _common_degree(adjacency_t) if g.n else None)


def bfs_distances(g: Graph, source: int, limit: int | None = None) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        if limit is not None and dist[v] >= limit:
            continue
        for u in g.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist
