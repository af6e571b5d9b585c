"""Static undirected topologies, generators, and centralized reference oracles.

Everything here is centralized bookkeeping: the simulator and the protocols
never peek at a Graph beyond each node's own neighbor list.  Node identifiers
are distinct integers drawn from [1, n^3] so that identifier comparisons carry
information (tie-breaking, leader election) without collisions.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

Edge = Tuple[int, int]

FAMILIES = (
    "path",
    "cycle",
    "star",
    "complete",
    "grid",
    "balanced_binary_tree",
    "erdos_renyi",
)

ID_SCHEMES = ("sequential", "random_permutation")

# Rejection-sampling budget for connected erdos_renyi draws.
ER_RETRY_BUDGET = 100


class GraphError(ValueError):
    """Raised for malformed topologies or generator specs."""


def canonical_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Immutable, connected, simple undirected graph.

    adjacency maps node id -> sorted tuple of neighbor ids.  Symmetry, the
    absence of self loops, connectivity, and the id range are all checked at
    construction time so downstream code can assume a sound topology.
    """

    adjacency: Dict[int, Tuple[int, ...]]
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self) -> None:
        adj = self.adjacency
        if not adj:
            raise GraphError("graph must have at least one node")
        n = len(adj)
        id_cap = n * n * n
        edge_count = 0
        for v, nbrs in adj.items():
            if not isinstance(v, int) or v < 1 or v > id_cap:
                raise GraphError(f"node id {v!r} outside [1, n^3] for n={n}")
            if list(nbrs) != sorted(set(nbrs)):
                raise GraphError(f"neighbor list of {v} not sorted/deduplicated")
            for u in nbrs:
                if u == v:
                    raise GraphError(f"self loop at {v}")
                if u not in adj:
                    raise GraphError(f"edge ({v},{u}) points outside the node set")
                if v not in adj[u]:
                    raise GraphError(f"asymmetric edge ({v},{u})")
            edge_count += len(nbrs)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", edge_count // 2)
        if n > 1 and not self._connected():
            raise GraphError("graph is not connected")

    def _connected(self) -> bool:
        start = next(iter(self.adjacency))
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.n

    @property
    def nodes(self) -> Tuple[int, ...]:
        return tuple(sorted(self.adjacency))

    def neighbors(self, v: int) -> Tuple[int, ...]:
        return self.adjacency[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency and u in self.adjacency[v]

    def edges(self) -> List[Edge]:
        out = []
        for v in sorted(self.adjacency):
            for u in self.adjacency[v]:
                if v < u:
                    out.append((v, u))
        return out

    @staticmethod
    def from_edges(nodes: Iterable[int], edges: Iterable[Edge]) -> "Graph":
        adj: Dict[int, set] = {int(v): set() for v in nodes}
        for u, v in edges:
            if u not in adj or v not in adj:
                raise GraphError(f"edge ({u},{v}) references unknown node")
            if u == v:
                raise GraphError(f"self loop at {u}")
            adj[u].add(v)
            adj[v].add(u)
        return Graph({v: tuple(sorted(s)) for v, s in adj.items()})


@dataclass(frozen=True)
class DistanceMap:
    """Hop distances from a root, as computed by oracle_bfs."""

    root: int
    dist: Dict[int, int]

    def layers(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {}
        for v, d in self.dist.items():
            out.setdefault(d, []).append(v)
        for layer in out.values():
            layer.sort()
        return out

    def eccentricity(self) -> int:
        return max(self.dist.values())


@dataclass(frozen=True)
class GraphGenSpec:
    """Deterministic recipe for one generated topology."""

    family: str
    n: int
    id_scheme: str = "sequential"
    seed: int = 0
    p: Optional[float] = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise GraphError(f"unknown family {self.family!r}")
        if self.id_scheme not in ID_SCHEMES:
            raise GraphError(f"unknown id scheme {self.id_scheme!r}")
        if self.n < 1:
            raise GraphError("n must be >= 1")
        if self.family == "erdos_renyi":
            if self.p is None or not (0.0 < self.p <= 1.0):
                raise GraphError("erdos_renyi requires p in (0, 1]")
        elif self.p is not None:
            raise GraphError(f"family {self.family} takes no p parameter")


def _structural_edges(spec: GraphGenSpec, rng: random.Random) -> List[Tuple[int, int]]:
    """Edges over structural positions 0..n-1, before id assignment."""
    n = spec.n
    fam = spec.family
    if fam == "path":
        return [(i, i + 1) for i in range(n - 1)]
    if fam == "cycle":
        if n < 3:
            raise GraphError("cycle needs n >= 3")
        return [(i, (i + 1) % n) for i in range(n)]
    if fam == "star":
        return [(0, i) for i in range(1, n)]
    if fam == "complete":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if fam == "grid":
        rows = _near_square_rows(n)
        cols = n // rows
        edges = []
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if c + 1 < cols:
                    edges.append((i, i + 1))
                if r + 1 < rows:
                    edges.append((i, i + cols))
        return edges
    if fam == "balanced_binary_tree":
        # Complete binary tree in heap layout: children of i are 2i+1, 2i+2.
        return [(i, c) for i in range(n) for c in (2 * i + 1, 2 * i + 2) if c < n]
    if fam == "erdos_renyi":
        for _ in range(ER_RETRY_BUDGET):
            edges = [
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if rng.random() < spec.p
            ]
            if _positions_connected(n, edges):
                return edges
        raise GraphError(
            f"no connected G({n},{spec.p}) draw within {ER_RETRY_BUDGET} attempts"
        )
    raise GraphError(f"unknown family {fam!r}")


def _near_square_rows(n: int) -> int:
    """Largest divisor of n that is <= sqrt(n); degenerates to 1 for primes."""
    best = 1
    d = 1
    while d * d <= n:
        if n % d == 0:
            best = d
        d += 1
    return best


def _positions_connected(n: int, edges: List[Tuple[int, int]]) -> bool:
    if n == 1:
        return True
    adj: List[List[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                count += 1
                stack.append(u)
    return count == n


def generate_graph(spec: GraphGenSpec) -> Graph:
    """Build the graph described by spec.  Same spec, same graph, always."""
    rng = random.Random(spec.seed)
    edges = _structural_edges(spec, rng)
    n = spec.n
    if spec.id_scheme == "sequential":
        ids = list(range(1, n + 1))
    else:
        # Distinct ids from the polynomial space [1, n^3]; the draw consumes
        # the rng after edge sampling so both aspects derive from one seed.
        ids = rng.sample(range(1, n * n * n + 1), n)
    adj: Dict[int, set] = {ids[i]: set() for i in range(n)}
    for a, b in edges:
        adj[ids[a]].add(ids[b])
        adj[ids[b]].add(ids[a])
    return Graph({v: tuple(sorted(s)) for v, s in adj.items()})


def oracle_bfs(g: Graph, root: int) -> DistanceMap:
    """Centralized breadth-first distances; the ground truth every
    distributed BFS in this package is judged against."""
    if root not in g.adjacency:
        raise GraphError(f"root {root} not in graph")
    dist = {root: 0}
    frontier = [root]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for u in g.adjacency[v]:
                if u not in dist:
                    dist[u] = d
                    nxt.append(u)
        frontier = nxt
    return DistanceMap(root=root, dist=dist)


def oracle_ball(g: Graph, center: int, radius: int) -> frozenset:
    """All nodes within hop distance radius of center."""
    seen = {center}
    frontier = [center]
    for _ in range(radius):
        nxt = []
        for v in frontier:
            for u in g.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        frontier = nxt
    return frozenset(seen)


def diameter(g: Graph) -> int:
    """Exact hop diameter: max over roots of the BFS eccentricity.

    Pure-python sweeps for small graphs; scipy's C BFS for anything bigger
    (identical values, cross-checked in the test suite).
    """
    if g.n == 1:
        return 0
    if g.n <= 512:
        return max(oracle_bfs(g, v).eccentricity() for v in g.adjacency)
    return _diameter_scipy(g)


def _diameter_scipy(g: Graph) -> int:
    import numpy as np
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import shortest_path

    nodes = g.nodes
    index = {v: i for i, v in enumerate(nodes)}
    rows, cols = [], []
    for v in nodes:
        for u in g.adjacency[v]:
            rows.append(index[v])
            cols.append(index[u])
    data = np.ones(len(rows), dtype=np.int8)
    mat = csr_matrix((data, (rows, cols)), shape=(g.n, g.n))
    dist = shortest_path(mat, method="D", unweighted=True, directed=False)
    return int(dist.max())


# ---------------------------------------------------------------------------
# Edge-list text interchange: "n m" header, one "u v" line per edge.
# ---------------------------------------------------------------------------

def write_edge_list(g: Graph, path: str) -> None:
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{u} {v}" for u, v in g.edges())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_edge_list(path: str) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise GraphError(f"{path}: missing 'n m' header")
    n, m = int(tokens[0]), int(tokens[1])
    body = tokens[2:]
    if len(body) != 2 * m:
        raise GraphError(f"{path}: expected {m} edges, found {len(body) // 2}")
    edges = [(int(body[i]), int(body[i + 1])) for i in range(0, len(body), 2)]
    nodes = set()
    for u, v in edges:
        nodes.add(u)
        nodes.add(v)
    if m == 0 and n == 1:
        nodes = {1} if not nodes else nodes
    if len(nodes) != n:
        raise GraphError(f"{path}: header says n={n} but body names {len(nodes)} nodes")
    g = Graph.from_edges(nodes, edges)  # validates symmetry + connectivity
    if g.m != m:
        raise GraphError(f"{path}: header says m={m} but body has {g.m} distinct edges")
    return g


def er_connectivity_safe_p(n: int) -> float:
    """A p comfortably above the connectivity threshold, used by the matched
    random-graph families in the scaling studies: p = min(1, 3 ln n / n)."""
    if n <= 2:
        return 1.0
    return min(1.0, 3.0 * math.log(n) / n)
