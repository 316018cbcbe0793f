"""Undirected connected communication graphs."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

EDGE_LIST_HEADER = "# distcg-edgelist v1"


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on agents ``0..n_agents-1``.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``.
    """

    n_agents: int
    edges: frozenset

    def __post_init__(self):
        if self.n_agents < 1:
            raise InvalidParameterError("n_agents must be positive")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParameterError(f"self-loop at {i}")
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise InvalidParameterError(f"edge ({i}, {j}) out of range")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def from_edges(cls, n_agents, edges):
        return cls(n_agents, frozenset(map(tuple, edges)))

    @classmethod
    def complete(cls, n_agents):
        return cls(n_agents, frozenset((i, j) for i in range(n_agents)
                                       for j in range(i + 1, n_agents)))

    @classmethod
    def path(cls, n_agents):
        return cls(n_agents, frozenset((i, i + 1) for i in range(n_agents - 1)))

    @cached_property
    def neighbors(self) -> tuple:
        nbrs = [[] for _ in range(self.n_agents)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(v) for v in self.neighbors], dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_agents, self.n_agents), dtype=np.int64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def is_connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n_agents

    def sorted_edges(self):
        return sorted(self.edges)


def connectivity_ratio(g: Graph) -> float:
    if g.n_agents < 2:
        return 1.0
    return 2.0 * g.n_edges / (g.n_agents * (g.n_agents - 1))


def laplacian(g: Graph) -> np.ndarray:
    """Integer graph Laplacian ``diag(deg) - A``."""
    return np.diag(g.degrees) - g.adjacency()


def target_edge_count(n_agents, kappa_target):
    """Nearest achievable edge count for a connectivity ratio, floored at a tree."""
    total = n_agents * (n_agents - 1) // 2
    count = int(np.floor(kappa_target * total + 0.5))
    return min(max(count, n_agents - 1), total)


def generate_random_connected(n_agents: int, kappa_target: float, seed: int) -> Graph:
    """Random connected graph whose edge count best matches ``kappa_target``.

    A uniform spanning tree is drawn by a random walk (Aldous-Broder), then
    uniformly chosen non-edges are added until the target count is met.
    """
    if n_agents < 1:
        raise InvalidParameterError("n_agents must be positive")
    if n_agents == 1:
        return Graph(1, frozenset())
    kappa_min = 2.0 / n_agents
    if not (0 < kappa_target <= 1) or kappa_target < kappa_min - 1e-12:
        raise InvalidParameterError(
            f"kappa_target={kappa_target} below spanning-tree floor {kappa_min:.6g}")
    rng = np.random.default_rng(seed)
    n_target = target_edge_count(n_agents, kappa_target)

    visited = np.zeros(n_agents, dtype=bool)
    current = int(rng.integers(n_agents))
    visited[current] = True
    remaining = n_agents - 1
    edges = set()
    while remaining:
        nxt = int(rng.integers(n_agents - 1))
        if nxt >= current:
            nxt += 1
        if not visited[nxt]:
            visited[nxt] = True
            remaining -= 1
            edges.add((min(current, nxt), max(current, nxt)))
        current = nxt

    extra = n_target - len(edges)
    if extra > 0:
        iu, ju = np.triu_indices(n_agents, k=1)
        candidates = [(int(i), int(j)) for i, j in zip(iu, ju) if (i, j) not in edges]
        picks = rng.choice(len(candidates), size=extra, replace=False)
        edges.update(candidates[p] for p in np.sort(picks))
    return Graph(n_agents, frozenset(edges))


def format_edge_list(g: Graph) -> str:
    lines = [EDGE_LIST_HEADER, str(g.n_agents)]
    lines += [f"{i} {j}" for i, j in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph:
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise InvalidParameterError("empty edge list")
    n = int(rows[0])
    edges = []
    for ln in rows[1:]:
        i, j = ln.split()
        edges.append((int(i), int(j)))
    if len(set((min(e), max(e)) for e in edges)) != len(edges):
        raise InvalidParameterError("duplicate edge in edge list")
    return Graph.from_edges(n, edges)


def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text(format_edge_list(g))


def read_edge_list(path) -> Graph:
    return parse_edge_list(Path(path).read_text())
