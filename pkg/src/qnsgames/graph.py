"""Simple undirected graphs on vertex set ``{0, ..., n-1}``."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset  # of (u, v) pairs with u < v

    def __init__(self, n: int, edges: Iterable[Sequence[int]] = ()):
        es = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise ValueError(f"loop at vertex {u} is not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} vertices")
            es.add((min(u, v), max(u, v)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(es))

    def adjacent(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def directed_edges(self) -> list[tuple[int, int]]:
        """Both orientations of every edge, sorted."""
        return sorted([(u, v) for u, v in self.edges] + [(v, u) for u, v in self.edges])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=int)
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1
        return A

    def complement(self) -> "Graph":
        return Graph(self.n, [(u, v) for u, v in itertools.combinations(range(self.n), 2)
                              if not self.adjacent(u, v)])

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        return cls(int(obj["n"]), obj.get("edges", []))


def complete_graph(n: int) -> Graph:
    return Graph(n, itertools.combinations(range(n), 2))


def empty_graph(n: int) -> Graph:
    return Graph(n, [])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def is_homomorphism(f: Sequence[int], G: Graph, H: Graph) -> bool:
    """Vertex map ``f`` sends every edge of ``G`` to an edge of ``H``."""
    if len(f) != G.n or any(not (0 <= y < H.n) for y in f):
        raise ValueError("vertex map has the wrong shape")
    return all(H.adjacent(f[u], f[v]) for u, v in G.edges)


def vertex_maps(G: Graph, H: Graph):
    """Iterate over all ``H.n ** G.n`` vertex maps in lexicographic order."""
    return itertools.product(range(H.n), repeat=G.n)
