"""Component extraction and isomorphism-class census statistics.

Components of an RCM realization are counted in two modes: by the
lexicographic minimum falling in the window, and by all vertices falling
in the window. Small components (order <= k_max) are additionally
resolved into isomorphism classes via a canonical labeling that
minimizes the packed upper-triangular adjacency bitset over all vertex
permutations.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .geometry import Window
from .sampling import RcmGraph

K_MAX = 8

_perm_cache: dict[int, tuple] = {}
_canon_cache: dict[tuple, int] = {}


class UnionFind:
    """Array-based union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:
            p[i], i = root, p[i]
        return int(root)

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


@dataclass(frozen=True, order=True)
class GraphClass:
    """Isomorphism class of a small connected graph.

    canon is the minimum over all k! vertex permutations of the
    upper-triangular adjacency matrix packed into an integer bitset.
    """

    order: int
    canon: int

    @property
    def class_id(self) -> str:
        return f"{self.order}:{self.canon:x}"

    @staticmethod
    def from_class_id(s: str) -> "GraphClass":
        k, canon = s.split(":")
        return GraphClass(order=int(k), canon=int(canon, 16))

    def adjacency(self) -> np.ndarray:
        """A representative k x k boolean adjacency matrix."""
        k = self.order
        iu = np.triu_indices(k, 1)
        bits = (self.canon >> np.arange(len(iu[0]))) & 1
        a = np.zeros((k, k), dtype=bool)
        a[iu] = bits.astype(bool)
        return a | a.T


def _perm_tables(k: int):
    if k not in _perm_cache:
        perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
        iu = np.triu_indices(k, 1)
        weights = (np.int64(1) << np.arange(len(iu[0]), dtype=np.int64))
        _perm_cache[k] = (perms, iu, weights)
    return _perm_cache[k]


def _pack(adj: np.ndarray, iu, weights) -> int:
    return int(adj[iu].astype(np.int64) @ weights)


def _is_connected(adj: np.ndarray) -> bool:
    k = len(adj)
    seen = np.zeros(k, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in np.flatnonzero(adj[v]):
            if not seen[w]:
                seen[w] = True
                stack.append(int(w))
    return bool(seen.all())


def canonical_form(adjacency: np.ndarray) -> GraphClass:
    """Canonical class of a connected graph given as a symmetric bool matrix."""
    adj = np.asarray(adjacency, dtype=bool)
    k = len(adj)
    if k > K_MAX:
        raise ValueError(f"graph order {k} exceeds K_MAX={K_MAX}")
    if adj.shape != (k, k) or np.any(adj != adj.T) or np.any(np.diag(adj)):
        raise ValueError("adjacency must be symmetric with empty diagonal")
    if k == 1:
        return GraphClass(order=1, canon=0)
    if not _is_connected(adj):
        raise ValueError("graph is not connected")
    perms, iu, weights = _perm_tables(k)
    key = (k, _pack(adj, iu, weights))
    canon = _canon_cache.get(key)
    if canon is None:
        permuted = adj[perms[:, :, None], perms[:, None, :]]
        packed = permuted[:, iu[0], iu[1]].astype(np.int64) @ weights
        canon = int(packed.min())
        _canon_cache[key] = canon
    return GraphClass(order=k, canon=canon)


def enumerate_classes(k: int) -> list[GraphClass]:
    """All connected isomorphism classes on k vertices, sorted by canon.

    Generated by augmentation: every connected graph on k vertices arises
    from a connected graph on k-1 vertices by adding one vertex joined to
    a nonempty subset of the others.
    """
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must lie in [1, {K_MAX}]")
    classes = {GraphClass(order=1, canon=0)}
    for order in range(2, k + 1):
        grown = set()
        for cls in classes:
            base = cls.adjacency()
            adj = np.zeros((order, order), dtype=bool)
            adj[:order - 1, :order - 1] = base
            for sub in range(1, 1 << (order - 1)):
                attach = [(sub >> i) & 1 for i in range(order - 1)]
                adj[order - 1, :order - 1] = attach
                adj[:order - 1, order - 1] = attach
                grown.add(canonical_form(adj))
        classes = grown
    return sorted(classes)


def component_labels(n: int, edges: np.ndarray) -> np.ndarray:
    """Root label per vertex id under the given edge set."""
    uf = UnionFind(n)
    for i, j in edges:
        uf.union(int(i), int(j))
    return np.array([uf.find(i) for i in range(n)], dtype=np.int64)


def components(graph: RcmGraph) -> list[np.ndarray]:
    """Vertex id blocks of the connected components, each sorted ascending."""
    labels = component_labels(graph.n, graph.edges)
    blocks = defaultdict(list)
    for i, lab in enumerate(labels):
        blocks[int(lab)].append(i)
    return [np.array(b, dtype=np.int64) for b in blocks.values()]


@dataclass
class CensusReport:
    """Component counts of one realization, in both counting modes."""

    class_counts_lexmin: dict = field(default_factory=dict)
    order_counts_lexmin: dict = field(default_factory=dict)
    class_counts_inside: dict = field(default_factory=dict)
    order_counts_inside: dict = field(default_factory=dict)
    alpha: int = 0
    boundary_touching: int = 0
    k_max: int = K_MAX

    def eta_G(self, cls: GraphClass) -> int:
        return self.class_counts_lexmin.get(cls.class_id, 0)

    def eta_k(self, k: int) -> int:
        return self.order_counts_lexmin.get(k, 0)

    def eta_tilde_G(self, cls: GraphClass) -> int:
        return self.class_counts_inside.get(cls.class_id, 0)

    def eta_tilde_k(self, k: int) -> int:
        return self.order_counts_inside.get(k, 0)


def _component_adjacency(ids: np.ndarray, comp_edges: list) -> np.ndarray:
    k = len(ids)
    pos = {int(v): i for i, v in enumerate(ids)}
    adj = np.zeros((k, k), dtype=bool)
    for i, j in comp_edges:
        a, b = pos[int(i)], pos[int(j)]
        adj[a, b] = adj[b, a] = True
    return adj


def census(graph: RcmGraph, window: Window, k_max: int = 5) -> CensusReport:
    """Count components of the realization relative to the window.

    Per-order counts cover every component order; isomorphism classes are
    resolved only up to k_max. A component with a vertex within rmax of
    the sampled-region boundary may extend beyond the sample, so it is
    excluded from all counts and tallied separately.
    """
    if k_max > K_MAX:
        raise ValueError(f"k_max exceeds K_MAX={K_MAX}")
    labels = component_labels(graph.n, graph.edges)
    blocks = defaultdict(list)
    for i, lab in enumerate(labels):
        blocks[int(lab)].append(i)
    edges_by_root = defaultdict(list)
    for i, j in graph.edges:
        edges_by_root[int(labels[int(i)])].append((int(i), int(j)))

    pts = graph.points.points
    region = graph.points.region
    report = CensusReport(k_max=k_max)
    for root, members in blocks.items():
        ids = np.array(members, dtype=np.int64)
        pos = pts[ids]
        if len(pos) and np.min(region.boundary_distance(pos)) < graph.rmax:
            report.boundary_touching += 1
            continue
        k = len(ids)
        inside = window.contains(pos)
        all_inside = bool(np.all(inside))
        # ids are assigned in lexicographic order, so the component's
        # lexicographic minimum is just its smallest id
        lexmin_inside = bool(inside[0])
        cls_id = None
        if k <= k_max:
            adj = _component_adjacency(ids, edges_by_root.get(root, []))
            cls_id = canonical_form(adj).class_id
        if lexmin_inside:
            report.order_counts_lexmin[k] = report.order_counts_lexmin.get(k, 0) + 1
            if cls_id is not None:
                report.class_counts_lexmin[cls_id] = \
                    report.class_counts_lexmin.get(cls_id, 0) + 1
        if all_inside:
            report.alpha += 1
            report.order_counts_inside[k] = report.order_counts_inside.get(k, 0) + 1
            if cls_id is not None:
                report.class_counts_inside[cls_id] = \
                    report.class_counts_inside.get(cls_id, 0) + 1
    return report


def weighted_count(report: CensusReport, a, classes,
                   mode: str = "lexmin") -> float:
    """Weighted class-count statistic sum_i a_i * count(G_i)."""
    a = np.asarray(a, dtype=float)
    classes = list(classes)
    if len(a) != len(classes):
        raise ValueError("weight and class lists differ in length")
    if not np.any(a != 0):
        raise ValueError("weights must not all vanish")
    if len({c.class_id for c in classes}) != len(classes):
        raise ValueError("classes must be distinct")
    if mode == "lexmin":
        counts = [report.eta_G(c) for c in classes]
    elif mode == "inside":
        counts = [report.eta_tilde_G(c) for c in classes]
    else:
        raise ValueError(f"unknown counting mode {mode!r}")
    return float(a @ np.array(counts, dtype=float))


def single_vertex_class() -> GraphClass:
    return GraphClass(order=1, canon=0)


def edge_class() -> GraphClass:
    return GraphClass(order=2, canon=1)


def path_class(k: int) -> GraphClass:
    """The path on k vertices."""
    adj = np.zeros((k, k), dtype=bool)
    for i in range(k - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return canonical_form(adj)
