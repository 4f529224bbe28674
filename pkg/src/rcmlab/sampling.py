"""Seeded Poisson sampling and random connection model construction.

A sample lives on a padded region around the observation window. Points
are stored sorted by lexicographic order and carry ids 0..n-1 in that
order, so the lexicographic minimum of any subset is simply its smallest
id. Edges follow from deterministic pair marks: {i, j} is an edge iff
mark(i, j) <= phi(x_i - x_j).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .connection import ConnectionFunction
from .geometry import Window, lex_order
from .marks import PairMarkSource


@dataclass(frozen=True)
class PointSet:
    """A lex-sorted Poisson sample on a (padded) region."""

    points: np.ndarray          # (n, d), sorted lexicographically
    seed: int
    region: Window
    beta: float

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.region.dim

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)


def sample_poisson(window: Window, padding: float, beta: float,
                   seed: int) -> PointSet:
    """Poisson(beta * volume) points, uniform on window grown by padding."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    region = window.pad(padding)
    rng = np.random.default_rng(seed)
    n = rng.poisson(beta * region.volume)
    pts = region.sample_uniform(rng, n)
    pts = pts[lex_order(pts)]
    if n > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
        raise ValueError("duplicate points in Poisson sample")
    return PointSet(points=pts, seed=int(seed), region=region, beta=float(beta))


def _candidate_pairs(points: np.ndarray, rmax: float) -> np.ndarray:
    """All id pairs (i < j) within distance rmax, as an (m, 2) array."""
    if len(points) < 2:
        return np.empty((0, 2), dtype=np.int64)
    tree = cKDTree(points)
    pairs = tree.query_pairs(rmax, output_type="ndarray")
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs.sort(axis=1)
    return pairs.astype(np.int64)


@dataclass(frozen=True)
class RcmGraph:
    """A random connection model realization: points, marks, edge set."""

    points: PointSet
    phi: ConnectionFunction
    marks: PairMarkSource
    edges: np.ndarray           # (m, 2) ids with edges[:, 0] < edges[:, 1]
    rmax: float                 # pair-search radius used to build the edge set
    _adjacency: dict = field(default=None, repr=False, compare=False)
    _tree: object = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.points.n

    def adjacency(self) -> dict[int, np.ndarray]:
        """Per-vertex sorted neighbor id arrays (computed once, cached)."""
        if self._adjacency is None:
            adj = {i: [] for i in range(self.n)}
            for i, j in self.edges:
                adj[int(i)].append(int(j))
                adj[int(j)].append(int(i))
            adj = {i: np.array(sorted(v), dtype=np.int64)
                   for i, v in adj.items()}
            object.__setattr__(self, "_adjacency", adj)
        return self._adjacency

    def degree(self, i: int) -> int:
        return len(self.adjacency()[i])

    def neighbors_of_point(self, x: np.ndarray, new_id: int) -> np.ndarray:
        """Ids adjacent to a fresh point at x carrying id new_id.

        Uses the same mark source, so repeated queries with the same
        (x, new_id) are consistent with each other and with the base graph.
        """
        pts = self.points.points
        if len(pts) == 0:
            return np.empty(0, dtype=np.int64)
        if self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(pts))
        cand = np.asarray(
            self._tree.query_ball_point(np.asarray(x, dtype=float),
                                        self.rmax), dtype=np.int64)
        if len(cand) == 0:
            return cand
        dist = np.linalg.norm(pts[cand] - np.asarray(x, dtype=float), axis=1)
        m = self.marks.mark(np.full(len(cand), new_id, dtype=np.int64), cand)
        keep = np.atleast_1d(m) <= self.phi.phi_of_dist(dist)
        return np.sort(cand[keep])


def build_rcm(points: PointSet, phi: ConnectionFunction,
              marks: PairMarkSource, eps_trunc: float = 1e-6) -> RcmGraph:
    """Construct the RCM edge set from a point sample and a mark source."""
    if points.dim != phi.dim:
        raise ValueError("dimension mismatch between points and phi")
    rmax = phi.truncation_radius(eps_trunc)
    pairs = _candidate_pairs(points.points, rmax)
    if len(pairs):
        disp = points.points[pairs[:, 0]] - points.points[pairs[:, 1]]
        dist = np.linalg.norm(disp, axis=1)
        m = marks.mark(pairs[:, 0], pairs[:, 1])
        keep = np.atleast_1d(m) <= phi.phi_of_dist(dist)
        pairs = pairs[keep]
    return RcmGraph(points=points, phi=phi, marks=marks,
                    edges=pairs, rmax=rmax)


def build_coupled(points: PointSet, phi: ConnectionFunction,
                  psi: ConnectionFunction, marks: PairMarkSource,
                  eps_trunc: float = 1e-6) -> tuple[RcmGraph, RcmGraph]:
    """Two RCM graphs on shared points and marks, with psi <= phi.

    Both graphs use the search radius of phi, so the edge sets are nested
    by construction: an edge of the psi graph is always a phi edge.
    """
    if not phi.dominates(psi):
        raise ValueError("psi must be dominated by phi")
    rmax = phi.truncation_radius(eps_trunc)
    pairs = _candidate_pairs(points.points, rmax)
    if len(pairs):
        disp = points.points[pairs[:, 0]] - points.points[pairs[:, 1]]
        dist = np.linalg.norm(disp, axis=1)
        m = np.atleast_1d(marks.mark(pairs[:, 0], pairs[:, 1]))
        keep_phi = m <= phi.phi_of_dist(dist)
        keep_psi = m <= psi.phi_of_dist(dist)
        g_phi = pairs[keep_phi]
        g_psi = pairs[keep_psi]
    else:
        g_phi = g_psi = pairs
    graph_phi = RcmGraph(points=points, phi=phi, marks=marks,
                         edges=g_phi, rmax=rmax)
    graph_psi = RcmGraph(points=points, phi=psi, marks=marks,
                         edges=g_psi, rmax=rmax)
    return graph_phi, graph_psi
