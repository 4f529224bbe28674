"""Difference operators and variance / normal-approximation estimators.

A functional F is a component statistic of one RCM realization. Adding a
fresh point x only merges the components adjacent to x, so difference
operators are evaluated incrementally: the base census is computed once
per realization and each insertion recomputes only the merged block.

Fresh points carry reserved negative ids, so their pair marks against
existing points are fixed by the same mark source and all four
evaluations behind a second-order difference share every common mark.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .census import (K_MAX, GraphClass, canonical_form, component_labels)
from .connection import ConnectionFunction
from .geometry import Window, lex_less, unit_ball_volume
from .marks import PairMarkSource
from .moments import MomentEstimate
from .sampling import PointSet, RcmGraph, build_rcm, sample_poisson


@dataclass(frozen=True)
class FunctionalSpec:
    """A component statistic of the RCM on a window.

    statistic is one of: count_class (components isomorphic to cls),
    count_order (components with k vertices), weighted (linear
    combination over classes), total_components (all finite components
    inside the window), point_count (number of points in the window).
    mode selects the counting convention: "lexmin" counts a component
    when its lexicographic minimum lies in the window, "inside" when all
    vertices do.
    """

    statistic: str
    window: Window
    phi: ConnectionFunction
    beta: float
    cls: GraphClass = None
    k: int = None
    a: tuple = None
    classes: tuple = None
    mode: str = "lexmin"
    k_max: int = 5

    def __post_init__(self):
        kinds = ("count_class", "count_order", "weighted",
                 "total_components", "point_count")
        if self.statistic not in kinds:
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.mode not in ("lexmin", "inside"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.statistic == "weighted":
            if not self.a or not self.classes or len(self.a) != len(self.classes):
                raise ValueError("weighted statistic needs matching a, classes")

    @property
    def max_order(self) -> int:
        """Largest component order that can contribute (None = unbounded)."""
        if self.statistic == "count_class":
            return self.cls.order
        if self.statistic == "count_order":
            return self.k
        if self.statistic == "weighted":
            return max(c.order for c in self.classes)
        return None

    def padding(self) -> float:
        """Sampling padding so that no contributing component is cut off."""
        if self.statistic == "point_count":
            return 0.0
        reach = self.phi.truncation_radius()
        korder = self.max_order
        if korder is None:
            korder = self.k_max
        return (korder + 1) * reach


# ---------------------------------------------------------------------------
# incremental evaluation

@dataclass
class _CompInfo:
    ids: np.ndarray
    order: int
    n_inside: int
    lexmin_pos: np.ndarray
    lexmin_inside: bool
    all_inside: bool
    boundary: bool
    class_id: str
    edges: list          # retained only for small components


class EvaluationContext:
    """Base-realization census with support for fresh-point insertions."""

    def __init__(self, graph: RcmGraph, spec: FunctionalSpec):
        self.graph = graph
        self.spec = spec
        self.window = spec.window
        self.region = graph.points.region
        pts = graph.points.points
        labels = component_labels(graph.n, graph.edges)
        self.labels = labels
        comp_edges: dict[int, list] = {}
        for i, j in graph.edges:
            comp_edges.setdefault(int(labels[int(i)]), []).append(
                (int(i), int(j)))
        self.comps: dict[int, _CompInfo] = {}
        blocks: dict[int, list] = {}
        for i, lab in enumerate(labels):
            blocks.setdefault(int(lab), []).append(i)
        keep_edges_cap = K_MAX
        for root, members in blocks.items():
            ids = np.array(members, dtype=np.int64)
            pos = pts[ids]
            inside = self.window.contains(pos)
            boundary = bool(len(pos) and
                            np.min(self.region.boundary_distance(pos))
                            < graph.rmax)
            order = len(ids)
            cls_id = None
            edges = comp_edges.get(root, [])
            if order <= spec.k_max and not boundary:
                cls_id = _component_class(ids, pos, edges).class_id
            self.comps[root] = _CompInfo(
                ids=ids, order=order, n_inside=int(np.sum(inside)),
                lexmin_pos=pos[0], lexmin_inside=bool(inside[0]),
                all_inside=bool(np.all(inside)), boundary=boundary,
                class_id=cls_id,
                edges=edges if order <= keep_edges_cap else None)
        self.base_value = sum(self._contribution(c)
                              for c in self.comps.values())

    def _contribution(self, c: _CompInfo) -> float:
        spec = self.spec
        if spec.statistic == "point_count":
            return float(c.n_inside)
        if c.boundary:
            return 0.0
        counted = c.lexmin_inside if spec.mode == "lexmin" else c.all_inside
        if spec.statistic == "total_components":
            return 1.0 if c.all_inside else 0.0
        if not counted:
            return 0.0
        if spec.statistic == "count_order":
            return 1.0 if c.order == spec.k else 0.0
        if spec.statistic == "count_class":
            return 1.0 if c.class_id == spec.cls.class_id else 0.0
        # weighted
        for w, cls in zip(spec.a, spec.classes):
            if c.class_id == cls.class_id:
                return float(w)
        return 0.0

    def value_with_additions(self, additions) -> float:
        """f of the realization augmented by fresh points.

        additions: sequence of (position, negative id). Marks between an
        added point and every other point come from the graph's mark
        source keyed by the ids, so repeated evaluations are coupled.
        """
        if not additions:
            return self.base_value
        graph = self.graph
        pts = graph.points.points
        n_add = len(additions)
        add_pos = np.array([np.asarray(p, dtype=float) for p, _ in additions])
        add_ids = [int(i) for _, i in additions]
        if len(set(add_ids)) != n_add or any(i >= 0 for i in add_ids):
            raise ValueError("added points need distinct negative ids")
        for p in add_pos:
            if len(pts) and np.any(np.all(pts == p, axis=1)):
                raise ValueError("added point duplicates an existing point")
        base_nbrs = [graph.neighbors_of_point(p, i)
                     for p, i in zip(add_pos, add_ids)]
        # edges among the added points themselves
        add_edges = []
        for u in range(n_add):
            for v in range(u + 1, n_add):
                dist = float(np.linalg.norm(add_pos[u] - add_pos[v]))
                if dist <= graph.rmax:
                    mark = graph.marks.mark(add_ids[u], add_ids[v])
                    if mark <= graph.phi.phi_of_dist(dist):
                        add_edges.append((u, v))
        # group the added points and the base components they touch
        parent = list(range(n_add))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        touched: dict[int, int] = {}   # base component root -> group leader
        for u, nbrs in enumerate(base_nbrs):
            for b in nbrs:
                root = int(self.labels[int(b)])
                if root in touched:
                    ra, rb = find(touched[root]), find(u)
                    parent[ra] = rb
                else:
                    touched[root] = u
        for u, v in add_edges:
            parent[find(u)] = find(v)
        groups: dict[int, dict] = {}
        for u in range(n_add):
            g = find(u)
            groups.setdefault(g, {"adds": [], "roots": set()})["adds"].append(u)
        for root, u in touched.items():
            groups[find(u)]["roots"].add(root)

        value = self.base_value
        for g in groups.values():
            merged = self._merged_contribution(
                g["adds"], sorted(g["roots"]), add_pos, add_ids,
                base_nbrs, add_edges)
            value += merged
            for root in g["roots"]:
                value -= self._contribution(self.comps[root])
        return value

    def _merged_contribution(self, adds, roots, add_pos, add_ids,
                             base_nbrs, add_edges) -> float:
        spec = self.spec
        comps = [self.comps[r] for r in roots]
        order = sum(c.order for c in comps) + len(adds)
        pos_in_w = self.window.contains(add_pos[adds])
        n_inside = sum(c.n_inside for c in comps) + int(np.sum(pos_in_w))
        boundary = any(c.boundary for c in comps) or bool(np.any(
            self.region.boundary_distance(add_pos[adds]) < self.graph.rmax))
        if spec.statistic == "point_count":
            return float(n_inside)
        if boundary:
            return 0.0
        lexmin_pos = None
        for c in comps:
            if lexmin_pos is None or lex_less(c.lexmin_pos, lexmin_pos):
                lexmin_pos = c.lexmin_pos
        for u in adds:
            if lexmin_pos is None or lex_less(add_pos[u], lexmin_pos):
                lexmin_pos = add_pos[u]
        lexmin_inside = bool(self.window.contains(lexmin_pos)[0])
        all_inside = all(c.all_inside for c in comps) and bool(
            np.all(pos_in_w))
        cls_id = None
        if order <= spec.k_max:
            cls_id = self._merged_class(adds, comps, add_ids, base_nbrs,
                                        add_edges).class_id
        info = _CompInfo(ids=None, order=order, n_inside=n_inside,
                         lexmin_pos=lexmin_pos, lexmin_inside=lexmin_inside,
                         all_inside=all_inside, boundary=False,
                         class_id=cls_id, edges=None)
        return self._contribution(info)

    def _merged_class(self, adds, comps, add_ids, base_nbrs,
                      add_edges) -> GraphClass:
        local = {}
        for c in comps:
            for i in c.ids:
                local[int(i)] = len(local)
        for u in adds:
            local[add_ids[u]] = len(local)
        k = len(local)
        adj = np.zeros((k, k), dtype=bool)
        for c in comps:
            for i, j in c.edges:
                a, b = local[i], local[j]
                adj[a, b] = adj[b, a] = True
        for u in adds:
            for b in base_nbrs[u]:
                if int(b) in local:
                    a, bb = local[add_ids[u]], local[int(b)]
                    adj[a, bb] = adj[bb, a] = True
        for u, v in add_edges:
            if u in adds and v in adds:
                a, b = local[add_ids[u]], local[add_ids[v]]
                adj[a, b] = adj[b, a] = True
        return canonical_form(adj)


def _component_class(ids, pos, edges) -> GraphClass:
    local = {int(i): n for n, i in enumerate(ids)}
    k = len(ids)
    adj = np.zeros((k, k), dtype=bool)
    for i, j in edges:
        a, b = local[i], local[j]
        adj[a, b] = adj[b, a] = True
    return canonical_form(adj)


def evaluate(spec: FunctionalSpec, graph: RcmGraph) -> float:
    """F = f(realization), via the incremental context's base census."""
    return EvaluationContext(graph, spec).base_value


@dataclass(frozen=True)
class DifferenceSample:
    base: float
    with_x: float
    with_y: float
    with_xy: float

    @property
    def delta_x(self) -> float:
        return self.with_x - self.base

    @property
    def delta_y(self) -> float:
        return self.with_y - self.base

    @property
    def second(self) -> float:
        return self.with_xy - self.with_x - self.with_y + self.base


def difference(spec: FunctionalSpec, graph: RcmGraph, x) -> float:
    """First-order difference of the functional at a fresh point x."""
    ctx = EvaluationContext(graph, spec)
    return ctx.value_with_additions([(x, -1)]) - ctx.base_value


def second_difference(spec: FunctionalSpec, graph: RcmGraph,
                      x, y) -> DifferenceSample:
    """All four coupled evaluations behind the second-order difference."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(x == y):
        raise ValueError("x and y must differ")
    ctx = EvaluationContext(graph, spec)
    return DifferenceSample(
        base=ctx.base_value,
        with_x=ctx.value_with_additions([(x, -1)]),
        with_y=ctx.value_with_additions([(y, -2)]),
        with_xy=ctx.value_with_additions([(x, -1), (y, -2)]))


# ---------------------------------------------------------------------------
# graph exploration helpers (used by the per-sample bound checks)

def neighbors_with_additions(graph: RcmGraph, additions):
    """Neighbor lookup over the base graph plus fresh points.

    additions: list of (position, negative id). Returns a callable
    id -> list of adjacent ids.
    """
    base_adj = graph.adjacency()
    add_pos = {int(i): np.asarray(p, dtype=float) for p, i in additions}
    extra: dict[int, list] = {i: [] for i in add_pos}
    for i, p in add_pos.items():
        for b in graph.neighbors_of_point(p, i):
            extra[i].append(int(b))
            extra.setdefault(int(b), []).append(i)
    ids = sorted(add_pos)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            u, v = ids[a], ids[b]
            dist = float(np.linalg.norm(add_pos[u] - add_pos[v]))
            if dist <= graph.rmax:
                if graph.marks.mark(u, v) <= graph.phi.phi_of_dist(dist):
                    extra[u].append(v)
                    extra[v].append(u)

    def neighbors(v: int):
        out = list(base_adj[v]) if 0 <= v < graph.n else []
        out.extend(extra.get(v, []))
        return out

    return neighbors


def degree_with_additions(graph: RcmGraph, additions, vertex: int) -> int:
    return len(neighbors_with_additions(graph, additions)(vertex))


def hop_ball(graph: RcmGraph, additions, start: int, depth: int):
    """All vertex ids within the given number of edges from start."""
    neighbors = neighbors_with_additions(graph, additions)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if seen[v] == depth:
            continue
        for w in neighbors(v):
            if w not in seen:
                seen[w] = seen[v] + 1
                queue.append(w)
    return seen


def connects_to_window(graph: RcmGraph, additions, start: int,
                       depth: int, window: Window) -> bool:
    """True if some vertex within `depth` hops of start lies in the window."""
    reach = hop_ball(graph, additions, start, depth)
    add_pos = {int(i): np.asarray(p, dtype=float) for p, i in additions}
    for v in reach:
        pos = add_pos[v] if v < 0 else graph.points.points[v]
        if bool(window.contains(pos)[0]):
            return True
    return False


def hops_between(graph: RcmGraph, additions, a: int, b: int,
                 depth: int) -> bool:
    """True if a and b are connected by at most `depth` edges."""
    return b in hop_ball(graph, additions, a, depth)


# ---------------------------------------------------------------------------
# variance bounds

def _spec_graph(spec: FunctionalSpec, seed: int) -> RcmGraph:
    points = sample_poisson(spec.window, spec.padding(), spec.beta, seed)
    return build_rcm(points, spec.phi, PairMarkSource(seed))


def poincare_bound(spec: FunctionalSpec, n_outer: int = 200,
                   n_points: int = 20, seed: int = 0) -> MomentEstimate:
    """Monte Carlo upper variance bound beta * int E(Delta_x F)^2 dx.

    The integration domain is the padded region; outside it the
    difference vanishes for compact-support connection functions.
    """
    if n_outer < 2 or n_points < 1:
        raise ValueError("budgets must be positive (n_outer >= 2)")
    rng = np.random.default_rng(seed)
    region = spec.window.pad(spec.padding())
    per_sample = np.empty(n_outer)
    for i in range(n_outer):
        graph = _spec_graph(spec, seed + 1 + i)
        ctx = EvaluationContext(graph, spec)
        xs = region.sample_uniform(rng, n_points)
        vals = np.empty(n_points)
        for j, x in enumerate(xs):
            vals[j] = ctx.value_with_additions([(x, -1)]) - ctx.base_value
        per_sample[i] = np.mean(vals ** 2)
    scale = spec.beta * region.volume
    value = scale * float(np.mean(per_sample))
    se = scale * float(np.std(per_sample, ddof=1) / math.sqrt(n_outer))
    return MomentEstimate(value=value, std_error=se, n_samples=n_outer,
                          truncation_radius=spec.phi.truncation_radius(),
                          method="monte_carlo")


class _SplitMarkSource:
    """Marks from source A among old points, from source B otherwise.

    Old points are those with id in [0, n_old). Pairs among old points
    keep the fixed marks of source A; every pair involving a newer or a
    fresh (negative-id) point draws from B. The conditioning of the
    inner expectation therefore covers exactly the past configuration
    and its internal marks, while the marks carried by later-born and
    inserted points are resampled.
    """

    def __init__(self, a: PairMarkSource, b: PairMarkSource, n_old: int):
        self.a = a
        self.b = b
        self.n_old = n_old

    def mark(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        use_a = (np.maximum(i, j) < self.n_old) & (np.minimum(i, j) >= 0)
        out = np.where(use_a, self.a.mark(i, j) if np.any(use_a) else 0.0,
                       self.b.mark(i, j) if np.any(~use_a) else 0.0)
        if out.ndim == 0:
            return float(out)
        return out


def birth_time_variance(spec: FunctionalSpec, n_outer: int = 2000,
                        n_inner: int = 16, seed: int = 0,
                        volume_cap: float = 64.0) -> MomentEstimate:
    """Nested Monte Carlo evaluation of the birth-time variance identity.

    Outer draws: insertion point x, birth time t, and the points born
    before t with their mutual marks. Inner draws: the points born after
    t, resampled with fresh marks. The squared inner conditional mean is
    debiased by splitting the inner replicates into two halves.
    """
    if n_inner < 4:
        raise ValueError("n_inner must be at least 4 for the debiasing split")
    region = spec.window.pad(spec.padding())
    if region.volume > volume_cap:
        raise ValueError("padded region volume exceeds the nested-MC cap")
    rng = np.random.default_rng(seed)
    vol = region.volume
    beta = spec.beta
    outer_vals = np.empty(n_outer)
    for i in range(n_outer):
        t = rng.uniform()
        x = region.sample_uniform(rng, 1)[0]
        n_past = rng.poisson(beta * t * vol)
        past = region.sample_uniform(rng, n_past)
        past_marks = PairMarkSource(seed * 1000003 + 7 * i + 1)
        deltas = np.empty(n_inner)
        for r in range(n_inner):
            n_fut = rng.poisson(beta * (1.0 - t) * vol)
            fut = region.sample_uniform(rng, n_fut)
            pts = np.concatenate([past, fut], axis=0) if n_fut else past
            fut_marks = PairMarkSource(seed * 2000003 + 7919 * i + r + 1)
            marks = _SplitMarkSource(past_marks, fut_marks, n_past)
            pset = PointSet(points=pts, seed=0, region=region, beta=beta)
            graph = build_rcm(pset, spec.phi, marks)
            ctx = EvaluationContext(graph, spec)
            deltas[r] = ctx.value_with_additions([(x, -1)]) - ctx.base_value
        half = n_inner // 2
        outer_vals[i] = np.mean(deltas[:half]) * np.mean(deltas[half:])
    scale = beta * vol
    value = scale * float(np.mean(outer_vals))
    se = scale * float(np.std(outer_vals, ddof=1) / math.sqrt(n_outer))
    return MomentEstimate(value=value, std_error=se, n_samples=n_outer,
                          truncation_radius=spec.phi.truncation_radius(),
                          method="monte_carlo")


# ---------------------------------------------------------------------------
# normal-approximation terms

@dataclass(frozen=True)
class Standardization:
    mean: float
    variance: float
    source: str = "pilot"    # analytic | pilot

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive to standardize")


def pilot_standardization(spec: FunctionalSpec, n_reps: int = 400,
                          seed: int = 0) -> Standardization:
    vals = np.array([evaluate(spec, _spec_graph(spec, seed + i))
                     for i in range(n_reps)])
    return Standardization(mean=float(np.mean(vals)),
                           variance=float(np.var(vals, ddof=1)),
                           source="pilot")


def _split_product(vals: np.ndarray) -> float:
    """Unbiased estimate of (E vals)^2 via two independent halves."""
    half = len(vals) // 2
    return float(np.mean(vals[:half]) * np.mean(vals[half:]))


def gamma_terms(spec: FunctionalSpec, std: Standardization,
                n_outer: int = 200, n_inner: int = 8,
                seed: int = 0) -> dict[str, MomentEstimate]:
    """The six moment integrals controlling the distance to normal.

    All first and second difference values are divided by the standard
    deviation, matching the standardized functional. Inner expectations
    at sampled locations use n_inner independent realizations; square
    roots are taken after inner averaging.
    """
    if n_inner < 4:
        raise ValueError("n_inner must be at least 4")
    rng = np.random.default_rng(seed)
    region = spec.window.pad(spec.padding())
    vol = region.volume
    beta = spec.beta
    sd = math.sqrt(std.variance)
    trunc = spec.phi.truncation_radius()

    # Second differences vanish unless the two points are within graph
    # reach of each other, so x3 is proposed in a ball around x1 and x2
    # in a ball around x3; the ball volumes enter as importance weights.
    korder = spec.max_order if spec.max_order is not None else spec.k_max
    reach = (korder + 2) * trunc
    dim = spec.window.dim
    vol_ball = unit_ball_volume(dim) * reach ** dim

    def _ball_offset():
        while True:
            u = rng.uniform(-reach, reach, dim)
            if np.dot(u, u) <= reach * reach:
                return u

    # accumulators of per-outer-draw integrand values, volume weights
    # already included
    acc = {name: np.empty(n_outer) for name in
           ("g1", "g2", "g3", "g4_inner", "g5", "g6")}
    f4 = np.empty(n_outer)
    for i in range(n_outer):
        x1 = region.sample_uniform(rng, 1)[0]
        x3 = x1 + _ball_offset()
        x2 = x3 + _ball_offset()
        d1 = np.empty(n_inner)
        d2 = np.empty(n_inner)
        s13 = np.empty(n_inner)
        s23 = np.empty(n_inner)
        for r in range(n_inner):
            graph = _spec_graph(spec, seed + 1 + i * n_inner + r)
            ctx = EvaluationContext(graph, spec)
            base = ctx.base_value
            v1 = ctx.value_with_additions([(x1, -1)])
            v2 = ctx.value_with_additions([(x2, -1)])
            v3 = ctx.value_with_additions([(x3, -2)])
            v13 = ctx.value_with_additions([(x1, -1), (x3, -2)])
            v23 = ctx.value_with_additions([(x2, -1), (x3, -2)])
            d1[r] = (v1 - base) / sd
            d2[r] = (v2 - base) / sd
            s13[r] = (v13 - v1 - v3 + base) / sd
            s23[r] = (v23 - v2 - v3 + base) / sd
            if r == 0:
                f4[i] = ((base - std.mean) / sd) ** 4
        m_sq = max(np.mean(d1 ** 2 * d2 ** 2), 0.0)
        m_ss = max(np.mean(s13 ** 2 * s23 ** 2), 0.0)
        w3 = vol * vol_ball * vol_ball
        acc["g1"][i] = w3 * math.sqrt(m_sq) * math.sqrt(m_ss)
        acc["g2"][i] = w3 * m_ss
        acc["g3"][i] = vol * np.mean(np.abs(d1) ** 3)
        m4 = max(np.mean(d1 ** 4), 0.0)
        acc["g4_inner"][i] = vol * m4 ** 0.75
        acc["g5"][i] = vol * m4
        m4_s = max(np.mean(s13 ** 4), 0.0)
        acc["g6"][i] = vol * vol_ball * (
            6.0 * math.sqrt(m4) * math.sqrt(m4_s) + 3.0 * m4_s)

    def integ(name, lam_power):
        vals = acc[name]
        scale = beta ** lam_power
        mean = float(np.mean(vals)) * scale
        se = float(np.std(vals, ddof=1) / math.sqrt(n_outer)) * scale
        return mean, se

    ef4 = max(float(np.mean(f4)), 0.0)
    out = {}
    m, s = integ("g1", 3)
    out["gamma1"] = _sqrt_estimate(2.0, m, s, n_outer, trunc)
    m, s = integ("g2", 3)
    out["gamma2"] = _sqrt_estimate(1.0, m, s, n_outer, trunc)
    m, s = integ("g3", 1)
    out["gamma3"] = MomentEstimate(value=m, std_error=s, n_samples=n_outer,
                                   truncation_radius=trunc,
                                   method="monte_carlo")
    m, s = integ("g4_inner", 1)
    out["gamma4"] = MomentEstimate(value=0.5 * ef4 ** 0.25 * m,
                                   std_error=0.5 * ef4 ** 0.25 * s,
                                   n_samples=n_outer,
                                   truncation_radius=trunc,
                                   method="monte_carlo")
    m, s = integ("g5", 1)
    out["gamma5"] = _sqrt_estimate(1.0, m, s, n_outer, trunc)
    m, s = integ("g6", 2)
    out["gamma6"] = _sqrt_estimate(1.0, m, s, n_outer, trunc)
    return out


def _sqrt_estimate(prefactor, value, se, n, trunc) -> MomentEstimate:
    root = math.sqrt(max(value, 0.0))
    root_se = 0.5 * se / root if root > 0 else math.sqrt(max(se, 0.0))
    return MomentEstimate(value=prefactor * root,
                          std_error=prefactor * root_se,
                          n_samples=n, truncation_radius=trunc,
                          method="monte_carlo")


def fourth_moment_bound(spec: FunctionalSpec, std: Standardization,
                        n_outer: int = 300, n_inner: int = 8,
                        seed: int = 0) -> MomentEstimate:
    """Upper bound on E F^4 from fourth moments of the first difference."""
    rng = np.random.default_rng(seed)
    region = spec.window.pad(spec.padding())
    vol = region.volume
    beta = spec.beta
    sd = math.sqrt(std.variance)
    inner_sqrt = np.empty(n_outer)
    inner_raw = np.empty(n_outer)
    for i in range(n_outer):
        x = region.sample_uniform(rng, 1)[0]
        vals = np.empty(n_inner)
        for r in range(n_inner):
            graph = _spec_graph(spec, seed + 1 + i * n_inner + r)
            ctx = EvaluationContext(graph, spec)
            vals[r] = (ctx.value_with_additions([(x, -1)])
                       - ctx.base_value) / sd
        m4 = max(float(np.mean(vals ** 4)), 0.0)
        inner_sqrt[i] = math.sqrt(m4)
        inner_raw[i] = m4
    scale = beta * vol
    i_sqrt = scale * float(np.mean(inner_sqrt))
    i_sqrt_se = scale * float(np.std(inner_sqrt, ddof=1) / math.sqrt(n_outer))
    i_raw = scale * float(np.mean(inner_raw))
    i_raw_se = scale * float(np.std(inner_raw, ddof=1) / math.sqrt(n_outer))
    branch1 = 256.0 * i_sqrt ** 2
    branch1_se = 256.0 * 2.0 * i_sqrt * i_sqrt_se
    branch2 = 4.0 * i_raw + 2.0
    branch2_se = 4.0 * i_raw_se
    if branch1 >= branch2:
        value, se = branch1, branch1_se
    else:
        value, se = branch2, branch2_se
    return MomentEstimate(value=value, std_error=se, n_samples=n_outer,
                          truncation_radius=spec.phi.truncation_radius(),
                          method="monte_carlo")


# ---------------------------------------------------------------------------
# cluster tail

@dataclass(frozen=True)
class ClusterTailEstimate:
    lower: MomentEstimate
    upper: MomentEstimate


def cluster_tail(phi: ConnectionFunction, beta: float, m: int,
                 n_samples: int = 2000, seed: int = 0,
                 sim_radius: float = None) -> ClusterTailEstimate:
    """Interval estimate of the probability that the finite components
    attached to an added origin point have total order at least m.

    A component reaching the simulated boundary band has unknown extent:
    it counts toward the event in the upper estimate and against it in
    the lower one.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    reach = phi.truncation_radius()
    if sim_radius is None:
        sim_radius = (m + 2) * reach
    window = Window("ball", sim_radius, phi.dim)
    hits_lo = np.zeros(n_samples)
    hits_hi = np.zeros(n_samples)
    for i in range(n_samples):
        points = sample_poisson(window, 0.0, beta, seed + i)
        graph = build_rcm(points, phi, PairMarkSource(seed + i))
        nbrs = graph.neighbors_of_point(np.zeros(phi.dim), -1)
        if len(nbrs) == 0:
            continue
        labels = component_labels(graph.n, graph.edges)
        roots = np.unique(labels[nbrs])
        total = 0
        uncertain = False
        for root in roots:
            members = np.flatnonzero(labels == root)
            total += len(members)
            dmin = np.min(window.boundary_distance(
                graph.points.points[members]))
            if dmin < graph.rmax:
                uncertain = True
        hits_hi[i] = 1.0 if (total >= m or uncertain) else 0.0
        hits_lo[i] = 1.0 if (total >= m and not uncertain) else 0.0

    def est(vals):
        return MomentEstimate(
            value=float(np.mean(vals)),
            std_error=float(np.std(vals, ddof=1) / math.sqrt(n_samples)),
            n_samples=n_samples, truncation_radius=sim_radius,
            method="monte_carlo")

    return ClusterTailEstimate(lower=est(hits_lo), upper=est(hits_hi))


# ---------------------------------------------------------------------------
# empirical distances

def empirical_distance(samples, kind: str) -> float:
    """Distance between the empirical law and the standard normal."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    if kind == "kolmogorov":
        cdf = norm.cdf(x)
        i = np.arange(1, n + 1)
        return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    if kind == "wasserstein":
        n_q = 512
        u = (np.arange(n_q) + 0.5) / n_q
        emp_q = x[np.minimum((u * n).astype(int), n - 1)]
        return float(np.mean(np.abs(emp_q - norm.ppf(u))))
    raise ValueError(f"unknown distance kind {kind!r}")


def dkw_bound(n: int, confidence: float = 0.99) -> float:
    """Dvoretzky-Kiefer-Wolfowitz envelope for the Kolmogorov statistic."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def boundary_profile_integral(window: Window, chi, alpha: float,
                              upper: float) -> float:
    """(1/volume) * integral of chi(distance to window)^alpha over R^d.

    Exact for convex windows in d <= 2 via the tube formula; chi is a
    monotone radial profile and upper bounds its support (or effective
    support) radius.
    """
    d = window.dim
    lam = window.volume

    def prof(t):
        return chi(t) ** alpha

    if d == 1:
        tail, _ = integrate.quad(prof, 0.0, upper, limit=200)
        return (lam + 2.0 * tail) / lam
    if d == 2:
        if window.shape == "box":
            per = 8.0 * window.extent
        else:
            per = 2.0 * math.pi * window.extent
        i1, _ = integrate.quad(prof, 0.0, upper, limit=200)
        i2, _ = integrate.quad(lambda t: t * prof(t), 0.0, upper, limit=200)
        return (lam + per * i1 + 2.0 * math.pi * i2) / lam
    raise NotImplementedError("boundary profile integral only for d <= 2")
