"""Numerical evaluation of component-count moments.

The central objects are integrals over R^(d(k-1)) or R^(d(k+l-1)) of
connectivity or isomorphism probabilities times exponential interaction
terms. They are evaluated by importance sampling: cluster coordinates
are drawn along spanning trees with radial proposal densities built from
the dominator profile, which keeps the weights bounded on the support of
the integrand.

Sorted-tuple indicators are removed analytically: the remaining
integrand is symmetric under relabeling the free points of a cluster, so
1{x_1 < ... < x_k} integrates to 1/(k-1)! times the unsorted integrand
restricted to configurations whose anchor is the lexicographic minimum.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from .census import GraphClass
from .connection import ConnectionFunction, radial_sampler, \
    sample_displacements
from .geometry import Window, lex_order, unit_ball_volume

ENUM_CAP = 6


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    std_error: float
    n_samples: int
    truncation_radius: float
    method: str    # closed_form | quadrature | monte_carlo

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")


# ---------------------------------------------------------------------------
# pair bookkeeping and graph probabilities

def _pair_index(k: int):
    iu = np.triu_indices(k, 1)
    return iu


def _pair_values(X: np.ndarray, func: ConnectionFunction) -> np.ndarray:
    """func evaluated on all point pairs of X (n, k, d) -> (n, npairs)."""
    iu = _pair_index(X.shape[1])
    disp = X[:, iu[0], :] - X[:, iu[1], :]
    return func.phi_of_dist(np.sqrt(np.einsum("nij,nij->ni", disp, disp)))


_iso_cache: dict = {}


def iso_masks(G: GraphClass):
    """All labeled edge subsets isomorphic to G, as a (m, npairs) bool array."""
    if G not in _iso_cache:
        k = G.order
        iu = _pair_index(k)
        adj = G.adjacency()
        seen = set()
        rows = []
        for perm in itertools.permutations(range(k)):
            p = np.array(perm)
            a = adj[p][:, p]
            bits = tuple(a[iu].tolist())
            if bits not in seen:
                seen.add(bits)
                rows.append(bits)
        _iso_cache[G] = np.array(rows, dtype=bool)
    return _iso_cache[G]


def prob_isomorphic(pe: np.ndarray, G: GraphClass) -> np.ndarray:
    """P(labeled RCM on the tuple is isomorphic to G) per sample.

    pe holds the per-pair edge probabilities in upper-triangular order.
    """
    masks = iso_masks(G)
    qe = 1.0 - pe
    out = np.zeros(len(pe))
    for bits in masks:
        out += np.prod(np.where(bits[None, :], pe, qe), axis=1)
    return out


def prob_connected(pe: np.ndarray, k: int) -> np.ndarray:
    """P(labeled RCM on the k-tuple is connected) per sample."""
    n = len(pe)
    if k == 1:
        return np.ones(n)
    iu = _pair_index(k)
    pair_of = {}
    for e, (i, j) in enumerate(zip(*iu)):
        pair_of[(int(i), int(j))] = e
        pair_of[(int(j), int(i))] = e
    qe = 1.0 - pe
    # qv[j][mask] = P(no edge between vertex j and any vertex in mask)
    qv = [dict() for _ in range(k)]
    for j in range(k):
        qv[j][0] = np.ones(n)
        for mask in range(1, 1 << k):
            if (mask >> j) & 1:
                continue
            low = mask & -mask
            i = low.bit_length() - 1
            qv[j][mask] = qv[j][mask ^ low] * qe[:, pair_of[(i, j)]]
    conn = {0: np.zeros(n)}
    for mask in range(1, 1 << k):
        anchor = mask & -mask
        bits = [j for j in range(k) if (mask >> j) & 1]
        if len(bits) == 1:
            conn[mask] = np.ones(n)
            continue
        total = np.ones(n)
        sub = (mask - 1) & mask
        while sub:
            if sub & anchor and sub != mask:
                rest = mask ^ sub
                cross = np.ones(n)
                for j in range(k):
                    if (rest >> j) & 1:
                        cross = cross * qv[j][sub]
                total = total - conn[sub] * cross
            sub = (sub - 1) & mask
        conn[mask] = total
    return conn[(1 << k) - 1]


def joint_prob_coupled(pe_phi: np.ndarray, pe_psi: np.ndarray,
                       G: GraphClass, H: GraphClass) -> np.ndarray:
    """P(phi-graph ~ G and psi-graph ~ H) under shared pair marks.

    Each pair independently falls in one of three mark bands:
    [0, psi] (edge in both), (psi, phi] (edge in the phi graph only),
    (phi, 1] (edge in neither); the joint probability sums the band
    products over nested mask pairs.
    """
    if G.order != H.order:
        return np.zeros(len(pe_phi))
    both = pe_psi
    only_phi = pe_phi - pe_psi
    neither = 1.0 - pe_phi
    out = np.zeros(len(pe_phi))
    for mphi in iso_masks(G):
        for mpsi in iso_masks(H):
            if np.any(mpsi & ~mphi):
                continue
            band = np.where(mpsi[None, :], both,
                            np.where(mphi[None, :], only_phi, neither))
            out += np.prod(band, axis=1)
    return out


# ---------------------------------------------------------------------------
# interaction exponents

_gl_cache: dict = {}


def _gl_nodes(n: int):
    if n not in _gl_cache:
        _gl_cache[n] = roots_legendre(n)
    return _gl_cache[n]


def _balls_intersection_volume(centers: np.ndarray, radii: np.ndarray,
                               n_nodes: int = 64) -> np.ndarray:
    """Volume of the intersection of balls B(c_i, r_i), batched.

    centers: (n, m, d) with d in {1, 2}; radii: (m,). The intersection
    is convex, so in d=2 its area is the integral over the first
    coordinate of the chord overlap length (Gauss-Legendre nodes).
    """
    n, m, d = centers.shape
    if d == 1:
        lo = np.max(centers[:, :, 0] - radii[None, :], axis=1)
        hi = np.min(centers[:, :, 0] + radii[None, :], axis=1)
        return np.maximum(0.0, hi - lo)
    if d != 2:
        raise NotImplementedError("exact ball intersections only for d <= 2")
    lo = np.max(centers[:, :, 0] - radii[None, :], axis=1)
    hi = np.min(centers[:, :, 0] + radii[None, :], axis=1)
    width = np.maximum(0.0, hi - lo)
    nodes, weights = _gl_nodes(n_nodes)
    x = lo[:, None] + (nodes[None, :] + 1.0) * 0.5 * width[:, None]
    dx = x[:, :, None] - centers[:, None, :, 0]
    half = np.sqrt(np.maximum(0.0, radii[None, None, :] ** 2 - dx ** 2))
    upper = np.min(centers[:, None, :, 1] + half, axis=2)
    lower = np.max(centers[:, None, :, 1] - half, axis=2)
    chord = np.maximum(0.0, upper - lower)
    return 0.5 * width * (chord @ weights)


def indicator_union_exponent(X: np.ndarray, radii, scales,
                             beta: float, n_nodes: int = 64) -> np.ndarray:
    """beta * integral(prod_i (1 - p_i 1{|y-x_i|<=r_i}) - 1) dy, batched.

    Exact inclusion-exclusion over point subsets; each term is a volume
    of an intersection of balls. X: (n, m, d).
    """
    n, m, d = X.shape
    radii = np.asarray(radii, dtype=float)
    scales = np.asarray(scales, dtype=float)
    iu = _pair_index(m) if m > 1 else (np.array([], int), np.array([], int))
    if m > 1:
        disp = X[:, iu[0], :] - X[:, iu[1], :]
        dist = np.sqrt(np.einsum("nij,nij->ni", disp, disp))
        disjoint = dist >= (radii[iu[0]] + radii[iu[1]])[None, :]
    total = np.zeros(n)
    for sub in range(1, 1 << m):
        members = [i for i in range(m) if (sub >> i) & 1]
        coef = np.prod(-scales[members])
        if len(members) == 1:
            i = members[0]
            vol = np.full(n, unit_ball_volume(d) * radii[i] ** d)
            total = total + coef * vol
            continue
        active = np.ones(n, dtype=bool)
        for e, (i, j) in enumerate(zip(*iu)):
            if (sub >> int(i)) & 1 and (sub >> int(j)) & 1:
                active &= ~disjoint[:, e]
        if not active.any():
            continue
        vol = np.zeros(n)
        vol[active] = _balls_intersection_volume(
            X[active][:, members, :], radii[members], n_nodes=n_nodes)
        total = total + coef * vol
    return beta * total


def generic_union_exponent(X: np.ndarray, funcs, beta: float,
                           eps_trunc: float = 1e-6,
                           n_nodes: int = 48) -> np.ndarray:
    """beta * integral(prod_i phibar_i(y - x_i) - 1) dy by tensor quadrature.

    Works for any connection function kinds; the integration box covers
    every truncation ball. Used for smooth kinds where the subset
    expansion does not apply.
    """
    n, m, d = X.shape
    reach = np.array([f.truncation_radius(eps_trunc) for f in funcs])
    nodes, weights = _gl_nodes(n_nodes)
    out = np.empty(n)
    for s in range(n):
        lo = np.min(X[s] - reach[:, None], axis=0)
        hi = np.max(X[s] + reach[:, None], axis=0)
        axes = [lo[a] + (nodes + 1.0) * 0.5 * (hi[a] - lo[a]) for a in range(d)]
        grids = np.meshgrid(*axes, indexing="ij")
        Y = np.stack([g.ravel() for g in grids], axis=-1)
        prod = np.ones(len(Y))
        for i, f in enumerate(funcs):
            dist = np.linalg.norm(Y - X[s, i], axis=1)
            prod *= 1.0 - f.phi_of_dist(dist)
        wts = weights
        for _ in range(d - 1):
            wts = np.multiply.outer(wts, weights)
        scale = np.prod(0.5 * (hi - lo))
        out[s] = np.sum((prod - 1.0) * wts.ravel()) * scale
    return beta * out


def _is_indicator(phi: ConnectionFunction) -> bool:
    return phi.kind in ("gilbert", "scaled_indicator")


def _indicator_params(phi: ConnectionFunction):
    if phi.kind == "gilbert":
        return phi.r, 1.0
    return phi.r, phi.p


def mixed_exponent(X: np.ndarray, funcs, beta: float,
                   eps_trunc: float = 1e-6) -> np.ndarray:
    """Interaction exponent for per-point connection functions, batched."""
    if all(_is_indicator(f) for f in funcs):
        radii = [_indicator_params(f)[0] for f in funcs]
        scales = [_indicator_params(f)[1] for f in funcs]
        return indicator_union_exponent(X, radii, scales, beta)
    return generic_union_exponent(X, funcs, beta, eps_trunc=eps_trunc)


def inner_exponent(x, phi: ConnectionFunction, beta: float) -> float:
    """beta * integral(prod_i phibar(y - x_i) - 1) dy for one tuple.

    High-accuracy path for the public operation: adaptive quadrature of
    every ball-intersection term for indicator kinds, tensor quadrature
    otherwise.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    k, d = X.shape
    if X.ndim != 2:
        raise ValueError("x must be a (k, d) array")
    if len(np.unique(X, axis=0)) != k:
        raise ValueError("points must be distinct")
    if k == 1:
        return -beta * phi.m_phi
    if _is_indicator(phi) and d <= 2:
        r, p = _indicator_params(phi)
        total = 0.0
        for sub in range(1, 1 << k):
            members = [i for i in range(k) if (sub >> i) & 1]
            coef = (-p) ** len(members)
            total += coef * _adaptive_balls_intersection(X[members], r, d)
        return float(beta * total)
    return float(generic_union_exponent(X[None, :, :], [phi] * k, beta,
                                        n_nodes=96)[0])


def _adaptive_balls_intersection(centers: np.ndarray, r: float,
                                 d: int) -> float:
    """Intersection volume of equal balls, adaptive quadrature (d <= 2)."""
    if d == 1:
        lo = float(np.max(centers[:, 0]) - r)
        hi = float(np.min(centers[:, 0]) + r)
        return max(0.0, hi - lo)
    lo = float(np.max(centers[:, 0]) - r)
    hi = float(np.min(centers[:, 0]) + r)
    if hi <= lo:
        return 0.0

    def chord(t):
        half = np.sqrt(np.maximum(0.0, r ** 2 - (t - centers[:, 0]) ** 2))
        return max(0.0, float(np.min(centers[:, 1] + half)
                              - np.max(centers[:, 1] - half)))

    # the chord length has kinks where disks start to overlap; quad's
    # roundoff diagnostics are noise at the accuracy targeted here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(chord, lo, hi, limit=200, epsabs=1e-12,
                                epsrel=1e-9)
    return val


def q_kl(X1: np.ndarray, X2: np.ndarray, phi: ConnectionFunction,
         psi: ConnectionFunction, beta: float) -> np.ndarray:
    """The two-cluster interaction kernel of the asymptotic covariances.

    X1: (n, k, d) first cluster (anchored at 0), X2: (n, l, d) second
    cluster. Value: cross product of phibar over inter-cluster pairs
    times the joint exponent, minus the product of the two separate
    cluster exponents.
    """
    n, k, d = X1.shape
    l = X2.shape[1]
    cross = np.ones(n)
    for i in range(k):
        disp = X2 - X1[:, i: i + 1, :]
        dist = np.sqrt(np.einsum("nij,nij->ni", disp, disp))
        cross *= np.prod(1.0 - phi.phi_of_dist(dist), axis=1)
    Xall = np.concatenate([X1, X2], axis=1)
    e_joint = mixed_exponent(Xall, [phi] * k + [psi] * l, beta)
    e1 = mixed_exponent(X1, [phi] * k, beta)
    e2 = mixed_exponent(X2, [psi] * l, beta)
    return cross * np.exp(e_joint) - np.exp(e1 + e2)


# ---------------------------------------------------------------------------
# spanning-tree importance sampling

def _labeled_trees(k: int):
    """Edge lists of all labeled trees on k vertices (Pruefer decoding)."""
    if k == 1:
        return [[]]
    if k == 2:
        return [[(0, 1)]]
    import heapq
    trees = []
    for seq in itertools.product(range(k), repeat=k - 2):
        deg = [1] * k
        for v in seq:
            deg[v] += 1
        edges = []
        leaves = [i for i in range(k) if deg[i] == 1]
        heapq.heapify(leaves)
        for v in seq:
            leaf = heapq.heappop(leaves)
            edges.append((min(leaf, v), max(leaf, v)))
            deg[leaf] -= 1
            deg[v] -= 1
            if deg[v] == 1:
                heapq.heappush(leaves, v)
        last = [i for i in range(k) if deg[i] == 1]
        edges.append((min(last), max(last)))
        trees.append(edges)
    return trees


_tree_cache: dict = {}


def _tree_orders(k: int):
    """For each labeled tree on k vertices: edges ordered root-outward."""
    if k not in _tree_cache:
        ordered = []
        for edges in _labeled_trees(k):
            adj = {i: [] for i in range(k)}
            for a, b in edges:
                adj[a].append(b)
                adj[b].append(a)
            seq = []
            seen = {0}
            queue = [0]
            while queue:
                v = queue.pop(0)
                for w in adj[v]:
                    if w not in seen:
                        seen.add(w)
                        seq.append((v, w))
                        queue.append(w)
            ordered.append(seq)
        _tree_cache[k] = ordered
    return _tree_cache[k]


class ClusterProposal:
    """Positions of a k-cluster drawn along uniformly mixed labeled trees.

    The anchor vertex sits at the origin; every other vertex is the
    parent plus a displacement with radial density proportional to
    phi_tilde(t)^(1/3) t^(d-1). The proposal density is the mixture over
    all labeled trees, which covers every configuration the integrand
    can reach.
    """

    def __init__(self, phi: ConnectionFunction, k: int,
                 eps_trunc: float = 1e-6):
        self.phi = phi
        self.k = k
        self.d = phi.dim
        self.eps_trunc = eps_trunc
        self.trees = _tree_orders(k)
        self._draw, self._radial = radial_sampler(phi, eps=eps_trunc)
        self._surface = self.d * unit_ball_volume(self.d)

    def _disp_density(self, dist: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._radial(dist) / (self._surface * dist ** (self.d - 1))
        return np.where(dist > 0, out, 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        k, d = self.k, self.d
        X = np.zeros((n, k, d))
        if k == 1:
            return X
        which = rng.integers(0, len(self.trees), size=n)
        for t, order in enumerate(self.trees):
            idx = np.flatnonzero(which == t)
            if len(idx) == 0:
                continue
            for parent, child in order:
                disp, _ = sample_displacements(self.phi, rng, len(idx),
                                               eps=self.eps_trunc)
                X[idx, child, :] = X[idx, parent, :] + disp
        return X

    def density(self, X: np.ndarray) -> np.ndarray:
        n, k, _ = X.shape
        if k == 1:
            return np.ones(n)
        iu = _pair_index(k)
        disp = X[:, iu[0], :] - X[:, iu[1], :]
        dist = np.sqrt(np.einsum("nij,nij->ni", disp, disp))
        dens_e = self._disp_density(dist)
        pair_col = {}
        for e, (i, j) in enumerate(zip(*iu)):
            pair_col[(int(i), int(j))] = e
            pair_col[(int(j), int(i))] = e
        total = np.zeros(n)
        for order in self.trees:
            prod = np.ones(n)
            for parent, child in order:
                prod = prod * dens_e[:, pair_col[(parent, child)]]
            total += prod
        return total / len(self.trees)


class AnchorProposal:
    """Second-cluster anchor around a uniformly chosen first-cluster point.

    The radial profile is the dominator profile widened by a factor
    large enough to cover every configuration where the two-cluster
    kernel is nonzero.
    """

    def __init__(self, phi: ConnectionFunction, widen: float,
                 eps_trunc: float = 1e-6):
        self.phi = phi
        self.d = phi.dim
        self.widen = widen
        self.eps_trunc = eps_trunc
        self._draw, self._radial = radial_sampler(phi, eps=eps_trunc,
                                                  widen=widen)
        self._surface = self.d * unit_ball_volume(self.d)

    def _disp_density(self, dist: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._radial(dist) / (self._surface * dist ** (self.d - 1))
        return np.where(dist > 0, out, 0.0)

    def sample(self, rng: np.random.Generator, X1: np.ndarray) -> np.ndarray:
        n, k, d = X1.shape
        pick = rng.integers(0, k, size=n)
        disp, _ = sample_displacements(self.phi, rng, n, eps=self.eps_trunc,
                                       widen=self.widen)
        return X1[np.arange(n), pick, :] + disp

    def density(self, X1: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        diff = anchor[:, None, :] - X1
        dist = np.sqrt(np.einsum("nij,nij->ni", diff, diff))
        return np.mean(self._disp_density(dist), axis=1)


def _is_anchor_lexmin(X: np.ndarray) -> np.ndarray:
    """True when vertex 0 of each cluster is its lexicographic minimum."""
    n, k, d = X.shape
    if k == 1:
        return np.ones(n, dtype=bool)
    strictly_greater = np.zeros((n, k - 1), dtype=bool)
    undecided = np.ones((n, k - 1), dtype=bool)
    for a in range(d):
        col = X[:, 1:, a] - X[:, 0:1, a]
        strictly_greater |= undecided & (col > 0)
        undecided &= col == 0
    return np.all(strictly_greater, axis=1)


def _lexmin_points(X: np.ndarray) -> np.ndarray:
    """The lexicographically smallest point of each sample's cluster.

    Continuous coordinates make first-coordinate ties a null event, so
    the first coordinate alone decides the minimum.
    """
    idx = np.argmin(X[:, :, 0], axis=1)
    return X[np.arange(len(X)), idx, :]


# ---------------------------------------------------------------------------
# Monte Carlo drivers

def _mc_estimate(weights: np.ndarray, scale: float) -> tuple[float, float]:
    n = len(weights)
    mean = float(np.mean(weights))
    se = float(np.std(weights, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return scale * mean, scale * se


def _cluster_pair_mc(phi, psi, beta, k, l, weight_fn, n_samples, seed,
                     eps_trunc=1e-6, chunk=20000):
    """Generic two-cluster importance-sampled integral.

    weight_fn(X1, X2) returns the integrand value per sample; the sorted
    indicators' combinatorial factors are applied here.
    """
    rng = np.random.default_rng(seed)
    prop1 = ClusterProposal(phi, k, eps_trunc)
    prop2 = ClusterProposal(psi, l, eps_trunc) if l >= 1 else None
    anchor = AnchorProposal(phi, widen=float(l + 2), eps_trunc=eps_trunc)
    factor = 1.0 / (math.factorial(k - 1) * math.factorial(l))
    weights = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X1 = prop1.sample(rng, m)
        a2 = anchor.sample(rng, X1)
        X2rel = prop2.sample(rng, m)
        X2 = X2rel + a2[:, None, :]
        dens = prop1.density(X1) * anchor.density(X1, a2) * prop2.density(X2rel)
        w = np.zeros(m)
        ok = _is_anchor_lexmin(X1) & (dens > 0)
        if ok.any():
            w[ok] = weight_fn(X1[ok], X2[ok]) * factor / dens[ok]
        weights[done:done + m] = w
        done += m
    scale = beta ** (k + l)
    return _mc_estimate(weights, scale)


def _single_cluster_mc(phi, beta, k, weight_fn, n_samples, seed,
                       eps_trunc=1e-6, chunk=40000):
    """Importance-sampled integral over one anchored cluster."""
    rng = np.random.default_rng(seed)
    prop = ClusterProposal(phi, k, eps_trunc)
    factor = 1.0 / math.factorial(k - 1)
    weights = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X = prop.sample(rng, m)
        dens = prop.density(X)
        w = np.zeros(m)
        ok = _is_anchor_lexmin(X) & (dens > 0)
        if ok.any():
            w[ok] = weight_fn(X[ok]) * factor / dens[ok]
        weights[done:done + m] = w
        done += m
    return _mc_estimate(weights, beta ** k)


# ---------------------------------------------------------------------------
# public operations

def is_lex_sorted(X: np.ndarray) -> bool:
    order = lex_order(X)
    return bool(np.all(order == np.arange(len(X))))


def p_phi_G(x, phi: ConnectionFunction, G: GraphClass) -> float:
    """Probability that the tuple forms a labeled copy of G, with the
    sorted-tuple indicator of the anchored counting convention."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    k = len(X)
    if k != G.order:
        raise ValueError("tuple length must match the class order")
    if k > ENUM_CAP:
        raise ValueError(f"order beyond enumeration cap {ENUM_CAP}")
    if len(np.unique(X, axis=0)) != k:
        raise ValueError("points must be distinct")
    if not is_lex_sorted(X):
        return 0.0
    pe = _pair_values(X[None, :, :], phi)
    return float(prob_isomorphic(pe, G)[0])


def p_phi_k(x, phi: ConnectionFunction) -> float:
    """Connectivity probability with the sorted-tuple indicator."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if not is_lex_sorted(X):
        return 0.0
    pe = _pair_values(X[None, :, :], phi)
    return float(prob_connected(pe, len(X))[0])


def expected_count_intensity(G: GraphClass, phi: ConnectionFunction,
                             beta: float, n_samples: int = 200000,
                             seed: int = 0) -> MomentEstimate:
    """Per-volume intensity rho_G of components isomorphic to G."""
    k = G.order
    if k > ENUM_CAP:
        raise ValueError(f"order beyond enumeration cap {ENUM_CAP}")
    trunc = phi.truncation_radius()
    if k == 1:
        return MomentEstimate(value=beta * math.exp(-beta * phi.m_phi),
                              std_error=0.0, n_samples=0,
                              truncation_radius=trunc, method="closed_form")

    def weight(X):
        pe = _pair_values(X, phi)
        e = mixed_exponent(X, [phi] * k, beta)
        return prob_isomorphic(pe, G) * np.exp(e)

    value, se = _single_cluster_mc(phi, beta, k, weight, n_samples, seed)
    return MomentEstimate(value=value, std_error=se, n_samples=n_samples,
                          truncation_radius=trunc, method="monte_carlo")


def window_overlap_volume(window: Window, x) -> float:
    """Volume of the window intersected with itself shifted by x."""
    x = np.asarray(x, dtype=float)
    if window.shape == "box":
        return float(np.prod(np.maximum(0.0, 2.0 * window.extent - np.abs(x))))
    t = float(np.linalg.norm(x))
    R = window.extent
    if t >= 2.0 * R:
        return 0.0
    d = window.dim
    if d == 1:
        return 2.0 * R - t
    if d == 2:
        return 2.0 * R ** 2 * math.acos(t / (2.0 * R)) \
            - 0.5 * t * math.sqrt(4.0 * R ** 2 - t ** 2)
    if d == 3:
        return math.pi * (4.0 * R + t) * (2.0 * R - t) ** 2 / 12.0
    raise NotImplementedError("ball overlap volume for d > 3")


def finite_window_cross_moment(G: GraphClass, H: GraphClass,
                               phi: ConnectionFunction,
                               psi: ConnectionFunction,
                               window: Window, beta: float,
                               n_samples: int = 200000,
                               seed: int = 0) -> MomentEstimate:
    """E[count_G under phi * count_H under psi] on the same window.

    First term: distinct tuples, weighted by the overlap volume of the
    window with its shift. Second term (equal orders): shared tuple with
    the coupled joint class probability.
    """
    if not phi.dominates(psi):
        raise ValueError("psi must be dominated by phi")
    k, l = G.order, H.order
    trunc = phi.truncation_radius()

    def weight_pair(X1, X2):
        pe1 = _pair_values(X1, phi)
        p1 = prob_isomorphic(pe1, G)
        pe2 = _pair_values(X2, psi)
        p2 = prob_isomorphic(pe2, H)
        n = len(X1)
        cross = np.ones(n)
        for i in range(k):
            disp = X2 - X1[:, i: i + 1, :]
            dist = np.sqrt(np.einsum("nij,nij->ni", disp, disp))
            cross *= np.prod(1.0 - phi.phi_of_dist(dist), axis=1)
        e = mixed_exponent(np.concatenate([X1, X2], axis=1),
                           [phi] * k + [psi] * l, beta)
        # the counted anchor of the second cluster is its lexicographic
        # minimum, and the overlap weight is evaluated there
        ov = np.array([window_overlap_volume(window, x)
                       for x in _lexmin_points(X2)])
        return p1 * p2 * cross * np.exp(e) * ov

    # the anchor of the second cluster ranges over the whole difference
    # body of the window, not just near the first cluster: sample it
    # uniformly over the bounding box of the difference body
    rng = np.random.default_rng(seed)
    prop1 = ClusterProposal(phi, k)
    prop2 = ClusterProposal(psi, l)
    half = 2.0 * window.extent
    d = window.dim
    box_vol = (2.0 * half) ** d
    factor = 1.0 / (math.factorial(k - 1) * math.factorial(l))
    weights = np.empty(n_samples)
    done = 0
    chunk = 20000
    while done < n_samples:
        m = min(chunk, n_samples - done)
        X1 = prop1.sample(rng, m)
        a2 = rng.uniform(-half, half, size=(m, d))
        X2 = prop2.sample(rng, m) + a2[:, None, :]
        dens = prop1.density(X1) * prop2.density(X2 - a2[:, None, :]) / box_vol
        w = np.zeros(m)
        ok = _is_anchor_lexmin(X1) & (dens > 0)
        if ok.any():
            w[ok] = weight_pair(X1[ok], X2[ok]) * factor / dens[ok]
        weights[done:done + m] = w
        done += m
    v1, se1 = _mc_estimate(weights, beta ** (k + l))

    v2, se2 = 0.0, 0.0
    if k == l:
        def weight_diag(X):
            pe_phi = _pair_values(X, phi)
            pe_psi = _pair_values(X, psi)
            joint = joint_prob_coupled(pe_phi, pe_psi, G, H)
            e = mixed_exponent(X, [phi] * k, beta)
            return joint * np.exp(e)

        v2, se2 = _single_cluster_mc(phi, beta, k, weight_diag,
                                     max(n_samples // 2, 1000), seed + 1)
        v2 *= window.volume
        se2 *= window.volume
    return MomentEstimate(value=v1 + v2,
                          std_error=math.hypot(se1, se2),
                          n_samples=n_samples, truncation_radius=trunc,
                          method="monte_carlo")


def _asy_cov_generic(phi, psi, beta, k, l, prob1, prob2, diag_prob,
                     n_samples, seed) -> MomentEstimate:
    """Common driver for the asymptotic covariance integrals.

    prob1/prob2 map per-pair probability arrays to cluster probabilities;
    diag_prob maps (pe_phi, pe_psi) to the shared-tuple probability, or
    is None when k != l.
    """
    trunc = phi.truncation_radius()

    def weight_pair(X1, X2):
        p1 = prob1(_pair_values(X1, phi))
        p2 = prob2(_pair_values(X2, psi))
        return p1 * p2 * q_kl(X1, X2, phi, psi, beta)

    v1, se1 = _cluster_pair_mc(phi, psi, beta, k, l, weight_pair,
                               n_samples, seed)
    v2, se2 = 0.0, 0.0
    if k == l and diag_prob is not None:
        def weight_diag(X):
            p = diag_prob(_pair_values(X, phi), _pair_values(X, psi))
            e = mixed_exponent(X, [phi] * k, beta)
            return p * np.exp(e)

        v2, se2 = _single_cluster_mc(phi, beta, k, weight_diag,
                                     max(n_samples // 2, 1000), seed + 1)
    return MomentEstimate(value=v1 + v2, std_error=math.hypot(se1, se2),
                          n_samples=n_samples, truncation_radius=trunc,
                          method="monte_carlo")


def asy_cov(G: GraphClass, H: GraphClass, phi: ConnectionFunction,
            psi: ConnectionFunction, beta: float,
            n_samples: int = 200000, seed: int = 0) -> MomentEstimate:
    """Asymptotic covariance per unit volume of the two class counts."""
    if not phi.dominates(psi):
        raise ValueError("psi must be dominated by phi")
    k, l = G.order, H.order
    if max(k, l) > ENUM_CAP:
        raise ValueError(f"order beyond enumeration cap {ENUM_CAP}")
    return _asy_cov_generic(
        phi, psi, beta, k, l,
        prob1=lambda pe: prob_isomorphic(pe, G),
        prob2=lambda pe: prob_isomorphic(pe, H),
        diag_prob=(lambda a, b: joint_prob_coupled(a, b, G, H))
        if k == l else None,
        n_samples=n_samples, seed=seed)


def asy_cov_kl(k: int, l: int, phi: ConnectionFunction,
               psi: ConnectionFunction, beta: float,
               n_samples: int = 200000, seed: int = 0) -> MomentEstimate:
    """Asymptotic covariance per unit volume of the two order counts.

    The shared-tuple term requires both coupled graphs to be connected;
    with nested edge sets that event is connectivity of the sparser
    graph, so the diagonal uses the psi connectivity probability.
    """
    if not phi.dominates(psi):
        raise ValueError("psi must be dominated by phi")
    if max(k, l) > ENUM_CAP:
        raise ValueError(f"order beyond enumeration cap {ENUM_CAP}")
    return _asy_cov_generic(
        phi, psi, beta, k, l,
        prob1=lambda pe: prob_connected(pe, k),
        prob2=lambda pe: prob_connected(pe, l),
        diag_prob=(lambda a, b: prob_connected(b, k)) if k == l else None,
        n_samples=n_samples, seed=seed)


def asy_var_quadratic(a, classes, phi: ConnectionFunction, beta: float,
                      n_samples: int = 200000, seed: int = 0):
    """Quadratic form sum_ij a_i a_j sigma(G_i, G_j) with its error.

    Returns (estimate, matrix, matrix_errors).
    """
    a = np.asarray(a, dtype=float)
    classes = list(classes)
    if not np.any(a != 0):
        raise ValueError("weights must not all vanish")
    if len(a) != len(classes):
        raise ValueError("weight and class lists differ in length")
    m = len(classes)
    mat = np.zeros((m, m))
    err = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            est = asy_cov(classes[i], classes[j], phi, phi, beta,
                          n_samples=n_samples, seed=seed + 97 * (i * m + j))
            mat[i, j] = mat[j, i] = est.value
            err[i, j] = err[j, i] = est.std_error
    value = float(a @ mat @ a)
    var = 0.0
    for i in range(m):
        for j in range(i, m):
            mult = (a[i] * a[j]) if i == j else (2.0 * a[i] * a[j])
            var += (mult * err[i, j]) ** 2
    estimate = MomentEstimate(value=value, std_error=math.sqrt(var),
                              n_samples=n_samples,
                              truncation_radius=phi.truncation_radius(),
                              method="monte_carlo")
    return estimate, mat, err


def sigma_total_partial(m: int, phi: ConnectionFunction, beta: float,
                        n_samples: int = 200000, seed: int = 0):
    """Partial sums sum_{i,j<=m'} sigma^(i,j) for m' = 1..m.

    Returns (estimate_of_level_m, list_of_partial_sum_estimates).
    """
    if m > ENUM_CAP:
        raise ValueError(f"order beyond enumeration cap {ENUM_CAP}")
    terms = {}
    for i in range(1, m + 1):
        for j in range(i, m + 1):
            est = asy_cov_kl(i, j, phi, phi, beta, n_samples=n_samples,
                             seed=seed + 131 * (i * (m + 1) + j))
            terms[(i, j)] = est
    partials = []
    for level in range(1, m + 1):
        total, var = 0.0, 0.0
        for i in range(1, level + 1):
            for j in range(i, level + 1):
                mult = 1.0 if i == j else 2.0
                total += mult * terms[(i, j)].value
                var += (mult * terms[(i, j)].std_error) ** 2
        partials.append(MomentEstimate(
            value=total, std_error=math.sqrt(var), n_samples=n_samples,
            truncation_radius=phi.truncation_radius(), method="monte_carlo"))
    return partials[-1], partials
