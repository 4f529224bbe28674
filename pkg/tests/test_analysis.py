"""Functionals, difference operators, variance bounds, distances."""

import math

import numpy as np
import pytest
from scipy import stats

from rcmlab.analysis import (DifferenceSample, EvaluationContext,
                             FunctionalSpec, Standardization,
                             birth_time_variance, cluster_tail,
                             connects_to_window, degree_with_additions,
                             difference, dkw_bound, empirical_distance,
                             evaluate, fourth_moment_bound, gamma_terms,
                             hops_between, pilot_standardization,
                             poincare_bound, second_difference)
from rcmlab.census import census, edge_class, single_vertex_class
from rcmlab.connection import ConnectionFunction
from rcmlab.geometry import Window
from rcmlab.marks import PairMarkSource
from rcmlab.sampling import PointSet, build_rcm, sample_poisson

GILBERT = ConnectionFunction("gilbert", 2, r=1.0)
W = Window("box", 3.0, 2)


def _graph(seed, spec, beta=1.0):
    pts = sample_poisson(spec.window, spec.padding(), beta, seed)
    return build_rcm(pts, spec.phi, PairMarkSource(seed))


def _empty_graph(spec):
    region = spec.window.pad(spec.padding())
    pts = PointSet(points=np.empty((0, 2)), seed=0, region=region, beta=1.0)
    return build_rcm(pts, spec.phi, PairMarkSource(0))


def test_spec_validation_and_padding():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=3)
    assert spec.padding() == pytest.approx(4.0)
    assert FunctionalSpec("point_count", W, GILBERT, 1.0).padding() == 0.0
    assert FunctionalSpec("total_components", W, GILBERT, 1.0,
                          k_max=5).padding() == pytest.approx(6.0)


def test_evaluate_matches_census():
    spec1 = FunctionalSpec("count_order", W, GILBERT, 1.0, k=1)
    spec2 = FunctionalSpec("count_class", W, GILBERT, 1.0, cls=edge_class())
    spec3 = FunctionalSpec("total_components", W, GILBERT, 1.0)
    for seed in range(10):
        g = _graph(seed, spec3)
        rep = census(g, W, k_max=5)
        assert evaluate(spec1, g) == rep.eta_k(1)
        assert evaluate(spec2, g) == rep.eta_G(edge_class())
        assert evaluate(spec3, g) == rep.alpha


def test_difference_isolated_vertex_on_empty_sample():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=1)
    g = _empty_graph(spec)
    assert difference(spec, g, np.array([0.0, 0.0])) == 1.0
    # outside the window: the new isolated vertex is not counted
    assert difference(spec, g, np.array([3.5, 0.0])) == 0.0


def test_difference_far_point_is_local():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=2)
    for seed in range(5):
        g = _graph(seed, spec)
        # far outside every interaction range and outside W
        assert difference(spec, g, np.array([60.0, 60.0])) == 0.0


def test_difference_duplicate_point_rejected():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=1)
    g = _graph(3, spec)
    with pytest.raises(ValueError):
        second_difference(spec, g, g.points.points[0], g.points.points[0])


def test_second_difference_independent_insertions():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=1)
    g = _empty_graph(spec)
    s = second_difference(spec, g, np.array([0.0, 0.0]),
                          np.array([2.5, 2.5]))
    assert s.second == 0.0
    assert s.delta_x == 1.0 and s.delta_y == 1.0


def test_second_difference_symmetry():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=2)
    rng = np.random.default_rng(4)
    for seed in range(20):
        g = _graph(seed, spec)
        x = rng.uniform(-4, 4, 2)
        y = rng.uniform(-4, 4, 2)
        a = second_difference(spec, g, x, y)
        b = second_difference(spec, g, y, x)
        assert a.second == pytest.approx(b.second)


def test_difference_against_full_recount():
    """Incremental insertion agrees with a from-scratch rebuild."""
    spec = FunctionalSpec("total_components", W, GILBERT, 1.0)
    rng = np.random.default_rng(7)
    for seed in range(10):
        g = _graph(seed, spec)
        x = rng.uniform(-5, 5, 2)
        ctx = EvaluationContext(g, spec)
        incremental = ctx.value_with_additions([(x, -1)])
        # rebuild: every pair re-tested with the same marks
        pts = g.points.points
        n = len(pts)
        allp = np.vstack([pts, x[None]])
        ids = list(range(n)) + [-1]
        from rcmlab.census import UnionFind
        uf = UnionFind(n + 1)
        for a in range(n + 1):
            for b in range(a + 1, n + 1):
                d = float(np.linalg.norm(allp[a] - allp[b]))
                if d <= g.rmax and \
                        g.marks.mark(ids[a], ids[b]) <= GILBERT.phi_of_dist(d):
                    uf.union(a, b)
        comps = {}
        for v in range(n + 1):
            comps.setdefault(uf.find(v), []).append(v)
        region = g.points.region
        val = 0.0
        for members in comps.values():
            P = allp[members]
            if np.min(region.boundary_distance(P)) < g.rmax:
                continue
            val += float(np.all(W.contains(P)))
        assert incremental == pytest.approx(val)


def test_per_sample_difference_bounds():
    """Degree-based envelopes for first and second differences."""
    a = (1.0, -2.0)
    classes = (single_vertex_class(), edge_class())
    spec = FunctionalSpec("weighted", W, GILBERT, 1.0, a=a, classes=classes)
    a_inf = 2.0
    k = 2
    rng = np.random.default_rng(0)
    for seed in range(60):
        g = _graph(seed, spec)
        x = rng.uniform(-4.5, 4.5, 2)
        y = rng.uniform(-4.5, 4.5, 2)
        d = difference(spec, g, x)
        degx = degree_with_additions(g, [(x, -1)], -1)
        indx = connects_to_window(g, [(x, -1)], -1, k, W)
        assert abs(d) <= a_inf * (degx + 1) * indx + 1e-9
        s = second_difference(spec, g, x, y)
        degy = degree_with_additions(g, [(y, -2)], -2)
        hop = hops_between(g, [(x, -1), (y, -2)], -1, -2, k + 1)
        indy = connects_to_window(g, [(y, -2)], -2, k, W)
        assert abs(s.second) <= \
            a_inf * (2 * degy + 3) * hop * max(indx, indy) + 1e-9


def test_poincare_pure_count_exact():
    spec = FunctionalSpec("point_count", Window("box", 2.0, 2), GILBERT, 1.0)
    est = poincare_bound(spec, n_outer=150, n_points=20, seed=0)
    # Delta_x F = 1{x in W}; the bound equals beta * volume
    assert abs(est.value - 16.0) <= 3.0 * est.std_error


def test_poincare_error_scaling():
    spec = FunctionalSpec("count_order", Window("box", 2.0, 2), GILBERT,
                          1.0, k=1)
    a = poincare_bound(spec, n_outer=100, n_points=10, seed=1)
    b = poincare_bound(spec, n_outer=400, n_points=10, seed=2)
    assert b.std_error < a.std_error


def test_poincare_budget_validation():
    spec = FunctionalSpec("count_order", W, GILBERT, 1.0, k=1)
    with pytest.raises(ValueError):
        poincare_bound(spec, n_outer=1)


def test_birth_time_pure_count_exact():
    w = Window("box", 1.5, 2)
    spec = FunctionalSpec("point_count", w, GILBERT, 1.0)
    est = birth_time_variance(spec, n_outer=100, n_inner=8, seed=0)
    assert est.value == pytest.approx(w.volume)
    assert est.std_error == pytest.approx(0.0)


def test_birth_time_budget_and_cap():
    w = Window("box", 1.5, 2)
    spec = FunctionalSpec("point_count", w, GILBERT, 1.0)
    with pytest.raises(ValueError):
        birth_time_variance(spec, n_outer=10, n_inner=2)
    big = FunctionalSpec("count_order", Window("box", 20.0, 2), GILBERT,
                         1.0, k=1)
    with pytest.raises(ValueError):
        birth_time_variance(big, n_outer=10, n_inner=8)


def test_standardization_rejects_zero_variance():
    with pytest.raises(ValueError):
        Standardization(mean=0.0, variance=0.0)


def test_gamma_pure_count_oracle():
    w = Window("box", 3.0, 2)
    spec = FunctionalSpec("point_count", w, GILBERT, 1.0)
    std = Standardization(mean=w.volume, variance=w.volume,
                          source="analytic")
    g = gamma_terms(spec, std, n_outer=120, n_inner=8, seed=5)
    # linear functional: second differences vanish identically
    assert g["gamma1"].value == 0.0
    assert g["gamma2"].value == 0.0
    assert g["gamma6"].value == 0.0
    expect = (w.volume) ** -0.5
    assert abs(g["gamma3"].value - expect) <= \
        3.0 * g["gamma3"].std_error + 1e-12


def test_gamma_budget_validation():
    spec = FunctionalSpec("point_count", W, GILBERT, 1.0)
    std = Standardization(mean=36.0, variance=36.0)
    with pytest.raises(ValueError):
        gamma_terms(spec, std, n_inner=2)


def test_fourth_moment_bound_holds_empirically():
    spec = FunctionalSpec("count_order", Window("box", 2.5, 2), GILBERT,
                          1.0, k=1)
    std = pilot_standardization(spec, n_reps=200, seed=3)
    bound = fourth_moment_bound(spec, std, n_outer=80, n_inner=8, seed=4)
    sd = math.sqrt(std.variance)
    vals = np.array([(evaluate(spec, _graph(900 + s, spec)) - std.mean) / sd
                     for s in range(300)])
    ef4 = float(np.mean(vals ** 4))
    se4 = float(np.std(vals ** 4, ddof=1) / math.sqrt(len(vals)))
    assert ef4 <= bound.value + 3.0 * math.hypot(se4, bound.std_error)


def test_cluster_tail_degree_lower_bound():
    beta = 1.0
    est = cluster_tail(GILBERT, beta, 1, n_samples=800, seed=6)
    floor = 1.0 - math.exp(-beta * GILBERT.m_phi)
    assert est.upper.value >= est.lower.value
    assert est.upper.value >= floor - 3.0 * est.upper.std_error


def test_cluster_tail_monotone_in_m():
    beta = 0.5 / math.pi
    vals = [cluster_tail(GILBERT, beta, m, n_samples=600, seed=7).upper.value
            for m in (1, 2, 4)]
    assert vals[0] >= vals[1] >= vals[2]


def test_empirical_distance_kolmogorov_exact():
    with pytest.raises(ValueError):
        empirical_distance(np.array([0.0]), "kolmogorov")
    z = np.array([-1.0, 0.0, 1.0])
    n = 3
    xs = np.sort(z)
    expect = max(max(abs((i + 1) / n - stats.norm.cdf(x)),
                     abs(i / n - stats.norm.cdf(x)))
                 for i, x in enumerate(xs))
    assert empirical_distance(z, "kolmogorov") == pytest.approx(expect)


def test_empirical_distance_gaussian_sample():
    rng = np.random.default_rng(8)
    z = rng.normal(size=4000)
    dk = empirical_distance(z, "kolmogorov")
    assert dk < dkw_bound(4000)
    w1 = empirical_distance(z, "wasserstein")
    assert w1 < 0.06


def test_empirical_distance_detects_shift():
    rng = np.random.default_rng(9)
    z = rng.normal(loc=1.0, size=2000)
    assert empirical_distance(z, "kolmogorov") > 0.3
    assert empirical_distance(z, "wasserstein") == pytest.approx(1.0,
                                                                 abs=0.1)


def test_dkw_bound_formula():
    n, conf = 1000, 0.99
    expect = math.sqrt(math.log(2.0 / (1.0 - conf)) / (2.0 * n))
    assert dkw_bound(n, conf) == pytest.approx(expect)


def test_difference_sample_properties():
    s = DifferenceSample(base=1.0, with_x=3.0, with_y=0.0, with_xy=2.5)
    assert s.delta_x == 2.0
    assert s.delta_y == -1.0
    assert s.second == pytest.approx(0.5)
