"""Domain geometry, lemma campaigns, DP estimator, and dyadic-data points."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadlab.tree import DomainError, DyadicIndex, LeafFunction, ROOT
from dyadlab.weights import Weight, a2_characteristic, gen_cascade
from dyadlab.bellman import (
    BellmanPoint,
    DpEstimator,
    NodeSplit,
    OmegaDomain,
    barycenter_lemma_check,
    calibrate_gain,
    dp_estimate,
    in_domain,
    node_defect,
    node_pattern_check,
    point_from_data,
    run_barycenter_campaign,
    run_triangle_campaign,
    sample_omega,
    segment_in_domain,
    segment_max_uv,
    triangle_lemma_check,
    tree_sum_ratio,
)


def strip_point(u, v, big=1e6):
    return BellmanPoint(X=big, Y=big, x=0.0, y=0.0, u=u, v=v)


class TestInDomain:
    def test_base_point(self):
        assert in_domain(BellmanPoint(1, 1, 0, 0, 1, 1), Q=1.0)

    def test_cap_violation(self):
        assert not in_domain(BellmanPoint(1, 1, 2, 0, 1, 1), Q=100.0)

    def test_uv_boundary_inclusive(self):
        assert in_domain(BellmanPoint(10, 10, 1, 1, 2.0, 1.5), Q=3.0)
        assert not in_domain(BellmanPoint(10, 10, 1, 1, 2.0, 1.5), Q=2.9)

    def test_nonpositive_rejected(self):
        assert not in_domain(BellmanPoint(0.0, 1, 0, 0, 1, 1), Q=2.0)
        assert not in_domain(BellmanPoint(1, 1, 0, 0, -1, -1), Q=2.0)

    def test_bad_q(self):
        with pytest.raises(DomainError):
            in_domain(BellmanPoint(1, 1, 0, 0, 1, 1), Q=0.5)
        with pytest.raises(DomainError):
            OmegaDomain(Q=0.5)


class TestSegmentInDomain:
    def test_degenerate(self):
        p = BellmanPoint(1, 1, 0, 0, 1, 1)
        assert segment_in_domain(p, p, Q=2.0)

    def test_hyperbola_midpoint(self):
        # endpoints on uv = Q; the midpoint product (1+Q)^2/4 decides
        Q = 3.0
        p = strip_point(1.0, Q)
        q = strip_point(Q, 1.0)
        assert not segment_in_domain(p, q, Q=3.0)
        assert segment_in_domain(p, q, Q=4.0)
        assert segment_max_uv(p, q) == pytest.approx((1.0 + Q) ** 2 / 4.0)

    def test_monotone_uv_segments(self):
        rng = np.random.default_rng(0)
        Q = 5.0
        for _ in range(200):
            u0, v0 = np.exp(rng.uniform(-1, 1, 2))
            fu, fv = np.exp(rng.uniform(0.0, 0.3, 2))
            uv0 = max(u0 * v0, 1.0 / (u0 * v0))
            u0, v0 = np.sqrt(uv0) * u0 / np.sqrt(u0 * v0), np.sqrt(uv0) * v0 / np.sqrt(u0 * v0)
            u1, v1 = u0 * fu, v0 * fv
            if u1 * v1 > Q or u0 * v0 > Q:
                continue
            assert segment_in_domain(strip_point(u0, v0), strip_point(u1, v1), Q)

    @staticmethod
    def dense_violation(pa, qa, Q, n_samples=2001):
        """Worst constraint violation along the segment, by brute sampling."""
        ts = np.linspace(0.0, 1.0, n_samples)[:, None]
        pts = pa[None, :] + ts * (qa - pa)[None, :]
        X, Y, x, y, u, v = (pts[:, i] for i in range(6))
        viol = np.max([
            np.max(x * x - X * v),
            np.max(y * y - Y * u),
            np.max(u * v - Q),
            np.max(1.0 - u * v),
        ])
        return float(viol)

    @given(st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_matches_dense_sampling(self, seed):
        rng = np.random.default_rng(seed)
        Q = 6.0
        P = sample_omega(Q, 2, rng)
        p = BellmanPoint.from_array(P[0])
        q = BellmanPoint.from_array(P[1])
        tol = 1e-9
        closed = segment_in_domain(p, q, Q, tol=tol)
        dense = self.dense_violation(P[0], P[1], Q)
        # sampling resolves the quadratic vertex up to curvature * (dt/2)^2;
        # skip cases inside that band instead of misreporting them
        band = 1e-6 * (1.0 + float(np.max(np.abs(P))) ** 2)
        if abs(dense - tol) > band:
            assert closed == (dense <= tol)


class TestSampling:
    def test_members(self):
        rng = np.random.default_rng(1)
        P = sample_omega(8.0, 5000, rng)
        for row in P:
            assert in_domain(BellmanPoint.from_array(row), 8.0, tol=1e-9)

    def test_boundary_coverage(self):
        rng = np.random.default_rng(2)
        P = sample_omega(8.0, 5000, rng)
        X, Y, x, y, u, v = (P[:, i] for i in range(6))
        on_cap = np.isclose(x * x, X * v, rtol=1e-9)
        assert np.mean(on_cap) > 0.05


class TestTriangleLemma:
    def test_degenerate(self):
        p = BellmanPoint(1, 1, 0, 0, 1, 1)
        rep = triangle_lemma_check(p, p, p, Q=2.0)
        assert not rep.vacuous
        assert rep.min_k_holding == 1.0

    def test_vacuous_premises(self):
        # C and mid(A, B) straddle the hyperbola so [C, M] leaves the domain
        Q = 2.0
        A = strip_point(1.0, Q)
        B = strip_point(Q, 1.0)
        C = strip_point(np.sqrt(Q), np.sqrt(Q))
        rep = triangle_lemma_check(A, B, C, Q=Q)
        assert rep.vacuous

    def test_campaign_small(self):
        rep = run_triangle_campaign(Q=4.0, valid_trials=2000, seed=0)
        assert rep.violations == 0
        assert rep.max_needed_k <= 4.5
        assert rep.trials_valid == 2000

    def test_campaign_json_schema(self):
        rep = run_triangle_campaign(Q=2.0, valid_trials=500, seed=1)
        j = rep.to_json()
        for key in ("lemma", "trials", "vacuous", "min_k_holding",
                    "worst_case_point", "violations"):
            assert key in j


class TestBarycenterLemma:
    def test_all_equal(self):
        p = BellmanPoint(2, 2, 1, 1, 1.5, 1.0)
        rep = barycenter_lemma_check(p, p, p, p, Q=2.0)
        assert not rep.vacuous
        assert rep.min_k_holding == 1.0

    def test_vacuous_outside(self):
        p = BellmanPoint(1, 1, 0, 0, 1, 1)
        bad = BellmanPoint(1, 1, 5, 0, 1, 1)
        rep = barycenter_lemma_check(p, p, p, bad, Q=2.0)
        assert rep.vacuous

    def test_campaign_small(self):
        rep = run_barycenter_campaign(Q=4.0, valid_trials=2000, seed=0)
        assert rep.violations == 0
        assert rep.max_needed_k <= 40.0


class TestNodeSplit:
    def build_split(self, seed, Q=4.0):
        rng = np.random.default_rng(seed)
        pts = sample_omega(Q, 4, rng)
        return NodeSplit.from_grandchildren(*[BellmanPoint.from_array(p) for p in pts])

    def test_midpoint_coherence(self):
        s = self.build_split(0)
        mid = lambda a, b: (a.as_array() + b.as_array()) / 2.0
        assert np.allclose(s.b.as_array(), mid(s.b_plus, s.b_minus))
        assert np.allclose(s.b_plus.as_array(), mid(s.b_pp, s.b_pm))
        assert np.allclose(s.b_minus.as_array(), mid(s.b_mp, s.b_mm))

    def test_increments(self):
        s = self.build_split(1)
        assert s.alpha == pytest.approx(s.b_plus.x - s.b.x)
        assert s.delta1 == pytest.approx(s.b_pp.y - s.b_plus.y)

    def test_pattern_check_members(self):
        for seed in range(50):
            s = self.build_split(seed)
            out = node_pattern_check(s, Q=4.0)
            if out["members"]:
                assert out["child_segments_2Q"]
                assert out["grandchild_segments_40Q"]

    def test_node_defect_zero_increments(self):
        p = BellmanPoint(2, 2, 0.5, 0.5, 1.5, 1.0)
        s = NodeSplit.from_grandchildren(p, p, p, p)
        d, rhs, c = node_defect(s, Q=2.0, evaluator=lambda q: q.X + q.Y)
        assert d == 0.0
        assert rhs == 0.0
        assert c is None

    def test_node_defect_rejects_outsiders(self):
        p = BellmanPoint(1, 1, 5.0, 0, 1, 1)
        s = NodeSplit.from_grandchildren(p, p, p, p)
        with pytest.raises(DomainError):
            node_defect(s, Q=2.0, evaluator=lambda q: 0.0)


class TestDpEstimator:
    BASE = BellmanPoint(1.0, 1.0, 0.0, 0.0, 1.0, 1.0)

    def test_depth_zero(self):
        rng = np.random.default_rng(3)
        for row in sample_omega(4.0, 20, rng):
            assert dp_estimate(BellmanPoint.from_array(row), 4.0, 0, 4, 0) == 0.0

    def test_analytic_depth_one(self):
        assert dp_estimate(self.BASE, 2.0, 1, 4, 0) == pytest.approx(1.0)

    def test_monotone_in_depth(self):
        rng = np.random.default_rng(4)
        est = DpEstimator(Q=4.0, samples=4, seed=0)
        for row in sample_omega(4.0, 10, rng):
            p = BellmanPoint.from_array(row)
            vals = [est.estimate(p, d) for d in range(5)]
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_monotone_in_samples(self):
        rng = np.random.default_rng(5)
        for row in sample_omega(4.0, 5, rng):
            p = BellmanPoint.from_array(row)
            vals = [DpEstimator(Q=4.0, samples=s, seed=0).estimate(p, 3)
                    for s in (2, 4, 8)]
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_swap_symmetry(self):
        rng = np.random.default_rng(6)
        for row in sample_omega(4.0, 8, rng):
            p = BellmanPoint.from_array(row)
            a = dp_estimate(p, 4.0, 3, 4, 0)
            b = dp_estimate(p.swapped(), 4.0, 3, 4, 0)
            assert a == pytest.approx(b, rel=1e-12)

    def test_rejects_outsider(self):
        with pytest.raises(DomainError):
            dp_estimate(BellmanPoint(1, 1, 5, 0, 1, 1), 2.0, 2, 4, 0)

    def test_b1_ratio_finite(self):
        rng = np.random.default_rng(7)
        est = DpEstimator(Q=4.0, samples=4, seed=0)
        for row in sample_omega(4.0, 5, rng):
            r = est.b1_ratio(BellmanPoint.from_array(row), 4)
            assert np.isfinite(r) and r >= 0.0


class TestPointFromData:
    def test_trivial(self):
        w = Weight.from_values([1.0] * 4)
        one = LeafFunction.constant(2, 1.0)
        point, local = point_from_data(one, one, w, ROOT)
        assert point == BellmanPoint(1, 1, 1, 1, 1, 1)
        assert local == 0.0

    def test_always_in_domain(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            depth = int(rng.integers(1, 7))
            w = gen_cascade(depth, 0.8, int(rng.integers(10**6)))
            q = a2_characteristic(w).characteristic
            phi = LeafFunction(rng.standard_normal(1 << depth))
            psi = LeafFunction(rng.standard_normal(1 << depth))
            lev = int(rng.integers(0, depth + 1))
            J = DyadicIndex(lev, int(rng.integers(0, 1 << lev)))
            point, _ = point_from_data(phi, psi, w, J)
            assert in_domain(point, q, tol=1e-9 * max(point.X, point.Y, 1.0))

    def test_calibration_report(self):
        w = gen_cascade(3, 0.6, seed=9)
        rng = np.random.default_rng(9)
        phi = LeafFunction(rng.standard_normal(8))
        psi = LeafFunction(rng.standard_normal(8))
        rep = calibrate_gain(phi, psi, w, ROOT, samples=4, seed=0)
        assert set(rep) == {"local_sum", "dp_estimate", "ratio", "dp_depth"}
        assert rep["dp_depth"] == 3
        assert np.isfinite(rep["ratio"])


class TestTreeSumRatio:
    def test_constant_inputs(self):
        w = gen_cascade(4, 0.5, seed=10)
        one = LeafFunction.constant(4, 1.0)
        lhs, rhs0, ratio = tree_sum_ratio(one, one, w, ROOT)
        assert lhs == 0.0
        assert ratio == 0.0

    def test_ratio_below_one_sampled(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            depth = int(rng.integers(2, 7))
            w = gen_cascade(depth, 0.8, int(rng.integers(10**6)))
            f1 = LeafFunction(rng.standard_normal(1 << depth))
            f2 = LeafFunction(rng.standard_normal(1 << depth))
            _, _, ratio = tree_sum_ratio(f1, f2, w, ROOT)
            worst = max(worst, ratio)
        assert worst <= 1.0
