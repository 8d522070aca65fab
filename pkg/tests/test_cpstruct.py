"""Caratheodory-Pesin covers, critical values, weighted LP, Frostman checks."""

import math
from fractions import Fraction

import numpy as np
import pytest

from flowdim.bowen import BowenSpec, CloudSpec, PointCloud, full_enumeration_cloud
from flowdim.cpstruct import (
    WeightedCPInstance,
    bowen_mdim_subset,
    build_cp_instance,
    cp_critical,
    cp_outer,
    frostman_check,
    weighted_outer,
)
from flowdim.errors import CapacityError, FeasibilityError, SchemaError
from flowdim.measures import MeasureModel
from flowdim.mdim import entropy_at_scale
from flowdim.systems import FlowPoint, SystemDescriptor, make_system

from test_systems import shift2, word_point


def bern():
    return MeasureModel(kind="bernoulli", p=(0.5, 0.5))


class TestCpOuter:
    def test_forced_single_ball(self):
        s = shift2(W=4)
        Z = PointCloud(s, [s.zero_point()])
        inst = build_cp_instance(s, Z, 0.4, 3, 3)
        val, kind, wit, _ = cp_outer(inst, 0.7, mode="exact")
        assert float(val) == pytest.approx(math.exp(-3 * 0.7))
        assert kind == "exact" and len(wit) == 1

    def test_lambda_zero_counts_balls(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        inst = build_cp_instance(s, Z, 0.4, 1, 1)
        val, _, _, _ = cp_outer(inst, 0.0, mode="exact")
        assert float(val) == 4.0

    def test_identity_membership(self):
        # DERIVED: each order-1 ball at eps=0.4 contains only its center,
        # so the cover is forced and the value is 4 e^{-0.5}
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        inst = build_cp_instance(s, Z, 0.4, 1, 1)
        assert np.array_equal(inst.membership, np.eye(4, dtype=bool))
        val, _, _, _ = cp_outer(inst, 0.5, mode="exact")
        assert float(val) == pytest.approx(4 * math.exp(-0.5))

    def test_monotone_in_N_floor(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        lams = (0.2, 0.5, 0.9)
        for lam in lams:
            v1, _, _, _ = cp_outer(build_cp_instance(s, Z, 0.4, 1, 3), lam, mode="exact")
            v2, _, _, _ = cp_outer(build_cp_instance(s, Z, 0.4, 2, 3), lam, mode="exact")
            assert float(v1) <= float(v2) + 1e-12

    def test_decreasing_in_lambda(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        inst = build_cp_instance(s, Z, 0.4, 1, 3)
        vals = [float(cp_outer(inst, lam, mode="exact")[0]) for lam in (0.1, 0.4, 0.8)]
        assert vals[0] > vals[1] > vals[2]

    def test_nonincreasing_in_epsilon(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        v_small = float(cp_outer(build_cp_instance(s, Z, 0.3, 1, 3), 0.5, mode="exact")[0])
        v_big = float(cp_outer(build_cp_instance(s, Z, 0.6, 1, 3), 0.5, mode="exact")[0])
        assert v_big <= v_small + 1e-12

    def test_greedy_upper_bounds_exact(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 2)
        inst = build_cp_instance(s, Z, 0.4, 1, 2)
        for lam in (0.2, 0.6):
            vg, _, _, _ = cp_outer(inst, lam, mode="greedy")
            ve, _, _, _ = cp_outer(inst, lam, mode="exact")
            assert float(ve) <= float(vg) + 1e-12

    def test_exact_cap(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 4)
        inst = build_cp_instance(s, Z, 0.4, 1, 2)
        with pytest.raises(CapacityError):
            cp_outer(inst, 0.5, mode="exact")


class TestCpCritical:
    def test_singleton_zero(self):
        s = shift2(W=4)
        Z = PointCloud(s, [s.zero_point()])
        cv = cp_critical(s, Z, 0.4, 2, 6)
        assert cv.lambda_star <= 1e-3

    def test_prop212_pin(self):
        # DERIVED: cross-module comparison against the entropy rate log 2
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, -2, 6)
        cs = CloudSpec(provenance="full-enumeration", coord_lo=0, coord_hi=6)
        for eps in (0.4, 0.2):
            cv = cp_critical(s, Z, eps, 2, 9)
            h, _ = entropy_at_scale(s, eps, [2, 3, 4, 5, 6], cs)
            assert abs(cv.lambda_star - h) <= 0.1

    def test_subset_monotone(self):
        s = shift2(W=6)
        Z2 = full_enumeration_cloud(s, -1, 4)
        Z1 = Z2.subset(range(0, len(Z2), 2))
        cv1 = cp_critical(s, Z1, 0.4, 2, 6)
        cv2 = cp_critical(s, Z2, 0.4, 2, 6)
        assert cv1.lambda_star <= cv2.lambda_star + 2e-3

    def test_bracket_reported(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 3)
        cv = cp_critical(s, Z, 0.4, 2, 6, lam_tol=1e-4)
        lo, hi = cv.bracket
        assert hi - lo <= 1e-4 and cv.value_lo >= 1.0 > cv.value_hi


class TestWeightedOuter:
    def test_zero_target(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        inst = WeightedCPInstance(build_cp_instance(s, Z, 0.4, 1, 1), np.zeros(4))
        val, kind, coeff, _ = weighted_outer(inst, 0.5, mode="exact")
        assert float(val) == 0.0 and all(c == 0 for c in coeff)

    def test_identity_forces_units(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 1)
        inst = WeightedCPInstance(build_cp_instance(s, Z, 0.4, 1, 1), np.ones(4))
        val, _, coeff, _ = weighted_outer(inst, 0.5, mode="exact")
        assert float(val) == pytest.approx(4 * math.exp(-0.5))
        assert all(float(c) == pytest.approx(1.0) for c in coeff)

    def test_relaxation_below_cover(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 2)
        base = build_cp_instance(s, Z, 0.4, 1, 2)
        for lam in (0.3, 0.6):
            M, _, _, _ = cp_outer(base, lam, mode="exact")
            Wv, _, _, _ = weighted_outer(
                WeightedCPInstance(base, np.ones(len(Z))), lam, mode="exact"
            )
            assert float(Wv) <= float(M) + 1e-12

    def test_greedy_feasible_and_upper(self):
        s = shift2(W=6)
        Z = full_enumeration_cloud(s, 0, 2)
        base = build_cp_instance(s, Z, 0.4, 1, 2)
        f = np.ones(len(Z))
        Wg, kind, coeff, _ = weighted_outer(WeightedCPInstance(base, f), 0.5, mode="greedy")
        We, _, _, _ = weighted_outer(WeightedCPInstance(base, f), 0.5, mode="exact")
        assert float(We) <= Wg + 1e-12
        cover = base.membership.T.astype(float) @ np.asarray(coeff)
        assert np.all(cover >= f - 1e-9)

    def test_prop35_rational_sandwich(self):
        # literal rational inequalities M(lam + delta, 6 eps) <= W(lam, eps)
        # <= M(lam, eps) on exact instances
        s = shift2(W=6)
        rng = np.random.default_rng(0)
        cloud = full_enumeration_cloud(s, -1, 4)
        eps = 0.11
        for trial in range(6):
            idx = sorted(rng.choice(len(cloud), size=6, replace=False).tolist())
            Z = cloud.subset(idx)
            inst = build_cp_instance(s, Z, eps, 1, 2)
            inst6 = build_cp_instance(s, Z, 6 * eps, 1, 2)
            lam = 0.3 + 0.1 * trial
            g = inst.rational_gauges(Fraction(math.exp(-lam)))
            g6 = inst6.rational_gauges(Fraction(math.exp(-(lam + 0.1))))
            M, _, _, _ = cp_outer(inst, mode="exact", gauges=g)
            W_, _, _, _ = weighted_outer(
                WeightedCPInstance(inst, np.ones(len(Z))), mode="exact", gauges=g
            )
            M6, _, _, _ = cp_outer(inst6, mode="exact", gauges=g6)
            assert isinstance(M, Fraction) and isinstance(W_, Fraction) and isinstance(M6, Fraction)
            assert M6 <= W_ <= M


class TestFrostman:
    def test_point_mass_violates(self):
        s = shift2(W=4)
        mu = MeasureModel(kind="point-mass", point=s.zero_point())
        Z = PointCloud(s, [s.zero_point()])
        rep = frostman_check(mu, s, Z, s=0.5, epsilon=0.4, N_floor=2, c=1.0, orders=[6, 8])
        assert rep["violated"]

    def test_bernoulli_below_log2_clean(self):
        # DERIVED: exact cylinder masses decay fast enough for s = 0.5 < log 2
        s = shift2(W=6)
        Z = PointCloud(s, [s.zero_point()])
        rep = frostman_check(bern(), s, Z, s=0.5, epsilon=0.4, N_floor=4, c=1.0, orders=[4, 5, 6])
        assert not rep["violated"]

    def test_s_above_entropy_violates(self):
        s = shift2(W=6)
        Z = PointCloud(s, [s.zero_point()])
        rep = frostman_check(bern(), s, Z, s=2.0, epsilon=0.4, N_floor=4, c=1.0, orders=[4, 5, 6])
        assert rep["violated"]


class TestSubsetProfile:
    def test_singleton_profile_zero(self):
        s = shift2(W=6)
        Z = PointCloud(s, [s.zero_point()])
        out = bowen_mdim_subset(s, Z, [0.4, 0.2], 2, 5)
        assert out["quotient_upper"] <= 1e-2

    def test_union_max_law(self):
        s = shift2(W=6)
        cloud = full_enumeration_cloud(s, -1, 4)
        z1 = cloud.subset(range(len(cloud) // 2))
        union = cloud
        cv1 = cp_critical(s, z1, 0.4, 2, 7)
        cvu = cp_critical(s, union, 0.4, 2, 7)
        # max law: the union's critical value matches the bigger piece
        assert cvu.lambda_star >= cv1.lambda_star - 2e-3
