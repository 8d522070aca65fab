"""Measure models, exact ball masses, and the five entropy notions."""

import math

import numpy as np
import pytest

from flowdim.bowen import BowenSpec, PointCloud, full_enumeration_cloud
from flowdim.errors import CapacityError, FeasibilityError, SchemaError
from flowdim.measures import (
    MeasureModel,
    PartitionSpec,
    ball_mass,
    ball_mass_mc,
    brin_katok_local,
    dynamical_partition_entropy,
    grid_partition,
    join_piece_masses,
    katok_count,
    katok_entropy_profile,
    partition_entropy,
    renyi_id_profile,
    shapira_count,
)
from flowdim.systems import FlowPoint, SystemDescriptor, make_system

from test_systems import shift2, torus, word_point


def bern(p=0.5):
    return MeasureModel(kind="bernoulli", p=(p, 1 - p))


def sampled(eps, n, tau=1.0):
    return BowenSpec(mode="sampled", epsilon=eps, n=n, tau=tau)


class TestMeasureModels:
    def test_validation(self):
        s = shift2()
        with pytest.raises(SchemaError):
            MeasureModel(kind="bernoulli", p=(0.5, 0.6)).validate(s)
        with pytest.raises(SchemaError):
            MeasureModel(kind="bernoulli", p=(1.0,)).validate(s)
        with pytest.raises(SchemaError):
            MeasureModel(
                kind="markov",
                transition=((0.5, 0.5), (0.5, 0.5)),
                stationary=(0.9, 0.1),  # not the fixed vector
            ).validate(s)
        with pytest.raises(SchemaError):
            MeasureModel(kind="bernoulli", p=(0.5, 0.5)).validate(torus())

    def test_markov_word_probs(self):
        s = shift2(W=1)
        P = ((0.9, 0.1), (0.2, 0.8))
        pi = (2 / 3, 1 / 3)
        m = MeasureModel(kind="markov", transition=P, stationary=pi)
        m.validate(s)
        words = np.asarray([[0, 0, 1]], dtype=np.int16)
        expect = pi[0] * P[0][0] * P[0][1]
        assert m.word_probs(s, words)[0] == pytest.approx(expect)


class TestBallMass:
    def test_full_space_ball(self):
        # epsilon above the phase-space diameter: everything is in the ball
        s = shift2(W=3)
        assert ball_mass(bern(), s, s.zero_point(), sampled(5.0, 1)) == pytest.approx(1.0)

    def test_point_mass(self):
        s = shift2()
        x = s.zero_point()
        far = word_point({0: 1}, height=0.0)
        mu = MeasureModel(kind="point-mass", point=x)
        assert ball_mass(mu, s, x, sampled(0.4, 3)) == 1.0
        assert ball_mass(mu, s, far, sampled(0.4, 3)) == 0.0

    def test_hand_derived_pin_w1(self):
        # DERIVED by hand enumeration of the 8 words at W=1, n=1, eps=0.4:
        # word 000 admits s in [0,0.4) u (0.6,1); word 100 admits (0.6,1);
        # every other word admits nothing -> mass = (0.8 + 0.4)/8 = 0.15
        s = shift2(W=1)
        m = ball_mass(bern(), s, s.zero_point(), sampled(0.4, 1))
        assert m == pytest.approx(0.15, abs=1e-12)

    def test_monte_carlo_cross_check(self):
        s = shift2(W=4)
        mu = bern()
        spec = sampled(0.4, 3)
        exact = ball_mass(mu, s, s.zero_point(), spec)
        mc, se = ball_mass_mc(mu, s, s.zero_point(), spec, samples=20000, seed=3)
        assert abs(mc - exact) <= 4 * se + 1e-3

    def test_flow_mode_matches_aligned_at_integer_grid(self):
        # flow over [0, n] includes the sampled times, so the flow ball is
        # contained in the sampled ball of order n+1
        s = shift2(W=4)
        mu = bern()
        z = s.zero_point()
        m_flow = ball_mass(mu, s, z, BowenSpec(mode="flow", epsilon=0.4, t=2.0))
        m_samp3 = ball_mass(mu, s, z, sampled(0.4, 3))
        assert m_flow <= m_samp3 + 1e-12

    def test_empirical_measure(self):
        s = shift2(W=3)
        orbit = (s.zero_point(), word_point({0: 1}, W=3))
        mu = MeasureModel(kind="empirical", orbit=orbit, weights=(0.25, 0.75))
        m = ball_mass(mu, s, s.zero_point(), sampled(0.4, 1))
        assert m == pytest.approx(0.25)

    def test_enumeration_cap(self):
        s = shift2(W=11)
        with pytest.raises(CapacityError):
            ball_mass(bern(), s, s.zero_point(), sampled(0.4, 2))


class TestPartitionEntropy:
    def test_single_piece_zero(self):
        s = shift2(W=3)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        mu = MeasureModel(kind="point-mass", point=s.zero_point())
        # degenerate partition on a point mass: the symbol partition has one
        # occupied piece; exact-mass measures use the cylinder path instead
        assert partition_entropy(bern(1.0 - 1e-16), part) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_four_pieces(self):
        s4 = make_system(SystemDescriptor(kind="susp-shift-finite", alphabet_size=4, window=3))
        part = PartitionSpec(system=s4, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        mu = MeasureModel(kind="bernoulli", p=(0.25,) * 4)
        assert partition_entropy(mu, part) == pytest.approx(math.log(4))

    def test_bernoulli_quarter(self):
        # DERIVED: -0.25 log 0.25 - 0.75 log 0.75
        s = shift2()
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        expect = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
        assert partition_entropy(bern(0.25), part) == pytest.approx(expect)

    def test_shannon_bounds(self):
        s = shift2()
        part = grid_partition(s, 0.4)
        H = partition_entropy(bern(0.3), part)
        assert 0.0 <= H <= math.log(part.n_pieces)

    def test_grid_partition_diameter(self):
        s = shift2(W=6)
        part = grid_partition(s, 0.4)
        assert part.diameter_bound <= 0.4
        assert part.coord_lo == -part.coord_hi


class TestDynamicalEntropy:
    def test_point_mass_zero(self):
        s = shift2(W=4)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        mu = MeasureModel(kind="bernoulli", p=(1.0, 0.0))
        seq, h = dynamical_partition_entropy(mu, part, 3)
        assert h == pytest.approx(0.0, abs=1e-12)

    def test_bernoulli_log2_exact(self):
        # DERIVED: independence makes every join mass 2^{-n}
        s = shift2(W=6)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        seq, h = dynamical_partition_entropy(bern(), part, 5)
        for v in seq:
            assert v == pytest.approx(math.log(2))

    def test_abramov_scaling(self):
        # DERIVED: joins over stride-2 shifts of a two-coordinate partition
        # constrain 2n contiguous coordinates, so H/n = 2 log 2 = |tau| h(phi_1)
        s = shift2(W=6)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=1, height_cells=1,
                             diameter_bound=3.0)
        seq, h = dynamical_partition_entropy(bern(), part, 3, tau=2.0)
        assert h == pytest.approx(2 * math.log(2))

    def test_sparse_join_marginalizes(self):
        # stride-2 joins of the single-symbol partition constrain every other
        # coordinate only: H(P^n)/n stays log 2, not 2 log 2
        s = shift2(W=6)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        seq, h = dynamical_partition_entropy(bern(), part, 3, tau=2.0)
        assert h == pytest.approx(math.log(2))

    def test_markov_entropy_rate(self):
        # H(P^n)/n for a Markov chain approaches the entropy rate from above
        s = shift2(W=6)
        P = ((0.9, 0.1), (0.5, 0.5))
        pi_unnorm = np.array([5 / 6, 1 / 6])
        mu = MeasureModel(kind="markov", transition=P, stationary=tuple(pi_unnorm))
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        seq, h = dynamical_partition_entropy(mu, part, 5)
        rate = -sum(
            pi_unnorm[i] * P[i][j] * math.log(P[i][j])
            for i in range(2)
            for j in range(2)
        )
        assert all(a >= b - 1e-12 for a, b in zip(seq, seq[1:]))
        assert seq[-1] == pytest.approx(rate, abs=(seq[0] - rate) / 2 + 1e-9)

    def test_join_cap(self):
        s = shift2(W=11)
        part = PartitionSpec(system=s, coord_lo=-11, coord_hi=11, height_cells=1,
                             diameter_bound=3.0)
        with pytest.raises(CapacityError):
            dynamical_partition_entropy(
                MeasureModel(kind="markov",
                             transition=((0.5, 0.5), (0.5, 0.5)),
                             stationary=(0.5, 0.5)),
                part, 3)


class TestRenyi:
    def test_point_mass_zero(self):
        s = shift2(W=4)
        mu = MeasureModel(kind="point-mass", point=s.zero_point())
        prof = renyi_id_profile(mu, s, [0.5, 0.25])
        assert all(e["entropy"] == 0.0 for e in prof)

    def test_uniform_closed_form(self):
        s = shift2(W=6)
        prof = renyi_id_profile(bern(), s, [0.5])
        part = grid_partition(s, 0.5)
        ncoords = part.coord_hi - part.coord_lo + 1
        expect = ncoords * math.log(2) + math.log(part.height_cells)
        assert prof[0]["entropy"] == pytest.approx(expect)
        assert prof[0]["bound_kind"] == "upper-bound"

    def test_quotients_monotone_reported(self):
        s = shift2(W=6)
        prof = renyi_id_profile(bern(), s, [0.5, 0.4])
        assert [e["epsilon"] for e in prof] == [0.5, 0.4]


class TestShapira:
    def test_single_heavy_piece(self):
        s = shift2(W=4)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        assert shapira_count(bern(0.95), part, 1, 0.9) == 1

    def test_uniform_eight_cylinders(self):
        # DERIVED: 8 pieces of mass 1/8, so ceil(0.6 * 8) = 5 are needed
        s = shift2(W=6)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        assert shapira_count(bern(), part, 3, 0.6) == 5

    def test_delta_to_one_needs_all(self):
        s = shift2(W=6)
        part = PartitionSpec(system=s, coord_lo=0, coord_hi=0, height_cells=1,
                             diameter_bound=3.0)
        assert shapira_count(bern(), part, 3, 0.999) == 8
        with pytest.raises(SchemaError):
            shapira_count(bern(), part, 3, 1.0)


class TestKatok:
    def test_point_mass_single_ball(self):
        s = shift2(W=4)
        mu = MeasureModel(kind="point-mass", point=s.zero_point())
        cloud = full_enumeration_cloud(s, 0, 1)
        for delta in (0.1, 0.5, 0.9):
            assert katok_count(mu, s, sampled(0.4, 2), delta, cloud).value == 1

    def test_monotone_in_delta_and_eps(self):
        s = shift2(W=4)
        mu = bern()
        cloud = full_enumeration_cloud(s, -2, 3, heights=(0.0, 0.5))
        for n in (2, 3):
            r_small = katok_count(mu, s, sampled(0.4, n), 0.25, cloud).value
            r_big = katok_count(mu, s, sampled(0.4, n), 0.75, cloud).value
            assert r_small <= r_big
            r_eps = katok_count(mu, s, sampled(0.6, n), 0.25, cloud).value
            assert r_eps <= r_small

    def test_exact_le_greedy(self):
        s = shift2(W=3)
        mu = bern()
        cloud = full_enumeration_cloud(s, 0, 1, heights=(0.0, 0.5))
        g = katok_count(mu, s, sampled(0.4, 2), 0.1, cloud, mode="greedy").value
        e = katok_count(mu, s, sampled(0.4, 2), 0.1, cloud, mode="exact").value
        assert e <= g

    def test_multi_delta_prefix_readout(self):
        from flowdim.measures import katok_counts_multi

        s = shift2(W=4)
        mu = bern()
        cloud = full_enumeration_cloud(s, -2, 3, heights=(0.0, 0.5))
        spec = sampled(0.4, 3)
        multi = katok_counts_multi(mu, s, spec, [0.2, 0.5], cloud)
        assert multi[0.2] == katok_count(mu, s, spec, 0.2, cloud).value
        assert multi[0.5] == katok_count(mu, s, spec, 0.5, cloud).value
        assert multi[0.2] <= multi[0.5]

    def test_infeasible_cloud(self):
        s = shift2(W=4)
        mu = bern()
        cloud = PointCloud(s, [s.zero_point()])
        with pytest.raises(FeasibilityError):
            katok_count(mu, s, sampled(0.4, 4), 0.9, cloud)

    def test_profile_slopes(self):
        s = shift2(W=4)
        mu = bern()
        cloud = full_enumeration_cloud(s, -2, 3, heights=(0.0, 0.5))
        prof = katok_entropy_profile(mu, s, 0.4, 0.5, [2, 3, 4], cloud)
        assert prof["lower"] <= prof["upper"]
        assert all(c >= 1 for c in prof["counts"])


class TestBrinKatok:
    def test_point_mass_zero_rate(self):
        s = shift2(W=4)
        mu = MeasureModel(kind="point-mass", point=s.zero_point())
        bk = brin_katok_local(mu, s, s.zero_point(), 0.4, [2, 3, 4])
        assert bk["upper"] == 0.0 and bk["lower"] == 0.0

    def test_upper_ge_lower(self):
        s = shift2(W=5)
        bk = brin_katok_local(bern(), s, s.zero_point(), 0.4, [2, 3, 4, 5, 6])
        assert bk["upper"] >= bk["lower"]

    def test_prop31_sandwich_every_order(self):
        # sampled(eps) <= flow(eps) <= sampled(eps / L_hat), literal per order
        s = shift2(W=4)
        mu = bern()
        z = s.zero_point()
        orders = [2, 3, 4, 5]
        a = brin_katok_local(mu, s, z, 0.4, orders, mode="sampled")["sequence"]
        b = brin_katok_local(mu, s, z, 0.4, orders, mode="flow")["sequence"]
        c = brin_katok_local(mu, s, z, 0.2, orders, mode="sampled")["sequence"]
        for x, y, w in zip(a, b, c):
            assert x <= y + 1e-12 <= w + 2e-12
