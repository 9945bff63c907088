import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvdpm.partitions import (
    CountsVector,
    counts_of,
    enumerate_partitions,
    esf_log_prob,
    polya_urn_sample,
    validate_allocation,
)

from .oracles import crp_partition_law, tv


def empirical_partition_law(samples):
    from collections import Counter

    freq = Counter(counts_of(s).box_sizes() for s in samples)
    n = len(samples)
    return {k: v / n for k, v in freq.items()}


class TestCountsVector:
    def test_valid(self):
        cv = CountsVector((1, 1, 0))
        assert cv.n == 3 and cv.num_boxes == 2
        assert cv.box_sizes() == (2, 1)

    def test_invalid_sum(self):
        with pytest.raises(ValueError):
            CountsVector((2, 1, 0))

    def test_json_roundtrip(self):
        cv = CountsVector((0, 0, 1))
        assert CountsVector.from_json(cv.to_json()) == cv

    def test_from_box_sizes(self):
        assert CountsVector.from_box_sizes([3, 1, 1]).counts == (2, 0, 1, 0, 0)


class TestEsfLogProb:
    def test_n1_is_certain(self):
        assert esf_log_prob(CountsVector((1,)), 2.7) == pytest.approx(0.0)

    def test_n3_values_match_crp_enumeration(self):
        # oracle: enumerate all seatings of 3 customers at theta=1
        law = crp_partition_law(3, 1.0)
        assert law[(1, 1, 1)] == pytest.approx(1 / 6)
        assert law[(3,)] == pytest.approx(1 / 3)
        assert law[(2, 1)] == pytest.approx(1 / 2)
        assert esf_log_prob(CountsVector((3, 0, 0)), 1.0) == pytest.approx(math.log(1 / 6))
        assert esf_log_prob(CountsVector((0, 0, 1)), 1.0) == pytest.approx(math.log(1 / 3))

    def test_hand_evaluated_formula(self):
        # n=3, theta=1, a=(3,0,0): 3! / (1*2*3) * (1/1)^3 / 3! = 1/6
        assert math.exp(esf_log_prob(CountsVector((3, 0, 0)), 1.0)) == pytest.approx(1 / 6)

    @pytest.mark.parametrize("n", range(1, 9))
    @pytest.mark.parametrize("theta", [0.5, 1.0, 3.0])
    def test_normalization(self, n, theta):
        total = sum(math.exp(esf_log_prob(p, theta)) for p in enumerate_partitions(n))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_enumerated_crp_law(self):
        for theta in (0.5, 2.0):
            law = crp_partition_law(5, theta)
            for p in enumerate_partitions(5):
                assert math.exp(esf_log_prob(p, theta)) == pytest.approx(
                    law[p.box_sizes()], rel=1e-10
                )

    def test_large_n_no_overflow(self):
        cv = CountsVector.from_box_sizes([2000, 1000])
        assert np.isfinite(esf_log_prob(cv, 1.5))

    def test_bad_theta(self):
        with pytest.raises(ValueError):
            esf_log_prob(CountsVector((1,)), 0.0)


class TestEnumeratePartitions:
    def test_small_counts(self):
        assert [p.counts for p in enumerate_partitions(1)] == [(1,)]
        assert {p.counts for p in enumerate_partitions(3)} == {(3, 0, 0), (1, 1, 0), (0, 0, 1)}

    def test_p5_has_seven(self):
        assert len(enumerate_partitions(5)) == 7

    def test_lexicographic_order(self):
        parts = [p.counts for p in enumerate_partitions(6)]
        assert parts == sorted(parts)

    def test_capacity_guard(self):
        with pytest.raises(ValueError):
            enumerate_partitions(26)


class TestPolyaUrnSample:
    def test_first_customer(self, rng):
        assert polya_urn_sample(1, 5.0, rng) == [1]

    def test_second_seat_probability(self, rng):
        # theta=1: P(c_2 = 1) = 1/2
        n_mc = 20_000
        hits = sum(polya_urn_sample(2, 1.0, rng)[1] == 1 for _ in range(n_mc))
        se = math.sqrt(0.25 / n_mc)
        assert abs(hits / n_mc - 0.5) < 3 * se

    def test_sampler_matches_esf_n5(self, rng):
        n_mc = 100_000
        emp = empirical_partition_law([polya_urn_sample(5, 2.0, rng) for _ in range(n_mc)])
        exact = {p.box_sizes(): math.exp(esf_log_prob(p, 2.0)) for p in enumerate_partitions(5)}
        assert tv(emp, exact) < 0.01

    def test_sampler_matches_esf_n6(self, rng):
        n_mc = 100_000
        emp = empirical_partition_law([polya_urn_sample(6, 1.0, rng) for _ in range(n_mc)])
        exact = {p.box_sizes(): math.exp(esf_log_prob(p, 1.0)) for p in enumerate_partitions(6)}
        assert tv(emp, exact) < 0.01

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 40), theta=st.floats(0.1, 10.0), seed=st.integers(0, 2**32 - 1))
    def test_labels_canonical(self, n, theta, seed):
        labels = polya_urn_sample(n, theta, np.random.default_rng(seed))
        validate_allocation(labels)


class TestCountsOf:
    def test_examples(self):
        assert counts_of([1, 1, 2]).counts == (1, 1, 0)
        assert counts_of([1, 2, 3]).counts == (3, 0, 0)
        assert counts_of([1, 1, 1]).counts == (0, 0, 1)

    def test_arbitrary_labels(self):
        assert counts_of(["a", "b", "a"]).counts == (1, 1, 0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            counts_of([])

    @settings(max_examples=50, deadline=None)
    @given(labels=st.lists(st.integers(1, 6), min_size=1, max_size=12))
    def test_respects_group_sizes(self, labels):
        cv = counts_of(labels)
        assert cv.n == len(labels)
        assert cv.num_boxes == len(set(labels))


class TestValidateAllocation:
    def test_good(self):
        validate_allocation([1, 1, 2, 3, 2])

    def test_bad(self):
        with pytest.raises(ValueError):
            validate_allocation([1, 3])
