import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from univcode.dists import ClassB, ClassU, ExplicitPmf, point_mass
from univcode.errors import DomainError, ModeError, ResourceError
from univcode.patterns import (
    bell,
    enumerate_patterns,
    format_pattern,
    is_pattern,
    parse_pattern,
    pattern_counts,
    pattern_of,
    pattern_prob_bruteforce,
    pattern_prob_exact,
    pattern_prob_iid,
    pattern_prob_mc,
)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147]


def test_honolulu():
    assert format_pattern(pattern_of("HONOLULU")) == "12324545"
    assert parse_pattern("12324545") == (1, 2, 3, 2, 4, 5, 4, 5)


def test_parse_rejects_non_patterns():
    with pytest.raises(DomainError):
        parse_pattern("21")
    assert not is_pattern((1, 3))
    assert is_pattern(())


def test_bell_numbers():
    assert [bell(n) for n in range(10)] == BELL


@pytest.mark.parametrize("n", range(0, 9))
def test_enumeration_counts_bell(n):
    pats = list(enumerate_patterns(n))
    assert len(pats) == BELL[n]
    assert len(set(pats)) == len(pats)
    assert all(is_pattern(p) for p in pats)
    assert pats == sorted(pats)


def test_enumeration_guard():
    with pytest.raises(ResourceError):
        next(enumerate_patterns(14))


def test_wide_patterns_format_with_commas():
    psi = tuple(range(1, 12))
    assert format_pattern(psi) == ",".join(map(str, psi))
    assert parse_pattern(format_pattern(psi)) == psi


def test_pattern_prob_examples():
    d = ExplicitPmf({1: Fraction(1, 2), 2: Fraction(1, 2)})
    assert pattern_prob_exact(d, (1, 1)) == 0.5
    assert pattern_prob_exact(d, (1, 2)) == 0.5
    assert pattern_prob_exact(d, (1, 2, 3)) == 0.0
    assert pattern_prob_exact(point_mass(4), (1, 1, 1)) == 1.0


small_pmfs = st.dictionaries(st.integers(0, 9), st.integers(1, 9), min_size=1, max_size=4).map(
    lambda w: ExplicitPmf({x: Fraction(v, sum(w.values())) for x, v in w.items()}))


@settings(max_examples=40, deadline=None)
@given(small_pmfs, st.integers(1, 5), st.data())
def test_dp_matches_bruteforce(d, n, data):
    psi = data.draw(st.sampled_from(list(enumerate_patterns(n))))
    assert abs(pattern_prob_exact(d, psi) - pattern_prob_bruteforce(d, psi)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(small_pmfs, st.integers(1, 6))
def test_pattern_probs_sum_to_one(d, n):
    total = math.fsum(pattern_prob_iid(d, psi) for psi in enumerate_patterns(n))
    assert abs(total - 1) < 1e-12


def test_mc_agrees_with_exact():
    d = ClassB(Fraction(1, 3), 2)
    psi = (1, 1, 2)
    p, se = pattern_prob_mc(d, psi, seed=3, trials=20_000)
    assert abs(p - pattern_prob_exact(d, psi)) < 4 * se + 1e-3
    assert pattern_prob_iid(d, psi, mode="monte_carlo", seed=3, trials=20_000) == p


def test_exact_needs_finite_support():
    from univcode.dists import ClassI

    with pytest.raises(ModeError):
        pattern_prob_exact(ClassI(), (1, 2))
    with pytest.raises(ModeError):
        pattern_prob_iid(ClassU(2), (1,), mode="bogus")


def test_pattern_counts():
    assert pattern_counts((1, 2, 1, 3, 1)).tolist() == [3, 1, 1]
