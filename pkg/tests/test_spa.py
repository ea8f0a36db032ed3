import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from univcode.dists import ClassB, ClassU, ExplicitPmf, build_qU
from univcode.errors import DomainError, ZeroProbabilityError
from univcode.patterns import enumerate_patterns, pattern_of
from univcode.spa import (
    BayesMixture,
    ExcludingMeasure,
    Hybrid,
    KnownSource,
    PatternSPA,
    SeqModel,
    bayes_mixture,
    hybrid,
    known_source,
    pattern_spa,
    spa_from_descriptor,
)


def test_pattern_rule_after_two_repeats():
    m = pattern_spa(0.5, 0.5)
    assert m.prob(1) == 1.0 and m.prob(2) == 0.0
    m.update(1)
    m.update(1)
    assert m.prob(1) == pytest.approx(0.6)
    assert m.prob(2) == pytest.approx(0.4)
    assert m.prob(3) == 0.0


def test_pattern_rejects_invalid_index():
    m = PatternSPA()
    m.update(1)
    with pytest.raises(ZeroProbabilityError):
        m.update(3)
    with pytest.raises(DomainError):
        PatternSPA(d=1.0)


@pytest.mark.parametrize("d,theta", [(0.5, 0.5), (0.0, 1.0), (0.3, 2.0), (0.9, -0.5)])
@pytest.mark.parametrize("n", [1, 4, 7])
def test_pattern_spa_is_a_distribution_over_patterns(d, theta, n):
    m = PatternSPA(d, theta)
    total = math.fsum(2.0 ** m.log2_prob(psi) for psi in enumerate_patterns(n))
    assert abs(total - 1) < 1e-12


@settings(max_examples=60)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=30), st.floats(0, 0.95), st.floats(0.05, 5))
def test_closed_form_matches_sequential(xs, d, theta):
    m = PatternSPA(d, theta)
    psi = pattern_of(xs)
    assert abs(m.log2_prob(psi) - SeqModel.log2_prob(m, psi)) < 1e-9


def test_non_pattern_has_zero_probability():
    assert PatternSPA().log2_prob((2, 1)) == -math.inf


def test_hybrid_factorisation():
    q1 = ClassU(3)
    h = hybrid(pattern_spa(), q1)
    expected = q1.log2_prob(7) + math.log2(0.5 / 1.5)  # (c - d)/(i + theta) at i = c = 1
    assert h.log2_prob([7, 7]) == pytest.approx(expected, abs=1e-12)
    assert h.log2_prob([]) == 0.0


@settings(max_examples=60)
@given(st.lists(st.integers(0, 520), min_size=1, max_size=25))
def test_hybrid_fast_path_matches_replay(xs):
    h = Hybrid(PatternSPA(), build_qU())
    assert abs(h.log2_prob(xs) - SeqModel.log2_prob(h, xs)) < 1e-9


def test_hybrid_is_sub_probability():
    q1 = ExplicitPmf({0: Fraction(1, 2), 1: Fraction(1, 4), 2: Fraction(1, 4)})
    h = Hybrid(PatternSPA(), q1)
    total = math.fsum(2.0 ** h.log2_prob(xs) for xs in itertools.product((0, 1, 2), repeat=3))
    assert total < 1
    r = Hybrid(PatternSPA(), q1, renormalize=True)
    total_r = math.fsum(2.0 ** r.log2_prob(xs) for xs in itertools.product((0, 1, 2), repeat=3))
    assert abs(total_r - 1) < 1e-12


def test_excluding_measure():
    q1 = ExplicitPmf({0: Fraction(1, 2), 1: Fraction(1, 4), 2: Fraction(1, 4)})
    e = ExcludingMeasure(q1, [0])
    assert e.prob(0) == 0 and e.prob(1) == 0.5
    assert e.mass_range(0, 2) == pytest.approx(1.0)
    assert e.mass_range(2, None) == pytest.approx(0.5)
    assert not e.uniform_on(0, 1)


def test_known_source():
    p = ClassU(2)
    m = known_source(p)
    xs = [0, 3, 0, 0, 16]
    assert m.log2_prob(xs) == pytest.approx(sum(p.log2_prob(x) for x in xs))
    assert m.log2_prob([17]) == -math.inf
    batch = m.log2_prob_batch(np.array([[0, 1], [2, 0]]))
    assert batch.shape == (2,)


def test_bayes_mixture_closed_form_matches_replay():
    members = [ClassB(Fraction(1, 2), 1), ClassB(Fraction(1, 2), 2)]
    m = bayes_mixture(members)
    xs = [1, 4, 1, 1, 4]
    assert m.log2_prob(xs) == pytest.approx(SeqModel.log2_prob(m, xs))
    # first step: (1/2)(1/2 + 0) on symbol 4
    assert m.prob(4) == pytest.approx(0.25)
    m.update(4)
    assert m.weights.tolist() == pytest.approx([1.0, 0.0])
    with pytest.raises(ZeroProbabilityError):
        m.update(3)


def test_mixture_bound_over_members():
    members = [ClassU(k) for k in (1, 2, 3)]
    m = BayesMixture(members)
    rng = np.random.default_rng(0)
    for p in members:
        xs = [int(v) for v in rng.integers(0, 3, size=5)]
        if p.log2_prob_array(np.array(xs)).min() == -math.inf:
            continue
        # q(x) >= prior * p(x) pathwise
        assert m.log2_prob(xs) >= math.log2(1 / 3) + float(p.log2_prob_array(np.array(xs)).sum()) - 1e-9


def test_clone_is_independent():
    h = Hybrid(PatternSPA(), ClassU(2))
    h.update(3)
    c = h.clone()
    c.update(4)
    assert h.index == {3: 1} and c.index == {3: 1, 4: 2}
    assert h.pattern.total == 1 and c.pattern.total == 2


@pytest.mark.parametrize("model", [
    KnownSource(ClassU(3)),
    BayesMixture([ClassU(1), ClassU(2)], [0.25, 0.75]),
    PatternSPA(0.25, 1.5),
    Hybrid(PatternSPA(), build_qU()),
    Hybrid(PatternSPA(0.1, 1.0), ClassU(2), renormalize=True),
])
def test_descriptor_round_trip(model):
    again = spa_from_descriptor(model.descriptor())
    assert again.descriptor() == model.descriptor()
    xs = [1, 1, 2, 1] if isinstance(model, PatternSPA) else [0, 2, 2, 1]
    assert again.log2_prob(xs) == model.log2_prob(xs)


def test_step_description_matches_prob():
    h = Hybrid(PatternSPA(), ClassU(2))
    for x in (3, 3, 0):
        h.update(x)
    s = h.step()
    listed = dict(s.seen)
    assert set(listed) == {3, 0}
    assert listed[3] == pytest.approx(h.prob(3))
    assert s.escape * s.base.prob(5) == pytest.approx(h.prob(5))
