import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from univcode.dists import (
    ClassB,
    ClassI,
    ClassU,
    ExplicitPmf,
    HarmonicPmf,
    build_qU,
    divergence,
    point_mass,
)
from univcode.errors import (
    InfiniteDivergenceError,
    PreconditionError,
    ResourceError,
)
from univcode.redundancy import (
    RedundancyReport,
    adversarial_I,
    adversarial_I_partials,
    check_lemma_bndprc,
    check_tail_condition,
    classB_lb,
    coupon_bound_check,
    distinguishability_lb,
    exact_redundancy,
    mc_redundancy,
    strong_redundancy,
)
from univcode.spa import BayesMixture, Hybrid, KnownSource, PatternSPA


def two_point(a, b, pa):
    return ExplicitPmf({a: Fraction(pa), b: 1 - Fraction(pa)})


def test_exact_known_source_is_zero():
    p = two_point(0, 1, Fraction(1, 3))
    r = exact_redundancy(p, KnownSource(p), 10)
    assert abs(r.value) < 1e-12 and r.ci_halfwidth is None and r.method == "exact"


def test_exact_two_term_kl():
    p = two_point(1, 2, Fraction(1, 2))
    q = KnownSource(two_point(1, 2, Fraction(3, 4)))
    assert exact_redundancy(p, q, 1).value == pytest.approx(0.20751874963942185, abs=1e-12)


def test_exact_against_mixture():
    members = [ClassB(Fraction(1, 2), 1), ClassB(Fraction(1, 2), 2)]
    r = exact_redundancy(members[0], BayesMixture(members), 1)
    # q(1) = 1/2, q(4) = 1/4: half a bit lost on the rare symbol
    assert r.value == pytest.approx(0.5, abs=1e-12)
    assert r.value <= 1


def test_exact_matches_bruteforce_for_adaptive_models():
    p = two_point(0, 3, Fraction(2, 5))
    q = Hybrid(PatternSPA(), ClassU(2))
    n = 4
    oracle = 0.0
    for xs in itertools.product((0, 3), repeat=n):
        px = math.prod(float(p.exact_prob(x)) for x in xs)
        oracle += px * (math.log2(px) - q.log2_prob(xs))
    r = exact_redundancy(p, q, n)
    assert r.value == pytest.approx(oracle, abs=1e-9)
    assert r.per_symbol == pytest.approx(r.value / n)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mixture_bound_exhaustive(n):
    members = [ClassU(1), two_point(0, 2, Fraction(1, 4)), ClassB(Fraction(1, 2), 1)]
    prior = [0.5, 0.3, 0.2]
    q = BayesMixture(members, prior)
    for p, w in zip(members, prior):
        assert exact_redundancy(p, q, n).value <= math.log2(1 / w) + 1e-12


def test_exact_guards():
    with pytest.raises(ResourceError):
        exact_redundancy(ClassU(3), KnownSource(ClassU(3)), 3)
    with pytest.raises(InfiniteDivergenceError) as e:
        exact_redundancy(ClassB(0.5, 1), KnownSource(point_mass(1)), 2)
    assert e.value.path[-1] == 4


def test_mc_known_source_contains_zero():
    p = ClassU(2)
    r = mc_redundancy(p, KnownSource(p), 5, trials=500, seed=1)
    assert r.lower <= 0 <= r.upper


def test_mc_matches_enumerated_kl():
    p, q = ClassU(2), ClassU(3)
    # oracle: the 17 atoms of p_2 against q
    oracle = 0.75 * math.log2(0.75 / (8 / 9)) + 16 * (1 / 64) * math.log2((1 / 64) / (1 / (9 * 512)))
    assert divergence(p, q) == pytest.approx(oracle, abs=1e-12)
    r = mc_redundancy(p, KnownSource(q), 1, trials=100_000, seed=5)
    assert abs(r.value - oracle) <= r.ci_halfwidth


def test_mc_deterministic_and_worker_independent():
    p = ClassU(2)
    q = Hybrid(PatternSPA(), build_qU())
    a = mc_redundancy(p, q, 20, trials=600, seed=9)
    b = mc_redundancy(p, q, 20, trials=600, seed=9)
    c = mc_redundancy(p, q, 20, trials=600, seed=9, workers=2)
    assert a == b == c


def test_mc_infinite_signal():
    with pytest.raises(InfiniteDivergenceError) as e:
        mc_redundancy(ClassB(0.5, 1), KnownSource(point_mass(1)), 3, trials=100, seed=0)
    assert 4 in e.value.path
    with pytest.raises(PreconditionError):
        mc_redundancy(ClassU(2), KnownSource(ClassU(2)), 1, trials=10)


def test_report_rows():
    r = RedundancyReport(4, 2.0, 0.5, "monte_carlo", 0.1, 100, 3)
    assert r.row() == (4, 2.0, 0.5, "monte_carlo", 0.1, 100, 3)
    assert r.to_dict()["ci_halfwidth"] == 0.1


def test_strong_redundancy_examples():
    p = ClassU(2)
    assert strong_redundancy([p], KnownSource(p), 1) == pytest.approx(0.0, abs=1e-12)
    members = [ClassU(k) for k in range(1, 51)]
    qU = build_qU()
    value = strong_redundancy(members, KnownSource(qU), 1, method="closed_form")
    per_member = [divergence(m, qU) for m in members]
    assert value == max(per_member) == per_member[0]
    members = [two_point(0, 1, Fraction(1, 3)), two_point(0, 1, Fraction(1, 2))]
    q = BayesMixture(members)
    v = strong_redundancy(members, q, 3)
    assert all(v >= exact_redundancy(m, q, 3).value for m in members)
    assert strong_redundancy(members, q, 3, per_symbol=True) == pytest.approx(v / 3)


def test_distinguishability_examples():
    sets = [{i} for i in range(4)]
    members = [point_mass(i) for i in range(4)]
    assert distinguishability_lb(sets, members, 0.9) == pytest.approx(1.8)
    assert distinguishability_lb([{0}], [point_mass(0)], 0.9) == 0.0
    assert distinguishability_lb(sets[:2], members[:2], 1) == 1.0
    with pytest.raises(PreconditionError, match="overlap"):
        distinguishability_lb([{0, 1}, {1}], members[:2], 0.9)
    with pytest.raises(PreconditionError, match="member 1"):
        distinguishability_lb([{0}, {5}], members[:2], 0.9)
    with pytest.raises(PreconditionError):
        distinguishability_lb(sets, members, 0.5)


def test_classB_lb_examples():
    assert classB_lb(1) == (1, 1.0)
    d, b = classB_lb(2)
    assert d == Fraction(3, 4) and b == 1.5
    for n in range(1, 21):
        d, b = classB_lb(n)
        assert d == 1 - (1 - Fraction(1, n)) ** n
        assert b / n >= 1 - 1 / math.e


def test_classB_delta_decreases_to_limit():
    ds = [float(classB_lb(n).delta) for n in range(1, 200)]
    assert all(b < a for a, b in zip(ds, ds[1:]))
    assert ds[-1] - (1 - 1 / math.e) < 1e-3


def test_adversary_on_harmonic():
    q = HarmonicPmf()
    member, total = adversarial_I(q, 12)
    assert [member.atom(i) for i in range(1, 13)] == [2 ** (i + 1) - 1 for i in range(1, 13)]

    def oracle(L):
        s = 0.0
        for i in range(1, L + 1):
            x = 2 ** (i + 1) - 1
            s += (1 / (i * (i + 1))) * (math.log2(x) + math.log2(x + 1) - math.log2(i * (i + 1)))
        return s

    assert total == pytest.approx(oracle(12), abs=1e-12)
    _, partial = adversarial_I_partials(q, 1024)
    assert partial[1023] - partial[31] >= 1
    assert partial[1023] == pytest.approx(oracle(1024), rel=1e-12)
    assert np.all(np.diff(partial) > 0)


def test_adversary_tie_break():
    q = ExplicitPmf({1: 0.5, 2: 0.25, 3: 0.25})
    member, _ = adversarial_I(q, 1)
    assert member.atom(1) == 2


def test_adversary_picks_gap_with_zero_mass():
    q = ExplicitPmf({2: 0.5, 3: 0.5})
    member, total = adversarial_I(q, 2)
    assert member.atom(2) == 4 and total == math.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 1000), st.floats(0.05, 5))
def test_adversary_terms_nonnegative_from_block_five(L, seed, alpha):
    # q(x_i) <= 2**-i <= 1/(i(i+1)) once i >= 5, whatever q is
    w = np.random.default_rng(seed).dirichlet(np.full(2 ** (L + 1), alpha)) + 1e-300
    q = ExplicitPmf(dict(enumerate(w / w.sum())))
    _, partial = adversarial_I_partials(q, L)
    steps = np.diff(np.concatenate(([0.0], partial)))
    assert np.all(steps[4:] >= -1e-12)


def test_tail_condition_tables():
    rows = check_tail_condition([point_mass(3)], build_qU(), [0.5, 0.1, 0.01])
    assert all(r.tail_entropy == 0 and r.tail_divergence == 0 for r in rows)
    with pytest.raises(PreconditionError):
        check_tail_condition([point_mass(3)], build_qU(), [0.1, 0.5])
    members = [ClassU(k) for k in range(1, 21)]
    grid = [Fraction(1, m * m * 2 ** (m * m)) for m in range(1, 20)]
    rows = check_tail_condition(members, build_qU(), grid)
    R = math.log2(build_qU().envelope_sum)
    for m, r in zip(range(1, 20), rows):
        assert r.tail_divergence <= (R + 1) / m**2 + 1e-12
        # tail entropy of p_{m+1}
        assert r.tail_entropy == pytest.approx(1 + 2 * math.log2(m + 1) / (m + 1) ** 2, abs=1e-12)


def test_coupon_examples():
    rep = coupon_bound_check(point_mass(5), 20, trials=500, seed=0)
    assert all(r.empirical == 0 for r in rep.by_base.values())
    rep = coupon_bound_check(point_mass(5), 8, trials=10, seed=0, bases=(2,))
    assert rep.by_base["2"].bound == pytest.approx(1 / 24)
    uni = ExplicitPmf({x: Fraction(1, 4) for x in range(1, 5)})
    rep = coupon_bound_check(uni, 100, trials=100_000, seed=1)
    assert set(rep.by_base) == {"2", "e"}
    for r in rep.by_base.values():
        # all four symbols are frequent; missing one in 100 draws has prob <= 4 (3/4)^100
        assert r.frequent == 4 and r.empirical <= 4 * 0.75**100 + 1e-9
        assert r.holds
    with pytest.raises(PreconditionError):
        coupon_bound_check(uni, 2)


def test_bndprc_examples():
    p = two_point(1, 2, Fraction(3, 4))
    rep = check_lemma_bndprc(p, p, [1, 2])
    assert all(r.tail_prob == 0 for r in rep.rows)
    q = two_point(1, 2, Fraction(1, 4))
    rep = check_lemma_bndprc(p, q, [1])
    assert rep.R == pytest.approx(0.792481250360578, abs=1e-12)
    assert rep.rows[0].tail_prob == 1.0
    assert rep.rows[0].bound == pytest.approx(0.792481250360578 + 2 * math.log2(math.e) / math.e)
    assert rep.holds and rep.floor >= -math.log2(math.e) / math.e
    with pytest.raises(InfiniteDivergenceError):
        check_lemma_bndprc(p, point_mass(1), [1])
