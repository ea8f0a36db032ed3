"""Redundancy measurement, lower bounds and the checkers for the class constructions.

All quantities are in bits.  ``value`` in a :class:`RedundancyReport` is the
length-n redundancy E_p log2 p(X^n)/q(X^n); ``per_symbol`` divides by n.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .dists import (
    ClassB,
    ClassI,
    Pmf,
    divergence,
    head_atoms,
    log2_of,
    sample,
    tail_divergence,
    tail_entropy,
)
from .errors import (
    DomainError,
    InfiniteDivergenceError,
    ModeError,
    PreconditionError,
    ResourceError,
)
from .spa import KnownSource, SeqModel

__all__ = [
    "CSV_COLUMNS",
    "RedundancyReport",
    "adversarial_I",
    "adversarial_I_partials",
    "check_lemma_bndprc",
    "check_tail_condition",
    "classB_lb",
    "coupon_bound_check",
    "distinguishability_lb",
    "exact_redundancy",
    "mc_redundancy",
    "strong_redundancy",
]

MAX_ENUMERATION = 10**7
CSV_COLUMNS = ("n", "value_bits", "per_symbol", "method", "ci", "trials", "seed")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class RedundancyReport:
    n: int
    value: float
    per_symbol: float
    method: str
    ci_halfwidth: float | None = None
    trials: int | None = None
    seed: int | None = None
    label: str = field(default="", compare=False)

    @property
    def upper(self) -> float:
        return self.value + (self.ci_halfwidth or 0.0)

    @property
    def lower(self) -> float:
        return self.value - (self.ci_halfwidth or 0.0)

    def row(self) -> tuple:
        return (self.n, self.value, self.per_symbol, self.method,
                "" if self.ci_halfwidth is None else self.ci_halfwidth,
                "" if self.trials is None else self.trials,
                "" if self.seed is None else self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def exact_redundancy(p: Pmf, q: SeqModel, n: int) -> RedundancyReport:
    """E_p log2 p(X^n)/q(X^n) by walking the tree of all length-n prefixes."""
    if not p.finite:
        raise ModeError(f"exact redundancy needs finite support, got {p.label}")
    atoms = [(x, float(m), log2_of(m)) for x, m in p.atoms()]
    if len(atoms) ** n > MAX_ENUMERATION:
        raise ResourceError(f"{len(atoms)}**{n} sequences exceeds {MAX_ENUMERATION}")
    if n == 0:
        return RedundancyReport(0, 0.0, 0.0, "exact", label=p.label)

    def walk(model: SeqModel, weight: float, depth: int, prefix: tuple) -> float:
        acc = []
        for x, px, lpx in atoms:
            lq = model.log2_prob_step(x)
            if lq == -math.inf:
                raise InfiniteDivergenceError("q assigns zero to a positive-probability path",
                                              path=prefix + (x,))
            w = weight * px
            acc.append(w * (lpx - lq))
            if depth + 1 < n:
                child = model.clone()
                child.update(x)
                acc.append(walk(child, w, depth + 1, prefix + (x,)))
        return math.fsum(acc)

    value = walk(q.fresh(), 1.0, 0, ())
    return RedundancyReport(n, value, value / n, "exact", label=p.label)


def _mc_chunk(args):
    p, q, n, size, seed, job = args
    rng = np.random.default_rng([seed, job])
    paths = sample(p, rng, n * size).reshape(size, n)
    lp = p.log2_prob_array(paths).sum(axis=1)
    lq = np.asarray(q.log2_prob_batch(paths), dtype=float)
    bad = np.flatnonzero(lq == -np.inf)
    if bad.size:
        return None, tuple(int(v) for v in paths[bad[0]])
    return lp - lq, None


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("UNIVCODE_WORKERS", "1") or 1)
    return max(1, workers)


def mc_redundancy(p: Pmf, q: SeqModel, n: int, trials: int = 10_000, seed: int = 0,
                  workers: int | None = None, chunk: int = 256) -> RedundancyReport:
    """Monte-Carlo estimate with a 95% normal-approximation interval.

    Trials are split into jobs of ``chunk`` paths; job ``i`` draws from
    ``default_rng([seed, i])`` so results do not depend on the worker count.
    """
    if trials < 30:
        raise PreconditionError("mc_redundancy needs trials >= 30")
    if n < 1:
        raise DomainError("n must be >= 1")
    jobs = [(p, q, n, min(chunk, trials - s), seed, i)
            for i, s in enumerate(range(0, trials, chunk))]
    w = _workers(workers)
    if w > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=w) as ex:
            results = list(ex.map(_mc_chunk, jobs))
    else:
        results = [_mc_chunk(j) for j in jobs]
    parts = []
    for vals, bad in results:
        if bad is not None:
            raise InfiniteDivergenceError("q assigns zero probability to a sampled path", path=bad)
        parts.append(vals)
    v = np.concatenate(parts)
    mean = float(v.mean())
    ci = Z95 * float(v.std(ddof=1)) / math.sqrt(len(v))
    return RedundancyReport(n, mean, mean / n, "monte_carlo", ci, trials, seed, label=p.label)


def redundancy(p: Pmf, q: SeqModel, n: int, method: str = "exact", trials: int = 10_000,
               seed: int = 0, workers: int | None = None) -> RedundancyReport:
    if method == "exact":
        return exact_redundancy(p, q, n)
    if method in ("monte_carlo", "mc"):
        return mc_redundancy(p, q, n, trials, seed, workers)
    if method == "closed_form":
        if not isinstance(q, KnownSource):
            raise ModeError("closed_form redundancy needs a known-source (i.i.d.) model")
        value = n * divergence(p, q.p)
        return RedundancyReport(n, value, value / n if n else 0.0, "closed_form", label=p.label)
    raise ModeError(f"unknown method {method!r}")


def strong_redundancy(members: Sequence[Pmf], q: SeqModel, n: int, method: str = "exact",
                      trials: int = 10_000, seed: int = 0, per_symbol: bool = False,
                      workers: int | None = None) -> float:
    """max over a finite member grid; the upper CI edge in Monte-Carlo mode.

    Over an infinite class this is only a lower estimate of the supremum.
    """
    reports = strong_redundancy_reports(members, q, n, method, trials, seed, workers)
    best = max(r.upper for r in reports)
    return best / n if per_symbol else best


def strong_redundancy_reports(members, q, n, method="exact", trials=10_000, seed=0, workers=None):
    if not members:
        raise PreconditionError("member list is empty")
    return [redundancy(p, q, n, method, trials, seed, workers) for p in members]


# ---------------------------------------------------------------------------
# distinguishability lower bound


def _set_prob(p: Pmf, s: Iterable) -> Fraction | float:
    total = 0
    for e in s:
        if isinstance(e, tuple):
            total += math.prod((p.exact_prob(x) for x in e), start=Fraction(1))
        else:
            total += p.exact_prob(e)
    return total


def distinguishability_lb(sets: Sequence[Iterable], members: Sequence[Pmf], delta) -> float:
    """delta * log2 m, after checking the sets are disjoint and p_i(S_i) >= delta.

    Elements of a set are naturals, or tuples of naturals read as i.i.d. strings.
    """
    if not delta > 0.5:
        raise PreconditionError(f"delta must exceed 1/2, got {delta}")
    if len(sets) != len(members) or not sets:
        raise PreconditionError("need one member per set, and at least one set")
    sets = [set(s) for s in sets]
    owner: dict = {}
    for i, s in enumerate(sets):
        for e in s:
            if e in owner:
                raise PreconditionError(f"sets {owner[e]} and {i} overlap at {e!r}")
            owner[e] = i
    for i, (s, p) in enumerate(zip(sets, members)):
        mass = _set_prob(p, s)
        if mass < delta and float(delta) - float(mass) > 1e-12:
            raise PreconditionError(f"member {i} ({p.label}) gives its set mass {float(mass)} < {delta}")
    return float(delta) * math.log2(len(sets))


class ClassBBound(NamedTuple):
    delta: Fraction
    bound: float


def classB_lb(n: int, explicit_limit: int = 6) -> ClassBBound:
    """Length-n lower bound for class B: delta * n with delta = 1 - (1 - 1/n)**n.

    The sets S_i = {1, 2**n + i - 1}**n minus the all-ones string pair with
    members p_{1/n, i}.  Up to ``explicit_limit`` they are materialised and
    checked through :func:`distinguishability_lb`; past it the disjointness
    and set masses hold by construction.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    eps = Fraction(1, n)
    delta = 1 - (1 - eps) ** n
    if n > explicit_limit:
        return ClassBBound(delta, float(delta) * n)
    members = [ClassB(eps, i) for i in range(1, 2**n + 1)]
    sets = []
    for p in members:
        strings = set(itertools.product((1, p.atom), repeat=n))
        strings.discard((1,) * n)
        sets.append(strings)
    for p, s in zip(members, sets):
        if _set_prob(p, s) != delta:
            raise AssertionError(f"{p.label}: set mass differs from 1 - (1-1/n)^n")
    return ClassBBound(delta, distinguishability_lb(sets, members, delta))


# ---------------------------------------------------------------------------
# class I adversary


def adversarial_I_partials(q: Pmf, L: int) -> tuple[list[int], np.ndarray]:
    """Offsets chosen by the adversary and the cumulative partial divergences."""
    if L < 1:
        raise DomainError("L must be >= 1")
    offsets, terms = [], []
    for i in range(1, L + 1):
        x = q.argmin_in(2**i, 2 ** (i + 1) - 1)
        offsets.append(x - 2**i)
        a = Fraction(1, i * (i + 1))
        terms.append(float(a) * (log2_of(a) - q.log2_prob(x)))
    return offsets, np.cumsum(terms)


def adversarial_I(q: Pmf, L: int) -> tuple[ClassI, float]:
    """Member of class I that q codes worst in each T_i, i <= L.

    In block T_i the adversary picks the x minimising q(x) (smallest x on
    ties); since |T_i| = 2**i that x has q(x) <= 2**-i.  Returns the member and
    sum_{i<=L} p(x_i) log2(p(x_i)/q(x_i)).
    """
    offsets, partial = adversarial_I_partials(q, L)
    return ClassI(offsets=offsets), float(partial[-1])


# ---------------------------------------------------------------------------
# tail condition


class TailRow(NamedTuple):
    delta: float
    tail_entropy: float
    tail_divergence: float
    entropy_member: str
    divergence_member: str


def check_tail_condition(members: Sequence[Pmf], q1: Pmf, delta_grid: Sequence[float]) -> list[TailRow]:
    """Suprema over ``members`` of the tail entropy and tail divergence per delta.

    Pass Fractions for deltas that sit exactly on an atom mass; a float there
    may round to either side of the boundary.
    """
    if not members:
        raise PreconditionError("member list is empty")
    grid = list(delta_grid)
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError("delta grid must be strictly decreasing")
    rows = []
    for delta in grid:
        ent = [(tail_entropy(p, delta), p.label) for p in members]
        div = [(tail_divergence(p, q1, delta), p.label) for p in members]
        e, el = max(ent, key=lambda t: t[0])
        d, dl = max(div, key=lambda t: t[0])
        rows.append(TailRow(float(delta), e, d, el, dl))
    return rows


# ---------------------------------------------------------------------------
# coupon-collector bound


@dataclass(frozen=True)
class CouponBase:
    base: str
    threshold: float
    frequent: int
    empirical: float
    stderr: float
    bound_tight: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.empirical <= self.bound

    @property
    def holds_tight(self) -> bool:
        return self.empirical <= self.bound_tight


@dataclass(frozen=True)
class CouponReport:
    j: int
    trials: int
    seed: int
    by_base: dict


def coupon_bound_check(d: Pmf, j: int, trials: int = 100_000, seed: int = 0,
                       bases: Sequence = (2, math.e), chunk: int = 10_000) -> CouponReport:
    """Frequency of B_j: some symbol with p(x) >= 2 log(j)/j is missing from X^j.

    The log base is unresolved, so each base in ``bases`` gets its own threshold,
    its own event and its own pair of bounds; nothing is asserted here.
    """
    if j < 3:
        raise PreconditionError("j must be >= 3")
    out = {}
    thresholds = {}
    for b in bases:
        lj = math.log(j, b)
        thresholds[b] = 2 * lj / j
    frequent = {b: [x for x, _ in head_atoms(d, t)] for b, t in thresholds.items()}
    misses = {b: 0 for b in bases}
    done = 0
    job = 0
    while done < trials:
        size = min(chunk, trials - done)
        draws = sample(d, np.random.default_rng([seed, job]), size * j).reshape(size, j)
        for b in bases:
            if frequent[b]:
                seen = np.ones(size, dtype=bool)
                for x in frequent[b]:
                    seen &= (draws == x).any(axis=1)
                misses[b] += int((~seen).sum())
        done += size
        job += 1
    for b in bases:
        lj = math.log(j, b)
        emp = misses[b] / trials
        name = "e" if b == math.e else str(b)
        out[name] = CouponBase(
            base=name,
            threshold=thresholds[b],
            frequent=len(frequent[b]),
            empirical=emp,
            stderr=math.sqrt(emp * (1 - emp) / trials),
            bound_tight=(j / (2 * lj)) * (1 - 2 * lj / j) ** j,
            bound=1 / (j * lj),
        )
    return CouponReport(j, trials, seed, out)


# ---------------------------------------------------------------------------
# finite redundancy => tight: the two inequalities used in the argument


class BndprcRow(NamedTuple):
    m: float
    tail_prob: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class BndprcReport:
    R: float
    rows: list
    floor: float
    floor_bound: float

    @property
    def floor_holds(self) -> bool:
        return self.floor >= self.floor_bound - 1e-12

    @property
    def holds(self) -> bool:
        return self.floor_holds and all(r.holds for r in self.rows)


def check_lemma_bndprc(p: Pmf, q: Pmf, m_grid: Sequence[float]) -> BndprcReport:
    """p(|log2 p/q| > m) <= (R + 2 log2(e)/e)/m, and the negative-part floor.

    R is D(p||q).  The floor is sum over {p < q} of p log2(p/q), which convexity
    keeps above -log2(e)/e.
    """
    if not p.finite:
        raise ModeError("check_lemma_bndprc needs finite-support p")
    R = divergence(p, q)
    if math.isinf(R):
        raise InfiniteDivergenceError(f"D({p.label}||{q.label}) is infinite")
    llr = [(float(m), log2_of(m) - q.log2_prob(x)) for x, m in p.atoms()]
    c = 2 * math.log2(math.e) / math.e
    rows = []
    for m in m_grid:
        tail = math.fsum(pm for pm, l in llr if abs(l) > m)
        bound = (R + c) / m
        rows.append(BndprcRow(m, tail, bound, tail <= bound))
    floor = math.fsum(pm * l for pm, l in llr if l < 0)
    return BndprcReport(R, rows, floor, -math.log2(math.e) / math.e)
