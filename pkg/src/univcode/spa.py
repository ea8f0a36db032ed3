"""Sequential probability assignments over the naturals.

A model exposes its predictive distribution one step at a time.  For coding,
each step is also described as a :class:`Step`: a finite list of explicitly
predicted symbols plus an *escape* mass, with escaped symbols distributed by a
``base`` measure over all naturals.  ``q(x) = p_listed(x)`` for a listed symbol
and ``escape * base(x)`` otherwise.  Hybrid models are allowed to be
sub-probabilities (their base re-covers listed symbols).
"""

from __future__ import annotations

import bisect
import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import dists
from .dists import Pmf, build_qU, point_mass
from .errors import DomainError, ZeroProbabilityError
from .patterns import pattern_of

__all__ = [
    "BayesMixture",
    "Hybrid",
    "KnownSource",
    "PatternSPA",
    "SeqModel",
    "Step",
    "bayes_mixture",
    "build_qU",
    "hybrid",
    "known_source",
    "pattern_spa",
    "spa_from_descriptor",
]

LN2 = math.log(2)


class Step(NamedTuple):
    seen: list[tuple[int, float]]
    escape: float
    base: object | None


class SeqModel:
    """Base class: predictive distribution, state update, replay."""

    def prob(self, x: int) -> float:
        return 2.0 ** self.log2_prob_step(x)

    def log2_prob_step(self, x: int) -> float:
        p = self.prob(x)
        return math.log2(p) if p > 0 else -math.inf

    def update(self, x: int) -> None:
        raise NotImplementedError

    def step(self) -> Step:
        raise NotImplementedError

    def fresh(self) -> "SeqModel":
        """A new instance in the initial state."""
        raise NotImplementedError

    def clone(self) -> "SeqModel":
        """A copy of the current state; construction inputs are shared."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def log2_prob(self, seq: Sequence[int]) -> float:
        """log2 q(x^n) from the initial state; -inf when some step has q = 0."""
        m = self.fresh()
        total = 0.0
        for x in seq:
            x = int(x)
            lp = m.log2_prob_step(x)
            if lp == -math.inf:
                return -math.inf
            total += lp
            m.update(x)
        return total

    def log2_prob_batch(self, paths) -> np.ndarray:
        return np.array([self.log2_prob(row) for row in paths])


class KnownSource(SeqModel):
    """q = p at every step."""

    def __init__(self, p: Pmf):
        self.p = p

    def prob(self, x):
        return self.p.prob(x)

    def log2_prob_step(self, x):
        return self.p.log2_prob(x)

    def update(self, x):
        pass

    def step(self):
        return Step([], 1.0, self.p)

    def fresh(self):
        return self

    def clone(self):
        return self

    def log2_prob(self, seq):
        seq = np.asarray(seq)
        return float(self.p.log2_prob_array(seq).sum()) if seq.size else 0.0

    def log2_prob_batch(self, paths):
        return self.p.log2_prob_array(np.asarray(paths)).sum(axis=1)

    def descriptor(self):
        return {"spa": "known", "source": self.p.descriptor()}


class MixtureMeasure:
    """sum_m w_m p_m as a base measure for coding."""

    def __init__(self, members: Sequence[Pmf], weights: np.ndarray):
        keep = [(m, w) for m, w in zip(members, weights) if w > 0]
        self.members = [m for m, _ in keep]
        self.weights = [float(w) for _, w in keep]

    def prob(self, x):
        return math.fsum(w * m.prob(x) for m, w in zip(self.members, self.weights))

    def mass_range(self, lo, hi=None):
        return math.fsum(w * m.mass_range(lo, hi) for m, w in zip(self.members, self.weights))

    def uniform_on(self, lo, hi):
        return all(m.uniform_on(lo, hi) for m in self.members)


class BayesMixture(SeqModel):
    """Posterior-weighted mixture of i.i.d. members."""

    def __init__(self, members: Sequence[Pmf], prior: Sequence[float] | None = None):
        if not members:
            raise DomainError("mixture needs at least one member")
        self.members = list(members)
        prior = np.full(len(members), 1 / len(members)) if prior is None else np.asarray(prior, float)
        if prior.shape != (len(members),) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-9:
            raise DomainError("prior must be a probability vector over the members")
        self.prior = prior
        with np.errstate(divide="ignore"):
            self._logw = np.log2(prior)

    @property
    def weights(self) -> np.ndarray:
        return np.exp2(self._logw)

    def _member_logs(self, x):
        return np.array([m.log2_prob(x) for m in self.members])

    def log2_prob_step(self, x):
        v = self._logw + self._member_logs(x)
        if np.all(v == -np.inf):
            return -math.inf
        return float(logsumexp(v * LN2) / LN2)

    def update(self, x):
        v = self._logw + self._member_logs(x)
        if np.all(v == -np.inf):
            raise ZeroProbabilityError(f"symbol {x} is impossible under every member", symbol=x)
        self._logw = v - logsumexp(v * LN2) / LN2

    def step(self):
        return Step([], 1.0, MixtureMeasure(self.members, self.weights))

    def fresh(self):
        return BayesMixture(self.members, self.prior)

    def clone(self):
        c = BayesMixture.__new__(BayesMixture)
        c.members, c.prior, c._logw = self.members, self.prior, self._logw.copy()
        return c

    def log2_prob(self, seq):
        seq = np.asarray(seq)
        with np.errstate(divide="ignore"):
            ll = np.log2(self.prior) + np.array(
                [m.log2_prob_array(seq).sum() if seq.size else 0.0 for m in self.members])
        if np.all(ll == -np.inf):
            return -math.inf
        return float(logsumexp(ll * LN2) / LN2)

    def descriptor(self):
        return {"spa": "mixture", "members": [m.descriptor() for m in self.members],
                "prior": [float(w) for w in self.prior]}


class PatternSPA(SeqModel):
    """Two-parameter (discount d, strength theta) rule over pattern indices.

    At step i (i symbols seen, K distinct) index j with count c_j gets
    (c_j - d)/(i + theta) and a new index gets (theta + d K)/(i + theta).
    The first index is forced.
    """

    def __init__(self, d: float = 0.5, theta: float = 0.5):
        if not 0 <= d < 1:
            raise DomainError("discount must lie in [0, 1)")
        if not theta > -d:
            raise DomainError("strength must exceed -discount")
        self.d, self.theta = float(d), float(theta)
        self.counts: list[int] = []
        self.total = 0

    @property
    def distinct(self) -> int:
        return len(self.counts)

    def prob(self, j):
        i, K = self.total, len(self.counts)
        if i == 0:
            return 1.0 if j == 1 else 0.0
        if 1 <= j <= K:
            return (self.counts[j - 1] - self.d) / (i + self.theta)
        if j == K + 1:
            return self.p_new()
        return 0.0

    def p_new(self) -> float:
        if self.total == 0:
            return 1.0
        return (self.theta + self.d * len(self.counts)) / (self.total + self.theta)

    def update(self, j):
        K = len(self.counts)
        if j == K + 1:
            self.counts.append(1)
        elif 1 <= j <= K:
            self.counts[j - 1] += 1
        else:
            raise ZeroProbabilityError(f"index {j} is not a valid next pattern index", symbol=j)
        self.total += 1

    def step(self):
        i = self.total
        seen = [(j, (c - self.d) / (i + self.theta)) for j, c in enumerate(self.counts, 1)]
        return Step(seen, self.p_new(), point_mass(len(self.counts) + 1))

    def fresh(self):
        return PatternSPA(self.d, self.theta)

    def clone(self):
        c = PatternSPA(self.d, self.theta)
        c.counts, c.total = list(self.counts), self.total
        return c

    def log2_prob_counts(self, counts) -> float:
        """log2 probability of any pattern with these index multiplicities."""
        counts = np.asarray(counts, dtype=float)
        n, K = counts.sum(), len(counts)
        if K == 0:
            return 0.0
        d, th = self.d, self.theta
        # prod_{i<K} (theta + i d) directly; the gamma-ratio form cancels badly as d -> 0
        new = float(np.log(th + d * np.arange(1, K)).sum())
        seats = float(np.sum(gammaln(counts - d) - gammaln(1 - d)))
        norm = gammaln(n + th) - gammaln(1 + th)
        return float((new + seats - norm) / LN2)

    def log2_prob(self, psi):
        psi = [int(j) for j in psi]
        if pattern_of(psi) != tuple(psi):
            return -math.inf
        return self.log2_prob_counts(np.bincount(psi)[1:]) if psi else 0.0

    def descriptor(self):
        return {"spa": "pattern", "d": self.d, "theta": self.theta}


class ExcludingMeasure:
    """q1 conditioned on avoiding a set of already-seen symbols."""

    def __init__(self, q1: Pmf, seen: Sequence[int]):
        self.q1 = q1
        self.seen = sorted(seen)
        self._seen_set = set(seen)
        self.norm = 1.0 - math.fsum(q1.prob(s) for s in seen)

    def prob(self, x):
        return 0.0 if x in self._seen_set else self.q1.prob(x) / self.norm

    def mass_range(self, lo, hi=None):
        a = bisect.bisect_left(self.seen, lo)
        b = len(self.seen) if hi is None else bisect.bisect_right(self.seen, hi)
        inside = math.fsum(self.q1.prob(s) for s in self.seen[a:b])
        return max(self.q1.mass_range(lo, hi) - inside, 0.0) / self.norm

    def uniform_on(self, lo, hi):
        a = bisect.bisect_left(self.seen, lo)
        if a < len(self.seen) and self.seen[a] <= hi:
            return False
        return self.q1.uniform_on(lo, hi)


class Hybrid(SeqModel):
    """Pattern coder for the index sequence, ``q1`` for each new symbol.

    q(x^n) = prod_i q_pattern(psi_i | psi^{i-1}) * prod_{new j} q1(x_j).  With
    ``renormalize=False`` (the default) q1 keeps the mass of symbols already
    seen, so q is a sub-probability.
    """

    def __init__(self, pattern: PatternSPA, q1: Pmf, renormalize: bool = False):
        self.pattern = pattern.fresh()
        self.q1 = q1
        self.renormalize = renormalize
        self.index: dict[int, int] = {}
        self._seen_mass = 0.0

    def _log2_q1_new(self, x):
        lq = self.q1.log2_prob(x)
        if self.renormalize and lq > -math.inf:
            lq -= math.log2(1.0 - self._seen_mass)
        return lq

    def log2_prob_step(self, x):
        j = self.index.get(x)
        if j is not None:
            p = self.pattern.prob(j)
            return math.log2(p) if p > 0 else -math.inf
        pn = self.pattern.p_new()
        if pn <= 0:
            return -math.inf
        return math.log2(pn) + self._log2_q1_new(x)

    def update(self, x):
        j = self.index.get(x)
        if j is None:
            j = self.index[x] = len(self.index) + 1
            if self.renormalize:
                self._seen_mass += self.q1.prob(x)
        self.pattern.update(j)

    def step(self):
        ps = self.pattern.step()
        symbols = list(self.index)  # insertion order = index order
        seen = [(s, p) for s, (_, p) in zip(symbols, ps.seen)]
        base = ExcludingMeasure(self.q1, symbols) if self.renormalize and symbols else self.q1
        return Step(seen, ps.escape, base)

    def fresh(self):
        return Hybrid(self.pattern, self.q1, self.renormalize)

    def clone(self):
        c = Hybrid(self.pattern, self.q1, self.renormalize)
        c.pattern = self.pattern.clone()
        c.index = dict(self.index)
        c._seen_mass = self._seen_mass
        return c

    def log2_prob(self, seq):
        if self.renormalize:
            return super().log2_prob(seq)
        seq = np.asarray(seq)
        if seq.size == 0:
            return 0.0
        uniq, counts = np.unique(seq, return_counts=True)
        new = self.q1.log2_prob_array(uniq)
        if np.any(new == -np.inf):
            return -math.inf
        return self.pattern.log2_prob_counts(counts) + float(new.sum())

    def descriptor(self):
        return {"spa": "hybrid",
                "pattern": {"d": self.pattern.d, "theta": self.pattern.theta},
                "q1": self.q1.descriptor(),
                "renormalize": self.renormalize}


def known_source(d: Pmf) -> KnownSource:
    return KnownSource(d)


def bayes_mixture(members: Sequence[Pmf], prior: Sequence[float] | None = None) -> BayesMixture:
    return BayesMixture(members, prior)


def pattern_spa(d: float = 0.5, theta: float = 0.5) -> PatternSPA:
    return PatternSPA(d, theta)


def hybrid(pattern: PatternSPA | None = None, q1: Pmf | None = None,
           renormalize: bool = False) -> Hybrid:
    return Hybrid(pattern or PatternSPA(), q1 if q1 is not None else build_qU(), renormalize)


def spa_from_descriptor(desc: dict) -> SeqModel:
    kind = desc.get("spa")
    try:
        if kind == "known":
            return KnownSource(dists.from_descriptor(desc["source"]))
        if kind == "mixture":
            return BayesMixture([dists.from_descriptor(m) for m in desc["members"]],
                                desc.get("prior"))
        if kind == "pattern":
            return PatternSPA(float(desc.get("d", 0.5)), float(desc.get("theta", 0.5)))
        if kind == "hybrid":
            pat = desc.get("pattern", {})
            q1 = dists.from_descriptor(desc["q1"]) if "q1" in desc else build_qU()
            return Hybrid(PatternSPA(float(pat.get("d", 0.5)), float(pat.get("theta", 0.5))),
                          q1, bool(desc.get("renormalize", False)))
    except KeyError as e:
        raise DomainError(f"spa descriptor {kind!r} lacks field {e}") from None
    raise DomainError(f"unknown spa {kind!r}")
