"""Distributions over the naturals.

Every distribution is described by an increasing sequence of *blocks*: runs of
consecutive naturals that all carry the same probability.  Finite explicit
distributions use one-atom blocks; the structured classes (``ClassU`` with its
2**(k*k) equiprobable atoms, the ``q_U`` envelope) use a handful of huge blocks,
which is what makes exact entropy and divergence sums possible when the support
has 2**2500 atoms.  Masses are kept as ``Fraction`` wherever they are rational
so that nothing underflows; logarithms are taken in base 2 throughout.
"""

from __future__ import annotations

import bisect
import itertools
import math
import random
from fractions import Fraction
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import mpmath
import numpy as np
from scipy.special import polygamma, spence

from .errors import (
    DomainError,
    InfiniteDivergenceError,
    ModeError,
    PreconditionError,
    ResourceError,
    UnboundedEntropyError,
)

__all__ = [
    "Block",
    "Cdf",
    "ClassB",
    "ClassI",
    "ClassU",
    "ExplicitPmf",
    "GeometricPmf",
    "HarmonicPmf",
    "Pmf",
    "QU",
    "binary_entropy",
    "build_qU",
    "cdf",
    "divergence",
    "entropy",
    "from_descriptor",
    "head_atoms",
    "inv_cdf",
    "log2_of",
    "pmf",
    "point_mass",
    "sample",
    "tail_divergence",
    "tail_entropy",
    "tightness_bound",
]

LOG2E = math.log2(math.e)
MAX_BLOCKS = 10**6

Mass = Fraction | float


def log2_of(m: Mass) -> float:
    """log2 of a mass, exact for Fractions with huge denominators."""
    if m <= 0:
        return -math.inf
    if isinstance(m, Fraction):
        return math.log2(m.numerator) - math.log2(m.denominator)
    return math.log2(m)


def binary_entropy(a: float) -> float:
    if a <= 0 or a >= 1:
        return 0.0
    return -a * math.log2(a) - (1 - a) * math.log2(1 - a)


def _as_fraction(v) -> Fraction:
    # floats are read as their decimal literal: 0.1 means 1/10
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


class Block(NamedTuple):
    start: int
    count: int
    mass: Mass

    @property
    def last(self) -> int:
        return self.start + self.count - 1

    @property
    def total(self) -> Mass:
        return self.count * self.mass

    @property
    def log2_mass(self) -> float:
        return log2_of(self.mass)


class Pmf:
    """A probability mass function on {0, 1, 2, ...}.

    Subclasses provide ``blocks()``; everything else has a generic block-based
    implementation which infinite-support subclasses override where a closed
    form exists.  Instances are immutable.
    """

    label = "pmf"
    finite = True
    #: block masses strictly decrease, so {x : p(x) >= delta} is a block prefix
    decreasing_blocks = False
    #: p is nonincreasing on [min support, inf) and has no gaps there
    nonincreasing = False

    def blocks(self) -> Iterator[Block]:
        raise NotImplementedError

    def blocks_from(self, x: int) -> Iterator[Block]:
        """Blocks whose last atom is >= x, in increasing order."""
        it = iter(self.blocks())
        for n, b in enumerate(it):
            if b.last >= x:
                yield b
                break
            if n > MAX_BLOCKS:
                raise ResourceError(f"{self.label}: more than {MAX_BLOCKS} blocks below {x}")
        else:
            return
        yield from it

    def block_at(self, x: int) -> Block | None:
        for b in self.blocks_from(x):
            return b if b.start <= x else None
        return None

    def exact_prob(self, x: int) -> Mass:
        b = self.block_at(x) if x >= 0 else None
        return b.mass if b is not None else 0

    def prob(self, x: int) -> float:
        return float(self.exact_prob(x))

    def __call__(self, x: int) -> float:
        return self.prob(x)

    def log2_prob(self, x: int) -> float:
        return log2_of(self.exact_prob(x))

    def log2_prob_array(self, xs) -> np.ndarray:
        xs = np.asarray(xs)
        if xs.size == 0:
            return np.zeros(xs.shape)
        uniq, inv = np.unique(xs, return_inverse=True)
        vals = np.array([self.log2_prob(int(u)) for u in uniq])
        return vals[inv].reshape(xs.shape)

    def upper_tail(self, x: int) -> Mass:
        """P(X > x)."""
        if not self.finite:
            raise NotImplementedError(f"{self.label}: no closed-form tail")
        total = 0
        for b in self.blocks_from(x + 1):
            a = max(b.start, x + 1)
            total += (b.last - a + 1) * b.mass
        return total

    def mass_range(self, lo: int, hi: int | None = None) -> float:
        """P(lo <= X <= hi); ``hi=None`` means no upper limit."""
        lo = max(lo, 0)
        if hi is None:
            return float(self.upper_tail(lo - 1))
        if hi < lo:
            return 0.0
        total = 0
        for n, b in enumerate(self.blocks_from(lo)):
            if b.start > hi:
                break
            if n > MAX_BLOCKS:
                raise ResourceError(f"{self.label}: range [{lo}, {hi}] spans too many blocks")
            total += (min(b.last, hi) - max(b.start, lo) + 1) * b.mass
        return float(total)

    def uniform_on(self, lo: int, hi: int) -> bool:
        """True when every x in [lo, hi] has the same positive mass."""
        b = self.block_at(lo)
        return b is not None and b.last >= hi

    def argmin_in(self, lo: int, hi: int) -> int:
        """Smallest x in [lo, hi] minimising p(x)."""
        if self.nonincreasing and lo >= self.min_support():
            return hi
        best_x, best = None, None
        pos = lo
        for n, b in enumerate(self.blocks_from(lo)):
            if pos < b.start:  # gap of zero mass
                return pos
            if b.start > hi:
                break
            if n > MAX_BLOCKS:
                raise ResourceError(f"{self.label}: argmin over [{lo}, {hi}] too large")
            lm = b.log2_mass
            if best is None or lm < best:
                best, best_x = lm, max(b.start, lo)
            pos = b.last + 1
            if pos > hi:
                break
        if pos <= hi:
            return pos
        return best_x

    def min_support(self) -> int:
        return next(iter(self.blocks())).start

    def support_max(self) -> int | None:
        if not self.finite:
            return None
        last = None
        for b in self.blocks():
            last = b.last
        return last

    def atoms(self, limit: int = MAX_BLOCKS) -> Iterator[tuple[int, Mass]]:
        """Enumerate (x, p(x)) over the support, at most ``limit`` atoms."""
        n = 0
        for b in self.blocks():
            for x in range(b.start, b.start + b.count):
                if n >= limit:
                    raise ResourceError(f"{self.label}: more than {limit} atoms")
                yield x, b.mass
                n += 1

    def entropy(self) -> float:
        if not self.finite:
            raise UnboundedEntropyError(f"{self.label}: no entropy certificate")
        return math.fsum(float(b.total) * -b.log2_mass for b in self.blocks())

    def cdf(self) -> "Cdf":
        return Cdf(self)

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.label}>"


class FinitePmf(Pmf):
    """Finite support given as a tuple of blocks."""

    def __init__(self, blocks: Iterable[Block], label: str = "finite"):
        bl = tuple(b for b in blocks if b.count > 0 and b.mass > 0)
        if not bl:
            raise DomainError("empty support")
        for a, b in zip(bl, bl[1:]):
            if b.start <= a.last:
                raise DomainError("blocks must be increasing and disjoint")
        if bl[0].start < 0:
            raise DomainError("support must be nonnegative")
        self._blocks = bl
        self._starts = [b.start for b in bl]
        self.label = label
        suffix = [0] * (len(bl) + 1)
        for i in range(len(bl) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + bl[i].total
        self._suffix = suffix
        if abs(float(suffix[0]) - 1.0) > 1e-12:
            raise DomainError(f"{label}: masses sum to {float(suffix[0])!r}, not 1")

    def blocks(self):
        return iter(self._blocks)

    def blocks_from(self, x):
        i = bisect.bisect_right(self._starts, x) - 1
        if i < 0 or self._blocks[i].last < x:
            i += 1
        return iter(self._blocks[i:])

    def upper_tail(self, x):
        i = bisect.bisect_right(self._starts, x) - 1
        if i < 0:
            return self._suffix[0]
        b = self._blocks[i]
        partial = (b.last - x) * b.mass if b.last > x else 0
        return self._suffix[i + 1] + partial


class ExplicitPmf(FinitePmf):
    """Finite pmf from a mapping ``{x: p}``; one block per atom."""

    def __init__(self, probs: dict, label: str | None = None):
        items = []
        for x, p in sorted((int(x), p) for x, p in probs.items()):
            if p < 0:
                raise DomainError(f"negative mass at {x}")
            if p > 0:
                items.append(Block(x, 1, p))
        self.probs = {b.start: b.mass for b in items}
        super().__init__(items, label or f"explicit{sorted(self.probs)[:6]}")

    def descriptor(self):
        return {"class": "explicit",
                "probs": {str(x): _mass_json(p) for x, p in self.probs.items()}}


def point_mass(x: int) -> ExplicitPmf:
    return ExplicitPmf({x: Fraction(1)}, label=f"point[{x}]")


def _mass_json(p):
    if isinstance(p, Fraction):
        return str(p) if p.denominator != 1 else int(p)
    return p


class ClassB(FinitePmf):
    """Two-atom member p_{eps,j}: 1-eps at 1 and eps at 2**n_eps + j - 1."""

    def __init__(self, eps, j: int):
        eps = _as_fraction(eps)
        if not 0 < eps <= 1:
            raise DomainError(f"eps must lie in (0, 1], got {eps}")
        n_eps = math.floor(1 / eps)
        if not 1 <= j <= 2**n_eps:
            raise DomainError(f"j must lie in [1, 2**{n_eps}], got {j}")
        self.eps, self.j, self.n_eps = eps, j, n_eps
        self.atom = 2**n_eps + j - 1
        super().__init__([Block(1, 1, 1 - eps), Block(self.atom, 1, eps)],
                         label=f"B(eps={eps},j={j})")

    def entropy(self):
        return binary_entropy(float(self.eps))

    def descriptor(self):
        return {"class": "B", "epsilon": str(self.eps), "j": self.j}


class ClassU(FinitePmf):
    """p_k: mass 1 - 1/k**2 at 0, uniform over {1..2**(k*k)} for the rest."""

    def __init__(self, k: int):
        if k < 1:
            raise DomainError("k must be >= 1")
        self.k = k
        big = 2 ** (k * k)
        super().__init__(
            [Block(0, 1, 1 - Fraction(1, k * k)), Block(1, big, Fraction(1, k * k * big))],
            label=f"U(k={k})",
        )

    def entropy(self):
        return 1.0 + binary_entropy(1 / self.k**2)

    def log2_prob_array(self, xs):
        xs = np.asarray(xs)
        k = self.k
        head = math.log2(1 - 1 / k**2) if k > 1 else -math.inf
        out = np.where(xs == 0, head, -(2 * math.log2(k) + k * k))
        if k * k < 63:
            out = np.where((xs < 0) | (xs > 2 ** (k * k)), -math.inf, out)
        return out

    def descriptor(self):
        return {"class": "U", "k": self.k}


def _pair_series_entropy() -> float:
    """sum_{i>=1} log2(i(i+1)) / (i(i+1)), via Euler-Maclaurin past N."""
    with mpmath.workdps(30):
        f = lambda x: mpmath.log(x * (x + 1), 2) / (x * (x + 1))
        n = 2000
        head = mpmath.fsum(f(i) for i in range(1, n))
        # next omitted correction is f^(5)(n)/30240 ~ n**-7
        tail = (mpmath.quad(f, [n, mpmath.inf]) + f(n) / 2
                - mpmath.diff(f, n, 1) / 12 + mpmath.diff(f, n, 3) / 720)
        return float(head + tail)


_PAIR_ENTROPY: float | None = None


def _pair_entropy() -> float:
    global _PAIR_ENTROPY
    if _PAIR_ENTROPY is None:
        _PAIR_ENTROPY = _pair_series_entropy()
    return _PAIR_ENTROPY


class ClassI(Pmf):
    """A member of the tight class with infinite redundancy.

    For every i >= 1 one element ``2**i + j_i`` of the dyadic block
    T_i = {2**i, ..., 2**(i+1) - 1} receives mass 1/(i(i+1)).  The offsets j_i
    come from ``offsets`` (explicit prefix), then ``selector`` (callable), then
    a per-block deterministic draw when ``seed`` is given, else ``default``.
    """

    finite = False
    decreasing_blocks = True

    def __init__(self, offsets: Sequence[int] = (), seed: int | None = None,
                 default: int = 0, selector: Callable[[int], int] | None = None):
        self.offsets = tuple(int(j) for j in offsets)
        self.seed, self.default, self.selector = seed, default, selector
        self._cache: dict[int, int] = {}
        for i, j in enumerate(self.offsets, start=1):
            if not 0 <= j < 2**i:
                raise DomainError(f"offset {j} outside T_{i}")
        tag = f"seed={seed}" if seed is not None else f"offsets={list(self.offsets[:4])}"
        self.label = f"I({tag})"

    @classmethod
    def random(cls, seed: int) -> "ClassI":
        return cls(seed=seed)

    def offset(self, i: int) -> int:
        if i <= len(self.offsets):
            return self.offsets[i - 1]
        j = self._cache.get(i)
        if j is None:
            if self.selector is not None:
                j = int(self.selector(i))
            elif self.seed is not None:
                j = random.Random(f"classI:{self.seed}:{i}").randrange(2**i)
            else:
                j = self.default
            if not 0 <= j < 2**i:
                raise DomainError(f"offset {j} outside T_{i}")
            self._cache[i] = j
        return j

    def atom(self, i: int) -> int:
        return 2**i + self.offset(i)

    @staticmethod
    def mass(i: int) -> Fraction:
        return Fraction(1, i * (i + 1))

    def blocks(self):
        return self._blocks_from_index(1)

    def _blocks_from_index(self, i):
        for i in itertools.count(max(i, 1)):
            yield Block(self.atom(i), 1, self.mass(i))

    def blocks_from(self, x):
        i = max(1, x.bit_length() - 1)
        if self.atom(i) < x:
            i += 1
        return self._blocks_from_index(i)

    def block_at(self, x):
        i = x.bit_length() - 1
        if i >= 1 and self.atom(i) == x:
            return Block(x, 1, self.mass(i))
        return None

    def upper_tail(self, x):
        if x < 2:
            return Fraction(1)
        i = x.bit_length() - 1
        rest = Fraction(1, i + 1)
        return rest + self.mass(i) if self.atom(i) > x else rest

    def tail_from_block(self, k: int) -> Fraction:
        """Mass of {n >= 2**k}; telescopes to 1/k."""
        return Fraction(1, k)

    def min_support(self):
        return self.atom(1)

    def entropy(self):
        return _pair_entropy()

    def descriptor(self):
        if self.selector is not None:
            raise DomainError("callable selectors are not serialisable")
        d = {"class": "I", "offsets": list(self.offsets)}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.default:
            d["default"] = self.default
        return d


class HarmonicPmf(Pmf):
    """q(x) = 1/(x(x+1)) on x >= 1."""

    finite = False
    decreasing_blocks = True
    nonincreasing = True
    label = "harmonic"

    def blocks(self):
        return self.blocks_from(1)

    def blocks_from(self, x):
        for y in itertools.count(max(x, 1)):
            yield Block(y, 1, Fraction(1, y * (y + 1)))

    def block_at(self, x):
        return Block(x, 1, Fraction(1, x * (x + 1))) if x >= 1 else None

    def log2_prob(self, x):
        return -math.log2(x) - math.log2(x + 1) if x >= 1 else -math.inf

    def log2_prob_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(xs >= 1, -np.log2(xs) - np.log2(xs + 1), -np.inf)

    def upper_tail(self, x):
        return Fraction(1, max(x, 0) + 1)

    def mass_range(self, lo, hi=None):
        lo = max(lo, 1)
        if hi is None:
            return 1 / lo
        if hi < lo:
            return 0.0
        return float(Fraction(1, lo) - Fraction(1, hi + 1))

    def uniform_on(self, lo, hi):
        return lo == hi and lo >= 1

    def min_support(self):
        return 1

    def entropy(self):
        return _pair_entropy()

    def descriptor(self):
        return {"class": "harmonic"}


class GeometricPmf(Pmf):
    """p(x) = (1 - r) r**x on x >= 0."""

    finite = False
    decreasing_blocks = True
    nonincreasing = True

    def __init__(self, r: float):
        if not 0 < r < 1:
            raise DomainError("r must lie in (0, 1)")
        self.r = float(r)
        self.label = f"geometric(r={self.r})"

    def blocks(self):
        return self.blocks_from(0)

    def blocks_from(self, x):
        for y in itertools.count(max(x, 0)):
            yield Block(y, 1, (1 - self.r) * self.r**y)

    def block_at(self, x):
        return Block(x, 1, (1 - self.r) * self.r**x) if x >= 0 else None

    def log2_prob(self, x):
        return math.log2(1 - self.r) + x * math.log2(self.r) if x >= 0 else -math.inf

    def log2_prob_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.where(xs >= 0, math.log2(1 - self.r) + xs * math.log2(self.r), -np.inf)

    def upper_tail(self, x):
        return self.r ** (max(x, -1) + 1)

    def mass_range(self, lo, hi=None):
        lo = max(lo, 0)
        if hi is None:
            return self.r**lo
        if hi < lo:
            return 0.0
        return self.r**lo * -math.expm1((hi - lo + 1) * math.log(self.r))

    def uniform_on(self, lo, hi):
        return lo == hi and lo >= 0

    def min_support(self):
        return 0

    def entropy(self):
        return binary_entropy(self.r) / (1 - self.r)

    def descriptor(self):
        return {"class": "geometric", "r": self.r}


def _u_block_bounds(k: int) -> tuple[int, int]:
    """Atoms n >= 1 where p_k attains sup_j p_j(n): (lo, hi) inclusive."""
    lo = 1 if k == 1 else 2 ** ((k - 1) ** 2) + 1
    return lo, 2 ** (k * k)


def u_envelope_sum(k_max: int = 30) -> tuple[float, float]:
    """Sum over n >= 1 of sup_k p_k(n), and a bound on the truncation error.

    Block k contributes (2**(k*k) - 2**((k-1)**2)) / (k*k * 2**(k*k)), except
    k = 1 which covers both n = 1 and n = 2.  Past ``k_max`` the 1/k**2 part is
    summed exactly through the trigamma function and only the geometric
    correction is bounded.
    """
    head = Fraction(1)
    for k in range(2, k_max + 1):
        head += Fraction(2 ** (k * k) - 2 ** ((k - 1) ** 2), k * k * 2 ** (k * k))
    tail = float(polygamma(1, k_max + 1))
    err = 2 * 4.0 ** -(k_max + 1) / ((k_max + 1) ** 2 * 0.75)
    return float(head) + tail - err / 2, err / 2


def u_envelope_sum_closed() -> float:
    """Same sum through the dilogarithm: pi**2/6 - 2 Li2(1/4) + 1/2."""
    return math.pi**2 / 6 - 2 * float(spence(0.75)) + 0.5


class QU(Pmf):
    """The universal distribution for class U.

    q(0) = 1/2 and q(n) = sup_k p_k(n) / 2**(R+1) with
    R = log2(sum_n sup_k p_k(n)).  The sup is attained by the smallest k with
    2**(k*k) >= n, so q is constant on the blocks returned by ``_u_block_bounds``.
    """

    finite = False
    decreasing_blocks = True
    nonincreasing = True

    def __init__(self, k_max: int = 30):
        self.k_max = k_max
        self.envelope_sum, self.envelope_err = u_envelope_sum(k_max)
        self.R = math.log2(self.envelope_sum)
        self._scale = Fraction(1 / (2 * self.envelope_sum))
        self.label = "qU"

    @staticmethod
    def sup_p(n: int) -> Fraction:
        """sup_k p_k(n) for n >= 1."""
        k = QU.block_index(n)
        return Fraction(1, k * k * 2 ** (k * k))

    @staticmethod
    def block_index(n: int) -> int:
        c = (n - 1).bit_length()  # ceil(log2 n)
        return 1 if c <= 1 else math.isqrt(c - 1) + 1

    def _block(self, k):
        lo, hi = _u_block_bounds(k)
        return Block(lo, hi - lo + 1, Fraction(1, k * k * 2 ** (k * k)) * self._scale)

    def blocks(self):
        yield Block(0, 1, Fraction(1, 2))
        yield from self._blocks_from_k(1)

    def _blocks_from_k(self, k):
        for k in itertools.count(k):
            yield self._block(k)

    def blocks_from(self, x):
        if x <= 0:
            return self.blocks()
        return self._blocks_from_k(self.block_index(x))

    def block_at(self, x):
        if x < 0:
            return None
        if x == 0:
            return Block(0, 1, Fraction(1, 2))
        return self._block(self.block_index(x))

    def log2_prob_array(self, xs):
        xs = np.asarray(xs)
        if xs.dtype == object:
            return super().log2_prob_array(xs)
        x = xs.astype(np.int64)
        c = np.zeros(x.shape, dtype=np.int64)
        pos = x > 1
        # ceil(log2 n) is the bit length of n - 1; exact for n < 2**53
        c[pos] = np.frexp((x[pos] - 1).astype(float))[1]
        k = np.floor(np.sqrt(np.maximum(c - 1, 0))).astype(np.int64) + 1
        body = -(2 * np.log2(k) + k * k) - math.log2(2 * self.envelope_sum)
        return np.where(x == 0, -1.0, np.where(x < 0, -np.inf, body))

    def upper_tail(self, x):
        if x < 0:
            return Fraction(1)
        if x == 0:
            return Fraction(1, 2)
        k = self.block_index(x)
        b = self._block(k)
        inside = (b.last - x) * b.mass
        # blocks beyond k: sum_{j>k} (1 - 2**(1-2j)) / j**2, scaled
        beyond = float(polygamma(1, k + 1)) - 2 * sum(4.0**-j / j**2 for j in range(k + 1, k + 40))
        return inside + self._scale * Fraction(beyond)

    def min_support(self):
        return 0

    def entropy(self):
        # block k holds mass ~ 1/(2 S k**2) at log2(1/q) ~ k**2: the series diverges
        raise UnboundedEntropyError("qU has infinite entropy")

    def descriptor(self):
        return {"class": "qU", "k_max": self.k_max}


def build_qU(k_max: int = 30) -> QU:
    return QU(k_max)


# ---------------------------------------------------------------------------
# CDF with linear interpolation between support points


class Cdf:
    """Piecewise-linear CDF on [0, inf].

    Knots are the support points (block endpoints suffice since the CDF is
    linear across a run of equal masses).  Below the smallest support point
    the CDF is 0 and past the last one of a finite pmf it is 1.
    """

    def __init__(self, d: Pmf):
        self.pmf = d
        self._it = iter(d.blocks())
        self._xs: list[int] = []
        self._fs: list[float] = []
        self._acc: Mass = 0
        self._done = False
        self._extend()

    def _extend(self) -> bool:
        if self._done:
            return False
        b = next(self._it, None)
        if b is None:
            self._done = True
            return False
        self._xs.append(b.start)
        self._fs.append(float(self._acc + b.mass))
        self._acc += b.total
        if b.count > 1:
            self._xs.append(b.last)
            self._fs.append(float(self._acc))
        if len(self._xs) > 2 * MAX_BLOCKS:
            raise ResourceError("cdf: too many knots")
        return True

    @property
    def infinite(self) -> bool:
        return not self.pmf.finite

    def __call__(self, x: float) -> float:
        return self.eval(x)

    def eval(self, x: float) -> float:
        if x == math.inf:
            return 1.0
        if x < 0:
            raise DomainError("cdf is defined on [0, inf]")
        while self._xs[-1] < x and self._extend():
            pass
        xs, fs = self._xs, self._fs
        if x < xs[0]:
            return 0.0
        if x > xs[-1]:
            return 1.0
        if x == xs[-1]:
            return fs[-1]
        i = bisect.bisect_right(xs, x)
        x0, x1, f0, f1 = xs[i - 1], xs[i], fs[i - 1], fs[i]
        if x == x0:
            return f0
        return f0 + (f1 - f0) * (x - x0) / (x1 - x0)

    def inverse(self, u: float) -> float:
        if not 0 <= u <= 1:
            raise DomainError(f"u must lie in [0, 1], got {u}")
        xs, fs = self._xs, self._fs
        if u == 0 or u < fs[0] and xs[0] == 0:
            return 0.0
        if u <= fs[0]:
            return float(xs[0])
        if u == 1:
            if self.infinite:
                return math.inf
            while self._extend():
                pass
            return float(self._xs[-1])
        while fs[-1] < u and self._extend():
            pass
        if fs[-1] < u:  # rounding above the last knot of a finite pmf
            return float(xs[-1])
        i = bisect.bisect_left(fs, u)
        if fs[i] == u or i == 0:
            return float(xs[i])
        x0, x1, f0, f1 = xs[i - 1], xs[i], fs[i - 1], fs[i]
        return x0 + (x1 - x0) * (u - f0) / (f1 - f0)


def pmf(d: Pmf, x: int) -> float:
    return d.prob(x)


def cdf(d: Pmf) -> Cdf:
    return Cdf(d)


def inv_cdf(c: Cdf, u: float) -> float:
    return c.inverse(u)


def entropy(d: Pmf) -> float:
    return d.entropy()


def head_atoms(d: Pmf, delta: float) -> list[tuple[int, Mass]]:
    """The finite set A_{p,delta} = {x : p(x) >= delta} as (x, p) pairs."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    out = []
    for n, b in enumerate(d.blocks()):
        if b.mass >= delta:
            if b.count > 1 / delta + 1:
                raise ResourceError("impossible: block heavier than 1")
            out.extend((x, b.mass) for x in range(b.start, b.start + b.count))
        elif d.decreasing_blocks:
            break
        if not d.finite and not d.decreasing_blocks and n > MAX_BLOCKS:
            raise ResourceError(f"{d.label}: cannot isolate A_delta")
    return out


def tail_entropy(d: Pmf, delta: float) -> float:
    """sum over {x : p(x) < delta} of p(x) log2 1/p(x)."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    if d.finite:
        return math.fsum(float(b.total) * -b.log2_mass for b in d.blocks() if b.mass < delta)
    head = math.fsum(float(m) * -log2_of(m) for _, m in head_atoms(d, delta))
    return max(d.entropy() - head, 0.0)


def tail_divergence(d: Pmf, q: Pmf, delta: float) -> float:
    """sum over {x : p(x) < delta} of p(x) log2(p(x)/q(x)).

    Returns ``math.inf`` when q vanishes on a tail atom of positive p-mass.
    Each p-block is split against the q-blocks it overlaps, so the sum is exact
    for blocks of any size.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if not d.finite:
        raise DomainError(f"{d.label}: tail divergence needs a finite-support p")
    terms = []
    for b in d.blocks():
        if b.mass >= delta:
            continue
        lp = b.log2_mass
        pos = b.start
        for n, qb in enumerate(q.blocks_from(b.start)):
            if qb.start > pos or n > MAX_BLOCKS:
                if n > MAX_BLOCKS:
                    raise ResourceError("tail_divergence: too many q-blocks")
                return math.inf
            hi = min(qb.last, b.last)
            terms.append(float((hi - pos + 1) * b.mass) * (lp - qb.log2_mass))
            pos = hi + 1
            if pos > b.last:
                break
        if pos <= b.last:
            return math.inf
    return math.fsum(terms)


def divergence(p: Pmf, q: Pmf) -> float:
    """D(p || q) in bits for finite-support p."""
    return tail_divergence(p, q, math.inf)


def sample(d: Pmf, seed, n: int) -> np.ndarray:
    """``n`` i.i.d. draws by inverse-CDF; a pure function of ``seed``.

    Returns an int64 array, or an object array when some draw exceeds int64.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(n)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if isinstance(d, (ClassI, HarmonicPmf, GeometricPmf)):
        return _sample_closed(d, u)
    if isinstance(d, QU):
        # block k of qU holds 2**(k*k) atoms and its upper tail decays like 1/k
        raise ModeError("qU cannot be sampled: its quantiles near 1 are astronomically large")
    bl = _blocks_covering(d, float(u.max()))
    cum = np.array([float(c) for c in itertools.accumulate(b.total for b in bl)])
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(bl) - 1)
    # zero-mass-width rounding at the top lands in the last block
    prev = np.concatenate(([0.0], cum[:-1]))[idx]
    counts = [b.count for b in bl]
    if max(counts) < 2**52:
        c = np.array(counts, dtype=np.int64)[idx]
        tot = np.array([float(b.total) for b in bl])[idx]
        frac = np.clip((u - prev) / tot, 0.0, 1.0)
        off = np.minimum((frac * c).astype(np.int64), c - 1)
        starts = np.array([b.start for b in bl], dtype=object if bl[-1].last >= 2**63 else np.int64)
        return _tidy(starts[idx] + off)
    # blocks wider than a double's mantissa: inverse-CDF picks the block,
    # extra random bits pick the atom inside it
    extra = random.Random(int(rng.integers(2**63)))
    out = [bl[i].start + extra.randrange(bl[i].count) for i in idx]
    return _tidy(np.array(out, dtype=object))


def _blocks_covering(d: Pmf, umax: float) -> list[Block]:
    out, acc = [], 0
    for n, b in enumerate(d.blocks()):
        out.append(b)
        acc += b.total
        if not d.finite and float(acc) > umax:
            break
        if n > MAX_BLOCKS:
            raise ResourceError(f"{d.label}: sampling needs more than {MAX_BLOCKS} blocks")
    return out


def _sample_closed(d: Pmf, u: np.ndarray) -> np.ndarray:
    if isinstance(d, GeometricPmf):
        with np.errstate(divide="ignore"):
            x = np.ceil(np.log1p(-u) / math.log(d.r)) - 1
        return np.maximum(x, 0).astype(np.int64)
    # both have F(last atom of level i) = 1 - 1/(i+1)
    level = [max(1, math.ceil(1 / (1 - float(v)) - 1)) for v in u]
    if isinstance(d, HarmonicPmf):
        return _tidy(np.array(level, dtype=object))
    return _tidy(np.array([d.atom(i) for i in level], dtype=object))


def _tidy(a: np.ndarray) -> np.ndarray:
    if a.dtype == object and all(-(2**63) <= int(v) < 2**63 for v in a):
        return a.astype(np.int64)
    return a


def tightness_bound(members: Iterable[Pmf], gamma: float) -> float:
    """max over members of F^{-1}(1 - gamma)."""
    if not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    return max(Cdf(m).inverse(1 - gamma) for m in members)


# ---------------------------------------------------------------------------
# JSON descriptors


def from_descriptor(desc: dict) -> Pmf:
    """Build a Pmf from ``{"class": ..., params...}``."""
    try:
        kind = desc["class"]
    except (KeyError, TypeError):
        raise DomainError("descriptor needs a 'class' field") from None
    try:
        if kind == "I":
            return ClassI(offsets=desc.get("offsets", ()), seed=desc.get("seed"),
                          default=int(desc.get("default", 0)))
        if kind == "B":
            return ClassB(Fraction(str(desc["epsilon"])), int(desc["j"]))
        if kind == "U":
            return ClassU(int(desc["k"]))
        if kind == "explicit":
            probs = {int(x): _parse_mass(p) for x, p in desc["probs"].items()}
            return ExplicitPmf(probs)
        if kind == "point":
            return point_mass(int(desc["x"]))
        if kind == "harmonic":
            return HarmonicPmf()
        if kind == "geometric":
            return GeometricPmf(float(desc["r"]))
        if kind == "qU":
            return QU(int(desc.get("k_max", 30)))
    except KeyError as e:
        raise DomainError(f"descriptor for class {kind!r} lacks field {e}") from None
    raise DomainError(f"unknown class {kind!r}")


def _parse_mass(p):
    if isinstance(p, str):
        return Fraction(p)
    if isinstance(p, int):
        return Fraction(p)
    return float(p)


def check_members(members: Sequence[Pmf]) -> None:
    if not members:
        raise PreconditionError("member list is empty")


def require_finite_divergence(value: float, what: str) -> float:
    if math.isinf(value):
        raise InfiniteDivergenceError(f"{what} is infinite")
    return value
