"""Patterns of sequences: first-appearance indices.

The pattern of HONOLULU is 12324545: the k-th distinct symbol to appear is
replaced by k.  Patterns of length n are in bijection with set partitions of
n elements (restricted growth strings), so there are Bell(n) of them.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from .dists import Pmf, sample
from .errors import DomainError, ModeError, ResourceError

__all__ = [
    "bell",
    "enumerate_patterns",
    "format_pattern",
    "is_pattern",
    "parse_pattern",
    "pattern_of",
    "pattern_prob_bruteforce",
    "pattern_prob_exact",
    "pattern_prob_iid",
    "pattern_prob_mc",
]

MAX_ENUM_N = 13

Pattern = tuple[int, ...]


def pattern_of(x: Iterable) -> Pattern:
    index: dict = {}
    out = []
    for s in x:
        j = index.get(s)
        if j is None:
            j = index[s] = len(index) + 1
        out.append(j)
    return tuple(out)


def is_pattern(psi: Sequence[int]) -> bool:
    top = 0
    for j in psi:
        if not 1 <= j <= top + 1:
            return False
        top = max(top, j)
    return True


def format_pattern(psi: Sequence[int]) -> str:
    if all(j <= 9 for j in psi):
        return "".join(map(str, psi))
    return ",".join(map(str, psi))


def parse_pattern(text: str) -> Pattern:
    text = text.strip()
    if "," in text:
        psi = tuple(int(t) for t in text.split(","))
    else:
        psi = tuple(int(c) for c in text)
    if not is_pattern(psi):
        raise DomainError(f"{text!r} is not a pattern")
    return psi


@lru_cache(maxsize=None)
def bell(n: int) -> int:
    """Bell number by the Bell-triangle recurrence."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_patterns(n: int) -> Iterator[Pattern]:
    """Stream all length-n patterns in lexicographic order."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if n > MAX_ENUM_N:
        raise ResourceError(f"Bell({n}) patterns exceeds the n <= {MAX_ENUM_N} guard")
    if n == 0:
        yield ()
        return
    psi = [1] * n
    top = [1] * n  # top[i] = max(psi[:i+1])
    while True:
        yield tuple(psi)
        i = n - 1
        while i > 0 and psi[i] > top[i - 1]:
            i -= 1
        if i == 0:
            return
        psi[i] += 1
        top[i] = max(top[i - 1], psi[i])
        for k in range(i + 1, n):
            psi[k] = 1
            top[k] = top[i]


def _finite_atoms(d: Pmf) -> list[float]:
    if not d.finite:
        raise ModeError(f"exact pattern probability needs finite support, got {d.label}")
    return [float(m) for _, m in d.atoms()]


def pattern_prob_exact(d: Pmf, psi: Sequence[int]) -> float:
    """Sum over injective symbol assignments, by DP over count classes.

    The probability only depends on the multiset of index multiplicities.
    Indices sharing a multiplicity are interchangeable, so the DP state records
    how many indices of each multiplicity have been given a symbol so far;
    assigning a symbol to a class with r free indices contributes r ways.
    """
    if not is_pattern(psi):
        raise DomainError("not a pattern")
    probs = _finite_atoms(d)
    mult = Counter(Counter(psi).values())  # multiplicity -> number of indices
    kinds = sorted(mult)
    sizes = [mult[c] for c in kinds]
    if sum(sizes) > len(probs):
        return 0.0
    dp = {tuple(0 for _ in kinds): 1.0}
    for p in probs:
        powers = [p**c for c in kinds]
        nxt = dict(dp)
        for state, v in dp.items():
            for t, used in enumerate(state):
                free = sizes[t] - used
                if free:
                    s = state[:t] + (used + 1,) + state[t + 1:]
                    nxt[s] = nxt.get(s, 0.0) + v * free * powers[t]
        dp = nxt
    return dp.get(tuple(sizes), 0.0)


def pattern_prob_bruteforce(d: Pmf, psi: Sequence[int]) -> float:
    """Oracle: sum p(x^n) over every string of the right length."""
    atoms = [(x, float(m)) for x, m in d.atoms()]
    n = len(psi)
    if len(atoms) ** n > 10**7:
        raise ResourceError("brute force enumeration too large")
    target = tuple(psi)
    total = 0.0
    for combo in itertools.product(atoms, repeat=n):
        if pattern_of(x for x, _ in combo) == target:
            total += math.prod(m for _, m in combo)
    return total


def pattern_prob_mc(d: Pmf, psi: Sequence[int], seed=0, trials: int = 10_000) -> tuple[float, float]:
    """Empirical frequency of ``psi`` and its binomial standard error."""
    n = len(psi)
    if trials < 1:
        raise DomainError("trials must be >= 1")
    draws = sample(d, seed, n * trials).reshape(trials, n)
    target = tuple(psi)
    hits = sum(pattern_of(row.tolist()) == target for row in draws)
    p = hits / trials
    return p, math.sqrt(max(p * (1 - p), 0.0) / trials)


def pattern_prob_iid(d: Pmf, psi: Sequence[int], mode: str = "exact", seed=0,
                     trials: int = 10_000) -> float:
    if mode == "exact":
        return pattern_prob_exact(d, psi)
    if mode in ("monte_carlo", "mc"):
        return pattern_prob_mc(d, psi, seed, trials)[0]
    raise ModeError(f"unknown mode {mode!r}")


def pattern_counts(psi: Sequence[int]) -> np.ndarray:
    """Multiplicity of each index 1..K."""
    return np.bincount(np.asarray(psi, dtype=np.int64))[1:]
