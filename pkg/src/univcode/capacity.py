"""Channel capacity of a finite set of sources by Blahut-Arimoto.

Rows of the channel matrix are the member distributions; the capacity (in
bits) equals the minimax redundancy of the finite class.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .dists import Pmf
from .errors import DomainError, ModeError, ResourceError

__all__ = [
    "CapacityProblem",
    "CapacityResult",
    "blahut_arimoto",
    "merge_proportional_columns",
    "product_problem",
]

MAX_OUTPUTS = 10**6


@dataclass(frozen=True)
class CapacityProblem:
    W: np.ndarray
    labels: list = field(default_factory=list)
    outputs: list | None = None
    tolerance: float = 1e-6
    max_iters: int = 100_000

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] == 0:
            raise DomainError("channel matrix must be 2-d with at least one row")
        if np.any(W < 0):
            raise DomainError("channel matrix has negative entries")
        sums = W.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1) > 1e-12)
        if bad.size:
            raise DomainError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        if not self.labels:
            object.__setattr__(self, "labels", [str(i) for i in range(W.shape[0])])

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    @classmethod
    def from_members(cls, members: Sequence[Pmf], tolerance: float = 1e-6,
                     max_iters: int = 100_000) -> "CapacityProblem":
        alphabet, P = _member_matrix(members)
        return cls(P, [m.label for m in members], alphabet, tolerance, max_iters)


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    upper: float
    prior: np.ndarray
    iterations: int
    gap: float
    converged: bool

    def to_dict(self) -> dict:
        return {"capacity_bits": self.capacity, "upper_bits": self.upper,
                "prior": [float(w) for w in self.prior], "iterations": self.iterations,
                "gap_bits": self.gap, "converged": self.converged}


def _member_matrix(members: Sequence[Pmf]) -> tuple[list[int], np.ndarray]:
    if not members:
        raise DomainError("member list is empty")
    for m in members:
        if not m.finite:
            raise ModeError(f"capacity needs finite-support members, got {m.label}")
    rows = [dict((x, float(p)) for x, p in m.atoms()) for m in members]
    alphabet = sorted(set().union(*rows))
    col = {x: i for i, x in enumerate(alphabet)}
    P = np.zeros((len(members), len(alphabet)))
    for r, row in enumerate(rows):
        for x, p in row.items():
            P[r, col[x]] = p
    P /= P.sum(axis=1, keepdims=True)  # float rounding only
    return alphabet, P


def _row_divergences(W: np.ndarray, logW: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(W > 0, W * (logW - np.log2(q)), 0.0)
    return terms.sum(axis=1)


def blahut_arimoto(prob: CapacityProblem) -> CapacityResult:
    """Capacity in bits, certified by the gap max_i D(W_i || q_w) - I(w)."""
    W = prob.W
    m = W.shape[0]
    with np.errstate(divide="ignore"):
        logW = np.log2(W)
    r = np.full(m, 1.0 / m)
    I = upper = 0.0
    for it in range(1, prob.max_iters + 1):
        D = _row_divergences(W, logW, r @ W)
        I = float(r @ D)
        upper = float(D.max())
        if upper - I <= prob.tolerance:
            return CapacityResult(I, upper, r, it, upper - I, True)
        r = r * np.exp2(D - upper)
        r /= r.sum()
    warnings.warn(f"Blahut-Arimoto stopped after {prob.max_iters} iterations, gap {upper - I:.3g} bits")
    return CapacityResult(I, upper, r, prob.max_iters, upper - I, False)


def merge_proportional_columns(W: np.ndarray, digits: int = 12, check: float = 1e-9) -> np.ndarray:
    """Merge output columns that are proportional across rows; drop zero columns.

    Outputs y, y' with W[:, y] = c W[:, y'] carry the same information about
    the row, so summing them leaves every mutual information unchanged.
    """
    cols = np.asarray(W, dtype=float).T
    s = cols.sum(axis=1)
    cols = cols[s > 0]
    s = s[s > 0]
    shape = cols / s[:, None]
    _, first, inverse = np.unique(np.round(shape, digits), axis=0, return_index=True,
                                  return_inverse=True)
    inverse = inverse.reshape(-1)
    if np.max(np.abs(shape - shape[first][inverse])) > check:
        raise AssertionError("column merge grouped outputs that are not proportional")
    merged = np.zeros((len(first), cols.shape[1]))
    np.add.at(merged, inverse, cols)
    return merged.T


def product_problem(members: Sequence[Pmf], n: int, collapse: bool = True,
                    tolerance: float = 1e-6, max_iters: int = 100_000) -> CapacityProblem:
    """Channel from the members to length-n i.i.d. strings over their union alphabet.

    With ``collapse`` the output strings are first grouped by type (symbol
    counts; strings of one type have equal probability under every member)
    and then output columns proportional across members are merged.  Both
    steps preserve capacity.  Without it the rows list all |A|**n strings.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    alphabet, P = _member_matrix(members)
    a = len(alphabet)
    labels = [m.label for m in members]
    if not collapse:
        if a**n > MAX_OUTPUTS:
            raise ResourceError(f"{a}**{n} outputs exceeds {MAX_OUTPUTS}")
        W = P
        for _ in range(n - 1):
            W = np.einsum("ij,ik->ijk", W, P).reshape(len(members), -1)
        outputs = list(itertools.product(alphabet, repeat=n))
        return CapacityProblem(W, labels, outputs, tolerance, max_iters)
    if math.comb(a + n - 1, n) > MAX_OUTPUTS:
        raise ResourceError(f"{math.comb(a + n - 1, n)} type classes exceeds {MAX_OUTPUTS}")
    counts = np.array([np.bincount(c, minlength=a)
                       for c in itertools.combinations_with_replacement(range(a), n)], dtype=float)
    log_multi = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logP = np.log(P)
        # 0 * log 0 = 0: a zero count never kills a type
        term = np.where(counts[:, None, :] > 0, counts[:, None, :] * logP[None, :, :], 0.0)
    W = np.exp(log_multi[:, None] + term.sum(axis=2)).T
    W = merge_proportional_columns(W)
    W /= W.sum(axis=1, keepdims=True)
    return CapacityProblem(W, labels, None, tolerance, max_iters)
