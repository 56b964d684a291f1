"""Order-stable decomposition of bistochastic matrices.

A fixed generic cost matrix induces a total order on permutations; always
extracting the cheapest available permutation makes the decomposition (and
the sampler built on it) a near-continuous function of the input matrix,
so agents holding close matrices draw identical permutations for most of
the shared randomness.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

SUPPORT_TOL = 1e-9

Permutation = tuple[int, ...]


class NoPerfectMatching(ValueError):
    """Every perfect matching would use a forbidden (infinite-cost) edge."""


def hungarian(cost: np.ndarray) -> Permutation:
    """Minimum-total-cost perfect matching over finite-cost edges.

    Entries equal to +inf mark forbidden edges.  The returned tuple maps
    each row to its assigned column; when the cost matrix induces a total
    order on permutations the minimizer is unique.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("cost matrix must be square")
    try:
        rows, cols = linear_sum_assignment(C)
    except ValueError as exc:
        raise NoPerfectMatching(str(exc)) from exc
    if not np.all(np.isfinite(C[rows, cols])):
        raise NoPerfectMatching("assignment uses a forbidden edge")
    return tuple(int(c) for c in cols)


def permutation_matrix(perm: Permutation) -> np.ndarray:
    k = len(perm)
    M = np.zeros((k, k))
    M[np.arange(k), list(perm)] = 1.0
    return M


@dataclass(frozen=True)
class BvnDecomposition:
    """Weighted mixture of permutations reconstructing a bistochastic matrix.

    Terms appear in increasing cost order; ``cumulative`` holds the prefix
    sums of the weights with the final entry pinned to exactly 1.
    """

    weights: np.ndarray
    permutations: tuple[Permutation, ...]
    cumulative: np.ndarray

    def __len__(self) -> int:
        return len(self.permutations)

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((len(self.permutations[0]),) * 2)
        for w, perm in zip(self.weights, self.permutations):
            out[np.arange(len(perm)), list(perm)] += w
        return out

    def costs(self, cost: np.ndarray) -> np.ndarray:
        C = np.asarray(cost, dtype=float)
        return np.array([C[np.arange(len(p)), list(p)].sum() for p in self.permutations])


def ordered_birkhoff(P: np.ndarray, cost: np.ndarray) -> BvnDecomposition:
    """Decompose P by repeatedly extracting the cheapest permutation whose
    support lies in the remaining mass.

    Entries at or below ``SUPPORT_TOL`` are treated as exhausted; leftover
    float dust after the loop is redistributed proportionally so weights sum
    to exactly 1.  At most K^2 terms are produced for bistochastic input.
    """
    work = np.maximum(np.asarray(P, dtype=float), 0.0)
    if work.ndim != 2 or work.shape[0] != work.shape[1]:
        raise ValueError("input must be a square matrix")
    k = work.shape[0]
    C = np.asarray(cost, dtype=float)
    if C.shape != work.shape:
        raise ValueError("cost matrix shape must match input")
    sums_off = max(
        np.abs(work.sum(axis=1) - 1.0).max(), np.abs(work.sum(axis=0) - 1.0).max()
    )
    if sums_off > 1e-6:
        raise ValueError(f"input is not bistochastic (row/col sums off by {sums_off:.2e})")

    work = work.copy()
    work[work <= SUPPORT_TOL] = 0.0
    rows = np.arange(k)
    weights: list[float] = []
    perms: list[Permutation] = []
    while work.any():
        if len(weights) >= k * k:
            raise NoPerfectMatching("extraction did not terminate; input too far from bistochastic")
        masked = np.where(work > SUPPORT_TOL, C, np.inf)
        perm = hungarian(masked)
        cols = list(perm)
        z = float(work[rows, cols].min())
        weights.append(z)
        perms.append(perm)
        work[rows, cols] -= z
        work[work <= SUPPORT_TOL] = 0.0

    w = np.array(weights)
    w /= w.sum()
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return BvnDecomposition(w, tuple(perms), cum)


def psi_sample(dec: BvnDecomposition, omega: float) -> Permutation:
    """Permutation selected by omega under the cumulative-weight rule.

    Cells are left-closed: omega exactly equal to a prefix sum selects the
    next term.
    """
    if not 0.0 <= omega < 1.0:
        raise ValueError("omega must lie in [0, 1)")
    idx = bisect.bisect_right(dec.cumulative, omega)
    if idx >= len(dec.permutations):
        idx = len(dec.permutations) - 1
    return dec.permutations[idx]


def disagreement_volume(dec1: BvnDecomposition, dec2: BvnDecomposition) -> float:
    """Exact measure of omega in [0, 1) where the two samplers differ.

    Sweeps the merged breakpoint list and compares the constant permutation
    on each cell.
    """
    pts = np.unique(np.concatenate(([0.0, 1.0], dec1.cumulative, dec2.cumulative)))
    pts = pts[(pts >= 0.0) & (pts <= 1.0)]
    vol = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        if psi_sample(dec1, mid) != psi_sample(dec2, mid):
            vol += b - a
    return vol


def draw_cost_matrix(rng: np.random.Generator, k: int) -> np.ndarray:
    """I.i.d. uniform [0, 1) cost matrix; continuous, so the induced order
    on permutations is total with probability 1."""
    return rng.random((k, k))
