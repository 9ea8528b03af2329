"""Haar system and the U-statistics built on it.

For a pattern with points X_1..X_n observed at scale L,

    T_(j,k) = (1/L^2) sum_{l != l'} phi_(j,k)(X_l) phi_(j,k)(X_l')

is an unbiased estimator of the squared Haar coefficient. Since phi_(j,k) only
takes the values +-2^(j/2) and 0, it reduces to bin counts on the two halves of
the support: with ``a`` points on the left half and ``b`` on the right,
``T_(j,k) = 2^j ((a - b)^2 - (a + b)) / L^2``. All statistics here are computed
from dyadic bin counts, which also makes them cheap to batch over many patterns.

The Haar functions live on [0, 1); a point exactly at 1 contributes nothing.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class HaarIndex(NamedTuple):
    j: int
    k: int

    def validate(self):
        if self.j < 0 or not 0 <= self.k < 2 ** self.j:
            raise ValueError(f"invalid Haar index {tuple(self)}")
        return self


class IndexSet:
    """A finite set of Haar indices, iterated level-major with k ascending."""

    def __init__(self, indices=()):
        self._indices = tuple(sorted({HaarIndex(*lam).validate() for lam in indices}))

    @classmethod
    def full_levels(cls, J):
        """Lambda_J = {(j, k) : j < J}."""
        return cls(HaarIndex(j, k) for j in range(J) for k in range(2 ** j))

    @classmethod
    def singleton(cls, lam):
        return cls([lam])

    def __iter__(self):
        return iter(self._indices)

    def __len__(self):
        return len(self._indices)

    def __contains__(self, lam):
        return HaarIndex(*lam) in self._indices

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self._indices == other._indices

    def __hash__(self):
        return hash(self._indices)

    def __or__(self, other):
        return IndexSet(self._indices + other._indices)

    def __repr__(self):
        return f"IndexSet({list(self._indices)})"

    @property
    def max_level(self):
        return max((lam.j for lam in self._indices), default=-1)


def phi(lam, x):
    """phi_(j,k)(x) = 2^(j/2) psi(2^j x - k), psi = 1 on [0, 1/2), -1 on [1/2, 1)."""
    j, k = lam
    x = np.asarray(x, dtype=float)
    y = 2.0 ** j * x - k
    out = np.where((y >= 0) & (y < 0.5), 1.0, np.where((y >= 0.5) & (y < 1), -1.0, 0.0))
    out = 2.0 ** (j / 2) * out
    return float(out) if out.ndim == 0 else out


def _half_counts(lam, points):
    j, k = lam
    cells = np.floor(np.asarray(points, dtype=float) * 2.0 ** (j + 1))
    return int(np.count_nonzero(cells == 2 * k)), int(np.count_nonzero(cells == 2 * k + 1))


def alpha_hat(lam, pattern):
    """Empirical coefficient (1/L) sum_l phi_lambda(X_l)."""
    a, b = _half_counts(lam, pattern.points)
    return 2.0 ** (lam[0] / 2) * (a - b) / pattern.scale_L


def t_lambda(lam, pattern):
    """Unbiased estimator of alpha_lambda^2 (pairwise sum over distinct points)."""
    a, b = _half_counts(lam, pattern.points)
    return _t_from_counts(lam[0], np.int64(a), np.int64(b), pattern.scale_L)


def _t_from_counts(j, a, b, L):
    d = a - b
    return 2.0 ** j * (d * d - (a + b)) / (L * L)


def dyadic_counts(points, J, groups=None, n_groups=1):
    """Counts of points in the 2^J cells [i/2^J, (i+1)/2^J).

    With ``groups`` (one non-negative group id per point), returns an array of
    shape ``(n_groups, 2**J)``; otherwise shape ``(2**J,)``.
    """
    points = np.asarray(points, dtype=float)
    B = 1 << J
    cells = (points * B).astype(np.int64)
    keep = cells < B  # drops points at exactly 1
    if groups is None:
        return np.bincount(cells[keep], minlength=B)
    flat = np.asarray(groups, dtype=np.int64)[keep] * B + cells[keep]
    return np.bincount(flat, minlength=n_groups * B).reshape(n_groups, B)


def level_statistics(counts, L, levels):
    """T_(j,k) for all j < ``levels`` from cell counts at resolution 2^J, J >= levels.

    ``counts`` has shape ``(..., 2**J)``. Returns a list whose entry j has shape
    ``(..., 2**j)``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    J = int(np.log2(counts.shape[-1]))
    if levels > J:
        raise ValueError(f"counts at resolution 2^{J} cannot give level {levels - 1}")
    # aggregate down to resolution 2^levels, then climb one level at a time
    c = counts.reshape(*counts.shape[:-1], 1 << levels, -1).sum(axis=-1)
    out = [None] * levels
    for j in range(levels - 1, -1, -1):
        a, b = c[..., 0::2], c[..., 1::2]
        out[j] = _t_from_counts(j, a, b, L)
        c = a + b
    return out


def t_prime(J, pattern):
    """T'_J = sum of T_lambda over Lambda_J, from one pass of dyadic binning."""
    if J < 1:
        raise ValueError("J must be >= 1")
    stats = level_statistics(dyadic_counts(pattern.points, J), pattern.scale_L, J)
    return float(_sum_levels(stats))


def _sum_levels(stats):
    total = 0.0
    for s in stats:
        total = total + np.sum(s, axis=-1)
    return total


def t_prime_batch(counts, L, models):
    """T'_J for each J in ``models`` from batched counts, shape ``(G, len(models))``."""
    stats = level_statistics(counts, L, max(models))
    partial = np.cumsum(np.stack([np.sum(s, axis=-1) for s in stats], axis=-1), axis=-1)
    return partial[..., [J - 1 for J in models]]


def t_doubleprime(index_set, pattern):
    """T''_Lambda = sum of T_lambda over an arbitrary finite index set."""
    index_set = list(index_set)
    if not index_set:
        return 0.0
    top = max(lam[0] for lam in index_set) + 1
    stats = level_statistics(dyadic_counts(pattern.points, top), pattern.scale_L, top)
    total = 0.0
    for j in range(top):
        ks = [lam[1] for lam in index_set if lam[0] == j]
        if ks:
            total = total + np.sum(stats[j][ks])
    return float(total)
