"""Poisson processes on [0, 1] with intensity s relative to L dx.

Given N_L = n the points of the process are i.i.d. with density s / int s,
which is how :func:`simulate` draws them: inversion for piecewise-constant
intensities, rejection against the constant envelope ``sup s`` otherwise.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, PatternFormatError


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Sorted event locations in [0, 1] together with the scale L."""

    points: np.ndarray
    scale_L: float

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=float).ravel())
        if pts.size and (pts[0] < 0 or pts[-1] > 1):
            raise InvalidParameterError("points must lie in [0, 1]")
        if not self.scale_L > 0:
            raise InvalidParameterError("scale_L must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scale_L", float(self.scale_L))

    @property
    def n(self):
        return int(self.points.size)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return (isinstance(other, PointPattern) and self.scale_L == other.scale_L
                and np.array_equal(self.points, other.points))

    def to_csv(self, path):
        write_pattern(self, path)


@dataclass(frozen=True, eq=False)
class PatternBatch:
    """Many patterns stored flat: ``points`` grouped by pattern, sorted inside each group."""

    points: np.ndarray
    counts: np.ndarray
    scale_L: float

    @property
    def size(self):
        return int(self.counts.size)

    @property
    def groups(self):
        return np.repeat(np.arange(self.size), self.counts)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.counts)])

    def pattern(self, i):
        o = self.offsets
        return PointPattern(self.points[o[i]:o[i + 1]], self.scale_L)

    @classmethod
    def from_patterns(cls, patterns):
        patterns = list(patterns)
        if not patterns:
            raise ValueError("need at least one pattern")
        L = patterns[0].scale_L
        if any(p.scale_L != L for p in patterns):
            raise ValueError("all patterns in a batch must share scale_L")
        pts = np.concatenate([p.points for p in patterns]) if patterns else np.empty(0)
        return cls(pts, np.array([p.n for p in patterns], dtype=np.int64), L)


_REJECTION_BLOCK = 1 << 18  # candidates per round, bounds memory for the s3 bump sum


def sample_points(spec, m, rng):
    """``m`` i.i.d. draws from the density s / int s (unsorted)."""
    if m == 0:
        return np.empty(0)
    pieces = spec.pieces()
    if pieces is not None:
        edges, levels = pieces
        cum = np.concatenate([[0.0], np.cumsum(levels * np.diff(edges))])
        v = rng.random(m) * cum[-1]
        # side="right" skips zero-mass pieces
        idx = np.clip(np.searchsorted(cum, v, side="right") - 1, 0, len(levels) - 1)
        x = edges[idx] + (v - cum[idx]) / levels[idx]
        return np.minimum(x, edges[idx + 1])
    envelope = spec.sup()
    accept_rate = spec.integral() / envelope
    out = []
    have = 0
    while have < m:
        k = min(int((m - have) / accept_rate * 1.1) + 16, _REJECTION_BLOCK)
        x = rng.random(k)
        u = rng.random(k) * envelope
        x = x[u < spec(x)]
        out.append(x)
        have += x.size
    return np.concatenate(out)[:m]


def simulate(spec, L, rng):
    """One realisation of the Poisson process with intensity L * s on [0, 1]."""
    return simulate_batch(spec, L, 1, rng).pattern(0)


def simulate_batch(spec, L, R, rng):
    """``R`` independent realisations, stored as a :class:`PatternBatch`."""
    if not L > 0:
        raise InvalidParameterError("L must be positive")
    counts = rng.poisson(L * spec.integral(), size=R).astype(np.int64)
    x = sample_points(spec, int(counts.sum()), rng)
    groups = np.repeat(np.arange(R), counts)
    return PatternBatch(x[np.lexsort((x, groups))], counts, float(L))


def simulate_conditional_uniform(n, rng, scale_L=1.0):
    """``n`` sorted i.i.d. uniform points: the null process given N_L = n."""
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    return PointPattern(np.sort(rng.random(n)), scale_L)


_HEADER = re.compile(r"^#\s*L\s*=\s*(\S+)\s*$")


def write_pattern(pattern, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# L={pattern.scale_L!r}\nx\n")
        for x in pattern.points:
            fh.write(f"{float(x)!r}\n")


def read_pattern(path):
    """Read the one-column CSV format written by :func:`write_pattern`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise PatternFormatError("empty file, expected '# L=<scale>' header", line=1)
    m = _HEADER.match(lines[0])
    try:
        L = float(m.group(1)) if m else math.nan
    except ValueError:
        L = math.nan
    if not L > 0:
        raise PatternFormatError("expected header '# L=<positive scale>'", line=1)
    if len(lines) < 2 or lines[1].strip() != "x":
        raise PatternFormatError("expected column header 'x'", line=2)
    pts = []
    for i, raw in enumerate(lines[2:], start=3):
        if not raw.strip():
            continue
        try:
            x = float(raw.strip())
        except ValueError:
            raise PatternFormatError(f"not a number: {raw.strip()!r}", line=i) from None
        if not 0 <= x <= 1:
            raise PatternFormatError(f"point {x} outside [0, 1]", line=i)
        pts.append(x)
    return PointPattern(np.array(pts), L)


def simulate_piecewise_batch(edges, levels, L, rng):
    """One pattern per row of ``levels``: piecewise-constant intensities on shared edges.

    ``levels`` has shape ``(R, len(edges) - 1)``; each row is a separate
    intensity, so every replication may use a different alternative.
    """
    edges = np.asarray(edges, dtype=float)
    levels = np.asarray(levels, dtype=float)
    R = levels.shape[0]
    mass = levels * np.diff(edges)[None, :]
    totals = mass.sum(axis=1)
    counts = rng.poisson(L * totals).astype(np.int64)
    groups = np.repeat(np.arange(R), counts)
    # cumulative masses of all rows laid end to end: row g occupies [g, g + 1)
    cum = np.cumsum(mass / totals[:, None], axis=1)
    starts = np.concatenate([np.zeros((R, 1)), cum[:, :-1]], axis=1) + np.arange(R)[:, None]
    flat_starts = starts.ravel()
    v = groups + rng.random(groups.size)
    cell = np.searchsorted(flat_starts, v, side="right") - 1
    piece = cell % levels.shape[1]
    row_total = totals[groups]
    x = edges[piece] + (v - flat_starts[cell]) * row_total / levels.ravel()[cell]
    x = np.minimum(x, edges[piece + 1])
    return PatternBatch(x[np.lexsort((x, groups))], counts, float(L))
