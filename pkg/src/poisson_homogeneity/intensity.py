"""Intensity functions on [0, 1].

Provides the constant intensity, the five alternative families s1..s5 used in
the power study, arbitrary piecewise-constant intensities and the random
Haar-spike intensities ``1 + r sqrt(M/D) sum_i Delta_i xi_i psi(M x - i + 1)``.

Every variant exposes its exact antiderivative, so Haar coefficients and
integrals are computed in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np

from .errors import InvalidParameterError, PositivityError
from .haar import HaarIndex

# parameter vectors of the s2 / s3 families
P = (0.1, 0.13, 0.15, 0.23, 0.25, 0.4, 0.44, 0.65, 0.76, 0.78, 0.81)
H = (4.0, -4.0, 3.0, -3.0, 5.0, -5.0, 2.0, 4.0, -4.0, 2.0, -3.0)
G = (4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2)
W = (0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005)
S3_NORMALIZER = 0.284

_P = np.array(P)
_H = np.array(H)
_G = np.array(G)
_W = np.array(W)


def normalizing_constant_s2(eta):
    """C2(eta) = 1 + eta * sum_j h_j (1 - p_j), the integral of the unnormalized s2."""
    if not 0 < eta <= 2:
        raise InvalidParameterError(f"eta must lie in (0, 2], got {eta}")
    return 1.0 + eta * float(np.sum(_H * (1.0 - _P)))


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise InvalidParameterError("evaluation points must lie in [0, 1]")
    return x


class IntensitySpec:
    """Base class of the intensity variants.

    Subclasses are frozen dataclasses; instances are immutable and can be shared
    between threads and processes.
    """

    variant: ClassVar[str]

    def __call__(self, x):
        return self._eval(_check_unit(x))

    def cumulative(self, x):
        """Exact value of the integral of s over [0, x]."""
        return self._cumulative(_check_unit(x))

    def integral(self):
        return float(self._cumulative(np.array(1.0)))

    def sup(self):
        """Supremum of s on [0, 1]."""
        raise NotImplementedError

    def pieces(self):
        """``(edges, levels)`` for piecewise-constant variants, else ``None``.

        ``edges`` runs from 0 to 1; piece ``i`` is ``[edges[i], edges[i+1])``.
        """
        return None

    def params(self):
        return {}

    def to_dict(self):
        return {"variant": self.variant, **self.params()}

    def label(self):
        inner = ", ".join(f"{k}={v}" for k, v in self.params().items()
                          if not isinstance(v, (list, tuple)))
        return f"{self.variant}({inner})"

    # piecewise-constant helpers shared by several variants
    def _piecewise_eval(self, x):
        edges, levels = self.pieces()
        idx = np.searchsorted(edges, x, side="right") - 1
        return levels[np.clip(idx, 0, len(levels) - 1)]

    def _piecewise_cumulative(self, x):
        edges, levels = self.pieces()
        cum = np.concatenate([[0.0], np.cumsum(levels * np.diff(edges))])
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(levels) - 1)
        return cum[idx] + levels[idx] * (x - edges[idx])


@dataclass(frozen=True)
class Constant(IntensitySpec):
    level: float = 1.0
    variant: ClassVar[str] = "constant"

    def __post_init__(self):
        if not self.level >= 0:
            raise InvalidParameterError(f"constant level must be >= 0, got {self.level}")

    def pieces(self):
        return np.array([0.0, 1.0]), np.array([float(self.level)])

    def _eval(self, x):
        return np.full_like(x, float(self.level))

    def _cumulative(self, x):
        return self.level * x

    def sup(self):
        return float(self.level)

    def params(self):
        return {"level": self.level}


@dataclass(frozen=True)
class S1(IntensitySpec):
    epsilon: float
    variant: ClassVar[str] = "s1"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError(f"s1 needs epsilon in (0, 1], got {self.epsilon}")

    def pieces(self):
        e = self.epsilon
        return np.array([0.0, 0.125, 0.25, 1.0]), np.array([1 + e, 1 - e, 1.0])

    def _eval(self, x):
        return self._piecewise_eval(x)

    def _cumulative(self, x):
        return self._piecewise_cumulative(x)

    def sup(self):
        return 1.0 + self.epsilon

    def params(self):
        return {"epsilon": self.epsilon}


@dataclass(frozen=True)
class S2(IntensitySpec):
    eta: float
    variant: ClassVar[str] = "s2"

    def __post_init__(self):
        if not 0 < self.eta <= 2:
            raise InvalidParameterError(f"s2 needs eta in (0, 2], got {self.eta}")

    @property
    def c2(self):
        return normalizing_constant_s2(self.eta)

    def pieces(self):
        levels = (1.0 + self.eta * np.concatenate([[0.0], np.cumsum(_H)])) / self.c2
        return np.concatenate([[0.0], _P, [1.0]]), levels

    def _eval(self, x):
        # sgn(0) = 0: the jump points take the midpoint value
        steps = 0.5 * _H * (1.0 + np.sign(x[..., None] - _P))
        return (1.0 + self.eta * steps.sum(axis=-1)) / self.c2

    def _cumulative(self, x):
        return self._piecewise_cumulative(x)

    def sup(self):
        return float(self.pieces()[1].max())

    def params(self):
        return {"eta": self.eta}


def _bump_antiderivative(t):
    """Antiderivative of sum_j g_j (1 + |t - p_j| / w_j)^-4, zero at each p_j."""
    d = t[..., None] - _P
    inner = 1.0 - (1.0 + np.abs(d) / _W) ** -3
    return (_G * np.sign(d) * _W / 3.0 * inner).sum(axis=-1)


@dataclass(frozen=True)
class S3(IntensitySpec):
    """Bumps alternative; the bump sum is divided by the printed constant 0.284,
    so the total mass is only approximately one."""

    epsilon: float
    variant: ClassVar[str] = "s3"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError(f"s3 needs epsilon in (0, 1], got {self.epsilon}")

    def _eval(self, x):
        bumps = (_G * (1.0 + np.abs(x[..., None] - _P) / _W) ** -4).sum(axis=-1)
        return (1 - self.epsilon) + self.epsilon * bumps / S3_NORMALIZER

    def _cumulative(self, x):
        zero = _bump_antiderivative(np.array(0.0))
        bumps = _bump_antiderivative(x) - zero
        return (1 - self.epsilon) * x + self.epsilon * bumps / S3_NORMALIZER

    def sup(self):
        # each bump is convex away from its centre, so the sum peaks at a centre or an end
        return float(self._eval(np.concatenate([[0.0, 1.0], _P])).max())

    def params(self):
        return {"epsilon": self.epsilon}


@dataclass(frozen=True)
class S4(IntensitySpec):
    epsilon: float
    variant: ClassVar[str] = "s4"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise InvalidParameterError(f"s4 needs epsilon in (0, 1), got {self.epsilon}")

    def pieces(self):
        e = self.epsilon
        return np.array([0.0, 0.75, 1.0]), np.array([1 - e, 1 + 3 * e])

    def _eval(self, x):
        return self._piecewise_eval(x)

    def _cumulative(self, x):
        return self._piecewise_cumulative(x)

    def sup(self):
        return 1.0 + 3 * self.epsilon

    def params(self):
        return {"epsilon": self.epsilon}


@dataclass(frozen=True)
class S5(IntensitySpec):
    epsilon: float
    beta: float
    variant: ClassVar[str] = "s5"

    def __post_init__(self):
        # the power study uses epsilon = 1, so the closed end is admitted
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError(f"s5 needs epsilon in (0, 1], got {self.epsilon}")
        if not self.beta > 1:
            raise InvalidParameterError(f"s5 needs beta > 1, got {self.beta}")

    def _eval(self, x):
        return (1 - self.epsilon) + self.epsilon * self.beta * x ** (self.beta - 1)

    def _cumulative(self, x):
        return (1 - self.epsilon) * x + self.epsilon * x ** self.beta

    def sup(self):
        return (1 - self.epsilon) + self.epsilon * self.beta

    def params(self):
        return {"epsilon": self.epsilon, "beta": self.beta}


@dataclass(frozen=True)
class PiecewiseConstant(IntensitySpec):
    breakpoints: tuple
    levels: tuple
    variant: ClassVar[str] = "piecewise_constant"

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        lv = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)
        if len(lv) != len(bp) + 1:
            raise InvalidParameterError("need exactly one more level than breakpoints")
        if any(v < 0 for v in lv):
            raise InvalidParameterError("levels must be non-negative")
        if bp and (bp[0] <= 0 or bp[-1] >= 1 or any(b >= c for b, c in zip(bp, bp[1:]))):
            raise InvalidParameterError("breakpoints must increase strictly inside (0, 1)")

    def pieces(self):
        return np.array([0.0, *self.breakpoints, 1.0]), np.array(self.levels)

    def _eval(self, x):
        return self._piecewise_eval(x)

    def _cumulative(self, x):
        return self._piecewise_cumulative(x)

    def sup(self):
        return max(self.levels)

    def params(self):
        return {"breakpoints": list(self.breakpoints), "levels": list(self.levels)}


@dataclass(frozen=True)
class HaarSpike(IntensitySpec):
    """``1 + r sqrt(M/D) sum_i signs_i psi(M x - i)`` with ``M = 2**J``.

    ``signs`` has ``M`` entries in {-1, 0, +1}, exactly ``D`` of them nonzero.
    The spikes are Haar functions of level ``J``, so the only nonzero
    coefficients are ``alpha_(J,k) = r signs_k / sqrt(D)``.
    """

    J: int
    signs: tuple
    r: float
    D: int
    variant: ClassVar[str] = "haar_spike"

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        object.__setattr__(self, "signs", signs)
        M = 2 ** self.J
        if self.J < 0 or len(signs) != M:
            raise InvalidParameterError(f"signs must have length 2**J = {M}")
        if any(s not in (-1, 0, 1) for s in signs):
            raise InvalidParameterError("signs must be -1, 0 or +1")
        if sum(s != 0 for s in signs) != self.D or self.D < 1:
            raise InvalidParameterError(f"signs must hold exactly D = {self.D} nonzero entries")
        if self.r < 0:
            raise InvalidParameterError("r must be non-negative")
        if self.r ** 2 > self.D / M:
            raise PositivityError(f"r**2 = {self.r ** 2} exceeds D / 2**J = {self.D / M}")

    @property
    def height(self):
        return self.r * math.sqrt(2 ** self.J / self.D)

    def pieces(self):
        M = 2 ** self.J
        s = np.array(self.signs, dtype=float) * self.height
        levels = np.empty(2 * M)
        levels[0::2] = 1.0 + s
        levels[1::2] = 1.0 - s
        return np.linspace(0.0, 1.0, 2 * M + 1), levels

    def _eval(self, x):
        return self._piecewise_eval(x)

    def _cumulative(self, x):
        return self._piecewise_cumulative(x)

    def sup(self):
        return float(self.pieces()[1].max())

    def params(self):
        return {"J": self.J, "signs": list(self.signs), "r": self.r, "D": self.D}

    def label(self):
        return f"haar_spike(J={self.J}, D={self.D}, r={self.r})"


VARIANTS = {cls.variant: cls for cls in (Constant, S1, S2, S3, S4, S5, PiecewiseConstant, HaarSpike)}


def evaluate(spec, x):
    """Value of the intensity at ``x`` (scalar or array) in [0, 1]."""
    out = spec(x)
    return float(out) if np.ndim(out) == 0 else out


def from_dict(data):
    """Build an intensity from its JSON form ``{"variant": ..., **params}``."""
    data = dict(data)
    try:
        cls = VARIANTS[data.pop("variant")]
    except KeyError as exc:
        raise InvalidParameterError(f"unknown or missing intensity variant: {exc}") from None
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidParameterError(str(exc)) from None


def haar_coefficients(spec, J):
    """Exact Haar coefficients alpha_(j,k) = <s, phi_(j,k)> for all j < J."""
    if J < 1:
        raise InvalidParameterError("J must be a positive integer")
    out = {}
    for j in range(J):
        m = 2 ** j
        a = np.arange(m) / m
        mid = (np.arange(m) + 0.5) / m
        b = np.minimum((np.arange(m) + 1.0) / m, 1.0)
        Fa, Fm, Fb = spec.cumulative(a), spec.cumulative(mid), spec.cumulative(b)
        vals = 2 ** (j / 2) * ((Fm - Fa) - (Fb - Fm))
        for k, v in enumerate(vals):
            out[HaarIndex(j, k)] = float(v)
    return out


def make_spike_alternative(J, D, r, rng):
    """Draw a random spike intensity: D of the 2**J cells carry a Rademacher-signed spike."""
    M = 2 ** J
    if not 1 <= D <= M:
        raise InvalidParameterError(f"D must lie in [1, 2**J = {M}]")
    if r ** 2 > D / M:
        raise PositivityError(f"r**2 = {r ** 2} exceeds D / 2**J = {D / M}")
    cells = rng.choice(M, size=D, replace=False)
    xi = rng.choice(np.array([-1, 1]), size=D)
    signs = np.zeros(M, dtype=int)
    signs[cells] = xi
    return HaarSpike(J=J, signs=tuple(signs.tolist()), r=float(r), D=D)


@dataclass
class BesovDiagnostics:
    strong_radius: dict
    weak_profile: Callable[[float], float]
    thresholds: np.ndarray
    weak_values: np.ndarray
    strong_member: bool
    weak_member: bool
    levels_checked: int = field(default=0)


def besov_check(coeffs, delta, R, gamma, R_prime, thresholds=None):
    """Check a truncated coefficient set against B^delta_{2,inf}(R) and W_gamma(R').

    Membership only refers to the levels present in ``coeffs`` (consistent up to
    level ``levels_checked - 1``). The weak profile is a step function jumping at
    the squared coefficients, so evaluating it at those values (the default
    ``thresholds``) decides the weak condition for every t > 0.
    """
    energy = {}
    for (j, _k), a in coeffs.items():
        energy[j] = energy.get(j, 0.0) + a * a
    strong_radius = {j: math.sqrt(e) for j, e in sorted(energy.items())}
    strong = all(e <= R ** 2 * 2.0 ** (-2 * j * delta) for j, e in energy.items())

    sq = np.sort(np.array([a * a for a in coeffs.values()], dtype=float))
    csum = np.cumsum(sq)

    def weak_profile(t):
        i = np.searchsorted(sq, t, side="right")
        return float(csum[i - 1]) if i > 0 else 0.0

    if thresholds is None:
        thresholds = np.unique(sq[sq > 0])
    thresholds = np.asarray(thresholds, dtype=float)
    values = np.array([weak_profile(t) for t in thresholds])
    bound = R_prime ** 2 * thresholds ** (2 * gamma / (1 + 2 * gamma))
    weak = bool(np.all(values <= bound))
    return BesovDiagnostics(
        strong_radius=strong_radius,
        weak_profile=weak_profile,
        thresholds=thresholds,
        weak_values=values,
        strong_member=bool(strong),
        weak_member=weak,
        levels_checked=(max(energy) + 1) if energy else 0,
    )
