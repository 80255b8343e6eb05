"""Deterministic random initial segments.

Ensemble runs draw piecewise-linear histories on [-K, 0] from a SplitMix64
stream, so identical (config, seed) pairs reproduce identical ensembles on
any platform.  Amplitude and slope caps keep every draw strictly inside
the phase space, with headroom for the cubic interpolation used later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SplitMix64", "PiecewiseLinearPath", "random_segment"]

_MASK64 = (1 << 64) - 1
# SplitMix64 constants (Steele, Lea & Flood's standard mixer).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit SplitMix generator; tiny, seedable and platform-independent."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def uniform(self) -> float:
        # 53 random bits -> exact double in [0, 1)
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def spawn(self, index: int | None = None) -> "SplitMix64":
        """Independent child stream (used per ensemble member).

        With an index, returns the index-th child of the current state
        without mutating it, so members can be built in any order.
        """
        if index is None:
            return SplitMix64(self.next_u64())
        child = SplitMix64(self.state)
        z = child.next_u64()
        for _ in range(index):
            z = child.next_u64()
        return SplitMix64(z)


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Piecewise-linear function on [knots[0], knots[-1]]."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise ValueError("need matching 1-d knot/value arrays, length >= 2")
        if not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.knots, self.values))

    def deriv(self, t: float) -> float:
        """Slope of the containing piece (right piece at interior knots)."""
        i = int(np.searchsorted(self.knots, t, side="right")) - 1
        i = min(max(i, 0), self.knots.size - 2)
        return float(
            (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i])
        )

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def max_slope(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))


def random_segment(
    rng: SplitMix64,
    K: float,
    amplitude: float,
    slope: float,
    knots: int = 6,
) -> PiecewiseLinearPath:
    """Random piecewise-linear history on [-K, 0].

    Knots are uniformly spaced; each value is drawn uniformly from the
    band allowed by both the amplitude cap and the slope cap relative to
    its left neighbour, so every draw satisfies |phi| <= amplitude and
    Lip(phi) <= slope by construction.
    """
    if knots < 2:
        raise ValueError("need at least two knots")
    if amplitude <= 0 or slope <= 0:
        raise ValueError("amplitude and slope caps must be positive")
    ts = np.linspace(-K, 0.0, knots)
    dt = ts[1] - ts[0]
    vs = np.empty(knots)
    vs[0] = rng.uniform_in(-amplitude, amplitude)
    for i in range(1, knots):
        lo = max(-amplitude, vs[i - 1] - slope * dt)
        hi = min(amplitude, vs[i - 1] + slope * dt)
        vs[i] = rng.uniform_in(lo, hi)
    return PiecewiseLinearPath(ts, vs)
