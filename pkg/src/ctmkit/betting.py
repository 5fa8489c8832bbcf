"""Betting martingales on the conformal p-value stream.

A betting strategy commits, before seeing p_n, to a probability density on
[0, 1]; its wealth is multiplied by that density evaluated at the realized
p_n.  Densities are piecewise constant on a uniform grid, which is exactly
the class the p-value mechanism can distinguish.  Emitting a normalized
density at every step makes wealth a nonnegative martingale with initial
value 1 under the null, whatever the dependence on the past.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

NORMALIZATION_TOL = 1e-12

# math.exp overflows past this; report +inf instead of raising
_MAX_EXP_ARG = 709.0


@dataclass(frozen=True)
class PiecewiseDensity:
    """Density on [0, 1], constant on ``n`` equal intervals.

    Grid intervals are half-open ``[i/n, (i+1)/n)`` except the last, which is
    closed at 1.  Heights must be nonnegative and average to one; with both
    constraints no height can exceed ``n``.
    """

    heights: tuple

    def __post_init__(self):
        if len(self.heights) == 0:
            raise ValueError("density needs at least one grid interval")
        hs = tuple(float(h) for h in self.heights)
        object.__setattr__(self, "heights", hs)
        n = len(hs)
        for i, h in enumerate(hs):
            if not math.isfinite(h) or h < 0.0:
                raise ValueError(f"height {i} must be finite and nonnegative, got {h}")
            if h > n * (1.0 + NORMALIZATION_TOL):
                raise ValueError(f"height {i} exceeds the grid bound {n}: {h}")
        total = math.fsum(hs) / n
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"density must integrate to 1, got {total!r}")

    @property
    def n(self) -> int:
        return len(self.heights)

    @classmethod
    def uniform(cls, n: int = 1) -> "PiecewiseDensity":
        return cls(tuple(1.0 for _ in range(n)))

    def integral(self) -> float:
        return math.fsum(self.heights) / self.n

    def evaluate(self, p: float) -> float:
        """Height of the grid interval containing ``p``.

        Interior boundaries belong to the interval on their right; p = 1
        belongs to the last interval.
        """
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        idx = min(int(p * self.n), self.n - 1)
        return self.heights[idx]


def density_integral(density: PiecewiseDensity) -> float:
    return density.integral()


def wealth_update(wealth: float, factor: float) -> float:
    """Multiply wealth by a betting factor; zero is absorbing."""
    if wealth < 0.0:
        raise ValueError(f"wealth must be nonnegative, got {wealth}")
    if factor < 0.0:
        raise ValueError(f"betting factor must be nonnegative, got {factor}")
    if wealth == 0.0:
        return 0.0
    return wealth * factor


class BettingMartingale(ABC):
    """Stateful betting strategy over the p-value stream.

    Subclasses implement ``_bet`` (the density for the upcoming step, a
    function of past p-values only) and optionally ``_settle`` (posterior
    bookkeeping after the step's p-value is revealed).  Wealth is tracked in
    the log domain, which is authoritative; the linear ``wealth`` property is
    derived from it.  Once a factor of zero lands, wealth is zero forever,
    but subsequent factors are still produced and recorded for audit.
    """

    def __init__(self):
        self._steps = 0
        self._log_wealth = 0.0
        self._pending = None

    @property
    def steps_taken(self) -> int:
        return self._steps

    @property
    def log_wealth(self) -> float:
        return self._log_wealth

    @property
    def wealth(self) -> float:
        if self._log_wealth == -math.inf:
            return 0.0
        if self._log_wealth > _MAX_EXP_ARG:
            return math.inf
        return math.exp(self._log_wealth)

    def next_density(self) -> PiecewiseDensity:
        """Density committed for the upcoming step (idempotent until update)."""
        if self._pending is None:
            self._pending = self._bet()
        return self._pending

    def update(self, p: float) -> float:
        """Settle one step at realized p-value ``p``; returns the factor."""
        density = self.next_density()
        factor = density.evaluate(p)
        self._settle(p)
        self._pending = None
        self._steps += 1
        if factor == 0.0:
            self._log_wealth = -math.inf
        else:
            self._log_wealth += math.log(factor)
        return factor

    @abstractmethod
    def _bet(self) -> PiecewiseDensity:
        """Density for step ``steps_taken + 1``."""

    def _settle(self, p: float) -> None:
        """Hook called with the realized p-value before the step counter moves."""


class ConstantBettor(BettingMartingale):
    """Bets the uniform density every step; wealth stays exactly 1."""

    def _bet(self) -> PiecewiseDensity:
        return PiecewiseDensity.uniform()


class ShrunkAlternativeBettor(BettingMartingale):
    """Product-measure alternative given directly on the p-value scale.

    ``family`` maps step indices (1-based) to densities; steps the family is
    silent about get the uniform density.  Accepts a mapping or a sequence
    (interpreted as steps 1..K), with entries given as ``PiecewiseDensity``
    or raw height tuples.  Every entry is validated up front so a
    non-normalized table fails at construction, naming the offending step.
    """

    def __init__(self, family):
        super().__init__()
        if hasattr(family, "items"):
            raw = dict(family.items())
        else:
            raw = {i + 1: d for i, d in enumerate(family)}
        table = {}
        for step, entry in raw.items():
            step = int(step)
            if step < 1:
                raise ValueError(f"step indices are 1-based, got {step}")
            if not isinstance(entry, PiecewiseDensity):
                try:
                    entry = PiecewiseDensity(tuple(entry))
                except ValueError as err:
                    raise ValueError(f"density for step {step}: {err}") from err
            table[step] = entry
        self._table = table

    def _bet(self) -> PiecewiseDensity:
        return self._table.get(self._steps + 1, PiecewiseDensity.uniform())
