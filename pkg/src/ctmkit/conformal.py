"""Conformity scoring and randomized conformal p-values.

The p-value transducer turns an observation stream into a stream of
unit-interval values that are iid uniform whenever the observations are
exchangeable.  At step n the whole window seen so far is re-scored with a
bag-symmetric conformity measure, the newest score is ranked within the
window, and rank ties are broken by an external uniform draw:

    p_n = (#{i : score_i < score_n} + tau_n * #{i : score_i = score_n}) / n

Everything downstream (betting, optimality certificates) consumes only the
p-values, so this module is the single place where raw observations are
touched.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ConformityMeasure",
    "IdentityMeasure",
    "DistanceToMeanMeasure",
    "PValueRecord",
    "TauSource",
    "UniformTauSource",
    "ConstantTauSource",
    "SequenceTauSource",
    "TrajectoryStep",
    "score_window",
    "tie_counts",
    "pvalue_step",
    "ctm_run",
    "read_observation_stream",
]


class ConformityMeasure(ABC):
    """Deterministic, bag-symmetric scoring of a window of observations.

    Implementations must treat the window as a multiset: permuting the first
    n-1 entries may not change any score, bit for bit.  A single flipped tie
    would change the rank counts, so "approximately symmetric" is not good
    enough.  Larger scores mean more conforming; the rank of the newest score
    then sends strange observations to small p-values.
    """

    name = "abstract"

    @abstractmethod
    def scores(self, window: Sequence[float] | np.ndarray) -> np.ndarray:
        """Score every element of ``window`` against the window's bag."""

    def score_windows(self, windows: np.ndarray) -> np.ndarray:
        """Row-wise batch of :meth:`scores`.

        Subclasses override this when a vectorized version exists that is
        bit-identical to the scalar path.
        """
        return np.stack([self.scores(row) for row in windows])


class IdentityMeasure(ConformityMeasure):
    """Score = observation value, the canonical choice for numeric alphabets."""

    name = "identity"

    def scores(self, window):
        return np.asarray(window, dtype=float)

    def score_windows(self, windows):
        return np.asarray(windows, dtype=float)


class DistanceToMeanMeasure(ConformityMeasure):
    """Negated absolute distance to the bag mean.

    The mean uses ``math.fsum``, which is exactly rounded and therefore
    independent of summation order; an ordinary left-to-right sum would break
    bag symmetry in the last bit and silently alter tie counts.
    """

    name = "distmean"

    def scores(self, window):
        arr = np.asarray(window, dtype=float)
        mean = math.fsum(arr.tolist()) / arr.size
        return -np.abs(arr - mean)

    def score_windows(self, windows):
        arr = np.asarray(windows)
        if arr.ndim == 2 and np.issubdtype(arr.dtype, np.integer):
            # integer row sums are exact, so this matches the fsum path
            means = arr.sum(axis=1, dtype=np.int64) / arr.shape[1]
            return -np.abs(arr.astype(float) - means[:, None])
        return np.stack([self.scores(row) for row in arr])


def score_window(measure: ConformityMeasure, window) -> np.ndarray:
    """Apply ``measure`` to a non-empty window, refusing non-finite scores."""
    arr = np.asarray(window, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("window must be a non-empty one-dimensional sequence")
    scores = np.asarray(measure.scores(arr), dtype=float)
    if scores.shape != arr.shape:
        raise ValueError(
            f"conformity measure {measure.name!r} returned {scores.shape} scores "
            f"for a window of shape {arr.shape}"
        )
    if not np.all(np.isfinite(scores)):
        raise ValueError(f"conformity measure {measure.name!r} produced non-finite scores")
    return scores


def tie_counts(scores) -> tuple[int, int]:
    """Strict and weak rank counts of the last score within the window.

    Returns ``(n_star, n_upper)`` where ``n_star`` counts scores strictly
    below the newest one and ``n_upper`` counts scores less than or equal to
    it (the newest score ties with itself, so ``n_star < n_upper`` always).
    Ties are exact float equality by design: scoring is deterministic, so
    equal bags give bitwise equal scores.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("need at least one score")
    last = s[-1]
    n_star = int(np.count_nonzero(s < last))
    n_upper = int(np.count_nonzero(s <= last))
    return n_star, n_upper


@dataclass(frozen=True)
class PValueRecord:
    """Audit record for one conformal p-value.

    ``p`` always lies in ``[n_star/n, n_upper/n]``; given the window it is
    uniform on that interval, which is what the betting side banks on.
    """

    n: int
    n_star: int
    n_upper: int
    tau: float
    p: float


def pvalue_step(scores, tau: float) -> PValueRecord:
    """Turn the current window's scores plus one tie-breaking draw into a p-value."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    s = np.asarray(scores, dtype=float)
    n = int(s.size)
    n_star, n_upper = tie_counts(s)
    p = (n_star + tau * (n_upper - n_star)) / n
    return PValueRecord(n=n, n_star=n_star, n_upper=n_upper, tau=float(tau), p=float(p))


class TauSource(ABC):
    """Stream of tie-breaking draws, kept separate from the data stream."""

    @abstractmethod
    def draw(self) -> float:
        """Next tie-breaking value in [0, 1]."""


class UniformTauSource(TauSource):
    """Seeded uniform stream; the only source that preserves validity."""

    def __init__(self, seed):
        if isinstance(seed, np.random.Generator):
            self._rng = seed
        else:
            self._rng = np.random.default_rng(seed)

    def draw(self) -> float:
        return float(self._rng.random())


class ConstantTauSource(TauSource):
    """Degenerate stream.

    Using a constant tau breaks the uniformity guarantee of the p-values.
    This source exists so the harness can demonstrate that such misuse is
    caught by the validity suite, not so anyone should run it in earnest.
    """

    def __init__(self, value: float):
        if not 0.0 <= float(value) <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {value}")
        self._value = float(value)

    def draw(self) -> float:
        return self._value


class SequenceTauSource(TauSource):
    """Replays a fixed finite list of draws; raises when exhausted."""

    def __init__(self, values):
        vals = [float(v) for v in values]
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"tau must lie in [0, 1], got {v}")
        self._values = vals
        self._next = 0

    def draw(self) -> float:
        if self._next >= len(self._values):
            raise ValueError(f"tau sequence exhausted after {len(self._values)} draws")
        v = self._values[self._next]
        self._next += 1
        return v


@dataclass(frozen=True)
class TrajectoryStep:
    """One step of a conformal test martingale run."""

    record: PValueRecord
    observation: float
    factor: float
    wealth: float
    log_wealth: float


def ctm_run(data, measure: ConformityMeasure, bettor, taus: TauSource, horizon: int):
    """Run a conformal test martingale for ``horizon`` steps.

    ``bettor`` is any ``BettingMartingale``; it sees only the p-values.  The
    returned trajectory has one entry per step; wealth starts at 1 before the
    first step.  The whole window is re-scored at every step, so a step-n
    update costs one measure evaluation on n points.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    seq = list(data)
    if len(seq) < horizon:
        raise ValueError(
            f"observation stream too short: run needs {horizon} values, got {len(seq)}"
        )
    if bettor.steps_taken != 0:
        raise ValueError("bettor has already been stepped; use a fresh instance")
    window = np.empty(horizon, dtype=float)
    out = []
    for n in range(1, horizon + 1):
        z = float(seq[n - 1])
        if not math.isfinite(z):
            raise ValueError(f"observation at position {n} is not finite: {seq[n - 1]!r}")
        window[n - 1] = z
        scores = score_window(measure, window[:n])
        rec = pvalue_step(scores, taus.draw())
        factor = bettor.update(rec.p)
        out.append(
            TrajectoryStep(
                record=rec,
                observation=z,
                factor=factor,
                wealth=bettor.wealth,
                log_wealth=bettor.log_wealth,
            )
        )
    return out


def read_observation_stream(path) -> list:
    """Read a line-delimited observation file: one integer or decimal per line.

    Integer-looking lines come back as ``int`` (alphabet codes), everything
    else as ``float``.  Blank lines are skipped; anything unparsable or
    non-finite is an error naming the offending line.
    """
    values = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(int(text))
                continue
            except ValueError:
                pass
            try:
                value = float(text)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: cannot parse observation {text!r}") from err
            if not math.isfinite(value):
                raise ValueError(f"{path}:{lineno}: observation must be finite, got {text!r}")
            values.append(value)
    return values
