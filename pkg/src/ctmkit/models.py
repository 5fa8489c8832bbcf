"""Sequential alternative hypotheses over finite alphabets.

An alternative is specified by its conditional next-symbol law given the
prefix observed so far; that is all the betting engine and the verification
oracle ever ask of it.  Models are horizon-free: the run length is a runtime
parameter, never a model parameter.

The two shipped binary alternatives (single changepoint, first-order Markov)
are expressed as tiny hidden-state chains, which both gives them exact O(n)
conditionals and makes them eligible for the collapsed betting engine.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_SUM_TOL = 1e-12


def _validate_prob(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


class AlternativeModel(ABC):
    """A law over symbol sequences, presented one conditional at a time."""

    def __init__(self, alphabet_size: int):
        alphabet_size = int(alphabet_size)
        if alphabet_size < 2:
            raise ValueError(f"alphabet size must be at least 2, got {alphabet_size}")
        self.alphabet_size = alphabet_size

    @abstractmethod
    def conditional(self, prefix: Sequence[int]) -> np.ndarray:
        """Probability vector of the next symbol given ``prefix``."""

    def conditional_batch(self, prefixes: np.ndarray) -> np.ndarray:
        """Conditionals for many prefixes at once, one per row.

        The default loops over :meth:`conditional`; table-backed models
        override this with vectorized indexing.
        """
        rows = np.asarray(prefixes)
        return np.stack([self.conditional(tuple(int(z) for z in row)) for row in rows])

    def sequence_log_probability(self, seq: Sequence[int]) -> float:
        """Natural log probability of a finite sequence; -inf when impossible."""
        total = 0.0
        prefix: tuple = ()
        for z in seq:
            z = int(z)
            prob = float(self.conditional(prefix)[z])
            if prob <= 0.0:
                return -math.inf
            total += math.log(prob)
            prefix = prefix + (z,)
        return total

    def sample(self, horizon: int, rng: np.random.Generator) -> np.ndarray:
        """Draw one sequence of length ``horizon``."""
        out = np.empty(horizon, dtype=np.int64)
        prefix: tuple = ()
        for n in range(horizon):
            probs = np.asarray(self.conditional(prefix), dtype=float)
            cum = np.cumsum(probs)
            z = int(min(np.searchsorted(cum, rng.random(), side="right"), self.alphabet_size - 1))
            out[n] = z
            prefix = prefix + (z,)
        return out


class BinaryHMM(AlternativeModel):
    """Binary alternative driven by a small hidden state.

    ``transition[h, z, h2]`` is the joint probability of emitting symbol ``z``
    and moving to hidden state ``h2`` when the chain sits in hidden state
    ``h``; each ``transition[h]`` sums to one.  ``initial`` is the hidden
    state law before the first emission.  This is the structural requirement
    for the collapsed betting engine: the model sees a prefix only through
    its hidden-state posterior.
    """

    def __init__(self, initial, transition, description: str = ""):
        super().__init__(2)
        initial = np.asarray(initial, dtype=float)
        transition = np.asarray(transition, dtype=float)
        if initial.ndim != 1:
            raise ValueError("initial hidden-state law must be a vector")
        H = initial.size
        if transition.shape != (H, 2, H):
            raise ValueError(
                f"transition tensor must have shape ({H}, 2, {H}), got {transition.shape}"
            )
        if np.any(initial < 0.0) or np.any(transition < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(initial.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"initial law must sum to 1, got {initial.sum()!r}")
        row_sums = transition.reshape(H, -1).sum(axis=1)
        for h, s in enumerate(row_sums):
            if abs(float(s) - 1.0) > PROB_SUM_TOL:
                raise ValueError(f"transition row {h} must sum to 1, got {float(s)!r}")
        self.initial = initial
        self.transition = transition
        self.description = description or "binary hidden-state model"

    @property
    def hidden_size(self) -> int:
        return int(self.initial.size)

    def conditional(self, prefix) -> np.ndarray:
        state = self.initial
        for z in prefix:
            state = state @ self.transition[:, int(z), :]
            total = float(state.sum())
            if total <= 0.0:
                raise ValueError("prefix has probability zero under this model")
            state = state / total
        p1 = float(state @ self.transition[:, 1, :].sum(axis=1))
        p0 = float(state @ self.transition[:, 0, :].sum(axis=1))
        return np.array([p0, p1]) / (p0 + p1)

    def __repr__(self):
        return f"BinaryHMM({self.description})"


def _bern(z: int, theta: float) -> float:
    return theta if z == 1 else 1.0 - theta


def changepoint_model(pi0: float, pi1: float, rho: float) -> BinaryHMM:
    """Single-changepoint binary alternative.

    Symbols are Bernoulli(pi0) before an unobserved change time and
    Bernoulli(pi1) after it; the change arrives with per-step hazard ``rho``
    (a geometric prior), and may land before the first symbol.  ``rho = 0``
    degenerates to iid Bernoulli(pi0), ``rho = 1`` to iid Bernoulli(pi1).
    """
    pi0 = _validate_prob("pi0", pi0)
    pi1 = _validate_prob("pi1", pi1)
    rho = _validate_prob("rho", rho)
    T = np.zeros((2, 2, 2))
    for z in (0, 1):
        T[0, z, 0] = (1.0 - rho) * _bern(z, pi0)
        T[0, z, 1] = rho * _bern(z, pi1)
        T[1, z, 1] = _bern(z, pi1)
    return BinaryHMM([1.0, 0.0], T, f"changepoint(pi0={pi0}, pi1={pi1}, rho={rho})")


def markov_model(p01: float, p10: float, init1: float = 0.5) -> BinaryHMM:
    """First-order binary Markov chain.

    ``p01`` is the probability of a 1 after a 0, ``p10`` of a 0 after a 1;
    the first symbol is Bernoulli(init1).  Hidden state 2 is the pre-start
    state, states 0 and 1 mirror the last emitted symbol.
    """
    p01 = _validate_prob("p01", p01)
    p10 = _validate_prob("p10", p10)
    init1 = _validate_prob("init1", init1)
    T = np.zeros((3, 2, 3))
    T[2, 1, 1] = init1
    T[2, 0, 0] = 1.0 - init1
    T[0, 1, 1] = p01
    T[0, 0, 0] = 1.0 - p01
    T[1, 0, 0] = p10
    T[1, 1, 1] = 1.0 - p10
    return BinaryHMM([0.0, 0.0, 1.0], T, f"markov(p01={p01}, p10={p10}, init1={init1})")


class IIDModel(AlternativeModel):
    """IID categorical law over an alphabet of any size."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        super().__init__(probs.size)
        if np.any(probs < 0.0) or abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities must be nonnegative and sum to 1, got {probs}")
        self._probs = probs

    def conditional(self, prefix) -> np.ndarray:
        return self._probs.copy()

    def conditional_batch(self, prefixes) -> np.ndarray:
        rows = np.asarray(prefixes)
        return np.broadcast_to(self._probs, (rows.shape[0], self.alphabet_size)).copy()


def iid_model(probs) -> AlternativeModel:
    """IID alternative; binary instances come back in hidden-state form so
    they qualify for the collapsed engine."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 2:
        theta = _validate_prob("success probability", probs[1])
        if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities must sum to 1, got {probs}")
        T = np.zeros((1, 2, 1))
        T[0, 0, 0] = 1.0 - theta
        T[0, 1, 0] = theta
        return BinaryHMM([1.0], T, f"iid(theta={theta})")
    return IIDModel(probs)


class PointMassModel(AlternativeModel):
    """Point mass on one fixed sequence (extended by repeating its last symbol).

    The conditional after a prefix that already disagrees with the sequence is
    moot: such candidates carry zero weight and are never extended.
    """

    def __init__(self, sequence, alphabet_size: int = 2):
        super().__init__(alphabet_size)
        seq = tuple(int(z) for z in sequence)
        if not seq:
            raise ValueError("point-mass sequence must be non-empty")
        for z in seq:
            if not 0 <= z < self.alphabet_size:
                raise ValueError(f"symbol {z} outside alphabet of size {self.alphabet_size}")
        self.sequence = seq

    def conditional(self, prefix) -> np.ndarray:
        idx = min(len(prefix), len(self.sequence) - 1)
        out = np.zeros(self.alphabet_size)
        out[self.sequence[idx]] = 1.0
        return out


class TableModel(AlternativeModel):
    """Explicit conditional table for every prefix up to a depth.

    Rows are stored level-major and indexed by the base-m code of the prefix,
    so batched lookups are a single fancy-indexing call.  Prefixes at or
    beyond the table depth fall back to the uniform conditional, keeping the
    model horizon-free.
    """

    def __init__(self, alphabet_size: int, rows: np.ndarray, depth: int):
        super().__init__(alphabet_size)
        depth = int(depth)
        if depth < 1:
            raise ValueError("table depth must be at least 1")
        m = self.alphabet_size
        offsets = np.zeros(depth + 1, dtype=np.int64)
        for k in range(depth):
            offsets[k + 1] = offsets[k] + m**k
        rows = np.asarray(rows, dtype=float)
        if rows.shape != (int(offsets[depth]), m):
            raise ValueError(
                f"expected {int(offsets[depth])} rows of width {m}, got {rows.shape}"
            )
        if np.any(rows < 0.0):
            raise ValueError("conditional probabilities must be nonnegative")
        sums = rows.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > PROB_SUM_TOL)[0]
        if bad.size:
            raise ValueError(f"conditional row {int(bad[0])} sums to {float(sums[bad[0]])!r}")
        self.depth = depth
        self._rows = rows
        self._offsets = offsets
        self._uniform = np.full(m, 1.0 / m)

    def _codes(self, prefixes: np.ndarray) -> np.ndarray:
        rows = np.asarray(prefixes, dtype=np.int64)
        if rows.shape[1] == 0:
            return np.zeros(rows.shape[0], dtype=np.int64)
        powers = self.alphabet_size ** np.arange(rows.shape[1] - 1, -1, -1, dtype=np.int64)
        return rows @ powers

    def conditional(self, prefix) -> np.ndarray:
        k = len(prefix)
        if k >= self.depth:
            return self._uniform.copy()
        code = 0
        for z in prefix:
            code = code * self.alphabet_size + int(z)
        return self._rows[int(self._offsets[k]) + code].copy()

    def conditional_batch(self, prefixes) -> np.ndarray:
        rows = np.asarray(prefixes, dtype=np.int64)
        k = rows.shape[1]
        if k >= self.depth:
            return np.broadcast_to(self._uniform, (rows.shape[0], self.alphabet_size)).copy()
        return self._rows[int(self._offsets[k]) + self._codes(rows)]

    @classmethod
    def random(cls, alphabet_size: int, depth: int, rng: np.random.Generator) -> "TableModel":
        """Random conditional table: rows drawn uniformly from the simplex."""
        m = int(alphabet_size)
        count = sum(m**k for k in range(int(depth)))
        raw = rng.standard_exponential((count, m))
        rows = raw / raw.sum(axis=1, keepdims=True)
        return cls(m, rows, depth)

    @classmethod
    def from_json(cls, path) -> "TableModel":
        """Load a table from JSON: ``{"alphabet_size": m, "conditionals":
        {"": [...], "0": [...], "0,1": [...], ...}}``.

        Prefix keys are comma-separated symbol codes; missing prefixes get
        the uniform conditional.
        """
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        m = int(payload["alphabet_size"])
        conditionals = payload.get("conditionals", {})
        parsed = {}
        for key, probs in conditionals.items():
            prefix = tuple(int(t) for t in key.split(",")) if key else ()
            parsed[prefix] = np.asarray(probs, dtype=float)
        depth = max((len(p) for p in parsed), default=0) + 1
        offsets = [0]
        for k in range(depth):
            offsets.append(offsets[-1] + m**k)
        rows = np.full((offsets[-1], m), 1.0 / m)
        for prefix, probs in parsed.items():
            code = 0
            for z in prefix:
                if not 0 <= int(z) < m:
                    raise ValueError(f"prefix {prefix} outside alphabet of size {m}")
                code = code * m + int(z)
            rows[offsets[len(prefix)] + code] = probs
        return cls(m, rows, depth)
