"""Likelihood-ratio e-process for binary data against the iid Bernoulli family.

The running statistic is Q(prefix) divided by the maximum likelihood the
Bernoulli family can give that prefix.  At every fixed sample size its
expectation is at most one under every Bernoulli law, which is what makes it
usable as evidence against the whole family; the oracle module can check the
bound exactly by enumeration.

Also here: the empirical maximum likelihood of a real-valued sample over all
exchangeable laws (the product of multiplicity frequencies), which equals
N^-N exactly when all N values are distinct and makes the corresponding
likelihood ratio of any continuous alternative exactly zero.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .models import AlternativeModel

__all__ = [
    "EProcessState",
    "initial_state",
    "ml_sup",
    "log_ml_sup",
    "eprocess_step",
    "run_eprocess",
    "empirical_ml",
    "log_empirical_ml",
    "example_distinct_report",
]


def log_ml_sup(n: int, ones: int) -> float:
    """log sup over theta of the Bernoulli likelihood of a length-n, k-ones string.

    The supremum sits at theta = k/n and equals (k/n)^k ((n-k)/n)^(n-k),
    with 0^0 read as 1.
    """
    n = int(n)
    ones = int(ones)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not 0 <= ones <= n:
        raise ValueError(f"ones count must lie in [0, {n}], got {ones}")
    zeros = n - ones
    out = 0.0
    if ones:
        out += ones * math.log(ones / n)
    if zeros:
        out += zeros * math.log(zeros / n)
    return out


def ml_sup(n: int, ones: int) -> float:
    return math.exp(log_ml_sup(n, ones))


@dataclass(frozen=True)
class EProcessState:
    """Running e-process state after ``n`` symbols.

    ``value`` is exp(log_q - log_ml_sup(n, ones)); it is zero (and absorbing)
    as soon as the alternative gives the realized prefix probability zero.
    """

    n: int
    ones: int
    log_q: float
    value: float
    prefix: tuple = ()


def initial_state() -> EProcessState:
    return EProcessState(n=0, ones=0, log_q=0.0, value=1.0, prefix=())


def eprocess_step(state: EProcessState, z: int, model: AlternativeModel) -> EProcessState:
    """Advance the e-process by one observed bit."""
    z = int(z)
    if z not in (0, 1):
        raise ValueError(f"binary e-process expects bits, got {z}")
    if model.alphabet_size != 2:
        raise ValueError("binary e-process needs a binary alternative")
    if state.log_q > -math.inf:
        # the conditional law is only defined while the prefix is possible
        cond = float(model.conditional(state.prefix)[z])
        log_q = state.log_q + math.log(cond) if cond > 0.0 else -math.inf
    else:
        log_q = -math.inf
    n = state.n + 1
    ones = state.ones + z
    if log_q == -math.inf:
        value = 0.0
    else:
        log_value = log_q - log_ml_sup(n, ones)
        value = math.inf if log_value > 709.0 else math.exp(log_value)
    return EProcessState(n=n, ones=ones, log_q=log_q, value=value, prefix=state.prefix + (z,))


def run_eprocess(data, model: AlternativeModel) -> list:
    """E-process trajectory over a bit sequence, one state per step."""
    state = initial_state()
    out = []
    for z in data:
        state = eprocess_step(state, z, model)
        out.append(state)
    return out


def log_empirical_ml(values) -> float:
    """log of the empirical maximum likelihood of a sample under exchangeability.

    Equals sum over distinct values of m_j * log(m_j / N); ties are exact
    float equality.
    """
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("need at least one observation")
    if any(not math.isfinite(v) for v in vals):
        raise ValueError("observations must be finite")
    n = len(vals)
    counts = Counter(vals)
    return math.fsum(m * math.log(m / n) for m in counts.values())


def empirical_ml(values) -> float:
    return math.exp(log_empirical_ml(values))


def example_distinct_report(values) -> dict:
    """Empirical-ML summary of a real sample.

    When all N values are distinct the empirical maximum likelihood is
    exactly N^-N, so any alternative with a density (which gives every exact
    sample probability zero) has likelihood ratio exactly zero against it.
    """
    vals = [float(v) for v in values]
    n = len(vals)
    log_eml = log_empirical_ml(vals)
    all_distinct = len(set(vals)) == n
    return {
        "n": n,
        "all_distinct": all_distinct,
        "log_empirical_ml": log_eml,
        "empirical_ml": math.exp(log_eml),
        "log_nn_floor": -n * math.log(n),
        "continuous_alternative_likelihood_ratio": 0.0,
    }
