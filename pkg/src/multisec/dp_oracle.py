"""Exact small-instance oracles for discrete type distributions.

``optimal_online_value`` computes the best achievable expected online value by
backward induction over (steps remaining, budget); ``exact_offline_expectation``
computes the exact hindsight expectation by enumerating type-count vectors
with multinomial weights.  Together they bracket every feasible policy:

    optimal_online_value <= E[policy value] + noise <= exact_offline_expectation

which is what ``regret_oracle`` checks against a Monte-Carlo run of the
gap-snapping policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Discrete, QuantileModel
from .errors import DomainError, SizeError, UnsupportedModelError
from .policies import CwGConfig, draw_path, offline_value, run_cwg

__all__ = [
    "optimal_online_value",
    "dp_table",
    "exact_offline_expectation",
    "OracleReport",
    "regret_oracle",
]

_MAX_SUPPORT = 16
_MAX_HORIZON = 10_000
_MAX_TERMS = 5_000_000
_STREAM_ORACLE = 4


def _require_discrete(dist: QuantileModel) -> Discrete:
    if not isinstance(dist, Discrete):
        raise UnsupportedModelError("exact oracles require a discrete model")
    if len(dist.support) > _MAX_SUPPORT:
        raise SizeError(f"support size {len(dist.support)} exceeds {_MAX_SUPPORT}")
    return dist


def _check_instance(budget: int, horizon: int) -> tuple[int, int]:
    budget, horizon = int(budget), int(horizon)
    if horizon < 1 or horizon > _MAX_HORIZON:
        raise SizeError(f"horizon must lie in [1, {_MAX_HORIZON}]")
    if not 1 <= budget <= horizon:
        raise DomainError(f"budget must lie in [1, {horizon}]")
    return budget, horizon


def optimal_online_value(dist: QuantileModel, budget: int, horizon: int) -> float:
    """Optimal expected online value via backward induction.

    Recursion over budget vectors: with one more step to go,
    V[b] <- sum_i f_i * max(a_i + V[b-1], V[b]), V[0] = 0.
    """
    dist = _require_discrete(dist)
    budget, horizon = _check_instance(budget, horizon)
    support = np.asarray(dist.support)
    masses = np.asarray(dist.masses)
    v = np.zeros(budget + 1)
    for _ in range(horizon):
        nxt = np.zeros_like(v)
        for a_i, f_i in zip(support, masses):
            nxt[1:] += f_i * np.maximum(a_i + v[:-1], v[1:])
        v = nxt
    return float(v[budget])


def dp_table(dist: QuantileModel, budget: int, horizon: int) -> np.ndarray:
    """Full value-to-go table V[t, b] for t in [0, T], b in [0, B].

    Row T is zero and column 0 is zero; V[0, B] equals
    :func:`optimal_online_value`.  Intended for small instances.
    """
    dist = _require_discrete(dist)
    budget, horizon = _check_instance(budget, horizon)
    if (horizon + 1) * (budget + 1) > 2_000_000:
        raise SizeError("dp_table instance too large; use optimal_online_value")
    support = np.asarray(dist.support)
    masses = np.asarray(dist.masses)
    table = np.zeros((horizon + 1, budget + 1))
    for t in range(horizon - 1, -1, -1):
        v = table[t + 1]
        row = np.zeros(budget + 1)
        for a_i, f_i in zip(support, masses):
            row[1:] += f_i * np.maximum(a_i + v[:-1], v[1:])
        table[t] = row
    return table


def _compositions(total: int, parts: int):
    """Yield all count vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head, *tail)


def exact_offline_expectation(dist: QuantileModel, budget: int, horizon: int) -> float:
    """Exact E[top-budget sum] by enumerating type counts.

    Enumerates all multinomial count vectors (C(T+m-1, m-1) of them), weights
    them exactly via log-factorials, and accumulates with compensated
    summation; the total weight is asserted to be 1 within 1e-9.
    """
    dist = _require_discrete(dist)
    budget, horizon = _check_instance(budget, horizon)
    m = len(dist.support)
    n_terms = math.comb(horizon + m - 1, m - 1)
    if n_terms > _MAX_TERMS:
        raise SizeError(
            f"{n_terms} count vectors exceed the enumeration cap {_MAX_TERMS}"
        )
    log_fact = [math.lgamma(k + 1) for k in range(horizon + 1)]
    log_f = [math.log(f) for f in dist.masses]
    support = dist.support
    lgT = log_fact[horizon]
    weighted: list[float] = []
    weights: list[float] = []
    for counts in _compositions(horizon, m):
        logw = lgT
        for c, lf, lfac in zip(counts, log_f, (log_fact[c] for c in counts)):
            logw += c * lf - lfac
        w = math.exp(logw)
        remaining = budget
        value = 0.0
        for i in range(m - 1, -1, -1):
            take = counts[i] if counts[i] < remaining else remaining
            value += take * support[i]
            remaining -= take
            if remaining == 0:
                break
        weighted.append(w * value)
        weights.append(w)
    total_w = math.fsum(weights)
    if abs(total_w - 1.0) > 1e-9:
        raise SizeError(f"enumeration weight drift {total_w - 1.0:g}; instance too large")
    return math.fsum(weighted)


@dataclass(frozen=True)
class OracleReport:
    """Exact regret bracket plus a Monte-Carlo check of the snapping policy."""

    budget: int
    horizon: int
    offline_exact: float
    online_optimal: float
    regret_opt: float
    cwg_regret_mc: float
    cwg_stderr: float
    reps: int

    @property
    def sandwich_ok(self) -> bool:
        """Simulated regret cannot significantly beat the exact optimum."""
        return self.cwg_regret_mc >= self.regret_opt - 3.0 * self.cwg_stderr


def regret_oracle(
    dist: QuantileModel, budget: int, horizon: int, reps: int = 4000, seed: int = 0
) -> OracleReport:
    """Exact optimal regret and a paired Monte-Carlo snapping-policy regret."""
    dist = _require_discrete(dist)
    budget, horizon = _check_instance(budget, horizon)
    v_off = exact_offline_expectation(dist, budget, horizon)
    v_on = optimal_online_value(dist, budget, horizon)
    config = CwGConfig(dist.gaps)
    samples = np.empty(reps)
    for r in range(reps):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([seed, _STREAM_ORACLE, horizon, r]))
        )
        path = draw_path(dist, horizon, rng)
        trace = run_cwg(dist, path, budget, config)
        off, _, _ = offline_value(path, budget)
        samples[r] = off - trace.accepted_value
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(reps))
    return OracleReport(
        budget=budget, horizon=horizon,
        offline_exact=v_off, online_optimal=v_on, regret_opt=v_off - v_on,
        cwg_regret_mc=mean, cwg_stderr=stderr, reps=reps,
    )
