"""Online hiring policies and the hindsight benchmark.

All acceptance tests happen in quantile space with the weak inequality
``X_t >= threshold``: the tie-break coordinate X_t of a step is the uniform
draw that generated the ability, so atomic distributions get unbiased
randomized tie-breaking under every policy, and all policies see the same
path (common random numbers).

Policies:

* ``ce``      -- re-solving threshold 1 - budget/remaining before each arrival.
* ``cwg``     -- same, but the threshold snaps to a nearby interior gap
  quantile when within radius sqrt(2 ln(remaining)/remaining); for the final
  ``tail_length`` steps the threshold computed at the phase switch is frozen.
* ``static``  -- the time-0 threshold 1 - budget/horizon applied throughout.
* ``offline`` -- the anticipating top-budget selection (the benchmark).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np
from numba import njit

from .distributions import GapStructure, QuantileModel
from .errors import ConfigurationError, DomainError

__all__ = [
    "SamplePath",
    "PolicyTrace",
    "CwGConfig",
    "POLICY_NAMES",
    "draw_path",
    "path_from_uniforms",
    "ce_threshold",
    "cwg_snap",
    "run_ce",
    "run_cwg",
    "run_static",
    "run_offline",
    "run_policy",
    "offline_value",
    "write_trace_csv",
]

POLICY_NAMES = ("ce", "cwg", "static", "offline")

_MIN_U = np.finfo(np.float64).tiny  # keep draws inside (0, 1)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One horizon of i.i.d. arrivals, stored in quantile space.

    ``values[t] == model.quantile(uniforms[t])`` exactly by construction;
    ``quantiles`` is an alias for ``uniforms`` (the tie-break coordinates).
    """

    uniforms: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.uniforms, dtype=np.float64)
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if u.ndim != 1 or u.shape != v.shape or u.size == 0:
            raise ConfigurationError("uniforms and values must be equal-length 1-d arrays")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "uniforms", u)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return self.uniforms.shape[0]

    @property
    def quantiles(self) -> np.ndarray:
        return self.uniforms


def draw_path(model: QuantileModel, horizon: int, rng: np.random.Generator) -> SamplePath:
    """Draw a horizon of uniforms from ``rng`` and map them through the model."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    u = rng.random(horizon)
    np.maximum(u, _MIN_U, out=u)
    return SamplePath(u, np.asarray(model.quantile(u)))


def path_from_uniforms(model: QuantileModel, uniforms) -> SamplePath:
    """Build a path from hand-picked uniform draws (tests, worked examples)."""
    u = np.asarray(uniforms, dtype=np.float64)
    if u.size and (u.min() <= 0.0 or u.max() >= 1.0):
        raise DomainError("uniform draws must lie strictly inside (0, 1)")
    return SamplePath(u, np.asarray(model.quantile(u)))


@dataclass(frozen=True)
class CwGConfig:
    """Gap-snapping configuration: gaps plus the static-tail length."""

    gaps: GapStructure

    @property
    def tail_length(self) -> int:
        """floor(16 ln(1/epsilon0) / epsilon0**2); 0 when epsilon0 == 1."""
        eps = self.gaps.epsilon0
        return int(math.floor(16.0 * math.log(1.0 / eps) / (eps * eps)))

    def phase1_end(self, horizon: int) -> int:
        """Last step index handled by the snapping phase: max(0, T - tail)."""
        return max(0, horizon - self.tail_length)


@dataclass(frozen=True, eq=False)
class PolicyTrace:
    """Complete per-step record of one policy run on one path."""

    policy: str
    budget: int
    decisions: np.ndarray       # uint8, 1 = hired
    budget_after: np.ndarray    # int64, budget remaining after each step
    threshold_ce: np.ndarray    # re-solving threshold before each arrival
    threshold_used: np.ndarray  # threshold actually compared against X_t
    phase: np.ndarray           # uint8, 1 = adaptive, 2 = frozen tail
    accepted_value: float       # sum of hired abilities
    snap_index: Optional[np.ndarray] = None   # index into gaps.quantiles, -1 = unsnapped
    snap_count: Optional[np.ndarray] = None   # |candidate gap set| per step
    snap_radius: Optional[np.ndarray] = None  # snapping radius per step (nan in tail)

    def __post_init__(self):
        for name in ("decisions", "budget_after", "threshold_ce", "threshold_used",
                     "phase", "snap_index", "snap_count", "snap_radius"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.decisions.shape[0]

    @property
    def hires(self) -> int:
        return int(self.decisions.sum())


def ce_threshold(budget: int, remaining: int) -> float:
    """Re-solving threshold max(0, 1 - budget/remaining)."""
    if remaining <= 0:
        raise DomainError("remaining must be >= 1")
    if budget < 0:
        raise DomainError("budget must be >= 0")
    return max(0.0, 1.0 - budget / remaining)


def cwg_snap(
    p_ce: float, gaps: GapStructure, remaining: int
) -> tuple[float, bool, Optional[int]]:
    """Snap a re-solving threshold to the nearest interior gap quantile.

    The candidate set is every interior gap quantile within the closed ball of
    radius sqrt(2 ln(remaining)/remaining) around ``p_ce``; ties between
    equidistant candidates go to the smaller index.  Returns
    ``(threshold, snapped, j_star)`` where ``j_star`` indexes
    ``gaps.quantiles`` (1..n) or is None when nothing is in range.
    """
    if remaining <= 0:
        raise DomainError("remaining must be >= 1")
    radius = math.sqrt(2.0 * math.log(remaining) / remaining)
    best = -1
    best_d = math.inf
    for j, q in enumerate(gaps.interior):
        d = abs(p_ce - q)
        if d <= radius and d < best_d:
            best = j
            best_d = d
    if best < 0:
        return p_ce, False, None
    return gaps.interior[best], True, best + 1


# ---------------------------------------------------------------------------
# Step kernels (hot loops)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _ce_steps(u, budget, mu, b_after, p_ce):
    T = u.shape[0]
    b = budget
    for t in range(T):
        p = 1.0 - b / (T - t)
        if p < 0.0:
            p = 0.0
        p_ce[t] = p
        if u[t] >= p and b > 0:
            mu[t] = 1
            b -= 1
        else:
            mu[t] = 0
        b_after[t] = b


@njit(cache=True)
def _static_steps(u, budget, p0, mu, b_after):
    T = u.shape[0]
    b = budget
    for t in range(T):
        if u[t] >= p0 and b > 0:
            mu[t] = 1
            b -= 1
        else:
            mu[t] = 0
        b_after[t] = b


@njit(cache=True)
def _cwg_steps(u, budget, q_interior, t_tilde,
               mu, b_after, p_ce, p_used, phase, snap_index, snap_count, snap_radius):
    T = u.shape[0]
    n = q_interior.shape[0]
    b = budget
    for t in range(t_tilde):
        rem = T - t
        p = 1.0 - b / rem
        if p < 0.0:
            p = 0.0
        radius = math.sqrt(2.0 * math.log(rem) / rem)
        best = -1
        best_d = 1e300
        count = 0
        for j in range(n):
            d = abs(p - q_interior[j])
            if d <= radius:
                count += 1
                if d < best_d:
                    best = j
                    best_d = d
        thr = q_interior[best] if best >= 0 else p
        p_ce[t] = p
        p_used[t] = thr
        phase[t] = 1
        snap_index[t] = best + 1 if best >= 0 else -1
        snap_count[t] = count
        snap_radius[t] = radius
        if u[t] >= thr and b > 0:
            mu[t] = 1
            b -= 1
        else:
            mu[t] = 0
        b_after[t] = b
    if t_tilde < T:
        pf = 1.0 - b / (T - t_tilde)
        if pf < 0.0:
            pf = 0.0
        elif pf > 1.0:
            pf = 1.0
        for t in range(t_tilde, T):
            p = 1.0 - b / (T - t)
            if p < 0.0:
                p = 0.0
            p_ce[t] = p
            p_used[t] = pf
            phase[t] = 2
            snap_index[t] = -1
            snap_count[t] = 0
            snap_radius[t] = np.nan
            if u[t] >= pf and b > 0:
                mu[t] = 1
                b -= 1
            else:
                mu[t] = 0
            b_after[t] = b


# ---------------------------------------------------------------------------
# Policy runners
# ---------------------------------------------------------------------------


def _check_budget(budget: int, horizon: int) -> int:
    budget = int(budget)
    if not 1 <= budget <= horizon:
        raise DomainError(f"budget must lie in [1, {horizon}], got {budget}")
    return budget


def _accepted_value(path: SamplePath, mu: np.ndarray) -> float:
    return float(np.sum(path.values * mu))


def run_ce(model: QuantileModel, path: SamplePath, budget: int) -> PolicyTrace:
    """Run the re-solving policy over a path."""
    T = path.horizon
    budget = _check_budget(budget, T)
    mu = np.empty(T, dtype=np.uint8)
    b_after = np.empty(T, dtype=np.int64)
    p_ce = np.empty(T, dtype=np.float64)
    _ce_steps(path.uniforms, budget, mu, b_after, p_ce)
    return PolicyTrace(
        policy="ce", budget=budget, decisions=mu, budget_after=b_after,
        threshold_ce=p_ce, threshold_used=p_ce, phase=np.ones(T, dtype=np.uint8),
        accepted_value=_accepted_value(path, mu),
    )


def run_cwg(
    model: QuantileModel, path: SamplePath, budget: int,
    config: CwGConfig | None = None,
) -> PolicyTrace:
    """Run the gap-snapping policy; ``config`` defaults to the model's gaps."""
    T = path.horizon
    budget = _check_budget(budget, T)
    if config is None:
        config = CwGConfig(model.gaps)
    t_tilde = config.phase1_end(T)
    mu = np.empty(T, dtype=np.uint8)
    b_after = np.empty(T, dtype=np.int64)
    p_ce = np.empty(T, dtype=np.float64)
    p_used = np.empty(T, dtype=np.float64)
    phase = np.empty(T, dtype=np.uint8)
    snap_index = np.empty(T, dtype=np.int64)
    snap_count = np.empty(T, dtype=np.int64)
    snap_radius = np.empty(T, dtype=np.float64)
    _cwg_steps(
        path.uniforms, budget, config.gaps.interior_array(), t_tilde,
        mu, b_after, p_ce, p_used, phase, snap_index, snap_count, snap_radius,
    )
    return PolicyTrace(
        policy="cwg", budget=budget, decisions=mu, budget_after=b_after,
        threshold_ce=p_ce, threshold_used=p_used, phase=phase,
        accepted_value=_accepted_value(path, mu),
        snap_index=snap_index, snap_count=snap_count, snap_radius=snap_radius,
    )


def run_static(model: QuantileModel, path: SamplePath, budget: int) -> PolicyTrace:
    """Fix the threshold 1 - budget/horizon at time zero and never re-solve."""
    T = path.horizon
    budget = _check_budget(budget, T)
    p0 = max(0.0, 1.0 - budget / T)
    mu = np.empty(T, dtype=np.uint8)
    b_after = np.empty(T, dtype=np.int64)
    _static_steps(path.uniforms, budget, p0, mu, b_after)
    return PolicyTrace(
        policy="static", budget=budget, decisions=mu, budget_after=b_after,
        threshold_ce=np.full(T, p0), threshold_used=np.full(T, p0),
        phase=np.ones(T, dtype=np.uint8),
        accepted_value=_accepted_value(path, mu),
    )


def run_offline(model: QuantileModel, path: SamplePath, budget: int) -> PolicyTrace:
    """Trace of the anticipating benchmark: hire exactly the top-budget set."""
    T = path.horizon
    budget = _check_budget(budget, T)
    order = np.argpartition(path.uniforms, T - budget)[T - budget:]
    mu = np.zeros(T, dtype=np.uint8)
    mu[order] = 1
    b_after = budget - np.cumsum(mu, dtype=np.int64)
    value, q_l, q_u = offline_value(path, budget)
    return PolicyTrace(
        policy="offline", budget=budget, decisions=mu, budget_after=b_after,
        threshold_ce=np.full(T, q_u), threshold_used=np.full(T, q_u),
        phase=np.ones(T, dtype=np.uint8), accepted_value=value,
    )


def run_policy(
    model: QuantileModel, path: SamplePath, budget: int, policy: str,
    config: CwGConfig | None = None,
) -> PolicyTrace:
    """Dispatch on a policy selector string."""
    if policy == "ce":
        return run_ce(model, path, budget)
    if policy == "cwg":
        return run_cwg(model, path, budget, config)
    if policy == "static":
        return run_static(model, path, budget)
    if policy == "offline":
        return run_offline(model, path, budget)
    raise ConfigurationError(
        f"unknown policy {policy!r}; valid selectors: {', '.join(POLICY_NAMES)}"
    )


def offline_value(path: SamplePath, budget: int) -> tuple[float, float, float]:
    """Hindsight optimum: top-budget value sum plus the threshold quantiles.

    Returns ``(value, q_l, q_u)`` with ``q_u`` the budget-th largest quantile
    and ``q_l`` the next one down (0 when budget == horizon).  Expected O(T)
    via selection; quantiles are a.s. distinct so value ties are immaterial.
    """
    T = path.horizon
    budget = _check_budget(budget, T)
    k = T - budget
    value = float(np.partition(path.values, k)[k:].sum()) if k else float(path.values.sum())
    u_part = np.partition(path.uniforms, [max(k - 1, 0), k])
    q_u = float(u_part[k])
    q_l = float(u_part[k - 1]) if k >= 1 else 0.0
    return value, q_l, q_u


def write_trace_csv(path: SamplePath, trace: PolicyTrace, fh: IO[str]) -> None:
    """Dump a trace as CSV: t, U_t, theta_t, p_ce, p_used, mu_t, B_t, phase."""
    writer = csv.writer(fh)
    writer.writerow(["t", "U_t", "theta_t", "p_ce", "p_used", "mu_t", "B_t", "phase"])
    for t in range(trace.horizon):
        writer.writerow([
            t + 1,
            f"{path.uniforms[t]:.17g}",
            f"{path.values[t]:.17g}",
            f"{trace.threshold_ce[t]:.17g}",
            f"{trace.threshold_used[t]:.17g}",
            int(trace.decisions[t]),
            int(trace.budget_after[t]),
            int(trace.phase[t]),
        ])
