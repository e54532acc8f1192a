"""Pathwise regret accounting by coupling the hindsight oracle to a policy.

The hindsight ("offline-to-go") oracle is forced to copy the online policy's
decision at every step and is paid, at each step where the online action is
outside its optimal action set, exactly the value it loses by complying.  The
payments then telescope: on every path,

    offline_value == online_value + sum(compensations),

so ``verify_decomposition`` returning a ~0 residual is an exact end-to-end
check of a policy trace against the oracle.

The per-step optimal action set is evaluated in value space.  With budget b
and later arrivals ``rest``, hiring ability ``theta`` is optimal iff
``theta >= v_b`` and rejecting is optimal iff ``theta <= v_b``, where ``v_b``
is the b-th largest value in ``rest`` (0 when fewer than b remain; only
rejection is feasible when b == 0).  On a step where the online action is
strictly suboptimal the exact compensation collapses to ``|theta - v_b|``,
which is what the suffix re-solve (two top-k selections) evaluates to after
cancelling shared terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import QuantileModel
from .errors import ConfigurationError, CouplingError, DomainError, UnsupportedModelError
from .policies import (
    CwGConfig,
    PolicyTrace,
    SamplePath,
    draw_path,
    offline_value,
    run_cwg,
    run_policy,
)

__all__ = [
    "CouplingTrace",
    "otg_interval",
    "otg_threshold",
    "step_compensation",
    "couple_trace",
    "verify_decomposition",
    "verification_rows",
    "EventFrequencies",
    "event_frequencies",
    "MartingaleReport",
    "martingale_diagnostic",
]

_QPLUS_NUDGE = 1e-12  # right-limit quantile evaluated at q + 1e-12, clamped
_STREAM_VERIFY = 1
_STREAM_EVENTS = 2
_STREAM_MARTINGALE = 3


def _stream(seed: int, tag: int, horizon: int, rep: int) -> np.random.Generator:
    """Independent, order-free stream keyed by (seed, purpose, T, replication)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, tag, horizon, rep]))
    )


def otg_interval(future_quantiles: Sequence[float], budget: int) -> tuple[float, float]:
    """Hindsight acceptance interval endpoints for the next decision.

    ``future_quantiles`` are the quantiles still to arrive, including the one
    about to be decided.  Returns ``(q_l, q_u)``: the (budget+1)-th and
    budget-th largest elements, with the conventions q_u = 1 when budget == 0
    (reject-all) and q_l = 0 when budget == len (no lower order statistic).
    """
    arr = np.asarray(future_quantiles, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("future_quantiles must be a nonempty 1-d sequence")
    m = arr.size
    budget = int(budget)
    if budget < 0 or budget > m:
        raise DomainError(f"budget must lie in [0, {m}], got {budget}")
    if budget == 0:
        return float(arr.max()), 1.0
    srt = np.sort(arr)[::-1]
    q_u = float(srt[budget - 1])
    q_l = float(srt[budget]) if budget < m else 0.0
    return q_l, q_u


def otg_threshold(p_used: float, q_l: float, q_u: float, budget: int) -> float:
    """Endpoint of [q_l, q_u] farthest from the online threshold (ties: q_u).

    Defined as 1 when the online budget is exhausted: the oracle then rejects
    everything the online policy is forced to reject.
    """
    if q_l > q_u:
        raise DomainError("requires q_l <= q_u")
    if budget == 0:
        return 1.0
    return q_u if abs(p_used - q_u) >= abs(p_used - q_l) else q_l


def _lemma_bound(model: QuantileModel, p_used: float, p_otg: float) -> float:
    """Value-gap bound on one compensation: the larger one-sided inverse gap."""
    f_used = float(model.quantile(p_used))
    f_used_plus = float(model.quantile(min(p_used + _QPLUS_NUDGE, 1.0)))
    f_otg = float(model.quantile(p_otg))
    return max(f_used - f_otg, f_otg - f_used_plus)


def step_compensation(
    model: QuantileModel,
    x_quantile: float,
    p_used: float,
    p_otg: float | None,
    future_quantiles: Sequence[float],
    budget: int,
) -> tuple[int, float]:
    """Exact coupling payment for a single decision.

    ``x_quantile`` is the arriving candidate's tie-break quantile,
    ``future_quantiles`` the quantiles of the arrivals strictly after it, and
    ``budget`` the online budget before the decision; the online action is
    ``x_quantile >= p_used and budget > 0``.  Fires iff that action is outside
    the hindsight-optimal action set; the amount is the value the oracle loses
    by complying, obtained by re-solving the top-budget selection on the
    suffix with and without the forced action.  When ``p_otg`` is given the
    value-gap bound is computed alongside and asserted to dominate the amount.
    """
    for name, v in (("x_quantile", x_quantile), ("p_used", p_used)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1]")
    rest = np.asarray(future_quantiles, dtype=np.float64)
    budget = int(budget)
    if budget < 0:
        raise DomainError("budget must be >= 0")
    theta = float(model.quantile(x_quantile))
    rest_values = np.sort(np.asarray(model.quantile(rest), dtype=np.float64))[::-1]
    v_b = float(rest_values[budget - 1]) if 1 <= budget <= rest_values.size else 0.0
    hired = x_quantile >= p_used and budget > 0
    if hired:
        fired = int(theta < v_b)
    else:
        fired = int(budget > 0 and theta > v_b)
    amount = abs(theta - v_b) if fired else 0.0
    if fired and p_otg is not None:
        bound = _lemma_bound(model, p_used, p_otg)
        if amount > bound + 1e-9:
            raise CouplingError(
                f"compensation {amount:.12g} exceeds its value-gap bound {bound:.12g}"
            )
    return fired, amount


@dataclass(eq=False)
class CouplingTrace:
    """Per-step coupling record along one policy trace.

    Index t refers to the decision on arrival t (0-based): ``q_l``/``q_u`` are
    the hindsight interval endpoints from the suffix including that arrival
    and the pre-decision budget, ``p_otg`` the matched oracle threshold,
    ``fired``/``amount`` the coupling trigger and exact payment, and
    ``lemma_bound`` the value-gap bound (nan off fired steps).  ``a1``/``a2``/
    ``a3`` record the threshold-proximity events where ``events_valid`` (the
    adaptive-phase steps with at least one later arrival).
    """

    q_l: np.ndarray
    q_u: np.ndarray
    p_otg: np.ndarray
    fired: np.ndarray
    amount: np.ndarray
    lemma_bound: np.ndarray
    events_valid: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    offline: float
    online: float

    @property
    def total_compensation(self) -> float:
        return float(self.amount.sum())

    @property
    def residual(self) -> float:
        return self.offline - (self.online + self.total_compensation)


def _cells_of(quantiles: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-cell membership range [lo, hi] for each p (cells numbered 1..n+1)."""
    a = np.searchsorted(quantiles, p, side="left")
    lo = np.maximum(a, 1)
    on_boundary = (a < quantiles.size) & (quantiles[np.minimum(a, quantiles.size - 1)] == p)
    hi = np.where(on_boundary & (a + 1 <= quantiles.size - 1), a + 1, lo)
    return lo, np.maximum(hi, lo)


def couple_trace(
    model: QuantileModel,
    path: SamplePath,
    trace: PolicyTrace,
    max_horizon: int = 500,
) -> CouplingTrace:
    """Couple the hindsight oracle to a finished trace, step by step.

    Builds all suffix order statistics at once (O(T^2) memory/time), which is
    why verification is gated to ``max_horizon``; raise the gate explicitly
    for bigger paths.
    """
    T = path.horizon
    if T > max_horizon:
        raise ConfigurationError(
            f"coupling verification is O(T^2); horizon {T} exceeds the gate "
            f"{max_horizon} (pass max_horizon explicitly to override)"
        )
    u = path.uniforms
    vals = path.values
    mu = trace.decisions.astype(np.int64)
    b_after = trace.budget_after
    b_before = np.concatenate(([trace.budget], b_after[:-1])).astype(np.int64)

    # Descending-sorted suffix matrices, zero-padded on the right: row t holds
    # the elements of x[t:].  Zero padding implements the boundary
    # conventions (missing order statistics read as 0).
    def suffix_desc(x):
        grid = np.where(
            np.arange(T)[None, :] >= np.arange(T + 1)[:, None], x[None, :], -np.inf
        )
        s = -np.sort(-grid, axis=1)
        s[np.isneginf(s)] = 0.0
        return s

    Sv = suffix_desc(vals)
    Su = suffix_desc(u)

    t_idx = np.arange(T)
    rem_rest = T - t_idx - 1
    b = b_before
    theta = vals

    # b-th largest value among the strictly-later arrivals (0 if fewer than b)
    vb_idx = np.minimum(np.maximum(b, 1) - 1, T - 1)
    v_b = np.where((b >= 1) & (b <= rem_rest), Sv[t_idx + 1, vb_idx], 0.0)

    hire_opt = (b > 0) & (theta >= v_b)
    reject_opt = (b == 0) | (theta <= v_b)
    fired = np.where(mu == 1, ~hire_opt, ~reject_opt)
    amount = np.where(fired, np.abs(theta - v_b), 0.0)

    # hindsight interval from the suffix including the current arrival
    b_eff = np.minimum(b, T - t_idx)
    qu_idx = np.minimum(np.maximum(b_eff, 1) - 1, T - 1)
    q_u = np.where(b == 0, 1.0, Su[t_idx, qu_idx])
    ql_idx = np.minimum(b_eff, T - 1)
    q_l = np.where(b == 0, Su[t_idx, 0],
                   np.where(b_eff + 1 <= T - t_idx, Su[t_idx, ql_idx], 0.0))

    p_used = trace.threshold_used
    p_otg = np.where(
        b == 0, 1.0,
        np.where(np.abs(p_used - q_u) >= np.abs(p_used - q_l), q_u, q_l),
    )

    lemma_bound = np.full(T, np.nan)
    f_idx = np.nonzero(fired)[0]
    if f_idx.size:
        pu = p_used[f_idx]
        po = p_otg[f_idx]
        f_used = np.asarray(model.quantile(pu))
        f_plus = np.asarray(model.quantile(np.minimum(pu + _QPLUS_NUDGE, 1.0)))
        f_otg = np.asarray(model.quantile(po))
        lemma_bound[f_idx] = np.maximum(f_used - f_otg, f_otg - f_plus)
        bad = amount[f_idx] > lemma_bound[f_idx] + 1e-9
        if np.any(bad):
            k = f_idx[np.argmax(bad)]
            raise CouplingError(
                f"step {k}: compensation {amount[k]:.12g} exceeds its "
                f"value-gap bound {lemma_bound[k]:.12g}"
            )

    # threshold-proximity events, valid on adaptive-phase steps with a
    # nonempty strict future (tau = remaining arrivals including the current)
    tau = (T - t_idx).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.sqrt(2.0 * np.log(tau) / tau)
        r2 = 3.0 * np.sqrt(np.log(tau) / tau)
    events_valid = (trace.phase == 1) & (t_idx < T - 1)
    a1 = np.abs(trace.threshold_ce - p_otg) <= r1
    a2 = np.abs(p_used - p_otg) <= r2
    qs = np.asarray(model.gaps.quantiles)
    lo_c, hi_c = _cells_of(qs, np.clip(p_used, 0.0, 1.0))
    lo_o, hi_o = _cells_of(qs, np.clip(p_otg, 0.0, 1.0))
    a3 = (lo_c <= hi_o) & (lo_o <= hi_c)

    off_val, _, _ = offline_value(path, trace.budget)
    return CouplingTrace(
        q_l=q_l, q_u=q_u, p_otg=p_otg,
        fired=fired.astype(np.uint8), amount=amount, lemma_bound=lemma_bound,
        events_valid=events_valid, a1=a1, a2=a2, a3=a3,
        offline=off_val, online=trace.accepted_value,
    )


def verify_decomposition(
    model: QuantileModel,
    path: SamplePath,
    budget: int,
    policy: str,
    config: CwGConfig | None = None,
    max_horizon: int = 500,
) -> float:
    """Residual of the pathwise identity offline = online + compensations.

    Exactly 0 in exact arithmetic for every policy, path and model; returns
    the float residual for assertion against an accumulation tolerance.
    """
    trace = run_policy(model, path, budget, policy, config)
    return couple_trace(model, path, trace, max_horizon=max_horizon).residual


def verification_rows(
    model: QuantileModel,
    policy: str,
    budget_for,
    horizon: int,
    reps: int,
    seed: int,
    max_horizon: int = 500,
):
    """Yield per-path verification rows for reporting.

    ``budget_for`` maps a horizon to a budget.  Rows are
    (path_id, policy, offline, online, total_compensation, residual).
    """
    for r in range(reps):
        rng = _stream(seed, _STREAM_VERIFY, horizon, r)
        path = draw_path(model, horizon, rng)
        trace = run_policy(model, path, budget_for(horizon), policy)
        ct = couple_trace(model, path, trace, max_horizon=max_horizon)
        yield (r, policy, ct.offline, ct.online, ct.total_compensation, ct.residual)


# ---------------------------------------------------------------------------
# Threshold-proximity event frequencies
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EventFrequencies:
    """Empirical complement frequencies of the three proximity events by tau.

    For each remaining-time tau: A1 compares the re-solving threshold to the
    hindsight threshold at radius sqrt(2 ln(tau)/tau); A2 compares the snapped
    threshold at radius 3 sqrt(ln(tau)/tau); A3 asks that snapped and
    hindsight thresholds share a closed quantile cell.  ``bounds`` are the
    theoretical tail bounds 2/tau^4, 2/tau^4 and 2 n (n+1)/tau^4.
    """

    horizon: int
    taus: np.ndarray
    reps: int
    freq: np.ndarray     # shape (3, len(taus))
    stderr: np.ndarray   # shape (3, len(taus))
    bounds: np.ndarray   # shape (3, len(taus))

    EVENTS = ("A1c", "A2c", "A3c")

    def exceedances(self, sigmas: float = 3.0) -> np.ndarray:
        """Boolean matrix: frequency exceeds bound by more than sigmas errors."""
        return self.freq > self.bounds + sigmas * self.stderr

    def rows(self):
        for j, tau in enumerate(self.taus):
            for i, name in enumerate(self.EVENTS):
                yield (self.horizon, int(tau), name, self.freq[i, j],
                       self.stderr[i, j], self.bounds[i, j])


def event_frequencies(
    model: QuantileModel,
    budget: int,
    horizon: int,
    taus: Sequence[int],
    reps: int,
    seed: int,
    config: CwGConfig | None = None,
) -> EventFrequencies:
    """Measure the event complement frequencies under the snapping policy.

    Only taus with an adaptive-phase threshold (tau > tail_length) are kept;
    the table is empty when the configuration has no adaptive phase at this
    horizon.
    """
    if config is None:
        config = CwGConfig(model.gaps)
    t_tilde = config.phase1_end(horizon)
    taus = np.asarray(sorted({int(t) for t in taus}), dtype=np.int64)
    taus = taus[(taus >= 2) & (horizon - taus >= 0) & (horizon - taus <= t_tilde - 1)]
    k = taus.size
    counts = np.zeros((3, k), dtype=np.int64)
    if k == 0 or reps <= 0:
        freq = np.zeros((3, 0))
        return EventFrequencies(horizon, taus, reps, freq, freq.copy(), freq.copy())

    qs = np.asarray(model.gaps.quantiles)
    n = model.gaps.n
    s_idx = horizon - taus  # 0-based threshold index t with tau = T - t
    for r in range(reps):
        rng = _stream(seed, _STREAM_EVENTS, horizon, r)
        path = draw_path(model, horizon, rng)
        trace = run_cwg(model, path, budget, config)
        b_before = np.concatenate(([budget], trace.budget_after[:-1]))
        for j, (s, tau) in enumerate(zip(s_idx, taus)):
            b = int(b_before[s])
            suffix = path.uniforms[s:]
            if b == 0:
                q_u, q_l = 1.0, float(suffix.max())
            else:
                b_eff = min(b, tau)
                part = np.partition(suffix, [tau - b_eff, max(tau - b_eff - 1, 0)])
                q_u = float(part[tau - b_eff])
                q_l = float(part[tau - b_eff - 1]) if b_eff < tau else 0.0
            p_ce = float(trace.threshold_ce[s])
            p_cwg = float(trace.threshold_used[s])
            p_otg = otg_threshold(p_cwg, q_l, q_u, b)
            r1 = math.sqrt(2.0 * math.log(tau) / tau)
            r2 = 3.0 * math.sqrt(math.log(tau) / tau)
            if abs(p_ce - p_otg) > r1:
                counts[0, j] += 1
            if abs(p_cwg - p_otg) > r2:
                counts[1, j] += 1
            lo_c, hi_c = _cells_of(qs, np.asarray([p_cwg]))
            lo_o, hi_o = _cells_of(qs, np.asarray([min(p_otg, 1.0)]))
            if not (lo_c[0] <= hi_o[0] and lo_o[0] <= hi_c[0]):
                counts[2, j] += 1

    freq = counts / float(reps)
    stderr = np.sqrt(freq * (1.0 - freq) / reps)
    tf = taus.astype(np.float64)
    bounds = np.vstack([2.0 / tf**4, 2.0 / tf**4, 2.0 * n * (n + 1) / tf**4])
    return EventFrequencies(horizon, taus, reps, freq, stderr, bounds)


# ---------------------------------------------------------------------------
# Martingale diagnostic for the re-solving threshold
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MartingaleReport:
    """Per-step statistics of the re-solving threshold increments.

    ``mean``/``stderr`` are over replications for each step t (1-based) up to
    the cutoff; ``max_abs_z`` is the worst standardized conditional mean.
    ``step_bound_ok`` certifies |increment_t| <= 1/(T-t) on every path and
    step, checked in exact integer arithmetic.
    """

    horizon: int
    budget: int
    reps: int
    cutoff: int
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    step_bound_ok: bool

    @property
    def max_abs_z(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.mean) / self.stderr
        return float(np.nanmax(z)) if z.size else 0.0


_CONTINUOUS_KINDS = ("uniform", "fbeta", "pwuniform")


def martingale_diagnostic(
    model: QuantileModel, budget: int, horizon: int, reps: int, seed: int
) -> MartingaleReport:
    """Check that re-solving threshold increments center on zero.

    Runs the re-solving policy; increments are Delta_t = p_t - p_{t-1} for
    t = 1..floor(2T/3), whose conditional mean is zero for non-atomic models.
    Also verifies the exact step bound |Delta_t| <= 1/(T-t) via the integer
    identity |B_{t-1}(T-t) - B_t(T-t+1)| <= T-t+1.
    """
    if model.kind not in _CONTINUOUS_KINDS:
        raise UnsupportedModelError(
            "martingale diagnostic requires a non-atomic model"
        )
    from .policies import run_ce  # local import to keep module load light

    T = int(horizon)
    cutoff = (2 * T) // 3
    if cutoff < 1 or T < 2:
        raise ConfigurationError("horizon too small for the diagnostic")
    sums = np.zeros(cutoff)
    sumsq = np.zeros(cutoff)
    bound_ok = True
    for r in range(reps):
        rng = _stream(seed, _STREAM_MARTINGALE, T, r)
        path = draw_path(model, T, rng)
        trace = run_ce(model, path, budget)
        p = trace.threshold_ce  # p[t] is the threshold before arrival t+1
        delta = np.diff(p)[:cutoff]
        sums += delta
        sumsq += delta * delta
        b_full = np.concatenate(([budget], trace.budget_after[:-1])).astype(np.int64)
        tt = np.arange(1, T, dtype=np.int64)  # increment index t = 1..T-1
        lhs = np.abs(b_full[:-1] * (T - tt) - b_full[1:] * (T - tt + 1))
        if np.any(lhs > T - tt + 1):
            bound_ok = False
    mean = sums / reps
    var = np.maximum(sumsq / reps - mean**2, 0.0) * (reps / max(reps - 1, 1))
    stderr = np.sqrt(var / reps)
    return MartingaleReport(
        horizon=T, budget=budget, reps=reps, cutoff=cutoff,
        t=np.arange(1, cutoff + 1), mean=mean, stderr=stderr,
        step_bound_ok=bound_ok,
    )
