"""Monte-Carlo experiment runner and scaling-fit utilities.

Replications are paired: each replication draws one path from a stream keyed
by (master seed, horizon, replication index) and evaluates the hindsight
optimum and every configured policy on that same path, so policy comparisons
use common random numbers.  Streams are counter-based, which makes the run
embarrassingly parallel; aggregation always happens in replication-index
order, so output is byte-identical regardless of worker count.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .distributions import QuantileModel
from .errors import ConfigurationError, FitError
from .policies import (
    POLICY_NAMES,
    CwGConfig,
    draw_path,
    offline_value,
    run_policy,
)

__all__ = [
    "ExperimentConfig",
    "RegretEstimate",
    "run_experiment",
    "FitResult",
    "fit_exponent",
    "parse_horizons",
    "emit_dat",
    "emit_csv",
    "emit_combined_csv",
    "emit_meta",
    "emit_outputs",
    "git_blob_sha1",
]

_STREAM_EXPERIMENT = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """One regret-scaling experiment: model x policies x horizon grid."""

    model: QuantileModel
    policies: tuple[str, ...]
    horizons: tuple[int, ...]
    reps: int
    seed: int
    budget: int | None = None
    budget_ratio: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "horizons", tuple(int(t) for t in self.horizons))
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if not self.policies or unknown:
            raise ConfigurationError(
                f"invalid policy selectors {unknown}; valid: {', '.join(POLICY_NAMES)}"
            )
        if not self.horizons or any(
            b <= a for a, b in zip(self.horizons, self.horizons[1:])
        ):
            raise ConfigurationError("horizons must be a strictly increasing list")
        if self.reps < 2:
            raise ConfigurationError("reps must be >= 2")
        if self.seed < 0:
            raise ConfigurationError("seed must be a nonnegative integer")
        if (self.budget is None) == (self.budget_ratio is None):
            raise ConfigurationError("give exactly one of budget or budget_ratio")
        if self.budget_ratio is not None and not (0.0 < self.budget_ratio <= 1.0):
            raise ConfigurationError("budget_ratio must be in (0, 1]")

    def budget_for(self, horizon: int) -> int:
        """Fixed budget, or floor(ratio * T) under a ratio rule."""
        b = self.budget if self.budget is not None else math.floor(self.budget_ratio * horizon)
        if not 1 <= b <= horizon:
            raise ConfigurationError(
                f"budget {b} out of range [1, {horizon}] at horizon {horizon}"
            )
        return int(b)

    def echo(self) -> dict[str, str]:
        """Flat key/value view for metadata sidecars."""
        budget = (
            f"ratio={self.budget_ratio:.17g}"
            if self.budget_ratio is not None
            else f"fixed={self.budget}"
        )
        return {
            "dist": self.model.spec_string(),
            "gaps": ",".join(f"{q:.17g}" for q in self.model.gaps.quantiles),
            "beta": f"{self.model.gaps.beta:.17g}",
            "epsilon0": f"{self.model.gaps.epsilon0:.17g}",
            "delta": f"{self.model.gaps.delta:.17g}",
            "policies": ",".join(self.policies),
            "budget": budget,
            "horizons": ",".join(str(t) for t in self.horizons),
            "reps": str(self.reps),
            "seed": str(self.seed),
        }


@dataclass(eq=False)
class RegretEstimate:
    """Per-(policy, horizon) regret means with standard errors.

    ``samples`` holds the raw per-replication regrets (policy -> array of
    shape (len(horizons), reps)) when the experiment was asked to keep them.
    """

    policies: tuple[str, ...]
    horizons: tuple[int, ...]
    budgets: tuple[int, ...]
    reps: int
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    offline_mean: np.ndarray
    samples: dict[str, np.ndarray] | None = None

    def series(self, policy: str) -> list[tuple[int, float, float]]:
        """(T, mean, stderr) triples for one policy, fit-ready."""
        return [
            (t, float(m), float(s))
            for t, m, s in zip(self.horizons, self.mean[policy], self.stderr[policy])
        ]


def _run_block(
    config: ExperimentConfig, horizon: int, budget: int, rep_indices: Sequence[int]
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Evaluate a block of replications; returns per-rep offline and regrets."""
    cwg_config = CwGConfig(config.model.gaps)
    off = np.empty(len(rep_indices))
    regret = {p: np.empty(len(rep_indices)) for p in config.policies}
    for k, r in enumerate(rep_indices):
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence([config.seed, _STREAM_EXPERIMENT, horizon, r])
            )
        )
        path = draw_path(config.model, horizon, rng)
        off_val, _, _ = offline_value(path, budget)
        off[k] = off_val
        for p in config.policies:
            trace = run_policy(config.model, path, budget, p, cwg_config)
            regret[p][k] = off_val - trace.accepted_value
    return off, regret


def run_experiment(
    config: ExperimentConfig,
    threads: int | None = None,
    keep_samples: bool = False,
) -> RegretEstimate:
    """Run the experiment; deterministic for fixed config regardless of threads."""
    n_h = len(config.horizons)
    budgets = tuple(config.budget_for(t) for t in config.horizons)
    offline_mean = np.empty(n_h)
    samples = {p: np.empty((n_h, config.reps)) for p in config.policies}
    off_samples = np.empty((n_h, config.reps))

    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, int(threads))

    for i, (horizon, budget) in enumerate(zip(config.horizons, budgets)):
        if threads == 1:
            off, regret = _run_block(config, horizon, budget, range(config.reps))
            off_samples[i] = off
            for p in config.policies:
                samples[p][i] = regret[p]
        else:
            blocks = np.array_split(np.arange(config.reps), threads * 2)
            blocks = [b for b in blocks if b.size]
            with ProcessPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(_run_block, config, horizon, budget, block.tolist())
                    for block in blocks
                ]
                for block, fut in zip(blocks, futures):
                    off, regret = fut.result()
                    off_samples[i, block] = off
                    for p in config.policies:
                        samples[p][i, block] = regret[p]
        offline_mean[i] = off_samples[i].mean()

    mean = {p: samples[p].mean(axis=1) for p in config.policies}
    stderr = {
        p: samples[p].std(axis=1, ddof=1) / math.sqrt(config.reps)
        for p in config.policies
    }
    for p in config.policies:
        low = mean[p] + 3.0 * stderr[p]
        if np.any(low < 0.0):
            raise RuntimeError(
                f"negative mean regret for {p}: pathwise dominance violated (bug)"
            )
    return RegretEstimate(
        policies=config.policies,
        horizons=config.horizons,
        budgets=budgets,
        reps=config.reps,
        mean=mean,
        stderr=stderr,
        offline_mean=offline_mean,
        samples=samples if keep_samples else None,
    )


# ---------------------------------------------------------------------------
# Exponent fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_exponent(series: Iterable[tuple[float, float, float] | tuple[float, float]]) -> FitResult:
    """Ordinary least squares of ln(mean) on ln(T).

    ``series`` is a list of (T, mean[, stderr]) rows.  Requires at least four
    rows with strictly positive means; otherwise raises :class:`FitError`
    carrying a flatness z-score (growth between first and last rows) so the
    caller can report a bounded-regret regime.
    """
    rows = [tuple(map(float, row)) for row in series]
    if len(rows) < 4:
        raise ConfigurationError("exponent fit needs at least 4 points")
    t = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    se = np.array([r[2] if len(r) > 2 else 0.0 for r in rows])
    if np.any(t <= 0):
        raise ConfigurationError("horizons must be positive")
    if np.any(m <= 0.0):
        denom = math.sqrt(se[0] ** 2 + se[-1] ** 2) or 1.0
        raise FitError(
            "nonpositive mean regret: bounded-regret regime, no log-log fit",
            flatness=float((m[-1] - m[0]) / denom),
        )
    x = np.log(t)
    y = np.log(m)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, len(rows))


def parse_horizons(spec: str) -> tuple[int, ...]:
    """Horizon grid grammar: ``geom:lo:hi:k`` or ``list:a,b,c``.

    Geometric grids are rounded to integers and deduplicated.
    """
    kind, _, body = spec.partition(":")
    if kind == "geom":
        parts = body.split(":")
        if len(parts) != 3:
            raise ConfigurationError("geom grid needs geom:lo:hi:k")
        lo, hi, k = float(parts[0]), float(parts[1]), int(parts[2])
        if not (0 < lo < hi) or k < 2:
            raise ConfigurationError("geom grid needs 0 < lo < hi and k >= 2")
        grid = np.rint(np.geomspace(lo, hi, k)).astype(np.int64)
        return tuple(sorted(set(int(t) for t in grid)))
    if kind == "list":
        try:
            grid = tuple(int(tok) for tok in body.split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad horizon list {body!r}") from exc
        if not grid:
            raise ConfigurationError("empty horizon list")
        return tuple(sorted(set(grid)))
    raise ConfigurationError(f"unknown horizon grammar {spec!r}; use geom: or list:")


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def git_blob_sha1(data: bytes) -> str:
    """Content hash in git blob form: sha1(b"blob <len>\\0" + data)."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def emit_dat(estimate: RegretEstimate, policy: str, path: str | Path) -> Path:
    """Two-column plot file: header ``T regret`` then one row per horizon."""
    path = Path(path)
    lines = ["T regret"]
    for t, m in zip(estimate.horizons, estimate.mean[policy]):
        lines.append(f"{t} {m:.10g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_csv(estimate: RegretEstimate, policy: str, path: str | Path) -> Path:
    """Three-column file: header ``T,regret,stderr``."""
    path = Path(path)
    lines = ["T,regret,stderr"]
    for t, m, s in zip(estimate.horizons, estimate.mean[policy], estimate.stderr[policy]):
        lines.append(f"{t},{m:.10g},{s:.10g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_combined_csv(estimate: RegretEstimate, path: str | Path) -> Path:
    """All policies in one file: ``policy,T,regret,stderr``."""
    path = Path(path)
    lines = ["policy,T,regret,stderr"]
    for p in estimate.policies:
        for t, m, s in zip(estimate.horizons, estimate.mean[p], estimate.stderr[p]):
            lines.append(f"{p},{t},{m:.10g},{s:.10g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_meta(config_echo: dict[str, str], out_files: Sequence[Path], path: str | Path) -> Path:
    """Metadata sidecar: config echo plus content hashes of the outputs."""
    path = Path(path)
    lines = [f"{k}: {v}" for k, v in config_echo.items()]
    for f in out_files:
        lines.append(f"hash {Path(f).name}: {git_blob_sha1(Path(f).read_bytes())}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_outputs(
    estimate: RegretEstimate, config: ExperimentConfig, out_prefix: str | Path
) -> list[Path]:
    """Write the full output set for a run under ``out_prefix``.

    Per policy: ``<prefix>_<policy>.dat`` and ``<prefix>_<policy>.csv``; plus
    the combined ``<prefix>.csv`` and ``<prefix>.meta.txt``.  Returns every
    path written, metadata last.
    """
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    for p in estimate.policies:
        files.append(emit_dat(estimate, p, prefix.with_name(prefix.name + f"_{p}.dat")))
        files.append(emit_csv(estimate, p, prefix.with_name(prefix.name + f"_{p}.csv")))
    files.append(emit_combined_csv(estimate, prefix.with_name(prefix.name + ".csv")))
    meta = emit_meta(config.echo(), files, prefix.with_name(prefix.name + ".meta.txt"))
    files.append(meta)
    return files
