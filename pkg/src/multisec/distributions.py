"""Candidate-ability distributions on [0, 1].

Every model carries an exact cdf / quantile pair, where the quantile function
is the generalized inverse ``quantile(q) = inf{v : cdf(v) >= q}``, plus a
:class:`GapStructure` describing the quantiles at which the support is
interrupted by zero-mass intervals ("gaps").  Simulation happens in quantile
space: a single uniform draw ``u`` yields both the ability ``quantile(u)`` and
the tie-break coordinate ``u`` itself (see :meth:`QuantileModel.draw_step`).

Shipped families:

* ``uniform``            -- Uniform([0, 1]).
* ``fbeta:beta=b``       -- bimodal family with one value gap (1/4, 3/4); mass
  accumulates near the gap edges like distance**(b+1).
* ``discrete:...``       -- finitely many atoms; gap quantiles are the
  cumulative masses.
* ``pwuniform:...``      -- piecewise-uniform over disjoint intervals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "GapStructure",
    "QuantileModel",
    "Uniform",
    "FBeta",
    "Discrete",
    "PiecewiseUniform",
    "ClusterReport",
    "verify_clustered",
    "bisect_quantile",
    "parse_model",
]

_MASS_TOL = 1e-12


def _unit_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (np.any(np.isnan(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _match_input(out: np.ndarray, template) -> np.ndarray | float:
    """Return a scalar when the caller passed a scalar."""
    if np.ndim(template) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GapStructure:
    """Gap quantiles 0 = q*_0 < q*_1 < ... < q*_n < q*_{n+1} = 1.

    ``beta`` controls the within-cluster Hoelder exponent 1/(beta+1) of the
    quantile function, ``epsilon0`` the minimum cluster mass, and ``delta``
    the allowed atom spacing inside a cluster (0 for a pure continuum or a
    plain discrete family).  Whether a concrete (model, declaration) pair
    actually satisfies the density and size conditions is checked by
    :func:`verify_clustered`, so declarations that are wrong on purpose can
    still be constructed and diagnosed.
    """

    quantiles: tuple[float, ...]
    beta: float = 0.0
    epsilon0: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        qs = tuple(float(q) for q in self.quantiles)
        object.__setattr__(self, "quantiles", qs)
        if len(qs) < 2:
            raise ConfigurationError("gap quantiles need at least the endpoints 0 and 1")
        if qs[0] != 0.0 or qs[-1] != 1.0:
            raise ConfigurationError("gap quantiles must start at exactly 0 and end at exactly 1")
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ConfigurationError("gap quantiles must be strictly increasing")
        if not (self.beta >= 0.0):
            raise ConfigurationError("beta must be >= 0")
        if not (0.0 < self.epsilon0 <= 1.0):
            raise ConfigurationError("epsilon0 must be in (0, 1]")
        if not (0.0 <= self.delta <= 1.0):
            raise ConfigurationError("delta must be in [0, 1]")

    @property
    def n(self) -> int:
        """Number of interior gap quantiles."""
        return len(self.quantiles) - 2

    @property
    def interior(self) -> tuple[float, ...]:
        """q*_1 .. q*_n, the snappable thresholds."""
        return self.quantiles[1:-1]

    @property
    def cells(self) -> tuple[tuple[float, float], ...]:
        """Closed quantile cells [q*_{i-1}, q*_i], one per mass cluster."""
        qs = self.quantiles
        return tuple((qs[i], qs[i + 1]) for i in range(len(qs) - 1))

    def interior_array(self) -> np.ndarray:
        return np.asarray(self.interior, dtype=np.float64)


class QuantileModel:
    """Base class: exact cdf / generalized-inverse pair plus gap structure."""

    kind: str = "abstract"
    gaps: GapStructure

    def cdf(self, x):
        """Right-continuous F(x); accepts scalars or arrays in [0, 1]."""
        raise NotImplementedError

    def quantile(self, q):
        """Generalized inverse inf{v : F(v) >= q}; accepts scalars or arrays."""
        raise NotImplementedError

    def draw_step(self, u):
        """Map a uniform draw to ``(ability, tie_break_quantile)``.

        Because ``u`` is uniform, ``u`` conditioned on ``quantile(u)`` is a
        uniform sample from the quantile interval mapping to that ability,
        which is exactly the randomized tie-break needed for atomic models.
        """
        theta = self.quantile(u)
        return theta, _match_input(_unit_array(u, "u"), u)

    def with_gaps(self, gaps: GapStructure) -> "QuantileModel":
        """Same distribution with a different gap declaration."""
        return replace(self, gaps=gaps)  # type: ignore[type-var]

    def spec_string(self) -> str:
        """Canonical CLI selector string for this model."""
        raise NotImplementedError

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"{type(self).__name__}({self.spec_string()!r})"


def _default_uniform_gaps() -> GapStructure:
    return GapStructure((0.0, 1.0), beta=0.0, epsilon0=1.0)


@dataclass(frozen=True, repr=False)
class Uniform(QuantileModel):
    """Uniform([0, 1]); the gapless reference model."""

    gaps: GapStructure = field(default_factory=_default_uniform_gaps)
    kind = "uniform"

    def cdf(self, x):
        return _match_input(_unit_array(x, "x").copy(), x)

    def quantile(self, q):
        return _match_input(_unit_array(q, "q").copy(), q)

    def spec_string(self) -> str:
        return "uniform"


@dataclass(frozen=True, repr=False)
class FBeta(QuantileModel):
    """Bimodal family with the single value gap (1/4, 3/4).

    cdf(x) = 1/2 - 2*4**beta * (1/4 - x)**(beta+1)   on [0, 1/4]
           = 1/2                                     on [1/4, 3/4]
           = 1/2 + 2*4**beta * (x - 3/4)**(beta+1)   on [3/4, 1]

    quantile(q) = 1/4 - (1 - 2q)**(1/(beta+1)) / 4   for q <= 1/2
                = 3/4 + (2q - 1)**(1/(beta+1)) / 4   for q >  1/2

    beta = 0 is Uniform([0, 1/4] U [3/4, 1]).
    """

    beta: float = 0.0
    gaps: GapStructure = None  # type: ignore[assignment]
    kind = "fbeta"

    def __post_init__(self):
        if not (self.beta >= 0.0):
            raise ConfigurationError("fbeta requires beta >= 0")
        if self.gaps is None:
            object.__setattr__(
                self, "gaps", GapStructure((0.0, 0.5, 1.0), beta=self.beta, epsilon0=0.5)
            )

    def cdf(self, x):
        xa = np.atleast_1d(_unit_array(x, "x"))
        b1 = self.beta + 1.0
        scale = 2.0 * 4.0**self.beta
        out = np.full(xa.shape, 0.5)
        lo = xa < 0.25
        hi = xa > 0.75
        out[lo] = 0.5 - scale * (0.25 - xa[lo]) ** b1
        out[hi] = 0.5 + scale * (xa[hi] - 0.75) ** b1
        np.clip(out, 0.0, 1.0, out=out)
        return _match_input(out, x)

    def quantile(self, q):
        qa = np.atleast_1d(_unit_array(q, "q"))
        inv = 1.0 / (self.beta + 1.0)
        out = np.empty(qa.shape)
        lo = qa <= 0.5
        hi = ~lo
        out[lo] = 0.25 - 0.25 * (1.0 - 2.0 * qa[lo]) ** inv
        out[hi] = 0.75 + 0.25 * (2.0 * qa[hi] - 1.0) ** inv
        np.clip(out, 0.0, 1.0, out=out)
        return _match_input(out, q)

    def spec_string(self) -> str:
        return f"fbeta:beta={self.beta:.17g}"


@dataclass(frozen=True, repr=False)
class Discrete(QuantileModel):
    """Finitely many atoms a_1 < ... < a_m with masses f_i > 0 summing to 1.

    Gap quantiles are derived automatically as the cumulative masses, with
    epsilon0 = min_i f_i and beta = delta = 0.
    """

    support: tuple[float, ...]
    masses: tuple[float, ...]
    gaps: GapStructure = None  # type: ignore[assignment]
    kind = "discrete"

    def __post_init__(self):
        support = tuple(float(a) for a in self.support)
        masses = tuple(float(f) for f in self.masses)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)
        if len(support) == 0 or len(support) != len(masses):
            raise ConfigurationError("support and masses must be nonempty and equally long")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ConfigurationError("support must be strictly increasing")
        if support[0] < 0.0 or support[-1] > 1.0:
            raise ConfigurationError("support must lie in [0, 1]")
        if min(masses) <= 0.0:
            raise ConfigurationError("masses must be strictly positive")
        if abs(sum(masses) - 1.0) > _MASS_TOL:
            raise ConfigurationError("masses must sum to 1 within 1e-12")
        cum = np.cumsum(np.asarray(masses))
        cum[-1] = 1.0  # absorb the <=1e-12 rounding drift at the top
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_support_arr", np.asarray(support))
        if self.gaps is None:
            object.__setattr__(
                self,
                "gaps",
                GapStructure(
                    (0.0, *cum[:-1].tolist(), 1.0), beta=0.0, epsilon0=min(masses)
                ),
            )

    def cdf(self, x):
        xa = _unit_array(x, "x")
        idx = np.searchsorted(self._support_arr, xa, side="right")
        cum_ext = np.concatenate(([0.0], self._cum))
        return _match_input(cum_ext[idx], x)

    def quantile(self, q):
        qa = _unit_array(q, "q")
        idx = np.searchsorted(self._cum, qa, side="left")
        out = self._support_arr[np.minimum(idx, len(self.support) - 1)]
        out = np.where(qa == 0.0, 0.0, out)
        return _match_input(out, q)

    def spec_string(self) -> str:
        sup = ",".join(f"{a:.17g}" for a in self.support)
        mas = ",".join(f"{f:.17g}" for f in self.masses)
        return f"discrete:support={sup};mass={mas}"


@dataclass(frozen=True, repr=False)
class PiecewiseUniform(QuantileModel):
    """Uniform density on disjoint intervals [l_i, r_i] with weights w_i.

    Touching intervals (r_i == l_{i+1}) merge into one mass cluster; gap
    quantiles are placed at cumulative weights wherever a positive-length
    value gap separates consecutive intervals.  The declared beta defaults to
    0, which is only correct when every interval satisfies
    (r_i - l_i) <= w_i; declare a larger beta (or custom gaps) otherwise and
    check with :func:`verify_clustered`.
    """

    intervals: tuple[tuple[float, float], ...]
    weights: tuple[float, ...]
    beta: float = 0.0
    gaps: GapStructure = None  # type: ignore[assignment]
    kind = "pwuniform"

    def __post_init__(self):
        ivs = tuple((float(l), float(r)) for l, r in self.intervals)
        ws = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "weights", ws)
        if len(ivs) == 0 or len(ivs) != len(ws):
            raise ConfigurationError("intervals and weights must be nonempty and equally long")
        for l, r in ivs:
            if not (0.0 <= l < r <= 1.0):
                raise ConfigurationError("each interval needs 0 <= l < r <= 1")
        for (_, r), (l2, _) in zip(ivs, ivs[1:]):
            if l2 < r:
                raise ConfigurationError("intervals must be disjoint and increasing")
        if min(ws) <= 0.0:
            raise ConfigurationError("weights must be strictly positive")
        if abs(sum(ws) - 1.0) > _MASS_TOL:
            raise ConfigurationError("weights must sum to 1 within 1e-12")
        cum = np.cumsum(np.asarray(ws))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_lefts", np.asarray([l for l, _ in ivs]))
        object.__setattr__(self, "_rights", np.asarray([r for _, r in ivs]))
        if self.gaps is None:
            interior = []
            cluster_masses = []
            acc = ws[0]
            for i in range(len(ivs) - 1):
                if ivs[i][1] < ivs[i + 1][0]:  # strict value gap
                    interior.append(float(cum[i]))
                    cluster_masses.append(acc)
                    acc = 0.0
                acc += ws[i + 1]
            cluster_masses.append(acc)
            object.__setattr__(
                self,
                "gaps",
                GapStructure(
                    (0.0, *interior, 1.0), beta=self.beta, epsilon0=min(cluster_masses)
                ),
            )

    def cdf(self, x):
        xa = _unit_array(x, "x")
        idx = np.searchsorted(self._lefts, xa, side="right") - 1
        idx_c = np.clip(idx, 0, len(self.weights) - 1)
        l = self._lefts[idx_c]
        r = self._rights[idx_c]
        w = np.asarray(self.weights)[idx_c]
        prev = np.where(idx_c > 0, np.concatenate(([0.0], self._cum))[idx_c], 0.0)
        frac = np.clip((xa - l) / (r - l), 0.0, 1.0)
        out = np.where(idx < 0, 0.0, prev + w * frac)
        np.clip(out, 0.0, 1.0, out=out)
        return _match_input(out, x)

    def quantile(self, q):
        qa = _unit_array(q, "q")
        idx = np.searchsorted(self._cum, qa, side="left")
        idx_c = np.minimum(idx, len(self.weights) - 1)
        l = self._lefts[idx_c]
        r = self._rights[idx_c]
        w = np.asarray(self.weights)[idx_c]
        prev = np.where(idx_c > 0, np.concatenate(([0.0], self._cum))[idx_c], 0.0)
        out = l + (qa - prev) * (r - l) / w
        out = np.where(qa == 0.0, 0.0, np.clip(out, l, r))
        return _match_input(out, q)

    def spec_string(self) -> str:
        ivs = ",".join(f"({l:.17g},{r:.17g})" for l, r in self.intervals)
        ws = ",".join(f"{w:.17g}" for w in self.weights)
        return f"pwuniform:intervals={ivs};weights={ws}"


def bisect_quantile(
    cdf: Callable[[float], float], q: float, tol: float = 1e-12, max_iter: int = 200
) -> float:
    """Generic generalized inverse of a right-continuous cdf on [0, 1].

    Bisection for inf{v : cdf(v) >= q}, to absolute tolerance ``tol`` with an
    iteration cap; the reference route for models lacking a closed form and
    the cross-check oracle for the ones that have one.
    """
    if not (0.0 <= q <= 1.0):
        raise DomainError("q must lie in [0, 1]")
    if q <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0  # invariant: cdf(lo) < q <= cdf(hi)
    if cdf(0.0) >= q:
        return 0.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if cdf(mid) >= q:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Clustered-declaration verification
# ---------------------------------------------------------------------------

_GRID_INTERIOR = 512  # per-cell grid resolution, plus the two cell endpoints


@dataclass
class ClusterReport:
    """Outcome of checking a gap declaration against a model.

    ``density_violations`` is a structured array with fields
    (cell, q, q_tilde, gap, bound): within-cell quantile pairs whose value
    spread exceeds |q - q_tilde|**(1/(beta+1)) + delta + tolerance.
    ``size_violations`` lists (cell, width) for cells narrower than epsilon0.
    Cells are numbered 1..n+1.
    """

    density_violations: np.ndarray
    size_violations: list[tuple[int, float]]
    tolerance: float

    @property
    def ok(self) -> bool:
        return len(self.density_violations) == 0 and not self.size_violations

    def summary(self) -> str:
        return (
            f"density_violations={len(self.density_violations)} "
            f"size_violations={len(self.size_violations)}"
        )


_VIOLATION_DTYPE = np.dtype(
    [("cell", np.int64), ("q", np.float64), ("q_tilde", np.float64),
     ("gap", np.float64), ("bound", np.float64)]
)


def verify_clustered(model: QuantileModel, tolerance: float = 1e-9) -> ClusterReport:
    """Check the declared gap structure on a deterministic within-cell grid.

    Each quantile cell (q*_{i-1}, q*_i] is sampled at 512 interior points plus
    both endpoints, the left one nudged inside by 1e-12 because the cell is
    open there (using it exactly would compare values across the gap).
    """
    gaps = model.gaps
    exponent = 1.0 / (gaps.beta + 1.0)
    density_parts = []
    size_violations: list[tuple[int, float]] = []
    for cell_idx, (lo, hi) in enumerate(gaps.cells, start=1):
        width = hi - lo
        if width < 1e-9:
            raise ConfigurationError(
                f"cell {cell_idx} is too narrow ({width:g}) for the verification grid"
            )
        if width < gaps.epsilon0 - 1e-12:
            size_violations.append((cell_idx, width))
        pts = np.linspace(lo, hi, _GRID_INTERIOR + 2)
        pts[0] = lo + min(1e-12, width / 1024.0)
        vals = np.asarray(model.quantile(pts))
        dv = np.abs(vals[:, None] - vals[None, :])
        dq = np.abs(pts[:, None] - pts[None, :])
        bound = dq**exponent + gaps.delta + tolerance
        i_idx, j_idx = np.nonzero(np.triu(dv > bound, k=1))
        if i_idx.size:
            part = np.empty(i_idx.size, dtype=_VIOLATION_DTYPE)
            part["cell"] = cell_idx
            part["q"] = pts[i_idx]
            part["q_tilde"] = pts[j_idx]
            part["gap"] = dv[i_idx, j_idx]
            part["bound"] = bound[i_idx, j_idx]
            density_parts.append(part)
    density = (
        np.concatenate(density_parts)
        if density_parts
        else np.empty(0, dtype=_VIOLATION_DTYPE)
    )
    return ClusterReport(density, size_violations, tolerance)


# ---------------------------------------------------------------------------
# CLI selector grammar
# ---------------------------------------------------------------------------

_INTERVAL_RE = re.compile(r"\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)")

_VALID_KINDS = ("uniform", "fbeta", "discrete", "pwuniform")


def _parse_fields(body: str, spec: str) -> dict[str, str]:
    fields = {}
    for part in body.split(";"):
        if "=" not in part:
            raise ConfigurationError(f"bad distribution field {part!r} in {spec!r}")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    return fields


def _floats(csv: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in csv.split(",") if tok.strip() != "")


def parse_model(spec: str) -> QuantileModel:
    """Parse a distribution selector.

    Grammar: ``uniform`` | ``fbeta:beta=<r>`` |
    ``discrete:support=a1,..,am;mass=f1,..,fm`` |
    ``pwuniform:intervals=(l1,r1),..;weights=w1,..`` -- semicolon-separated
    key=value fields, comma-separated decimal lists.
    """
    spec = spec.strip()
    name, _, body = spec.partition(":")
    name = name.strip().lower()
    if name == "uniform":
        if body:
            raise ConfigurationError("uniform takes no fields")
        return Uniform()
    if name == "fbeta":
        fields = _parse_fields(body, spec)
        unknown = set(fields) - {"beta"}
        if unknown or "beta" not in fields:
            raise ConfigurationError(f"fbeta needs exactly the field beta=<r>, got {spec!r}")
        return FBeta(beta=float(fields["beta"]))
    if name == "discrete":
        fields = _parse_fields(body, spec)
        unknown = set(fields) - {"support", "mass"}
        if unknown or not {"support", "mass"} <= set(fields):
            raise ConfigurationError(
                f"discrete needs support=...;mass=..., got {spec!r}"
            )
        return Discrete(_floats(fields["support"]), _floats(fields["mass"]))
    if name == "pwuniform":
        fields = _parse_fields(body, spec)
        unknown = set(fields) - {"intervals", "weights"}
        if unknown or not {"intervals", "weights"} <= set(fields):
            raise ConfigurationError(
                f"pwuniform needs intervals=...;weights=..., got {spec!r}"
            )
        pairs = _INTERVAL_RE.findall(fields["intervals"])
        if not pairs:
            raise ConfigurationError(f"could not parse intervals in {spec!r}")
        intervals = tuple((float(a), float(b)) for a, b in pairs)
        return PiecewiseUniform(intervals, _floats(fields["weights"]))
    raise ConfigurationError(
        f"unknown distribution {name!r}; valid kinds: {', '.join(_VALID_KINDS)}"
    )
