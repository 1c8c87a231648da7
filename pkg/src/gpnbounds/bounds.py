"""Bounds on the general probability of necessity (GPN).

GPN(x) = P(Y(0) < c0 | X = x, Z = 1, Y >= c1).  With
``u1 = P(Y(1) <= c1 | x)`` and ``u0 = P(Y(0) <= c0 | x)`` it equals
``(u0 - C(u1, u0)) / (1 - u1)`` for the (unidentified) copula ``C`` of the
potential outcomes, so every bound below is a statement about ``C``.

All bound functions accept scalars or equally-shaped arrays of marginals and
return a :class:`BoundInterval` of the same shape.  Small numerical
inconsistencies are clamped and counted in an optional :class:`Diagnostics`
collector instead of raising.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .copula import CopulaFamily, CopulaSpec, DependenceRange, copula_cdf, copula_extremes
from .errors import (
    DegenerateDenominatorError,
    DegenerateIntervalError,
    DomainError,
    EmptyInputError,
    InconsistentCurveError,
    MissingInputError,
)

log = logging.getLogger(__name__)

__all__ = [
    "DENOMINATOR_GUARD",
    "Thresholds",
    "MarginalPoint",
    "BoundInterval",
    "IntervalWeights",
    "SensitivityCurve",
    "Diagnostics",
    "guard_marginals",
    "fh_bounds",
    "mono_bounds",
    "point_identify_mono",
    "copula_gpn",
    "copula_gpn_bounds",
    "interval_weights",
    "interval_gpn",
    "aggregate",
    "default_rho_grid",
    "sensitivity_curve",
    "find_rho_crossing",
]

# u1 is capped at 1 - DENOMINATOR_GUARD before dividing by 1 - u1
DENOMINATOR_GUARD = 1e-6
_TOL = 1e-12

METHODS = ("FH", "Mono", "Copula", "Point")


@dataclass
class Diagnostics:
    """Counters for clamps and assumption violations seen while bounding."""

    denominator_clamps: int = 0
    bound_clamps: int = 0
    monotonicity_violations: int = 0
    threshold_order_violations: int = 0
    point_clamps: int = 0
    interval_clamps: int = 0

    def merge(self, other: "Diagnostics") -> "Diagnostics":
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class Thresholds:
    c0: float
    c1: float

    def __post_init__(self):
        if math.isnan(self.c0) or math.isnan(self.c1):
            raise DomainError("thresholds must not be NaN")
        if self.c1 < self.c0:
            raise DomainError(f"require c1 >= c0, got c0={self.c0}, c1={self.c1}")

    @property
    def equal(self) -> bool:
        return self.c0 == self.c1


def _prob_array(value, name):
    arr = np.asarray(value, dtype=float)
    if np.isnan(arr).any() or np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class MarginalPoint:
    """Identified marginal probabilities at one unit (or a vector of units).

    u1        P(Y(1) <= c1 | x)
    u0        P(Y(0) <= c0 | x)
    u0_at_c1  P(Y(0) <= c1 | x), needed only for the monotonicity bound
    """

    u1: np.ndarray | float
    u0: np.ndarray | float
    u0_at_c1: np.ndarray | float | None = None

    def __post_init__(self):
        u1 = _prob_array(self.u1, "u1")
        u0 = _prob_array(self.u0, "u0")
        try:
            u1, u0 = np.broadcast_arrays(u1, u0)
        except ValueError as exc:
            raise DomainError("u1 and u0 have incompatible shapes") from exc
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u0", u0)
        if self.u0_at_c1 is not None:
            uc = np.broadcast_to(_prob_array(self.u0_at_c1, "u0_at_c1"), u1.shape)
            object.__setattr__(self, "u0_at_c1", uc)

    @property
    def shape(self):
        return self.u1.shape

    def __len__(self):
        return int(self.u1.size)

    def take(self, idx) -> "MarginalPoint":
        uc = None if self.u0_at_c1 is None else np.asarray(self.u0_at_c1)[idx]
        return MarginalPoint(self.u1[idx], self.u0[idx], uc)


@dataclass(frozen=True)
class BoundInterval:
    """Lower and upper GPN bounds (scalars or per-unit arrays)."""

    lower: np.ndarray | float
    upper: np.ndarray | float
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method tag {self.method!r}")
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise DomainError("lower and upper have different shapes")
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise DomainError("bounds contain NaN")
        if np.any(lo < -_TOL) or np.any(hi > 1 + _TOL) or np.any(lo > hi + _TOL):
            raise DomainError("bounds must satisfy 0 <= lower <= upper <= 1")
        object.__setattr__(self, "lower", float(lo) if lo.ndim == 0 else lo)
        object.__setattr__(self, "upper", float(hi) if hi.ndim == 0 else hi)

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value, tol: float = 1e-9):
        value = np.asarray(value, dtype=float)
        return (value >= self.lower - tol) & (value <= self.upper + tol)

    def __iter__(self):
        yield self.lower
        yield self.upper


@dataclass(frozen=True)
class IntervalWeights:
    w1: float
    w2: float


@dataclass(frozen=True)
class SensitivityCurve:
    rho: np.ndarray
    gpn: np.ndarray
    family: CopulaFamily = CopulaFamily.GAUSSIAN

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        gpn = np.asarray(self.gpn, dtype=float)
        if rho.ndim != 1 or rho.shape != gpn.shape or rho.size == 0:
            raise DomainError("curve needs matching non-empty 1-d rho and gpn arrays")
        if np.any(np.diff(rho) <= 0):
            raise DomainError("rho grid must be strictly increasing")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gpn", gpn)

    def points(self):
        return list(zip(self.rho.tolist(), self.gpn.tolist()))


def _clamp_count(values, lo, hi, diag: Diagnostics | None, attr: str, tol: float = 0.0):
    values = np.asarray(values, dtype=float)
    clipped = np.clip(values, lo, hi)
    if diag is not None:
        moved = np.abs(clipped - values) > tol
        setattr(diag, attr, getattr(diag, attr) + int(np.count_nonzero(moved)))
    return clipped


def _denominator(u1, diag: Diagnostics | None):
    """1 - u1 with the guard applied; exact u1 == 1 is an error."""
    u1 = np.asarray(u1, dtype=float)
    if np.any(u1 >= 1.0):
        raise DegenerateDenominatorError(
            "u1 = 1: no treated outcome exceeds c1, the GPN is undefined "
            "(use guard_marginals to cap estimated surfaces)"
        )
    capped = _clamp_count(u1, 0.0, 1.0 - DENOMINATOR_GUARD, diag, "denominator_clamps")
    return capped, 1.0 - capped


def guard_marginals(m: MarginalPoint, diag: Diagnostics | None = None) -> MarginalPoint:
    """Cap ``u1`` at ``1 - DENOMINATOR_GUARD`` (counting every capped unit).

    Pipelines call this on estimated or analytic surfaces before bounding so
    that units with ``u1`` numerically equal to 1 stay usable.
    """
    u1 = _clamp_count(m.u1, 0.0, 1.0 - DENOMINATOR_GUARD, diag, "denominator_clamps")
    return MarginalPoint(u1, m.u0, m.u0_at_c1)


def _finish(lower, upper, method, diag):
    lower = _clamp_count(lower, 0.0, 1.0, diag, "bound_clamps", tol=_TOL)
    upper = _clamp_count(upper, 0.0, 1.0, diag, "bound_clamps", tol=_TOL)
    crossed = lower > upper
    if diag is not None:
        diag.bound_clamps += int(np.count_nonzero(lower - upper > _TOL))
    upper = np.where(crossed, lower, upper)
    return BoundInterval(lower, upper, method)


def _fh_arrays(m: MarginalPoint, diag):
    u1, denom = _denominator(m.u1, diag)
    u0 = m.u0
    lower = np.maximum(0.0, (u0 - u1) / denom)
    upper = np.minimum(1.0, u0 / denom)
    return u1, denom, lower, upper


def fh_bounds(m: MarginalPoint, diag: Diagnostics | None = None) -> BoundInterval:
    """Fréchet-Hoeffding bounds under ignorability alone.

    ``lower = max(0, (u0 - u1) / (1 - u1))`` and ``upper = min(1, u0 / (1 - u1))``.
    """
    _, _, lower, upper = _fh_arrays(m, diag)
    return _finish(lower, upper, "FH", diag)


def mono_bounds(m: MarginalPoint, diag: Diagnostics | None = None) -> BoundInterval:
    """Bounds under ignorability plus monotonicity ``Y(1) >= Y(0)``.

    The lower bound is the FH lower bound.  The upper bound is
    ``min(U_FH, (u0_at_c1 - u1) / (1 - u1))``; the second term is
    ``1 - P(Y(0) >= c1) / P(Y(1) >= c1)``.  When ``u0_at_c1 < u1`` the data
    contradict monotonicity: the violation is counted and the upper bound falls
    back to the lower bound.
    """
    if m.u0_at_c1 is None:
        raise MissingInputError("monotonicity bound needs u0_at_c1 = P(Y(0) <= c1 | x)")
    u1, denom, lower, upper_fh = _fh_arrays(m, diag)
    uc = np.asarray(m.u0_at_c1, dtype=float)
    if diag is not None:
        diag.threshold_order_violations += int(np.count_nonzero(uc < m.u0 - _TOL))
        violated = int(np.count_nonzero(uc < u1 - _TOL))
        diag.monotonicity_violations += violated
        if violated:
            log.debug("monotonicity violated at %d unit(s)", violated)
    correction = (uc - u1) / denom
    upper = np.maximum(np.minimum(upper_fh, correction), lower)
    return _finish(lower, upper, "Mono", diag)


def point_identify_mono(u1_at_c, u0_at_c, diag: Diagnostics | None = None):
    """GPN when ``c0 == c1 == c`` under monotonicity.

    Returns ``1 - (1 - u0_at_c) / (1 - u1_at_c)`` clamped to [0, 1].
    """
    u1 = _prob_array(u1_at_c, "u1_at_c")
    u0 = _prob_array(u0_at_c, "u0_at_c")
    _, denom = _denominator(u1, diag)
    raw = 1.0 - (1.0 - u0) / denom
    if diag is not None:
        diag.monotonicity_violations += int(np.count_nonzero(u0 < u1 - _TOL))
    out = _clamp_count(raw, 0.0, 1.0, diag, "point_clamps", tol=_TOL)
    return float(out) if out.ndim == 0 else out


def copula_gpn(m: MarginalPoint, family, rho, diag: Diagnostics | None = None):
    """GPN(x; rho) = (u0 - C_rho(u1, u0)) / (1 - u1) for a given copula."""
    u1, denom = _denominator(m.u1, diag)
    c = copula_cdf(family, rho, u1, m.u0)
    out = _clamp_count((m.u0 - c) / denom, 0.0, 1.0, diag, "bound_clamps", tol=_TOL)
    return float(out) if out.ndim == 0 else out


def copula_gpn_bounds(m: MarginalPoint, spec: CopulaSpec, diag: Diagnostics | None = None) -> BoundInterval:
    """Sharp bounds when the copula parameter is restricted to ``spec.range``.

    The largest copula value gives the lower bound and the smallest gives the
    upper bound.  A Gaussian range of [-1, 1] reproduces :func:`fh_bounds`.
    """
    u1, denom = _denominator(m.u1, diag)
    c_min, c_max = copula_extremes(spec.family, spec.range, u1, m.u0)
    lower = (m.u0 - c_max) / denom
    upper = (m.u0 - c_min) / denom
    return _finish(lower, upper, "Copula", diag)


def interval_weights(surv_lo: float, surv_hi: float) -> IntervalWeights:
    """Weights for the interval GPN from P(Y(1) >= lower c1) and P(Y(1) >= upper c1).

    ``w1 = s_lo / (s_lo - s_hi)``, ``w2 = s_hi / (s_lo - s_hi)``; ``w1 - w2 = 1``.
    """
    s_lo = float(surv_lo)
    s_hi = float(surv_hi)
    for s in (s_lo, s_hi):
        if math.isnan(s) or not 0.0 <= s <= 1.0:
            raise DomainError("survival probabilities must lie in [0, 1]")
    if not s_lo > s_hi:
        raise DegenerateIntervalError(
            "need P(Y(1) >= lower c1) > P(Y(1) >= upper c1) for a non-empty interval"
        )
    gap = s_lo - s_hi
    w2 = s_hi / gap
    # w1 is set from w2 so that w1 - w2 == 1 holds in floating point as well
    return IntervalWeights(w1=1.0 + w2, w2=w2)


def interval_gpn(gpn_matrix, survival: Sequence[float], diag: Diagnostics | None = None) -> float:
    """GPN for interval events via a linear combination of threshold GPNs.

    Parameters
    ----------
    gpn_matrix : 2x2 array_like
        ``gpn_matrix[i][j] = GPN(c0_i, c1_j)`` where index 0 is the lower and
        index 1 the upper end of each interval.  Use 0 for ``c0 = -inf``.
    survival : pair of floats
        ``(P(Y(1) >= lower c1 | Z=1), P(Y(1) >= upper c1 | Z=1))``.

    Returns
    -------
    float
        ``P(lo0 <= Y(0) < hi0 | Z = 1, lo1 <= Y(1) < hi1)``, clamped to [0, 1].
    """
    g = np.asarray(gpn_matrix, dtype=float)
    if g.shape != (2, 2):
        raise DomainError("gpn_matrix must be 2x2 (c0 end x c1 end)")
    if len(survival) != 2:
        raise DomainError("survival must hold two probabilities")
    w = interval_weights(*survival)
    used = g if w.w2 != 0.0 else g[:, 0]
    if np.isnan(used).any():
        raise DomainError("gpn_matrix contains NaN")
    # when the upper c1 is +inf, w2 = 0 and the second bracket drops out
    value = w.w1 * (g[1, 0] - g[0, 0])
    if w.w2 != 0.0:
        value -= w.w2 * (g[1, 1] - g[0, 1])
    return float(_clamp_count(value, 0.0, 1.0, diag, "interval_clamps", tol=1e-12))


def aggregate(per_unit, weights=None) -> BoundInterval:
    """Average per-unit bounds into one interval.

    ``per_unit`` is either one array-valued :class:`BoundInterval` or a
    sequence of scalar ones sharing a method tag.  Optional nonnegative
    ``weights`` give a weighted mean instead of the plain mean.
    """
    if isinstance(per_unit, BoundInterval):
        method = per_unit.method
        lower = np.atleast_1d(np.asarray(per_unit.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(per_unit.upper, dtype=float))
    else:
        items = list(per_unit)
        if not items:
            raise EmptyInputError("cannot aggregate an empty list of intervals")
        methods = {b.method for b in items}
        if len(methods) != 1:
            raise DomainError(f"mixed method tags {sorted(methods)}")
        method = methods.pop()
        lower = np.concatenate([np.atleast_1d(b.lower) for b in items]).astype(float)
        upper = np.concatenate([np.atleast_1d(b.upper) for b in items]).astype(float)
    if lower.size == 0:
        raise EmptyInputError("cannot aggregate an empty interval array")
    if weights is None:
        return BoundInterval(float(np.mean(lower)), float(np.mean(upper)), method)
    w = np.asarray(weights, dtype=float)
    if w.shape != lower.shape or np.any(w < 0) or not np.sum(w) > 0:
        raise DomainError("weights must be nonnegative, not all zero, and match the units")
    total = np.sum(w)
    lo = float(np.clip(np.sum(w * lower) / total, 0.0, 1.0))
    hi = float(np.clip(np.sum(w * upper) / total, lo, 1.0))
    return BoundInterval(lo, hi, method)


def default_rho_grid(rng: DependenceRange, points: int = 101) -> np.ndarray:
    if points < 1:
        raise EmptyInputError("grid needs at least one point")
    if rng.rho_min == rng.rho_max or points == 1:
        return np.array([rng.rho_min])
    return np.linspace(rng.rho_min, rng.rho_max, points)


def sensitivity_curve(
    m: MarginalPoint,
    family=CopulaFamily.GAUSSIAN,
    rho_grid: Iterable[float] | None = None,
    weighting: str = "unit",
    diag: Diagnostics | None = None,
) -> SensitivityCurve:
    """Average GPN(x; rho) over units at each grid value of the parameter.

    ``weighting="unit"`` is the plain mean over units.  ``"population"`` weights
    unit i by ``1 - u1_i``, which turns the average into the marginal
    P(Y(0) < c0 | Y(1) >= c1) implied by the copula.
    """
    fam = CopulaFamily.parse(family)
    grid = np.asarray(list(rho_grid) if rho_grid is not None else [], dtype=float)
    if grid.size == 0:
        raise EmptyInputError("sensitivity grid is empty")
    if weighting not in ("unit", "population"):
        raise DomainError("weighting must be 'unit' or 'population'")
    u1, denom = _denominator(m.u1, diag)
    u0 = np.atleast_1d(m.u0)
    u1 = np.atleast_1d(u1)
    denom = np.atleast_1d(denom)
    values = np.empty(grid.size)
    for i, rho in enumerate(grid):
        c = np.atleast_1d(copula_cdf(fam, float(rho), u1, u0))
        g = np.clip((u0 - c) / denom, 0.0, 1.0)
        if weighting == "unit":
            values[i] = np.mean(g)
        else:
            values[i] = np.sum(g * denom) / np.sum(denom)
    return SensitivityCurve(grid, values, fam)


def find_rho_crossing(curve: SensitivityCurve, level: float, tol: float = 1e-10):
    """Parameter value where a nonincreasing curve meets ``level``.

    Linear interpolation between the bracketing grid points; ``None`` when the
    curve stays strictly on one side of ``level`` over the grid.
    """
    g = curve.gpn
    if np.any(np.diff(g) > tol):
        raise InconsistentCurveError("sensitivity curve is not nonincreasing in rho")
    level = float(level)
    if g[0] < level - tol:
        return None
    # tol absorbs rounding when the level is itself a curve endpoint
    at_or_below = np.nonzero(g <= level + tol)[0]
    if at_or_below.size == 0:
        return None
    i = int(at_or_below[0])
    if i == 0 or abs(g[i] - level) <= tol:
        return float(curve.rho[i])
    g0, g1 = g[i - 1], g[i]
    r0, r1 = curve.rho[i - 1], curve.rho[i]
    if g0 == g1:
        return float(r1)
    return float(r0 + (g0 - level) * (r1 - r0) / (g0 - g1))
