"""Bivariate copula families, parameter extremes and Kendall-tau conversion.

Every family implemented here is positively ordered in its parameter, i.e.
``C_theta(u, v)`` is nondecreasing in ``theta`` for fixed ``(u, v)``.  That is
what lets :func:`copula_extremes` read the minimum and maximum of a copula over
a parameter interval off its two endpoints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._rng import make_rng
from .errors import DomainError, UnsupportedOperationError
from .normal import bvn_cdf

__all__ = [
    "CopulaFamily",
    "DependenceRange",
    "CopulaSpec",
    "copula_cdf",
    "copula_extremes",
    "tau_to_param",
    "param_to_tau",
    "sample_copula_pair",
]


class CopulaFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    INDEPENDENCE = "independence"
    COMONOTONE = "comonotone"
    COUNTERMONOTONE = "countermonotone"

    @classmethod
    def parse(cls, value: "str | CopulaFamily") -> "CopulaFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise DomainError(f"unknown copula family {value!r}; expected one of {names}") from None

    @property
    def has_parameter(self) -> bool:
        return self in (CopulaFamily.GAUSSIAN, CopulaFamily.CLAYTON, CopulaFamily.GUMBEL)

    def check_param(self, param: float | None) -> None:
        """Raise :class:`DomainError` unless ``param`` is valid for this family.

        Clayton accepts ``theta = 0`` as its independence limit.
        """
        if not self.has_parameter:
            return
        if param is None or isinstance(param, bool):
            raise DomainError(f"{self.value} copula requires a parameter")
        p = float(param)
        if math.isnan(p):
            raise DomainError("copula parameter is NaN")
        if self is CopulaFamily.GAUSSIAN and not -1.0 <= p <= 1.0:
            raise DomainError(f"Gaussian correlation {p} outside [-1, 1]")
        if self is CopulaFamily.CLAYTON and not (0.0 <= p < math.inf):
            raise DomainError(f"Clayton theta {p} outside [0, inf)")
        if self is CopulaFamily.GUMBEL and not (1.0 <= p < math.inf):
            raise DomainError(f"Gumbel theta {p} outside [1, inf)")


@dataclass(frozen=True)
class DependenceRange:
    rho_min: float
    rho_max: float

    def __post_init__(self):
        if math.isnan(self.rho_min) or math.isnan(self.rho_max):
            raise DomainError("dependence range contains NaN")
        if self.rho_min > self.rho_max:
            raise DomainError(f"rho_min {self.rho_min} exceeds rho_max {self.rho_max}")

    def contains(self, rho: float) -> bool:
        return self.rho_min <= rho <= self.rho_max


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family together with an admissible parameter range."""

    family: CopulaFamily
    range: DependenceRange

    def __post_init__(self):
        fam = CopulaFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        fam.check_param(self.range.rho_min)
        fam.check_param(self.range.rho_max)

    @classmethod
    def gaussian(cls, lo: float, hi: float) -> "CopulaSpec":
        return cls(CopulaFamily.GAUSSIAN, DependenceRange(lo, hi))


def _check_unit(u, name):
    arr = np.asarray(u, dtype=float)
    if np.isnan(arr).any() or np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _clayton(u, v, theta):
    if theta == 0.0:
        return u * v
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lu, lv = np.log(u), np.log(v)
        # u^-t - 1 via expm1 keeps small theta accurate
        s = np.expm1(-theta * lu) + np.expm1(-theta * lv)
        out = np.exp(-np.log1p(s) / theta)
    return np.where((u == 0.0) | (v == 0.0), 0.0, out)


def _gumbel(u, v, theta):
    if theta == 1.0:
        return u * v
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = (-np.log(u)) ** theta + (-np.log(v)) ** theta
        out = np.exp(-(a ** (1.0 / theta)))
    return np.where((u == 0.0) | (v == 0.0), 0.0, out)


def copula_cdf(family, param, u, v):
    """Evaluate ``C_param(u, v)`` for the given family.

    Parameterless families (independence and the two Fréchet-Hoeffding
    extremes) ignore ``param``.  Inputs broadcast; scalar inputs give a float.
    """
    fam = CopulaFamily.parse(family)
    fam.check_param(param)
    u = _check_unit(u, "u")
    v = _check_unit(v, "v")
    u, v = np.broadcast_arrays(u, v)

    if fam is CopulaFamily.INDEPENDENCE:
        out = u * v
    elif fam is CopulaFamily.COMONOTONE:
        out = np.minimum(u, v)
    elif fam is CopulaFamily.COUNTERMONOTONE:
        out = np.maximum(u + v - 1.0, 0.0)
    elif fam is CopulaFamily.GAUSSIAN:
        with np.errstate(divide="ignore"):
            out = np.asarray(bvn_cdf(ndtri(u), ndtri(v), float(param)))
    elif fam is CopulaFamily.CLAYTON:
        out = _clayton(u, v, float(param))
    else:
        out = _gumbel(u, v, float(param))

    # numerical safety: stay inside the Fréchet-Hoeffding envelope
    out = np.clip(out, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
    return float(out) if out.ndim == 0 else out


def copula_extremes(family, rng: DependenceRange, u, v):
    """Minimum and maximum of ``C_rho(u, v)`` over ``rho`` in ``rng``.

    Returns ``(C_min, C_max)``, attained at ``rho_min`` and ``rho_max``
    respectively because each family is ordered in its parameter.
    """
    fam = CopulaFamily.parse(family)
    if not isinstance(rng, DependenceRange):
        raise DomainError("expected a DependenceRange")
    fam.check_param(rng.rho_min)
    fam.check_param(rng.rho_max)
    c_min = copula_cdf(fam, rng.rho_min, u, v)
    if rng.rho_max == rng.rho_min or not fam.has_parameter:
        return c_min, c_min
    return c_min, copula_cdf(fam, rng.rho_max, u, v)


def tau_to_param(family, tau: float) -> float:
    """Map Kendall's tau to the family parameter.

    Gaussian ``sin(pi tau / 2)``; Clayton ``2 tau / (1 - tau)``; Gumbel
    ``1 / (1 - tau)``.  Clayton and Gumbel only reach ``tau`` in [0, 1).
    """
    fam = CopulaFamily.parse(family)
    tau = float(tau)
    if math.isnan(tau) or not -1.0 < tau < 1.0:
        raise DomainError(f"Kendall tau must lie in (-1, 1), got {tau}")
    if fam is CopulaFamily.GAUSSIAN:
        return math.sin(math.pi * tau / 2.0)
    if fam in (CopulaFamily.CLAYTON, CopulaFamily.GUMBEL):
        if tau < 0.0:
            raise DomainError(f"{fam.value} copula cannot represent negative tau")
        return 2.0 * tau / (1.0 - tau) if fam is CopulaFamily.CLAYTON else 1.0 / (1.0 - tau)
    raise UnsupportedOperationError(f"{fam.value} copula has no free parameter")


def param_to_tau(family, param: float) -> float:
    fam = CopulaFamily.parse(family)
    fam.check_param(param)
    if fam is CopulaFamily.GAUSSIAN:
        return 2.0 * math.asin(param) / math.pi
    if fam is CopulaFamily.CLAYTON:
        return param / (param + 2.0)
    if fam is CopulaFamily.GUMBEL:
        return 1.0 - 1.0 / param
    return {CopulaFamily.INDEPENDENCE: 0.0, CopulaFamily.COMONOTONE: 1.0,
            CopulaFamily.COUNTERMONOTONE: -1.0}[fam]


def _positive_stable(rng: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    """Kanter's representation of S with E[exp(-s S)] = exp(-s**alpha)."""
    w = rng.uniform(0.0, math.pi, n)
    e = rng.standard_exponential(n)
    left = np.sin(alpha * w) / np.sin(w) ** (1.0 / alpha)
    right = (np.sin((1.0 - alpha) * w) / e) ** ((1.0 - alpha) / alpha)
    return left * right


def _uniform_pairs(fam: CopulaFamily, param, n: int, rng: np.random.Generator) -> np.ndarray:
    if fam is CopulaFamily.INDEPENDENCE or (
        fam is CopulaFamily.CLAYTON and param == 0.0
    ) or (fam is CopulaFamily.GUMBEL and param == 1.0):
        return rng.uniform(size=(n, 2))
    if fam is CopulaFamily.COMONOTONE:
        u = rng.uniform(size=n)
        return np.column_stack([u, u])
    if fam is CopulaFamily.COUNTERMONOTONE:
        u = rng.uniform(size=n)
        return np.column_stack([u, 1.0 - u])
    # Marshall-Olkin frailty construction: U_i = psi(E_i / V)
    e = rng.standard_exponential((n, 2))
    if fam is CopulaFamily.CLAYTON:
        v = rng.gamma(1.0 / param, 1.0, n)
        return (1.0 + e / v[:, None]) ** (-1.0 / param)
    if fam is CopulaFamily.GUMBEL:
        alpha = 1.0 / param
        v = _positive_stable(rng, alpha, n)
        return np.exp(-((e / v[:, None]) ** alpha))
    raise UnsupportedOperationError(f"sampling is not implemented for {fam.value}")


def sample_copula_pair(family, param, n: int, seed) -> np.ndarray:
    """Draw ``n`` pairs ``(eps0, eps1)`` with standard normal margins.

    The pair's copula is ``family`` at ``param``.  Pairs are sampled on the
    unit square and mapped through the normal quantile, except for the
    Gaussian family, which draws correlated normals directly (same law).
    Output has shape ``(n, 2)`` and is reproducible for a given seed.
    """
    fam = CopulaFamily.parse(family)
    fam.check_param(param)
    if int(n) < 1:
        raise DomainError("n must be at least 1")
    n = int(n)
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed

    if fam is CopulaFamily.GAUSSIAN:
        r = float(param)
        z = rng.standard_normal((n, 2))
        return np.column_stack([z[:, 0], r * z[:, 0] + math.sqrt(max(0.0, 1.0 - r * r)) * z[:, 1]])

    u = _uniform_pairs(fam, None if param is None else float(param), n, rng)
    tiny = np.finfo(float).tiny
    u = np.clip(u, tiny, np.nextafter(1.0, 0.0))
    return ndtri(u)
