"""Simulation designs with analytic GPN truth, and the table harness.

Three outcome designs share one covariate law and one treatment model:

  monotonic  mu1 = mu0 + X0^2, one shared N(0, 1) error (so Y(1) >= Y(0))
  linear     linear means, errors joined by a copula (Gaussian rho = 0.5 by default)
  nonlinear  quadratic/interaction means, same error law as linear

Every generated unit carries its true conditional GPN, computed from the
analytic marginals and the error copula, so bound quality can be scored
without Monte Carlo noise.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, ndtr

from ._rng import child_int_seed, make_rng, seed_sequence
from .bounds import (
    DENOMINATOR_GUARD,
    BoundInterval,
    Diagnostics,
    MarginalPoint,
    Thresholds,
    aggregate,
    copula_gpn,
    copula_gpn_bounds,
    fh_bounds,
    guard_marginals,
    mono_bounds,
)
from .copula import CopulaFamily, CopulaSpec, copula_cdf, sample_copula_pair, tau_to_param
from .errors import DomainError
from .marginals import (
    Dataset,
    FittedMarginals,
    RegressorSpec,
    estimate_marginals,
    oracle_surface,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = Thresholds(10.0, 12.0)
TABLE1_METHODS = ("FH", "Mono", "Conservative", "Expert")
TABLE1_HEADER = ("method", "case", "mse_lb", "mse_ub", "width")
TABLE2_HEADER = (
    "family", "tau", "rho", "true_mean_gpn",
    "fh_lb", "fh_ub", "fh_width",
    "cons_lb", "cons_ub", "cons_width",
    "expert_lb", "expert_ub", "expert_width",
)
TABLE2_FAMILIES = ("gaussian", "clayton", "gumbel")
TABLE2_TAUS = (0.20, 0.33, 0.50)


@dataclass(frozen=True)
class CovariateModel:
    mean: tuple = (0.5, -0.5, 0.0)
    cov: tuple = ((1.0, 0.3, 0.1), (0.3, 1.0, 0.2), (0.1, 0.2, 1.0))

    def __post_init__(self):
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (len(self.mean),) * 2 or not np.allclose(c, c.T):
            raise DomainError("covariance must be square, symmetric and match the mean")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise DomainError("covariance must be positive definite")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        chol = np.linalg.cholesky(np.asarray(self.cov, dtype=float))
        return np.asarray(self.mean) + rng.standard_normal((n, len(self.mean))) @ chol.T


def treatment_probability(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return expit(-1.5 + 0.5 * np.exp(x[:, 0]) - 0.8 * x[:, 1] + 0.4 * x[:, 2])


class Design(str, enum.Enum):
    MONOTONIC = "a"
    LINEAR = "b"
    NONLINEAR = "c"


def _mu_linear0(x):
    return 10.0 + 2.0 * x[:, 0] + x[:, 1] - 0.5 * x[:, 2]


_MEANS = {
    Design.MONOTONIC: (_mu_linear0, lambda x: _mu_linear0(x) + x[:, 0] ** 2),
    Design.LINEAR: (
        _mu_linear0,
        lambda x: 12.0 + 1.5 * x[:, 0] + 1.2 * x[:, 1] + 1.5 * x[:, 2],
    ),
    Design.NONLINEAR: (
        lambda x: 10.0 + 0.5 * x[:, 0] ** 2 + x[:, 1] ** 2 + x[:, 0] * x[:, 2] - 2.0 * x[:, 1] * x[:, 2],
        lambda x: 13.0 + 0.5 * x[:, 0] ** 2 + 2.5 * x[:, 1] ** 2 + 1.5 * x[:, 0] * x[:, 2]
        + 4.0 * x[:, 1] * x[:, 2],
    ),
}


@dataclass(frozen=True)
class DgpCase:
    """An outcome design plus the copula joining (eps0, eps1).

    ``expert`` is the Gaussian-rho range used by the Expert method.
    """

    design: Design
    family: CopulaFamily = CopulaFamily.GAUSSIAN
    param: float | None = 0.5
    expert: tuple = (0.2, 0.7)
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        fam = CopulaFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        fam.check_param(self.param)
        if self.design is Design.MONOTONIC and fam is not CopulaFamily.COMONOTONE:
            raise DomainError("the monotonic design uses a shared error (comonotone copula)")

    @classmethod
    def monotonic(cls) -> "DgpCase":
        return cls(Design.MONOTONIC, CopulaFamily.COMONOTONE, None, expert=(0.5, 1.0))

    @classmethod
    def linear(cls, rho: float = 0.5) -> "DgpCase":
        return cls(Design.LINEAR, CopulaFamily.GAUSSIAN, rho)

    @classmethod
    def nonlinear(cls, rho: float = 0.5) -> "DgpCase":
        return cls(Design.NONLINEAR, CopulaFamily.GAUSSIAN, rho)

    @classmethod
    def misspecified(cls, family, tau: float, expert_halfwidth: float = 0.1) -> "DgpCase":
        """Linear means with errors from ``family`` at Kendall ``tau``.

        The Expert range is ``+- expert_halfwidth`` around the Gaussian rho
        that matches ``tau``, clipped to [-1, 1].
        """
        fam = CopulaFamily.parse(family)
        rho = tau_to_param(CopulaFamily.GAUSSIAN, tau)
        expert = (max(-1.0, rho - expert_halfwidth), min(1.0, rho + expert_halfwidth))
        return cls(Design.LINEAR, fam, tau_to_param(fam, tau), expert=expert, tau=tau)

    @classmethod
    def parse(cls, tag) -> "DgpCase":
        if isinstance(tag, DgpCase):
            return tag
        key = str(tag).strip().lower()
        named = {"a": cls.monotonic, "monotonic": cls.monotonic,
                 "b": cls.linear, "linear": cls.linear,
                 "c": cls.nonlinear, "nonlinear": cls.nonlinear}
        if key not in named:
            raise DomainError(f"unknown case {tag!r}; expected a/b/c")
        return named[key]()

    @property
    def label(self) -> str:
        return self.design.value

    def mu0(self, x) -> np.ndarray:
        return _MEANS[self.design][0](np.atleast_2d(x))

    def mu1(self, x) -> np.ndarray:
        return _MEANS[self.design][1](np.atleast_2d(x))


@dataclass(frozen=True)
class HiddenTruth:
    """Evaluation-only quantities; bound estimation never sees these."""

    y0: np.ndarray
    y1: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    propensity: np.ndarray


def generate(case, n: int, seed, covariates: CovariateModel | None = None):
    """Draw ``n`` units; returns ``(Dataset, HiddenTruth)``."""
    case = DgpCase.parse(case)
    if int(n) < 1:
        raise DomainError("n must be at least 1")
    n = int(n)
    covariates = covariates or CovariateModel()
    rng = make_rng(seed)
    x = covariates.sample(rng, n)
    e = treatment_probability(x)
    z = (rng.uniform(size=n) < e).astype(np.int8)
    eps = sample_copula_pair(case.family, case.param, n, rng)
    mu0, mu1 = case.mu0(x), case.mu1(x)
    y0 = mu0 + eps[:, 0]
    y1 = mu1 + eps[:, 1]
    y = np.where(z == 1, y1, y0)
    return Dataset(x, z, y), HiddenTruth(y0, y1, mu0, mu1, e)


def generate_misspecified(family, tau: float, n: int, seed, expert_halfwidth: float = 0.1):
    return generate(DgpCase.misspecified(family, tau, expert_halfwidth), n, seed)


def oracle_marginals(case, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> FittedMarginals:
    """Analytic surfaces u_z(x) = Phi(c - mu_z(x)) (unit-variance errors)."""
    case = DgpCase.parse(case)
    c0, c1 = thresholds.c0, thresholds.c1
    return FittedMarginals(
        u1=oracle_surface(lambda x: ndtr(c1 - case.mu1(x)), arm=1, threshold=c1),
        u0=oracle_surface(lambda x: ndtr(c0 - case.mu0(x)), arm=0, threshold=c0),
        u0_at_c1=oracle_surface(lambda x: ndtr(c1 - case.mu0(x)), arm=0, threshold=c1),
        thresholds=thresholds,
    )


def true_gpn(case, x, thresholds: Thresholds = DEFAULT_THRESHOLDS):
    """Analytic GPN(x) per unit; returns ``(gpn, degenerate)``.

    ``degenerate`` flags units whose u1(x) sits within the denominator
    guard of 1; their u1 is capped exactly as the bound routines cap it, so
    truth and bounds stay comparable.
    """
    case = DgpCase.parse(case)
    m = oracle_marginals(case, thresholds).point(np.atleast_2d(x))
    degenerate = np.asarray(m.u1 > 1.0 - DENOMINATOR_GUARD)
    # the shared-error design joins the outcomes comonotonically:
    # P(Y1 <= c1, Y0 <= c0) = Phi(min(c0, c1 - tau(x)) - mu0(x)) = min(u1, u0)
    gpn = copula_gpn(guard_marginals(m), case.family, case.param)
    return np.atleast_1d(gpn), degenerate


def true_mean_gpn(case, thresholds: Thresholds = DEFAULT_THRESHOLDS, draws: int = 200_000,
                  seed=0, covariates: CovariateModel | None = None) -> float:
    """Population P(Y(0) < c0 | Y(1) >= c1) by Monte Carlo over X.

    The joint rectangle probability is exact given x; only X is simulated.
    """
    case = DgpCase.parse(case)
    covariates = covariates or CovariateModel()
    x = covariates.sample(make_rng(seed, 0x7E), int(draws))
    m = oracle_marginals(case, thresholds).point(x)
    joint = copula_cdf(case.family, case.param, m.u1, m.u0)
    return float(np.sum(m.u0 - joint) / np.sum(1.0 - m.u1))


@dataclass(frozen=True)
class Metrics:
    mse_lb: float
    mse_ub: float
    width: float

    def __post_init__(self):
        if self.mse_lb < 0 or self.mse_ub < 0:
            raise DomainError("MSE values must be nonnegative")


def evaluate(interval: BoundInterval, truth) -> Metrics:
    lo = np.atleast_1d(np.asarray(interval.lower, dtype=float))
    hi = np.atleast_1d(np.asarray(interval.upper, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if lo.shape != truth.shape:
        raise DomainError(f"{lo.size} intervals but {truth.size} truth values")
    return Metrics(
        mse_lb=float(np.mean((lo - truth) ** 2)),
        mse_ub=float(np.mean((hi - truth) ** 2)),
        width=float(np.mean(hi - lo)),
    )


def bounds_for_units(m: MarginalPoint, expert: tuple, diag: Diagnostics | None = None) -> dict:
    """Per-unit intervals for the four compared methods (Gaussian working model)."""
    m = guard_marginals(m, diag)
    return {
        "FH": fh_bounds(m, diag),
        "Mono": mono_bounds(m, diag),
        "Conservative": copula_gpn_bounds(m, CopulaSpec.gaussian(0.0, 1.0), diag),
        "Expert": copula_gpn_bounds(m, CopulaSpec.gaussian(*expert), diag),
    }


def fit_marginals(data: Dataset, case: DgpCase, mode: str, thresholds: Thresholds,
                  spec: RegressorSpec | None, seed) -> FittedMarginals:
    if mode == "oracle":
        return oracle_marginals(case, thresholds)
    if mode != "estimated":
        raise DomainError("mode must be 'oracle' or 'estimated'")
    spec = replace(spec or RegressorSpec(), seed=child_int_seed(seed, 0xF17))
    return estimate_marginals(data, thresholds, nuisance=spec, final=spec)


@dataclass(frozen=True)
class Replicate:
    """Scores for one (case, seed) cell of Table 1."""

    case: str
    metrics: dict
    diagnostics: dict

    def widths(self) -> dict:
        return {k: v.width for k, v in self.metrics.items()}

    def ordered(self) -> bool:
        w = self.widths()
        return w["Expert"] < w["Conservative"] < w["Mono"] < w["FH"]


def table1_replicate(case, n: int, seed, mode: str = "oracle",
                     thresholds: Thresholds = DEFAULT_THRESHOLDS,
                     spec: RegressorSpec | None = None) -> Replicate:
    case = DgpCase.parse(case)
    data, _ = generate(case, n, seed_sequence(seed, 1))
    fitted = fit_marginals(data, case, mode, thresholds, spec, seed_sequence(seed, 2))
    diag = Diagnostics()
    bounds = bounds_for_units(fitted.point(data.x), case.expert, diag)
    truth, _ = true_gpn(case, data.x, thresholds)
    metrics = {name: evaluate(b, truth) for name, b in bounds.items()}
    return Replicate(case.label, metrics, diag.as_dict())


def _pool_map(fn, jobs, threads: int):
    if threads <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass
class Table:
    header: tuple
    rows: list
    replicates: list = field(default_factory=list)

    def as_records(self) -> list:
        return [dict(zip(self.header, row)) for row in self.rows]


def run_table1(cases=("a", "b", "c"), n: int = 4096, seeds: int = 10, seed: int = 0,
               mode: str = "oracle", thresholds: Thresholds = DEFAULT_THRESHOLDS,
               spec: RegressorSpec | None = None, threads: int = 1) -> Table:
    """Average Table-1 metrics over ``seeds`` replicates per case.

    Replicate ``r`` of case index ``k`` draws from the stream keyed
    ``(seed, 1, k, r)``; results do not depend on ``threads``.
    """
    if seeds < 1:
        raise DomainError("need at least one seed")
    cases = [DgpCase.parse(c) for c in cases]
    jobs = [(case, n, seed_sequence(seed, 1, k, r), mode, thresholds, spec)
            for k, case in enumerate(cases) for r in range(seeds)]
    reps = _pool_map(table1_replicate, jobs, threads)
    rows = []
    for method in TABLE1_METHODS:
        for k, case in enumerate(cases):
            cell = [rep.metrics[method] for rep in reps[k * seeds:(k + 1) * seeds]]
            rows.append((
                method, case.label,
                float(np.mean([c.mse_lb for c in cell])),
                float(np.mean([c.mse_ub for c in cell])),
                float(np.mean([c.width for c in cell])),
            ))
    return Table(TABLE1_HEADER, rows, reps)


def table2_cell(family, tau: float, n: int, seed, mode: str = "estimated",
                thresholds: Thresholds = DEFAULT_THRESHOLDS, spec: RegressorSpec | None = None,
                expert_halfwidth: float = 0.1, truth_draws: int = 200_000) -> tuple:
    case = DgpCase.misspecified(family, tau, expert_halfwidth)
    data, _ = generate(case, n, seed_sequence(seed, 1))
    fitted = fit_marginals(data, case, mode, thresholds, spec, seed_sequence(seed, 2))
    bounds = bounds_for_units(fitted.point(data.x), case.expert)
    truth = true_mean_gpn(case, thresholds, truth_draws, seed_sequence(seed, 3))
    avg = {k: aggregate(bounds[k]) for k in ("FH", "Conservative", "Expert")}
    row = [CopulaFamily.parse(family).value, float(tau),
           tau_to_param(CopulaFamily.GAUSSIAN, tau), truth]
    for k in ("FH", "Conservative", "Expert"):
        row += [avg[k].lower, avg[k].upper, avg[k].upper - avg[k].lower]
    return tuple(row)


def run_table2(families=TABLE2_FAMILIES, taus=TABLE2_TAUS, n: int = 4096, seeds: int = 1,
               seed: int = 0, mode: str = "estimated",
               thresholds: Thresholds = DEFAULT_THRESHOLDS, spec: RegressorSpec | None = None,
               expert_halfwidth: float = 0.1, truth_draws: int = 200_000,
               threads: int = 1) -> Table:
    """One row per (family, tau), numeric columns averaged over ``seeds``.

    Cell ``(i, j)`` replicate ``r`` uses the stream keyed ``(seed, 2, i, j, r)``.
    """
    if seeds < 1:
        raise DomainError("need at least one seed")
    jobs = [(fam, tau, n, seed_sequence(seed, 2, i, j, r), mode, thresholds, spec,
             expert_halfwidth, truth_draws)
            for i, fam in enumerate(families) for j, tau in enumerate(taus) for r in range(seeds)]
    cells = _pool_map(table2_cell, jobs, threads)
    rows = []
    for start in range(0, len(cells), seeds):
        block = cells[start:start + seeds]
        numeric = np.mean([c[1:] for c in block], axis=0)
        rows.append((block[0][0], *[float(v) for v in numeric]))
    return Table(TABLE2_HEADER, rows, cells)
