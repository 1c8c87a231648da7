"""Subsampling standard deviations for averaged bounds.

Each replicate draws ``m`` rows without replacement and reruns the full
pipeline.  The reported sd is the raw dispersion of replicate values; set
``rescale=True`` to multiply by sqrt(m / n).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._rng import make_rng
from .errors import DomainError, GPNError, SubsampleAbortError
from .marginals import Dataset

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.2


@dataclass(frozen=True)
class SubsamplePlan:
    b: int = 100
    m: int | None = None
    seed: int = 0
    rescale: bool = False

    def __post_init__(self):
        if self.b < 2:
            raise DomainError("need at least 2 subsamples")

    def size(self, n: int) -> int:
        m = n // 2 if self.m is None else int(self.m)
        if not 1 < m < n:
            raise DomainError(f"subsample size must satisfy 1 < m < n, got m={m}, n={n}")
        return m

    def indices(self, n: int) -> list:
        m = self.size(n)
        rng = make_rng(self.seed, 0x5B)
        return [np.sort(rng.choice(n, size=m, replace=False)) for _ in range(self.b)]


@dataclass
class SubsampleResult:
    sd: dict
    values: dict
    failures: int
    m: int
    errors: list = field(default_factory=list)


def subsample_sd(data: Dataset, estimator: Callable[[Dataset], Mapping[str, float]],
                 plan: SubsamplePlan | None = None, threads: int = 1) -> SubsampleResult:
    """Standard deviation of each named output of ``estimator`` across subsamples.

    ``estimator`` maps a Dataset to a dict of floats and must be deterministic.
    Replicates that raise a library error are excluded and counted; more than
    20% failures aborts.
    """
    plan = plan or SubsamplePlan()
    index_sets = plan.indices(data.n)
    m = len(index_sets[0])

    def run(idx):
        try:
            return dict(estimator(data.subset(idx))), None
        except (GPNError, ArithmeticError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads <= 1:
        outcomes = [run(idx) for idx in index_sets]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, index_sets))

    good = [out for out, err in outcomes if out is not None]
    errors = [err for out, err in outcomes if err is not None]
    if len(errors) > MAX_FAILURE_SHARE * plan.b:
        raise SubsampleAbortError(
            f"{len(errors)} of {plan.b} subsamples failed; first error: {errors[0]}"
        )
    if errors:
        log.warning("%d of %d subsamples failed and were excluded", len(errors), plan.b)
    keys = list(good[0])
    values = {k: np.array([g[k] for g in good], dtype=float) for k in keys}
    factor = math.sqrt(m / data.n) if plan.rescale else 1.0
    sd = {}
    for k, v in values.items():
        # exact zero when every replicate agrees
        sd[k] = 0.0 if np.all(v == v[0]) else float(np.std(v, ddof=1)) * factor
    return SubsampleResult(sd=sd, values=values, failures=len(errors), m=m, errors=errors)
