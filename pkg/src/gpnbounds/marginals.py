"""Doubly-robust estimation of the conditional CDF surfaces u_z(x).

Each surface estimates ``P(Y(z) <= c | X = x)`` in two stages: nuisance fits
(propensity score and a within-arm outcome CDF regression), then a regression
of the doubly-robust pseudo-outcomes on the covariates.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import expit, logit
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.neural_network import MLPClassifier, MLPRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import PolynomialFeatures, StandardScaler

from ._rng import child_int_seed, make_rng
from .bounds import MarginalPoint, Thresholds
from .errors import DataError, DegenerateTreatmentError, DomainError, EmptyInputError, FitError

log = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "RegressorSpec",
    "MarginalSurface",
    "FittedMarginals",
    "fit_propensity",
    "fit_outcome_cdf",
    "dr_pseudo",
    "fit_dr_marginal",
    "oracle_surface",
    "estimate_marginals",
]

KINDS = ("linear-logistic", "polynomial-logistic", "mlp")


@dataclass(frozen=True)
class Dataset:
    """Observed rows (x, z, y): covariates, binary treatment, outcome."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        z = np.asarray(self.z)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or z.ndim != 1 or y.ndim != 1:
            raise DataError("x must be 2-d, z and y 1-d")
        n = x.shape[0]
        if n < 1:
            raise EmptyInputError("dataset has no rows")
        if z.shape[0] != n or y.shape[0] != n:
            raise DataError(f"row counts differ: x {n}, z {z.shape[0]}, y {y.shape[0]}")
        if np.isnan(x).any() or np.isnan(y).any():
            raise DataError("dataset contains NaN")
        zf = z.astype(float)
        if np.isnan(zf).any() or not np.all((zf == 0.0) | (zf == 1.0)):
            raise DataError("z must be 0/1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", zf.astype(np.int8))
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.z[idx], self.y[idx])

    def arm(self, z: int) -> "Dataset":
        return self.subset(self.z == z)

    def require_both_arms(self):
        treated = int(self.z.sum())
        if treated == 0 or treated == self.n:
            raise DegenerateTreatmentError(
                f"need both treatment arms, got {treated} treated of {self.n}"
            )


@dataclass(frozen=True)
class RegressorSpec:
    kind: str = "polynomial-logistic"
    degree: int = 2
    hidden: tuple = (64, 64)
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 256
    l2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown regressor kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.degree < 1 or self.epochs < 1 or self.batch_size < 1 or not self.hidden:
            raise DomainError("regressor hyperparameters must be positive")
        if any(h < 1 for h in self.hidden) or not self.learning_rate > 0 or self.l2 < 0:
            raise DomainError("regressor hyperparameters must be positive")

    @property
    def poly_degree(self) -> int:
        return 1 if self.kind == "linear-logistic" else self.degree

    @classmethod
    def from_dict(cls, cfg: dict) -> "RegressorSpec":
        known = {"kind", "degree", "hidden", "epochs", "learning_rate", "batch_size", "l2", "seed"}
        extra = set(cfg) - known
        if extra:
            raise DomainError(f"unknown regressor option(s): {sorted(extra)}")
        return cls(**cfg)


@dataclass(frozen=True)
class MarginalSurface:
    """A fitted map x -> probability, clipped to ``clip`` when set."""

    predict: Callable[[np.ndarray], np.ndarray]
    arm: int | None = None
    threshold: float | None = None
    spec: RegressorSpec | None = None
    clip: tuple[float, float] | None = None
    diagnostics: dict = field(default_factory=dict)
    model: object = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        out = np.asarray(self.predict(x), dtype=float).reshape(x.shape[0])
        if self.clip is not None:
            out = np.clip(out, *self.clip)
        return out

    def coefficients(self):
        """Intercept and slopes of a linear-logistic fit on the raw covariate scale."""
        if self.model is None or self.spec is None or self.spec.poly_degree != 1:
            raise DomainError("coefficients are only available for degree-1 logistic fits")
        _, scaler, clf = self.model.steps[0][1], self.model.steps[1][1], self.model.steps[2][1]
        slope = clf.coef_[0] / scaler.scale_
        intercept = clf.intercept_[0] - np.sum(slope * scaler.mean_)
        return float(intercept), slope


def _constant(value: float):
    return lambda x: np.full(np.asarray(x).shape[0], value)


def _classifier(spec: RegressorSpec, seed: int):
    if spec.kind == "mlp":
        return make_pipeline(
            StandardScaler(),
            MLPClassifier(
                hidden_layer_sizes=spec.hidden,
                learning_rate_init=spec.learning_rate,
                batch_size=spec.batch_size,
                max_iter=spec.epochs,
                n_iter_no_change=spec.epochs,
                alpha=spec.l2,
                random_state=seed,
            ),
        )
    # large C: effectively unpenalized maximum likelihood
    return make_pipeline(
        PolynomialFeatures(spec.poly_degree, include_bias=False),
        StandardScaler(),
        LogisticRegression(C=1e6, max_iter=5000),
    )


def _fit_binary(x, target, spec: RegressorSpec, seed: int, what: str):
    model = _classifier(spec, seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model.fit(x, target)
    unconverged = any(issubclass(w.category, ConvergenceWarning) for w in caught)
    # a fixed MLP epoch budget is the schedule, not a failure
    if unconverged and spec.kind != "mlp":
        raise FitError(f"{what}: logistic optimizer did not converge (n={len(target)})")
    probe = model.predict_proba(x[: min(len(x), 64)])[:, 1]
    if not np.all(np.isfinite(probe)):
        raise FitError(f"{what}: fitted model produces non-finite probabilities")
    return model


def fit_propensity(data: Dataset, spec: RegressorSpec | None = None, eps: float = 0.01) -> MarginalSurface:
    """Propensity score e(x) = P(Z = 1 | X = x), clipped to [eps, 1 - eps]."""
    spec = spec or RegressorSpec()
    if not 0.0 < eps < 0.5:
        raise DomainError("propensity clip eps must lie in (0, 0.5)")
    data.require_both_arms()
    model = _fit_binary(data.x, data.z, spec, child_int_seed(spec.seed, 0), "propensity")
    return MarginalSurface(
        predict=lambda x: model.predict_proba(x)[:, 1],
        spec=spec,
        clip=(eps, 1.0 - eps),
        model=model,
    )


def fit_outcome_cdf(data: Dataset, arm: int, threshold: float, spec: RegressorSpec | None = None) -> MarginalSurface:
    """Within-arm regression of 1(Y <= threshold) on X."""
    spec = spec or RegressorSpec()
    if not np.any(data.z == arm):
        raise DegenerateTreatmentError(f"arm {arm} has no rows")
    sub = data.arm(arm)
    target = (sub.y <= threshold).astype(int)
    share = float(target.mean())
    if share in (0.0, 1.0):
        log.info("arm %d, threshold %g: all indicators equal %d", arm, threshold, int(share))
        return MarginalSurface(
            predict=_constant(share), arm=arm, threshold=threshold, spec=spec,
            clip=(0.0, 1.0), diagnostics={"constant": True},
        )
    model = _fit_binary(sub.x, target, spec, child_int_seed(spec.seed, 1, arm), "outcome CDF")
    return MarginalSurface(
        predict=lambda x: model.predict_proba(x)[:, 1],
        arm=arm, threshold=threshold, spec=spec, clip=(0.0, 1.0), model=model,
    )


def dr_pseudo(data: Dataset, propensity, outcome, arm: int, threshold: float) -> np.ndarray:
    """Doubly-robust pseudo-outcomes for arm ``arm`` at ``threshold``.

    phi = nu(x) + A / p(x) * (1(y <= c) - nu(x)), where A is the arm
    indicator and p the probability of landing in that arm.
    """
    if arm not in (0, 1):
        raise DomainError("arm must be 0 or 1")
    e = propensity(data.x) if callable(propensity) else np.asarray(propensity, dtype=float)
    nu = outcome(data.x) if callable(outcome) else np.asarray(outcome, dtype=float)
    if e.shape != (data.n,) or nu.shape != (data.n,):
        raise DomainError("nuisance predictions do not match the dataset")
    in_arm = (data.z == arm).astype(float)
    p_arm = e if arm == 1 else 1.0 - e
    if np.any(p_arm[in_arm == 1.0] <= 0.0):
        raise DomainError("propensity is zero for an observed unit of the target arm")
    hit = (data.y <= threshold).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(in_arm == 1.0, in_arm / p_arm, 0.0)
    phi = nu + weight * (hit - nu)
    if not np.all(np.isfinite(phi)):
        raise FitError("non-finite pseudo-outcomes")
    return phi


def _fit_bounded_real(x, target, spec: RegressorSpec, seed: int):
    """Least-squares fit of a [0, 1]-valued mean to an unbounded target."""
    if spec.kind == "mlp":
        model = make_pipeline(
            StandardScaler(),
            MLPRegressor(
                hidden_layer_sizes=spec.hidden,
                learning_rate_init=spec.learning_rate,
                batch_size=spec.batch_size,
                max_iter=spec.epochs,
                n_iter_no_change=spec.epochs,
                alpha=spec.l2,
                random_state=seed,
            ),
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model.fit(x, target)
        return model.predict

    # sigmoid-link least squares on standardized polynomial features
    feats = make_pipeline(PolynomialFeatures(spec.poly_degree, include_bias=False), StandardScaler())
    f = feats.fit_transform(x)
    design = np.column_stack([np.ones(len(f)), f])
    start = np.zeros(design.shape[1])
    start[0] = logit(np.clip(target.mean(), 0.01, 0.99))

    def loss(beta):
        p = expit(design @ beta)
        r = p - target
        grad = design.T @ (2.0 * r * p * (1.0 - p))
        return float(r @ r), grad

    res = optimize.minimize(loss, start, jac=True, method="L-BFGS-B",
                            options={"maxiter": 2000, "gtol": 1e-9})
    if not np.all(np.isfinite(res.x)):
        raise FitError(f"pseudo-outcome regression failed: {res.message}")
    beta = res.x
    return lambda xnew: expit(np.column_stack([np.ones(len(xnew)), feats.transform(xnew)]) @ beta)


def _nuisance_predictions(data, arm, threshold, spec, eps, propensity, outcome, cross_fit, seed):
    if not cross_fit:
        e = propensity if propensity is not None else fit_propensity(data, spec, eps)
        nu = outcome if outcome is not None else fit_outcome_cdf(data, arm, threshold, spec)
        return e(data.x), nu(data.x)
    rng = make_rng(seed, 7)
    folds = rng.permutation(data.n) % 2
    e_hat = np.empty(data.n)
    nu_hat = np.empty(data.n)
    for k in (0, 1):
        train, test = data.subset(folds != k), folds == k
        e = propensity if propensity is not None else fit_propensity(train, spec, eps)
        nu = outcome if outcome is not None else fit_outcome_cdf(train, arm, threshold, spec)
        e_hat[test] = e(data.x[test])
        nu_hat[test] = nu(data.x[test])
    return e_hat, nu_hat


def fit_dr_marginal(
    data: Dataset,
    arm: int,
    threshold: float,
    nuisance: RegressorSpec | None = None,
    final: RegressorSpec | None = None,
    eps: float = 0.01,
    delta: float = 1e-4,
    cross_fit: bool = False,
    propensity: MarginalSurface | None = None,
    outcome: MarginalSurface | None = None,
) -> MarginalSurface:
    """Two-stage DR estimate of u_arm(x) = P(Y(arm) <= threshold | x).

    Pre-fitted ``propensity`` or ``outcome`` surfaces replace the
    corresponding nuisance fit.  ``cross_fit`` evaluates each nuisance on the
    fold it was not trained on (two folds).
    """
    nuisance = nuisance or RegressorSpec()
    final = final or nuisance
    if not 0.0 < delta < 0.5:
        raise DomainError("clip delta must lie in (0, 0.5)")
    data.require_both_arms()
    e_hat, nu_hat = _nuisance_predictions(
        data, arm, threshold, nuisance, eps, propensity, outcome, cross_fit, nuisance.seed
    )
    if eps is not None:
        e_hat = np.clip(e_hat, eps, 1.0 - eps)
    phi = dr_pseudo(data, e_hat, nu_hat, arm, threshold)
    predict = _fit_bounded_real(data.x, phi, final, child_int_seed(final.seed, 2, arm))
    return MarginalSurface(
        predict=predict, arm=arm, threshold=threshold, spec=final, clip=(delta, 1.0 - delta),
        diagnostics={"pseudo_mean": float(phi.mean()), "cross_fit": cross_fit},
    )


def oracle_surface(fn: Callable[[np.ndarray], np.ndarray], arm: int | None = None,
                   threshold: float | None = None) -> MarginalSurface:
    """Wrap an analytic x -> probability map as a surface (no clipping)."""

    def predict(x):
        out = fn(x)
        if np.ndim(out) == 0:
            out = np.full(np.asarray(x).shape[0], float(out))
        return out

    return MarginalSurface(predict=predict, arm=arm, threshold=threshold)


@dataclass(frozen=True)
class FittedMarginals:
    """The three surfaces the bounds need: u1 at c1, u0 at c0, u0 at c1."""

    u1: MarginalSurface
    u0: MarginalSurface
    u0_at_c1: MarginalSurface | None
    thresholds: Thresholds

    def point(self, x) -> MarginalPoint:
        uc = None if self.u0_at_c1 is None else self.u0_at_c1(x)
        return MarginalPoint(self.u1(x), self.u0(x), uc)


def estimate_marginals(
    data: Dataset,
    thresholds: Thresholds,
    nuisance: RegressorSpec | None = None,
    final: RegressorSpec | None = None,
    eps: float = 0.01,
    delta: float = 1e-4,
    cross_fit: bool = False,
    with_mono: bool = True,
) -> FittedMarginals:
    """Fit every surface needed for FH, monotonicity and copula bounds.

    The propensity model is fitted once and shared across surfaces.
    """
    nuisance = nuisance or RegressorSpec()
    data.require_both_arms()
    e = None if cross_fit else fit_propensity(data, nuisance, eps)
    kw = dict(nuisance=nuisance, final=final, eps=eps, delta=delta, cross_fit=cross_fit, propensity=e)
    u1 = fit_dr_marginal(data, 1, thresholds.c1, **kw)
    u0 = fit_dr_marginal(data, 0, thresholds.c0, **kw)
    uc = None
    if with_mono:
        uc = u0 if thresholds.equal else fit_dr_marginal(data, 0, thresholds.c1, **kw)
    return FittedMarginals(u1, u0, uc, thresholds)
