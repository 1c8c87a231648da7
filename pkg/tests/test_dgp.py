import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import kendalltau

from gpnbounds.bounds import BoundInterval, CopulaSpec, copula_gpn_bounds, fh_bounds, guard_marginals
from gpnbounds.copula import CopulaFamily
from gpnbounds.dgp import (
    TABLE1_HEADER,
    TABLE2_HEADER,
    CovariateModel,
    DgpCase,
    Metrics,
    evaluate,
    generate,
    generate_misspecified,
    oracle_marginals,
    run_table1,
    run_table2,
    table1_replicate,
    true_gpn,
    true_mean_gpn,
)
from gpnbounds.errors import DomainError

CASES = [DgpCase.monotonic(), DgpCase.linear(), DgpCase.nonlinear()]


class TestGenerate:
    def test_monotonic_rows(self):
        _, truth = generate("a", 20_000, 1)
        assert np.all(truth.y1 >= truth.y0)

    def test_covariate_mean(self):
        data, _ = generate("b", 4096, 2)
        np.testing.assert_allclose(data.x.mean(axis=0), [0.5, -0.5, 0.0], atol=0.05)

    def test_covariate_covariance(self):
        data, _ = generate("c", 100_000, 2)
        np.testing.assert_allclose(np.cov(data.x.T), np.asarray(CovariateModel().cov), atol=0.02)

    def test_linear_error_correlation(self):
        _, truth = generate("b", 100_000, 3)
        r = np.corrcoef(truth.y0 - truth.mu0, truth.y1 - truth.mu1)[0, 1]
        assert r == pytest.approx(0.5, abs=0.03)

    def test_observed_outcome_and_treatment(self):
        data, truth = generate("c", 50_000, 4)
        assert np.array_equal(data.y, np.where(data.z == 1, truth.y1, truth.y0))
        assert data.z.mean() == pytest.approx(truth.propensity.mean(), abs=0.01)

    def test_deterministic(self):
        a, _ = generate("b", 500, 9)
        b, _ = generate("b", 500, 9)
        c, _ = generate("b", 500, 10)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
        assert not np.array_equal(a.y, c.y)

    def test_cases(self):
        assert DgpCase.parse("a").family is CopulaFamily.COMONOTONE
        assert DgpCase.parse("b").expert == (0.2, 0.7)
        assert DgpCase.parse("monotonic").expert == (0.5, 1.0)
        with pytest.raises(DomainError):
            DgpCase.parse("d")
        with pytest.raises(DomainError):
            DgpCase("a", CopulaFamily.GAUSSIAN, 0.5)

    def test_bad_covariance(self):
        with pytest.raises(DomainError):
            CovariateModel(cov=((1.0, 2.0, 0.0), (2.0, 1.0, 0.0), (0.0, 0.0, 1.0)))


class TestMisspecified:
    def test_gaussian_tau_half(self):
        case = DgpCase.misspecified("gaussian", 0.5)
        assert case.param == pytest.approx(0.7071, abs=1e-4)
        assert case.expert == pytest.approx((0.6071, 0.8071), abs=1e-4)

    @pytest.mark.parametrize("family", ["gaussian", "clayton", "gumbel"])
    def test_zero_tau_independent(self, family):
        _, truth = generate_misspecified(family, 0.0, 100_000, 5)
        tau = kendalltau(truth.y0 - truth.mu0, truth.y1 - truth.mu1)[0]
        assert abs(tau) < 0.02

    def test_clayton_tau(self):
        _, truth = generate_misspecified("clayton", 0.33, 100_000, 6)
        tau = kendalltau(truth.y0 - truth.mu0, truth.y1 - truth.mu1)[0]
        assert tau == pytest.approx(0.33, abs=0.01)

    def test_linear_means(self):
        case = DgpCase.misspecified("gumbel", 0.2)
        x = np.array([[0.3, -0.2, 1.1]])
        assert case.mu1(x) == pytest.approx(DgpCase.linear().mu1(x))


class TestTruth:
    def test_zero_effect_point_is_zero(self):
        # X0 = 0 gives tau(x) = 0 in the monotonic design
        gpn, degenerate = true_gpn("a", np.array([[0.0, -0.4, 0.7]]))
        assert gpn[0] == pytest.approx(0.0, abs=1e-15) and not degenerate[0]

    def test_monotonic_closed_form(self):
        x = np.array([[1.3, -0.5, 0.2], [-0.4, 0.1, 0.0]])
        case = DgpCase.monotonic()
        mu0, mu1 = case.mu0(x), case.mu1(x)
        joint = ndtr(np.minimum(10.0, 12.0 - (mu1 - mu0)) - mu0)
        u1, u0 = ndtr(12.0 - mu1), ndtr(10.0 - mu0)
        gpn, _ = true_gpn(case, x)
        np.testing.assert_allclose(gpn, (u0 - joint) / (1 - u1), atol=1e-14)

    def test_linear_point_against_monte_carlo(self):
        x = np.array([[0.5, -0.5, 0.0]])
        case = DgpCase.linear()
        gpn, _ = true_gpn(case, x)
        rng = np.random.default_rng(77)
        eps = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], size=1_000_000)
        y0 = case.mu0(x)[0] + eps[:, 0]
        y1 = case.mu1(x)[0] + eps[:, 1]
        cond = y1 >= 12.0
        p = np.mean(y0[cond] < 10.0)
        se = np.sqrt(p * (1 - p) / cond.sum())
        assert abs(gpn[0] - p) < 3 * se

    def test_degenerate_flag(self):
        # mu1 far below c1 pushes u1 to 1
        x = np.array([[-6.0, -6.0, -6.0]])
        gpn, degenerate = true_gpn("b", x)
        assert degenerate[0] and 0.0 <= gpn[0] <= 1.0

    def test_true_mean_linear(self):
        assert true_mean_gpn("b", draws=200_000, seed=1) == pytest.approx(0.197, abs=0.005)

    def test_true_mean_depends_on_tau_only(self):
        for tau, target in ((0.20, 0.206), (0.50, 0.186)):
            vals = [true_mean_gpn(DgpCase.misspecified(f, tau), draws=200_000, seed=2)
                    for f in ("gaussian", "clayton", "gumbel")]
            assert max(vals) - min(vals) < 0.005
            assert np.mean(vals) == pytest.approx(target, abs=0.005)

    @pytest.mark.parametrize("case", CASES, ids=lambda c: c.label)
    def test_containment_with_oracle_marginals(self, case):
        data, _ = generate(case, 4096, 11)
        m = guard_marginals(oracle_marginals(case).point(data.x))
        truth, _ = true_gpn(case, data.x)
        assert np.all(fh_bounds(m).contains(truth, tol=1e-9))
        if case.family is CopulaFamily.GAUSSIAN:
            for rng in ((0.5, 0.5), (0.2, 0.7), (0.0, 1.0), (-1.0, 0.5)):
                b = copula_gpn_bounds(m, CopulaSpec.gaussian(*rng))
                assert np.all(b.contains(truth, tol=1e-9))
        else:
            # the shared-error design sits at the comonotone end, rho = 1
            b = copula_gpn_bounds(m, CopulaSpec.gaussian(0.5, 1.0))
            assert np.all(b.contains(truth, tol=1e-9))


class TestEvaluate:
    def test_examples(self):
        exact = BoundInterval(np.array([0.2, 0.4]), np.array([0.2, 0.4]), "FH")
        assert evaluate(exact, [0.2, 0.4]) == Metrics(0.0, 0.0, 0.0)
        wide = BoundInterval(np.zeros(5), np.ones(5), "FH")
        assert evaluate(wide, np.full(5, 0.5)) == Metrics(0.25, 0.25, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            evaluate(BoundInterval(np.zeros(3), np.ones(3), "FH"), [0.5, 0.5])


class TestTables:
    def test_table1_shape_and_header(self):
        tab = run_table1(n=512, seeds=2, mode="oracle")
        assert tab.header == TABLE1_HEADER
        assert len(tab.rows) == 12
        assert {(r[0], r[1]) for r in tab.rows} == {
            (m, c) for m in ("FH", "Mono", "Conservative", "Expert") for c in "abc"
        }

    def test_table1_deterministic_and_thread_invariant(self):
        a = run_table1(cases=("b",), n=512, seeds=3, seed=4, mode="estimated")
        b = run_table1(cases=("b",), n=512, seeds=3, seed=4, mode="estimated", threads=3)
        assert a.rows == b.rows

    def test_oracle_removes_estimation_error_at_identified_end(self):
        # the shared-error truth is the comonotone lower bound itself
        oracle = table1_replicate("a", 4096, 21, "oracle")
        est = table1_replicate("a", 4096, 21, "estimated")
        for method in ("FH", "Mono", "Conservative", "Expert"):
            assert oracle.metrics[method].mse_lb < 1e-20
            assert est.metrics[method].mse_lb > 1e-3

    def test_full_pipeline_fh_width_monotonic(self):
        rep = table1_replicate("a", 4096, 31, "estimated")
        assert rep.metrics["FH"].width == pytest.approx(0.547, abs=0.08)

    def test_nonlinear_expert_width(self):
        rep = table1_replicate("c", 4096, 32, "estimated")
        assert rep.metrics["Expert"].width == pytest.approx(0.016, abs=0.02)

    @pytest.mark.xfail(strict=True, reason="oracle Conservative width in case (b) is about 0.25; "
                       "see the decisions ledger")
    def test_linear_conservative_width(self):
        rep = table1_replicate("b", 4096, 33, "estimated")
        assert rep.metrics["Conservative"].width == pytest.approx(0.132, abs=0.06)

    def test_table2_shape(self):
        tab = run_table2(n=512, truth_draws=20_000, mode="oracle")
        assert tab.header == TABLE2_HEADER
        assert len(tab.rows) == 9
        for row in tab.rows:
            rec = dict(zip(tab.header, row))
            assert rec["fh_lb"] <= rec["cons_lb"] + 1e-12
            assert rec["cons_ub"] <= rec["fh_ub"] + 1e-12
            assert rec["fh_width"] == pytest.approx(rec["fh_ub"] - rec["fh_lb"])
