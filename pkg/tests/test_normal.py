import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpnbounds.errors import DomainError
from gpnbounds.normal import bvn_cdf, norm_cdf, norm_ppf

from oracles import bvn_quadrature

# (a, b, rho) -> value from bvn_quadrature (dblquad, tolerances 1e-13)
FROZEN = [
    ((0.0, 0.0, 0.5), 0.33333333333333337),
    ((-1.3, 0.4, 0.3), 0.08068336339530224),
    ((1.0, 2.0, -0.6), 0.8186295851005382),
    ((-2.5, -1.5, 0.9), 0.006109805344223106),
    ((0.7, -0.2, -0.95), 0.18156705257358996),
    ((2.2, -2.9, 0.95), 0.0018658133003840263),
]


@pytest.mark.parametrize("args,expected", FROZEN)
def test_bvn_matches_frozen_quadrature(args, expected):
    assert bvn_cdf(*args) == pytest.approx(expected, abs=1e-7)


def test_bvn_independence():
    assert bvn_cdf(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("b", [-2.0, 0.3, 1.7])
def test_bvn_infinite_limit_gives_marginal(b):
    assert bvn_cdf(math.inf, b, 0.4) == pytest.approx(norm_cdf(b), abs=1e-15)
    assert bvn_cdf(b, math.inf, -0.4) == pytest.approx(norm_cdf(b), abs=1e-15)
    assert bvn_cdf(-math.inf, b, 0.4) == 0.0


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.2, 0.5, 0.93, 0.99])
def test_bvn_origin_closed_form(rho):
    assert bvn_cdf(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-12)


@pytest.mark.parametrize("a,b", [(0.3, -0.4), (1.2, 1.1), (-2.0, 2.0)])
def test_bvn_degenerate_correlation(a, b):
    pa, pb = norm_cdf(a), norm_cdf(b)
    assert bvn_cdf(a, b, 1.0) == pytest.approx(min(pa, pb), abs=1e-15)
    assert bvn_cdf(a, b, -1.0) == pytest.approx(max(pa + pb - 1.0, 0.0), abs=1e-15)
    # continuity into the closed forms
    assert bvn_cdf(a, b, 1.0 - 1e-9) == pytest.approx(min(pa, pb), abs=1e-4)


def test_bvn_vectorised_shape():
    a = np.linspace(-1, 1, 6).reshape(2, 3)
    out = bvn_cdf(a, 0.5, 0.3)
    assert out.shape == (2, 3)
    assert out[1, 2] == pytest.approx(bvn_cdf(1.0, 0.5, 0.3))


@pytest.mark.parametrize("bad", [(0, 0, 1.01), (0, 0, -1.5), (math.nan, 0, 0.1), (0, 0, math.nan)])
def test_bvn_domain_errors(bad):
    with pytest.raises(DomainError):
        bvn_cdf(*bad)


@pytest.mark.slow
def test_bvn_against_quadrature_spot_grid():
    for rho in (-0.95, -0.4, 0.35, 0.95):
        for a in (-2.5, 0.0, 1.5):
            for b in (-1.0, 2.5):
                assert abs(bvn_cdf(a, b, rho) - bvn_quadrature(a, b, rho)) <= 1e-7


@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-0.999, 0.999))
@settings(max_examples=200, deadline=None)
def test_bvn_symmetry_and_frechet(a, b, rho):
    v = bvn_cdf(a, b, rho)
    assert v == pytest.approx(bvn_cdf(b, a, rho), abs=1e-14)
    pa, pb = norm_cdf(a), norm_cdf(b)
    assert max(pa + pb - 1.0, 0.0) - 1e-14 <= v <= min(pa, pb) + 1e-14


@given(st.floats(1e-12, 1 - 1e-12))
@settings(max_examples=300, deadline=None)
def test_phi_inverse_roundtrip(p):
    assert norm_cdf(norm_ppf(p)) == pytest.approx(p, abs=1e-8)


def test_ppf_domain():
    assert norm_ppf(0.0) == -math.inf
    with pytest.raises(DomainError):
        norm_ppf(1.2)
