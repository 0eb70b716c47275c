import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fredholm_distortion.distortion import (DEFAULT_MONOMIALS, DistortionPolynomial,
                                            MonomialTerm, ThetaVector, eval_f, eval_g,
                                            polynomial_from_config, polynomial_to_config,
                                            polynomial_to_theta, theta_to_polynomial,
                                            validate_dfc)

# f = 1e-6 (2vx + u^2 x + 2 v^2 x - 2 v x^2),  g = 1e-6 (3vy + u^2 y - v^2 y + v y^2)
FIG2B = DistortionPolynomial(
    f_terms=(MonomialTerm(1, 0, 0, 1, 2e-6), MonomialTerm(1, 0, 2, 0, 1e-6),
             MonomialTerm(1, 0, 0, 2, 2e-6), MonomialTerm(2, 0, 0, 1, -2e-6)),
    g_terms=(MonomialTerm(0, 1, 0, 1, 3e-6), MonomialTerm(0, 1, 2, 0, 1e-6),
             MonomialTerm(0, 1, 0, 2, -1e-6), MonomialTerm(0, 2, 0, 1, 1e-6)),
)

coef = st.floats(-1e-3, 1e-3, allow_nan=False)
coord = st.floats(-300, 300, allow_nan=False)


def test_eval_f_fig2b_point():
    # 1e-6 * (1000 + 5000 + 10000 - 50000)
    assert eval_f(FIG2B, 10, 10, 50, 50) == pytest.approx(-0.034, rel=1e-12)


def test_eval_g_fig2b_point():
    # 1e-6 * (1500 + 5000 - 5000 + 25000)
    assert eval_g(FIG2B, 10, 10, 50, 50) == pytest.approx(0.0265, rel=1e-12)


def test_empty_and_zero_polynomials():
    empty = DistortionPolynomial()
    assert eval_f(empty, 3.0, 4.0, 5.0, 6.0) == 0.0
    zero = theta_to_polynomial(np.zeros(12))
    assert eval_g(zero, 3.0, 4.0, 5.0, 6.0) == 0.0


@given(st.lists(coef, min_size=12, max_size=12), coord, coord)
def test_dfc_at_reference_point(theta, u, v):
    poly = theta_to_polynomial(theta)
    assert eval_f(poly, u, v, 0.0, 0.0) == 0.0
    assert eval_g(poly, u, v, 0.0, 0.0) == 0.0
    assert eval_f(FIG2B, u, v, 0.0, 0.0) == 0.0


@given(st.lists(coef, min_size=12, max_size=12), st.lists(coef, min_size=12, max_size=12),
       coord, coord, coord, coord)
def test_linearity_in_coefficients(a, b, u, v, x, y):
    pa, pb = theta_to_polynomial(a), theta_to_polynomial(b)
    pab = theta_to_polynomial(np.add(a, b))
    lhs = eval_f(pab, u, v, x, y)
    rhs = eval_f(pa, u, v, x, y) + eval_f(pb, u, v, x, y)
    scale = sum(abs(t.coefficient * t.monomial(u, v, x, y))
                for t in pa.f_terms + pb.f_terms) + 1e-300
    assert abs(lhs - rhs) <= 1e-14 * scale


@given(st.lists(coef, min_size=12, max_size=12))
def test_theta_round_trip(theta):
    poly = theta_to_polynomial(theta)
    np.testing.assert_array_equal(polynomial_to_theta(poly), np.asarray(theta))
    tv = ThetaVector(theta)
    assert ThetaVector.from_polynomial(tv.to_polynomial()) == tv


def test_default_basis_is_as_printed():
    # ux, vx, u^2 x, v^2 x, u x^2, v x^2 for both f and g
    poly = theta_to_polynomial(np.arange(1, 13) * 1e-6)
    assert [t.label() for t in poly.f_terms] == ["ux", "vx", "u^2x", "v^2x", "ux^2", "vx^2"]
    assert [t.label() for t in poly.g_terms] == [t.label() for t in poly.f_terms]
    assert validate_dfc(poly) == []


def test_validate_dfc_reports_offenders():
    bad = DistortionPolynomial(f_terms=(MonomialTerm(0, 0, 2, 0, 1.0),
                                        MonomialTerm(1, 0, 0, 0, 1.0)))
    violations = validate_dfc(bad)
    assert len(violations) == 1
    assert violations[0].function == "f" and violations[0].index == 0
    assert validate_dfc(DistortionPolynomial()) == []


def test_theta_outside_basis_rejected():
    with pytest.raises(ValueError):
        polynomial_to_theta(FIG2B)
    with pytest.raises(ValueError):
        theta_to_polynomial(np.zeros(5))


def test_config_forms():
    theta = [0, -2, 0, 2, 1, 2, 0, 1, 0, 3, 1, -1]
    a = polynomial_from_config({"theta": [t * 1e-6 for t in theta]})
    b = polynomial_from_config(polynomial_to_config(a))
    np.testing.assert_array_equal(polynomial_to_theta(a), polynomial_to_theta(b))
    c = polynomial_from_config({"f_terms": [{"i": 1, "j": 0, "m": 1, "n": 0, "c": 1e-6}],
                                "g_terms": []})
    assert eval_f(c, 2.0, 0.0, 3.0, 0.0) == pytest.approx(6e-6)
    with pytest.raises(ValueError):
        polynomial_from_config({})


def test_reference_point_shift():
    poly = DistortionPolynomial((MonomialTerm(1, 0, 0, 0, 1.0),), (), (5.0, 0.0))
    assert eval_f(poly, 0, 0, 5.0, 1.0) == 0.0
    assert eval_f(poly, 0, 0, 7.0, 1.0) == 2.0


def test_broadcasting():
    poly = theta_to_polynomial(np.ones(12) * 1e-6)
    u = np.linspace(-5, 5, 4)[None, :]
    v = np.linspace(-5, 5, 3)[:, None]
    out = eval_f(poly, u, v, 10.0, 0.0)
    assert out.shape == (3, 4)
    assert out[1, 2] == pytest.approx(eval_f(poly, u[0, 2], v[1, 0], 10.0, 0.0))
    assert len(DEFAULT_MONOMIALS) == 6
