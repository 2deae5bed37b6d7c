"""Constitutive-law oracles: closed forms against hand values and quadrature."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscoflux.errors import ConfigurationError, DomainError
from viscoflux.material import (
    MaterialLaw,
    adaptive_simpson,
    big_lambda_quadrature,
    domination_constant,
    potential_G_quadrature,
    potential_Gbar_quadrature,
)

CANON = MaterialLaw(A=1.0, gamma=2.0, c_lam=1.0, beta=2.0, mu=1.0, rho_tilde=1.0, rho_bar=4.0)


def laws() -> st.SearchStrategy[MaterialLaw]:
    return st.builds(
        MaterialLaw,
        A=st.floats(0.5, 3.0),
        gamma=st.floats(1.0, 3.0),
        c_lam=st.floats(0.0, 3.0),
        beta=st.floats(0.0, 3.0),
        mu=st.floats(0.5, 3.0),
        rho_tilde=st.floats(0.5, 2.0),
        rho_bar=st.floats(4.0, 8.0),
        q=st.floats(0.25, 1.75),
    )


# -- hand values -------------------------------------------------------------


def test_big_lambda_hand_value():
    # 2*mu*ln 2 + (c/beta)*(2**beta - 1) with the canonical law
    assert CANON.big_lambda(2.0) == pytest.approx(2.0 * math.log(2.0) + 1.5, abs=1e-14)


def test_big_lambda_shear_only():
    law = MaterialLaw(c_lam=0.0)
    assert law.big_lambda(math.e) == pytest.approx(2.0, abs=1e-14)


def test_big_lambda_constant_bulk():
    law = MaterialLaw(c_lam=0.5, beta=0.0)
    rho = 1.7
    assert law.big_lambda(rho) == pytest.approx((2.0 + 0.5) * math.log(rho), abs=1e-14)


def test_big_lambda_refuses_vacuum():
    with pytest.raises(DomainError):
        CANON.big_lambda(0.0)
    with pytest.raises(DomainError):
        CANON.big_lambda(np.array([1.0, -0.5]))


def test_potential_G_hand_values():
    assert CANON.potential_G(2.0) == pytest.approx(1.0, abs=1e-14)
    assert CANON.potential_G(0.5) == pytest.approx(0.25, abs=1e-14)
    assert CANON.potential_G(0.0) == pytest.approx(1.0, abs=1e-14)


def test_potential_G_quadratic_case_is_square():
    rho = np.linspace(0.0, 4.0, 101)
    assert np.max(np.abs(CANON.potential_G(rho) - (rho - 1.0) ** 2)) < 1e-12


def test_potential_G_isothermal_branch():
    law = MaterialLaw(gamma=1.0, A=2.0)
    rho = 1.5
    assert law.potential_G(rho) == pytest.approx(2.0 * (rho * math.log(rho) + 1.0 - rho), abs=1e-14)
    assert law.potential_G(0.0) == pytest.approx(2.0, abs=1e-14)  # A * rho_tilde


def test_potential_Gbar_hand_values():
    law = MaterialLaw(gamma=3.0, rho_bar=4.0)
    assert law.potential_Gbar(2.0) == pytest.approx(4.0, abs=1e-14)
    assert law.potential_Gbar(1.0) == pytest.approx(0.5, abs=1e-14)


def test_potential_Gbar_needs_supercritical_gamma():
    law = MaterialLaw(gamma=1.0)
    with pytest.raises(ConfigurationError):
        law.potential_Gbar(1.0)


def test_nu_and_P0_hand_values():
    nu, p0 = CANON.nu_and_P0(2.0)
    assert nu == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert p0 == pytest.approx(0.5, abs=1e-15)


def test_effective_flux_scalar():
    assert CANON.effective_flux_scalar(CANON.rho_tilde, 0.0) == 0.0
    # (lambda(2)+2mu)*0.25 - P(2) + P(1) = 6*0.25 - 4 + 1
    assert CANON.effective_flux_scalar(2.0, 0.25) == pytest.approx(-1.5, abs=1e-14)
    # compact-support far field: zero reference pressure
    assert CANON.effective_flux_scalar(2.0, 0.25, p_far=0.0) == pytest.approx(-2.5, abs=1e-14)


def test_law_validation():
    with pytest.raises(ConfigurationError):
        MaterialLaw(gamma=0.5)
    with pytest.raises(ConfigurationError):
        MaterialLaw(mu=0.0)
    with pytest.raises(ConfigurationError):
        MaterialLaw(rho_bar=0.5)
    with pytest.raises(ConfigurationError):
        MaterialLaw(q=2.0)


# -- quadrature route --------------------------------------------------------


def test_adaptive_simpson_polynomial_and_sine():
    assert adaptive_simpson(lambda x: x**2, 0.0, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert adaptive_simpson(lambda x: math.sin(x), 0.0, math.pi) == pytest.approx(2.0, abs=1e-10)
    assert adaptive_simpson(lambda x: x, 1.0, 0.0) == pytest.approx(-0.5, abs=1e-13)


def test_adaptive_simpson_interval_cap():
    with pytest.raises(RuntimeError):
        adaptive_simpson(lambda x: math.sqrt(abs(x)), 0.0, 1.0, abs_tol=1e-16, interval_cap=8)


@pytest.mark.parametrize(
    "law",
    [
        CANON,
        MaterialLaw(A=0.8, gamma=1.5, c_lam=2.0, beta=1.0, mu=0.7, rho_tilde=1.3, rho_bar=5.0),
        MaterialLaw(A=1.2, gamma=3.0, c_lam=0.4, beta=0.0, mu=2.0, rho_tilde=0.8, rho_bar=4.0),
    ],
)
def test_closed_forms_match_quadrature(law: MaterialLaw):
    densities = np.linspace(law.rho_bar / 100.0, law.rho_bar, 100)
    for rho in densities:
        lam = float(law.big_lambda(rho))
        ref = big_lambda_quadrature(law, rho)
        assert abs(lam - ref) <= 1e-9 * max(1.0, abs(ref))
        g = float(law.potential_G(rho))
        ref = potential_G_quadrature(law, rho)
        assert abs(g - ref) <= 1e-9 * max(1.0, abs(ref))
        if law.gamma > 1.0:
            gb = float(law.potential_Gbar(rho))
            ref = potential_Gbar_quadrature(law, rho)
            assert abs(gb - ref) <= 1e-9 * max(1.0, abs(ref))


# -- invariants --------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(law=laws())
def test_normalization_at_reference_density_is_exact(law: MaterialLaw):
    assert float(law.big_lambda(law.rho_tilde)) == 0.0
    assert float(law.potential_G(law.rho_tilde)) == 0.0


@settings(max_examples=60, deadline=None)
@given(law=laws(), data=st.data())
def test_monotonicity(law: MaterialLaw, data: st.DataObject):
    lo = data.draw(st.floats(0.05, law.rho_bar - 0.05))
    hi = data.draw(st.floats(lo + 1e-3, law.rho_bar))
    assert law.pressure(hi) >= law.pressure(lo)
    assert law.lambda_visc(hi) >= law.lambda_visc(lo)
    assert law.big_lambda(hi) > law.big_lambda(lo)


@settings(max_examples=60, deadline=None)
@given(law=laws(), data=st.data())
def test_domination_of_square_distance(law: MaterialLaw, data: st.DataObject):
    c = domination_constant(law)
    rho = data.draw(st.floats(0.0, law.rho_bar))
    assert (rho - law.rho_tilde) ** 2 <= c * law.potential_G(rho) + 1e-12


@settings(max_examples=40, deadline=None)
@given(law=laws(), data=st.data())
def test_potential_G_convex_shape(law: MaterialLaw, data: st.DataObject):
    rho = data.draw(st.floats(0.0, law.rho_bar))
    g = float(law.potential_G(rho))
    assert g >= 0.0
    if abs(rho - law.rho_tilde) > 1e-6:
        assert g > 0.0
