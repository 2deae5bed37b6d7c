"""Constitutive laws for barotropic flow with density-dependent bulk viscosity.

The material model is

    P(rho)      = A * rho**gamma                     (pressure)
    lambda(rho) = c_lam * rho**beta                  (bulk/second viscosity)
    mu          = const > 0                          (shear viscosity)

with a far-field reference density rho_tilde > 0 and a ceiling rho_bar used by
a-priori bounds.  Three potentials derived from the law appear throughout the
diagnostics:

    Lambda(rho) = int_{rho_tilde}^{rho} (2*mu + lambda(s)) / s ds
                = 2*mu*log(rho/rho_tilde) + (c_lam/beta)*(rho**beta - rho_tilde**beta)
                  (the last term becomes c_lam*log(rho/rho_tilde) when beta = 0)

    G(rho)      = rho * int_{rho_tilde}^{rho} (P(s) - P(rho_tilde)) / s**2 ds
                  (convex, vanishing only at rho_tilde; for A=1, gamma=2 it is
                  exactly (rho - rho_tilde)**2)

    Gbar(rho)   = A * rho**gamma / (gamma - 1)       (gamma > 1 only; the
                  potential matched to a vanishing far field)

plus the effective viscous flux F = (lambda + 2*mu) * div(u) - P + P_far and
the coefficients nu = 1/(2*mu + lambda), P0 = nu * (P - P(rho_tilde)).

All closed forms are cross-checkable against an independent quadrature route
(adaptive Simpson, absolute tolerance 1e-10, interval cap 1e6) exposed by the
``*_quadrature`` functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

QUAD_ABS_TOL = 1e-10
QUAD_INTERVAL_CAP = 10**6


@dataclass(frozen=True)
class MaterialLaw:
    """Barotropic pressure law plus power-law bulk viscosity.

    Parameters
    ----------
    A, gamma : pressure coefficient and adiabatic exponent, ``A > 0``,
        ``gamma >= 1``.
    c_lam, beta : bulk viscosity coefficient and exponent, both ``>= 0``.
        ``beta = 0`` gives a constant bulk viscosity ``c_lam``.
    mu : shear viscosity, ``> 0``.
    rho_tilde : far-field reference density, ``> 0``.
    rho_bar : density ceiling used by a-priori bounds, ``> rho_tilde``.
    q : integrability exponent recorded with the law (must lie in ``(0, 2)``);
        it parametrizes admissible data classes and is carried for reporting
        only, no formula here uses it.
    """

    A: float = 1.0
    gamma: float = 2.0
    c_lam: float = 1.0
    beta: float = 2.0
    mu: float = 1.0
    rho_tilde: float = 1.0
    rho_bar: float = 4.0
    q: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigurationError(f"pressure coefficient A must be positive, got {self.A}")
        if not self.gamma >= 1:
            raise ConfigurationError(f"adiabatic exponent gamma must be >= 1, got {self.gamma}")
        if self.c_lam < 0:
            raise ConfigurationError(f"bulk viscosity coefficient c_lam must be >= 0, got {self.c_lam}")
        if self.beta < 0:
            raise ConfigurationError(f"bulk viscosity exponent beta must be >= 0, got {self.beta}")
        if not self.mu > 0:
            raise ConfigurationError(f"shear viscosity mu must be positive, got {self.mu}")
        if not self.rho_tilde > 0:
            raise ConfigurationError(f"far-field density rho_tilde must be positive, got {self.rho_tilde}")
        if not self.rho_bar > self.rho_tilde:
            raise ConfigurationError(
                f"density ceiling rho_bar={self.rho_bar} must exceed rho_tilde={self.rho_tilde}"
            )
        if not 0 < self.q < 2:
            raise ConfigurationError(f"integrability exponent q must lie in (0, 2), got {self.q}")

    # -- pointwise laws ----------------------------------------------------

    def pressure(self, rho):
        """P(rho) = A * rho**gamma, defined for rho >= 0."""
        rho = np.asarray(rho, dtype=float)
        _require_nonnegative(rho, "pressure")
        return self.A * rho**self.gamma

    def pressure_derivative(self, rho):
        """dP/drho = A * gamma * rho**(gamma-1); the squared sound speed."""
        rho = np.asarray(rho, dtype=float)
        _require_nonnegative(rho, "pressure_derivative")
        if self.gamma == 1.0:
            return np.full_like(rho, self.A)
        return self.A * self.gamma * rho ** (self.gamma - 1.0)

    def lambda_visc(self, rho):
        """Bulk viscosity lambda(rho) = c_lam * rho**beta (constant if beta=0)."""
        rho = np.asarray(rho, dtype=float)
        _require_nonnegative(rho, "lambda_visc")
        if self.beta == 0.0:
            return np.full_like(rho, self.c_lam)
        return self.c_lam * rho**self.beta

    def total_visc(self, rho):
        """lambda(rho) + 2*mu, the coefficient multiplying div(u) in F."""
        return self.lambda_visc(rho) + 2.0 * self.mu

    # -- potentials --------------------------------------------------------

    def big_lambda(self, rho):
        """Lambda(rho) = int_{rho_tilde}^{rho} (2 mu + lambda(s))/s ds.

        Normalized so Lambda(rho_tilde) = 0 exactly.  Refuses rho <= 0: the
        logarithmic part diverges at vacuum.
        """
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise DomainError("big_lambda requires strictly positive density")
        log_ratio = np.log(rho / self.rho_tilde)
        log_part = 2.0 * self.mu * log_ratio
        if self.c_lam == 0.0:
            return log_part
        if self.beta == 0.0:
            return log_part + self.c_lam * log_ratio
        # (rho**b - rt**b)/b written via expm1 so the b -> 0 limit is stable
        # and the value at rho_tilde is exactly zero.
        bulk = self.rho_tilde**self.beta * np.expm1(self.beta * log_ratio) / self.beta
        return log_part + self.c_lam * bulk

    def potential_G(self, rho):
        """G(rho) = rho * int_{rho_tilde}^{rho} (P(s) - P(rho_tilde))/s**2 ds.

        Finite on [0, inf); convex with G(rho_tilde) = 0 as its only zero.
        Closed form for gamma > 1:

            A * (rho**gamma + (gamma-1)*rho_tilde**gamma
                 - gamma*rho*rho_tilde**(gamma-1)) / (gamma - 1)

        and for gamma = 1:  A * (rho*log(rho/rho_tilde) + rho_tilde - rho).

        Written in difference form so G(rho_tilde) is exactly 0.0.
        """
        rho = np.asarray(rho, dtype=float)
        _require_nonnegative(rho, "potential_G")
        rt = self.rho_tilde
        if self.gamma == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                rlog = np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0) / rt), 0.0)
            return self.A * (rlog + (rt - rho))
        g = self.gamma
        # rho**g - rt**g written as rt**g * expm1(g*log(rho/rt)): exactly zero
        # at rho = rho_tilde independent of how pow rounds, correct -rt**g
        # limit at rho = 0 (log -> -inf, expm1 -> -1)
        with np.errstate(divide="ignore"):
            pow_diff = rt**g * np.expm1(g * np.log(rho / rt))
        return self.A / (g - 1.0) * (pow_diff - g * rt ** (g - 1.0) * (rho - rt))

    def potential_Gbar(self, rho):
        """Gbar(rho) = A * rho**gamma / (gamma - 1); requires gamma > 1."""
        if self.gamma <= 1.0:
            raise ConfigurationError("potential_Gbar requires gamma > 1")
        rho = np.asarray(rho, dtype=float)
        _require_nonnegative(rho, "potential_Gbar")
        return self.A * rho**self.gamma / (self.gamma - 1.0)

    # -- derived fields ----------------------------------------------------

    def effective_flux_scalar(self, rho, div_u, p_far=None):
        """F = (lambda(rho) + 2 mu) * div_u - P(rho) + p_far.

        ``p_far`` defaults to P(rho_tilde); compact-support scenarios pass 0.
        """
        if p_far is None:
            p_far = float(self.pressure(self.rho_tilde))
        return self.total_visc(rho) * np.asarray(div_u, dtype=float) - self.pressure(rho) + p_far

    def nu_and_P0(self, rho):
        """nu = 1/(2 mu + lambda(rho)) and P0 = nu * (P(rho) - P(rho_tilde))."""
        nu = 1.0 / self.total_visc(rho)
        p0 = nu * (self.pressure(rho) - self.pressure(self.rho_tilde))
        return nu, p0


# -- independent quadrature route -------------------------------------------


def adaptive_simpson(f, a, b, abs_tol=QUAD_ABS_TOL, interval_cap=QUAD_INTERVAL_CAP):
    """Adaptive Simpson quadrature of ``f`` on [a, b].

    Splits intervals until the classic Richardson estimate |S2 - S1| <= 15*tol
    holds on each piece, returning the extrapolated value S2 + (S2 - S1)/15.
    Raises if more than ``interval_cap`` subintervals are needed.  Iterative
    (explicit stack) so deep refinement cannot hit the recursion limit.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    m = 0.5 * (a + b)
    stack = [(a, b, f(a), f(m), f(b), abs_tol)]
    total = 0.0
    used = 1
    while stack:
        x0, x2, f0, f1, f2, tol = stack.pop()
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = f(xl)
        fr = f(xr)
        s_whole = simpson(x0, x2, f0, f1, f2)
        s_left = simpson(x0, xm, f0, fl, f1)
        s_right = simpson(xm, x2, f1, fr, f2)
        err = s_left + s_right - s_whole
        if abs(err) <= 15.0 * tol:
            total += s_left + s_right + err / 15.0
        else:
            used += 2
            if used > interval_cap:
                raise RuntimeError(
                    f"adaptive Simpson exceeded the {interval_cap} interval cap on [{a}, {b}]"
                )
            half = 0.5 * tol
            stack.append((x0, xm, f0, fl, f1, half))
            stack.append((xm, x2, f1, fr, f2, half))
    return sign * total


def big_lambda_quadrature(law: MaterialLaw, rho: float) -> float:
    """Lambda(rho) by direct quadrature of (2 mu + lambda(s))/s."""
    if rho <= 0:
        raise DomainError("big_lambda requires strictly positive density")

    def integrand(s):
        return (2.0 * law.mu + law.c_lam * s**law.beta) / s

    return adaptive_simpson(integrand, law.rho_tilde, rho)


def potential_G_quadrature(law: MaterialLaw, rho: float) -> float:
    """G(rho) by direct quadrature of (P(s) - P(rho_tilde))/s**2."""
    if rho <= 0:
        # The rho -> 0 limit (A*rho_tilde**gamma for gamma > 1) is the closed
        # form's job; the quadrature route needs a positive lower density.
        raise DomainError("potential_G_quadrature requires strictly positive density")
    p_far = float(law.pressure(law.rho_tilde))

    def integrand(s):
        return (law.A * s**law.gamma - p_far) / s**2

    return rho * adaptive_simpson(integrand, law.rho_tilde, rho)


def potential_Gbar_quadrature(law: MaterialLaw, rho: float) -> float:
    """Gbar(rho) by quadrature of P(s)/s**2 from vacuum.

    The substitution s = rho * u**m turns the integrable endpoint singularity
    of s**(gamma-2) at s = 0 into the regular integrand
    A * rho**(gamma-1) * m * u**(m*(gamma-1)-1) on [0, 1]; m is chosen so the
    exponent is nonnegative for the law's gamma.
    """
    if law.gamma <= 1.0:
        raise ConfigurationError("potential_Gbar requires gamma > 1")
    if rho < 0:
        raise DomainError("potential_Gbar requires nonnegative density")
    if rho == 0.0:
        return 0.0

    g = law.gamma
    m = max(4, int(np.ceil(1.0 / (g - 1.0))) + 1)
    e = m * (g - 1.0) - 1.0

    def integrand(u):
        return law.A * rho ** (g - 1.0) * m * u**e

    return rho * adaptive_simpson(integrand, 0.0, 1.0)


def domination_constant(law: MaterialLaw, samples: int = 2001) -> float:
    """Explicit C with (rho - rho_tilde)**2 <= C * G(rho) on [0, rho_bar].

    Scans a dense grid and compares against the removable-singularity limit
    2/G''(rho_tilde) = 2 * rho_tilde**(2-gamma) / (A*gamma), then pads by 5%.
    """
    rho = np.linspace(0.0, law.rho_bar, samples)
    keep = np.abs(rho - law.rho_tilde) > 1e-6 * law.rho_tilde
    g = law.potential_G(rho[keep])
    ratio = (rho[keep] - law.rho_tilde) ** 2 / g
    limit = 2.0 * law.rho_tilde ** (2.0 - law.gamma) / (law.A * law.gamma)
    return 1.05 * max(float(np.max(ratio)), limit)


def _require_nonnegative(rho, where: str):
    if np.any(np.asarray(rho) < 0):
        raise DomainError(f"{where} requires nonnegative density")
