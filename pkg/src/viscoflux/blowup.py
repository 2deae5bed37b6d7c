"""Finite-time breakdown machinery for compact-support radial runs.

For compactly supported density and ``1 < beta <= gamma`` the weighted
virial

    H(t) = int (r - (1+t) v)^2 rho dx + (2A/(gamma-1)) (1+t)^2 int rho^gamma dx

(measure dx = 2*pi*r dr throughout) satisfies a differential inequality
whose right side involves only int rho^gamma dx and the area of the
initial support.  A Gronwall pass turns the inequality into an explicit
decaying bound G(t) on int A rho^gamma dx; Hoelder's inequality then says
total mass can be at most (G(t)/A)^(1/gamma) * area^((gamma-1)/gamma).
Since G decays to zero while mass is conserved, the two collide at a
finite time T*, an upper bound on the lifespan of any smooth solution
with that data.  This module evaluates the virial and its rate on solver
output, the discrete margin of the inequality, and T*.

The continuum derivation mixes area integrals with bare r dr integrals;
everything here uses the area measure consistently and reads the
stand-alone support-measure factor in the inequality as the initial
support area.  Rates integrate over the fluid region only (cells with
rho > 0): the identity behind the direct-rate formula lives on the
support, and the solver's velocity in vacuum cells carries no mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError
from .material import MaterialLaw, adaptive_simpson
from .radial import RadialGrid, RunResult, divergence_cells

TWO_PI = 2.0 * math.pi

# Dense geometric scan used to bracket the first threshold crossing of the
# decay bound before polishing with a root finder.  The bound can rise
# before it falls when beta < gamma, so a plain doubling search could step
# over an early crossing.
_SCAN_LO = 1e-9
_SCAN_HI = 1e12
_SCAN_POINTS = 8193


def _require_gamma(law: MaterialLaw) -> None:
    if law.gamma <= 1.0:
        raise ConfigurationError(
            "breakdown functionals need gamma > 1; the internal-energy "
            f"weight 2A/(gamma-1) is undefined at gamma = {law.gamma}"
        )


def _require_hypotheses(law: MaterialLaw) -> None:
    _require_gamma(law)
    if not 1.0 < law.beta <= law.gamma:
        raise ConfigurationError(
            "the breakdown argument needs 1 < beta <= gamma, got "
            f"beta = {law.beta}, gamma = {law.gamma}"
        )
    if not law.c_lam > 0.0:
        raise ConfigurationError(
            f"the breakdown argument needs c_lam > 0, got {law.c_lam}"
        )


def _center_velocity(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape == (grid.n_cells + 1,):
        return 0.5 * (v[:-1] + v[1:])
    if v.shape == (grid.n_cells,):
        return v
    raise DomainError(
        f"velocity must live on faces ({grid.n_cells + 1},) or cells "
        f"({grid.n_cells},), got shape {v.shape}"
    )


def virial_value(law: MaterialLaw, grid: RadialGrid, rho, v, t: float) -> float:
    """Weighted virial of one snapshot under the area measure 2*pi*r dr.

    ``v`` may be face- or cell-centered; faces are averaged to centers, so
    a velocity exactly linear in r keeps the recentred kinetic term at
    zero to roundoff.
    """
    _require_gamma(law)
    rho = np.asarray(rho, dtype=float)
    vc = _center_velocity(grid, v)
    w = 1.0 + float(t)
    coef = 2.0 * law.A / (law.gamma - 1.0) * w * w
    r = grid.centers
    kinetic = (r - w * vc) ** 2 * rho
    internal = coef * rho**law.gamma
    return float(np.sum((kinetic + internal) * TWO_PI * r) * grid.dr)


def virial_value_profile(
    law: MaterialLaw,
    rho_of_r,
    v_of_r=None,
    t: float = 0.0,
    r_support: float = 1.0,
    abs_tol: float = 1e-12,
) -> float:
    """Virial of an exact radial profile by adaptive quadrature.

    Integrates over [0, r_support] only, so a profile with a density
    discontinuity at its support edge stays smooth inside the quadrature
    window.  Used to seed the contradiction-time solve with an initial
    virial accurate to quadrature tolerance rather than grid resolution.
    """
    _require_gamma(law)
    if not r_support > 0.0:
        raise DomainError(f"r_support must be positive, got {r_support}")
    w = 1.0 + float(t)
    coef = 2.0 * law.A / (law.gamma - 1.0) * w * w

    def integrand(r: float) -> float:
        rho = float(rho_of_r(r))
        vel = 0.0 if v_of_r is None else float(v_of_r(r))
        return TWO_PI * r * ((r - w * vel) ** 2 * rho + coef * rho**law.gamma)

    return adaptive_simpson(integrand, 0.0, r_support, abs_tol=abs_tol)


def support_radius(grid: RadialGrid, rho, eps: float) -> float:
    """Outer face of the outermost cell with density above ``eps``."""
    rho = np.asarray(rho, dtype=float)
    filled = np.nonzero(rho > eps)[0]
    if filled.size == 0:
        return 0.0
    return float(grid.faces[filled[-1] + 1])


@dataclass(frozen=True)
class MarginReport:
    """Discrete margin of the virial decay inequality on a run.

    ``h_rate`` is the centered difference of the virial series at interior
    snapshot times; ``h_rate_direct`` evaluates the instantaneous flux-form
    rate at the same times.  ``margin = rhs - h_rate`` should stay above a
    small resolution-dependent negative floor: the continuum inequality
    says it is nonnegative.
    """

    times: np.ndarray
    h_rate: np.ndarray
    h_rate_direct: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray


def _integrals(law: MaterialLaw, grid: RadialGrid, rho, v):
    """Pressure-like and viscous integrals of one snapshot, area measure."""
    rho = np.asarray(rho, dtype=float)
    weight = TWO_PI * grid.centers * grid.dr
    i_gamma = float(np.sum(rho**law.gamma * weight))
    strain = divergence_cells(grid, v)
    fluid = rho > 0.0
    lam = law.lambda_visc(rho[fluid])
    i_lam_strain = float(np.sum(lam * strain[fluid] * weight[fluid]))
    i_diss = float(
        np.sum(law.total_visc(rho[fluid]) * strain[fluid] ** 2 * weight[fluid])
    )
    return i_gamma, i_lam_strain, i_diss


def _rhs_value(law: MaterialLaw, t: float, i_gamma: float, area0: float) -> float:
    g, b, c = law.gamma, law.beta, law.c_lam
    pressure_term = 4.0 * (2.0 - g) * (1.0 + t) / (g - 1.0) * law.A * i_gamma
    return pressure_term + 2.0 * c * b / g * i_gamma + 2.0 * c * (g - b) / g * area0


def _direct_rate(
    law: MaterialLaw, t: float, i_gamma: float, i_lam_strain: float, i_diss: float
) -> float:
    g = law.gamma
    w = 1.0 + t
    return (
        4.0 * (2.0 - g) * w / (g - 1.0) * law.A * i_gamma
        + 4.0 * w * i_lam_strain
        - 2.0 * w * w * i_diss
    )


def virial_margin(result: RunResult) -> MarginReport:
    """Margin series of the decay inequality for a compact-support run."""
    scenario = result.scenario
    law = result.law
    _require_hypotheses(law)
    if scenario.far_field_rho != 0.0:
        raise ConfigurationError(
            "the virial inequality applies to compact-support runs "
            f"(far-field density 0), got far_field_rho = {scenario.far_field_rho}"
        )
    times = np.asarray(result.times, dtype=float)
    if times.size < 3:
        raise DomainError(
            f"need at least 3 snapshots for centered rates, got {times.size}"
        )
    grid = result.grid
    area0 = math.pi * support_radius(grid, result.rho[0], scenario.vacuum_threshold) ** 2

    h = np.empty(times.size)
    rhs = np.empty(times.size)
    direct = np.empty(times.size)
    for k, t in enumerate(times):
        rho_k, v_k = result.rho[k], result.v[k]
        h[k] = virial_value(law, grid, rho_k, v_k, t)
        i_gamma, i_lam_strain, i_diss = _integrals(law, grid, rho_k, v_k)
        rhs[k] = _rhs_value(law, t, i_gamma, area0)
        direct[k] = _direct_rate(law, t, i_gamma, i_lam_strain, i_diss)

    h_rate = (h[2:] - h[:-2]) / (times[2:] - times[:-2])
    interior = slice(1, -1)
    return MarginReport(
        times=times[interior].copy(),
        h_rate=h_rate,
        h_rate_direct=direct[interior].copy(),
        rhs=rhs[interior].copy(),
        margin=rhs[interior] - h_rate,
    )


@dataclass(frozen=True)
class ContradictionResult:
    """Decay bound and the time where it contradicts mass conservation.

    ``threshold`` is A * M0^gamma / area0^(gamma-1); ``bound(t)`` is the
    Gronwall envelope of int A rho^gamma dx.  Past ``t_star`` the envelope
    is too small to carry the conserved mass on the available area.
    """

    t_star: float
    threshold: float
    h0: float
    m0: float
    area0: float
    law: MaterialLaw

    def bound(self, t):
        """Decay envelope G(t) of the pressure integral, vectorized in t."""
        g, b, c, A = self.law.gamma, self.law.beta, self.law.c_lam, self.law.A
        t = np.asarray(t, dtype=float)
        w = 1.0 + t
        value = 0.5 * (g - 1.0) * w ** (2.0 - 2.0 * g) * self.h0
        if g > b:
            if abs(2.0 * g - 3.0) < 1e-14:
                aux = w ** (4.0 - 2.0 * g) * np.log(w)
            else:
                aux = w * (1.0 - w ** (3.0 - 2.0 * g)) / (2.0 * g - 3.0)
            value = value + (
                c * (g - 1.0) * (g - b) / g
                * self.area0
                * math.exp(2.0 * c * b * (g - 1.0) / (A * g))
                * aux
                * w**-2.0
            )
        if value.ndim == 0:
            return float(value)
        return value


def contradiction_time(
    h0: float, law: MaterialLaw, m0: float, area0: float
) -> ContradictionResult:
    """Smallest t where the decay bound undercuts the conserved mass.

    For beta = gamma the bound is a pure power law and the crossing is
    solved in closed form; otherwise the first crossing is bracketed on a
    dense geometric grid (the bound need not be monotone near t = 0 when
    beta < gamma) and polished with a root finder.
    """
    _require_hypotheses(law)
    h0 = float(h0)
    m0 = float(m0)
    area0 = float(area0)
    if h0 < 0.0:
        raise DomainError(f"initial virial must be nonnegative, got {h0}")
    if not area0 > 0.0:
        raise DomainError(f"support area must be positive, got {area0}")
    if not m0 > 0.0:
        raise DomainError(
            "no contradiction reachable: zero mass satisfies the bound forever "
            f"(m0 = {m0})"
        )
    g = law.gamma
    threshold = law.A * m0**g / area0 ** (g - 1.0)
    result = ContradictionResult(
        t_star=0.0, threshold=threshold, h0=h0, m0=m0, area0=area0, law=law
    )

    if law.beta == g:
        arg = 0.5 * (g - 1.0) * h0 / threshold
        t_star = 0.0 if arg <= 1.0 else arg ** (1.0 / (2.0 * g - 2.0)) - 1.0
        return ContradictionResult(
            t_star=t_star, threshold=threshold, h0=h0, m0=m0, area0=area0, law=law
        )

    def gap(t: float) -> float:
        return result.bound(t) - threshold

    if gap(0.0) <= 0.0:
        return result
    scan = np.geomspace(_SCAN_LO, _SCAN_HI, _SCAN_POINTS)
    below = np.nonzero(result.bound(scan) < threshold)[0]
    if below.size == 0:
        raise DomainError(
            "no contradiction reachable: the decay bound stays above the "
            "mass threshold over the scanned window"
        )
    hi = scan[below[0]]
    lo = 0.0 if below[0] == 0 else scan[below[0] - 1]
    t_star = float(brentq(gap, lo, hi, xtol=1e-15, rtol=8.9e-16))
    return ContradictionResult(
        t_star=t_star, threshold=threshold, h0=h0, m0=m0, area0=area0, law=law
    )


@dataclass(frozen=True)
class BlowupReport:
    """Virial series, inequality margins, decay bound, and predicted T*.

    ``h`` and ``rhs`` cover every snapshot; the differenced rate and the
    margin live on the interior times ``times[1:-1]``.  ``support_r``
    tracks the discrete support edge, which the scheme lets creep outward
    by O(dr) per step; it is reported rather than assumed frozen.
    """

    times: np.ndarray
    h: np.ndarray
    h_rate: np.ndarray
    h_rate_direct: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    bound: np.ndarray
    support_r: np.ndarray
    mass: float
    area0: float
    threshold: float
    t_star: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))


def blowup_report(result: RunResult) -> BlowupReport:
    """Assemble the full breakdown report for a compact-support run."""
    margin = virial_margin(result)
    scenario = result.scenario
    law = result.law
    grid = result.grid
    times = np.asarray(result.times, dtype=float)
    eps = scenario.vacuum_threshold

    weight = TWO_PI * grid.centers * grid.dr
    mass = float(np.sum(np.asarray(result.rho[0]) * weight))
    r0 = support_radius(grid, result.rho[0], eps)
    area0 = math.pi * r0 * r0

    h = np.array(
        [
            virial_value(law, grid, result.rho[k], result.v[k], t)
            for k, t in enumerate(times)
        ]
    )
    support = np.array([support_radius(grid, result.rho[k], eps) for k in range(times.size)])
    rhs_full = np.empty(times.size)
    for k, t in enumerate(times):
        i_gamma, _, _ = _integrals(law, grid, result.rho[k], result.v[k])
        rhs_full[k] = _rhs_value(law, t, i_gamma, area0)

    prediction = contradiction_time(h[0], law, mass, area0)
    return BlowupReport(
        times=times.copy(),
        h=h,
        h_rate=margin.h_rate,
        h_rate_direct=margin.h_rate_direct,
        rhs=rhs_full,
        margin=margin.margin,
        bound=np.asarray(prediction.bound(times)),
        support_r=support,
        mass=mass,
        area0=area0,
        threshold=prediction.threshold,
        t_star=prediction.t_star,
    )
