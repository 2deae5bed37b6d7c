"""Spectral toolkit on the flat torus [0, 2pi)^2.

Fields are real (n, n) arrays sampled at x_i = 2pi*i/n, y_j = 2pi*j/n with n a
power of two; vectors are (2, n, n).  Derivatives are exact Fourier
multipliers, so the structural identities of the effective-flux decomposition

    rho * udot = grad F + mu * div w + rho * f,
    Delta F    = div(rho * udot - rho * f),
    (lambda(rho) + 2 mu) * div u = F + P(rho) - P(rho_tilde)   (pointwise)

hold to arithmetic roundoff when f is manufactured from the first line.  Here
w is the antisymmetric gradient w^{jk} = d_k u^j - d_j u^k (so in 2-D the
single component w^{12} carries everything and div div w vanishes exactly),
and udot = u_t + (u . grad) u is the material acceleration.  No time
integration happens in this module; histories are supplied as snapshot lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, UnsupportedCombination
from .material import MaterialLaw


def _check_field_shape(arr: np.ndarray) -> int:
    n = arr.shape[-1]
    if arr.shape[-2] != n:
        raise ConfigurationError(f"planar fields must be square, got {arr.shape}")
    if n & (n - 1) or n < 4:
        raise ConfigurationError(f"grid size must be a power of two >= 4, got {n}")
    return n


class PlanarGrid:
    """Cached Fourier multipliers for an n-by-n torus grid."""

    def __init__(self, n: int):
        if n & (n - 1) or n < 4:
            raise ConfigurationError(f"grid size must be a power of two >= 4, got {n}")
        self.n = n
        k = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers
        self.kx = k[:, None]
        self.ky = k[None, :]
        self.k2 = self.kx**2 + self.ky**2
        x = 2.0 * np.pi * np.arange(n) / n
        self.x = x[:, None] + np.zeros((1, n))
        self.y = np.zeros((n, 1)) + x[None, :]
        self.dA = (2.0 * np.pi / n) ** 2

    def dx(self, f: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(1j * self.kx * np.fft.fft2(f)))

    def dy(self, f: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(1j * self.ky * np.fft.fft2(f)))

    def grad(self, f: np.ndarray) -> np.ndarray:
        return np.stack([self.dx(f), self.dy(f)])

    def div(self, u: np.ndarray) -> np.ndarray:
        return self.dx(u[0]) + self.dy(u[1])

    def grad_perp(self, psi: np.ndarray) -> np.ndarray:
        return np.stack([-self.dy(psi), self.dx(psi)])

    def solve_poisson(self, g: np.ndarray) -> np.ndarray:
        """Zero-mean solution of Delta phi = g - <g>."""
        ghat = np.fft.fft2(g)
        with np.errstate(divide="ignore", invalid="ignore"):
            phat = np.where(self.k2 > 0, ghat / np.where(self.k2 > 0, -self.k2, 1.0), 0.0)
        return np.real(np.fft.ifft2(phat))

    def integral(self, f: np.ndarray) -> float:
        return float(f.sum()) * self.dA


def grid_for(arr: np.ndarray) -> PlanarGrid:
    return PlanarGrid(_check_field_shape(arr))


# -- field operators ----------------------------------------------------------


def vorticity(u: np.ndarray, grid: PlanarGrid | None = None) -> np.ndarray:
    """The (1,2) component of the antisymmetric gradient: d_y u^1 - d_x u^2."""
    grid = grid or grid_for(u)
    return grid.dy(u[0]) - grid.dx(u[1])


def effective_flux_field(
    law: MaterialLaw, rho: np.ndarray, u: np.ndarray, grid: PlanarGrid | None = None, p_far: float | None = None
) -> np.ndarray:
    """F = (lambda(rho) + 2 mu) div u - P(rho) + p_far on the torus."""
    grid = grid or grid_for(rho)
    if p_far is None:
        p_far = float(law.pressure(law.rho_tilde))
    return law.total_visc(rho) * grid.div(u) - law.pressure(rho) + p_far


def material_acceleration(u: np.ndarray, u_t: np.ndarray, grid: PlanarGrid | None = None) -> np.ndarray:
    """udot = u_t + (u . grad) u, componentwise."""
    grid = grid or grid_for(u)
    conv = np.stack([u[0] * grid.dx(u[c]) + u[1] * grid.dy(u[c]) for c in (0, 1)])
    return u_t + conv


def _div_w(u: np.ndarray, grid: PlanarGrid) -> np.ndarray:
    """(div w)^j = d_k w^{jk} using only the single 2-D component w^{12}."""
    w12 = vorticity(u, grid)
    return np.stack([grid.dy(w12), -grid.dx(w12)])


# -- decomposition verification ------------------------------------------------


@dataclass
class DecompositionReport:
    """Max-norm residuals of the three structural identities."""

    residual_momentum: float
    residual_poisson: float
    residual_elliptic_u: float

    def within(self, tol_momentum: float, tol_poisson: float, tol_elliptic: float) -> bool:
        return (
            self.residual_momentum <= tol_momentum
            and self.residual_poisson <= tol_poisson
            and self.residual_elliptic_u <= tol_elliptic
        )


def manufactured_forcing(
    law: MaterialLaw, rho: np.ndarray, u: np.ndarray, u_t: np.ndarray, grid: PlanarGrid | None = None
) -> np.ndarray:
    """f = (rho*udot - grad F - mu*div w)/rho; the forcing that closes momentum.

    Refuses fields where rho comes within 1e-10 of vacuum: dividing the
    residual by a vanishing density is not meaningful.
    """
    grid = grid or grid_for(rho)
    if float(np.min(rho)) <= 1e-10:
        raise UnsupportedCombination(
            "manufactured forcing requires density bounded away from vacuum"
        )
    udot = material_acceleration(u, u_t, grid)
    flux = effective_flux_field(law, rho, u, grid)
    resid = rho * udot - grid.grad(flux) - law.mu * _div_w(u, grid)
    return resid / rho


def verify_decomposition(
    law: MaterialLaw,
    rho: np.ndarray,
    u: np.ndarray,
    u_t: np.ndarray,
    f: np.ndarray | None = None,
    grid: PlanarGrid | None = None,
) -> DecompositionReport:
    """Residuals of the momentum, Poisson, and elliptic identities.

    With ``f=None`` the forcing is manufactured, making all three identities
    hold to spectral roundoff; a supplied f measures how far the given fields
    are from solving the system.
    """
    grid = grid or grid_for(rho)
    if f is None:
        f = manufactured_forcing(law, rho, u, u_t, grid)
    udot = material_acceleration(u, u_t, grid)
    flux = effective_flux_field(law, rho, u, grid)

    mom = rho * udot - grid.grad(flux) - law.mu * _div_w(u, grid) - rho * f
    residual_momentum = float(np.max(np.abs(mom)))

    rhs = grid.div(rho * udot - rho * f)
    flux_recovered = grid.solve_poisson(rhs)
    flux_centered = flux - grid.integral(flux) / (2.0 * np.pi) ** 2
    residual_poisson = float(np.max(np.abs(flux_recovered - flux_centered)))

    p_far = float(law.pressure(law.rho_tilde))
    div_u_recovered = (flux + law.pressure(rho) - p_far) / law.total_visc(rho)
    residual_elliptic = float(np.max(np.abs(div_u_recovered - grid.div(u))))

    return DecompositionReport(residual_momentum, residual_poisson, residual_elliptic)


# -- data functionals ----------------------------------------------------------


@dataclass
class PlanarHistory:
    """Snapshot sequence (t_k, rho_k, u_k, du/dt_k) on one torus grid."""

    times: np.ndarray
    rho: list
    u: list
    u_t: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("history times must be strictly increasing")
        if not (len(self.rho) == len(self.u) == len(self.u_t) == self.times.size):
            raise ConfigurationError("history field lists must match the time grid")


def sigma_weight(t) -> np.ndarray:
    """The short-time weight sigma(t) = min(1, t)."""
    return np.minimum(1.0, np.asarray(t, dtype=float))


@dataclass
class DataFunctionals:
    C0: float
    A1: float
    A2: float


def data_functionals(law: MaterialLaw, rho0: np.ndarray, u0: np.ndarray, history: PlanarHistory | None = None) -> DataFunctionals:
    """Initial energy C0 and the sigma-weighted regularity sums A1, A2.

    C0 = int( rho0 |u0|^2 / 2 + G(rho0) ) dx;
    A1 = sup_t sigma int |grad u|^2 + int_0^T int sigma rho |udot|^2;
    A2 = sup_t sigma^2 int rho |udot|^2 + int_0^T int sigma^2 |grad udot|^2,
    time integrals by the trapezoid rule over the snapshot grid.
    """
    grid = grid_for(rho0)
    c0 = grid.integral(0.5 * rho0 * (u0[0] ** 2 + u0[1] ** 2) + law.potential_G(rho0))
    if history is None:
        return DataFunctionals(c0, 0.0, 0.0)

    sig = sigma_weight(history.times)
    grad_sq = []
    rho_udot_sq = []
    grad_udot_sq = []
    for rho_k, u_k, ut_k in zip(history.rho, history.u, history.u_t):
        udot = material_acceleration(u_k, ut_k, grid)
        gu = sum(grid.integral(grid.dx(u_k[c]) ** 2 + grid.dy(u_k[c]) ** 2) for c in (0, 1))
        grad_sq.append(gu)
        rho_udot_sq.append(grid.integral(rho_k * (udot[0] ** 2 + udot[1] ** 2)))
        gud = sum(grid.integral(grid.dx(udot[c]) ** 2 + grid.dy(udot[c]) ** 2) for c in (0, 1))
        grad_udot_sq.append(gud)
    grad_sq = np.asarray(grad_sq)
    rho_udot_sq = np.asarray(rho_udot_sq)
    grad_udot_sq = np.asarray(grad_udot_sq)

    a1 = float(np.max(sig * grad_sq) + np.trapezoid(sig * rho_udot_sq, history.times))
    a2 = float(np.max(sig**2 * rho_udot_sq) + np.trapezoid(sig**2 * grad_udot_sq, history.times))
    return DataFunctionals(c0, a1, a2)


# -- field I/O -----------------------------------------------------------------


def save_field(prefix, arr: np.ndarray, kind: str) -> None:
    """Write <prefix>.bin (raw little-endian float64, C order) + JSON sidecar."""
    if kind not in ("scalar", "vector"):
        raise ConfigurationError(f"field kind must be 'scalar' or 'vector', got {kind!r}")
    n = _check_field_shape(arr)
    prefix = Path(prefix)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    arr.tofile(prefix.with_suffix(".bin"))
    sidecar = {"n": n, "kind": kind}
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_field(prefix) -> tuple[np.ndarray, str]:
    """Read a field written by save_field; returns (array, kind)."""
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    n = int(meta["n"])
    kind = meta["kind"]
    raw = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    shape = (2, n, n) if kind == "vector" else (n, n)
    if raw.size != int(np.prod(shape)):
        raise ConfigurationError(
            f"field file has {raw.size} values, expected {int(np.prod(shape))} for {kind} n={n}"
        )
    return raw.reshape(shape), kind
