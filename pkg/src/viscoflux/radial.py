"""Radially symmetric solver for 2-D barotropic flow with bulk viscosity.

Space is the disk 0 <= r <= r_max discretized on a staggered grid: densities
live at cell centers r_i = (i + 1/2) dr, radial velocities at cell faces
r = j dr with v = 0 pinned at both r = 0 and r = r_max (Dirichlet far field).
The semidiscrete scheme integrated by forward Euler is

  mass      d/dt (rho_i r_i) = -( r_{i+1} phi_{i+1} - r_i phi_i ) / dr,
            phi_j the donor-cell (upwind) face flux rho_upwind * v_j,
            algebraically the flux-difference-plus-geometric-source form and
            exactly mass conservative by telescoping;

  momentum  dv_j/dt = -v_j dv_upwind - ( P_j - P_{j-1} ) / (dr * rho_f)
                      + ( K_j S_j - K_{j-1} S_{j-1} ) / (dr * rho_f),
            K_i = lambda(rho_i) + 2 mu,
            S_i = (v_{i+1} - v_i)/dr + (v_{i+1} + v_i)/(2 r_i)  (= div u),
            rho_f the arithmetic face density.

Vacuum handling: initial data may be lifted by a delta floor after smoothing
with an even compactly supported mollifier.  Faces whose density falls below
1e-3 * delta (1e-12 when delta = 0) drop the pressure and advection terms and
keep only the viscous update; the face inertia used in the division is
max(rho_f, inertia_floor) everywhere, so a positive configured floor
regularizes the explicit scheme at a true-vacuum support edge the same way the
delta floor regularizes annulus data.  The stability bound mirrors the scheme:

  dt <= safety * min( dr / (|v| + c_s),  dr^2 * max(rho, floor) / (2 K) ).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, IntegrityError
from .material import MaterialLaw

Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadialGrid:
    """Uniform staggered grid on [0, r_max] with n_cells cells.

    Cell centers sit at (i + 1/2) dr, faces at j dr; the arrays are built once
    and cached because the stepping loop touches them every iteration.
    """

    r_max: float
    n_cells: int

    def __post_init__(self):
        if not self.r_max > 0:
            raise ConfigurationError(f"r_max must be positive, got {self.r_max}")
        if self.n_cells < 8:
            raise ConfigurationError(f"need at least 8 cells, got {self.n_cells}")
        dr = self.r_max / self.n_cells
        centers = (np.arange(self.n_cells) + 0.5) * dr
        faces = np.arange(self.n_cells + 1) * dr
        object.__setattr__(self, "_dr", dr)
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_faces", faces)
        object.__setattr__(self, "_inv_2centers", 1.0 / (2.0 * centers))
        object.__setattr__(self, "_inv_centers", 1.0 / centers)

    @property
    def dr(self) -> float:
        return self._dr

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def faces(self) -> np.ndarray:
        return self._faces


@dataclass
class RadialState:
    """Instantaneous solver state: densities at centers, velocities at faces."""

    t: float
    rho: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape[0] != self.rho.shape[0] + 1:
            raise ConfigurationError("velocity must live on faces: len(v) == len(rho) + 1")
        if self.v[0] != 0.0 or self.v[-1] != 0.0:
            raise ConfigurationError("boundary velocities must vanish at r=0 and r=r_max")

    def copy(self) -> "RadialState":
        return RadialState(self.t, self.rho.copy(), self.v.copy())


@dataclass
class Scenario:
    """A complete run description: law, grid, initial data, regularization."""

    law: MaterialLaw
    grid: RadialGrid
    rho0: Profile
    v0: Profile | None = None
    far_field_rho: float | None = None  # defaults to law.rho_tilde
    T: float = 1.0
    cfl_safety: float = 0.45
    delta_floor: float = 0.0
    mollifier_width: float | None = None  # defaults to 2*dr; 0 disables
    inertia_floor: float = 0.0
    label: str = "scenario"

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 0.45:
            raise ConfigurationError(
                "cfl_safety must lie in (0, 0.45]; the donor-cell positivity "
                f"bound fails beyond 0.45 (got {self.cfl_safety})"
            )
        if self.delta_floor < 0:
            raise ConfigurationError("delta_floor must be >= 0")
        if self.inertia_floor < 0:
            raise ConfigurationError("inertia_floor must be >= 0")
        if self.T <= 0:
            raise ConfigurationError("T must be positive")

    @property
    def p_far(self) -> float:
        rho_far = self.law.rho_tilde if self.far_field_rho is None else self.far_field_rho
        return float(self.law.pressure(rho_far))

    @property
    def rho_far(self) -> float:
        return self.law.rho_tilde if self.far_field_rho is None else self.far_field_rho

    @property
    def vacuum_threshold(self) -> float:
        return 1e-3 * self.delta_floor if self.delta_floor > 0 else 1e-12


# -- initial data ------------------------------------------------------------


def _mollifier_quadrature(width: float, points: int = 48):
    """Gauss-Legendre nodes/weights for the even bump kernel on [-w, w].

    Weights are renormalized to sum to one exactly, so convolving a constant
    reproduces it bitwise.
    """
    nodes, weights = np.polynomial.legendre.leggauss(points)
    s = nodes * width  # scale [-1, 1] -> [-w, w]
    u = np.clip(s / width, -1 + 1e-15, 1 - 1e-15)
    kern = np.exp(-1.0 / (1.0 - u * u))
    k = weights * kern
    return s, k / k.sum()


def _convolve_profile(f: Profile, r: np.ndarray, width: float, odd: bool) -> np.ndarray:
    """Sample (j_w * f)(r) with even (density) or odd (velocity) reflection at 0.

    Written in deviation form f(r) + sum_q k_q (f(r - s_q) - f(r)), which
    reproduces locally constant stretches bitwise even though the normalized
    weights only sum to 1 up to rounding.
    """
    s, k = _mollifier_quadrature(width)
    base = np.asarray(f(np.abs(r)), dtype=float)
    if odd:
        base = np.where(r < 0, -base, base)
    out = base.copy()
    for sq, kq in zip(s, k):
        x = r - sq
        sgn = np.where(x < 0, -1.0, 1.0) if odd else 1.0
        out += kq * (sgn * np.asarray(f(np.abs(x)), dtype=float) - base)
    return out


def mollify_initial(scenario: Scenario) -> RadialState:
    """Build the regularized initial state rho_0^delta = j_w * rho_0 + delta.

    The kernel is an even, compactly supported bump of half-width
    ``mollifier_width`` (default 2*dr; 0 skips smoothing).  Density is
    reflected evenly and velocity oddly across r = 0, which keeps v(0) = 0 and
    conserves the radial mass integral up to the O(rho(0) * w^2) fold at the
    origin.  Raises if the smoothed-plus-floored profile exceeds the law's
    density ceiling.
    """
    grid = scenario.grid
    width = 2.0 * grid.dr if scenario.mollifier_width is None else scenario.mollifier_width
    r_c = grid.centers
    r_f = grid.faces

    if width > 0:
        rho = _convolve_profile(scenario.rho0, r_c, width, odd=False)
    else:
        rho = np.asarray(scenario.rho0(r_c), dtype=float).copy()
    rho = rho + scenario.delta_floor

    if scenario.v0 is None:
        v = np.zeros(grid.n_cells + 1)
    elif width > 0:
        v = _convolve_profile(scenario.v0, r_f, width, odd=True)
    else:
        v = np.asarray(scenario.v0(r_f), dtype=float).copy()
    v[0] = 0.0
    v[-1] = 0.0

    if np.max(rho) > scenario.law.rho_bar:
        raise ConfigurationError(
            f"initial density {np.max(rho):.6g} exceeds the ceiling rho_bar={scenario.law.rho_bar}"
        )
    if np.min(rho) < 0:
        raise ConfigurationError("initial density is negative after mollification")
    return RadialState(0.0, rho, v)


# -- time stepping -----------------------------------------------------------


def _pow(x: np.ndarray, e: float) -> np.ndarray:
    if e == 1.0:
        return x.copy()
    if e == 2.0:
        return x * x
    if e == 3.0:
        return x * x * x
    if e == 0.5:
        return np.sqrt(x)
    if e == 1.5:
        return x * np.sqrt(x)
    return x**e


def _material_fields(law: MaterialLaw, rho: np.ndarray):
    """Pressure, total viscosity K = lambda + 2 mu, squared sound speed."""
    p = law.A * _pow(rho, law.gamma)
    k = law.c_lam * _pow(rho, law.beta) + 2.0 * law.mu
    if law.gamma == 1.0:
        c2 = np.full_like(rho, law.A)
    else:
        c2 = law.A * law.gamma * _pow(rho, law.gamma - 1.0)
    return p, k, c2


def _stable_dt_arrays(scenario: Scenario, rho: np.ndarray, v: np.ndarray, k: np.ndarray, c2: np.ndarray) -> float:
    dr = scenario.grid.dr
    c2_f = np.empty(rho.shape[0] + 1)
    c2_f[1:-1] = c2[:-1]
    c2_f[1:-1] += c2[1:]
    c2_f[1:-1] *= 0.5
    c2_f[0] = c2[0]
    c2_f[-1] = c2[-1]
    np.maximum(c2_f, 0.0, out=c2_f)
    cs_f = np.sqrt(c2_f, out=c2_f)
    cs_f += np.abs(v)
    # min_j dr/(|v_j| + c_j) == dr / max_j (|v_j| + c_j); one reduction
    adv_bound = dr / float(np.max(cs_f))

    inertia = np.maximum(rho, scenario.inertia_floor)
    if inertia.min() > 0.0:
        visc_bound = (0.5 * dr * dr) * float(np.min(inertia / k))
    else:
        with np.errstate(divide="ignore"):
            ratio = np.where(inertia > 0, inertia / k, np.inf)
        visc_bound = (0.5 * dr * dr) * float(np.min(ratio))
    bound = min(adv_bound, visc_bound)
    if not np.isfinite(bound) or bound <= 0:
        raise IntegrityError("stability bound is not a positive finite number")
    return scenario.cfl_safety * bound


def stable_dt(state: RadialState, scenario: Scenario) -> float:
    """Explicit stability bound: advective on faces, viscous on cells.

    dt = safety * min( dr/(|v_j| + c_s_j),  dr^2 max(rho_i, floor)/(2 K_i) )
    with c_s = sqrt(P'(rho)) on face-averaged densities.  Cells whose floored
    inertia is zero carry no momentum update and are excluded from the viscous
    minimum.
    """
    _, k, c2 = _material_fields(scenario.law, state.rho)
    return _stable_dt_arrays(scenario, state.rho, state.v, k, c2)


def _apply_step(rho: np.ndarray, v: np.ndarray, dt: float, scenario: Scenario, p: np.ndarray, k: np.ndarray, check: bool = True) -> int:
    """One forward-Euler step, mutating rho and v.  Returns the clip count.

    All right-hand sides are evaluated on the pre-step state (forward Euler);
    the momentum acceleration is formed before the density is advanced.
    """
    grid = scenario.grid
    dr = grid.dr
    inv_dr = 1.0 / dr

    s_div = (v[1:] - v[:-1]) * inv_dr + (v[1:] + v[:-1]) * grid._inv_2centers
    ks = k * s_div
    # q = K*div(u) - P is the viscous flux up to the constant far-field
    # pressure, whose difference drops out of the force
    q = ks - p

    vi = v[1:-1]
    pos = vi > 0
    rho_f = 0.5 * (rho[:-1] + rho[1:])
    eff = np.maximum(rho_f, scenario.inertia_floor)
    if eff.min() > 0.0:
        inv_eff = 1.0 / eff
    else:
        live = eff > 0.0
        inv_eff = np.where(live, 1.0 / np.where(live, eff, 1.0), 0.0)

    force = q[1:] - q[:-1]
    adv = vi * np.where(pos, vi - v[:-2], v[2:] - vi)
    if scenario.delta_floor > 0 or float(rho_f.min()) < scenario.vacuum_threshold:
        vac = rho_f < scenario.vacuum_threshold
        if vac.any():
            # vacuum faces: viscous force only, no pressure, no advection
            np.subtract(ks[1:], ks[:-1], out=force, where=vac)
            adv[vac] = 0.0
    accel = force * inv_eff
    accel -= adv
    accel *= inv_dr

    # donor-cell mass update in conservative (rho * r) form, applied as an
    # increment so a zero flux leaves the density bitwise untouched
    phi = np.where(pos, rho[:-1], rho[1:])
    phi *= vi
    phi *= grid._faces[1:-1]
    dflux = np.empty_like(rho)
    dflux[0] = phi[0]
    np.subtract(phi[1:], phi[:-1], out=dflux[1:-1])
    dflux[-1] = -phi[-1]
    dflux *= grid._inv_centers
    dflux *= dt * inv_dr
    rho -= dflux

    clips = 0
    if scenario.delta_floor == 0.0 and float(rho.min()) < 0.0:
        neg = rho < 0.0
        clips = int(np.count_nonzero(neg))
        rho[neg] = 0.0

    accel *= dt
    vi += accel
    v[0] = 0.0
    v[-1] = 0.0

    if check:
        total = float(rho.sum()) + float(v.sum())
        if not np.isfinite(total):
            raise IntegrityError("NaN or Inf encountered during time step")
    return clips


def step(state: RadialState, scenario: Scenario, dt: float | None = None) -> tuple[RadialState, int]:
    """Advance one forward-Euler step; returns (new state, clip count)."""
    p, k, c2 = _material_fields(scenario.law, state.rho)
    if dt is None:
        dt = _stable_dt_arrays(scenario, state.rho, state.v, k, c2)
    out = state.copy()
    clips = _apply_step(out.rho, out.v, dt, scenario, p, k)
    out.t = state.t + dt
    return out, clips


@dataclass
class RunResult:
    """Snapshots plus bookkeeping from a completed (or truncated) run."""

    scenario: Scenario
    times: np.ndarray          # (S,)
    rho: np.ndarray            # (S, n_cells)
    v: np.ndarray              # (S, n_cells + 1)
    dt_at_snapshots: np.ndarray
    steps: int
    clip_count: int
    rho_min: float
    rho_max: float
    dt_min: float
    dt_max: float
    boundary_activity: float
    partial: bool = False

    @property
    def grid(self) -> RadialGrid:
        return self.scenario.grid

    @property
    def law(self) -> MaterialLaw:
        return self.scenario.law


def run(
    scenario: Scenario,
    dt: float | None = None,
    snapshot_every: int = 1,
    max_wall_seconds: float | None = None,
    initial: RadialState | None = None,
) -> RunResult:
    """Integrate the scenario to time T and collect snapshots.

    ``dt=None`` recomputes the stability bound every step (the final step is
    shortened to land on T exactly); a fixed dt is honored as given, for
    refinement studies.  Snapshots are taken at t=0, every ``snapshot_every``
    steps, and at the final time.  Byte-identical across repeat invocations:
    the loop is single-threaded numpy with no hidden state.
    """
    if snapshot_every < 1:
        raise ConfigurationError("snapshot_every must be >= 1")
    state = mollify_initial(scenario) if initial is None else initial.copy()
    rho, v = state.rho, state.v
    n_tail = max(1, scenario.grid.n_cells // 20)

    times = [state.t]
    rho_snaps = [rho.copy()]
    v_snaps = [v.copy()]
    dt_snaps = [0.0]

    steps = 0
    clips = 0
    rho_min = float(rho.min())
    rho_max = float(rho.max())
    dt_min = np.inf
    dt_max = 0.0
    activity = float(np.max(np.abs(rho[-n_tail:] - scenario.rho_far)))
    partial = False
    t = state.t
    t_end = scenario.T
    started = time.monotonic()

    law = scenario.law
    while t < t_end - 1e-15 * t_end:
        p, k, c2 = _material_fields(law, rho)
        dt_n = _stable_dt_arrays(scenario, rho, v, k, c2) if dt is None else dt
        dt_n = min(dt_n, t_end - t)
        # the NaN sweep runs at snapshot cadence; _stable_dt_arrays raises on
        # a non-finite bound every step anyway
        clips += _apply_step(rho, v, dt_n, scenario, p, k, check=False)
        t += dt_n
        steps += 1
        dt_min = min(dt_min, dt_n)
        dt_max = max(dt_max, dt_n)
        if steps % snapshot_every == 0 or t >= t_end - 1e-15 * t_end:
            if not np.isfinite(float(rho.sum()) + float(v.sum())):
                raise IntegrityError(f"NaN or Inf in the state at t={t}")
            times.append(t)
            rho_snaps.append(rho.copy())
            v_snaps.append(v.copy())
            dt_snaps.append(dt_n)
            rho_min = min(rho_min, float(rho.min()))
            rho_max = max(rho_max, float(rho.max()))
            activity = max(activity, float(np.max(np.abs(rho[-n_tail:] - scenario.rho_far))))
        if max_wall_seconds is not None and steps % 1024 == 0:
            if time.monotonic() - started > max_wall_seconds:
                partial = True
                if times[-1] != t:
                    times.append(t)
                    rho_snaps.append(rho.copy())
                    v_snaps.append(v.copy())
                    dt_snaps.append(dt_n)
                break

    return RunResult(
        scenario=scenario,
        times=np.asarray(times),
        rho=np.asarray(rho_snaps),
        v=np.asarray(v_snaps),
        dt_at_snapshots=np.asarray(dt_snaps),
        steps=steps,
        clip_count=clips,
        rho_min=rho_min,
        rho_max=rho_max,
        dt_min=float(dt_min) if steps else 0.0,
        dt_max=float(dt_max),
        boundary_activity=activity,
        partial=partial,
    )


# -- derived cell fields and snapshot serialization ---------------------------


def divergence_cells(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    """div u at cell centers: dv/dr + v/r on the staggered stencil."""
    dr = grid.dr
    return (v[1:] - v[:-1]) / dr + (v[1:] + v[:-1]) / (2.0 * grid.centers)

def effective_flux_cells(law: MaterialLaw, grid: RadialGrid, rho: np.ndarray, v: np.ndarray, p_far: float) -> np.ndarray:
    """F = (lambda + 2 mu) div u - P + p_far at cell centers."""
    s_div = divergence_cells(grid, v)
    return law.total_visc(rho) * s_div - law.pressure(rho) + p_far


def format_float(x: float) -> str:
    """Fixed 17-significant-digit representation used by every writer."""
    return f"{x:.17g}"


def write_snapshot_csv(path, grid: RadialGrid, law: MaterialLaw, t: float, rho: np.ndarray, v: np.ndarray, p_far: float) -> None:
    """Snapshot dump: header '# t=<time>', then one row per cell."""
    s_div = divergence_cells(grid, v)
    stress = law.total_visc(rho) * s_div
    flux = stress - law.pressure(rho) + p_far
    with open(path, "w") as fh:
        fh.write(f"# t={format_float(t)}\n")
        fh.write("r_center,rho,v_face_left,F,stress\n")
        for i in range(grid.n_cells):
            row = (grid.centers[i], rho[i], v[i], flux[i], stress[i])
            fh.write(",".join(format_float(x) for x in row) + "\n")
