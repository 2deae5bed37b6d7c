"""Particle paths through a recorded radial velocity history.

A run produces velocity snapshots v(t_k, r_j) on the staggered face grid; this
module integrates dX/dt = v(t, X) through that record with classical RK4,
splitting each snapshot interval into a fixed number of substeps so that every
stage lands on interpolable data.  Velocity between snapshots is bilinear:
linear in t between neighbouring snapshots and linear in r between faces.

Paths are clamped at the origin (the radial coordinate cannot go negative) and
truncated, with a flag, when they would leave the recorded time span or the
grid.  Backward integration runs the same scheme with negative substeps.

The regularity probe at the bottom estimates a Holder exponent for the flow
map from pairs of nearby seeds: if two particles start d1 apart and end d2
apart, an exponent alpha with d2 <= K d1^alpha is extracted per pair after
normalizing distances by the domain scale, then the worst pair is reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .radial import RadialGrid, format_float


class VelocityHistory:
    """Face-velocity snapshots on a fixed radial grid, interpolable in (t, r)."""

    def __init__(self, grid: RadialGrid, times, v_faces):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.v = np.asarray(v_faces, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ConfigurationError("a velocity history needs at least two snapshots")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("history times must be strictly increasing")
        if self.v.shape != (self.times.size, grid.n_cells + 1):
            raise ConfigurationError(
                f"velocity snapshots must be shaped {(self.times.size, grid.n_cells + 1)}, "
                f"got {self.v.shape}"
            )

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float, r) -> np.ndarray:
        """v(t, r), linear in both arguments; t must lie inside the record."""
        if t < self.t0 - 1e-12 or t > self.t1 + 1e-12:
            raise DomainError(f"t={t} outside the recorded span [{self.t0}, {self.t1}]")
        t = min(max(t, self.t0), self.t1)
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(k, self.times.size - 2)
        th = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        r = np.asarray(r, dtype=float)
        x = np.clip(r / self.grid.dr, 0.0, self.grid.n_cells)
        j = np.minimum(x.astype(int), self.grid.n_cells - 1)
        w = x - j
        v_lo = (1.0 - w) * self.v[k, j] + w * self.v[k, j + 1]
        v_hi = (1.0 - w) * self.v[k + 1, j] + w * self.v[k + 1, j + 1]
        return (1.0 - th) * v_lo + th * v_hi


@dataclass
class PathResult:
    times: np.ndarray  # (m,)
    radii: np.ndarray  # (m, n_seeds)
    seeds: np.ndarray  # (n_seeds,)
    truncated: bool
    residual: float  # max over seeds of |X(t_end) - X(t_start) - int v dt|


def integrate_path(
    history: VelocityHistory,
    seeds,
    t_start: float | None = None,
    t_end: float | None = None,
    substeps: int = 4,
) -> PathResult:
    """RK4 particle paths for several seeds at once.

    Each snapshot interval is cut into ``substeps`` equal RK4 steps, so output
    times are exactly the snapshot times plus interior stage points; sampling
    never leaves the record.  t_end < t_start integrates backward.
    """
    if substeps < 1:
        raise ConfigurationError("substeps must be a positive integer")
    t_start = history.t0 if t_start is None else float(t_start)
    t_end = history.t1 if t_end is None else float(t_end)
    for t in (t_start, t_end):
        if t < history.t0 - 1e-12 or t > history.t1 + 1e-12:
            raise DomainError(f"requested time {t} outside the recorded span")

    seeds = np.atleast_1d(np.asarray(seeds, dtype=float))
    if np.any(seeds < 0) or np.any(seeds > history.grid.r_max):
        raise DomainError("seeds must lie in [0, r_max]")

    backward = t_end < t_start
    # Build the time ladder: snapshot times inside (t_start, t_end), each
    # interval split into Runge-Kutta substeps of equal length.
    lo, hi = (t_end, t_start) if backward else (t_start, t_end)
    interior = history.times[(history.times > lo + 1e-15) & (history.times < hi - 1e-15)]
    knots = np.concatenate([[lo], interior, [hi]])
    ladder = [knots[0]]
    for a, b in zip(knots[:-1], knots[1:]):
        ladder.extend(np.linspace(a, b, substeps + 1)[1:])
    ladder = np.asarray(ladder)
    if backward:
        ladder = ladder[::-1]

    r_max = history.grid.r_max
    radii = np.empty((ladder.size, seeds.size))
    radii[0] = seeds
    x = seeds.copy()
    truncated = False
    for i in range(ladder.size - 1):
        t, t_next = ladder[i], ladder[i + 1]
        h = t_next - t
        k1 = history.sample(t, x)
        k2 = history.sample(t + 0.5 * h, np.clip(x + 0.5 * h * k1, 0.0, r_max))
        k3 = history.sample(t + 0.5 * h, np.clip(x + 0.5 * h * k2, 0.0, r_max))
        k4 = history.sample(t_next, np.clip(x + h * k3, 0.0, r_max))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(x < 0.0) or np.any(x > r_max):
            truncated = True
            x = np.clip(x, 0.0, r_max)
        radii[i + 1] = x

    # Consistency check: the path increment must match the trapezoid quadrature
    # of the sampled velocity along the path, to integrator accuracy.
    v_along = np.empty_like(radii)
    for i, t in enumerate(ladder):
        v_along[i] = history.sample(t, radii[i])
    quad = np.trapezoid(v_along, ladder, axis=0)
    residual = float(np.max(np.abs(radii[-1] - radii[0] - quad)))

    return PathResult(times=ladder, radii=radii, seeds=seeds, truncated=truncated, residual=residual)


@dataclass
class InterfaceTrack:
    times: np.ndarray
    radii: np.ndarray  # (m, n_interfaces)
    collided: bool
    collision_time: float | None


def track_interfaces(history: VelocityHistory, positions, t_end: float | None = None, substeps: int = 4, min_gap: float | None = None) -> InterfaceTrack:
    """Follow material interfaces; stop at the first pairwise near-collision.

    ``min_gap`` defaults to one cell width: once two tracked radii come that
    close the geometry behind any two-region bookkeeping is gone, so the track
    is cut at that snapshot and flagged.
    """
    positions = np.sort(np.atleast_1d(np.asarray(positions, dtype=float)))
    path = integrate_path(history, positions, t_end=t_end, substeps=substeps)
    gap = history.grid.dr if min_gap is None else float(min_gap)
    collided = False
    collision_time = None
    m = path.times.size
    if positions.size > 1:
        gaps = np.diff(path.radii, axis=1)
        bad = np.any(gaps < gap, axis=1)
        hits = np.nonzero(bad)[0]
        if hits.size:
            m = int(hits[0]) + 1
            collided = True
            collision_time = float(path.times[hits[0]])
    return InterfaceTrack(
        times=path.times[:m],
        radii=path.radii[:m],
        collided=collided,
        collision_time=collision_time,
    )


def ordering_check(radii: np.ndarray) -> tuple[bool, list]:
    """Whether paths seeded in increasing order stay in that order.

    Returns (ok, violations); each violation is (time_index, seed_index) for
    the first few crossings found.
    """
    radii = np.asarray(radii, dtype=float)
    gaps = np.diff(radii, axis=1)
    bad = np.argwhere(gaps < 0.0)
    violations = [(int(i), int(j)) for i, j in bad[:16]]
    return bad.size == 0, violations


# -- regularity probes ---------------------------------------------------------


def log_lipschitz_modulus(x, scale: float = 1.0):
    """m(x) = x (1 - ln(x/scale)) for x < scale, x otherwise; DomainError at x <= 0.

    This is the modulus of continuity under which particle paths through a
    velocity field with bounded divergence structure stay unique; it sits
    between Lipschitz and every Holder class.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("the log-Lipschitz modulus is defined for positive arguments")
    xs = x / scale
    return np.asarray(scale * np.where(xs < 1.0, xs * (1.0 - np.log(xs)), xs))


@dataclass
class HolderProbe:
    alpha: float  # worst-pair exponent, clamped to (0, 1]
    constant: float  # K with d_end <= K * d_start^alpha (normalized distances)
    pairs: int
    d_start: np.ndarray
    d_end: np.ndarray


def holder_exponent_probe(
    history: VelocityHistory,
    centers,
    separations,
    t_end: float | None = None,
    substeps: int = 4,
) -> HolderProbe:
    """Empirical Holder exponent of the flow map from nearby seed pairs.

    For each center c and separation d, the pair (c, c + d) is integrated;
    with distances normalized by the domain scale r_max, a per-pair exponent
      alpha = (1 - ln d_end) / (1 - ln d_start)
    maps the observed contraction or spreading onto the log-Lipschitz modulus
    scale (alpha = 1 for rigid transport).  The reported exponent is the
    minimum over pairs, clamped to (0, 1]; K is the matching sup of
    d_end / d_start^alpha.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    separations = np.atleast_1d(np.asarray(separations, dtype=float))
    if separations.size not in (1, centers.size):
        raise ConfigurationError("separations must be scalar-like or match centers")
    if np.any(separations <= 0):
        raise DomainError("pair separations must be positive")
    seeds = np.concatenate([centers, centers + np.broadcast_to(separations, centers.shape)])
    path = integrate_path(history, seeds, t_end=t_end, substeps=substeps)
    n = centers.size
    d_ref = history.grid.r_max
    d0 = np.abs(path.radii[0, n:] - path.radii[0, :n]) / d_ref
    d1 = np.abs(path.radii[-1, n:] - path.radii[-1, :n]) / d_ref
    if np.any(d0 >= 1.0) or np.any(d0 <= 0.0):
        raise DomainError("normalized start separations must lie in (0, 1)")

    alphas = np.empty(n)
    for i in range(n):
        if d1[i] <= 0.0:
            alphas[i] = 1.0  # coincident ends: no spreading observed
        elif d1[i] >= 1.0:
            alphas[i] = np.finfo(float).tiny  # spread to domain scale: no exponent
        else:
            alphas[i] = (1.0 - np.log(d1[i])) / (1.0 - np.log(d0[i]))
    alpha = float(np.min(np.clip(alphas, np.finfo(float).tiny, 1.0)))
    with np.errstate(divide="ignore"):
        ks = np.where(d1 > 0.0, d1 / d0**alpha, 0.0)
    constant = float(np.max(ks)) if n else 0.0
    return HolderProbe(alpha=alpha, constant=constant, pairs=n, d_start=d0 * d_ref, d_end=d1 * d_ref)


# -- CSV output ----------------------------------------------------------------


def write_paths_csv(path, result: PathResult) -> None:
    lines = ["t," + ",".join(f"r_seed_{format_float(s)}" for s in result.seeds)]
    for i, t in enumerate(result.times):
        lines.append(",".join([format_float(t)] + [format_float(r) for r in result.radii[i]]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_interfaces_csv(path, track: InterfaceTrack) -> None:
    """Interface dump: t, a, b, collision_flag (generic names beyond two curves).

    The track is cut at the first near-collision, so the flag can only raise
    on the final row.
    """
    k = track.radii.shape[1]
    names = ["a", "b"] if k == 2 else [f"interface_{j}" for j in range(k)]
    lines = ["t," + ",".join(names) + ",collision_flag"]
    last = track.times.size - 1
    for i, t in enumerate(track.times):
        flag = "1" if (track.collided and i == last) else "0"
        lines.append(",".join([format_float(t)] + [format_float(r) for r in track.radii[i]] + [flag]))
    Path(path).write_text("\n".join(lines) + "\n")
