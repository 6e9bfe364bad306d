"""Variational capacities on the torus and the gauge construction.

Two flavors.  The inhomogeneous capacity minimizes the full Sobolev
energy ||grad u||^2 + ||u||^2 over u >= 1 on the set and is well posed
on the torus as is.  The homogeneous (Dirichlet-only) energy admits the
trivial competitor u == 1, so it needs a grounding convention: we
require u = 0 on a ball of radius L/8 antipodal to the set's centroid
and minimize the condenser energy.  Values therefore carry an O(s/L)
domain correction relative to free space; a single grounded cell would
instead make the value collapse to the ground cell's own vanishing
capacity under refinement, which is why a ball is used.

Both problems are solved in charge space.  Writing u = G sigma (+ c0
for the grounded problem, where G drops the zero mode), the obstacle
problem reduces to an equality-constrained solve on the active cells
with sign conditions on the charge; a preconditioned conjugate-gradient
inner loop and an active-set outer loop drive the KKT residual below
tolerance.  With u = 1 on the set and u = 0 on the ground, the Dirichlet
energy, the charge mass on the set, and the reported value coincide up
to solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, _torus_dist_sq
from .torus import (
    Grid,
    ScalarField,
    _fftn,
    _ifftn,
    dirichlet_norm,
    kappa_sq,
)

__all__ = [
    "CapacityResult",
    "CompactSet",
    "GaugeReport",
    "SolverError",
    "ball_set",
    "capacity",
    "cube_set",
    "equilibrium_potential",
    "gauge_check",
]

FLAVORS = ("homogeneous", "inhomogeneous")


class SolverError(RuntimeError):
    """Obstacle-problem iteration failed to reach tolerance."""


@dataclass(frozen=True)
class CompactSet:
    """Set of grid cells given by a boolean mask."""

    grid: Grid
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask)
        if mask.shape != self.grid.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "mask", mask.astype(bool))

    @classmethod
    def from_field(cls, field: ScalarField, level: float = 0.5) -> "CompactSet":
        return cls(field.grid, field.values.real > level)

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def centroid_cell(self) -> tuple[int, ...]:
        """Mass center of the cells, circular per axis."""
        if self.count == 0:
            raise ValueError("empty set has no centroid")
        n = self.grid.points_per_axis
        idx = np.nonzero(self.mask)
        out = []
        for axis_idx in idx:
            theta = axis_idx * (2.0 * np.pi / n)
            mean = np.arctan2(np.sin(theta).mean(), np.cos(theta).mean())
            out.append(int(round(mean / (2.0 * np.pi) * n)) % n)
        return tuple(out)


def ball_set(grid: Grid, center: tuple[float, ...], radius: float) -> CompactSet:
    """Cells whose centers lie within torus distance radius of center."""
    shift = tuple(int(round(c / grid.spacing)) % grid.points_per_axis for c in center)
    dist_sq = np.roll(_torus_dist_sq(grid), shift, axis=range(grid.dim))
    return CompactSet(grid, dist_sq <= radius * radius)


def cube_set(grid: Grid, corner: tuple[float, ...], side: float) -> CompactSet:
    """Cells whose centers lie in the axis cube [corner, corner + side)."""
    n, h = grid.points_per_axis, grid.spacing
    mask = np.ones(grid.shape, dtype=bool)
    cells = max(int(round(side / h)), 1)
    for axis in range(grid.dim):
        start = int(round(corner[axis] / h)) % n
        line = np.zeros(n, dtype=bool)
        line[(start + np.arange(cells)) % n] = True
        shape = [1] * grid.dim
        shape[axis] = n
        mask &= line.reshape(shape)
    return CompactSet(grid, mask)


@dataclass(frozen=True)
class CapacityResult:
    value: float
    potential: ScalarField
    measure: DiscreteMeasure
    kkt_residual: float
    flavor: str
    iterations: int
    ground: CompactSet | None = None


def _green_apply(grid: Grid, values: np.ndarray, inhomogeneous: bool) -> np.ndarray:
    ks = kappa_sq(grid)
    if inhomogeneous:
        symbol = 1.0 / (1.0 + ks)
    else:
        with np.errstate(divide="ignore"):
            symbol = np.where(ks > 0.0, 1.0 / np.where(ks > 0.0, ks, 1.0), 0.0)
    return _ifftn(_fftn(values) * symbol).real


def _inverse_apply(grid: Grid, values: np.ndarray, inhomogeneous: bool) -> np.ndarray:
    ks = kappa_sq(grid)
    symbol = 1.0 + ks if inhomogeneous else ks
    return _ifftn(_fftn(values) * symbol).real


class _ChargeSystem:
    """K sigma = target on a flat list of active cells, via grid FFTs."""

    def __init__(self, grid: Grid, flat_idx: np.ndarray, inhomogeneous: bool,
                 zero_sum: bool):
        self.grid = grid
        self.idx = flat_idx
        self.inhomogeneous = inhomogeneous
        self.zero_sum = zero_sum
        self._buf = np.zeros(grid.npoints)

    def _project(self, vec: np.ndarray) -> np.ndarray:
        return vec - vec.mean() if self.zero_sum else vec

    def _on_grid(self, vec: np.ndarray, apply) -> np.ndarray:
        self._buf[:] = 0.0
        self._buf[self.idx] = vec
        out = apply(self.grid, self._buf.reshape(self.grid.shape),
                    self.inhomogeneous)
        return out.reshape(-1)[self.idx]

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        return self._project(self._on_grid(self._project(vec), _green_apply))

    def precond(self, vec: np.ndarray) -> np.ndarray:
        return self._project(self._on_grid(self._project(vec), _inverse_apply))

    def solve(self, target: np.ndarray, rtol: float, max_iter: int):
        rhs = self._project(target)
        sigma = np.zeros_like(rhs)
        r = rhs.copy()
        z = self.precond(r)
        p = z.copy()
        rz = float(r @ z)
        bound = rtol * max(float(np.linalg.norm(rhs)), 1e-300)
        iters = 0
        while float(np.linalg.norm(r)) > bound and iters < max_iter:
            Kp = self.matvec(p)
            alpha = rz / float(p @ Kp)
            sigma += alpha * p
            r -= alpha * Kp
            z = self.precond(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            iters += 1
        if float(np.linalg.norm(r)) > bound:
            raise SolverError(
                f"conjugate gradient stalled at residual {np.linalg.norm(r):.3e} "
                f"after {iters} iterations"
            )
        return sigma, iters

    def potential(self, sigma: np.ndarray, target: np.ndarray) -> np.ndarray:
        self._buf[:] = 0.0
        self._buf[self.idx] = sigma
        u = _green_apply(self.grid, self._buf.reshape(self.grid.shape),
                         self.inhomogeneous).reshape(-1)
        if self.zero_sum:
            # constant component of the grounded problem, fixed by the
            # residual mean on the active cells
            u = u + float((target - u[self.idx]).mean())
        return u


def _ground_for(e: CompactSet) -> CompactSet:
    grid = e.grid
    n = grid.points_per_axis
    center = tuple(((c + n // 2) % n) * grid.spacing for c in e.centroid_cell())
    ground = ball_set(grid, center, grid.period / 8.0)
    if (ground.mask & e.mask).any():
        raise ValueError("set reaches its antipodal ground ball; too large")
    return ground


def capacity(
    e: CompactSet,
    flavor: str = "homogeneous",
    tol: float = 1e-8,
    max_outer: int = 30,
) -> CapacityResult:
    """Capacity of e, with potential and equilibrium measure.

    Homogeneous flavor minimizes the Dirichlet energy with the set held
    at 1 and the antipodal ground ball at 0; inhomogeneous adds the
    L2 term and needs no ground.  In two dimensions the homogeneous
    capacity is 0 by convention.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"flavor must be one of {FLAVORS}")
    grid = e.grid
    if e.count == 0:
        raise ValueError("capacity of the empty set is undefined")

    if flavor == "homogeneous" and grid.dim == 2:
        ones = ScalarField(grid, np.ones(grid.shape))
        zero = DiscreteMeasure(grid, np.zeros(grid.shape))
        return CapacityResult(0.0, ones, zero, 0.0, flavor, 0)

    inhomogeneous = flavor == "inhomogeneous"
    if inhomogeneous:
        ground = None
        ground_idx = np.empty(0, dtype=np.intp)
    else:
        ground = _ground_for(e)
        ground_idx = np.flatnonzero(ground.mask.reshape(-1))

    e_idx_all = np.flatnonzero(e.mask.reshape(-1))
    active = np.ones(e_idx_all.size, dtype=bool)
    max_cg = 10 * grid.points_per_axis

    sigma = u = None
    for _ in range(max_outer):
        e_idx = e_idx_all[active]
        idx = np.concatenate([e_idx, ground_idx])
        target = np.zeros(idx.size)
        target[: e_idx.size] = 1.0
        system = _ChargeSystem(grid, idx, inhomogeneous,
                               zero_sum=not inhomogeneous)
        sigma, _iters = system.solve(target, rtol=1e-12, max_iter=max_cg)
        u = system.potential(sigma, target)

        drop = sigma[: e_idx.size] < -tol
        grow = u[e_idx_all] < 1.0 - tol
        grow &= ~active
        if not drop.any() and not grow.any():
            break
        active_new = active.copy()
        active_new[np.flatnonzero(active)[drop]] = False
        active_new |= grow
        active = active_new
    else:
        raise SolverError(f"active set did not settle in {max_outer} rounds")

    e_idx = e_idx_all[active]
    charge = np.zeros(grid.npoints)
    # sigma is a charge density; cell masses carry the volume factor, so
    # the total mass equals <u, -Lap u> = the energy being minimized
    charge[e_idx] = np.clip(sigma[: e_idx.size], 0.0, None) * grid.cell_volume
    value = float(charge.sum())

    kkt = max(
        float(np.abs(u[e_idx] - 1.0).max(initial=0.0)),
        float(np.clip(1.0 - u[e_idx_all], 0.0, None).max(initial=0.0)),
        float(np.clip(-sigma[: e_idx.size], 0.0, None).max(initial=0.0)),
        float(np.abs(u[ground_idx]).max(initial=0.0)),
    )
    if kkt > tol:
        raise SolverError(f"KKT residual {kkt:.3e} above tolerance {tol:g}")

    potential = ScalarField(grid, u.reshape(grid.shape))
    mu = DiscreteMeasure(grid, charge.reshape(grid.shape))
    return CapacityResult(value, potential, mu, kkt, flavor, int(active.sum()),
                          ground)


def equilibrium_potential(
    measure: DiscreteMeasure, normalization: str = "support"
) -> ScalarField:
    """Newtonian potential of a measure on the 3-torus.

    The spectral part inverts -Lap on the mean-free density.  With
    normalization 'support' the additive constant is fixed so the
    potential's minimum over the measure's support is 1 (matching the
    equilibrium normalization u = 1 on the set); 'kernel' instead shifts
    by mean * zeta * L^2 with zeta = 2.837297/(4 pi), the lattice-sum
    constant relating the periodic Green function to 1/(4 pi |x|), so
    the result tracks the free-space kernel at mid-range distances.
    """
    grid = measure.grid
    if grid.dim != 3:
        raise ValueError("Newtonian potential needs dim 3")
    if measure.total <= 0.0:
        raise ValueError("zero measure has no potential")
    if normalization not in ("support", "kernel"):
        raise ValueError("normalization must be 'support' or 'kernel'")

    density = measure.cell_mass / grid.cell_volume
    base = _green_apply(grid, density - density.mean(), inhomogeneous=False)
    if normalization == "kernel":
        zeta = 2.837297479 / (4.0 * np.pi)
        return ScalarField(grid, base + density.mean() * zeta * grid.period**2)
    support = measure.cell_mass > 1e-12 * float(measure.cell_mass.max())
    return ScalarField(grid, base + (1.0 - float(base[support].min())))


@dataclass(frozen=True)
class GaugeReport:
    lam: ScalarField
    energy_lhs: float
    energy_rhs: float
    gauge_ratio: float
    gauge_ratio_min: float
    within_bounds: bool
    tau: float
    cap_value: float


def _band_limited_probe(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    kmax = max(grid.points_per_axis // 16, 2)
    hats = np.zeros(grid.shape, dtype=np.complex128)
    n = grid.points_per_axis
    modes = [m % n for m in range(-kmax, kmax + 1)]
    sub = np.ix_(*([modes] * grid.dim))
    block = rng.standard_normal((len(modes),) * grid.dim) \
        + 1j * rng.standard_normal((len(modes),) * grid.dim)
    hats[sub] = block
    hats.flat[0] = 0.0
    return _ifftn(hats)


def gauge_check(
    e: CompactSet,
    tau: float,
    nprobe: int = 20,
    seed: int = 0,
    floor: float = 1e-8,
    result: CapacityResult | None = None,
) -> GaugeReport:
    """Energy identity and norm distortion of the gauge exp(i tau log u).

    u is the grounded capacitary potential of e.  The identity
    ||grad u^tau||^2 = tau^2 (2 tau - 1)^{-1} cap(e) holds exactly in
    the continuum (the ground plate sits at u = 0 and contributes
    nothing); the reported pair tracks the discretization gap.  The
    gauge ratio is the worst Dirichlet-norm distortion of exp(i lam)
    over random band-limited probes, with lam = tau log(max(u, floor)).

    A precomputed homogeneous CapacityResult for e may be passed to
    amortize the solve across several tau values.
    """
    if not 0.5 < tau < 1.5:
        raise ValueError("tau must lie in (1/2, 3/2)")
    if result is None:
        result = capacity(e, "homogeneous")
    elif result.flavor != "homogeneous":
        raise ValueError("gauge check needs the homogeneous capacity")
    if result.value <= 0.0:
        raise ValueError("gauge needs a set of positive capacity")
    grid = e.grid

    u = result.potential.values.real
    lam_values = tau * np.log(np.maximum(u, floor))
    lam = ScalarField(grid, lam_values)

    v = ScalarField(grid, np.clip(u, 0.0, None) ** tau)
    energy_lhs = dirichlet_norm(v) ** 2
    energy_rhs = tau * tau / (2.0 * tau - 1.0) * result.value

    phase = np.exp(1j * lam_values)
    rng = np.random.default_rng(seed)
    hi = 0.0
    lo = np.inf
    for _ in range(nprobe):
        probe = _band_limited_probe(grid, rng)
        base = dirichlet_norm(ScalarField(grid, probe))
        twisted = dirichlet_norm(ScalarField(grid, phase * probe))
        ratio = twisted / base
        hi = max(hi, ratio)
        lo = min(lo, ratio)

    bound = 1.0 + 2.0 * tau
    ok = hi <= bound * 1.1 and lo >= 0.9 / bound
    return GaugeReport(lam, float(energy_lhs), float(energy_rhs), float(hi),
                       float(lo), bool(ok), tau, result.value)
