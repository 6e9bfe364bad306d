"""Named analytic inputs: drift fields, scalar potentials, and measures.

Every preset is a deterministic function of (grid, seed), so reports built
from presets are reproducible bit for bit.  Fields are returned as torus
fields on the caller's grid; measures as DiscreteMeasure.

The vortex preset is the rotational field (x2, -x1, 0, ...)/(x1^2 + x2^2)
centered at L/2 per axis.  Its magnitude 1/r is capped at 1/(2h) inside the
core (the cap radius is then 2h) and the mean is subtracted, so the sampled
field is finite while the L^2 mass over any fixed ball still grows under
refinement like log(1/h).
"""

from __future__ import annotations

import numpy as np

from formbound.measures import DiscreteMeasure
from formbound.torus import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    grad,
    mat_div,
)

__all__ = [
    "FIELD_PRESETS",
    "MEASURE_PRESETS",
    "SCALAR_PRESETS",
    "MEASURE_FAMILY",
    "make_field",
    "make_measure",
    "make_scalar",
    "vortex",
    "gradient",
    "stream",
    "coulomb_gauge",
    "random_field",
    "singular_gradient",
    "log_stream",
    "log_singular",
    "trig_scalar",
    "lebesgue",
    "bump",
    "two_bumps",
    "point_mass",
    "random_density",
]


def _centered_axes(grid: Grid) -> list[np.ndarray]:
    """Signed displacement from the center cell, broadcastable per axis.

    The center sits at coordinate L/2 (cell index n//2), so displacements
    range over [-L/2, L/2) and are already torus-minimal.
    """
    n = grid.points_per_axis
    d = (np.arange(n) - n // 2) * grid.spacing
    out = []
    for axis in range(grid.dim):
        form = [1] * grid.dim
        form[axis] = n
        out.append(d.reshape(form))
    return out


def _full(grid: Grid, arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(arr, grid.shape).astype(np.float64))


def vortex(grid: Grid) -> VectorField:
    """Capped swirl around the axis through the grid center.

    b = (d2, -d1, 0)/r * min(1/r, 1/(2h)) with d the displacement from the
    center and r = |(d1, d2)|; the axis cells (r = 0) carry zero.  Each
    component is mean-subtracted.
    """
    h = grid.spacing
    axes = _centered_axes(grid)
    d1, d2 = axes[0], axes[1]
    rsq = d1**2 + d2**2
    r = np.sqrt(rsq)
    # min(1/r^2, 1/(2 h r)) without dividing by zero on the axis
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0.0, np.minimum(1.0 / np.where(rsq > 0, rsq, 1.0),
                                             1.0 / (2.0 * h * np.where(r > 0, r, 1.0))), 0.0)
    comps = [_full(grid, d2 * scale), _full(grid, -d1 * scale)]
    while len(comps) < grid.dim:
        comps.append(np.zeros(grid.shape))
    comps = [c - c.mean() for c in comps]
    return VectorField(tuple(ScalarField(grid, c) for c in comps))


def _default_potential(grid: Grid) -> ScalarField:
    x = grid.coordinates()
    w = 2.0 * np.pi / grid.period
    vals = np.sin(w * x[0]) + np.zeros(grid.shape)
    return ScalarField(grid, vals)


def gradient(grid: Grid, potential: ScalarField | None = None) -> VectorField:
    """b = grad g; default g = sin(2 pi x1 / L), so b = (2 pi/L cos(...), 0, ...)."""
    g = potential if potential is not None else _default_potential(grid)
    return grad(g)


def _stream_potential(grid: Grid) -> ScalarField:
    x = grid.coordinates()
    w = 2.0 * np.pi / grid.period
    vals = np.sin(w * x[0]) * np.sin(w * x[1]) + 0.5 * np.cos(w * x[1])
    return ScalarField(grid, vals + np.zeros(grid.shape))


def stream(grid: Grid, potential: ScalarField | None = None) -> VectorField:
    """Divergence-free drift b = (d g/dx2, -d g/dx1, 0, ...) from a stream function."""
    g = potential if potential is not None else _stream_potential(grid)
    gg = grad(g)
    comps = [gg[1], -1.0 * gg[0]]
    while len(comps) < grid.dim:
        comps.append(ScalarField(grid, np.zeros(grid.shape)))
    return VectorField(tuple(comps))


def coulomb_gauge(grid: Grid) -> VectorField:
    """a = Div F0 for a smooth skew matrix F0; div a = 0 by antisymmetry."""
    x = grid.coordinates()
    w = 2.0 * np.pi / grid.period
    f = np.cos(w * x[0]) * np.sin(w * x[1]) + np.zeros(grid.shape)
    d = grid.dim
    zero = ScalarField(grid, np.zeros(grid.shape))
    entries = [[zero.copy() for _ in range(d)] for _ in range(d)]
    entries[0][1] = ScalarField(grid, f)
    entries[1][0] = ScalarField(grid, -f)
    F0 = MatrixField(tuple(tuple(row) for row in entries), skew_symmetric=True)
    return mat_div(F0)


def _band_limited(grid: Grid, rng: np.random.Generator, band: int) -> np.ndarray:
    """Real field whose spectrum is confined to |k_i| <= band per axis."""
    import scipy.fft

    hats = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k = np.fft.fftfreq(grid.points_per_axis, d=1.0 / grid.points_per_axis)
    keep = np.ones(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        form = [1] * grid.dim
        form[axis] = grid.points_per_axis
        keep &= np.abs(k).reshape(form) <= band
    hats[~keep] = 0.0
    hats.flat[0] = 0.0
    vals = scipy.fft.ifftn(hats).real
    peak = np.abs(vals).max()
    return vals / peak if peak > 0 else vals


def random_field(grid: Grid, seed: int = 0, band: int | None = None) -> VectorField:
    """Seeded band-limited real drift, unit sup norm per component."""
    if band is None:
        band = max(2, grid.points_per_axis // 8)
    rng = np.random.default_rng(seed)
    comps = tuple(
        ScalarField(grid, _band_limited(grid, rng, band)) for _ in range(grid.dim)
    )
    return VectorField(comps)


def singular_gradient(grid: Grid, strength: float = 10.0) -> VectorField:
    """Gradient of a capped 1/r spike: a strong, concentrated curl-free drift.

    The potential is strength * min(1/|d|, 1/(2h)) mean-subtracted; its
    spectral gradient has L^2 mass that diverges under refinement, which is
    the bad case for the inhomogeneous trace test.
    """
    axes = _centered_axes(grid)
    rsq = axes[0] ** 2
    for a in axes[1:]:
        rsq = rsq + a**2
    r = np.sqrt(rsq)
    h = grid.spacing
    phi = strength * np.minimum(1.0 / np.maximum(r, h * 1e-12), 1.0 / (2.0 * h))
    phi = phi - phi.mean()
    return grad(ScalarField(grid, phi))


def log_singular(grid: Grid) -> ScalarField:
    """log |2 sin(pi x1 / L)|: the periodic log singularity along x1 = 0.

    The argument is floored at its half-cell value so samples stay finite;
    the oscillation per dyadic scale is then flat in the scale, which is the
    canonical BMO-but-not-VMO profile.
    """
    x = grid.coordinates()
    s = np.abs(2.0 * np.sin(np.pi * x[0] / grid.period))
    floor = 2.0 * np.sin(np.pi * grid.spacing / (2.0 * grid.period))
    vals = np.log(np.maximum(s, floor)) + np.zeros(grid.shape)
    return ScalarField(grid, vals)


def log_stream(grid: Grid) -> VectorField:
    """Drift whose stream matrix carries a log singularity: b = Div F0,
    F0_{12} = -F0_{21} = log_singular."""
    f = log_singular(grid)
    d = grid.dim
    zero = ScalarField(grid, np.zeros(grid.shape))
    entries = [[zero.copy() for _ in range(d)] for _ in range(d)]
    entries[0][1] = f
    entries[1][0] = -1.0 * f
    F0 = MatrixField(tuple(tuple(row) for row in entries), skew_symmetric=True)
    return mat_div(F0)


def trig_scalar(grid: Grid) -> ScalarField:
    x = grid.coordinates()
    w = 2.0 * np.pi / grid.period
    vals = np.cos(w * x[0]) * np.cos(w * x[1]) + np.zeros(grid.shape)
    return ScalarField(grid, vals)


# ---------------------------------------------------------------------------
# measures


def lebesgue(grid: Grid) -> DiscreteMeasure:
    return DiscreteMeasure.from_density(ScalarField(grid, np.ones(grid.shape)))


def bump(grid: Grid) -> DiscreteMeasure:
    """Gaussian bump of width L/8 at the grid center."""
    axes = _centered_axes(grid)
    rsq = axes[0] ** 2
    for a in axes[1:]:
        rsq = rsq + a**2
    sigma = grid.period / 8.0
    density = np.exp(-rsq / (2.0 * sigma**2)) + np.zeros(grid.shape)
    return DiscreteMeasure.from_density(ScalarField(grid, density))


def two_bumps(grid: Grid) -> DiscreteMeasure:
    """Two Gaussian bumps of width L/10, the second offset and lighter."""
    n = grid.points_per_axis
    h = grid.spacing
    sigma = grid.period / 10.0
    idx = np.arange(n)

    def _bump_at(center_cell: int, weight: float) -> np.ndarray:
        d = np.minimum((idx - center_cell) % n, (center_cell - idx) % n) * h
        rsq = np.zeros(grid.shape)
        for axis in range(grid.dim):
            form = [1] * grid.dim
            form[axis] = n
            rsq = rsq + (d.reshape(form)) ** 2
        return weight * np.exp(-rsq / (2.0 * sigma**2))

    density = _bump_at(n // 4, 1.0) + _bump_at(3 * n // 4, 0.6)
    return DiscreteMeasure.from_density(ScalarField(grid, density))


def point_mass(grid: Grid, mass: float = 1.0) -> DiscreteMeasure:
    """All mass in the single center cell."""
    cell = (grid.points_per_axis // 2,) * grid.dim
    masses = np.zeros(grid.shape)
    masses[cell] = mass
    return DiscreteMeasure(grid, masses)


def random_density(grid: Grid, seed: int = 0) -> DiscreteMeasure:
    """Squared band-limited random field: nonnegative, diffuse, seeded."""
    rng = np.random.default_rng(seed)
    vals = _band_limited(grid, rng, max(2, grid.points_per_axis // 8))
    return DiscreteMeasure.from_density(ScalarField(grid, vals**2 + 0.05))


FIELD_PRESETS = {
    "vortex": vortex,
    "gradient": gradient,
    "stream": stream,
    "coulomb_gauge": coulomb_gauge,
    "random": random_field,
    "singular_gradient": singular_gradient,
    "log_stream": log_stream,
}

SCALAR_PRESETS = {
    "log_singular": log_singular,
    "trig": trig_scalar,
}

MEASURE_PRESETS = {
    "lebesgue": lebesgue,
    "bump": bump,
    "two_bumps": two_bumps,
    "point_mass": point_mass,
    "random_density": random_density,
}

# the family the coherence checks sweep over
MEASURE_FAMILY = ("lebesgue", "bump", "two_bumps", "random_density")


def make_field(name: str, grid: Grid, seed: int = 0) -> VectorField:
    if name not in FIELD_PRESETS:
        raise ValueError(f"unknown field preset {name!r}; choices: {sorted(FIELD_PRESETS)}")
    if name == "random":
        return random_field(grid, seed=seed)
    return FIELD_PRESETS[name](grid)


def make_scalar(name: str, grid: Grid) -> ScalarField:
    if name not in SCALAR_PRESETS:
        raise ValueError(f"unknown scalar preset {name!r}; choices: {sorted(SCALAR_PRESETS)}")
    return SCALAR_PRESETS[name](grid)


def make_measure(name: str, grid: Grid, seed: int = 0) -> DiscreteMeasure:
    if name not in MEASURE_PRESETS:
        raise ValueError(f"unknown measure preset {name!r}; choices: {sorted(MEASURE_PRESETS)}")
    if name == "random_density":
        return random_density(grid, seed=seed)
    return MEASURE_PRESETS[name](grid)
