import numpy as np
import pytest
from scipy.linalg import svdvals

from formbound import presets
from formbound.formnorm import (
    ConvergenceError,
    commutator_norm,
    form_norm,
    nonlinear_form_constant,
    trace_constant,
)
from formbound.measures import DiscreteMeasure
from formbound.torus import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    div,
    kappa_axes,
    kappa_sq,
)

TIGHT = dict(rtol=1e-12, residual_tol=1e-8, max_iter=20000)


def _dense_operator(grid, apply_fn):
    n = grid.npoints
    M = np.zeros((n, n), dtype=complex)
    for k in range(n):
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        M[:, k] = apply_fn(e.reshape(grid.shape)).reshape(-1)
    return M


def _dense_top_singular(grid, A, b, q, flavor):
    """Assemble S L S as an explicit matrix and take its top singular value."""
    kaps = kappa_axes(grid)
    ks = kappa_sq(grid)
    d = grid.dim
    D = [
        _dense_operator(grid, lambda f, j=j: np.fft.ifftn(1j * kaps[j] * np.fft.fftn(f)))
        for j in range(d)
    ]
    L = np.zeros((grid.npoints, grid.npoints), dtype=complex)
    if A is not None:
        for i in range(d):
            for j in range(d):
                L += D[i] @ np.diag(A.entries[i][j].values.reshape(-1)) @ D[j]
    if b is not None:
        for j in range(d):
            L += np.diag(b.components[j].values.reshape(-1)) @ D[j]
    if q is not None:
        L += np.diag(q.values.reshape(-1))
    if flavor == "inhomogeneous":
        symv = 1.0 / np.sqrt(1.0 + ks)
    else:
        symv = np.where(ks > 0, 1.0 / np.sqrt(np.where(ks > 0, ks, 1.0)), 0.0)
    S = _dense_operator(grid, lambda f: np.fft.ifftn(symv * np.fft.fftn(f)))
    return float(svdvals(S @ L @ S)[0])


@pytest.mark.parametrize("flavor", ["homogeneous", "inhomogeneous"])
def test_form_norm_matches_dense_svd(flavor):
    g = Grid(2, 8, 1.0)
    b = presets.make_field("random", g, seed=3)
    q = ScalarField(g, np.random.default_rng(11).standard_normal(g.shape))
    want = _dense_top_singular(g, None, b, q, flavor)
    est = form_norm(None, b, q, flavor=flavor, **TIGHT)
    assert abs(est.value - want) <= 1e-8 * want


def test_form_norm_with_principal_matches_dense_svd():
    g = Grid(2, 8, 1.0)
    one = ScalarField(g, np.ones(g.shape))
    zero = ScalarField(g, np.zeros(g.shape))
    off = ScalarField(g, 0.3 * np.sin(2 * np.pi * np.arange(8) / 8)[:, None] * np.ones(g.shape))
    A = MatrixField(((one, off), (zero, one)))
    b = presets.make_field("random", g, seed=3)
    q = ScalarField(g, np.random.default_rng(11).standard_normal(g.shape))
    want = _dense_top_singular(g, A, b, q, "homogeneous")
    est = form_norm(A, b, q, **TIGHT)
    assert abs(est.value - want) <= 1e-8 * want


def test_constant_potential_closed_form():
    # q = alpha against the Dirichlet norm compresses to alpha/kappa^2,
    # maximized at the lowest nonzero mode
    g = Grid(3, 16, 1.0)
    alpha = 2.25
    q = ScalarField(g, np.full(g.shape, alpha))
    est = form_norm(None, None, q, **TIGHT)
    want = alpha / (4.0 * np.pi**2)
    assert abs(est.value - want) <= 1e-6 * want
    mu = presets.make_measure("lebesgue", g).scaled(alpha)
    tr = trace_constant(mu, **TIGHT)
    assert abs(tr.value - want) <= 1e-6 * want


def test_constant_potential_inhomogeneous_unit():
    # the Bessel compression of q = 1 is the identity on the zero mode
    g = Grid(3, 16, 1.0)
    q = ScalarField(g, np.ones(g.shape))
    est = form_norm(None, None, q, flavor="inhomogeneous", **TIGHT)
    assert abs(est.value - 1.0) <= 1e-8


def test_constant_drift_lattice_maximum():
    g = Grid(3, 16, 1.0)
    bc = (1.0, 2.0, 0.5)
    b = VectorField(tuple(ScalarField(g, np.full(g.shape, v)) for v in bc))
    est = form_norm(None, b, None, **TIGHT)
    ints = np.fft.fftfreq(16, 1.0 / 16)
    best = 0.0
    for kx in ints:
        for ky in ints:
            for kz in ints:
                k2 = kx * kx + ky * ky + kz * kz
                if k2 == 0.0:
                    continue
                best = max(best, abs(bc[0] * kx + bc[1] * ky + bc[2] * kz) / (2 * np.pi * k2))
    assert abs(est.value - best) <= 1e-8 * best
    assert abs(best - 1.0 / np.pi) <= 1e-12


def test_drift_sign_invariance():
    g = Grid(2, 8, 1.0)
    b = presets.make_field("random", g, seed=3)
    plus = form_norm(None, b, None, **TIGHT).value
    minus = form_norm(None, -1.0 * b, None, **TIGHT).value
    assert plus == minus


def test_commutator_equals_form_for_divergence_free():
    g = Grid(2, 32, 1.0)
    b = presets.make_field("stream", g)
    assert float(np.abs(div(b).values).max()) <= 1e-10
    com = commutator_norm(b, **TIGHT).value
    frm = form_norm(None, b, None, **TIGHT).value
    assert abs(com - frm) <= 1e-10 * frm


def test_history_monotone_and_witness():
    g = Grid(3, 16, 1.0)
    b = presets.make_field("vortex", g)
    est = form_norm(None, b, None, residual_tol=1e-4, max_iter=4000)
    assert abs(est.value - 0.449852275005) <= 1e-4 * est.value
    assert all(y >= x - 1e-12 * abs(x) for x, y in zip(est.history, est.history[1:]))
    u, v = est.witness
    assert u.grid == g and v.grid == g


def test_convergence_error_reports_progress():
    g = Grid(3, 16, 1.0)
    b = presets.make_field("vortex", g)
    with pytest.raises(ConvergenceError, match="power iteration at"):
        form_norm(None, b, None, residual_tol=1e-5, max_iter=400)


def test_nonlinear_scaling_exact():
    g = Grid(3, 8, 1.0)
    b = presets.make_field("vortex", g)
    big1, small1, ok1 = nonlinear_form_constant(b, restarts=3, steps=60, seed=0)
    big2, small2, ok2 = nonlinear_form_constant(2.0 * b, restarts=3, steps=60, seed=0)
    assert ok1 and ok2
    assert big1.value > 0.0
    assert abs(big2.value - 2.0 * big1.value) <= 1e-8 * big2.value
    assert abs(small2.value - 2.0 * small1.value) <= 1e-8 * small2.value


def test_nonlinear_zero_drift():
    g = Grid(3, 8, 1.0)
    zero = VectorField(tuple(ScalarField(g, np.zeros(g.shape)) for _ in range(3)))
    big, small, ok = nonlinear_form_constant(zero)
    assert big.value == 0.0 and small.value == 0.0 and ok


def test_trace_mask_is_contractive():
    g = Grid(3, 16, 1.0)
    mu = presets.make_measure("bump", g)
    full = trace_constant(mu, **TIGHT)
    mask = np.zeros(g.shape, bool)
    mask[:8] = True
    masked = trace_constant(mu, mask=mask, **TIGHT)
    assert 0.0 < masked.value <= full.value + 1e-12
    empty = trace_constant(mu, mask=np.zeros(g.shape, bool))
    assert empty.value == 0.0


def test_zero_measure_trace():
    g = Grid(2, 16, 1.0)
    mu = DiscreteMeasure(g, np.zeros(g.shape))
    assert trace_constant(mu).value == 0.0


def test_flavor_and_empty_validation():
    g = Grid(2, 8, 1.0)
    b = presets.make_field("random", g, seed=0)
    with pytest.raises(ValueError):
        form_norm(None, b, None, flavor="riesz")
    with pytest.raises(ValueError):
        form_norm(None, None, None)
