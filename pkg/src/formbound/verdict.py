"""Assessment pipelines that fold the per-condition tests into a certificate.

Each pipeline decomposes the coefficients, runs the admissibility battery on
the decomposed pieces, probes sufficiency, cross-checks the direct compressed
norm, and reports one of three outcomes:

* ``certified_bounded``    every necessary condition passed and a sufficiency
                           route confirmed it;
* ``certified_unbounded_n2``  the two-dimensional obstruction fired (nonzero
                           divergence of the drift, or a potential with
                           nonvanishing mass);
* ``inconclusive``         necessary tests passed but sufficiency did not, or
                           a sub-estimate failed to converge, or an envelope
                           was exceeded without an exact obstruction.

Pass thresholds are numeric envelopes, not theorems: finiteness of a BMO or
Carleson constant is the mathematical condition, and a certifier needs a
finite cut.  The defaults (10 in normalized units) are configuration, carried
in the verdict's provenance.  Refinement trends across grids, not single
values, are what the test suite leans on.

Sub-tests of one pipeline run concurrently when FORMBOUND_THREADS allows;
records are assembled in a fixed order so reports are bit-identical across
reruns regardless of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from formbound.formnorm import ConvergenceError, form_norm, trace_constant
from formbound.hodge import hodge_decompose, inhomogeneous_decompose, reduce_principal
from formbound.measures import (
    DiscreteMeasure,
    MeasureReport,
    ball_growth_test,
    carleson_test,
    fefferman_phong_test,
    inhomogeneous_variants,
)
from formbound.oscillation import bmo_norm, vmo_profile
from formbound.torus import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    curl,
    div,
    grad,
    inv_laplacian,
    lp_norm,
    zero_mean,
)

OUTCOMES = ("certified_bounded", "certified_unbounded_n2", "inconclusive")


@dataclass(frozen=True)
class Thresholds:
    """Numeric envelopes for the pass flags.

    carleson/bmo/ball_growth/trace bound the respective constants in
    normalized units; fefferman_phong bounds the sufficiency probe;
    null_tolerance is the L1 mass below which a field counts as zero in the
    n=2 branches; vmo_decay and trace_decay are the minimum per-halving
    shrink factors of the small-scale profiles.
    """

    carleson: float = 10.0
    bmo: float = 10.0
    ball_growth: float = 10.0
    fefferman_phong: float = 10.0
    trace: float = 10.0
    null_tolerance: float = 1e-3
    vmo_decay: float = 1.8
    trace_decay: float = 2.0


@dataclass(frozen=True)
class ConditionRecord:
    condition: str
    constant: float
    threshold: float | None
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "constant": float(self.constant),
            "threshold": None if self.threshold is None else float(self.threshold),
            "passed": bool(self.passed),
            "note": self.note,
        }


@dataclass
class Verdict:
    pipeline: str
    records: tuple[ConditionRecord, ...]
    overall: str
    provenance: dict
    profiles: dict | None = None

    def __post_init__(self) -> None:
        if self.overall not in OUTCOMES:
            raise ValueError(f"overall must be one of {OUTCOMES}, got {self.overall!r}")

    def record(self, condition: str) -> ConditionRecord:
        for rec in self.records:
            if rec.condition == condition:
                return rec
        raise KeyError(condition)

    def as_dict(self) -> dict:
        out = {
            "pipeline": self.pipeline,
            "overall": self.overall,
            "records": [r.as_dict() for r in self.records],
            "provenance": self.provenance,
        }
        if self.profiles is not None:
            out["profiles"] = self.profiles
        return out


def _max_workers() -> int:
    raw = os.environ.get("FORMBOUND_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _run_all(tasks):
    """Evaluate thunks, concurrently when allowed; results keep task order."""
    workers = _max_workers()
    if workers <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _from_measure(rep: MeasureReport, threshold: float | None) -> ConditionRecord:
    passed = True if threshold is None else rep.constant <= threshold
    return ConditionRecord(rep.test, rep.constant, threshold, passed, rep.note)


def _zero_vector(grid: Grid) -> VectorField:
    zero = ScalarField(grid, np.zeros(grid.shape))
    return VectorField(tuple(zero.copy() for _ in range(grid.dim)))


def _zero_scalar(grid: Grid) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape))


def _common_grid(*fields) -> Grid:
    grids = [f.grid for f in fields if f is not None]
    if not grids:
        raise ValueError("all coefficients empty")
    for g in grids[1:]:
        if g != grids[0]:
            raise ValueError("coefficient grids differ")
    return grids[0]


def _provenance(grid: Grid, thr: Thresholds, **extra) -> dict:
    out = {
        "dim": grid.dim,
        "points_per_axis": grid.points_per_axis,
        "period": grid.period,
        "thresholds": asdict(thr),
    }
    out.update(extra)
    return out


def _is_finite_record(name: str, value: float, note: str = "") -> ConditionRecord:
    return ConditionRecord(name, float(value), None, bool(np.isfinite(value)), note)


def _form_record(name: str, thunk, threshold: float | None = None):
    """Run a compressed-norm estimate, mapping non-convergence to a failed
    record instead of an exception."""
    try:
        est = thunk()
    except ConvergenceError as exc:
        return ConditionRecord(name, float("nan"), threshold, False,
                               f"did not converge: {exc}"), None
    passed = True if threshold is None else est.value <= threshold
    return ConditionRecord(name, est.value, threshold, passed), est


def _gradient_energy_density(q: ScalarField) -> np.ndarray:
    """|grad inv_laplacian q~|^2 with q~ the mean-free part of q."""
    if float(np.abs(q.values).max()) == 0.0:
        return np.zeros(q.grid.shape)
    pot = inv_laplacian(zero_mean(q), annihilate_mean=True)
    gq = grad(pot)
    return sum(np.abs(c.values) ** 2 for c in gq.components)


def _admissibility_records(
    grid: Grid, rho: np.ndarray, eps: float, thr: Thresholds
) -> list[ConditionRecord]:
    """Carleson + ball growth + Fefferman-Phong battery for a density rho."""
    mu = DiscreteMeasure.from_density(ScalarField(grid, rho))
    reports = _run_all([
        lambda: carleson_test(mu),
        lambda: ball_growth_test(mu),
        lambda: fefferman_phong_test(mu.density(), eps),
    ])
    return [
        _from_measure(reports[0], thr.carleson),
        _from_measure(reports[1], thr.ball_growth),
        _from_measure(reports[2], thr.fefferman_phong),
    ]


def _fold(records, necessary, sufficiency=()) -> str:
    # envelope records already fail on nan/inf constants (the comparison
    # against the threshold is False); decay records pass with an infinite
    # factor by design, so only the pass flags are consulted here
    by_name = {r.condition: r for r in records}
    for name in necessary:
        if not by_name[name].passed:
            return "inconclusive"
    for name in sufficiency:
        if not by_name[name].passed:
            return "inconclusive"
    return "certified_bounded"


def assess_homogeneous(
    A: MatrixField | None,
    b: VectorField | None,
    q: ScalarField | None,
    thresholds: Thresholds | None = None,
    eps: float = 0.5,
    seed: int = 0,
) -> Verdict:
    """Homogeneous (Dirichlet-norm) pipeline.

    Splits A into symmetric + skew, folds the skew part into the drift,
    Hodge-decomposes the effective drift, and tests the stream part in BMO
    and the gradient parts as a measure.  In two dimensions boundedness
    degenerates: a drift with nonzero divergence or any potential mass is an
    exact obstruction and certifies unboundedness.
    """
    thr = thresholds or Thresholds()
    grid = _common_grid(A, b, q)
    b0 = b if b is not None else _zero_vector(grid)
    q0 = q if q is not None else _zero_scalar(grid)

    records: list[ConditionRecord] = []
    if A is not None:
        _As, b1, s_inf = reduce_principal(A, b0)
        records.append(_is_finite_record("symmetric_sup", s_inf,
                                         "ess sup of the pointwise norm of sym A"))
    else:
        b1 = b0
        records.append(_is_finite_record("symmetric_sup", 0.0, "A absent"))

    prov = _provenance(grid, thr, eps=eps, seed=seed, flavor="homogeneous")

    if grid.dim == 2:
        div_mass = lp_norm(div(b1), 1.0)
        q_mass = lp_norm(q0, 1.0)
        div_rec = ConditionRecord("n2_divergence_mass", div_mass, thr.null_tolerance,
                                  div_mass <= thr.null_tolerance, "L1 of div b")
        q_rec = ConditionRecord("n2_potential_mass", q_mass, thr.null_tolerance,
                                q_mass <= thr.null_tolerance, "L1 of q")
        records.extend([div_rec, q_rec])
        if not (div_rec.passed and q_rec.passed):
            return Verdict("homogeneous", tuple(records), "certified_unbounded_n2", prov)
        # the skew part of A was folded into b1, so the rotation potential
        # of b1 already carries the - (A - A^T)/2 correction
        rot = curl(b1)[0, 1]
        pot = inv_laplacian(rot, annihilate_mean=True)
        rep = bmo_norm(pot)
        records.append(ConditionRecord("rotation_bmo", rep.norm, thr.bmo,
                                       rep.norm <= thr.bmo))
        form_rec, _ = _form_record(
            "form_norm", lambda: form_norm(None, b1, None, seed=seed,
                                           residual_tol=1e-5, max_iter=4000))
        records.append(form_rec)
        overall = _fold(records, ("symmetric_sup", "rotation_bmo", "form_norm"))
        return Verdict("homogeneous", tuple(records), overall, prov)

    dec = hodge_decompose(b1)
    rho = sum(np.abs(c.values) ** 2 for c in dec.c.components)
    rho = rho + _gradient_energy_density(q0)

    bmo_rep = bmo_norm(dec.F)
    records.append(ConditionRecord(
        "stream_bmo", bmo_rep.norm, thr.bmo, bmo_rep.norm <= thr.bmo,
        f"worst entry {bmo_rep.entry}"))
    records.extend(_admissibility_records(grid, rho, eps, thr))
    form_rec, _ = _form_record(
        "form_norm",
        lambda: form_norm(A, b, q, seed=seed, residual_tol=1e-5, max_iter=4000))
    records.append(form_rec)

    overall = _fold(
        records,
        ("symmetric_sup", "stream_bmo", "carleson", "ball_growth", "form_norm"),
        ("fefferman_phong",),
    )
    return Verdict("homogeneous", tuple(records), overall, prov)


def assess_inhomogeneous(
    A: MatrixField | None,
    b: VectorField | None,
    q: ScalarField | None,
    thresholds: Thresholds | None = None,
    seed: int = 0,
) -> Verdict:
    """Sobolev-norm pipeline: Bessel decomposition, small-cube oscillation,
    the three W^{1,2} admissibility variants, the trace constant, and a
    strengthened drift condition."""
    thr = thresholds or Thresholds()
    grid = _common_grid(A, b, q)
    b0 = b if b is not None else _zero_vector(grid)
    q0 = q if q is not None else _zero_scalar(grid)

    records: list[ConditionRecord] = []
    if A is not None:
        _As, b1, s_inf = reduce_principal(A, b0)
        records.append(_is_finite_record("symmetric_sup", s_inf,
                                         "ess sup of the pointwise norm of sym A"))
    else:
        b1 = b0
        records.append(_is_finite_record("symmetric_sup", 0.0, "A absent"))

    dec = inhomogeneous_decompose(b1, q0)
    bmo_rep = bmo_norm(dec.F, flavor="BMO_sharp")
    records.append(ConditionRecord(
        "stream_bmo_sharp", bmo_rep.norm, thr.bmo, bmo_rep.norm <= thr.bmo,
        f"worst entry {bmo_rep.entry}"))

    rho = sum(np.abs(c.values) ** 2 for c in dec.c.components)
    rho = rho + sum(np.abs(c.values) ** 2 for c in dec.h.components)
    rho = rho + np.abs(dec.gamma.values)
    mu = DiscreteMeasure.from_density(ScalarField(grid, rho))

    from formbound.torus import bessel_inv

    def _strengthened() -> DiscreteMeasure:
        # |(1-Lap)^{-1} div b|^2 + |(1-Lap)^{-1} b|^2
        sm_div = bessel_inv(div(b1))
        vals = np.abs(sm_div.values) ** 2
        for comp in b1.components:
            vals = vals + np.abs(bessel_inv(comp).values) ** 2
        return DiscreteMeasure.from_density(ScalarField(grid, vals))

    variants, strong_mu = _run_all([
        lambda: inhomogeneous_variants(mu, thresholds={
            "carleson": thr.carleson,
            "ball_energy": thr.ball_growth,
            "pointwise": thr.trace,
        }),
        _strengthened,
    ])
    records.extend([
        _from_measure(variants["carleson"], thr.carleson),
        _from_measure(variants["ball_energy"], thr.ball_growth),
        _from_measure(variants["pointwise"], thr.trace),
    ])

    trace_rec, _ = _form_record(
        "trace",
        lambda: trace_constant(mu, flavor="inhomogeneous", seed=seed,
                               residual_tol=1e-5, max_iter=4000),
        thr.trace)
    strong_rec, _ = _form_record(
        "strengthened_drift",
        lambda: trace_constant(strong_mu, flavor="inhomogeneous", seed=seed,
                               residual_tol=1e-5, max_iter=4000),
        thr.trace)
    form_rec, _ = _form_record(
        "form_norm",
        lambda: form_norm(A, b, q, flavor="inhomogeneous", seed=seed,
                          residual_tol=1e-5, max_iter=4000),
        thr.trace)
    records.extend([trace_rec, strong_rec, form_rec])

    prov = _provenance(grid, thr, seed=seed, flavor="inhomogeneous")
    overall = _fold(records, (
        "symmetric_sup", "stream_bmo_sharp", "carleson_w12", "ball_energy_w12",
        "pointwise_w12", "trace", "strengthened_drift", "form_norm"))
    return Verdict("inhomogeneous", tuple(records), overall, prov)


def assess_magnetic(
    a: VectorField,
    q: ScalarField | None,
    thresholds: Thresholds | None = None,
    eps: float = 0.5,
    seed: int = 0,
) -> Verdict:
    """Magnetic pipeline on the effective potential q + |a|^2.

    The gauge field enters through its rotation (stream BMO) and its
    divergence; with a = 0 the records reduce exactly to the q-only
    homogeneous battery.
    """
    thr = thresholds or Thresholds()
    if any(not c.is_real for c in a.components):
        raise ValueError("magnetic gauge field must be real")
    grid = a.grid
    q0 = q if q is not None else _zero_scalar(grid)
    if q0.grid != grid:
        raise ValueError("coefficient grids differ")
    if np.iscomplexobj(q0.values):
        raise ValueError("magnetic potential must be real")

    asq = sum(c.values**2 for c in a.components)
    q_eff = ScalarField(grid, q0.values + asq)
    prov = _provenance(grid, thr, eps=eps, seed=seed, flavor="magnetic")

    records: list[ConditionRecord] = []
    if grid.dim == 2:
        div_mass = lp_norm(div(a), 1.0)
        q_mass = lp_norm(q_eff, 1.0)
        div_rec = ConditionRecord("n2_divergence_mass", div_mass, thr.null_tolerance,
                                  div_mass <= thr.null_tolerance, "L1 of div a")
        q_rec = ConditionRecord(
            "n2_effective_potential_mass", q_mass, thr.null_tolerance,
            q_mass <= thr.null_tolerance, "L1 of q + |a|^2")
        records.extend([div_rec, q_rec])
        if not (div_rec.passed and q_rec.passed):
            return Verdict("magnetic", tuple(records), "certified_unbounded_n2", prov)
        rot = curl(a)[0, 1]
        pot = inv_laplacian(rot, annihilate_mean=True)
        rep = bmo_norm(pot)
        records.append(ConditionRecord("rotation_bmo", rep.norm, thr.bmo,
                                       rep.norm <= thr.bmo))
        overall = _fold(records, ("rotation_bmo",))
        return Verdict("magnetic", tuple(records), overall, prov)

    dec = hodge_decompose(a)
    bmo_rep = bmo_norm(dec.F)
    records.append(ConditionRecord(
        "stream_bmo", bmo_rep.norm, thr.bmo, bmo_rep.norm <= thr.bmo,
        f"worst entry {bmo_rep.entry}"))

    rho = sum(np.abs(c.values) ** 2 for c in dec.c.components)
    rho = rho + _gradient_energy_density(q_eff)
    records.extend(_admissibility_records(grid, rho, eps, thr))

    a_arg = None if float(np.abs(asq).max()) == 0.0 else a
    form_rec, _ = _form_record(
        "form_norm",
        lambda: form_norm(None, a_arg, q_eff, seed=seed,
                          residual_tol=1e-5, max_iter=4000))
    records.append(form_rec)

    overall = _fold(
        records,
        ("stream_bmo", "carleson", "ball_growth", "form_norm"),
        ("fefferman_phong",),
    )
    return Verdict("magnetic", tuple(records), overall, prov)


def _decay_factors(profile: list[tuple[float, float]]) -> list[float]:
    """Per-halving shrink factors of a (delta, value) profile, larger delta
    first.  A zero tail contributes an infinite factor."""
    pts = sorted(profile, key=lambda p: -p[0])
    out = []
    for (d1, v1), (d2, v2) in zip(pts, pts[1:]):
        steps = np.log2(d1 / d2)
        if steps <= 0:
            raise ValueError("profile deltas must be distinct")
        if v2 == 0.0:
            out.append(np.inf if v1 > 0 else 1.0)
        else:
            out.append(float((v1 / v2) ** (1.0 / steps)))
    return out


def assess_infinitesimal(
    b: VectorField | None,
    q: ScalarField | None,
    deltas,
    thresholds: Thresholds | None = None,
    seed: int = 0,
) -> Verdict:
    """Small-scale pipeline: does the form constant vanish with the scale?

    Reports the oscillation profile of the stream part over cubes of side
    <= delta and the localized trace constants of (|b|^2 + |q|) dx over a
    delta-graded cube family, with per-halving decay flags.
    """
    thr = thresholds or Thresholds()
    grid = _common_grid(b, q)
    b0 = b if b is not None else _zero_vector(grid)
    q0 = q if q is not None else _zero_scalar(grid)

    deltas = sorted({float(d) for d in deltas}, reverse=True)
    if len(deltas) < 2:
        raise ValueError("need at least two deltas for a profile")
    h = grid.spacing
    if deltas[-1] < 2.0 * h * (1.0 - 1e-12):
        raise ValueError(f"delta {deltas[-1]} below resolution (needs >= 2h = {2*h})")

    dec = inhomogeneous_decompose(b0, q0)
    vmo = vmo_profile(dec.F, deltas)

    dens = sum(np.abs(c.values) ** 2 for c in b0.components) + np.abs(q0.values)
    mu = DiscreteMeasure.from_density(ScalarField(grid, dens))

    n = grid.points_per_axis
    peak_flat = int(mu.cell_mass.argmax())
    peak = np.unravel_index(peak_flat, grid.shape)
    anchors = [tuple(int(i) for i in peak), (n // 2,) * grid.dim, (0,) * grid.dim]

    def _local(delta: float) -> float:
        side = max(1, int(round(delta / h)))
        best = 0.0
        for corner in anchors:
            mask = np.zeros(grid.shape, dtype=bool)
            sel = tuple(
                (np.arange(side) + c) % n for c in corner
            )
            mask[np.ix_(*sel)] = True
            est = trace_constant(mu, mask=mask, seed=seed, rtol=1e-7,
                                 residual_tol=1e-5, max_iter=4000)
            best = max(best, est.value)
        return best

    local = [(d, v) for d, v in zip(deltas, _run_all([
        (lambda dd: (lambda: _local(dd)))(d) for d in deltas
    ]))]

    def _decay_record(name: str, profile, cut: float) -> ConditionRecord:
        if all(v == 0.0 for _, v in profile):
            return ConditionRecord(name, np.inf, cut, True, "profile identically 0")
        factors = _decay_factors(profile)
        worst = min(factors)
        return ConditionRecord(name, worst, cut, worst >= cut,
                               "per-halving decay factor (larger is better)")

    records = (
        _decay_record("vmo_decay", vmo, thr.vmo_decay),
        _decay_record("local_trace_decay", local, thr.trace_decay),
    )
    profiles = {
        "delta": [d for d, _ in vmo],
        "vmo": [v for _, v in vmo],
        "local_trace": [v for _, v in local],
    }
    prov = _provenance(grid, thr, seed=seed, flavor="infinitesimal",
                       deltas=list(deltas))
    overall = _fold(records, ("vmo_decay", "local_trace_decay"))
    return Verdict("infinitesimal", records, overall, prov, profiles)
