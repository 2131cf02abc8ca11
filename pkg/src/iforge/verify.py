"""Runtime invariant suites with measured residuals.

Each suite re-derives a handful of the package's contracts from
scratch and reports the worst measured residual against the published
tolerance, so a normalization or sign regression anywhere in the stack
shows up as a named FAIL line rather than a silent drift.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import algebra, background, forms, gluing, instanton, quadrature
from .forms import Chart, MetricModel

FOUR_PI_SQ = 4.0 * math.pi**2

_SPLIT = background.CurvatureSplit(
    fminus=np.array([[0.3, -0.2, 0.1], [0.4, 0.1, -0.5], [-0.1, 0.6, 0.2]]),
    fplus=np.array([[0.5, 0.1, -0.3], [0.2, 0.7, 0.1], [-0.2, 0.3, 0.4]]),
)


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual < self.tolerance


def _hat(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _cylinder_points(rng, n: int, t_lo=-3.0, t_hi=2.0) -> np.ndarray:
    w = rng.normal(size=(n, 4))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    t = rng.uniform(t_lo, t_hi, size=n)
    return np.concatenate([t[:, None], w], axis=1)


def suite_algebra() -> List[Check]:
    rng = np.random.default_rng(101)
    checks = []

    frame = np.eye(3)
    gram = algebra.inner(frame[:, None, :], frame[None, :, :])
    checks.append(
        Check(
            "algebra/inner-scale",
            float(np.max(np.abs(gram - 4.0 * np.eye(3)))),
            1e-12,
            "identity frame Gram matrix against 4I",
        )
    )

    a, b = rng.normal(size=(2, 256, 3))
    trace_form = -2.0 * np.einsum("nij,nji->n", _hat(a), _hat(b))
    checks.append(
        Check(
            "algebra/inner-matches-minus-two-trace",
            float(np.max(np.abs(trace_form - algebra.inner(a, b)))),
            1e-10,
            "matrix trace form against the coordinate inner product",
        )
    )

    c = rng.normal(size=(256, 3))
    anti = algebra.bracket(a, b) + algebra.bracket(b, a)
    jacobi = (
        algebra.bracket(a, algebra.bracket(b, c))
        + algebra.bracket(b, algebra.bracket(c, a))
        + algebra.bracket(c, algebra.bracket(a, b))
    )
    checks.append(
        Check(
            "algebra/bracket-antisymmetry-jacobi",
            float(max(np.max(np.abs(anti)), np.max(np.abs(jacobi)))),
            1e-12,
        )
    )

    worst = 0.0
    for _ in range(200):
        v = rng.normal(size=(3, 3))
        for orientation in (-1, 1):
            basis = algebra.choose_positive_basis(
                v[0], v[1], v[2], orientation=orientation
            )
            ortho, det_gap = basis.residuals()
            obj = algebra.basis_objective(basis, v[0], v[1], v[2])
            worst = max(worst, ortho, abs(det_gap))
            if obj <= 0.0:
                worst = max(worst, 1.0)
    checks.append(
        Check(
            "algebra/oriented-basis-construction",
            worst,
            1e-12,
            "orthonormality, orientation, positive objective on random frames",
        )
    )
    return checks


def suite_forms() -> List[Check]:
    rng = np.random.default_rng(202)
    flat = MetricModel.flat()
    cyl = MetricModel.cylinder()
    checks = []

    x = rng.normal(size=(200, 4))
    worst = 0.0
    for i in range(3):
        dm = forms.exterior_d(forms.euclidean_catalog_form(i, "asd"), x)
        dp = forms.exterior_d(forms.euclidean_catalog_form(i, "sd"), x)
        sm = forms.hodge_star_coeffs(dm, flat, x, Chart.EUCLIDEAN4)
        sp = forms.hodge_star_coeffs(dp, flat, x, Chart.EUCLIDEAN4)
        worst = max(worst, float(np.max(np.abs(sm + dm))), float(np.max(np.abs(sp - dp))))
    checks.append(
        Check("forms/catalog-duality-euclidean", worst, 1e-10)
    )

    pts = _cylinder_points(rng, 200)
    worst = 0.0
    for i in range(3):
        for kind, sign in (("asd", -1.0), ("sd", 1.0)):
            v = forms.exterior_d(forms.cylinder_exp_form(i, kind, 2.0), pts)
            star = forms.hodge_star_coeffs(v, cyl, pts, Chart.CYLINDER)
            worst = max(worst, float(np.max(np.abs(star - sign * v))))
    checks.append(
        Check(
            "forms/catalog-duality-cylinder",
            worst,
            1e-10,
            "rising exponential catalog forms keep their duality type",
        )
    )

    av = rng.normal(size=(64, 5, 3))
    bv = rng.normal(size=(64, 5, 3))
    wab = forms.wedge_bracket_coeffs(av, bv)
    wba = forms.wedge_bracket_coeffs(bv, av)
    checks.append(
        Check(
            "forms/wedge-bracket-antisymmetry",
            float(np.max(np.abs(wab + wba.transpose(0, 2, 1, 3)))),
            1e-12,
        )
    )

    field = forms.cylinder_exp_form(1, "sd", 2.0)
    closed = forms.exterior_d(field, pts)
    probe = forms.FormField(
        chart=field.chart,
        degree=field.degree,
        coeff=field.coeff,
        closed_d=None,
        name="fd-probe",
    )
    fd = forms.exterior_d(probe, pts)
    checks.append(
        Check(
            "forms/closed-derivative-matches-fd",
            float(np.max(np.abs(closed - fd))),
            1e-5,
            "analytic exterior derivative against central differences",
        )
    )
    return checks


def suite_instanton() -> List[Check]:
    rng = np.random.default_rng(303)
    flat = MetricModel.flat()
    gauge = instanton.InstantonGauge(
        instanton.GaugeKind.REGULAR, 1.0, algebra.IDENTITY_BASIS
    )
    field = instanton.connection_field(gauge)
    region = quadrature.RegionSpec.full_r4()
    checks = []

    energy, _ = quadrature.ym_energy_with_error(field, region, flat, rule=5)
    checks.append(
        Check(
            "instanton/energy-16pi2",
            abs(energy / (16.0 * math.pi**2) - 1.0),
            1e-5,
            f"measured {energy:.6f}",
        )
    )

    p1 = quadrature.pontryagin_number(field, region, flat, rule=5)
    checks.append(
        Check("instanton/charge-minus-four", abs(p1 + 4.0) / 4.0, 1e-5,
              f"measured {p1:.8f}")
    )

    p1_rev = quadrature.pontryagin_number(
        instanton.orientation_reversed(gauge), region, flat, rule=5
    )
    checks.append(
        Check("instanton/reversed-charge-plus-four", abs(p1_rev - 4.0) / 4.0, 1e-5,
              f"measured {p1_rev:.8f}")
    )

    x = rng.normal(size=(200, 4))
    fv = instanton.curvature_closed(gauge, x)
    star = forms.hodge_star_coeffs(fv, flat, x, Chart.EUCLIDEAN4)
    scale = float(np.max(np.abs(fv)))
    checks.append(
        Check(
            "instanton/curvature-anti-self-dual",
            float(np.max(np.abs(star + fv))) / scale,
            1e-10,
        )
    )

    m0 = forms.isotropy_matrix(instanton.curvature_closed(gauge, np.zeros((1, 4))), flat)
    checks.append(
        Check(
            "instanton/isotropy-at-origin",
            float(np.max(np.abs(m0[0] / 96.0 - np.eye(4)))),
            1e-8,
            "direction-correlation matrix against 96I",
        )
    )

    pts = rng.normal(size=(20, 4))
    m = forms.isotropy_matrix(instanton.curvature_closed(gauge, pts), flat)
    diag = np.einsum("nii->ni", m)
    off = m - diag[:, :, None] * np.eye(4)[None]
    spread = np.max(diag, axis=1) - np.min(diag, axis=1)
    checks.append(
        Check(
            "instanton/isotropy-off-center",
            float(max(np.max(np.abs(off)), np.max(spread))),
            1e-10,
            "off-diagonal size and diagonal spread at random points",
        )
    )
    return checks


def suite_cylinder() -> List[Check]:
    rng = np.random.default_rng(404)
    pts = _cylinder_points(rng, 1000)
    checks = []

    checks.append(
        Check(
            "cylinder/twist-identity",
            float(np.max(np.abs(gluing.twist_identity_residual(pts)))),
            1e-10,
        )
    )
    worst = max(
        float(np.max(np.abs(gluing.obv_identity_check(pts, kind="sd")))),
        float(np.max(np.abs(gluing.obv_identity_check(pts, kind="asd")))),
    )
    checks.append(Check("cylinder/rate-splitting-identity", worst, 1e-10))

    sphere = quadrature.sphere_rule(9)
    t_mat = gluing.twist_matrix(sphere.nodes)
    avg = np.einsum("n,nij->ij", sphere.weights, t_mat) / np.sum(sphere.weights)
    checks.append(
        Check(
            "cylinder/twist-sphere-average",
            float(np.max(np.abs(avg))),
            1e-10,
            "entrywise mean of the twist matrix over the unit sphere",
        )
    )

    c0 = gluing.c0_constant()
    checks.append(
        Check(
            "cylinder/slice-constant-4pi2",
            abs(c0 / FOUR_PI_SQ - 1.0),
            1e-8,
            f"measured {c0:.10f}",
        )
    )
    far = gluing.c0_constant(t_values=(-3.0, 2.0))
    checks.append(
        Check(
            "cylinder/slice-constant-spread",
            abs(far - c0) / c0,
            1e-10,
            "slice constant across well separated slice positions",
        )
    )

    field = forms.cylinder_exp_form(0, "sd", 2.0)
    v = forms.exterior_d(field, pts)
    raw = 0.5 * np.sum(v * v, axis=(1, 2, 3))
    norms = forms.pointwise_norm2(v, 2, MetricModel.cylinder(), pts, Chart.CYLINDER)
    expect = 8.0 * np.exp(4.0 * pts[:, 0])
    residual = max(
        float(np.max(np.abs(raw / expect - 1.0))),
        float(np.max(np.abs(norms / (4.0 * expect) - 1.0))),
    )
    checks.append(
        Check(
            "cylinder/exp-form-norm-closed-form",
            residual,
            1e-10,
            "coefficient half-sum against 8 e^{4t}, scaled norm against 32 e^{4t}",
        )
    )
    return checks


def suite_gluing() -> List[Check]:
    rng = np.random.default_rng(505)
    checks = []

    worst = 0.0
    for _ in range(200):
        v = rng.normal(size=(3, 3))
        basis = algebra.choose_positive_basis(v[0], v[1], v[2], orientation=-1)
        back = gluing.pairing_frame(gluing.pairing_frame(basis))
        worst = max(worst, float(np.max(np.abs(back.matrix - basis.matrix))))
    checks.append(Check("gluing/pairing-frame-involution", worst, 1e-12))

    worst = 0.0
    for _ in range(200):
        split = background.CurvatureSplit(
            fminus=rng.normal(size=(3, 3)), fplus=rng.normal(size=(3, 3))
        )
        b = gluing.bubble_basis_for(split)
        ortho, det_gap = b.residuals()
        worst = max(worst, ortho, abs(det_gap))
        if gluing.interaction_coefficient(split, gluing.pairing_frame(b)) <= 0.0:
            worst = max(worst, 1.0)
    checks.append(
        Check(
            "gluing/bubble-frame-properties",
            worst,
            1e-12,
            "orthonormal, unit determinant, positive pairing",
        )
    )

    fp = np.zeros((3, 3))
    fp[0, 0] = 1.0
    single = background.CurvatureSplit(fminus=np.zeros((3, 3)), fplus=fp)
    zero = background.CurvatureSplit(fminus=np.zeros((3, 3)), fplus=np.zeros((3, 3)))
    worst = max(
        abs(gluing.interaction_coefficient(single, algebra.IDENTITY_BASIS) - 4.0),
        abs(gluing.interaction_coefficient(zero, algebra.IDENTITY_BASIS)),
    )
    checks.append(Check("gluing/interaction-coefficient-examples", worst, 1e-12))

    bg = background.BackgroundConnection(
        f0=background.merge_split(_SPLIT),
        quad=background.sample_quadratic_perturbation(17),
    )
    G = gluing.glued_connection(bg, 1.25e-4, 0.1)

    res = gluing.slice_vanishing_residual(G, (-6.0, -5.0, -4.5, -4.0, -3.0))
    checks.append(
        Check(
            "gluing/slice-pairing-vanishes",
            float(np.max(np.abs(res))),
            1e-9,
            "normalized cross pairing of the bare leading derivatives",
        )
    )

    cut = G.cutoffs
    worst = 0.0
    for t_val, reference in (
        (cut.t_min, lambda p: sum(
            instanton.cylinder_expansion(G.lam, p, G.bubble.bubble_basis))),
        (cut.t_max, lambda p: sum(background.cylinder_form(bg, p))),
    ):
        pts = _cylinder_points(rng, 40, t_lo=t_val, t_hi=t_val)
        nf = gluing.neck_field(G).evaluate(pts)
        ref = reference(pts)
        worst = max(
            worst, float(np.max(np.abs(nf - ref)) / np.max(np.abs(ref)))
        )
    checks.append(
        Check(
            "gluing/seam-consistency",
            worst,
            1e-12,
            "neck field against both expansions at the neck edges",
        )
    )

    grid = np.linspace(cut.t_min, cut.t_max, 301)
    partition = float(np.max(np.abs(cut.phi1(grid) + cut.phi2(grid) - 1.0)))
    checks.append(Check("gluing/cutoff-partition-of-unity", partition, 1e-12))
    return checks


SUITES: Dict[str, Callable[[], List[Check]]] = {
    "algebra": suite_algebra,
    "forms": suite_forms,
    "instanton": suite_instanton,
    "cylinder": suite_cylinder,
    "gluing": suite_gluing,
}

SUITE_ORDER = ("algebra", "forms", "instanton", "cylinder", "gluing")


def run_suite(name: str) -> List[Check]:
    if name == "all":
        out: List[Check] = []
        for key in SUITE_ORDER:
            out.extend(SUITES[key]())
        return out
    if name not in SUITES:
        raise ValueError(
            f"unknown suite {name!r}; choose from {', '.join(SUITE_ORDER)} or all"
        )
    return SUITES[name]()


def format_report(checks: Sequence[Check]) -> List[str]:
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        line = f"{status} {c.name} residual={c.residual:.3e} tol={c.tolerance:.1e}"
        if c.detail:
            line += f" ({c.detail})"
        lines.append(line)
    failed = sum(1 for c in checks if not c.passed)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return lines
