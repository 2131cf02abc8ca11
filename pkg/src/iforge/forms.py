"""Algebra-valued differential forms on two charts.

Charts
------
Euclidean4
    Points are arrays of shape (n, 4).
Cylinder
    Points are arrays of shape (n, 5) laid out as [t, w1, w2, w3, w4]
    with |w| = 1.  The chart map sends (t, w) to e^t * w, which covers
    Euclidean space minus the origin and preserves orientation.

Coefficient conventions
-----------------------
A degree-1 field evaluates to (n, 4, 3) on Euclidean4 and (n, 5, 3) on
the cylinder; the trailing axis holds algebra coordinates.  A degree-2
field evaluates to the full antisymmetric coefficient array (n, 4, 4, 3)
or (n, 5, 5, 3), so the form equals sum_{i<j} V_ij dx_i^dx_j.  Pointwise
norms treat {dx_i^dx_j}_{i<j} as orthonormal in the flat metric, which
is the half-sum rule |V|^2 = (1/2) sum_{ij} <V_ij, V_ij>.

Cylinder coefficient closures are written as formulas in the ambient
five coordinates (t, w1..w4) that remain valid slightly off the unit
sphere.  Finite differencing exploits this: the ambient derivative is
taken first and the spatial legs are projected onto the sphere tangent
afterwards, which agrees with the intrinsic exterior derivative.

The rotation coefficient catalog is generated by two triples of
antisymmetric orthogonal 4x4 matrices.  The "minus" triple produces
anti-self-dual constant 2-forms and the "plus" triple self-dual ones;
both triples satisfy G_i G_i^T = I.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np

from . import algebra
from .errors import (
    ChartMismatch,
    DegenerateMetric,
    NotAntisymmetric,
    OutOfDomain,
)


class Chart(Enum):
    EUCLIDEAN4 = "euclidean4"
    CYLINDER = "cylinder"


class MetricKind(Enum):
    FLAT = "flat"
    CYLINDER_PRODUCT = "cylinder_product"
    CONFORMAL_NORMAL = "conformal_normal"


_UNIT_TOL = 1e-12


def _levi_civita4() -> np.ndarray:
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        inv = sum(
            1
            for a in range(4)
            for b in range(a + 1, 4)
            if perm[a] > perm[b]
        )
        eps[perm] = -1.0 if inv % 2 else 1.0
    return eps


LEVI_CIVITA4 = _levi_civita4()

# Antisymmetric orthogonal generators.  The "minus" family integrates to
# the anti-self-dual constant 2-forms 2*G_i, the "plus" family to the
# self-dual ones 2*H_i.
ASD_GENERATORS = np.array(
    [
        [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
        [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]],
        [[0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]],
    ],
    dtype=float,
)
SD_GENERATORS = np.array(
    [
        [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
        [[0, 0, 1, 0], [0, 0, 0, -1], [-1, 0, 0, 0], [0, 1, 0, 0]],
        [[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]],
    ],
    dtype=float,
)


def generators(kind: str) -> np.ndarray:
    """Return the (3, 4, 4) generator stack for kind 'asd' or 'sd'."""
    if kind == "asd":
        return ASD_GENERATORS
    if kind == "sd":
        return SD_GENERATORS
    raise ValueError(f"unknown generator kind {kind!r}")


def rotation_coefficients(x: np.ndarray, kind: str) -> np.ndarray:
    """Coefficient vectors of the catalog 1-forms at Euclidean points.

    Returns shape (n, 3, 4): entry [n, i] is the coefficient covector of
    the i-th catalog form, which equals -G_i x.  The same formula serves
    on the sphere (x = w), where the result is automatically tangential.
    """
    x = np.asarray(x, dtype=float)
    return -np.einsum("iab,nb->nia", generators(kind), x)


def tangent_projector(w: np.ndarray) -> np.ndarray:
    """Projector onto the tangent space of the sphere |w| = const.

    Shape (n, 4, 4).  Uses w w^T / |w|^2 so it extends smoothly off the
    unit sphere, which the finite-difference path relies on.
    """
    w = np.asarray(w, dtype=float)
    n2 = np.einsum("na,na->n", w, w)
    return np.eye(4) - np.einsum("na,nb->nab", w, w) / n2[:, None, None]


@dataclass(frozen=True)
class RiemannTensor:
    """Algebraic curvature tensor R_pijq at a point, stored as (4,4,4,4).

    The quadratic metric model reads g_pq(x) = delta_pq + (1/3) R_pijq
    x_i x_j.  Construction validates antisymmetry in (p, i) and (j, q),
    pair symmetry, and the first Bianchi identity to 1e-12 relative
    residual; when ricci_flat is set the contraction sum_p R_pijp must
    vanish as well.
    """

    components: np.ndarray
    ricci_flat: bool = True

    def __post_init__(self):
        r = np.asarray(self.components, dtype=float)
        if r.shape != (4, 4, 4, 4):
            raise ValueError("curvature components must have shape (4,4,4,4)")
        object.__setattr__(self, "components", r)
        scale = max(1.0, float(np.abs(r).max()))
        tol = 1e-12 * scale
        checks = {
            "antisymmetry in first pair": r + r.transpose(1, 0, 2, 3),
            "antisymmetry in second pair": r + r.transpose(0, 1, 3, 2),
            "pair symmetry": r - r.transpose(2, 3, 0, 1),
            "first Bianchi identity": (
                r + r.transpose(0, 2, 3, 1) + r.transpose(0, 3, 1, 2)
            ),
        }
        if self.ricci_flat:
            checks["Ricci contraction"] = np.einsum("pijp->ij", r)
        for name, resid in checks.items():
            worst = float(np.abs(resid).max())
            if worst > tol:
                raise ValueError(
                    f"curvature tensor violates {name}: residual {worst:.3e}"
                )

    def ricci(self) -> np.ndarray:
        return np.einsum("pijp->ij", self.components)

    @staticmethod
    def _constraint_matrix(include_ricci: bool) -> np.ndarray:
        def flat(p, i, j, q):
            return ((p * 4 + i) * 4 + j) * 4 + q

        rows = []
        rng4 = range(4)
        for p, i, j, q in itertools.product(rng4, rng4, rng4, rng4):
            row = np.zeros(256)
            row[flat(p, i, j, q)] += 1.0
            row[flat(i, p, j, q)] += 1.0
            rows.append(row)
            row = np.zeros(256)
            row[flat(p, i, j, q)] += 1.0
            row[flat(p, i, q, j)] += 1.0
            rows.append(row)
            row = np.zeros(256)
            row[flat(p, i, j, q)] += 1.0
            row[flat(j, q, p, i)] -= 1.0
            rows.append(row)
            row = np.zeros(256)
            row[flat(p, i, j, q)] += 1.0
            row[flat(p, j, q, i)] += 1.0
            row[flat(p, q, i, j)] += 1.0
            rows.append(row)
        if include_ricci:
            for i, j in itertools.product(rng4, rng4):
                row = np.zeros(256)
                for p in rng4:
                    row[flat(p, i, j, p)] += 1.0
                rows.append(row)
        return np.array(rows)

    @classmethod
    def _nullspace_pick(cls, include_ricci: bool, skip: int = 0) -> np.ndarray:
        mat = cls._constraint_matrix(include_ricci)
        _, s, vh = np.linalg.svd(mat, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * s[0]))
        null = vh[rank:].T
        skipped = 0
        for c in range(256):
            v = null @ null[c]
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                if skipped < skip:
                    skipped += 1
                    continue
                v = v / norm
                if v[c] < 0:
                    v = -v
                return v.reshape(4, 4, 4, 4)
        raise RuntimeError("constraint nullspace is empty")

    @classmethod
    def sample_ricci_flat(cls) -> "RiemannTensor":
        """Deterministic unit-norm Ricci-flat curvature tensor.

        Solves the full linear constraint set, then projects the
        lexicographically first component direction with a nonzero
        shadow onto the nullspace and normalizes with a fixed sign.
        """
        return cls(cls._nullspace_pick(include_ricci=True))

    @classmethod
    def sample_generic(cls) -> "RiemannTensor":
        """Deterministic curvature tensor with nonvanishing Ricci trace.

        Same construction without the Ricci constraint; directions whose
        projection happens to be Ricci-flat are skipped.
        """
        skip = 0
        while True:
            comps = cls._nullspace_pick(include_ricci=False, skip=skip)
            if np.abs(np.einsum("pijp->ij", comps)).max() > 1e-6:
                return cls(comps, ricci_flat=False)
            skip += 1


@dataclass(frozen=True)
class MetricModel:
    """Background metric: flat, product cylinder, or quadratic normal model."""

    kind: MetricKind
    curv: Optional[RiemannTensor] = None
    ball_radius: float = 1.0

    @classmethod
    def flat(cls) -> "MetricModel":
        return cls(MetricKind.FLAT)

    @classmethod
    def cylinder(cls) -> "MetricModel":
        return cls(MetricKind.CYLINDER_PRODUCT)

    @classmethod
    def conformal_normal(
        cls, curv: RiemannTensor, ball_radius: float = 1.0
    ) -> "MetricModel":
        return cls(MetricKind.CONFORMAL_NORMAL, curv=curv, ball_radius=ball_radius)

    @property
    def chart(self) -> Chart:
        if self.kind is MetricKind.CYLINDER_PRODUCT:
            return Chart.CYLINDER
        return Chart.EUCLIDEAN4

    def metric_at(self, x: np.ndarray) -> np.ndarray:
        """g_pq at Euclidean points, shape (n, 4, 4)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind is MetricKind.FLAT:
            return np.broadcast_to(np.eye(4), (x.shape[0], 4, 4)).copy()
        if self.kind is MetricKind.CONFORMAL_NORMAL:
            r = self.curv.components
            return np.eye(4) + np.einsum("pijq,ni,nj->npq", r, x, x) / 3.0
        raise ChartMismatch("product cylinder metric has no Euclidean matrix")

    def _checked_metric(self, x: np.ndarray) -> np.ndarray:
        g = self.metric_at(x)
        if self.kind is not MetricKind.FLAT:
            eig = np.linalg.eigvalsh(g)
            if np.any(eig[:, 0] <= 0.0):
                raise DegenerateMetric(
                    "metric loses positivity at a requested point"
                )
        return g

    def inverse_metric_at(self, x: np.ndarray) -> np.ndarray:
        g = self._checked_metric(x)
        if self.kind is MetricKind.FLAT:
            return g
        return np.linalg.inv(g)

    def sqrt_det_at(self, x: np.ndarray) -> np.ndarray:
        g = self._checked_metric(x)
        if self.kind is MetricKind.FLAT:
            return np.ones(g.shape[0])
        sign, logdet = np.linalg.slogdet(g)
        if np.any(sign <= 0):
            raise DegenerateMetric("metric determinant is not positive")
        return np.exp(0.5 * logdet)


def check_points(points: np.ndarray, chart: Chart) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if chart is Chart.EUCLIDEAN4:
        if points.shape[-1] != 4:
            raise ChartMismatch("Euclidean points must be 4-vectors")
    else:
        if points.shape[-1] != 5:
            raise ChartMismatch("cylinder points must be (t, w) 5-vectors")
        norms = np.linalg.norm(points[:, 1:], axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise ChartMismatch("cylinder sphere factor must be a unit vector")
    return points


def chart_map(points: np.ndarray) -> np.ndarray:
    """Cylinder -> Euclidean, (t, w) -> e^t w."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.exp(points[:, :1]) * points[:, 1:]


def _project_cylinder(coeffs: np.ndarray, w: np.ndarray, degree: int) -> np.ndarray:
    proj = tangent_projector(w)
    out = coeffs.copy()
    if degree == 1:
        out[:, 1:] = np.einsum("nab,nbc->nac", proj, coeffs[:, 1:])
    else:
        out[:, 1:, 1:] = np.einsum(
            "nab,nbcx,ncd->nadx", proj, coeffs[:, 1:, 1:], proj, optimize=True
        )
        ts = np.einsum("nab,nbx->nax", proj, coeffs[:, 0, 1:])
        out[:, 0, 1:] = ts
        out[:, 1:, 0] = -ts
    return out


@dataclass(frozen=True)
class FormField:
    """Algebra-valued differential form given by a coefficient closure.

    coeff maps points to coefficient arrays in the convention of the
    module docstring.  On the cylinder the closure must tolerate sphere
    factors slightly off unit length; evaluate() projects spatial legs
    tangentially so callers always see canonical coefficients.  closed_d
    (optional) returns the exact exterior derivative; without it,
    exterior_d falls back to central differences with step fd_step.
    """

    chart: Chart
    degree: int
    coeff: Callable[[np.ndarray], np.ndarray]
    closed_d: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-4
    t_range: Optional[Tuple[float, float]] = None
    name: str = ""

    @property
    def derivative_mode(self) -> str:
        return "closed_form" if self.closed_d is not None else "finite_difference"

    def _check_domain(self, points: np.ndarray) -> None:
        if self.chart is Chart.CYLINDER and self.t_range is not None:
            t = points[:, 0]
            lo, hi = self.t_range
            if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
                raise OutOfDomain(
                    f"field {self.name or '<anonymous>'} evaluated outside "
                    f"t range [{lo}, {hi}]"
                )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = check_points(points, self.chart)
        self._check_domain(points)
        vals = np.asarray(self.coeff(points), dtype=float)
        if self.chart is Chart.CYLINDER:
            vals = _project_cylinder(vals, points[:, 1:], self.degree)
        return vals


def scaled_field(field: FormField, factor: float, name: str = "") -> FormField:
    """The same field with coefficients multiplied by a constant."""
    closed = None
    if field.closed_d is not None:
        closed = lambda pts: factor * field.closed_d(pts)
    return FormField(
        chart=field.chart,
        degree=field.degree,
        coeff=lambda pts: factor * field.coeff(pts),
        closed_d=closed,
        fd_step=field.fd_step,
        t_range=field.t_range,
        name=name or field.name,
    )


def add_fields(a: FormField, b: FormField, name: str = "") -> FormField:
    if a.chart is not b.chart or a.degree != b.degree:
        raise ChartMismatch("fields live on different charts or degrees")
    closed = None
    if a.closed_d is not None and b.closed_d is not None:
        closed = lambda pts: a.closed_d(pts) + b.closed_d(pts)
    rng = None
    if a.t_range is not None or b.t_range is not None:
        los = [r[0] for r in (a.t_range, b.t_range) if r is not None]
        his = [r[1] for r in (a.t_range, b.t_range) if r is not None]
        rng = (max(los), min(his))
    return FormField(
        chart=a.chart,
        degree=a.degree,
        coeff=lambda pts: a.coeff(pts) + b.coeff(pts),
        closed_d=closed,
        fd_step=min(a.fd_step, b.fd_step),
        t_range=rng,
        name=name,
    )


# ---------------------------------------------------------------------------
# catalog fields


def _basis_column(i: int) -> np.ndarray:
    v = np.zeros(3)
    v[i] = 1.0
    return v


def euclidean_catalog_form(i: int, kind: str) -> FormField:
    """The i-th catalog 1-form carried on the i-th algebra axis.

    kind 'asd' gives the family whose derivatives are anti-self-dual,
    'sd' the self-dual family.
    """
    gen = generators(kind)[i]
    axis = _basis_column(i)

    def coeff(pts):
        c = -np.einsum("ab,nb->na", gen, np.atleast_2d(pts))
        return c[:, :, None] * axis

    def closed(pts):
        n = np.atleast_2d(pts).shape[0]
        two_form = 2.0 * gen
        return np.broadcast_to(
            two_form[None, :, :, None] * axis, (n, 4, 4, 3)
        ).copy()

    return FormField(
        chart=Chart.EUCLIDEAN4,
        degree=1,
        coeff=coeff,
        closed_d=closed,
        name=f"catalog[{kind},{i}]",
    )


def sphere_catalog_coefficients(w: np.ndarray, kind: str) -> np.ndarray:
    """Tangential catalog covectors on the sphere, shape (n, 3, 4)."""
    return rotation_coefficients(w, kind)


def cylinder_exp_form(i: int, kind: str, rate: float) -> FormField:
    """e^{rate*t} times the i-th spherical catalog form, on axis i.

    The closed-form derivative is
    d(e^{rt} s_i) = e^{rt} (r dt^s_i + 2 P G_i P)
    with s_i the spherical catalog 1-form of the family and P the
    tangent projector; the tangential 2-form part is independent of
    rate.  With rate 2 this is exactly the chart-map pullback of the
    Euclidean catalog derivative.
    """
    gen = generators(kind)[i]
    axis = _basis_column(i)

    def coeff(pts):
        pts = np.atleast_2d(pts)
        t, w = pts[:, 0], pts[:, 1:]
        c = np.zeros((pts.shape[0], 5))
        c[:, 1:] = -np.einsum("ab,nb->na", gen, w)
        c *= np.exp(rate * t)[:, None]
        return c[:, :, None] * axis

    def closed(pts):
        pts = np.atleast_2d(pts)
        t, w = pts[:, 0], pts[:, 1:]
        proj = tangent_projector(w)
        s = -np.einsum("nab,bc,nc->na", proj, gen, w)
        body = np.zeros((pts.shape[0], 5, 5))
        body[:, 0, 1:] = rate * s
        body[:, 1:, 0] = -rate * s
        body[:, 1:, 1:] = 2.0 * np.einsum("nab,bc,ncd->nad", proj, gen, proj)
        body *= np.exp(rate * t)[:, None, None]
        return body[:, :, :, None] * axis

    return FormField(
        chart=Chart.CYLINDER,
        degree=1,
        coeff=coeff,
        closed_d=closed,
        name=f"cyl[{kind},{i},rate={rate}]",
    )


def pullback_to_cylinder(field: FormField, name: str = "") -> FormField:
    """Pull a Euclidean field back through the chart map (t, w) -> e^t w."""
    if field.chart is not Chart.EUCLIDEAN4:
        raise ChartMismatch("pullback expects a Euclidean field")

    def pull1(pts):
        pts = np.atleast_2d(pts)
        t, w = pts[:, 0], pts[:, 1:]
        x = np.exp(t)[:, None] * w
        c = field.coeff(x)
        out = np.zeros((pts.shape[0], 5, 3))
        out[:, 0] = np.exp(t)[:, None] * np.einsum("nac,na->nc", c, w)
        out[:, 1:] = np.exp(t)[:, None, None] * c
        return out

    def pull2(vals, t, w):
        out = np.zeros((t.shape[0], 5, 5, 3))
        ts = np.einsum("nbac,nb->nac", vals, w)
        out[:, 0, 1:] = ts
        out[:, 1:, 0] = -ts
        out[:, 1:, 1:] = vals
        return np.exp(2.0 * t)[:, None, None, None] * out

    if field.degree == 1:
        coeff = pull1
        closed = None
        if field.closed_d is not None:
            def closed(pts):
                pts = np.atleast_2d(pts)
                t, w = pts[:, 0], pts[:, 1:]
                x = np.exp(t)[:, None] * w
                return pull2(field.closed_d(x), t, w)
    else:
        def coeff(pts):
            pts = np.atleast_2d(pts)
            t, w = pts[:, 0], pts[:, 1:]
            x = np.exp(t)[:, None] * w
            return pull2(field.coeff(x), t, w)
        closed = None

    return FormField(
        chart=Chart.CYLINDER,
        degree=field.degree,
        coeff=coeff,
        closed_d=closed,
        fd_step=field.fd_step,
        name=name or f"pullback({field.name})",
    )


def pullback_linear(field: FormField, mat: np.ndarray, name: str = "") -> FormField:
    """Pull a Euclidean field back through the linear map x -> mat @ x.

    Degree-1 coefficients transform as c'(x) = mat^T c(mat x) and the
    closed-form derivative, when present, as mat^T V(mat x) mat.
    """
    if field.chart is not Chart.EUCLIDEAN4:
        raise ChartMismatch("linear pullback expects a Euclidean field")
    mat = np.asarray(mat, dtype=float)

    def coeff(pts):
        pts = np.atleast_2d(pts)
        c = field.coeff(pts @ mat.T)
        if field.degree == 1:
            return np.einsum("ba,nbc->nac", mat, c)
        return np.einsum("ca,db,ncdx->nabx", mat, mat, c)

    closed = None
    if field.degree == 1 and field.closed_d is not None:
        def closed(pts):
            pts = np.atleast_2d(pts)
            v = field.closed_d(pts @ mat.T)
            return np.einsum("ca,db,ncdx->nabx", mat, mat, v)

    return FormField(
        chart=Chart.EUCLIDEAN4,
        degree=field.degree,
        coeff=coeff,
        closed_d=closed,
        fd_step=field.fd_step,
        name=name or f"pullback_linear({field.name})",
    )


def dt_wedge(v: np.ndarray) -> np.ndarray:
    """dt wedge a cylinder 1-form: only the tangential part survives."""
    n = v.shape[0]
    out = np.zeros((n, 5, 5, 3))
    out[:, 0, 1:] = v[:, 1:]
    out[:, 1:, 0] = -v[:, 1:]
    return out


# ---------------------------------------------------------------------------
# pointwise operations


def _require_antisymmetric(v: np.ndarray) -> None:
    swapped = np.swapaxes(v, 1, 2)
    scale = max(1.0, float(np.abs(v).max()))
    if np.abs(v + swapped).max() > 1e-10 * scale:
        raise NotAntisymmetric("degree-2 coefficients must be antisymmetric")


def _star_euclidean(v: np.ndarray, g: MetricModel, x: np.ndarray) -> np.ndarray:
    if g.kind is MetricKind.FLAT:
        return 0.5 * np.einsum("ijkl,nklc->nijc", LEVI_CIVITA4, v)
    ginv = g.inverse_metric_at(x)
    dens = g.sqrt_det_at(x)
    up = np.einsum("nka,nlb,nabc->nklc", ginv, ginv, v)
    star = 0.5 * np.einsum("ijkl,nklc->nijc", LEVI_CIVITA4, up)
    return dens[:, None, None, None] * star


def _star_cylinder(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    alpha = v[:, 0, 1:]
    body = v[:, 1:, 1:]
    out = np.zeros_like(v)
    ts = 0.5 * np.einsum("pijk,np,njkc->nic", LEVI_CIVITA4, w, body)
    out[:, 0, 1:] = ts
    out[:, 1:, 0] = -ts
    out[:, 1:, 1:] = np.einsum("pijk,np,nic->njkc", LEVI_CIVITA4, w, alpha)
    return out


def hodge_star(omega: FormField, g: MetricModel, x: np.ndarray) -> np.ndarray:
    """Hodge dual coefficients of a degree-2 field at the given points.

    Orientation: dx1^dx2^dx3^dx4 is positive on Euclidean4 and
    dt^(sphere volume) is positive on the cylinder.
    """
    if omega.degree != 2:
        raise ValueError("hodge_star expects a degree-2 field")
    x = check_points(x, omega.chart)
    v = omega.evaluate(x)
    return hodge_star_coeffs(v, g, x, omega.chart)


def hodge_star_coeffs(
    v: np.ndarray, g: MetricModel, x: np.ndarray, chart: Chart
) -> np.ndarray:
    """Hodge dual of raw degree-2 coefficients."""
    _require_antisymmetric(v)
    if chart is Chart.CYLINDER:
        if g.kind is not MetricKind.CYLINDER_PRODUCT:
            raise ChartMismatch("cylinder coefficients need the product metric")
        return _star_cylinder(v, np.atleast_2d(x)[:, 1:])
    if g.kind is MetricKind.CYLINDER_PRODUCT:
        raise ChartMismatch("product metric applies to the cylinder chart only")
    return _star_euclidean(v, g, np.atleast_2d(x))


def sd_asd_split(
    omega: FormField, g: MetricModel, x: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Split into (self-dual, anti-self-dual) coefficient arrays."""
    v = omega.evaluate(x)
    star = hodge_star_coeffs(v, g, x, omega.chart)
    return 0.5 * (v + star), 0.5 * (v - star)


def split_coeffs(
    v: np.ndarray, g: MetricModel, x: np.ndarray, chart: Chart
) -> Tuple[np.ndarray, np.ndarray]:
    star = hodge_star_coeffs(v, g, x, chart)
    return 0.5 * (v + star), 0.5 * (v - star)


def exterior_d(omega: FormField, x: np.ndarray) -> np.ndarray:
    """Exterior derivative coefficients of a degree-1 field.

    Uses the closed-form derivative when the field carries one,
    otherwise central differences with the field's step.  Cylinder
    results are projected tangentially either way.
    """
    if omega.degree != 1:
        raise ValueError("exterior_d expects a degree-1 field")
    x = check_points(x, omega.chart)
    omega._check_domain(x)
    if omega.closed_d is not None:
        v = np.asarray(omega.closed_d(x), dtype=float)
    else:
        v = _fd_exterior_d(omega, x)
    if omega.chart is Chart.CYLINDER:
        v = _project_cylinder(v, x[:, 1:], 2)
    return v


def _fd_exterior_d(omega: FormField, x: np.ndarray) -> np.ndarray:
    h = omega.fd_step
    dim = x.shape[1]
    grads = np.empty((x.shape[0], dim, dim, 3))
    for a in range(dim):
        xp = x.copy()
        xp[:, a] += h
        xm = x.copy()
        xm[:, a] -= h
        grads[:, a] = (
            np.asarray(omega.coeff(xp), dtype=float)
            - np.asarray(omega.coeff(xm), dtype=float)
        ) / (2.0 * h)
    return grads - grads.transpose(0, 2, 1, 3)


def wedge_bracket(a: FormField, b: FormField, x: np.ndarray) -> np.ndarray:
    """Bracket-valued wedge of two degree-1 fields.

    Coefficients are (1/2)([a_i, b_j] - [a_j, b_i]), so the square of a
    single field reproduces the plain commutator [a_i, a_j].
    """
    if a.chart is not b.chart:
        raise ChartMismatch("wedge_bracket needs both fields on one chart")
    av = a.evaluate(x)
    bv = b.evaluate(x)
    return wedge_bracket_coeffs(av, bv)


def wedge_bracket_coeffs(av: np.ndarray, bv: np.ndarray) -> np.ndarray:
    br = algebra.bracket(av[:, :, None, :], bv[:, None, :, :])
    return 0.5 * (br - br.transpose(0, 2, 1, 3))


def curvature(a: FormField, x: np.ndarray) -> np.ndarray:
    """dA + [A^A] coefficients of a degree-1 field."""
    av = a.evaluate(x)
    return exterior_d(a, x) + wedge_bracket_coeffs(av, av)


def _inverse_metric_for(
    g: MetricModel, x: np.ndarray, chart: Chart
) -> np.ndarray:
    x = np.atleast_2d(x)
    if chart is Chart.CYLINDER:
        if g.kind is not MetricKind.CYLINDER_PRODUCT:
            raise ChartMismatch("cylinder coefficients need the product metric")
        n = x.shape[0]
        ginv = np.zeros((n, 5, 5))
        ginv[:, 0, 0] = 1.0
        ginv[:, 1:, 1:] = tangent_projector(x[:, 1:])
        return ginv
    if g.kind is MetricKind.CYLINDER_PRODUCT:
        raise ChartMismatch("product metric applies to the cylinder chart only")
    return g.inverse_metric_at(x)


def pointwise_inner(
    v: np.ndarray,
    w: np.ndarray,
    degree: int,
    g: MetricModel,
    x: np.ndarray,
    chart: Chart = Chart.EUCLIDEAN4,
) -> np.ndarray:
    """Metric inner product of coefficient arrays, algebra-contracted.

    Degree 2 uses the half-sum rule so that {dx_i^dx_j}_{i<j} is
    orthonormal in the flat metric.  Cylinder coefficients must be
    tangential (the canonical output of evaluate and exterior_d), which
    makes the product-metric index lift the identity.
    """
    if g.kind is MetricKind.CONFORMAL_NORMAL:
        ginv = _inverse_metric_for(g, x, chart)
        if degree == 1:
            lifted = np.einsum("nab,nbc->nac", ginv, w)
            return np.sum(algebra.inner(v, lifted), axis=-1)
        lifted = np.einsum("nia,njb,nabc->nijc", ginv, ginv, w)
        return 0.5 * np.sum(algebra.inner(v, lifted), axis=(-2, -1))
    _inverse_metric_for(g, np.atleast_2d(x)[:1], chart)
    if degree == 1:
        return np.sum(algebra.inner(v, w), axis=-1)
    return 0.5 * np.sum(algebra.inner(v, w), axis=(-2, -1))


def pointwise_norm2(
    v: np.ndarray,
    degree: int,
    g: MetricModel,
    x: np.ndarray,
    chart: Chart = Chart.EUCLIDEAN4,
) -> np.ndarray:
    return pointwise_inner(v, v, degree, g, x, chart)


def isotropy_matrix(f: np.ndarray, g: MetricModel) -> np.ndarray:
    """Direction-correlation matrix M_pq of degree-2 coefficients.

    M_pq = 2 sum_s <F_ps, F_qs>; the factor 2 makes an isotropic field
    satisfy M = |F|^2 I under the half-sum norm rule.  Accepts a single
    (d, d, 3) array or a batch (n, d, d, 3).  The contraction is in the
    coefficient indices themselves; the metric argument only pins the
    convention and is not consulted.
    """
    del g
    f = np.asarray(f, dtype=float)
    single = f.ndim == 3
    if single:
        f = f[None]
    pair = algebra.inner(f[:, :, None, :, :], f[:, None, :, :, :])
    m = 2.0 * pair.sum(axis=-1)
    return m[0] if single else m
