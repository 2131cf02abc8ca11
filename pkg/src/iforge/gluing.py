"""Neck construction joining a background connection to a shrinking bubble.

Everything happens on the cylinder chart.  The background, defined on a
ball of radius delta, contributes a term growing like e^{2t}; the
bubble of scale lam, written in the gauge regular at infinity,
contributes a term falling like e^{-2t}.  Four cutoff profiles blend
the two exact fields through their leading terms on the overlap region
t in [log lam - log delta, log delta], producing a connection that
matches the background exactly at the outer end and the scaled bubble
exactly at the inner end.

Energy bookkeeping splits the neck energy E_gain into the energies of
the left and right halves plus an interaction part E_inter, computed
from a cancellation-free integrand rather than by subtraction.  E_loss
collects what the construction removes: the background energy over the
ball and the bubble tail outside the inverted ball.  The neck metric is
the cylinder product metric; for a 2-form energy in four dimensions
this equals the flat annulus energy by conformal invariance.

The leading interaction is governed by the slice-norm constant c0 and
the pairing between the chosen bubble frame and the self-dual half of
the center curvature.  Note the frame bookkeeping: the bubble gauge
pairs algebra axis i with the right rotation form in conjugated order,
so the frame fed to the pairing functional is the axis-swapped one with
determinant -1; the trivialization rotation itself keeps determinant +1
so the bubble stays anti-self-dual.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import algebra, background, forms, instanton, quadrature
from .errors import OriginSingular, ResolutionInsufficient
from .forms import Chart, FormField, MetricModel

# The four transition zones fit inside the neck only when its length
# 2 log(delta) - log(lam) exceeds this.
MIN_NECK_LENGTH = 2.0

_TAIL_RADIUS = 1.0e3

DEFAULT_DELTAS = (0.2, 0.1, 0.05)
DEFAULT_LAMBDA_FACTORS = (1.0, 0.5, 0.25, 0.125)

SCAN_CSV_HEADER = (
    "delta,lambda,E_gain,E_loss,diff,predicted_per_lambda2,delta_YM,quad_err"
)


def _smoothstep_d(u: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return 30.0 * v * v * (1.0 - v) * (1.0 - v)


@dataclass(frozen=True)
class CutoffSet:
    """Four C^2 transition profiles over the neck.

    phi3 rises across [t_min+1, t_min+2] and phi4 falls across
    [log delta - 2, log delta - 1], so the leading background term is
    switched off toward the bubble end and the leading bubble term
    toward the outer end.  phi1 rises across the two units centered at
    half log lam and phi2 = 1 - phi1 hands the remainder terms over in
    the middle.  All profiles are the quintic smoothstep, which keeps
    every derivative closed-form.
    """

    lam: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.lam and 0.0 < self.delta < 1.0):
            raise ValueError("need 0 < lam and 0 < delta < 1")
        if self.neck_length <= MIN_NECK_LENGTH:
            raise ValueError(
                f"neck length {self.neck_length:.3f} too short for the "
                f"transition zones (needs > {MIN_NECK_LENGTH})"
            )

    @property
    def t_min(self) -> float:
        return math.log(self.lam) - math.log(self.delta)

    @property
    def t_max(self) -> float:
        return math.log(self.delta)

    @property
    def neck_length(self) -> float:
        return 2.0 * math.log(self.delta) - math.log(self.lam)

    def phi1(self, t: np.ndarray) -> np.ndarray:
        return background.smoothstep(
            (np.asarray(t, dtype=float) - 0.5 * math.log(self.lam) + 1.0) / 2.0
        )

    def dphi1(self, t: np.ndarray) -> np.ndarray:
        u = (np.asarray(t, dtype=float) - 0.5 * math.log(self.lam) + 1.0) / 2.0
        return 0.5 * _smoothstep_d(u)

    def phi2(self, t: np.ndarray) -> np.ndarray:
        return 1.0 - self.phi1(t)

    def dphi2(self, t: np.ndarray) -> np.ndarray:
        return -self.dphi1(t)

    def phi3(self, t: np.ndarray) -> np.ndarray:
        return background.smoothstep(
            np.asarray(t, dtype=float) - (self.t_min + 1.0)
        )

    def dphi3(self, t: np.ndarray) -> np.ndarray:
        return _smoothstep_d(np.asarray(t, dtype=float) - (self.t_min + 1.0))

    def phi4(self, t: np.ndarray) -> np.ndarray:
        return background.smoothstep(
            math.log(self.delta) - 1.0 - np.asarray(t, dtype=float)
        )

    def dphi4(self, t: np.ndarray) -> np.ndarray:
        return -_smoothstep_d(
            math.log(self.delta) - 1.0 - np.asarray(t, dtype=float)
        )

    def transition_edges(self) -> Tuple[float, ...]:
        """Breakpoints where some profile stops being analytic."""
        half = 0.5 * math.log(self.lam)
        edges = (
            self.t_min + 1.0,
            self.t_min + 2.0,
            half - 1.0,
            half + 1.0,
            self.t_max - 2.0,
            self.t_max - 1.0,
        )
        return tuple(sorted(set(edges)))


def feasible_pair(lam: float, delta: float) -> bool:
    """Whether (lam, delta) admits the construction: bubble scale at
    most delta cubed and a neck long enough for the transitions."""
    if not (0.0 < lam and 0.0 < delta < 1.0):
        return False
    if lam > delta**3 * (1.0 + 1e-12):
        return False
    return 2.0 * math.log(delta) - math.log(lam) > MIN_NECK_LENGTH


@dataclass(frozen=True)
class GluedConnection:
    """The three-region connection: background outside the delta ball,
    cutoff-blended neck field in between, scaled bubble inside."""

    background: background.BackgroundConnection
    bubble: instanton.InstantonGauge
    cutoffs: CutoffSet
    lam: float
    delta: float

    def __post_init__(self):
        if self.lam != self.cutoffs.lam or self.delta != self.cutoffs.delta:
            raise ValueError("cutoffs disagree with the stated scales")
        if self.bubble.kind is not instanton.GaugeKind.INVERTED:
            raise ValueError("the neck needs the gauge regular at infinity")
        if self.bubble.scale != self.lam:
            raise ValueError("bubble scale disagrees with lam")
        if self.lam > self.delta**3 * (1.0 + 1e-12):
            raise ValueError("bubble scale must not exceed delta cubed")
        if self.background.ball_radius <= self.delta:
            raise ValueError("background ball must contain the neck region")


def glued_connection(
    bg: background.BackgroundConnection,
    lam: float,
    delta: float,
    basis: Optional[algebra.AlgBasis] = None,
    flip: bool = False,
) -> GluedConnection:
    """Assemble a glued connection, choosing the bubble frame from the
    self-dual curvature half unless one is supplied."""
    if basis is None:
        basis = bubble_basis_for(background.split_curvature(bg.f0), flip=flip)
    gauge = instanton.InstantonGauge(
        instanton.GaugeKind.INVERTED, float(lam), basis
    )
    return GluedConnection(
        background=bg,
        bubble=gauge,
        cutoffs=CutoffSet(float(lam), float(delta)),
        lam=float(lam),
        delta=float(delta),
    )


# ---------------------------------------------------------------------------
# frames


def pairing_frame(basis: algebra.AlgBasis) -> algebra.AlgBasis:
    """Algebra frame paired with the right rotation forms in their
    natural order.

    The bubble gauge carries axis i on the form with the last two
    family members exchanged, so the frame seen by the interaction
    pairing swaps rows two and three and reverses orientation.  The map
    is an involution.
    """
    m = basis.matrix
    return algebra.AlgBasis(m[0], m[2], m[1], -basis.orientation)


def bubble_basis_for(
    split: background.CurvatureSplit, flip: bool = False
) -> algebra.AlgBasis:
    """Bubble trivialization frame with determinant +1 whose pairing
    against the self-dual curvature half is positive (negative when
    flip is set, by negating the axis pair that hurts the most)."""
    fp = split.fplus
    if float(np.max(np.abs(fp))) < 1e-14:
        # Pairing is zero either way; keep the determinant +1 so the
        # bubble gauge stays anti-self-dual.
        return algebra.IDENTITY_BASIS
    tilde = algebra.choose_positive_basis(fp[0], fp[1], fp[2], orientation=-1)
    rows = tilde.matrix.copy()
    if flip:
        scores = np.sum(rows * fp, axis=1)
        keep = int(np.argmin(scores))
        for i in range(3):
            if i != keep:
                rows[i] = -rows[i]
    return algebra.AlgBasis(rows[0], rows[2], rows[1], +1)


def interaction_coefficient(
    split: background.CurvatureSplit, basis: algebra.AlgBasis
) -> float:
    """Sum over axes of inner(e_i, F_plus_i) for the given frame."""
    return float(np.sum(algebra.inner(basis.matrix, split.fplus)))


# ---------------------------------------------------------------------------
# leading pieces and their closed derivatives


def _dt_wedge(vals: np.ndarray) -> np.ndarray:
    """dt wedge a cylinder 1-form with vanishing dt slot."""
    out = np.zeros(vals.shape[:1] + (5, 5, 3))
    out[:, 0, 1:] = vals[:, 1:]
    out[:, 1:, 0] = -vals[:, 1:]
    return out


def _frame_kernel(gens: np.ndarray, coeff_rows: np.ndarray) -> np.ndarray:
    """Constant (4, 4, 3) contraction of a generator stack against
    per-member algebra rows; the family sum all leading pieces share."""
    return np.einsum("iab,ic->abc", gens, coeff_rows)


def _kernel_pieces(
    kernel: np.ndarray, w: np.ndarray, proj: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial 1-form coefficients and tangential 2-form body of the
    catalog combination encoded by a frame kernel."""
    sp = -np.einsum("abc,nb->nac", kernel, w, optimize=True)
    body = 2.0 * np.einsum(
        "nab,bce,ncd->nade", proj, kernel, proj, optimize=True
    )
    return sp, body


def _left_pieces(
    points: np.ndarray, split: background.CurvatureSplit
) -> Tuple[np.ndarray, np.ndarray]:
    """Leading background term e^{2t} (catalog combination) and its
    exact derivative, as cylinder coefficient arrays."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    t, w = points[:, 0], points[:, 1:]
    kernel = _frame_kernel(forms.ASD_GENERATORS, split.fminus)
    kernel += _frame_kernel(forms.SD_GENERATORS, split.fplus)
    proj = forms.tangent_projector(w)
    sp, body = _kernel_pieces(kernel, w, proj)
    e2t = np.exp(2.0 * t)
    coeff = np.zeros((points.shape[0], 5, 3))
    coeff[:, 1:] = e2t[:, None, None] * sp

    dbody = np.zeros((points.shape[0], 5, 5, 3))
    dbody[:, 0, 1:] = 2.0 * sp
    dbody[:, 1:, 0] = -2.0 * sp
    dbody[:, 1:, 1:] = body
    dbody *= e2t[:, None, None, None]
    return coeff, dbody


def _right_pieces(
    points: np.ndarray, lam: float, basis: algebra.AlgBasis
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Leading bubble term lam^2 e^{-2t} (conjugated right catalog on
    the frame rows), its exact remainder, and both derivatives."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    t, w = points[:, 0], points[:, 1:]
    u = lam**2 * np.exp(-2.0 * t)
    kernel = _frame_kernel(
        forms.SD_GENERATORS[instanton._INVERTED_ORDER], basis.matrix
    )
    proj = forms.tangent_projector(w)
    frame, body = _kernel_pieces(kernel, w, proj)

    n = points.shape[0]
    g = -(u**2) / (1.0 + u)
    gp = 2.0 * u**2 * (2.0 + u) / (1.0 + u) ** 2

    def _assemble(sp_coef, dt_coef):
        coeff = np.zeros((n, 5, 3))
        coeff[:, 1:] = sp_coef[:, None, None] * frame
        dbody = np.zeros((n, 5, 5, 3))
        dbody[:, 0, 1:] = dt_coef[:, None, None] * frame
        dbody[:, 1:, 0] = -dt_coef[:, None, None] * frame
        dbody[:, 1:, 1:] = sp_coef[:, None, None, None] * body
        return coeff, dbody

    lead_c, lead_d = _assemble(u, -2.0 * u)
    rem_c, rem_d = _assemble(g, gp)
    return lead_c, lead_d, rem_c, rem_d


def _wl_field(bg: background.BackgroundConnection) -> FormField:
    # Remainder of the background over its leading term, written so the
    # closure tolerates the off-sphere probes of finite differencing.
    split = background.split_curvature(bg.f0)

    def coeff(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t, w = pts[:, 0], pts[:, 1:]
        x = np.exp(t)[:, None] * w
        c = background.radial_gauge_connection(bg, x)
        out = np.zeros((pts.shape[0], 5, 3))
        out[:, 0] = np.exp(t)[:, None] * np.einsum("nac,na->nc", c, w)
        out[:, 1:] = np.exp(t)[:, None, None] * c
        th = forms.rotation_coefficients(w, "asd")
        ps = forms.rotation_coefficients(w, "sd")
        sp = np.einsum("nia,ic->nac", th, split.fminus)
        sp += np.einsum("nia,ic->nac", ps, split.fplus)
        out[:, 1:] -= np.exp(2.0 * t)[:, None, None] * sp
        return out

    return FormField(
        chart=Chart.CYLINDER, degree=1, coeff=coeff, name="neck-left-remainder"
    )


def left_field(G: GluedConnection) -> FormField:
    """Outer half of the neck field: cutoff times the leading
    background term, plus the handed-over background remainder."""
    cut = G.cutoffs
    split = background.split_curvature(G.background.f0)
    wl = _wl_field(G.background) if G.background.quad is not None else None

    def coeff(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lead_c, _ = _left_pieces(pts, split)
        out = cut.phi3(pts[:, 0])[:, None, None] * lead_c
        if wl is not None:
            out += cut.phi1(pts[:, 0])[:, None, None] * wl.coeff(pts)
        return out

    def closed(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = pts[:, 0]
        lead_c, lead_d = _left_pieces(pts, split)
        out = cut.dphi3(t)[:, None, None, None] * _dt_wedge(lead_c)
        out += cut.phi3(t)[:, None, None, None] * lead_d
        if wl is not None:
            wv = wl.evaluate(pts)
            out += cut.dphi1(t)[:, None, None, None] * _dt_wedge(wv)
            out += cut.phi1(t)[:, None, None, None] * forms.exterior_d(wl, pts)
        return out

    return FormField(
        chart=Chart.CYLINDER,
        degree=1,
        coeff=coeff,
        closed_d=closed,
        t_range=(cut.t_min, cut.t_max),
        name="A_left",
    )


def right_field(G: GluedConnection) -> FormField:
    """Inner half of the neck field: cutoff times the leading bubble
    term, plus the handed-over bubble remainder."""
    cut = G.cutoffs
    lam = G.lam
    basis = G.bubble.bubble_basis

    def coeff(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = pts[:, 0]
        lead_c, _, rem_c, _ = _right_pieces(pts, lam, basis)
        return (
            cut.phi4(t)[:, None, None] * lead_c
            + cut.phi2(t)[:, None, None] * rem_c
        )

    def closed(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = pts[:, 0]
        lead_c, lead_d, rem_c, rem_d = _right_pieces(pts, lam, basis)
        out = cut.dphi4(t)[:, None, None, None] * _dt_wedge(lead_c)
        out += cut.phi4(t)[:, None, None, None] * lead_d
        out += cut.dphi2(t)[:, None, None, None] * _dt_wedge(rem_c)
        out += cut.phi2(t)[:, None, None, None] * rem_d
        return out

    return FormField(
        chart=Chart.CYLINDER,
        degree=1,
        coeff=coeff,
        closed_d=closed,
        t_range=(cut.t_min, cut.t_max),
        name="A_right",
    )


def neck_field(G: GluedConnection) -> FormField:
    """The blended neck connection, the sum of the two halves."""
    return forms.add_fields(left_field(G), right_field(G), name="A_neck")


def neck_region(
    G: GluedConnection, radial_order: int = 16, max_panel: float = 1.0
) -> quadrature.RegionSpec:
    """Cylinder segment over the neck with panel breaks at every cutoff
    transition edge, so each panel sees an analytic integrand."""
    cut = G.cutoffs
    return quadrature.RegionSpec.cylinder_segment(
        cut.t_min,
        cut.t_max,
        radial_order=radial_order,
        breakpoints=cut.transition_edges(),
        max_panel=max_panel,
    )


# ---------------------------------------------------------------------------
# energies


def instanton_tail_energy(delta: float, rule: int = 7) -> Tuple[float, float]:
    """Flat energy of the unit bubble outside the 1/delta ball.

    Quadrature up to a large truncation radius plus the closed-form
    account of the remaining tail (the profile integrates in closed
    form once the density is radial)."""
    gauge = instanton.InstantonGauge(
        instanton.GaugeKind.REGULAR, 1.0, algebra.IDENTITY_BASIS
    )
    region = quadrature.RegionSpec.annulus(
        1.0 / delta, _TAIL_RADIUS, scale_hint=1.0 / delta
    )
    val, err = quadrature.ym_energy_with_error(
        instanton.connection_field(gauge), region, MetricModel.flat(), rule
    )
    v0 = _TAIL_RADIUS**2
    val += 96.0 * math.pi**2 * (0.5 / (1.0 + v0) ** 2 - (1.0 / 3.0) / (1.0 + v0) ** 3)
    return val, err


def energy_split(
    G: GluedConnection, rule: int = 7, metric: Optional[MetricModel] = None
) -> Mapping[str, float]:
    """Neck energy bookkeeping.

    Returns E_left, E_right (energies of the two halves), E_inter (the
    cross terms, integrated cancellation-free), E_gain (their sum) and
    E_loss (background ball energy under the ambient metric plus the
    flat bubble tail), with quad_err the summed quadrature estimates.
    The interaction estimate must resolve E_inter to 1%; otherwise
    ResolutionInsufficient is raised.  The floor below keeps a flat
    background (E_inter identically zero) from tripping the check.
    """
    ambient = metric if metric is not None else MetricModel.flat()
    gcyl = MetricModel.cylinder()
    region = neck_region(G)
    A_L = left_field(G)
    A_R = right_field(G)

    def d_left(pts):
        f = forms.curvature(A_L, pts)
        return forms.pointwise_norm2(f, 2, gcyl, pts, Chart.CYLINDER)

    def d_right(pts):
        f = forms.curvature(A_R, pts)
        return forms.pointwise_norm2(f, 2, gcyl, pts, Chart.CYLINDER)

    def d_inter(pts):
        aL = A_L.evaluate(pts)
        aR = A_R.evaluate(pts)
        fL = forms.curvature(A_L, pts)
        fR = forms.curvature(A_R, pts)
        w = forms.wedge_bracket_coeffs(aL, aR)
        out = 2.0 * forms.pointwise_inner(fL, fR, 2, gcyl, pts, Chart.CYLINDER)
        out += 4.0 * forms.pointwise_inner(
            fL + fR, w, 2, gcyl, pts, Chart.CYLINDER
        )
        out += 4.0 * forms.pointwise_norm2(w, 2, gcyl, pts, Chart.CYLINDER)
        return out

    e_left, err_l = quadrature.integrate_scalar(d_left, region, gcyl, rule)
    e_right, err_r = quadrature.integrate_scalar(d_right, region, gcyl, rule)
    e_inter, err_i = quadrature.integrate_scalar(d_inter, region, gcyl, rule)
    e_gain = e_left + e_right + e_inter

    bg_field = background.connection_field(G.background)
    ball = quadrature.RegionSpec.ball(G.delta, scale_hint=G.delta)
    e_ball, err_b = quadrature.ym_energy_with_error(
        bg_field, ball, ambient, rule
    )
    e_tail, err_t = instanton_tail_energy(G.delta, rule)
    e_loss = e_ball + e_tail

    threshold = max(
        0.01 * abs(e_inter), 1e-13 * max(1.0, abs(e_gain)), 1e-15
    )
    if err_i > threshold:
        raise ResolutionInsufficient(
            f"interaction estimate {err_i:.3e} exceeds {threshold:.3e}"
        )
    return {
        "E_left": e_left,
        "E_right": e_right,
        "E_inter": e_inter,
        "E_gain": e_gain,
        "E_loss": e_loss,
        "quad_err": err_l + err_r + err_i + err_b + err_t,
    }


def bubble_interior_correction(
    lam: float, delta: float, metric: MetricModel, rule: int = 7
) -> Tuple[float, float]:
    """Energy shift of the scaled bubble over its interior ball when
    the ambient metric replaces the flat one, on shared nodes."""
    gauge = instanton.InstantonGauge(
        instanton.GaugeKind.REGULAR, lam, algebra.IDENTITY_BASIS
    )
    field = instanton.connection_field(gauge)
    region = quadrature.RegionSpec.ball(lam / delta, scale_hint=lam)
    flat = MetricModel.flat()

    def density(pts):
        fv = forms.curvature(field, pts)
        curved = forms.pointwise_norm2(fv, 2, metric, pts)
        curved *= metric.sqrt_det_at(pts)
        return curved - forms.pointwise_norm2(fv, 2, flat, pts)

    return quadrature.integrate_scalar(density, region, flat, rule)


# ---------------------------------------------------------------------------
# interaction constants


def c0_constant(
    rule: int = 9, t_values: Sequence[float] = (-1.0, 0.0, 1.0)
) -> float:
    """Slice-norm constant of the falling/rising transition pairing.

    One quarter of e^{-4t} times the squared scalar L2 norm over the
    unit 3-sphere of d(e^{2t} psi'_1); independent of t and equal to
    4 pi^2.  Computed at several t values; a spread above 1e-10 raises
    ResolutionInsufficient.
    """
    field = forms.cylinder_exp_form(0, "sd", 2.0)
    sphere = quadrature.sphere_rule(rule)
    m = sphere.nodes.shape[0]
    vals = []
    for t in t_values:
        pts = np.concatenate([np.full((m, 1), float(t)), sphere.nodes], axis=1)
        body = field.closed_d(pts)[:, :, :, 0]
        norm2 = 0.5 * np.sum(body * body, axis=(1, 2))
        vals.append(0.25 * math.exp(-4.0 * float(t)) * float(sphere.weights @ norm2))
    if max(vals) - min(vals) > 1e-10:
        raise ResolutionInsufficient(
            f"slice-norm constant varies with t: {vals}"
        )
    return math.fsum(vals) / len(vals)


def interaction_prediction(
    split: background.CurvatureSplit,
    basis: algebra.AlgBasis,
    rule: int = 9,
) -> float:
    """Predicted neck energy difference per unit squared bubble scale:
    minus twice the slice-norm constant times the pairing."""
    return -2.0 * c0_constant(rule) * interaction_coefficient(split, basis)


# ---------------------------------------------------------------------------
# pointwise identities


def twist_matrix(x: np.ndarray) -> np.ndarray:
    """Rotation-valued matrix relating the falling right family to the
    rising left one: d(e^{-2t} psi'_i) = e^{-4t} T_ij d(e^{2t} theta'_j).

    Accepts Euclidean rows (n, 4) or cylinder rows (n, 5); the matrix
    is scale-invariant.  Its entrywise average over the unit sphere is
    zero.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.shape[-1] == 5:
        arr = arr[:, 1:]
    if arr.shape[-1] != 4:
        raise ValueError(f"expected 4 or 5 coordinates, got {arr.shape[-1]}")
    r2 = np.sum(arr * arr, axis=-1)
    if np.any(r2 <= 0.0):
        raise OriginSingular("twist matrix undefined at the origin")
    x1, x2, x3, x4 = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    m = np.empty((arr.shape[0], 3, 3))
    m[:, 0, 0] = (x1**2 + x2**2 - x3**2 - x4**2) / (2.0 * r2)
    m[:, 0, 1] = (x2 * x3 - x1 * x4) / r2
    m[:, 0, 2] = (x1 * x3 + x2 * x4) / r2
    m[:, 1, 0] = (x1 * x4 + x2 * x3) / r2
    m[:, 1, 1] = (x1**2 + x3**2 - x2**2 - x4**2) / (2.0 * r2)
    m[:, 1, 2] = (x3 * x4 - x1 * x2) / r2
    m[:, 2, 0] = (x2 * x4 - x1 * x3) / r2
    m[:, 2, 1] = (x1 * x2 + x3 * x4) / r2
    m[:, 2, 2] = (x1**2 + x4**2 - x2**2 - x3**2) / (2.0 * r2)
    return -2.0 * m


def _family_d_bodies(
    points: np.ndarray, kind: str, rate: float
) -> np.ndarray:
    """Scalar 2-form bodies (n, 3, 5, 5) of d(e^{rate t} sigma'_i) for
    the whole catalog family."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    t, w = points[:, 0], points[:, 1:]
    gens = forms.generators(kind)
    s = forms.rotation_coefficients(w, kind)
    proj = forms.tangent_projector(w)
    body = np.zeros((points.shape[0], 3, 5, 5))
    body[:, :, 0, 1:] = rate * s
    body[:, :, 1:, 0] = -rate * s
    body[:, :, 1:, 1:] = 2.0 * np.einsum(
        "nab,ibc,ncd->niad", proj, gens, proj
    )
    return np.exp(rate * t)[:, None, None, None] * body


def twist_identity_residual(points: np.ndarray) -> np.ndarray:
    """Pointwise residual (n, 3, 5, 5) of the twist relation between
    the falling right family and the rising left family."""
    points = forms.check_points(points, Chart.CYLINDER)
    t = points[:, 0]
    lhs = _family_d_bodies(points, "sd", -2.0)
    rising = _family_d_bodies(points, "asd", 2.0)
    tw = twist_matrix(points)
    rhs = np.exp(-4.0 * t)[:, None, None, None] * np.einsum(
        "nij,njab->niab", tw, rising
    )
    return lhs - rhs


def obv_identity_check(points: np.ndarray, kind: str = "sd") -> np.ndarray:
    """Pointwise residual (n, 3, 5, 5) of the rate-splitting identity
    4 dt^sigma'_i = e^{-2t} d(e^{2t} sigma'_i) - e^{2t} d(e^{-2t} sigma'_i)
    for either catalog family."""
    points = forms.check_points(points, Chart.CYLINDER)
    t, w = points[:, 0], points[:, 1:]
    s = forms.rotation_coefficients(w, kind)
    lhs = np.zeros((points.shape[0], 3, 5, 5))
    lhs[:, :, 0, 1:] = 4.0 * s
    lhs[:, :, 1:, 0] = -4.0 * s
    rising = _family_d_bodies(points, kind, 2.0)
    falling = _family_d_bodies(points, kind, -2.0)
    rhs = (
        np.exp(-2.0 * t)[:, None, None, None] * rising
        - np.exp(2.0 * t)[:, None, None, None] * falling
    )
    return lhs - rhs


def slice_vanishing_residual(
    G: GluedConnection, t_values: Sequence[float], rule: int = 9
) -> np.ndarray:
    """Sphere integral, slice by slice, of the pairing between the
    derivatives of the two bare leading terms (no cutoffs), relative to
    the product of the slice norms.  Vanishes for every t."""
    gcyl = MetricModel.cylinder()
    split = background.split_curvature(G.background.f0)
    sphere = quadrature.sphere_rule(rule)
    m = sphere.nodes.shape[0]
    out = np.empty(len(t_values))
    for k, t in enumerate(t_values):
        pts = np.concatenate([np.full((m, 1), float(t)), sphere.nodes], axis=1)
        _, dl = _left_pieces(pts, split)
        _, dr, _, _ = _right_pieces(pts, G.lam, G.bubble.bubble_basis)
        pair = forms.pointwise_inner(dr, dl, 2, gcyl, pts, Chart.CYLINDER)
        nr = forms.pointwise_norm2(dr, 2, gcyl, pts, Chart.CYLINDER)
        nl = forms.pointwise_norm2(dl, 2, gcyl, pts, Chart.CYLINDER)
        num = abs(float(sphere.weights @ pair))
        scale = math.sqrt(
            float(sphere.weights @ nr) * float(sphere.weights @ nl)
        )
        out[k] = num / scale if scale > 0.0 else 0.0
    return out


def cutoff_halves(G: GluedConnection, rule: int = 7) -> Tuple[float, float]:
    """The two cutoff-derivative cross integrals over the neck.

    First: the falling-cutoff derivative term of the bubble half paired
    against the cutoff times the derivative of the background leading
    term.  Second: the mirror pairing with the rising-cutoff derivative
    on the background side.  Each tends to minus the slice-norm
    constant times the pairing coefficient times the squared bubble
    scale once the transition zones separate.
    """
    cut = G.cutoffs
    split = background.split_curvature(G.background.f0)
    basis = G.bubble.bubble_basis
    gcyl = MetricModel.cylinder()
    region = neck_region(G)

    def first(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = pts[:, 0]
        lead_c, _, _, _ = _right_pieces(pts, G.lam, basis)
        _, dl = _left_pieces(pts, split)
        term = cut.dphi4(t)[:, None, None, None] * _dt_wedge(lead_c)
        other = cut.phi3(t)[:, None, None, None] * dl
        return forms.pointwise_inner(term, other, 2, gcyl, pts, Chart.CYLINDER)

    def second(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t = pts[:, 0]
        _, dr, _, _ = _right_pieces(pts, G.lam, basis)
        lead_c, _ = _left_pieces(pts, split)
        term = cut.phi4(t)[:, None, None, None] * dr
        other = cut.dphi3(t)[:, None, None, None] * _dt_wedge(lead_c)
        return forms.pointwise_inner(term, other, 2, gcyl, pts, Chart.CYLINDER)

    v1, _ = quadrature.integrate_scalar(first, region, gcyl, rule)
    v2, _ = quadrature.integrate_scalar(second, region, gcyl, rule)
    return v1, v2


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class ScanRow:
    delta: float
    lam: float
    e_gain: float
    e_loss: float
    diff: float
    predicted_per_lambda2: float
    delta_ym: float
    quad_err: float

    def as_csv(self) -> str:
        return ",".join(
            repr(v)
            for v in (
                self.delta,
                self.lam,
                self.e_gain,
                self.e_loss,
                self.diff,
                self.predicted_per_lambda2,
                self.delta_ym,
                self.quad_err,
            )
        )

    def as_dict(self) -> Mapping[str, float]:
        return {
            "delta": self.delta,
            "lambda": self.lam,
            "E_gain": self.e_gain,
            "E_loss": self.e_loss,
            "diff": self.diff,
            "predicted_per_lambda2": self.predicted_per_lambda2,
            "delta_YM": self.delta_ym,
            "quad_err": self.quad_err,
        }


def default_lambdas(delta: float) -> Tuple[float, ...]:
    return tuple(delta**3 * f for f in DEFAULT_LAMBDA_FACTORS)


def _scan_job(args) -> ScanRow:
    bg, delta, lam, rule, metric, flip = args
    split = background.split_curvature(bg.f0)
    basis = bubble_basis_for(split, flip=flip)
    G = glued_connection(bg, lam, delta, basis=basis)
    parts = energy_split(G, rule=rule, metric=metric)
    pred = interaction_prediction(split, pairing_frame(basis))
    diff = parts["E_gain"] - parts["E_loss"]
    delta_ym = diff
    err = parts["quad_err"]
    if metric.kind is forms.MetricKind.CONFORMAL_NORMAL:
        corr, cerr = bubble_interior_correction(lam, delta, metric, rule)
        delta_ym += corr
        err += cerr
    return ScanRow(
        delta=delta,
        lam=lam,
        e_gain=parts["E_gain"],
        e_loss=parts["E_loss"],
        diff=diff,
        predicted_per_lambda2=pred,
        delta_ym=delta_ym,
        quad_err=err,
    )


def energy_comparison_scan(
    bg: background.BackgroundConnection,
    deltas: Iterable[float] = DEFAULT_DELTAS,
    lambdas: Optional[Iterable[float]] = None,
    rule: int = 7,
    metric: Optional[MetricModel] = None,
    flip: bool = False,
    workers: int = 1,
) -> list:
    """Measured-versus-predicted neck energy differences over a grid.

    For each ball radius, the bubble scales default to the radius cubed
    times {1, 1/2, 1/4, 1/8}; explicit scales are applied to every
    radius instead.  Pairs that cannot host the transition zones are
    skipped.  Rows are independent; with workers > 1 they run in
    separate processes but keep their deterministic per-row arithmetic,
    so the output is identical either way.  Rows come back sorted by
    (delta, lambda).
    """
    ambient = metric if metric is not None else MetricModel.flat()
    jobs = []
    for d in sorted(float(d) for d in deltas):
        lams = (
            sorted(float(l) for l in lambdas)
            if lambdas is not None
            else sorted(default_lambdas(d))
        )
        for l in lams:
            if not feasible_pair(l, d):
                continue
            jobs.append((bg, d, l, rule, ambient, flip))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scan_job, jobs))
    return [_scan_job(j) for j in jobs]


def scan_to_csv(rows: Sequence[ScanRow], path) -> None:
    lines = [SCAN_CSV_HEADER]
    lines.extend(row.as_csv() for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def scan_metadata(
    rule: int,
    metric: Optional[MetricModel] = None,
    flip: bool = False,
    extra: Optional[Mapping] = None,
) -> Mapping:
    kind = (metric or MetricModel.flat()).kind.value
    meta = {
        "sphere_rule": rule,
        "radial_order": 16,
        "cutoff_profile": "smoothstep-quintic",
        "algebra_normalization": "inner=-2tr",
        "metric": kind,
        "flip": bool(flip),
    }
    if extra:
        meta.update(extra)
    return meta


def scan_to_json(rows: Sequence[ScanRow], path, metadata: Mapping) -> None:
    payload = {
        "metadata": dict(metadata),
        "rows": [dict(row.as_dict()) for row in rows],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def lemma28_scan(
    metric: MetricModel,
    lams: Sequence[float] = (1e-3, 1e-2, 1e-1),
    delta: float = 0.4,
    rule: int = 7,
) -> Mapping:
    """Energy shift of the scaled bubble under a curved ambient metric.

    For each scale, integrates the curved-minus-flat energy density of
    the bubble on shared nodes over the interior ball and over the neck
    annulus, then fits log-log slopes of the absolute shifts against
    the scale.  The comparison uses the flat volume element throughout:
    the conformal gauge keeps the metric determinant at one to the
    order tracked here, so the shift isolates the inverse-metric
    correction.  A Ricci-flat curvature tensor kills that correction
    pointwise and pushes both slopes to at least three (four for the
    exact quadratic model, whose cubic remainder is absent); a generic
    one leaves them at two.
    """
    flat = MetricModel.flat()
    lams = tuple(float(l) for l in lams)
    if any(l >= delta**2 for l in lams):
        raise ValueError(
            "neck annulus needs every scale below delta squared"
        )
    ball_diffs = []
    neck_diffs = []
    for lam in lams:
        gauge = instanton.InstantonGauge(
            instanton.GaugeKind.REGULAR, lam, algebra.IDENTITY_BASIS
        )
        field = instanton.connection_field(gauge)

        def density(pts):
            fv = forms.curvature(field, pts)
            curved = forms.pointwise_norm2(fv, 2, metric, pts)
            return curved - forms.pointwise_norm2(fv, 2, flat, pts)

        ball = quadrature.RegionSpec.ball(lam / delta, scale_hint=lam)
        neck = quadrature.RegionSpec.annulus(lam / delta, delta, scale_hint=lam)
        ball_diffs.append(quadrature.integrate_scalar(density, ball, flat, rule)[0])
        neck_diffs.append(quadrature.integrate_scalar(density, neck, flat, rule)[0])

    def fit(diffs):
        mags = np.abs(np.asarray(diffs))
        if np.all(mags < 1e-16):
            return float("nan")
        return float(np.polyfit(np.log(lams), np.log(mags), 1)[0])

    return {
        "lambdas": lams,
        "ball_diffs": tuple(ball_diffs),
        "neck_diffs": tuple(neck_diffs),
        "ball_slope": fit(ball_diffs),
        "neck_slope": fit(neck_diffs),
    }
