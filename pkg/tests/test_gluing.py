"""Neck assembly: cutoff windows, frame pairing, interaction constants,
energy bookkeeping, and the comparison scans."""

import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from iforge import algebra, background, forms, gluing, instanton, quadrature
from iforge.errors import OriginSingular
from iforge.forms import MetricModel

FOUR_PI_SQ = 4.0 * math.pi**2

SPLIT = background.CurvatureSplit(
    fminus=np.array([[0.2, -0.5, 0.3], [0.1, 0.4, -0.2], [-0.3, 0.1, 0.6]]),
    fplus=np.array([[0.6, 0.2, -0.1], [-0.3, 0.8, 0.25], [0.1, -0.4, 0.5]]),
)
BG = background.BackgroundConnection(f0=background.merge_split(SPLIT))


def cylinder_points(rng, n, t_lo=-3.0, t_hi=2.0):
    w = rng.normal(size=(n, 4))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    t = rng.uniform(t_lo, t_hi, size=n)
    return np.concatenate([t[:, None], w], axis=1)


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


@pytest.fixture(scope="module")
def neck_energy_bundle():
    """Full split at rule 5 next to a direct energy of the same field."""
    G = gluing.glued_connection(BG, 1e-3, 0.2)
    parts = gluing.energy_split(G, rule=5)
    direct, err = quadrature.ym_energy_with_error(
        gluing.neck_field(G), gluing.neck_region(G), MetricModel.cylinder(), 5
    )
    return G, parts, direct, err


@pytest.fixture(scope="module")
def halves_bundle():
    """Long-neck point where the two cross terms sit on their limits."""
    G = gluing.glued_connection(BG, 1.25e-4, 0.1)
    v1, v2 = gluing.cutoff_halves(G, rule=7)
    return G, v1, v2


@pytest.fixture(scope="module")
def flat_parts():
    flat_bg = background.BackgroundConnection(f0=np.zeros((4, 4, 3)))
    G = gluing.glued_connection(flat_bg, 6.75e-3, 0.3)
    return gluing.energy_split(G, rule=3)


@pytest.fixture(scope="module")
def scan_rows():
    return gluing.energy_comparison_scan(
        BG, deltas=(0.2,), lambdas=(8e-3, 4e-3, 1e-3), rule=3
    )


@pytest.fixture(scope="module")
def right_energy_bundle():
    """Cut bubble-side energy against the uncut annulus value, two scales."""
    out = {}
    unit = instanton.InstantonGauge(
        instanton.GaugeKind.REGULAR, 1.0, algebra.IDENTITY_BASIS
    )
    for lam in (1e-3, 2.5e-4):
        G = gluing.glued_connection(BG, lam, 0.1)
        cut_e, _ = quadrature.ym_energy_with_error(
            gluing.right_field(G), gluing.neck_region(G), MetricModel.cylinder(), 7
        )
        ann = quadrature.RegionSpec.annulus(1.0 / 0.1, 0.1 / lam)
        ann_e, _ = quadrature.ym_energy_with_error(
            instanton.connection_field(unit), ann, MetricModel.flat(), 7
        )
        out[lam] = (cut_e, ann_e)
    return out


def test_cutoff_windows_pin_the_three_regions():
    cut = gluing.CutoffSet(1.25e-4, 0.1)
    assert cut.t_min == pytest.approx(math.log(1.25e-4) - math.log(0.1))
    assert cut.t_max == pytest.approx(math.log(0.1))
    assert cut.neck_length == pytest.approx(cut.t_max - cut.t_min)

    mid = 0.5 * math.log(1.25e-4)
    probes = np.array(
        [cut.t_min, cut.t_min + 1.0, cut.t_min + 2.0, mid,
         cut.t_max - 2.0, cut.t_max - 1.0, cut.t_max]
    )
    np.testing.assert_allclose(
        cut.phi3(probes), [0, 0, 1, 1, 1, 1, 1], atol=1e-15
    )
    np.testing.assert_allclose(
        cut.phi4(probes), [1, 1, 1, 1, 1, 0, 0], atol=1e-15
    )
    np.testing.assert_allclose(cut.phi1([mid]), [0.5], atol=1e-15)
    assert cut.phi1([cut.t_min])[0] == 0.0
    assert cut.phi1([cut.t_max])[0] == 1.0

    grid = np.linspace(cut.t_min, cut.t_max, 401)
    np.testing.assert_allclose(cut.phi2(grid), 1.0 - cut.phi1(grid), atol=1e-15)
    assert np.all(cut.dphi3(grid) >= 0.0)
    assert np.all(cut.dphi1(grid) >= 0.0)
    assert np.all(cut.dphi4(grid) <= 0.0)
    np.testing.assert_allclose(cut.dphi2(grid), -cut.dphi1(grid), atol=1e-15)


def test_cutoff_profiles_are_quintic_smoothsteps():
    cut = gluing.CutoffSet(1.25e-4, 0.1)
    u = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(
        cut.phi3(cut.t_min + 1.0 + u), smoothstep(u), atol=1e-15
    )
    np.testing.assert_allclose(
        cut.phi4(cut.t_max - 2.0 + u), smoothstep(1.0 - u), atol=1e-15
    )
    # unit-width windows carry the raw smoothstep peak slope
    assert cut.dphi3([cut.t_min + 1.5])[0] == pytest.approx(1.875)
    assert cut.dphi4([cut.t_max - 1.5])[0] == pytest.approx(-1.875)
    # the center window spans two units, halving the chain factor
    assert cut.dphi1([0.5 * math.log(1.25e-4)])[0] == pytest.approx(0.9375)


def test_cutoff_derivatives_integrate_to_unit_jumps():
    cut = gluing.CutoffSet(1.25e-4, 0.1)
    grid = np.linspace(cut.t_min, cut.t_max, 20001)
    assert np.trapezoid(cut.dphi1(grid), grid) == pytest.approx(1.0, abs=1e-6)
    assert np.trapezoid(cut.dphi3(grid), grid) == pytest.approx(1.0, abs=1e-6)
    assert np.trapezoid(cut.dphi4(grid), grid) == pytest.approx(-1.0, abs=1e-6)


def test_transition_edges_sorted_inside_neck():
    cut = gluing.CutoffSet(1.25e-4, 0.1)
    edges = cut.transition_edges()
    assert len(edges) == 6
    assert all(a < b for a, b in zip(edges, edges[1:]))
    assert cut.t_min < edges[0] and edges[-1] < cut.t_max


def test_cutoff_set_rejects_bad_scales():
    with pytest.raises(ValueError):
        gluing.CutoffSet(8e-3, 0.2)  # neck length 1.61
    with pytest.raises(ValueError):
        gluing.CutoffSet(1e-3, 1.5)
    with pytest.raises(ValueError):
        gluing.CutoffSet(0.0, 0.5)
    with pytest.raises(ValueError):
        gluing.CutoffSet(-1e-3, 0.5)
    gluing.CutoffSet(1e-3, 0.2)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(min_value=0.02, max_value=0.8),
    st.floats(min_value=0.2, max_value=8.0),
)
def test_feasible_pair_matches_cutoff_constructor(delta, ell):
    assume(abs(ell - gluing.MIN_NECK_LENGTH) > 1e-6)
    assume(abs(ell + math.log(delta)) > 1e-6)
    lam = math.exp(2.0 * math.log(delta) - ell)
    expected = ell > gluing.MIN_NECK_LENGTH and ell > -math.log(delta)
    assert gluing.feasible_pair(lam, delta) == expected
    if ell > gluing.MIN_NECK_LENGTH:
        cut = gluing.CutoffSet(lam, delta)
        assert cut.neck_length == pytest.approx(ell)
    else:
        with pytest.raises(ValueError):
            gluing.CutoffSet(lam, delta)


def test_default_lambdas_scale_with_delta_cubed():
    lams = gluing.default_lambdas(0.1)
    np.testing.assert_allclose(lams, [1e-3, 5e-4, 2.5e-4, 1.25e-4], rtol=1e-12)


def test_glued_connection_validation_errors():
    basis = gluing.bubble_basis_for(SPLIT)
    cut = gluing.CutoffSet(1e-3, 0.2)
    good = instanton.InstantonGauge(instanton.GaugeKind.INVERTED, 1e-3, basis)

    with pytest.raises(ValueError):
        gluing.GluedConnection(
            background=BG, bubble=good, cutoffs=cut, lam=2e-3, delta=0.2
        )
    regular = instanton.InstantonGauge(instanton.GaugeKind.REGULAR, 1e-3, basis)
    with pytest.raises(ValueError):
        gluing.GluedConnection(
            background=BG, bubble=regular, cutoffs=cut, lam=1e-3, delta=0.2
        )
    shrunk = instanton.InstantonGauge(instanton.GaugeKind.INVERTED, 5e-4, basis)
    with pytest.raises(ValueError):
        gluing.GluedConnection(
            background=BG, bubble=shrunk, cutoffs=cut, lam=1e-3, delta=0.2
        )
    # scale past delta cubed but still a legal cutoff pair
    wide = instanton.InstantonGauge(instanton.GaugeKind.INVERTED, 1.2e-3, basis)
    with pytest.raises(ValueError):
        gluing.GluedConnection(
            background=BG,
            bubble=wide,
            cutoffs=gluing.CutoffSet(1.2e-3, 0.1),
            lam=1.2e-3,
            delta=0.1,
        )
    small_ball = background.BackgroundConnection(
        f0=BG.f0, ball_radius=0.15
    )
    with pytest.raises(ValueError):
        gluing.GluedConnection(
            background=small_ball, bubble=good, cutoffs=cut, lam=1e-3, delta=0.2
        )


def test_glued_connection_assembles_expected_frame():
    G = gluing.glued_connection(BG, 1e-3, 0.2)
    assert G.bubble.kind is instanton.GaugeKind.INVERTED
    assert G.bubble.scale == 1e-3
    assert G.cutoffs.lam == 1e-3 and G.cutoffs.delta == 0.2
    auto = gluing.bubble_basis_for(background.split_curvature(BG.f0))
    assert np.array_equal(G.bubble.bubble_basis.matrix, auto.matrix)

    flipped = gluing.glued_connection(BG, 1e-3, 0.2, flip=True)
    assert not np.array_equal(
        flipped.bubble.bubble_basis.matrix, auto.matrix
    )

    pinned = gluing.glued_connection(BG, 1e-3, 0.2, basis=algebra.IDENTITY_BASIS)
    assert np.array_equal(pinned.bubble.bubble_basis.matrix, np.eye(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([-1, 1]))
def test_pairing_frame_is_an_involution(seed, orientation):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(3, 3))
    basis = algebra.choose_positive_basis(v[0], v[1], v[2], orientation=orientation)
    pf = gluing.pairing_frame(basis)
    assert pf.orientation == -orientation
    assert np.array_equal(pf.matrix, basis.matrix[[0, 2, 1]])
    back = gluing.pairing_frame(pf)
    assert back.orientation == orientation
    assert np.array_equal(back.matrix, basis.matrix)


def test_bubble_basis_orientation_and_sign():
    rng = np.random.default_rng(31)
    for _ in range(300):
        split = background.CurvatureSplit(
            fminus=rng.normal(size=(3, 3)), fplus=rng.normal(size=(3, 3))
        )
        b = gluing.bubble_basis_for(split)
        ortho, det_gap = b.residuals()
        assert ortho < 1e-12 and abs(det_gap) < 1e-12
        assert b.orientation == 1
        pf = gluing.pairing_frame(b)
        assert gluing.interaction_coefficient(split, pf) > 0.0
        # the pairing frame recovers the raw frame the rows were built from
        tilde = algebra.choose_positive_basis(
            split.fplus[0], split.fplus[1], split.fplus[2], orientation=-1
        )
        assert np.array_equal(pf.matrix, tilde.matrix)

        fb = gluing.bubble_basis_for(split, flip=True)
        ortho_f, det_gap_f = fb.residuals()
        assert ortho_f < 1e-12 and abs(det_gap_f) < 1e-12
        assert gluing.interaction_coefficient(split, gluing.pairing_frame(fb)) < 0.0


def test_bubble_basis_zero_curvature_falls_back_to_identity():
    split = background.CurvatureSplit(
        fminus=np.zeros((3, 3)), fplus=np.zeros((3, 3))
    )
    b = gluing.bubble_basis_for(split)
    assert np.array_equal(b.matrix, np.eye(3))
    assert b.orientation == 1


def test_interaction_coefficient_examples():
    fp = np.zeros((3, 3))
    fp[0, 0] = 1.0
    single = background.CurvatureSplit(fminus=np.zeros((3, 3)), fplus=fp)
    assert gluing.interaction_coefficient(single, algebra.IDENTITY_BASIS) == 4.0

    zero = background.CurvatureSplit(
        fminus=np.zeros((3, 3)), fplus=np.zeros((3, 3))
    )
    assert gluing.interaction_coefficient(zero, algebra.IDENTITY_BASIS) == 0.0

    doubled = background.CurvatureSplit(fminus=SPLIT.fminus, fplus=2.0 * SPLIT.fplus)
    assert gluing.interaction_coefficient(
        doubled, algebra.IDENTITY_BASIS
    ) == pytest.approx(
        2.0 * gluing.interaction_coefficient(SPLIT, algebra.IDENTITY_BASIS),
        rel=1e-14,
    )


def test_interaction_prediction_examples():
    fp = np.zeros((3, 3))
    fp[0, 0] = 0.25  # unit pairing once the inner-product scale is applied
    unit = background.CurvatureSplit(fminus=np.zeros((3, 3)), fplus=fp)
    pred = gluing.interaction_prediction(unit, algebra.IDENTITY_BASIS)
    assert pred == pytest.approx(-2.0 * FOUR_PI_SQ, rel=1e-8)

    zero = background.CurvatureSplit(
        fminus=np.zeros((3, 3)), fplus=np.zeros((3, 3))
    )
    assert gluing.interaction_prediction(zero, algebra.IDENTITY_BASIS) == 0.0

    basis = gluing.pairing_frame(gluing.bubble_basis_for(SPLIT))
    assert gluing.interaction_prediction(SPLIT, basis) < 0.0


def test_c0_constant_matches_four_pi_squared():
    c0 = gluing.c0_constant()
    assert abs(c0 / FOUR_PI_SQ - 1.0) < 1e-10


def test_c0_constant_independent_of_slice_positions():
    a = gluing.c0_constant(t_values=(-3.0, 2.0))
    b = gluing.c0_constant(t_values=(0.5,))
    assert a == pytest.approx(b, rel=1e-10)


def test_twist_matrix_is_a_reflection():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 4))
    T = gluing.twist_matrix(x)
    assert T.shape == (200, 3, 3)
    prods = np.einsum("nij,nkj->nik", T, T)
    np.testing.assert_allclose(prods, np.broadcast_to(np.eye(3), prods.shape),
                               atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(T), -1.0, atol=1e-12)


def test_twist_matrix_axis_value_and_scale_invariance():
    e1 = np.array([[1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(gluing.twist_matrix(e1)[0], -np.eye(3), atol=1e-14)

    rng = np.random.default_rng(6)
    x = rng.normal(size=(50, 4))
    np.testing.assert_allclose(
        gluing.twist_matrix(x), gluing.twist_matrix(2.5 * x), atol=1e-12
    )
    # cylinder rows (t, w) address the same ray as the scaled point
    w = x / np.linalg.norm(x, axis=1, keepdims=True)
    pts = np.concatenate([np.full((50, 1), 0.7), w], axis=1)
    np.testing.assert_allclose(
        gluing.twist_matrix(pts), gluing.twist_matrix(w), atol=1e-12
    )


def test_twist_matrix_sphere_average_vanishes():
    sphere = quadrature.sphere_rule(9)
    T = gluing.twist_matrix(sphere.nodes)
    avg = np.einsum("n,nij->ij", sphere.weights, T) / np.sum(sphere.weights)
    assert np.max(np.abs(avg)) < 1e-10


def test_twist_matrix_rejects_bad_rows():
    with pytest.raises(OriginSingular):
        gluing.twist_matrix(np.zeros((1, 4)))
    with pytest.raises(ValueError):
        gluing.twist_matrix(np.zeros((2, 3)))


def test_twist_identity_residual_small():
    rng = np.random.default_rng(7)
    pts = cylinder_points(rng, 1000)
    res = gluing.twist_identity_residual(pts)
    assert np.max(np.abs(res)) < 1e-10


def test_rate_splitting_identity_both_families():
    rng = np.random.default_rng(8)
    pts = cylinder_points(rng, 1000)
    for kind in ("sd", "asd"):
        res = gluing.obv_identity_check(pts, kind=kind)
        assert np.max(np.abs(res)) < 1e-10


def test_instanton_tail_matches_closed_form():
    for delta in (0.2, 0.1):
        val, err = gluing.instanton_tail_energy(delta)
        u = 1.0 / (1.0 + delta**-2)
        exact = 96.0 * math.pi**2 * (0.5 * u**2 - u**3 / 3.0)
        assert val == pytest.approx(exact, rel=1e-12)
        assert err < 1e-9 * exact


def test_seam_matches_bubble_expansion_at_inner_edge():
    bg = background.BackgroundConnection(
        f0=BG.f0, quad=background.sample_quadratic_perturbation(7)
    )
    G = gluing.glued_connection(bg, 1.25e-4, 0.1)
    rng = np.random.default_rng(9)
    pts = cylinder_points(rng, 40, t_lo=G.cutoffs.t_min, t_hi=G.cutoffs.t_min)
    nf = gluing.neck_field(G).evaluate(pts)
    lead, rem = instanton.cylinder_expansion(G.lam, pts, G.bubble.bubble_basis)
    scale = np.max(np.abs(lead + rem))
    np.testing.assert_allclose(nf, lead + rem, atol=1e-12 * scale, rtol=0)


def test_seam_matches_background_expansion_at_outer_edge():
    bg = background.BackgroundConnection(
        f0=BG.f0, quad=background.sample_quadratic_perturbation(7)
    )
    G = gluing.glued_connection(bg, 1.25e-4, 0.1)
    rng = np.random.default_rng(10)
    pts = cylinder_points(rng, 40, t_lo=G.cutoffs.t_max, t_hi=G.cutoffs.t_max)
    nf = gluing.neck_field(G).evaluate(pts)
    lead, rem = background.cylinder_form(bg, pts)
    scale = np.max(np.abs(lead + rem))
    np.testing.assert_allclose(nf, lead + rem, atol=1e-12 * scale, rtol=0)


def test_energy_split_additive_over_neck(neck_energy_bundle):
    _, parts, direct, _ = neck_energy_bundle
    assert parts["E_gain"] == pytest.approx(direct, rel=1e-12)
    total = parts["E_left"] + parts["E_right"] + parts["E_inter"]
    assert parts["E_gain"] == pytest.approx(total, rel=1e-14)


def test_energy_split_reports_all_parts(neck_energy_bundle):
    _, parts, _, _ = neck_energy_bundle
    assert set(parts) == {
        "E_left", "E_right", "E_inter", "E_gain", "E_loss", "quad_err"
    }
    assert parts["E_inter"] < 0.0
    assert parts["E_left"] > 0.0
    assert parts["E_right"] > 0.0
    assert parts["E_loss"] > 0.0
    assert 0.0 <= parts["quad_err"] < 0.01 * abs(parts["E_inter"])


def test_cutoff_halves_match_slice_constant(halves_bundle):
    G, v1, v2 = halves_bundle
    split = background.split_curvature(BG.f0)
    coeff = gluing.interaction_coefficient(
        split, gluing.pairing_frame(G.bubble.bubble_basis)
    )
    predicted = -gluing.c0_constant() * G.lam**2 * coeff
    assert v1 == pytest.approx(predicted, rel=1e-12)
    assert v2 == pytest.approx(predicted, rel=1e-12)
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_slice_pairing_vanishes_between_leading_terms(halves_bundle):
    G, _, _ = halves_bundle
    res = gluing.slice_vanishing_residual(G, (-5.5, -4.5, -3.5))
    assert np.max(np.abs(res)) < 1e-9


def test_flat_background_neck_energies_vanish(flat_parts):
    assert abs(flat_parts["E_left"]) < 1e-15
    assert abs(flat_parts["E_inter"]) < 1e-15
    assert flat_parts["E_right"] > 0.0
    assert flat_parts["E_loss"] > 0.0
    assert flat_parts["E_gain"] == pytest.approx(flat_parts["E_right"], rel=1e-14)


def test_right_field_energy_approaches_unit_annulus(right_energy_bundle):
    cut1, ann1 = right_energy_bundle[1e-3]
    cut2, ann2 = right_energy_bundle[2.5e-4]
    excess1 = cut1 - ann1
    excess2 = cut2 - ann2
    assert excess1 > 0.0 and excess2 > 0.0
    assert excess1 / ann1 < 5e-2
    assert excess2 / ann2 < 5e-4
    # window energy scales with the fourth power of the bubble scale
    assert excess2 <= excess1 / 64.0


def test_inverted_bubble_annulus_scale_invariance(right_energy_bundle):
    _, ann = right_energy_bundle[1e-3]
    gauge = instanton.InstantonGauge(
        instanton.GaugeKind.INVERTED, 1e-3, algebra.IDENTITY_BASIS
    )
    region = quadrature.RegionSpec.annulus(1e-3 / 0.1, 0.1, scale_hint=1e-3)
    val, _ = quadrature.ym_energy_with_error(
        instanton.connection_field(gauge), region, MetricModel.flat(), 7
    )
    assert val == pytest.approx(ann, rel=1e-12)


def test_scan_skips_infeasible_and_sorts_rows(scan_rows):
    # the 8e-3 request fails the neck-length gate and is dropped
    assert [r.lam for r in scan_rows] == [1e-3, 4e-3]
    assert all(r.delta == 0.2 for r in scan_rows)
    for r in scan_rows:
        assert r.diff == pytest.approx(r.e_gain - r.e_loss, rel=1e-12)
    assert scan_rows[0].diff < 0.0


def test_scan_parallel_matches_serial(scan_rows):
    rows_par = gluing.energy_comparison_scan(
        BG, deltas=(0.2,), lambdas=(8e-3, 4e-3, 1e-3), rule=3, workers=2
    )
    assert rows_par == list(scan_rows)


def test_scan_prediction_column(scan_rows):
    split = background.split_curvature(BG.f0)
    basis = gluing.bubble_basis_for(split)
    pred = gluing.interaction_prediction(split, gluing.pairing_frame(basis))
    for r in scan_rows:
        assert r.predicted_per_lambda2 == pytest.approx(pred, rel=1e-12)
        assert r.predicted_per_lambda2 < 0.0
        # no ambient metric: the comparison needs no interior correction
        assert r.delta_ym == r.diff


def test_scan_flip_reverses_both_signs():
    rows = gluing.energy_comparison_scan(
        BG, deltas=(0.2,), lambdas=(1e-3,), rule=3, flip=True
    )
    assert len(rows) == 1
    assert rows[0].diff > 0.0
    assert rows[0].predicted_per_lambda2 > 0.0


def test_scan_row_serialization_round_trip():
    row = gluing.ScanRow(0.2, 1e-3, 1.5, 1.25, 0.25, -272.85, 0.25, 1e-9)
    header_cols = gluing.SCAN_CSV_HEADER.split(",")
    assert list(row.as_dict()) == header_cols
    assert row.as_csv().split(",") == [
        repr(v) for v in row.as_dict().values()
    ]


def test_scan_outputs_are_deterministic(scan_rows, tmp_path):
    rows = list(scan_rows)
    meta = gluing.scan_metadata(rule=3, extra={"note": "fixture"})

    c1, c2 = tmp_path / "a.csv", tmp_path / "b.csv"
    gluing.scan_to_csv(rows, c1)
    gluing.scan_to_csv(rows, c2)
    assert c1.read_bytes() == c2.read_bytes()
    lines = c1.read_text().splitlines()
    assert lines[0] == gluing.SCAN_CSV_HEADER
    assert len(lines) == 1 + len(rows)

    j1, j2 = tmp_path / "a.json", tmp_path / "b.json"
    gluing.scan_to_json(rows, j1, meta)
    gluing.scan_to_json(rows, j2, meta)
    assert j1.read_bytes() == j2.read_bytes()
    payload = json.loads(j1.read_text())
    assert payload["metadata"]["note"] == "fixture"
    assert len(payload["rows"]) == len(rows)
    assert payload["rows"][0]["delta"] == rows[0].delta


def test_scan_metadata_keys():
    meta = gluing.scan_metadata(rule=7)
    assert meta["sphere_rule"] == 7
    assert meta["radial_order"] == 16
    assert meta["cutoff_profile"] == "smoothstep-quintic"
    assert meta["algebra_normalization"] == "inner=-2tr"
    assert meta["metric"] == "flat"
    assert meta["flip"] is False


def test_metric_shift_slopes_separate_curvature_classes():
    lams = (1e-2, 1e-1)
    flatlike = gluing.lemma28_scan(
        MetricModel.conformal_normal(forms.RiemannTensor.sample_ricci_flat()),
        lams=lams, rule=5,
    )
    generic = gluing.lemma28_scan(
        MetricModel.conformal_normal(forms.RiemannTensor.sample_generic()),
        lams=lams, rule=5,
    )
    assert flatlike["ball_slope"] > 2.7
    assert flatlike["neck_slope"] > 2.7
    assert abs(generic["ball_slope"] - 2.0) < 0.3
    assert abs(generic["neck_slope"] - 2.0) < 0.3


def test_metric_shift_zero_tensor_gives_zero_shifts():
    met = MetricModel.conformal_normal(forms.RiemannTensor(np.zeros((4, 4, 4, 4))))
    out = gluing.lemma28_scan(met, lams=(1e-2, 1e-1), rule=3)
    assert all(d == 0.0 for d in out["ball_diffs"])
    assert all(d == 0.0 for d in out["neck_diffs"])
    assert math.isnan(out["ball_slope"]) and math.isnan(out["neck_slope"])


def test_metric_shift_rejects_wide_scales():
    met = MetricModel.conformal_normal(forms.RiemannTensor.sample_generic())
    with pytest.raises(ValueError):
        gluing.lemma28_scan(met, lams=(0.2,), delta=0.4)


def test_bubble_interior_correction_zero_tensor():
    met = MetricModel.conformal_normal(forms.RiemannTensor(np.zeros((4, 4, 4, 4))))
    corr, err = gluing.bubble_interior_correction(1e-3, 0.1, met, rule=5)
    assert corr == 0.0 and err == 0.0
