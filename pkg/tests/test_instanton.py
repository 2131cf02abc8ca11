import numpy as np
import pytest

from iforge import algebra, forms, instanton, quadrature
from iforge.errors import OutOfDomain, SingularPoint
from iforge.forms import MetricModel

FLAT = MetricModel.flat()


def rand_points(rng, n, lo=0.2, hi=2.0):
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.uniform(lo, hi, size=(n, 1))


def rand_basis(rng):
    f = rng.normal(size=(3, 3))
    return algebra.choose_positive_basis(f[0], f[1], f[2], +1)


def trans_jacobian(x):
    r2 = np.einsum("na,na->n", x, x)
    xhat = x / np.sqrt(r2)[:, None]
    reflect = np.eye(4) - 2.0 * np.einsum("na,nb->nab", xhat, xhat)
    return np.einsum("ab,nbc->nac", instanton.SWAP34, reflect) / r2[:, None, None]


def test_theta_psi_pointwise_examples():
    e1 = np.array([[1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(instanton.theta(0, e1), [[0, 1, 0, 0]])
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 4))
    diff = instanton.psi(0, x) - instanton.theta(0, x)
    expected = np.stack(
        [np.zeros(10), np.zeros(10), -2 * x[:, 3], 2 * x[:, 2]], axis=1
    )
    np.testing.assert_allclose(diff, expected, atol=1e-14)


def test_rotation_forms_kill_radial_direction():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(100, 4))
    for i in range(3):
        assert np.abs(np.einsum("na,na->n", instanton.theta(i, x), x)).max() < 1e-12
        assert np.abs(np.einsum("na,na->n", instanton.psi(i, x), x)).max() < 1e-12


def test_regular_connection_at_origin_and_decay():
    gauge = instanton.InstantonGauge()
    np.testing.assert_allclose(instanton.connection(gauge, np.zeros((1, 4))), 0)
    far = np.array([[1e3, 0.0, 0.0, 0.0]])
    mag = np.abs(instanton.connection(gauge, far)).max()
    assert mag == pytest.approx(1e-3, rel=1e-5)


def test_inverted_equals_inversion_pullback_of_regular():
    rng = np.random.default_rng(2)
    x = rand_points(rng, 25, 0.3, 3.0)
    reg = instanton.InstantonGauge(instanton.GaugeKind.REGULAR)
    inv = instanton.InstantonGauge(instanton.GaugeKind.INVERTED)
    y = instanton.inversion_swap(x)
    jac = trans_jacobian(x)
    pulled = np.einsum("nba,nbc->nac", jac, instanton.connection(reg, y))
    np.testing.assert_allclose(instanton.connection(inv, x), pulled, atol=1e-12)


def test_inverted_raises_at_origin():
    inv = instanton.InstantonGauge(instanton.GaugeKind.INVERTED)
    with pytest.raises(SingularPoint):
        instanton.connection(inv, np.zeros((1, 4)))
    with pytest.raises(SingularPoint):
        instanton.inversion_swap(np.zeros((1, 4)))


def test_gauge_validation():
    with pytest.raises(ValueError):
        instanton.InstantonGauge(scale=0.0)
    with pytest.raises(ValueError):
        instanton.InstantonGauge(scale=-1.0)


def test_curvature_closed_matches_generic_machinery():
    rng = np.random.default_rng(3)
    basis = rand_basis(rng)
    for kind in instanton.GaugeKind:
        for lam in (1.0, 0.3):
            gauge = instanton.InstantonGauge(kind, lam, basis)
            x = rand_points(rng, 15, 0.4, 2.5)
            closed = instanton.curvature_closed(gauge, x)
            field = instanton.connection_field(gauge)
            np.testing.assert_allclose(
                forms.curvature(field, x), closed, atol=1e-11
            )
            fd = forms.FormField(field.chart, 1, field.coeff)
            assert np.abs(forms.curvature(fd, x) - closed).max() < 2e-6


def test_curvature_norm_and_duality():
    rng = np.random.default_rng(4)
    basis = rand_basis(rng)
    for kind in instanton.GaugeKind:
        gauge = instanton.InstantonGauge(kind, 0.7, basis)
        x = rand_points(rng, 20, 0.3, 2.0)
        f = instanton.curvature_closed(gauge, x)
        np.testing.assert_allclose(
            forms.pointwise_norm2(f, 2, FLAT, x),
            instanton.curvature_density(gauge, x),
            rtol=1e-11,
        )
        plus, _ = forms.split_coeffs(f, FLAT, x, forms.Chart.EUCLIDEAN4)
        assert np.abs(plus).max() < 1e-10

    gauge = instanton.InstantonGauge()
    assert instanton.curvature_density(gauge, np.zeros((1, 4)))[0] == pytest.approx(
        96.0
    )


def test_scaled_curvature_tail_bound():
    lam, delta = 0.05, 0.2
    gauge = instanton.InstantonGauge(scale=lam)
    rng = np.random.default_rng(5)
    for radius in (2 * lam / delta, 4 * lam / delta, 1.0):
        x = rand_points(rng, 10, radius, radius)
        dens = instanton.curvature_density(gauge, x)
        assert np.all(np.sqrt(dens) <= np.sqrt(96.0) * lam**2 / radius**4)


def test_inverted_curvature_bounded_near_origin():
    inv = instanton.InstantonGauge(instanton.GaugeKind.INVERTED)
    rng = np.random.default_rng(6)
    ray = rng.normal(size=(1, 4))
    ray /= np.linalg.norm(ray)
    for r in (1e-2, 1e-4, 1e-6):
        f = instanton.curvature_closed(inv, r * ray)
        norm = forms.pointwise_norm2(f, 2, FLAT, r * ray)[0]
        assert norm == pytest.approx(96.0, rel=1e-3)


def test_cylinder_expansion_sums_to_exact_pullback():
    rng = np.random.default_rng(7)
    basis = rand_basis(rng)
    lam = 0.05
    w = rng.normal(size=(50, 4))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    t = rng.uniform(np.log(lam) + 0.2, 1.0, size=50)
    pts = np.column_stack([t, w])
    leading, rem = instanton.cylinder_expansion(lam, pts, basis)
    gauge = instanton.InstantonGauge(instanton.GaugeKind.INVERTED, lam, basis)
    pulled = forms.pullback_to_cylinder(instanton.connection_field(gauge))
    np.testing.assert_allclose(leading + rem, pulled.evaluate(pts), atol=1e-12)


def test_cylinder_expansion_remainder_scaling():
    lam = 0.01
    rng = np.random.default_rng(8)
    w = rng.normal(size=(1, 4))
    w /= np.linalg.norm(w)
    cyl = MetricModel.cylinder()
    cs = []
    for t in np.linspace(0.0, 2.5, 6):
        pts = np.column_stack([[t], w])
        _, rem = instanton.cylinder_expansion(lam, pts)
        norm = np.sqrt(
            forms.pointwise_norm2(rem, 1, cyl, pts, forms.Chart.CYLINDER)[0]
        )
        cs.append(norm / (lam**4 * np.exp(-4.0 * t)))
    cs = np.array(cs)
    assert cs.max() / cs.min() < 1.01
    assert np.all(cs < 4.1)


def test_cylinder_expansion_leading_norm_basis_independent():
    rng = np.random.default_rng(9)
    pts = np.column_stack([[0.3], [[1.0, 0.0, 0.0, 0.0]]])
    cyl = MetricModel.cylinder()
    lam = 0.2
    lead_id, _ = instanton.cylinder_expansion(lam, pts)
    lead_rot, _ = instanton.cylinder_expansion(lam, pts, rand_basis(rng))
    n1 = forms.pointwise_norm2(lead_id, 1, cyl, pts, forms.Chart.CYLINDER)
    n2 = forms.pointwise_norm2(lead_rot, 1, cyl, pts, forms.Chart.CYLINDER)
    np.testing.assert_allclose(n1, n2, rtol=1e-12)
    np.testing.assert_allclose(
        n1, 3.0 * 4.0 * lam**4 * np.exp(-2 * 0.3 * 2), rtol=1e-12
    )


def test_cylinder_expansion_domain_guard():
    lam, delta = 0.1, 0.2
    pts = np.array([[np.log(lam) - np.log(delta) - 0.5, 1.0, 0.0, 0.0, 0.0]])
    with pytest.raises(OutOfDomain):
        instanton.cylinder_expansion(lam, pts, delta=delta)


def test_total_energy_and_half_ball():
    field = instanton.connection_field(instanton.InstantonGauge())
    total = quadrature.ym_energy(field, quadrature.RegionSpec.full_r4(1e3), FLAT, 5)
    assert total == pytest.approx(16 * np.pi**2, rel=1e-7)
    half = quadrature.ym_energy(field, quadrature.RegionSpec.ball(1.0), FLAT, 5)
    assert half == pytest.approx(8 * np.pi**2, rel=1e-7)


def test_pontryagin_number_both_orientations():
    field = instanton.connection_field(instanton.InstantonGauge())
    region = quadrature.RegionSpec.full_r4(1e3)
    p = quadrature.pontryagin_number(field, region, FLAT, 5)
    assert p == pytest.approx(-4.0, abs=1e-5)
    reversed_field = instanton.orientation_reversed(instanton.InstantonGauge())
    p_rev = quadrature.pontryagin_number(reversed_field, region, FLAT, 5)
    assert p_rev == pytest.approx(4.0, abs=1e-5)


def test_gauge_equivalence_of_annulus_energy():
    reg = instanton.connection_field(instanton.InstantonGauge())
    inv = instanton.connection_field(
        instanton.InstantonGauge(instanton.GaugeKind.INVERTED)
    )
    ann = quadrature.RegionSpec.annulus(0.5, 2.0)
    e_reg = quadrature.ym_energy(reg, ann, FLAT, 5)
    e_inv = quadrature.ym_energy(inv, ann, FLAT, 5)
    assert e_inv == pytest.approx(e_reg, rel=1e-10)
    mapped = quadrature.RegionSpec.annulus(1.0 / 3.0, 1.0 / 0.7)
    e_inv2 = quadrature.ym_energy(inv, quadrature.RegionSpec.annulus(0.7, 3.0), FLAT, 5)
    e_reg2 = quadrature.ym_energy(reg, mapped, FLAT, 5)
    assert e_inv2 == pytest.approx(e_reg2, rel=1e-9)


def test_scale_invariance_of_truncated_energy():
    lam, delta = 0.01, 0.1
    scaled = instanton.connection_field(instanton.InstantonGauge(scale=lam))
    unit = instanton.connection_field(instanton.InstantonGauge())
    small = quadrature.RegionSpec.ball(lam / delta, scale_hint=lam)
    big = quadrature.RegionSpec.ball(1.0 / delta)
    e_small = quadrature.ym_energy(scaled, small, FLAT, 5)
    e_big = quadrature.ym_energy(unit, big, FLAT, 5)
    assert e_small == pytest.approx(e_big, rel=1e-9)


def test_cylinder_catalog_time_translation_invariance():
    rng = np.random.default_rng(10)
    w = rng.normal(size=(8, 4))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    base = np.column_stack([np.zeros(8), w])
    shifted = np.column_stack([np.full(8, 1.7), w])
    for kind in ("asd", "sd"):
        for i in range(3):
            field = forms.cylinder_exp_form(i, kind, 0.0)
            np.testing.assert_allclose(
                field.evaluate(base), field.evaluate(shifted), atol=1e-14
            )
