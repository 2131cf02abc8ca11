import math

import numpy as np
import pytest

from iforge import algebra, verify

EXPECTED_SIZES = {
    "algebra": 4,
    "forms": 4,
    "instanton": 6,
    "cylinder": 6,
    "gluing": 6,
}


@pytest.fixture(scope="module")
def all_checks():
    return verify.run_suite("all")


def test_every_check_passes(all_checks):
    failed = [c.name for c in all_checks if not c.passed]
    assert failed == []


def test_suite_sizes_and_order(all_checks):
    names = [c.name for c in all_checks]
    assert len(set(names)) == len(names)
    prefixes = [n.split("/")[0] for n in names]
    expected = []
    for suite in verify.SUITE_ORDER:
        expected.extend([suite] * EXPECTED_SIZES[suite])
    assert prefixes == expected


def test_residuals_are_finite_and_reported(all_checks):
    for c in all_checks:
        assert math.isfinite(c.residual)
        assert c.residual < c.tolerance


def test_format_report_lines(all_checks):
    lines = verify.format_report(all_checks)
    assert len(lines) == len(all_checks) + 1
    for line, check in zip(lines, all_checks):
        assert line.startswith("PASS ")
        assert check.name in line
        assert "residual=" in line and "tol=" in line
    assert lines[-1] == f"{len(all_checks)}/{len(all_checks)} checks passed"


def test_format_report_marks_failures():
    checks = [
        verify.Check("demo/ok", 0.0, 1e-12),
        verify.Check("demo/broken", 3.5, 1e-10, "synthetic"),
    ]
    lines = verify.format_report(checks)
    assert lines[0].startswith("PASS demo/ok")
    assert lines[1].startswith("FAIL demo/broken")
    assert "(synthetic)" in lines[1]
    assert lines[-1] == "1/2 checks passed"


def test_check_rejects_non_finite_residual():
    assert not verify.Check("demo/nan", float("nan"), 1e-6).passed
    assert not verify.Check("demo/inf", float("inf"), 1e-6).passed
    assert verify.Check("demo/edge", 0.0, 1e-300).passed
    assert not verify.Check("demo/equal", 1e-6, 1e-6).passed


def test_unknown_suite_is_rejected():
    with pytest.raises(ValueError, match="nonsense"):
        verify.run_suite("nonsense")


def test_cylinder_suite_includes_sphere_average():
    names = [c.name for c in verify.run_suite("cylinder")]
    assert "cylinder/twist-sphere-average" in names


def test_sabotaged_inner_scale_fails_algebra_suite(monkeypatch):
    monkeypatch.setattr(algebra, "INNER_SCALE", 5.0)
    checks = verify.run_suite("algebra")
    failed = {c.name for c in checks if not c.passed}
    assert "algebra/inner-scale" in failed


def test_gluing_suite_standalone_matches_combined(all_checks):
    alone = verify.run_suite("gluing")
    combined = [c for c in all_checks if c.name.startswith("gluing/")]
    assert [c.name for c in alone] == [c.name for c in combined]
    assert np.allclose(
        [c.residual for c in alone], [c.residual for c in combined]
    )
