"""Synthetic smooth connections in radial gauge around a point.

A background is prescribed by its curvature value at the origin (an
algebra-valued antisymmetric 4x4 array) plus an optional smooth
quadratic-order perturbation supported inside the ball.  The module
provides the linear radial-gauge connection generated by that data, the
split of the center curvature into left and right rotation components,
and the cylinder-chart expansion with its exact remainder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from . import forms
from .errors import NotAntisymmetric, OutOfDomain
from .forms import Chart, FormField

# Fractions of the ball radius where the perturbation bump plateaus and
# where its support ends.
_QUAD_PLATEAU = 0.35
_QUAD_SUPPORT = 0.7

# Evaluation is permitted in a thin collar outside the ball so that
# derivative stencils centered on the boundary stay defined.
_DOMAIN_SLACK = 1.001


def smoothstep(u: np.ndarray) -> np.ndarray:
    """C^2 ramp: 0 for u <= 0, 1 for u >= 1, 6u^5 - 15u^4 + 10u^3 between."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (u * (6.0 * u - 15.0) + 10.0)


def _require_antisymmetric_f0(f0: np.ndarray) -> np.ndarray:
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (4, 4, 3):
        raise ValueError("center curvature must have shape (4, 4, 3)")
    if np.max(np.abs(f0 + f0.transpose(1, 0, 2))) > 1e-12 * max(
        1.0, np.max(np.abs(f0))
    ):
        raise NotAntisymmetric("center curvature must be antisymmetric")
    return f0


@dataclass(frozen=True)
class CurvatureSplit:
    """Left and right rotation components of a center curvature value.

    Each field holds three algebra elements as rows of a (3, 3) array.
    """

    fminus: np.ndarray
    fplus: np.ndarray


@dataclass(frozen=True)
class BackgroundConnection:
    """Radial-gauge connection germ: center curvature plus a bump term.

    quad, when present, is a (4, 4, 4, 3) array antisymmetric in its
    middle two axes; entry [k, j, i] multiplies x_k x_j in the dx_i
    coefficient.  The antisymmetry makes the radial contraction vanish
    identically, keeping the perturbed connection in radial gauge.
    """

    f0: np.ndarray
    quad: Optional[np.ndarray] = None
    ball_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "f0", _require_antisymmetric_f0(self.f0))
        if self.quad is not None:
            quad = np.asarray(self.quad, dtype=float)
            if quad.shape != (4, 4, 4, 3):
                raise ValueError("quad term must have shape (4, 4, 4, 3)")
            if np.max(np.abs(quad + quad.transpose(0, 2, 1, 3))) > 1e-12 * max(
                1.0, np.max(np.abs(quad))
            ):
                raise NotAntisymmetric(
                    "quad term must be antisymmetric in its middle axes"
                )
            object.__setattr__(self, "quad", quad)
        if not self.ball_radius > 0:
            raise ValueError("ball radius must be positive")


def _bump(r: np.ndarray, ball: float) -> np.ndarray:
    lo, hi = _QUAD_PLATEAU * ball, _QUAD_SUPPORT * ball
    return 1.0 - smoothstep((r - lo) / (hi - lo))


def radial_gauge_connection(
    bg: BackgroundConnection, x: np.ndarray
) -> np.ndarray:
    """Connection coefficients (n, 4, 3): half the curvature contraction
    plus the bump-weighted quadratic term."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=1)
    if np.any(r > bg.ball_radius * _DOMAIN_SLACK):
        raise OutOfDomain("point outside the background ball")
    a = 0.5 * np.einsum("jic,nj->nic", bg.f0, x)
    if bg.quad is not None:
        q = np.einsum("kjic,nk,nj->nic", bg.quad, x, x)
        a = a + _bump(r, bg.ball_radius)[:, None, None] * q
    return a


def connection_field(bg: BackgroundConnection) -> FormField:
    """The background as a Euclidean degree-1 field.

    Without a quadratic term the exterior derivative is the constant
    center curvature; the bump factor has no closed-form d here, so
    that case falls back to finite differences.
    """
    closed = None
    if bg.quad is None:
        def closed(pts):
            n = np.atleast_2d(np.asarray(pts, dtype=float)).shape[0]
            return np.broadcast_to(bg.f0, (n, 4, 4, 3)).copy()
    return FormField(
        chart=Chart.EUCLIDEAN4,
        degree=1,
        coeff=lambda pts: radial_gauge_connection(bg, pts),
        closed_d=closed,
        name="background",
    )


def split_curvature(f0: np.ndarray) -> CurvatureSplit:
    """Resolve a center curvature into left and right rotation triples."""
    f0 = _require_antisymmetric_f0(f0)
    fminus = 0.25 * np.stack(
        [
            f0[0, 1] - f0[2, 3],
            f0[0, 2] + f0[1, 3],
            f0[0, 3] - f0[1, 2],
        ]
    )
    fplus = 0.25 * np.stack(
        [
            f0[0, 1] + f0[2, 3],
            f0[0, 2] - f0[1, 3],
            f0[0, 3] + f0[1, 2],
        ]
    )
    return CurvatureSplit(fminus=fminus, fplus=fplus)


def merge_split(split: CurvatureSplit) -> np.ndarray:
    """Center curvature (4, 4, 3) reassembled from a split."""
    two_forms = np.einsum("iab,ic->abc", 2.0 * forms.ASD_GENERATORS, split.fminus)
    two_forms += np.einsum("iab,ic->abc", 2.0 * forms.SD_GENERATORS, split.fplus)
    return two_forms


def leading_connection(split: CurvatureSplit, x: np.ndarray) -> np.ndarray:
    """The linear part of the connection written through the rotation
    form catalog, shape (n, 4, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta_c = forms.rotation_coefficients(x, "asd")
    psi_c = forms.rotation_coefficients(x, "sd")
    return np.einsum("nia,ic->nac", theta_c, split.fminus) + np.einsum(
        "nia,ic->nac", psi_c, split.fplus
    )


def cylinder_leading(
    bg: BackgroundConnection, points: np.ndarray
) -> np.ndarray:
    """Leading cylinder coefficients (n, 5, 3) of the background."""
    points = forms.check_points(points, Chart.CYLINDER)
    t, w = points[:, 0], points[:, 1:]
    split = split_curvature(bg.f0)
    vals = leading_connection(split, w)
    out = np.zeros((points.shape[0], 5, 3))
    out[:, 1:] = np.exp(2.0 * t)[:, None, None] * vals
    return out


def cylinder_form(
    bg: BackgroundConnection, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Leading cylinder term and exact remainder of the background.

    The exact chart pullback of the connection splits as the catalog
    combination of the curvature components (growing like e^{2t}) plus
    whatever the quadratic term contributes; the remainder is exact
    minus leading and vanishes identically when quad is absent.
    """
    points = forms.check_points(points, Chart.CYLINDER)
    if np.any(points[:, 0] >= np.log(bg.ball_radius)):
        raise OutOfDomain("cylinder coordinates outside the background ball")
    exact = forms.pullback_to_cylinder(connection_field(bg)).evaluate(points)
    leading = cylinder_leading(bg, points)
    return leading, exact - leading


def sample_quadratic_perturbation(
    seed: int = 0, amplitude: float = 1.0
) -> np.ndarray:
    """A reproducible random quad term, antisymmetrized to respect the
    radial gauge."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(4, 4, 4, 3))
    w = 0.5 * (w - w.transpose(0, 2, 1, 3))
    return amplitude * w


_CONFIG_KEYS = ("f0_12", "f0_13", "f0_14", "f0_23", "f0_24", "f0_34")
_CONFIG_SLOTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def from_config(config: Mapping[str, str]) -> BackgroundConnection:
    """Build a background from string-keyed config entries.

    The six upper-triangle curvature entries are comma-separated real
    triples under the keys f0_12 .. f0_34; missing keys default to zero.
    Optional keys: ball_radius, quad_seed, quad_amplitude (presence of
    either quad key attaches a sampled perturbation).
    """
    f0 = np.zeros((4, 4, 3))
    for key, (a, b) in zip(_CONFIG_KEYS, _CONFIG_SLOTS):
        if key in config:
            vec = np.array([float(s) for s in str(config[key]).split(",")])
            if vec.shape != (3,):
                raise ValueError(f"{key} must be three comma-separated reals")
            f0[a, b] = vec
            f0[b, a] = -vec
    quad = None
    if "quad_seed" in config or "quad_amplitude" in config:
        quad = sample_quadratic_perturbation(
            seed=int(config.get("quad_seed", 0)),
            amplitude=float(config.get("quad_amplitude", 1.0)),
        )
    return BackgroundConnection(
        f0=f0,
        quad=quad,
        ball_radius=float(config.get("ball_radius", 1.0)),
    )
