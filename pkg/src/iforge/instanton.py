"""The standard concentrated connection and its two gauges.

The regular gauge is smooth on all of Euclidean space; the inverted
gauge is the pullback of the regular one under inversion composed with
a swap of the last two coordinates (an orientation-preserving map), is
singular only at the origin, and decays at infinity.  Both carry an
optional scale and an optional rotation of the algebra coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from . import forms
from .algebra import IDENTITY_BASIS, AlgBasis
from .errors import OutOfDomain, SingularPoint
from .forms import Chart, FormField

SWAP34 = np.array(
    [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 0, 1.0], [0, 0, 1.0, 0]]
)

# Conjugating the left generator family by SWAP34 lands on the right
# family with its last two members exchanged, so axis i of the inverted
# gauge carries the i-th entry of this reordering, not the i-th right
# rotation form itself.
_INVERTED_ORDER = np.array([0, 2, 1])


class GaugeKind(Enum):
    REGULAR = "regular"
    INVERTED = "inverted"


@dataclass(frozen=True)
class InstantonGauge:
    kind: GaugeKind = GaugeKind.REGULAR
    scale: float = 1.0
    bubble_basis: AlgBasis = IDENTITY_BASIS

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("instanton scale must be positive")


def theta(i: int, x: np.ndarray) -> np.ndarray:
    """Coefficients of the i-th left rotation form, shape (n, 4)."""
    return forms.rotation_coefficients(np.atleast_2d(x), "asd")[:, i]


def psi(i: int, x: np.ndarray) -> np.ndarray:
    """Coefficients of the i-th right rotation form, shape (n, 4)."""
    return forms.rotation_coefficients(np.atleast_2d(x), "sd")[:, i]


def inversion_swap(x: np.ndarray) -> np.ndarray:
    """x -> (x1, x2, x4, x3) / |x|^2, the orientation-preserving inversion."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = np.einsum("na,na->n", x, x)
    if np.any(r2 == 0.0):
        raise SingularPoint("inversion is undefined at the origin")
    return (x @ SWAP34.T) / r2[:, None]


def _radial2(x: np.ndarray) -> np.ndarray:
    return np.einsum("na,na->n", x, x)


def _require_regular_domain(gauge: InstantonGauge, r2: np.ndarray) -> None:
    if gauge.kind is GaugeKind.INVERTED and np.any(r2 == 0.0):
        raise SingularPoint("inverted gauge is singular at the origin")


def connection(gauge: InstantonGauge, x: np.ndarray) -> np.ndarray:
    """Connection coefficients, shape (n, 4, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = _radial2(x)
    lam = gauge.scale
    _require_regular_domain(gauge, r2)
    if gauge.kind is GaugeKind.REGULAR:
        c = forms.rotation_coefficients(x, "asd")
        prof = 1.0 / (lam**2 + r2)
    else:
        c = forms.rotation_coefficients(x, "sd")[:, _INVERTED_ORDER]
        prof = lam**2 / ((lam**2 + r2) * r2)
    return np.einsum("nia,ic,n->nac", c, gauge.bubble_basis.matrix, prof)


def connection_d(gauge: InstantonGauge, x: np.ndarray) -> np.ndarray:
    """Exact exterior derivative of the connection, shape (n, 4, 4, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = _radial2(x)
    lam = gauge.scale
    _require_regular_domain(gauge, r2)
    if gauge.kind is GaugeKind.REGULAR:
        c = forms.rotation_coefficients(x, "asd")
        gens = forms.ASD_GENERATORS
        prof = 1.0 / (lam**2 + r2)
        dprof = -2.0 * x * prof[:, None] ** 2
    else:
        c = forms.rotation_coefficients(x, "sd")[:, _INVERTED_ORDER]
        gens = forms.SD_GENERATORS[_INVERTED_ORDER]
        prof = lam**2 / ((lam**2 + r2) * r2)
        dprof = (
            -(lam**2)
            * (2.0 * lam**2 + 4.0 * r2)[:, None]
            * x
            / (((lam**2 + r2) ** 2) * r2**2)[:, None]
        )
    basis = gauge.bubble_basis.matrix
    wedge = np.einsum("na,nib->niab", dprof, c)
    wedge = wedge - wedge.transpose(0, 1, 3, 2)
    body = wedge + 2.0 * prof[:, None, None, None] * gens[None, :, :, :]
    return np.einsum("niab,ic->nabc", body, basis)


def connection_field(gauge: InstantonGauge) -> FormField:
    """The connection as a Euclidean degree-1 field with exact derivative."""
    return FormField(
        chart=Chart.EUCLIDEAN4,
        degree=1,
        coeff=lambda pts: connection(gauge, pts),
        closed_d=lambda pts: connection_d(gauge, pts),
        name=f"instanton[{gauge.kind.value},scale={gauge.scale}]",
    )


def curvature_closed(gauge: InstantonGauge, x: np.ndarray) -> np.ndarray:
    """Closed-form curvature coefficients, shape (n, 4, 4, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = _radial2(x)
    lam = gauge.scale
    basis = gauge.bubble_basis.matrix
    if gauge.kind is GaugeKind.REGULAR:
        prof = lam**2 / (lam**2 + r2) ** 2
        return 2.0 * np.einsum(
            "n,iab,ic->nabc", prof, forms.ASD_GENERATORS, basis
        )
    _require_regular_domain(gauge, r2)
    # Pullback of the unit-scale regular curvature through the map
    # x -> lam * swap(x) / |x|^2 with its explicit Jacobian.
    xhat = x / np.sqrt(r2)[:, None]
    reflect = np.eye(4) - 2.0 * np.einsum("na,nb->nab", xhat, xhat)
    jac = lam * np.einsum("ab,nbc->nac", SWAP34, reflect) / r2[:, None, None]
    det = np.linalg.det(jac)
    assert np.all(det > 0.0)
    prof = (1.0 + lam**2 / r2) ** -2
    conj = np.einsum("nca,icd,ndb->niab", jac, forms.ASD_GENERATORS, jac)
    return 2.0 * np.einsum("n,niab,ic->nabc", prof, conj, basis)


def curvature_density(gauge: InstantonGauge, x: np.ndarray) -> np.ndarray:
    """|F|^2 in the flat metric: 96 lam^4 / (lam^2 + |x|^2)^4."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r2 = _radial2(x)
    lam = gauge.scale
    return 96.0 * lam**4 / (lam**2 + r2) ** 4


def orientation_reversed(gauge: InstantonGauge) -> FormField:
    """The connection pulled back through the x3/x4 swap."""
    return forms.pullback_linear(
        connection_field(gauge), SWAP34, name="instanton[reversed]"
    )


def cylinder_expansion(
    lam: float,
    points: np.ndarray,
    basis: AlgBasis = IDENTITY_BASIS,
    delta: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Leading cylinder term and exact remainder of the inverted gauge.

    points are cylinder (t, w) rows.  The chart pullback of the inverted
    connection is lam^2 e^{-2t} / (1 + lam^2 e^{-2t}) times the right
    rotation forms in conjugated order; the leading part drops the
    denominator and the
    remainder carries the lam^4 e^{-4t} correction, so the two sum to
    the exact pullback.  When delta is given the expansion is only
    served on t > log(lam) - log(delta).
    """
    points = forms.check_points(points, Chart.CYLINDER)
    t, w = points[:, 0], points[:, 1:]
    if delta is not None and np.any(t <= np.log(lam) - np.log(delta)):
        raise OutOfDomain("cylinder expansion requested below the neck")
    u = lam**2 * np.exp(-2.0 * t)
    psi_c = forms.rotation_coefficients(w, "sd")[:, _INVERTED_ORDER]
    frame = np.einsum("nia,ic->nac", psi_c, basis.matrix)
    leading = np.zeros((points.shape[0], 5, 3))
    leading[:, 1:] = u[:, None, None] * frame
    remainder = np.zeros_like(leading)
    remainder[:, 1:] = (-(u**2) / (1.0 + u))[:, None, None] * frame
    return leading, remainder
