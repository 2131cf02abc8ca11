"""so(3) ~ su(2) vector algebra.

Elements are stored as 3-vectors of coefficients in the ordered basis
(i, j, k).  The normalization is pinned so that inner(i, i) = 4, which
equals -2 tr(XY) in the 2x2 matrix picture, and bracket(i, j) = 2 k.
All operations broadcast over leading axes, so batches of shape
(..., 3) work everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZero, NotARotation

# Read at call time so a test harness can sabotage the normalization and
# confirm the verification suites notice.
INNER_SCALE = 4.0

BASIS_I = np.array([1.0, 0.0, 0.0])
BASIS_J = np.array([0.0, 1.0, 0.0])
BASIS_K = np.array([0.0, 0.0, 1.0])

# Linear-dependence threshold for the basis selection, relative to |F|.
_DEP_TOL = 1e-10


def inner(x, y):
    """Invariant inner product of two algebra elements.

    Accepts arrays of shape (..., 3) and returns shape (...).  The basis
    (i, j, k) is orthogonal with squared norm 4 per element.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return INNER_SCALE * np.sum(x * y, axis=-1)


def norm(x):
    """sqrt(inner(x, x))."""
    return np.sqrt(inner(x, x))


def bracket(x, y):
    """Lie bracket; equals 2 cross(x, y) in coordinates.

    Antisymmetric, satisfies Jacobi, and bracket(i, j) = 2 k.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 2.0 * np.cross(x, y)


def check_rotation(r, tol=1e-12):
    """Validate that r is a proper rotation; raises NotARotation."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise NotARotation(f"expected 3x3 matrix, got shape {r.shape}")
    ortho = np.max(np.abs(r.T @ r - np.eye(3)))
    det = np.linalg.det(r)
    if ortho > tol or abs(det - 1.0) > tol:
        raise NotARotation(
            f"orthogonality residual {ortho:.2e}, det {det:.15f}"
        )
    return r


def adjoint_rotate(r, x):
    """Adjoint action of SO(3): rotate coordinates by r.

    Preserves inner and bracket.  r must be orthogonal with det +1
    (validated to 1e-12).
    """
    r = check_rotation(r)
    x = np.asarray(x, dtype=float)
    return x @ r.T


@dataclass(frozen=True)
class AlgBasis:
    """Orthonormal (up to the scale-4 inner product) algebra basis.

    The rows of `matrix` are the coordinates of e1, e2, e3; its
    determinant equals `orientation`.
    """

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    orientation: int

    @property
    def matrix(self):
        return np.stack([self.e1, self.e2, self.e3])

    def residuals(self):
        """(orthonormality residual, det - orientation) for diagnostics."""
        m = self.matrix
        return (
            float(np.max(np.abs(m @ m.T - np.eye(3)))),
            float(np.linalg.det(m) - self.orientation),
        )


IDENTITY_BASIS = AlgBasis(BASIS_I, BASIS_J, BASIS_K, +1)


def _complete(e1):
    # Deterministic unit vector orthogonal to e1: Gram-Schmidt against the
    # coordinate axis least aligned with e1.
    axis = np.zeros(3)
    axis[np.argmin(np.abs(e1))] = 1.0
    v = axis - np.dot(axis, e1) * e1
    return v / np.linalg.norm(v)


def choose_positive_basis(f1, f2, f3, orientation=+1):
    """Orthonormal, oriented basis making f1.e1 + f2.e2 + f3.e3 > 0.

    Follows the constructive three-case argument: sort inputs by
    decreasing length, set e1 along the longest, then branch on whether
    the remaining vectors are multiples of it.  Ties in the sort keep
    the original index order, and the requested orientation is imposed
    on the output in the original index positions.

    Raises AllZero when all three inputs vanish.
    """
    if orientation not in (+1, -1):
        raise ValueError(f"orientation must be +1 or -1, got {orientation}")
    fs = [np.asarray(f, dtype=float).reshape(3) for f in (f1, f2, f3)]
    lengths = [np.linalg.norm(f) for f in fs]
    if max(lengths) == 0.0:
        raise AllZero("all three input vectors are zero")

    # Stable sort by decreasing length; sign of the permutation feeds the
    # orientation of the sorted sub-problem so the unsorted result has the
    # requested determinant.
    order = sorted(range(3), key=lambda idx: (-lengths[idx], idx))
    perm_sign = +1 if order in ([0, 1, 2], [1, 2, 0], [2, 0, 1]) else -1
    g1, g2, g3 = (fs[idx] for idx in order)
    target = orientation * perm_sign

    e1 = g1 / np.linalg.norm(g1)

    def residual(v):
        # Projecting twice keeps the component along e1 at machine
        # precision even when v is nearly parallel to e1.
        v = v - np.dot(v, e1) * e1
        return v - np.dot(v, e1) * e1

    r2, r3 = residual(g2), residual(g3)
    dep2 = np.linalg.norm(r2) <= _DEP_TOL * np.linalg.norm(g2)
    dep3 = np.linalg.norm(r3) <= _DEP_TOL * np.linalg.norm(g3)

    if dep2 and dep3:
        # Both remaining vectors are multiples of g1; any completion works.
        e2 = _complete(e1)
        e3 = target * np.cross(e1, e2)
    elif not dep2:
        e2 = r2 / np.linalg.norm(r2)
        e3 = target * np.cross(e1, e2)
    else:
        # g2 is a multiple of g1 but g3 is not; align e3 with g3's residual
        # and let the orientation fix e2.
        e3 = r3 / np.linalg.norm(r3)
        e2 = target * np.cross(e3, e1)

    out = [None, None, None]
    for sorted_pos, original_idx in enumerate(order):
        out[original_idx] = (e1, e2, e3)[sorted_pos]
    return AlgBasis(out[0], out[1], out[2], orientation)


def basis_objective(basis, f1, f2, f3):
    """f1.e1 + f2.e2 + f3.e3 in plain coordinates (no inner scale)."""
    return float(
        np.dot(f1, basis.e1) + np.dot(f2, basis.e2) + np.dot(f3, basis.e3)
    )
