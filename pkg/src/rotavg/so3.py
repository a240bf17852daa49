"""3x3 rotation kernels used by every other module.

Conventions:
- Rotation matrices are 3x3 numpy arrays acting on column vectors, v' = R @ v.
- A matrix "is a rotation" when max|R^T R - I| <= 1e-9 and |det R - 1| <= 1e-9.
- Quaternions are Hamilton-convention with (qx, qy, qz, qw) ordering, scalar
  last, matching the g2o wire format.
- Angles are radians unless a name says degrees.
"""

import numpy as np

from .errors import (
    DegenerateInputError,
    IndefiniteInputError,
    NotSymmetricError,
    ZeroQuaternionError,
)

ROTATION_TOL = 1e-9

_I3 = np.eye(3)


def is_rotation(R: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True when R satisfies the orthogonality and det +1 invariants."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    if np.max(np.abs(R.T @ R - _I3)) > tol:
        return False
    return abs(np.linalg.det(R) - 1.0) <= tol


def chordal_distance(R: np.ndarray, S: np.ndarray) -> float:
    """Frobenius norm of R - S; in [0, 2*sqrt(2)] when both are rotations.

    Inputs need not be rotations.
    """
    return float(np.linalg.norm(np.asarray(R, float) - np.asarray(S, float)))


def angular_distance(R: np.ndarray, S: np.ndarray) -> float:
    """Rotation angle of R S^T in [0, pi].

    Computed as arccos((tr(R S^T) - 1) / 2) with the argument clamped to
    [-1, 1], which is robust near 0 and pi where a matrix logarithm is not.
    """
    t = float(np.trace(np.asarray(R, float) @ np.asarray(S, float).T))
    return float(np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0)))


def chordal_from_angular(theta: float) -> float:
    """Chordal distance of two rotations separated by angle theta in [0, pi]."""
    return float(2.0 * np.sqrt(2.0) * np.sin(theta / 2.0))


def _checked_eigh(M: np.ndarray, sym_tol: float = 1e-9):
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > sym_tol:
        raise NotSymmetricError(
            f"matrix deviates from symmetry by {np.max(np.abs(M - M.T)):.3e}"
        )
    return np.linalg.eigh(0.5 * (M + M.T))


def sqrt_pseudoinverse(M: np.ndarray) -> np.ndarray:
    """Pseudoinverse of the symmetric PSD square root, [(M)^{1/2}]^+.

    Eigenvalues below the scale-aware rank cutoff 1e-10 * max(lambda_max, 1)
    map to 0, the rest to 1/sqrt(lambda). Negative dust above -1e-6 is
    clamped to zero.

    Raises:
        NotSymmetricError: symmetry violated beyond 1e-9 (max-abs entry).
        IndefiniteInputError: an eigenvalue below -1e-6.
    """
    w, V = _checked_eigh(M)
    if w[0] < -1e-6:
        raise IndefiniteInputError(f"eigenvalue {w[0]:.3e} below -1e-6")
    w = np.clip(w, 0.0, None)
    cutoff = 1e-10 * max(w[-1], 1.0)
    inv = np.where(w > cutoff, 1.0 / np.sqrt(np.where(w > cutoff, w, 1.0)), 0.0)
    return (V * inv) @ V.T


def sqrt_psd(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root from the same eigendecomposition.

    Companion of sqrt_pseudoinverse: for full-rank M,
    sqrt_pseudoinverse(M) @ sqrt_psd(M) = I.
    """
    w, V = _checked_eigh(M)
    if w[0] < -1e-6:
        raise IndefiniteInputError(f"eigenvalue {w[0]:.3e} below -1e-6")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def project_to_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest rotation to M: the argmax of tr(R^T M) over SO(3).

    Orthogonal-factor extraction with determinant correction; when the
    orthogonal factor has det -1 the singular direction with the smallest
    singular value is negated.

    Raises:
        DegenerateInputError: two or more singular values below 1e-12
            (the projection is not unique).
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    U, s, Vt = np.linalg.svd(M)
    if s[1] < 1e-12:
        raise DegenerateInputError(
            f"singular values {s} leave the nearest rotation ill-defined"
        )
    d = np.sign(np.linalg.det(U @ Vt))
    return (U * np.array([1.0, 1.0, d])) @ Vt


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a Hamilton unit quaternion (qx, qy, qz, qw).

    The quaternion is renormalised internally; callers should supply norms
    within 1e-6 of 1.

    Raises:
        ZeroQuaternionError: the norm is below 1e-9.
    """
    qx, qy, qz, qw = np.asarray(q, dtype=float).reshape(4)
    n = np.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
    if n < 1e-9:
        raise ZeroQuaternionError("quaternion norm below 1e-9")
    qx, qy, qz, qw = qx / n, qy / n, qz / n, qw / n
    return np.array(
        [
            [
                1.0 - 2.0 * (qy * qy + qz * qz),
                2.0 * (qx * qy - qz * qw),
                2.0 * (qx * qz + qy * qw),
            ],
            [
                2.0 * (qx * qy + qz * qw),
                1.0 - 2.0 * (qx * qx + qz * qz),
                2.0 * (qy * qz - qx * qw),
            ],
            [
                2.0 * (qx * qz - qy * qw),
                2.0 * (qy * qz + qx * qw),
                1.0 - 2.0 * (qx * qx + qy * qy),
            ],
        ]
    )


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (qx, qy, qz, qw) of a rotation matrix.

    Shepperd-style branch on the largest diagonal pivot for stability; the
    sign is fixed so qw >= 0.
    """
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[i] = 0.25 * s
        q[j] = (R[j, i] + R[i, j]) / s
        q[k] = (R[k, i] + R[i, k]) / s
        q[3] = (R[k, j] - R[j, k]) / s
    if q[3] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=float).reshape(3)
    n = np.linalg.norm(a)
    if n < 1e-15:
        raise ValueError("axis must be nonzero")
    a = a / n
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return _I3 + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_x(angle: float) -> np.ndarray:
    return rotation_about_axis((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> np.ndarray:
    return rotation_about_axis((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> np.ndarray:
    return rotation_about_axis((0.0, 0.0, 1.0), angle)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly from SO(3) (normalised 4-normal quaternion)."""
    q = rng.standard_normal(4)
    return quat_to_rotation(q / np.linalg.norm(q))


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of n uniform rotations, shape (n, 3, 3)."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return quats_to_rotations(q)


def quats_to_rotations(q: np.ndarray) -> np.ndarray:
    """Vectorised quat_to_rotation over an (n, 4) array of unit quaternions."""
    q = np.asarray(q, dtype=float)
    x, y, z, w = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[:, 0, 1] = 2.0 * (x * y - z * w)
    R[:, 0, 2] = 2.0 * (x * z + y * w)
    R[:, 1, 0] = 2.0 * (x * y + z * w)
    R[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[:, 1, 2] = 2.0 * (y * z - x * w)
    R[:, 2, 0] = 2.0 * (x * z - y * w)
    R[:, 2, 1] = 2.0 * (y * z + x * w)
    R[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def angular_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Vectorised angular_distance over matching (n, 3, 3) stacks."""
    t = np.einsum("nij,nij->n", A, B)
    return np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0))


def project_rotations(Ms: np.ndarray) -> np.ndarray:
    """Vectorised project_to_rotation over an (n, 3, 3) stack.

    Raises DegenerateInputError if any block has two singular values
    below 1e-12.
    """
    Ms = np.asarray(Ms, dtype=float)
    U, s, Vt = np.linalg.svd(Ms)
    if np.any(s[:, 1] < 1e-12):
        bad = int(np.argmin(s[:, 1]))
        raise DegenerateInputError(
            f"block {bad} has singular values {s[bad]}; projection ill-defined"
        )
    d = np.sign(np.linalg.det(np.einsum("nij,njk->nik", U, Vt)))
    U = U.copy()
    U[:, :, 2] *= d[:, None]
    return np.einsum("nij,njk->nik", U, Vt)
