"""Dense linear algebra kernel: SVD, PCA, and nonsymmetric eigendecomposition.

Everything operates on plain float64 ``numpy`` arrays.  The eigensolver and
SVD are backed by LAPACK (Hessenberg reduction + shifted QR under the hood),
which is the appropriate tool for dense matrices of the sizes produced here
(state dimensions up to a few hundred).  This module adds the ordering,
left-vector, and validation conventions the rest of the toolkit relies on.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InsufficientDataError

#: Relative residual above which a spectrum is flagged as near-defective.
BIORTHOGONALITY_TOL = 1e-8


@dataclass(frozen=True)
class ComplexSpectrum:
    """Full eigendecomposition m = R diag(eigenvalues) L with L = R^-1.

    Eigenvalues are sorted by decreasing magnitude (ties keep the solver's
    original order).  ``right_vectors`` holds eigenvectors as columns,
    ``left_vectors`` as rows.  ``near_defective`` is set when L·R deviates
    from the identity by more than ``BIORTHOGONALITY_TOL`` relatively,
    signalling a nearly degenerate eigenvector basis; values are still
    returned so callers can decide what to trust.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    near_defective: bool = False

    def __len__(self):
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class PcaBasis:
    """Principal axes of a point cloud.

    ``components`` has orthonormal rows sorted by decreasing variance;
    ``variances`` are the eigenvalues of the population covariance
    (normalized by the number of points, not M-1).
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]

    def project(self, points: np.ndarray, k: int | None = None) -> np.ndarray:
        """Coordinates of ``points`` (rows) in the top-k principal axes."""
        comps = self.components if k is None else self.components[:k]
        return (np.atleast_2d(points) - self.mean) @ comps.T

    def embed(self, coords: np.ndarray, k: int | None = None) -> np.ndarray:
        """Map top-k coordinates back into the ambient space."""
        comps = self.components if k is None else self.components[:k]
        return self.mean + np.atleast_2d(coords) @ comps


def _require_finite(m, name):
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")


def svd(m: np.ndarray):
    """Thin SVD: returns (U, singular_values, V) with m = U diag(s) V^T.

    Singular values are nonnegative and descending; ties keep LAPACK order.
    """
    m = np.asarray(m, dtype=float)
    _require_finite(m, "svd input")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"SVD did not converge: {exc}") from exc
    return u, s, vt.T


def eig_nonsymmetric(m: np.ndarray) -> ComplexSpectrum:
    """Eigendecomposition of a square real (or complex) matrix.

    Modes are sorted by decreasing |eigenvalue| with ties broken by the
    original index, so complex-conjugate pairs stay adjacent.  Left vectors
    are computed by inverting the right-vector matrix, giving L·R = I up to
    conditioning.
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"eig_nonsymmetric needs a square matrix, got {m.shape}")
    _require_finite(m, "eig input")
    try:
        vals, right = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc

    order = np.argsort(-np.abs(vals), kind="stable")
    vals = vals[order]
    right = right[:, order]

    near_defective = False
    try:
        left = np.linalg.inv(right)
    except np.linalg.LinAlgError:
        left = np.linalg.pinv(right)
        near_defective = True
    resid = np.abs(left @ right - np.eye(len(vals))).max()
    if resid > BIORTHOGONALITY_TOL:
        near_defective = True
    return ComplexSpectrum(vals, right, left, near_defective)


def pca(points: np.ndarray) -> PcaBasis:
    """PCA of a point cloud given as rows.

    Variances are population covariance eigenvalues (divide by M).  The sign
    of each component is fixed so its largest-magnitude entry is positive,
    keeping results reproducible run to run.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError(f"pca expects a 2-d array of points, got shape {pts.shape}")
    m, n = pts.shape
    if m < 2:
        raise InsufficientDataError(f"pca needs at least 2 points, got {m}")
    _require_finite(pts, "pca input")

    mean = pts.mean(axis=0)
    centered = pts - mean
    # Full V when there are fewer points than dimensions, so the basis always
    # spans the ambient space (extra axes carry zero variance).
    _, s, vt = np.linalg.svd(centered, full_matrices=(m < n))
    variances = np.zeros(n)
    variances[: s.shape[0]] = s**2 / m
    components = vt
    # Deterministic sign: largest-|entry| coordinate of each axis is positive.
    for i in range(components.shape[0]):
        j = np.argmax(np.abs(components[i]))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaBasis(mean, components, variances)
