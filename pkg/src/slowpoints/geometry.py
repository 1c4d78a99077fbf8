"""Dimensionality estimates, readout geometry, and word-deflection statistics.

Five complementary intrinsic-dimension measures are provided for a point
cloud: a PCA variance-explained threshold, the global participation ratio,
a local (k-neighborhood) participation ratio, the Levina-Bickel maximum
likelihood estimate, and the correlation dimension.  Readout geometry
compares the trained readout vectors against the regular-simplex prediction
(equal magnitudes, arccos(-1/(N-1)) pairwise angles, unit subspace
percentage).  Deflection statistics bin single-token state changes by the
token that caused them.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cells, linalg
from .errors import FitRangeError, InsufficientDataError, ParameterError


# -- dimensionality ----------------------------------------------------------

def variance_threshold_dim(basis: linalg.PcaBasis, threshold: float) -> int:
    """Smallest k whose top-k variances reach the given fraction of the total."""
    if not 0.0 < threshold < 1.0:
        raise ParameterError("threshold must be in (0, 1)")
    total = basis.variances.sum()
    if total <= 0.0:
        return 0
    frac = np.cumsum(basis.variances) / total
    return int(np.searchsorted(frac, threshold - 1e-12) + 1)


def participation_ratio(variances) -> float:
    """(sum mu)^2 / sum mu^2: a soft count of significant variances."""
    mu = np.asarray(variances, dtype=float)
    if mu.size == 0 or np.all(mu == 0.0):
        raise ParameterError("participation ratio of an all-zero spectrum is undefined")
    if np.any(mu < 0.0):
        raise ParameterError("variances must be nonnegative")
    return float(mu.sum() ** 2 / np.sum(mu**2))


def points_participation_ratio(points) -> float:
    return participation_ratio(linalg.pca(points).variances)


def _pairwise_distances(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def local_participation_ratio(points, k=30, trials=50, seed=0) -> float:
    """Average participation ratio of PCA on k-nearest-neighbor patches."""
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    if k + 1 > m:
        raise InsufficientDataError(f"need at least k+1={k + 1} points, got {m}")
    rng = np.random.default_rng(seed)
    centers = rng.integers(0, m, size=trials)
    values = []
    for c in centers:
        d = np.linalg.norm(pts - pts[c], axis=1)
        # Deterministic ties: stable argsort by (distance, index).
        nearest = np.argsort(d, kind="stable")[: k + 1]
        values.append(points_participation_ratio(pts[nearest]))
    return float(np.mean(values))


def mle_dimension(points, k=10) -> float:
    """Levina-Bickel nearest-neighbor dimension estimate.

    For each point, with T_j the distance to its j-th nearest neighbor
    (self excluded), the local estimate is the inverse of the mean of
    log(T_k/T_j) over j < k; these are averaged over all points.
    Duplicate points (zero distances) are dropped with a warning.
    """
    pts = np.asarray(points, dtype=float)
    if k < 2:
        raise ParameterError("mle_dimension needs k >= 2")
    d = _pairwise_distances(pts)
    # Drop exact duplicates, keeping first occurrences.
    dup = np.zeros(len(pts), dtype=bool)
    for i in range(len(pts)):
        if not dup[i]:
            dup[np.nonzero((d[i] == 0.0) & (np.arange(len(pts)) > i))[0]] = True
    if dup.any():
        warnings.warn(f"mle_dimension: dropped {int(dup.sum())} duplicate points")
        pts = pts[~dup]
        d = d[~dup][:, ~dup]
    m = pts.shape[0]
    if k + 1 > m:
        raise InsufficientDataError(f"need at least k+1={k + 1} distinct points, got {m}")
    d_sorted = np.sort(d, axis=1)[:, 1 : k + 1]  # columns are T_1..T_k
    logs = np.log(d_sorted[:, -1:] / d_sorted[:, :-1])  # log(T_k / T_j), j < k
    local = 1.0 / (logs.mean(axis=1))
    return float(local.mean())


@dataclass
class CorrelationDimensionFit:
    estimate: float
    fit_range: tuple
    r_values: np.ndarray
    c_values: np.ndarray


def correlation_dimension(points, r_grid=None) -> CorrelationDimensionFit:
    """Slope of log C(r) vs log r over the pre-saturation linear region.

    C(r) is the fraction of point pairs closer than r; the fit window keeps
    radii where C is between 1% and 50% of saturation.
    """
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    if m < 2:
        raise InsufficientDataError("correlation_dimension needs at least 2 points")
    d = _pairwise_distances(pts)[np.triu_indices(m, k=1)]
    positive = d[d > 0.0]
    if positive.size == 0:
        raise FitRangeError("all pairwise distances are zero")
    if r_grid is None:
        lo, hi = np.quantile(positive, [0.005, 0.995])
        if lo <= 0.0 or lo >= hi:
            raise FitRangeError("degenerate distance distribution")
        r_grid = np.geomspace(lo, hi, 50)
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0.0) or np.any(np.diff(r_grid) <= 0.0):
        raise ParameterError("r_grid must be positive and strictly ascending")
    c = np.searchsorted(np.sort(d), r_grid, side="left") / d.size
    in_window = (c >= 0.01) & (c <= 0.5)
    if in_window.sum() < 3:
        raise FitRangeError("no usable linear region (fewer than 3 grid points in window)")
    x = np.log(r_grid[in_window])
    y = np.log(c[in_window])
    slope = float(np.polyfit(x, y, 1)[0])
    r_window = r_grid[in_window]
    return CorrelationDimensionFit(slope, (float(r_window[0]), float(r_window[-1])), r_grid, c)


@dataclass
class DimensionalityReport:
    """All five estimates for one point cloud."""

    variance_dims: dict           # threshold -> integer dimension
    global_pr: float
    local_pr: float
    local_pr_k: int
    mle_dim: float
    mle_k: int
    corr_dim: float | None
    corr_fit_range: tuple | None
    ambient_dim: int
    num_points: int


def dimensionality_report(
    points,
    thresholds=(0.9, 0.95),
    n_classes=None,
    local_k=30,
    local_trials=50,
    mle_k=10,
    seed=0,
) -> DimensionalityReport:
    """Run every estimator on one point cloud.

    ``n_classes`` adds the class-dependent N/(N+1) variance threshold.  The
    correlation dimension is reported as None when no linear region exists
    (tiny or degenerate clouds); the other measures always produce values.
    """
    pts = np.asarray(points, dtype=float)
    basis = linalg.pca(pts)
    thresholds = list(thresholds)
    if n_classes is not None:
        thresholds.append(n_classes / (n_classes + 1.0))
    var_dims = {float(t): variance_threshold_dim(basis, t) for t in thresholds}
    try:
        corr = correlation_dimension(pts)
        corr_dim, corr_range = corr.estimate, corr.fit_range
    except (FitRangeError, InsufficientDataError):
        corr_dim, corr_range = None, None
    return DimensionalityReport(
        variance_dims=var_dims,
        global_pr=participation_ratio(basis.variances),
        local_pr=local_participation_ratio(pts, k=min(local_k, pts.shape[0] - 1), trials=local_trials, seed=seed),
        local_pr_k=min(local_k, pts.shape[0] - 1),
        mle_dim=mle_dimension(pts, k=mle_k) if pts.shape[0] > mle_k else float("nan"),
        mle_k=mle_k,
        corr_dim=corr_dim,
        corr_fit_range=corr_range,
        ambient_dim=pts.shape[1],
        num_points=pts.shape[0],
    )


# -- readout geometry ---------------------------------------------------------

def simplex_angle_degrees(n_classes: int) -> float:
    """Center-to-vertex angle of a regular (N-1)-simplex, in degrees."""
    if n_classes < 2:
        raise ParameterError("simplex angle needs N >= 2")
    return math.degrees(math.acos(-1.0 / (n_classes - 1)))


@dataclass
class ReadoutGeometry:
    magnitudes: np.ndarray
    pairwise_angles: dict         # (i, j) -> degrees
    theta_theory: float
    subspace_percentage: float
    plane_projections: np.ndarray | None = None
    zero_readouts: tuple = ()


def subspace_percentage(readouts: np.ndarray) -> float:
    """Mean fraction of each readout lying in the span of the others.

    1.0 means the N readouts share an (N-1)-dimensional subspace; mutually
    orthogonal readouts give 0.
    """
    n = readouts.shape[0]
    fracs = []
    for i in range(n):
        others = np.delete(readouts, i, axis=0)
        norm = np.linalg.norm(readouts[i])
        if norm == 0.0:
            continue
        u, s, _ = np.linalg.svd(others.T, full_matrices=False)
        rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
        proj = u[:, :rank].T @ readouts[i]
        fracs.append(np.linalg.norm(proj) / norm)
    if not fracs:
        raise ParameterError("all readout vectors are zero")
    return float(np.mean(fracs))


def readout_geometry(params: cells.RnnParams, basis: linalg.PcaBasis | None = None) -> ReadoutGeometry:
    """Magnitudes, pairwise angles, simplex prediction, and subspace percentage.

    Zero readout rows are flagged and excluded from the angle and subspace
    statistics.  With a ``basis``, readouts are also projected onto the top
    two principal axes for plotting.
    """
    w = params.readout_w
    if w is None or w.shape[0] < 2:
        raise ParameterError("readout_geometry needs at least 2 readout vectors")
    norms = np.linalg.norm(w, axis=1)
    zero = tuple(int(i) for i in np.nonzero(norms == 0.0)[0])
    angles = {}
    for i, j in itertools.combinations(range(w.shape[0]), 2):
        if i in zero or j in zero:
            continue
        cosine = float(w[i] @ w[j] / (norms[i] * norms[j]))
        angles[(i, j)] = math.degrees(math.acos(min(1.0, max(-1.0, cosine))))
    live = np.delete(w, zero, axis=0) if zero else w
    return ReadoutGeometry(
        magnitudes=norms,
        pairwise_angles=angles,
        theta_theory=simplex_angle_degrees(w.shape[0]),
        subspace_percentage=subspace_percentage(live),
        plane_projections=None if basis is None else (w - 0.0) @ basis.components[:2].T,
        zero_readouts=zero,
    )


# -- deflections --------------------------------------------------------------

@dataclass
class TokenDeflections:
    token: str
    count: int
    mean: np.ndarray                      # full-dimensional mean deflection
    mean_readout_projection: np.ndarray   # mean deflection onto each readout
    mean_plane_projection: np.ndarray | None
    sample_plane_projections: np.ndarray | None


@dataclass
class DeflectionStats:
    per_token: dict = field(default_factory=dict)

    def mean_norm(self, token):
        entry = self.per_token[token]
        return 0.0 if entry.count == 0 else float(np.linalg.norm(entry.mean))


def deflection_stats(
    params: cells.RnnParams,
    dataset,
    basis: linalg.PcaBasis | None = None,
    max_samples_per_token: int = 500,
    seed: int = 0,
) -> DeflectionStats:
    """Single-token state changes h_t - h_{t-1}, grouped by the token read.

    For every vocabulary token the full-dimensional mean deflection is
    accumulated over all occurrences across the dataset's trajectories,
    along with its projections onto the readouts and (optionally) the top-2
    PCA plane; a capped sample of per-occurrence plane projections is kept
    for scatter plots.  Tokens that never occur get a zero-count entry.
    """
    vocab = dataset.vocabulary
    n = params.arch.hidden_dim
    tokens = dataset.token_matrix()
    B, T = tokens.shape
    sums = np.zeros((vocab.size, n))
    counts = np.zeros(vocab.size, dtype=np.int64)
    samples = {i: [] for i in range(vocab.size)}
    rng = np.random.default_rng(seed)

    H = np.zeros((B, n))
    plane = None if basis is None else basis.components[:2]
    for t in range(T):
        X = np.zeros((B, vocab.size))
        valid = tokens[:, t] >= 0
        X[np.nonzero(valid)[0], tokens[:, t][valid]] = 1.0
        Hn, _ = cells.step_batch(params, H, X)
        delta = Hn - H
        for tok in range(vocab.size):
            rows = np.nonzero(valid & (tokens[:, t] == tok))[0]
            if rows.size == 0:
                continue
            sums[tok] += delta[rows].sum(axis=0)
            counts[tok] += rows.size
            if plane is not None:
                room = max_samples_per_token - sum(len(s) for s in samples[tok])
                if room > 0:
                    take = rows if rows.size <= room else rng.choice(rows, size=room, replace=False)
                    samples[tok].append(delta[take] @ plane.T)
        H = Hn

    stats = DeflectionStats()
    for tok in range(vocab.size):
        mean = sums[tok] / counts[tok] if counts[tok] else np.zeros(n)
        stats.per_token[vocab.tokens[tok]] = TokenDeflections(
            token=vocab.tokens[tok],
            count=int(counts[tok]),
            mean=mean,
            mean_readout_projection=params.readout_w @ mean if params.readout_w is not None else np.zeros(0),
            mean_plane_projection=None if plane is None else plane @ mean,
            sample_plane_projections=None if plane is None else (
                np.vstack(samples[tok]) if samples[tok] else np.zeros((0, 2))
            ),
        )
    return stats
