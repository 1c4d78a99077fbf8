"""Linearized dynamics at fixed points: eigenmodes, time constants, and
integration-mode identification.

Each eigenvalue lambda of the recurrent Jacobian carries a time constant
tau = 1/|log|lambda|| (in tokens).  A mode counts as an *integration mode*
when it is slow enough to survive a typical phrase (tau >= tau_threshold)
and its right eigenvector lies mostly inside the fixed-point manifold's
top-k PCA subspace (plane fraction >= alignment_threshold); these are the
modes that carry accumulated evidence.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import cells
from .linalg import ComplexSpectrum, PcaBasis, eig_nonsymmetric

DEFAULT_ALIGNMENT_THRESHOLD = 0.7


def timescale(eigenvalue) -> float:
    """tau = 1/|log|lambda||; +inf on the unit circle, 0 at the origin."""
    mag = abs(eigenvalue)
    if mag == 0.0:
        return 0.0
    lg = math.log(mag)
    if lg == 0.0:
        return math.inf
    return 1.0 / abs(lg)


def mode_timescales(spectrum: ComplexSpectrum) -> np.ndarray:
    """Time constants of all modes, sorted descending."""
    taus = np.array([timescale(ev) for ev in spectrum.eigenvalues])
    return np.sort(taus)[::-1]


def plane_alignment(vector: np.ndarray, basis: PcaBasis, k: int) -> float:
    """Fraction of a (possibly complex) vector lying in the top-k subspace.

    Real and imaginary parts are stacked into one real vector before
    projecting, which makes the fraction invariant to rescaling the
    eigenvector by any nonzero complex scalar.
    """
    vec = np.asarray(vector)
    comps = basis.components[:k]
    parts = [np.real(vec)] + ([np.imag(vec)] if np.iscomplexobj(vec) else [])
    total = sum(float(p @ p) for p in parts)
    if total == 0.0:
        raise ValueError("plane_alignment of a zero vector is undefined")
    proj = sum(float(np.sum((comps @ p) ** 2)) for p in parts)
    return math.sqrt(proj / total)


@dataclass
class SpectrumMode:
    eigenvalue: complex
    time_constant: float
    right_vector: np.ndarray
    left_vector: np.ndarray
    plane_fraction: float | None = None

    @property
    def magnitude(self):
        return abs(self.eigenvalue)

    @property
    def unstable(self):
        return self.magnitude > 1.0


@dataclass
class LinearizationReport:
    """Spectrum of the recurrent Jacobian at one fixed point."""

    h_star: np.ndarray
    q_loss: float
    predicted_label: int
    spectrum: ComplexSpectrum
    j_inp: np.ndarray
    modes: list
    plane_dim: int | None = None
    integration_mode_count: int | None = None
    eig_flagged: bool = False

    def input_loadings(self, x: np.ndarray) -> np.ndarray:
        """Per-mode input drive l_a^T J_inp x (diagnostic accessor)."""
        return self.spectrum.left_vectors @ (self.j_inp @ np.asarray(x, dtype=float))

    def count_modes(self, tau_threshold, alignment_threshold=DEFAULT_ALIGNMENT_THRESHOLD) -> int:
        if any(m.plane_fraction is None for m in self.modes):
            raise ValueError("plane fractions missing; linearize with a basis")
        return sum(
            1
            for m in self.modes
            if m.time_constant >= tau_threshold and m.plane_fraction >= alignment_threshold
        )


def linearize(
    params: cells.RnnParams,
    fixed_point,
    basis: PcaBasis | None = None,
    plane_dim: int | None = None,
    tau_threshold: float | None = None,
    alignment_threshold: float = DEFAULT_ALIGNMENT_THRESHOLD,
    allow_unconverged: bool = False,
) -> LinearizationReport:
    """Eigendecompose the recurrent Jacobian at a fixed point.

    ``basis``/``plane_dim`` give the fixed-point manifold subspace used for
    plane fractions; with ``tau_threshold`` also set, the report carries its
    integration-mode count.  Non-converged points are refused unless
    ``allow_unconverged`` (the linear picture is only trustworthy where the
    dynamics are actually slow).
    """
    if not fixed_point.converged and not allow_unconverged:
        raise ValueError("refusing to linearize an unconverged point (pass allow_unconverged=True)")
    x0 = np.zeros(params.arch.input_dim)
    j_rec, j_inp = cells.jacobians(params, fixed_point.h_star, x0)
    spectrum = eig_nonsymmetric(j_rec)
    modes = []
    for a, ev in enumerate(spectrum.eigenvalues):
        right = spectrum.right_vectors[:, a]
        frac = None
        if basis is not None and plane_dim is not None:
            frac = plane_alignment(right, basis, plane_dim)
        modes.append(
            SpectrumMode(
                eigenvalue=complex(ev),
                time_constant=timescale(ev),
                right_vector=right,
                left_vector=spectrum.left_vectors[a],
                plane_fraction=frac,
            )
        )
    count = None
    if tau_threshold is not None and basis is not None and plane_dim is not None:
        count = sum(
            1
            for m in modes
            if m.time_constant >= tau_threshold and m.plane_fraction >= alignment_threshold
        )
    return LinearizationReport(
        h_star=fixed_point.h_star,
        q_loss=fixed_point.q_loss,
        predicted_label=fixed_point.predicted_label,
        spectrum=spectrum,
        j_inp=j_inp,
        modes=modes,
        plane_dim=plane_dim,
        integration_mode_count=count,
        eig_flagged=spectrum.near_defective,
    )


@dataclass
class IntegrationModeCounts:
    per_point: np.ndarray
    median: float
    tau_threshold: float
    alignment_threshold: float


def count_integration_modes(
    reports,
    tau_threshold: float,
    alignment_threshold: float = DEFAULT_ALIGNMENT_THRESHOLD,
) -> IntegrationModeCounts:
    """Integration-mode count per fixed point, aggregated by the median."""
    reports = list(reports)
    if not reports:
        raise ValueError("count_integration_modes needs at least one report")
    counts = np.array([r.count_modes(tau_threshold, alignment_threshold) for r in reports])
    return IntegrationModeCounts(
        per_point=counts,
        median=float(np.median(counts)),
        tau_threshold=tau_threshold,
        alignment_threshold=alignment_threshold,
    )
