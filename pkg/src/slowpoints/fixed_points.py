"""Locate approximate fixed points of the zero-input dynamics.

A candidate state h is optimized with Adam on the slowness objective
0.5 * ||h - F(h, 0)||^2; the per-dimension loss q = ||h - F(h, 0)||^2 / n
decides convergence and the speed S(h) = ||h - F(h, 0)|| characterizes how
slow a point is.  Candidates are the caller's seed states plus
Gaussian-perturbed replicas, optimized jointly as one batch; each candidate
reports its best-so-far iterate, so accepted objective values never
increase.  The resulting set is deduplicated by distance unless two nearby
points disagree on their predicted label.
"""

from dataclasses import dataclass, field

import numpy as np

from . import cells
from .hashing import array_fingerprint

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


def slowness_tolerance(hidden_dim: int, horizon: float, slack: float = 2.0) -> float:
    """Tolerance on q for points that are fixed on a given timescale.

    A point is slow enough to act as fixed over ``horizon`` tokens when one
    update moves it less than 1/(slack*horizon); in q units that is
    (1/(slack*horizon))^2 / n.
    """
    return (1.0 / (slack * horizon)) ** 2 / hidden_dim


@dataclass(frozen=True)
class FixedPointConfig:
    #: Convergence threshold on q; None means the caller derives it from the
    #: task horizon via ``slowness_tolerance`` (the pipeline uses the mean
    #: training phrase length).
    tol: float | None = None
    max_iters: int = 10000
    learning_rate: float = 0.01   # Adam step size on the candidate states
    noise_scale: float = 0.5
    noise_copies: int = 4
    dedup_radius: float = 0.05


@dataclass
class FixedPoint:
    h_star: np.ndarray
    q_loss: float
    speed: float
    predicted_label: int
    converged: bool

    def validate(self):
        n = self.h_star.shape[0]
        if self.q_loss > 0 and abs(self.speed**2 - n * self.q_loss) > 1e-10 * self.speed**2:
            raise AssertionError("speed^2 != n * q_loss")
        return self


@dataclass
class FixedPointSet:
    points: list
    dedup_radius: float
    params_hash: str
    n_candidates: int = 0
    n_converged: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def converged_points(self):
        return [p for p in self.points if p.converged]

    def states(self, converged_only=False) -> np.ndarray:
        pts = self.converged_points if converged_only else self.points
        if not pts:
            return np.zeros((0, 0))
        return np.vstack([p.h_star for p in pts])


def speed(params: cells.RnnParams, h: np.ndarray) -> float:
    """Distance traveled in one zero-input step from h."""
    h = np.asarray(h, dtype=float)
    x0 = np.zeros(params.arch.input_dim)
    return float(np.linalg.norm(h - cells.step(params, h, x0)))


def speed_batch(params: cells.RnnParams, H: np.ndarray) -> np.ndarray:
    X0 = np.zeros((H.shape[0], params.arch.input_dim))
    Hn, _ = cells.step_batch(params, H, X0)
    return np.linalg.norm(H - Hn, axis=1)


def _objective_and_grad(params, H):
    """0.5||h - F(h,0)||^2 per row, and its exact gradient (I - J)^T r."""
    X0 = np.zeros((H.shape[0], params.arch.input_dim))
    Hn, cache = cells.step_batch(params, H, X0)
    resid = H - Hn
    obj = 0.5 * np.sum(resid * resid, axis=1)
    grad = resid - cells.backward_batch(params, cache, resid)
    return obj, grad


def find_fixed_points(
    params: cells.RnnParams,
    seeds: np.ndarray,
    config: FixedPointConfig = FixedPointConfig(),
    rng_seed: int = 0,
) -> FixedPointSet:
    """Optimize every seed (plus noisy replicas) toward a fixed point.

    Returns the deduplicated set ordered by increasing q.  Candidates that
    never reach ``config.tol`` are retained with ``converged=False`` so the
    slow-zone structure stays visible; an all-diverged run yields an empty
    or unconverged set with diagnostics, never an exception.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] == 0:
        raise ValueError("find_fixed_points needs at least one seed")
    if config.tol is None:
        raise ValueError(
            "FixedPointConfig.tol is unset; derive one with slowness_tolerance "
            "(the pipeline uses the mean training phrase length as horizon)"
        )
    n = params.arch.hidden_dim
    rng = np.random.default_rng(rng_seed)

    cands = [seeds]
    for _ in range(config.noise_copies):
        cands.append(seeds + rng.normal(0.0, config.noise_scale, size=seeds.shape))
    H = np.vstack(cands)
    n_cand = H.shape[0]

    best_h = H.copy()
    best_obj, _ = _objective_and_grad(params, H)
    tol_obj = 0.5 * config.tol * n  # q <= tol  <=>  objective <= tol*n/2

    # Candidates freeze the moment they reach tolerance.  Without this,
    # further descent slides every candidate off the slow manifold and into
    # its handful of deepest sinks, collapsing the sampled structure.
    active = np.arange(n_cand)[best_obj > tol_obj]
    H = H[active]
    m = np.zeros_like(H)
    v = np.zeros_like(H)
    t = 0
    iters_used = 0
    while active.size and t < config.max_iters:
        t += 1
        obj, grad = _objective_and_grad(params, H)
        improved = obj < best_obj[active]
        if improved.any():
            rows = active[improved]
            best_obj[rows] = obj[improved]
            best_h[rows] = H[improved]
        keep = best_obj[active] > tol_obj
        if not keep.all():
            active = active[keep]
            H, m, v, grad = H[keep], m[keep], v[keep], grad[keep]
            if not active.size:
                iters_used = t
                break
        m = ADAM_B1 * m + (1.0 - ADAM_B1) * grad
        v = ADAM_B2 * v + (1.0 - ADAM_B2) * grad * grad
        c1 = 1.0 - ADAM_B1**t
        c2 = 1.0 - ADAM_B2**t
        H = H - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        iters_used = t
    # Final sweep so the last Adam step still counts.
    if active.size:
        obj, _ = _objective_and_grad(params, H)
        improved = obj < best_obj[active]
        rows = active[improved]
        best_obj[rows] = obj[improved]
        best_h[rows] = H[improved]

    speeds = np.sqrt(2.0 * best_obj)
    q = speeds**2 / n
    if params.readout_w is not None:
        labels = cells.logits_batch(params, best_h).argmax(axis=1)
    else:
        labels = np.zeros(n_cand, dtype=int)
    converged = q <= config.tol

    order = np.lexsort((np.arange(n_cand), q))
    points = [
        FixedPoint(
            h_star=best_h[i].copy(),
            q_loss=float(q[i]),
            speed=float(speeds[i]),
            predicted_label=int(labels[i]),
            converged=bool(converged[i]),
        )
        for i in order
    ]
    points = dedup(points, config.dedup_radius)
    fingerprint = array_fingerprint(params.all_arrays())
    return FixedPointSet(
        points=points,
        dedup_radius=config.dedup_radius,
        params_hash=fingerprint,
        n_candidates=n_cand,
        n_converged=int(converged.sum()),
        diagnostics={"iterations": iters_used, "unconverged": int((~converged).sum())},
    )


def dedup(points, radius):
    """Greedy dedup: keep a point unless a kept neighbor within ``radius``
    shares its predicted label.  Idempotent for a fixed input order."""
    kept = []
    kept_states = []
    kept_labels = []
    for p in points:
        if kept:
            d = np.linalg.norm(np.asarray(kept_states) - p.h_star, axis=1)
            close = d < radius
            if close.any() and any(
                lbl == p.predicted_label for lbl, c in zip(kept_labels, close) if c
            ):
                continue
        kept.append(p)
        kept_states.append(p.h_star)
        kept_labels.append(p.predicted_label)
    return kept


@dataclass
class SpeedGrid:
    """Log-speed samples over a plane of the PCA basis.

    ``log10_speed[k, j, i]`` is log10 S at offset k, second-axis coordinate
    v_j, first-axis coordinate u_i (axes indexed into ``basis.components``
    by ``plane_dims`` and ``offset_dim``).
    """

    u: np.ndarray
    v: np.ndarray
    offsets: np.ndarray
    log10_speed: np.ndarray
    plane_dims: tuple
    offset_dim: int


def speed_grid(
    params: cells.RnnParams,
    basis,
    plane_dims=(0, 1),
    u_range=(-1.0, 1.0),
    v_range=(-1.0, 1.0),
    resolution=50,
    offsets=(0.0,),
    offset_dim=2,
) -> SpeedGrid:
    """Evaluate the one-step speed on PCA-plane slices of state space.

    Grid points are embedded as mean + u*comp_i + v*comp_j + w*comp_k; the
    caller contours the result, typically at 1/T_av and 1/(10 T_av).
    """
    i, j = plane_dims
    u = np.linspace(u_range[0], u_range[1], resolution)
    v = np.linspace(v_range[0], v_range[1], resolution)
    uu, vv = np.meshgrid(u, v)
    ci, cj = basis.components[i], basis.components[j]
    ck = basis.components[offset_dim] if offset_dim < basis.components.shape[0] else 0.0 * ci
    out = np.empty((len(offsets), resolution, resolution))
    for k, w in enumerate(offsets):
        pts = basis.mean + uu.reshape(-1, 1) * ci + vv.reshape(-1, 1) * cj + w * ck
        s = speed_batch(params, pts)
        out[k] = np.log10(np.maximum(s, 1e-300)).reshape(resolution, resolution)
    return SpeedGrid(u, v, np.asarray(offsets, dtype=float), out, tuple(plane_dims), offset_dim)
