"""End-to-end pipelines: generate -> train -> fixed points -> linearize ->
geometry -> LSA -> export, plus regularization and class-count sweeps.

Every run is deterministic given the master seed: per-stage seeds are drawn
from one ``numpy.random.SeedSequence``, sweep cells get independent spawned
seeds, and cells are pure functions of their configs, so a sweep gives
identical results whether it runs sequentially or on a worker pool.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import cells, fixed_points, geometry, lsa, persistence, spectra, synth_data, training
from .errors import ParameterError, SlowpointsError, StageError
from .linalg import pca

GRAMMARS = ("categorical", "ordered_sentiment", "ordered_sentiment_intensity", "multilabel")


@dataclass(frozen=True)
class ExperimentConfig:
    grammar: str = "categorical"
    n_classes: int = 3
    length: int | None = None            # None -> 40 (30 for multilabel)
    sampling_mode: str | None = None     # None -> grammar default
    train_count: int = 3000
    test_count: int = 600
    arch_kind: str = "gru"
    hidden_dim: int = 128
    train: training.TrainConfig = field(default_factory=training.TrainConfig)
    fp: fixed_points.FixedPointConfig = field(default_factory=fixed_points.FixedPointConfig)
    fp_seed_count: int = 256
    plane_dim: int | None = None         # None -> 95%-variance dim of the fp cloud
    tau_threshold: float | None = None   # None -> mean training phrase length
    alignment_threshold: float = spectra.DEFAULT_ALIGNMENT_THRESHOLD
    speed_grid_resolution: int = 60
    speed_grid_offsets: tuple = (0.0,)
    speed_grid_margin: float = 1.2
    export_phrases: int = 40             # trajectories kept in the tables
    dims_subsample: int = 2000           # cap for neighbor-based estimators
    sweep_lambdas: tuple = ()
    sweep_classes: tuple = ()
    seeds_per_cell: int = 3
    master_seed: int = 0

    def __post_init__(self):
        if self.grammar not in GRAMMARS:
            raise ParameterError(f"unknown grammar {self.grammar!r}")
        if self.arch_kind not in cells.KINDS:
            raise ParameterError(f"unknown architecture {self.arch_kind!r}")

    @property
    def phrase_length(self):
        if self.length is not None:
            return self.length
        return 30 if self.grammar == "multilabel" else 40

    @property
    def mode(self):
        if self.sampling_mode is not None:
            return self.sampling_mode
        return "iid_words" if self.grammar == "multilabel" else "uniform_over_scores"

    @property
    def loss_kind(self):
        return "sigmoid_bce" if self.grammar == "multilabel" else "softmax_xent"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["speed_grid_offsets"] = list(self.speed_grid_offsets)
        doc["sweep_lambdas"] = list(self.sweep_lambdas)
        doc["sweep_classes"] = list(self.sweep_classes)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "train" in doc and isinstance(doc["train"], dict):
            doc["train"] = training.TrainConfig(**doc["train"])
        if "fp" in doc and isinstance(doc["fp"], dict):
            doc["fp"] = fixed_points.FixedPointConfig(**doc["fp"])
        for key in ("speed_grid_offsets", "sweep_lambdas", "sweep_classes"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        unknown = set(doc) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def _stage_seeds(master_seed):
    state = np.random.SeedSequence(master_seed).generate_state(6)
    return {
        "train_data": int(state[0]),
        "test_data": int(state[1]),
        "train": int(state[2]),
        "fp_seeds": int(state[3]),
        "fp_noise": int(state[4]),
        "analysis": int(state[5]),
    }


def make_datasets(config: ExperimentConfig):
    seeds = _stage_seeds(config.master_seed)
    train_ds = synth_data.generate(
        config.grammar, config.n_classes, config.phrase_length,
        config.train_count, config.mode, seeds["train_data"],
    )
    test_ds = synth_data.generate(
        config.grammar, config.n_classes, config.phrase_length,
        config.test_count, config.mode, seeds["test_data"],
    )
    return train_ds, test_ds


def collect_trajectory_states(params, dataset) -> np.ndarray:
    """All states visited while processing the dataset, stacked (B*T, n)."""
    tokens = dataset.token_matrix()
    B, T = tokens.shape
    H = np.zeros((B, params.arch.hidden_dim))
    states = np.empty((T, B, params.arch.hidden_dim))
    for t in range(T):
        X = np.zeros((B, params.arch.input_dim))
        valid = tokens[:, t] >= 0
        X[np.nonzero(valid)[0], tokens[:, t][valid]] = 1.0
        H, _ = cells.step_batch(params, H, X)
        states[t] = H
    return states.transpose(1, 0, 2).reshape(B * T, params.arch.hidden_dim)


def _run_stage(name, fn):
    try:
        return fn()
    except SlowpointsError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc


def run_pipeline(config: ExperimentConfig, out_dir=None) -> persistence.AnalysisBundle:
    """Execute every stage and (optionally) export the bundle and tables."""
    seeds = _stage_seeds(config.master_seed)
    train_ds, test_ds = _run_stage("gen-data", lambda: make_datasets(config))
    t_av = train_ds.mean_length

    arch = cells.Architecture(config.arch_kind, config.hidden_dim, train_ds.vocabulary.size)
    train_cfg = config.train.with_(seed=seeds["train"], loss_kind=config.loss_kind)
    report = _run_stage(
        "train", lambda: training.train(arch, train_ds, train_cfg, test_dataset=test_ds)
    )
    params = report.params

    ckpt = persistence.Checkpoint.from_params(
        params,
        train_config=asdict(train_cfg),
        rng_seed=config.master_seed,
        metrics={"test_accuracy": report.test_accuracy,
                 "shuffled_test_accuracy": report.shuffled_test_accuracy},
    )
    ckpt_hash = persistence.checkpoint_hash(ckpt)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        persistence.save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.json"))

    # Hidden-state cloud and its PCA.
    states = _run_stage("geometry", lambda: collect_trajectory_states(params, test_ds))
    hidden_basis = pca(states)
    analysis_rng = np.random.default_rng(seeds["analysis"])

    fp_cfg = config.fp
    if fp_cfg.tol is None:
        fp_cfg = replace(fp_cfg, tol=fixed_points.slowness_tolerance(arch.hidden_dim, t_av))

    def _fixed_point_stage():
        pick = analysis_rng.choice(len(states), min(config.fp_seed_count, len(states)), replace=False)
        return fixed_points.find_fixed_points(params, states[pick], fp_cfg, rng_seed=seeds["fp_noise"])

    fps = _run_stage("fixed-points", _fixed_point_stage)
    if out_dir:
        persistence.save_fixed_point_set(fps, os.path.join(out_dir, "fixed_points.json"))

    conv = fps.converged_points
    fp_states = fps.states(converged_only=True)
    fp_basis = pca(fp_states) if len(conv) >= 2 else None
    plane_dim = config.plane_dim
    if plane_dim is None and fp_basis is not None:
        plane_dim = geometry.variance_threshold_dim(fp_basis, 0.95)
    tau_threshold = config.tau_threshold if config.tau_threshold is not None else t_av

    def _spectra_stage():
        if fp_basis is None:
            return None, None
        reports = [
            spectra.linearize(params, p, basis=fp_basis, plane_dim=plane_dim,
                              tau_threshold=tau_threshold,
                              alignment_threshold=config.alignment_threshold)
            for p in conv
        ]
        counts = spectra.count_integration_modes(
            reports, tau_threshold, config.alignment_threshold
        )
        return reports, counts

    lin_reports, mode_counts = _run_stage("spectra", _spectra_stage)

    def _geometry_stage():
        sub = states
        if len(sub) > config.dims_subsample:
            pick = analysis_rng.choice(len(sub), config.dims_subsample, replace=False)
            sub = sub[pick]
        hidden_dims = geometry.dimensionality_report(sub, n_classes=train_ds.num_classes)
        fp_dims = None
        if fp_basis is not None and len(conv) >= 12:
            fp_dims = geometry.dimensionality_report(
                fp_states, n_classes=train_ds.num_classes,
                local_k=min(30, len(conv) - 1), mle_k=min(10, len(conv) - 1),
            )
        readout = geometry.readout_geometry(params, basis=hidden_basis)
        deflections = geometry.deflection_stats(params, test_ds, basis=hidden_basis)
        return hidden_dims, fp_dims, readout, deflections

    hidden_dims, fp_dims, readout, deflections = _run_stage("geometry", _geometry_stage)

    def _lsa_stage():
        counts = lsa.build_count_matrix(train_ds)
        return counts, lsa.lsa_analyze(counts)

    count_matrix, lsa_report = _run_stage("lsa", _lsa_stage)

    def _speed_stage():
        basis = fp_basis if fp_basis is not None else hidden_basis
        anchor = fp_states if fp_basis is not None else states
        proj = basis.project(anchor, 2)
        mg = config.speed_grid_margin
        span = proj.max(axis=0) - proj.min(axis=0)
        lo = proj.min(axis=0) - (mg - 1.0) * span
        hi = proj.max(axis=0) + (mg - 1.0) * span
        return fixed_points.speed_grid(
            params, basis, u_range=(lo[0], hi[0]), v_range=(lo[1], hi[1]),
            resolution=config.speed_grid_resolution, offsets=config.speed_grid_offsets,
        )

    grid = _run_stage("speed-grid", _speed_stage)

    # Containment of converged fixed points inside the 1/T_av speed contour,
    # evaluated at their in-plane projections.
    contour_fraction = None
    if fp_basis is not None and len(conv):
        emb = fp_basis.embed(fp_basis.project(fp_states, 2), 2)
        sp = fixed_points.speed_batch(params, emb)
        contour_fraction = float(np.mean(sp < 1.0 / tau_threshold))

    hv = hidden_basis.variances
    metrics = {
        "test_accuracy": report.test_accuracy,
        "shuffled_test_accuracy": report.shuffled_test_accuracy,
        "mean_phrase_length": t_av,
        "tau_threshold": tau_threshold,
        "plane_dim": plane_dim,
        "hidden_top2_fraction": float(hv[:2].sum() / hv.sum()),
        "n_fixed_points": len(fps.points),
        "n_converged": len(conv),
        "speed_contour_fraction": contour_fraction,
        "integration_modes_median": None if mode_counts is None else mode_counts.median,
    }
    if fp_basis is not None:
        fv = fp_basis.variances
        metrics["fp_top2_fraction"] = float(fv[:2].sum() / fv.sum())

    lin_summaries = None
    if lin_reports is not None:
        lin_summaries = [
            {
                "fp_id": i,
                "eigenvalues": [[float(m.eigenvalue.real), float(m.eigenvalue.imag)] for m in r.modes],
                "taus": [float(m.time_constant) for m in r.modes],
                "plane_fractions": [float(m.plane_fraction) for m in r.modes],
                "integration_mode_count": r.integration_mode_count,
            }
            for i, r in enumerate(lin_reports)
        ]

    traj = _trajectory_export(params, test_ds, hidden_basis, config.export_phrases)
    bundle = persistence.AnalysisBundle(
        provenance={
            "checkpoint_hash": ckpt_hash,
            "master_seed": config.master_seed,
            "config": config.to_dict(),
        },
        metrics=metrics,
        trajectories=traj,
        fixed_point_set=fps,
        fp_projections=(
            hidden_basis.project(fps.states(), 3) if len(fps.points) else None
        ),
        linearizations=lin_summaries,
        hidden_dims=hidden_dims,
        fp_dims=fp_dims,
        readout=readout,
        deflections=deflections,
        lsa_report=lsa_report,
        count_matrix=count_matrix,
        speed_grid=grid,
        hidden_variances=hidden_basis.variances,
        fp_variances=None if fp_basis is None else fp_basis.variances,
    )
    if out_dir:
        _run_stage("export", lambda: persistence.export_report(bundle, out_dir))
    return bundle


def _trajectory_export(params, dataset, basis, max_phrases):
    take = min(max_phrases, len(dataset))
    if take == 0:
        return None
    rows_id, rows_t, rows_tok, rows_lbl = [], [], [], []
    coords = []
    for pid in range(take):
        p = dataset.phrases[pid]
        traj = cells.run(
            params, np.zeros(params.arch.hidden_dim),
            cells.encode_onehot(p.token_indices, dataset.vocabulary.size),
        )
        proj = basis.project(traj[1:], 3)
        label = "+".join(str(v) for v in p.label) if dataset.multilabel else p.label
        for t in range(proj.shape[0]):
            rows_id.append(pid)
            rows_t.append(t + 1)
            rows_tok.append(dataset.vocabulary.tokens[p.token_indices[t]])
            rows_lbl.append(label)
        coords.append(proj)
    return {
        "phrase_id": rows_id,
        "t": rows_t,
        "token": rows_tok,
        "label": rows_lbl,
        "coords": np.vstack(coords),
    }


# -- sweeps -------------------------------------------------------------------

def _cell_metrics(config: ExperimentConfig):
    """Train + fixed points + dimensionality for one sweep cell."""
    seeds = _stage_seeds(config.master_seed)
    train_ds, test_ds = make_datasets(config)
    arch = cells.Architecture(config.arch_kind, config.hidden_dim, train_ds.vocabulary.size)
    train_cfg = config.train.with_(seed=seeds["train"], loss_kind=config.loss_kind)
    report = training.train(arch, train_ds, train_cfg, test_dataset=test_ds)
    params = report.params

    states = collect_trajectory_states(params, test_ds)
    hidden_pr = geometry.points_participation_ratio(states)
    hidden_basis = pca(states)
    hidden_dim95 = geometry.variance_threshold_dim(hidden_basis, 0.95)

    fp_cfg = config.fp
    if fp_cfg.tol is None:
        fp_cfg = replace(fp_cfg, tol=fixed_points.slowness_tolerance(arch.hidden_dim, train_ds.mean_length))
    rng = np.random.default_rng(seeds["analysis"])
    pick = rng.choice(len(states), min(config.fp_seed_count, len(states)), replace=False)
    fps = fixed_points.find_fixed_points(params, states[pick], fp_cfg, rng_seed=seeds["fp_noise"])
    conv = fps.states(converged_only=True)
    fp_pr = fp_dim95 = None
    if conv.shape[0] >= 3:
        fp_basis = pca(conv)
        fp_pr = geometry.participation_ratio(fp_basis.variances)
        fp_dim95 = geometry.variance_threshold_dim(fp_basis, 0.95)
    return {
        "accuracy": report.test_accuracy,
        "shuffled_accuracy": report.shuffled_test_accuracy,
        "hidden_pr": hidden_pr,
        "hidden_dim95": hidden_dim95,
        "fp_pr": fp_pr,
        "fp_dim95": fp_dim95,
        "n_converged": int(conv.shape[0]),
    }


def _sweep_cell(args):
    kind, value, seed_index, config = args
    if kind == "classes":
        cell_cfg = replace(config, n_classes=int(value),
                           master_seed=config.master_seed + 101 * seed_index)
    else:
        cell_cfg = replace(
            config,
            train=config.train.with_(l2_penalty=float(value)),
            master_seed=config.master_seed + 101 * seed_index,
        )
    try:
        metrics = _cell_metrics(cell_cfg)
        return {"kind": kind, "value": value, "seed_index": seed_index,
                "error": None, **metrics}
    except Exception as exc:  # record the failure, keep the sweep running
        return {"kind": kind, "value": value, "seed_index": seed_index,
                "error": f"{type(exc).__name__}: {exc}"}


def _run_cells(jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(job) for job in jobs]


def run_class_sweep(config: ExperimentConfig, out_dir=None, workers=1):
    """Per-class-count metrics averaged over ``seeds_per_cell`` seeds."""
    values = config.sweep_classes or (2, 3, 4, 5)
    if any(int(v) < 2 for v in values):
        raise ParameterError("class sweep needs N >= 2")
    jobs = [("classes", int(v), s, config) for v in values for s in range(config.seeds_per_cell)]
    rows = _run_cells(jobs, workers)
    if out_dir:
        _write_sweep_table(rows, os.path.join(out_dir, "class_sweep.csv"), "n_classes")
    return rows


def run_l2_sweep(config: ExperimentConfig, out_dir=None, workers=1):
    """Per-lambda metrics; cells that fail are recorded and skipped."""
    values = config.sweep_lambdas if len(config.sweep_lambdas) else (0.0, 1e-3, 1e-2)
    if any(float(v) < 0 for v in values):
        raise ParameterError("l2 sweep needs lambda >= 0")
    jobs = [("l2", float(v), s, config) for v in values for s in range(config.seeds_per_cell)]
    rows = _run_cells(jobs, workers)
    if out_dir:
        _write_sweep_table(rows, os.path.join(out_dir, "l2_sweep.csv"), "l2_penalty")
    return rows


def _write_sweep_table(rows, path, value_name):
    import csv

    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    cols = [value_name, "seed_index", "accuracy", "shuffled_accuracy",
            "hidden_pr", "hidden_dim95", "fp_pr", "fp_dim95", "n_converged", "error"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# slowpoints.table.sweep.v{persistence.FORMAT_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([
                row["value"], row["seed_index"],
                *(persistence._fmt(row.get(k)) if row.get(k) is not None else ""
                  for k in ("accuracy", "shuffled_accuracy", "hidden_pr",
                            "hidden_dim95", "fp_pr", "fp_dim95", "n_converged")),
                row.get("error") or "",
            ])


# -- bundle self-checks (CLI --check) ------------------------------------------

def validate_bundle(bundle: persistence.AnalysisBundle) -> list:
    """Cross-check module invariants on a finished bundle; returns violations."""
    problems = []
    fps = bundle.fixed_point_set
    if fps is not None:
        for i, p in enumerate(fps.points):
            n = p.h_star.shape[0]
            if p.speed > 0 and abs(p.speed**2 - n * p.q_loss) > 1e-10 * p.speed**2:
                problems.append(f"fixed point {i}: speed^2 != n*q")
        again = fixed_points.dedup(fps.points, fps.dedup_radius)
        if len(again) != len(fps.points):
            problems.append("fixed-point dedup is not idempotent")
    if bundle.lsa_report is not None:
        s = float(bundle.lsa_report.variance_fractions.sum())
        if abs(s - 1.0) > 1e-9:
            problems.append(f"lsa variance fractions sum to {s}")
    if bundle.hidden_variances is not None:
        hv = bundle.hidden_variances
        if np.any(np.diff(hv) > 1e-12):
            problems.append("hidden variances not sorted descending")
    for summary in bundle.linearizations or []:
        taus = summary["taus"]
        if any(t < 0 for t in taus):
            problems.append(f"fp {summary['fp_id']}: negative time constant")
        fr = summary["plane_fractions"]
        if fr is not None and any(not (-1e-9 <= f <= 1.0 + 1e-9) for f in fr):
            problems.append(f"fp {summary['fp_id']}: plane fraction outside [0, 1]")
    return problems
