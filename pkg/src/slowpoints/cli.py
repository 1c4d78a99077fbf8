"""Command-line entry points.

Subcommands mirror the pipeline stages (gen-data, train, fixed-points,
spectra, geometry, lsa, speed-grid), the end-to-end drivers (pipeline,
sweep-classes, sweep-l2), and count-matrix ingestion (ingest-counts).

Exit codes: 0 success, 2 configuration error, 3 stage failure, and 4 when
``--check`` is passed and a bundle self-check fails.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import experiment, fixed_points, geometry, lsa, persistence, spectra, synth_data, training
from .errors import ParameterError, ParseError, SlowpointsError, StageError
from .linalg import pca

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_CHECK = 4


def _load_config(args) -> experiment.ExperimentConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        doc["master_seed"] = args.seed
    if getattr(args, "arch", None):
        doc["arch_kind"] = args.arch
    return experiment.ExperimentConfig.from_dict(doc)


def _cmd_gen_data(args):
    ds = synth_data.generate(args.grammar, args.classes, args.length, args.count, args.mode, args.seed or 0)
    ds.save_jsonl(args.out)
    print(f"wrote {len(ds)} phrases to {args.out}")
    return EXIT_OK


def _cmd_train(args):
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    seeds = experiment._stage_seeds(config.master_seed)
    train_ds, test_ds = experiment.make_datasets(config)
    train_ds.save_jsonl(os.path.join(args.out, "train_data.jsonl"))
    test_ds.save_jsonl(os.path.join(args.out, "test_data.jsonl"))
    from .cells import Architecture

    arch = Architecture(config.arch_kind, config.hidden_dim, train_ds.vocabulary.size)
    cfg = config.train.with_(seed=seeds["train"], loss_kind=config.loss_kind)
    report = training.train(arch, train_ds, cfg, test_dataset=test_ds)
    from dataclasses import asdict

    ckpt = persistence.Checkpoint.from_params(
        report.params,
        train_config=asdict(cfg),
        rng_seed=config.master_seed,
        metrics={"test_accuracy": report.test_accuracy,
                 "shuffled_test_accuracy": report.shuffled_test_accuracy},
    )
    path = os.path.join(args.out, "checkpoint.json")
    persistence.save_checkpoint(ckpt, path)
    print(f"test accuracy {report.test_accuracy:.4f} "
          f"(shuffled {report.shuffled_test_accuracy:.4f}); checkpoint at {path}")
    return EXIT_OK


def _states_from(args, params):
    dataset = synth_data.load_jsonl(args.dataset)
    return dataset, experiment.collect_trajectory_states(params, dataset)


def _cmd_fixed_points(args):
    params = persistence.load_params(args.checkpoint)
    dataset, states = _states_from(args, params)
    rng = np.random.default_rng(args.seed or 0)
    pick = rng.choice(len(states), min(args.seeds_count, len(states)), replace=False)
    tol = args.tol
    if tol is None:
        tol = fixed_points.slowness_tolerance(params.arch.hidden_dim, dataset.mean_length)
    cfg = fixed_points.FixedPointConfig(tol=tol)
    fps = fixed_points.find_fixed_points(params, states[pick], cfg, rng_seed=args.seed or 0)
    persistence.save_fixed_point_set(fps, args.out)
    print(f"{len(fps)} retained points ({fps.n_converged}/{fps.n_candidates} converged) -> {args.out}")
    return EXIT_OK


def _cmd_spectra(args):
    params = persistence.load_params(args.checkpoint)
    fps = persistence.load_fixed_point_set(args.fixed_points)
    conv = fps.converged_points
    if len(conv) < 2:
        raise StageError("spectra", "fewer than 2 converged fixed points")
    basis = pca(fps.states(converged_only=True))
    plane_dim = args.plane_dim or geometry.variance_threshold_dim(basis, 0.95)
    reports = [
        spectra.linearize(params, p, basis=basis, plane_dim=plane_dim, tau_threshold=args.tau)
        for p in conv
    ]
    counts = spectra.count_integration_modes(reports, args.tau)
    summary = {
        "tau_threshold": args.tau,
        "plane_dim": plane_dim,
        "per_point_counts": counts.per_point.tolist(),
        "median": counts.median,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(f"integration modes median {counts.median} -> {args.out}")
    return EXIT_OK


def _cmd_geometry(args):
    params = persistence.load_params(args.checkpoint)
    dataset, states = _states_from(args, params)
    rng = np.random.default_rng(args.seed or 0)
    sub = states
    if len(sub) > 2000:
        sub = sub[rng.choice(len(sub), 2000, replace=False)]
    dims = geometry.dimensionality_report(sub, n_classes=dataset.num_classes)
    ro = geometry.readout_geometry(params)
    out = {
        "global_pr": dims.global_pr,
        "local_pr": dims.local_pr,
        "mle_dim": dims.mle_dim,
        "corr_dim": dims.corr_dim,
        "variance_dims": {f"{k:g}": v for k, v in dims.variance_dims.items()},
        "readout_magnitudes": [float(v) for v in ro.magnitudes],
        "readout_angles_deg": {f"{i}-{j}": a for (i, j), a in ro.pairwise_angles.items()},
        "theta_theory_deg": ro.theta_theory,
        "subspace_percentage": ro.subspace_percentage,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
    print(f"geometry report -> {args.out}")
    return EXIT_OK


def _cmd_lsa(args):
    if args.counts:
        matrix = lsa.ingest_count_csv(args.counts)
    else:
        matrix = lsa.build_count_matrix(synth_data.load_jsonl(args.dataset))
    report = lsa.lsa_analyze(matrix, center=not args.no_center)
    out = {
        "singular_values": [float(v) for v in report.singular_values],
        "variance_fractions": [float(v) for v in report.variance_fractions],
        "top2_fraction": report.top_k_fraction(2),
        "class_names": list(matrix.class_names),
        "class_projections": report.class_projections.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
    print(f"top-2 variance fraction {report.top_k_fraction(2):.4f} -> {args.out}")
    return EXIT_OK


def _cmd_ingest_counts(args):
    matrix = lsa.ingest_count_csv(args.counts)
    lsa.export_count_csv(matrix, args.out)
    print(f"{len(matrix.class_names)} classes x {len(matrix.token_names)} tokens -> {args.out}")
    return EXIT_OK


def _cmd_speed_grid(args):
    params = persistence.load_params(args.checkpoint)
    fps = persistence.load_fixed_point_set(args.fixed_points)
    anchor = fps.states(converged_only=True)
    if anchor.shape[0] < 2:
        raise StageError("speed-grid", "fewer than 2 converged fixed points")
    basis = pca(anchor)
    proj = basis.project(anchor, 2)
    span = proj.max(axis=0) - proj.min(axis=0)
    lo = proj.min(axis=0) - 0.2 * span
    hi = proj.max(axis=0) + 0.2 * span
    grid = fixed_points.speed_grid(
        params, basis, u_range=(lo[0], hi[0]), v_range=(lo[1], hi[1]),
        resolution=args.resolution,
    )
    rows = []
    for k, off in enumerate(grid.offsets):
        for j, vv in enumerate(grid.v):
            for i, uu in enumerate(grid.u):
                rows.append((float(off), float(vv), float(uu), grid.log10_speed[k, j, i]))
    os.makedirs(args.out, exist_ok=True)
    path = persistence.write_table(args.out, "speed_grid", rows)
    print(f"speed grid ({args.resolution}x{args.resolution}) -> {path}")
    return EXIT_OK


def _cmd_pipeline(args):
    config = _load_config(args)
    bundle = experiment.run_pipeline(config, out_dir=args.out)
    for key in ("test_accuracy", "hidden_top2_fraction", "fp_top2_fraction",
                "n_converged", "integration_modes_median"):
        if key in bundle.metrics and bundle.metrics[key] is not None:
            print(f"{key}: {bundle.metrics[key]}")
    if args.check:
        problems = experiment.validate_bundle(bundle)
        if problems:
            for p in problems:
                print(f"CHECK FAILED: {p}", file=sys.stderr)
            return EXIT_CHECK
        print("all bundle self-checks passed")
    return EXIT_OK


def _cmd_sweep(kind):
    def run(args):
        config = _load_config(args)
        fn = experiment.run_class_sweep if kind == "classes" else experiment.run_l2_sweep
        rows = fn(config, out_dir=args.out, workers=args.workers)
        failures = [r for r in rows if r.get("error")]
        for row in rows:
            tag = row["value"]
            if row.get("error"):
                print(f"{kind}={tag} seed={row['seed_index']}: FAILED {row['error']}")
            else:
                print(f"{kind}={tag} seed={row['seed_index']}: acc={row['accuracy']:.4f} "
                      f"hidden_pr={row['hidden_pr']:.3f} fp_dim95={row['fp_dim95']}")
        if args.check and failures:
            return EXIT_CHECK
        return EXIT_OK

    return run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowpoints", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (JSONL)")
    p.add_argument("--grammar", required=True, choices=experiment.GRAMMARS)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--length", type=int, default=40)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--mode", default="uniform_over_scores", choices=synth_data.MODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="generate data and train one network")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--arch", choices=("ugrnn", "gru", "lstm"))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("fixed-points", help="find fixed points of a trained network")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seeds-count", type=int, default=256)
    p.add_argument("--tol", type=float, default=None,
                   help="q tolerance; default derives from the dataset's mean phrase length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fixed_points)

    p = sub.add_parser("spectra", help="linearize at fixed points and count integration modes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fixed-points", required=True)
    p.add_argument("--tau", type=float, required=True, help="integration-mode timescale threshold")
    p.add_argument("--plane-dim", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_spectra)

    p = sub.add_parser("geometry", help="dimensionality and readout geometry reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_geometry)

    p = sub.add_parser("lsa", help="latent semantic analysis of class/token counts")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset")
    group.add_argument("--counts", help="count-matrix CSV (classes x tokens)")
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_lsa)

    p = sub.add_parser("ingest-counts", help="validate and round-trip a count-matrix CSV")
    p.add_argument("--counts", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest_counts)

    p = sub.add_parser("speed-grid", help="log-speed grid over the fixed-point plane")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fixed-points", required=True)
    p.add_argument("--resolution", type=int, default=60)
    p.add_argument("--out", required=True, help="output directory for speed_grid.csv")
    p.set_defaults(fn=_cmd_speed_grid)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--arch", choices=("ugrnn", "gru", "lstm"))
    p.add_argument("--out", required=True)
    p.add_argument("--check", action="store_true", help="validate bundle invariants; exit 4 on failure")
    p.set_defaults(fn=_cmd_pipeline)

    for name, kind in (("sweep-classes", "classes"), ("sweep-l2", "l2")):
        p = sub.add_parser(name, help=f"{kind} sweep over independent training cells")
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--arch", choices=("ugrnn", "gru", "lstm"))
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--check", action="store_true")
        p.set_defaults(fn=_cmd_sweep(kind))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except SlowpointsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
