import json
import subprocess
import sys

import pytest

from slowpoints import experiment, fixed_points, persistence, training
from slowpoints.errors import ParameterError

TINY = dict(
    grammar="categorical",
    n_classes=3,
    length=12,
    train_count=300,
    test_count=60,
    hidden_dim=16,
    train=training.TrainConfig(steps=80, batch_size=32, initial_lr=0.05),
    fp=fixed_points.FixedPointConfig(tol=1e-7, max_iters=400, noise_copies=1),
    fp_seed_count=48,
    speed_grid_resolution=12,
    export_phrases=5,
    dims_subsample=300,
    master_seed=5,
)


def tiny_config(**overrides):
    return experiment.ExperimentConfig(**{**TINY, **overrides})


@pytest.fixture(scope="module")
def tiny_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_run")
    bundle = experiment.run_pipeline(tiny_config(), out_dir=str(out))
    return bundle, out


class TestConfig:
    def test_round_trip(self):
        cfg = tiny_config()
        assert experiment.ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError):
            experiment.ExperimentConfig.from_dict({"not_a_field": 1})

    def test_grammar_defaults(self):
        cfg = experiment.ExperimentConfig(grammar="multilabel", n_classes=2)
        assert cfg.phrase_length == 30
        assert cfg.mode == "iid_words"
        assert cfg.loss_kind == "sigmoid_bce"
        cat = experiment.ExperimentConfig()
        assert cat.phrase_length == 40 and cat.mode == "uniform_over_scores"

    def test_bad_grammar(self):
        with pytest.raises(ParameterError):
            experiment.ExperimentConfig(grammar="prose")


class TestPipeline:
    def test_bundle_contents(self, tiny_bundle):
        bundle, out = tiny_bundle
        m = bundle.metrics
        assert 0.0 <= m["test_accuracy"] <= 1.0
        assert m["mean_phrase_length"] == 12.0
        assert m["tau_threshold"] == 12.0
        assert bundle.fixed_point_set is not None
        assert bundle.lsa_report is not None
        assert bundle.hidden_dims is not None
        assert (out / "checkpoint.json").exists()
        assert (out / "fixed_points.json").exists()
        assert (out / "report.json").exists()
        assert (out / "tables" / "trajectories.csv").exists()

    def test_provenance_hash_matches_checkpoint(self, tiny_bundle):
        bundle, out = tiny_bundle
        ckpt = persistence.load_checkpoint(out / "checkpoint.json")
        assert bundle.provenance["checkpoint_hash"] == persistence.checkpoint_hash(ckpt)

    def test_bundle_passes_self_checks(self, tiny_bundle):
        bundle, _ = tiny_bundle
        assert experiment.validate_bundle(bundle) == []

    def test_stage_outputs_consistent(self, tiny_bundle):
        bundle, _ = tiny_bundle
        fps = bundle.fixed_point_set
        n = fps.points[0].h_star.shape[0] if fps.points else 0
        for p in fps.points:
            assert abs(p.speed**2 - n * p.q_loss) <= 1e-10 * max(p.speed**2, 1e-300)

    def test_deterministic_tables(self, tmp_path):
        cfg = tiny_config(master_seed=9)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        experiment.run_pipeline(cfg, out_dir=str(out_a))
        experiment.run_pipeline(cfg, out_dir=str(out_b))
        for name in list(persistence.TABLE_SCHEMAS) :
            fa = out_a / "tables" / f"{name}.csv"
            fb = out_b / "tables" / f"{name}.csv"
            assert fa.read_bytes() == fb.read_bytes(), name
        assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
        assert (out_a / "checkpoint.json").read_bytes() == (out_b / "checkpoint.json").read_bytes()


class TestSweeps:
    def test_class_sweep_rows(self):
        cfg = tiny_config(seeds_per_cell=1, sweep_classes=(2, 3))
        rows = experiment.run_class_sweep(cfg)
        assert len(rows) == 2
        for row in rows:
            assert row["error"] is None
            assert 0.0 <= row["accuracy"] <= 1.0
            assert row["hidden_pr"] >= 1.0

    def test_l2_sweep_rows_and_table(self, tmp_path):
        cfg = tiny_config(seeds_per_cell=1, sweep_lambdas=(0.0, 1e-2))
        rows = experiment.run_l2_sweep(cfg, out_dir=str(tmp_path))
        assert [r["value"] for r in rows] == [0.0, 1e-2]
        assert (tmp_path / "l2_sweep.csv").exists()

    def test_failing_cell_recorded_not_fatal(self):
        cfg = tiny_config(seeds_per_cell=1, sweep_classes=(2, 3), arch_kind="lstm", hidden_dim=15)
        rows = experiment.run_class_sweep(cfg)
        assert all(r["error"] for r in rows)


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "slowpoints.cli", *args],
        capture_output=True, text=True, timeout=600,
    )


class TestCli:
    def test_gen_data_and_lsa(self, tmp_path):
        data = tmp_path / "d.jsonl"
        r = run_cli("gen-data", "--grammar", "categorical", "--classes", "3",
                    "--length", "8", "--count", "200", "--seed", "3", "--out", str(data))
        assert r.returncode == 0, r.stderr
        out = tmp_path / "lsa.json"
        r = run_cli("lsa", "--dataset", str(data), "--out", str(out))
        assert r.returncode == 0, r.stderr
        doc = json.loads(out.read_text())
        assert 0.9 <= doc["top2_fraction"] <= 1.0

    def test_ingest_counts_round_trip(self, tmp_path):
        src = tmp_path / "counts.csv"
        src.write_text(",alpha,beta\npos,3,1\nneg,0,5\n")
        out = tmp_path / "echo.csv"
        r = run_cli("ingest-counts", "--counts", str(src), "--out", str(out))
        assert r.returncode == 0, r.stderr
        assert "2 classes x 2 tokens" in r.stdout

    def test_bad_counts_is_config_error(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text(",a,a\npos,1,2\n")
        r = run_cli("ingest-counts", "--counts", str(src), "--out", str(tmp_path / "x.csv"))
        assert r.returncode == 2

    def test_missing_checkpoint_is_stage_error(self, tmp_path):
        r = run_cli("fixed-points", "--checkpoint", str(tmp_path / "none.json"),
                    "--dataset", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "o.json"))
        assert r.returncode == 3

    def test_unknown_config_key_is_config_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus_key": 1}))
        r = run_cli("pipeline", "--config", str(cfg), "--out", str(tmp_path / "out"))
        assert r.returncode == 2

    def test_pipeline_with_check(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        doc = experiment.ExperimentConfig(**TINY).to_dict()
        cfg.write_text(json.dumps(doc))
        r = run_cli("pipeline", "--config", str(cfg), "--out", str(tmp_path / "out"), "--check")
        assert r.returncode == 0, r.stderr + r.stdout
        assert "all bundle self-checks passed" in r.stdout
        assert (tmp_path / "out" / "report.json").exists()

    def test_stage_commands_on_pipeline_artifacts(self, tmp_path):
        cfg_doc = experiment.ExperimentConfig(**TINY).to_dict()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(cfg_doc))
        out = tmp_path / "run"
        r = run_cli("train", "--config", str(cfg), "--out", str(out))
        assert r.returncode == 0, r.stderr
        ck = out / "checkpoint.json"
        data = out / "test_data.jsonl"
        fps = out / "fps.json"
        r = run_cli("fixed-points", "--checkpoint", str(ck), "--dataset", str(data),
                    "--seeds-count", "40", "--tol", "1e-7", "--out", str(fps))
        assert r.returncode == 0, r.stderr
        r = run_cli("spectra", "--checkpoint", str(ck), "--fixed-points", str(fps),
                    "--tau", "12", "--out", str(out / "spec.json"))
        assert r.returncode in (0, 3)  # 3 if too few converged points on a tiny run
        r = run_cli("geometry", "--checkpoint", str(ck), "--dataset", str(data),
                    "--out", str(out / "geom.json"))
        assert r.returncode == 0, r.stderr
        r = run_cli("speed-grid", "--checkpoint", str(ck), "--fixed-points", str(fps),
                    "--resolution", "8", "--out", str(out / "grid"))
        assert r.returncode in (0, 3)
