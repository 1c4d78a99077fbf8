"""Shared fixtures for the acceptance suite.

The trained-network fixtures are expensive (minutes each on one CPU core),
so they are session-scoped and shared across acceptance criteria.  Every
fixture is fully deterministic: fixed master seeds, fixed configs.
"""

import pytest

from slowpoints import experiment, fixed_points, training

# Pinned acceptance-run configurations.  Master seeds were chosen once and
# frozen; all runs are deterministic.
CAT3_SEED = 2
CAT4_SEED = 1
ORD5_SEED = 1
ML2_SEED = 1
SWEEP_SEED = 0


def default_pipeline_config(**overrides):
    """The default experiment configuration (training defaults untouched)."""
    return experiment.ExperimentConfig(**overrides)


@pytest.fixture(scope="session")
def cat3_run(tmp_path_factory):
    """Default-config 3-class categorical GRU pipeline (criteria 3, 5, 7, 9)."""
    out = tmp_path_factory.mktemp("cat3")
    config = default_pipeline_config(grammar="categorical", n_classes=3, master_seed=CAT3_SEED)
    return experiment.run_pipeline(config, out_dir=str(out)), config


@pytest.fixture(scope="session")
def cat4_run(tmp_path_factory):
    """4-class categorical pipeline (criterion 5)."""
    out = tmp_path_factory.mktemp("cat4")
    config = default_pipeline_config(grammar="categorical", n_classes=4, master_seed=CAT4_SEED)
    return experiment.run_pipeline(config, out_dir=str(out)), config


@pytest.fixture(scope="session")
def ord5_run(tmp_path_factory):
    """5-class ordered (sentiment+intensity) pipeline (criteria 5, 7)."""
    out = tmp_path_factory.mktemp("ord5")
    config = default_pipeline_config(grammar="ordered_sentiment_intensity", master_seed=ORD5_SEED)
    return experiment.run_pipeline(config, out_dir=str(out)), config


@pytest.fixture(scope="session")
def ml2_run(tmp_path_factory):
    """2-label multi-label pipeline (criterion 6)."""
    out = tmp_path_factory.mktemp("ml2")
    config = default_pipeline_config(grammar="multilabel", n_classes=2, master_seed=ML2_SEED)
    return experiment.run_pipeline(config, out_dir=str(out)), config


def sweep_cell_config(**overrides):
    """Desk-scale sweep cells: smaller nets and shorter training than the
    headline run, enough for the manifold rank to settle."""
    base = dict(
        grammar="categorical",
        hidden_dim=64,
        train=training.TrainConfig(steps=2500),
        fp=fixed_points.FixedPointConfig(),
        fp_seed_count=192,
        seeds_per_cell=3,
        master_seed=SWEEP_SEED,
    )
    base.update(overrides)
    return experiment.ExperimentConfig(**base)


@pytest.fixture(scope="session")
def class_sweep_rows():
    """N in {2, 3, 4, 5} x 3 seeds (criterion 4)."""
    config = sweep_cell_config(sweep_classes=(2, 3, 4, 5))
    return experiment.run_class_sweep(config)


@pytest.fixture(scope="session")
def l2_sweep_rows():
    """Multi-label regularization sweep (criterion 6)."""
    config = sweep_cell_config(
        grammar="multilabel", n_classes=2, sweep_lambdas=(0.0, 1e-3, 1e-2),
        seeds_per_cell=1, master_seed=ML2_SEED,
    )
    return experiment.run_l2_sweep(config)


def criterion(number, description, passed, detail=""):
    """Assert one acceptance criterion, printing a stable pass/fail line."""
    status = "PASS" if passed else "FAIL"
    line = f"[criterion {number}] {status}: {description}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert passed, line
