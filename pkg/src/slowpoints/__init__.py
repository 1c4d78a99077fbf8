"""Train small gated RNNs on synthetic text-classification grammars and
analyze the trained networks as dynamical systems: slow/fixed points,
linearized eigenmodes, attractor-manifold geometry, and LSA of the dataset
statistics the geometry reflects."""

from .cells import Architecture, RnnParams, init_params, jacobians, logits, run, step
from .experiment import ExperimentConfig, run_class_sweep, run_l2_sweep, run_pipeline
from .fixed_points import FixedPoint, FixedPointConfig, FixedPointSet, find_fixed_points, speed, speed_grid
from .geometry import (
    correlation_dimension,
    deflection_stats,
    dimensionality_report,
    local_participation_ratio,
    mle_dimension,
    participation_ratio,
    readout_geometry,
    variance_threshold_dim,
)
from .linalg import ComplexSpectrum, PcaBasis, eig_nonsymmetric, pca, svd
from .lsa import CountMatrix, build_count_matrix, ingest_count_csv, lsa_analyze
from .persistence import AnalysisBundle, Checkpoint, export_report, load_checkpoint, save_checkpoint
from .spectra import LinearizationReport, count_integration_modes, linearize, mode_timescales, plane_alignment
from .synth_data import (
    LabeledDataset,
    Phrase,
    Vocabulary,
    gen_categorical,
    gen_multilabel,
    gen_ordered_sentiment,
    gen_ordered_sentiment_intensity,
    shuffle_phrase,
)
from .training import TrainConfig, TrainReport, loss_and_grads, train

__version__ = "0.1.0"
