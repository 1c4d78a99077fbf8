"""Versioned, portable serialization for parameters and analysis artifacts.

Checkpoints and reports are JSON documents; numeric payloads are embedded
as base64-encoded little-endian float64 bytes, so round-trips are lossless
and the files stay language-neutral.  Every document carries a format
version and an FNV-1a checksum over its canonical (sorted-key, compact)
JSON bytes.  Flat CSV tables exported next to a report are self-describing:
the first line names the table schema and version, the second is the column
header.  Floats in tables are written with shortest round-trip formatting,
so regenerating values from a table reproduces the in-memory doubles
exactly.
"""

import base64
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .cells import Architecture, RnnParams
from .errors import ArchitectureMismatchError, ChecksumError, VersionError
from .hashing import fnv1a64_hex

FORMAT_VERSION = 1
CHECKPOINT_KIND = "slowpoints.checkpoint"
REPORT_KIND = "slowpoints.report"

TABLE_SCHEMAS = {
    "trajectories": ["phrase_id", "t", "token", "label", "pc1", "pc2", "pc3"],
    "fixed_points": ["fp_id", "q_loss", "speed", "converged", "predicted_label", "pc1", "pc2", "pc3"],
    "spectrum": ["fp_id", "mode", "eig_re", "eig_im", "magnitude", "tau", "plane_fraction"],
    "variance_curves": ["source", "component", "variance", "cumulative_fraction"],
    "deflections": ["row_kind", "token", "u", "v"],
    "speed_grid": ["offset", "v", "u", "log10_speed"],
    "lsa_projections": ["entity", "name", "mode1", "mode2", "mode3"],
}


def encode_array(arr) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "dtype": "f8",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(obj) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    shape = tuple(obj["shape"])
    expected = int(np.prod(shape)) * 8 if shape else 8
    if len(raw) != expected:
        raise ChecksumError(
            f"array payload has {len(raw)} bytes, expected {expected} for shape {shape}"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)


def _canonical_bytes(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_document(doc: dict, path):
    doc = dict(doc)
    doc.pop("checksum", None)
    doc["checksum"] = fnv1a64_hex(_canonical_bytes(doc))
    parent = os.path.dirname(str(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
    os.replace(tmp, path)
    return doc["checksum"]


def _read_document(path, expected_kind) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ChecksumError(f"{path}: unreadable or truncated document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != expected_kind:
        raise ChecksumError(f"{path}: not a {expected_kind} document")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")
    stored = doc.get("checksum")
    body = dict(doc)
    body.pop("checksum", None)
    actual = fnv1a64_hex(_canonical_bytes(body))
    if stored != actual:
        raise ChecksumError(f"{path}: checksum mismatch (stored {stored}, computed {actual})")
    return doc


# -- checkpoints --------------------------------------------------------------

@dataclass
class Checkpoint:
    architecture: Architecture
    arrays: dict                       # every trainable array by name
    num_classes: int
    has_readout_bias: bool
    train_config: dict | None = None
    rng_seed: int | None = None
    metrics: dict = field(default_factory=dict)

    @classmethod
    def from_params(cls, params: RnnParams, train_config=None, rng_seed=None, metrics=None):
        return cls(
            architecture=params.arch,
            arrays={k: v.copy() for k, v in params.all_arrays().items()},
            num_classes=params.num_classes,
            has_readout_bias=params.readout_b is not None,
            train_config=train_config,
            rng_seed=rng_seed,
            metrics=dict(metrics or {}),
        )

    def to_params(self) -> RnnParams:
        """Rebuild RnnParams, verifying every required array is present."""
        required = self.architecture.weight_shapes()
        weights = {}
        for name, shape in required.items():
            if name not in self.arrays:
                raise ArchitectureMismatchError(
                    f"checkpoint lacks array {name!r} required by {self.architecture.kind}"
                )
            if self.arrays[name].shape != shape:
                raise ArchitectureMismatchError(
                    f"array {name!r} has shape {self.arrays[name].shape}, "
                    f"expected {shape} for {self.architecture.kind}"
                )
            weights[name] = self.arrays[name].copy()
        readout_w = self.arrays.get("W_out")
        readout_b = self.arrays.get("b_out") if self.has_readout_bias else None
        return RnnParams(
            self.architecture,
            weights,
            None if readout_w is None else readout_w.copy(),
            None if readout_b is None else readout_b.copy(),
        ).validate()

    def document(self) -> dict:
        return {
            "kind": CHECKPOINT_KIND,
            "format_version": FORMAT_VERSION,
            "architecture": {
                "cell": self.architecture.kind,
                "hidden_dim": self.architecture.hidden_dim,
                "input_dim": self.architecture.input_dim,
            },
            "num_classes": self.num_classes,
            "has_readout_bias": self.has_readout_bias,
            "arrays": {k: encode_array(v) for k, v in sorted(self.arrays.items())},
            "train_config": self.train_config,
            "rng_seed": self.rng_seed,
            "metrics": self.metrics,
        }


def checkpoint_hash(ckpt: Checkpoint) -> str:
    """Provenance fingerprint: FNV-1a over the canonical document bytes."""
    return fnv1a64_hex(_canonical_bytes(ckpt.document()))


def save_checkpoint(ckpt: Checkpoint, path) -> str:
    """Write the checkpoint; returns its checksum (== provenance hash input)."""
    return _write_document(ckpt.document(), path)


def load_checkpoint(path) -> Checkpoint:
    doc = _read_document(path, CHECKPOINT_KIND)
    arch_doc = doc["architecture"]
    arch = Architecture(arch_doc["cell"], int(arch_doc["hidden_dim"]), int(arch_doc["input_dim"]))
    arrays = {k: decode_array(v) for k, v in doc["arrays"].items()}
    return Checkpoint(
        architecture=arch,
        arrays=arrays,
        num_classes=int(doc["num_classes"]),
        has_readout_bias=bool(doc["has_readout_bias"]),
        train_config=doc.get("train_config"),
        rng_seed=doc.get("rng_seed"),
        metrics=dict(doc.get("metrics") or {}),
    )


def load_params(path, expect_arch: Architecture | None = None) -> RnnParams:
    """Load and rebuild parameters, optionally pinning the architecture."""
    ckpt = load_checkpoint(path)
    if expect_arch is not None and expect_arch != ckpt.architecture:
        # Rebuild against the expected architecture so the error names the
        # first missing/misshapen array.
        ckpt = Checkpoint(
            architecture=expect_arch,
            arrays=ckpt.arrays,
            num_classes=ckpt.num_classes,
            has_readout_bias=ckpt.has_readout_bias,
        )
    return ckpt.to_params()


# -- fixed-point sets -----------------------------------------------------------

FIXED_POINT_KIND = "slowpoints.fixed_points"


def save_fixed_point_set(fps, path) -> str:
    from .fixed_points import FixedPointSet  # local import to avoid a cycle

    assert isinstance(fps, FixedPointSet)
    n = len(fps.points)
    states = fps.states() if n else np.zeros((0, 0))
    doc = {
        "kind": FIXED_POINT_KIND,
        "format_version": FORMAT_VERSION,
        "dedup_radius": fps.dedup_radius,
        "params_hash": fps.params_hash,
        "n_candidates": fps.n_candidates,
        "n_converged": fps.n_converged,
        "diagnostics": fps.diagnostics,
        "states": encode_array(states),
        "q_loss": [p.q_loss for p in fps.points],
        "speed": [p.speed for p in fps.points],
        "predicted_label": [p.predicted_label for p in fps.points],
        "converged": [bool(p.converged) for p in fps.points],
    }
    return _write_document(doc, path)


def load_fixed_point_set(path):
    from .fixed_points import FixedPoint, FixedPointSet

    doc = _read_document(path, FIXED_POINT_KIND)
    states = decode_array(doc["states"])
    points = [
        FixedPoint(
            h_star=states[i],
            q_loss=float(doc["q_loss"][i]),
            speed=float(doc["speed"][i]),
            predicted_label=int(doc["predicted_label"][i]),
            converged=bool(doc["converged"][i]),
        )
        for i in range(states.shape[0])
    ]
    return FixedPointSet(
        points=points,
        dedup_radius=float(doc["dedup_radius"]),
        params_hash=doc["params_hash"],
        n_candidates=int(doc["n_candidates"]),
        n_converged=int(doc["n_converged"]),
        diagnostics=dict(doc.get("diagnostics") or {}),
    )


# -- analysis bundles ----------------------------------------------------------

@dataclass
class AnalysisBundle:
    """Everything one pipeline run produced, ready for export.

    Heavy numeric members are the toolkit's own dataclasses; ``provenance``
    must carry the hash of the checkpoint the analyses were computed from.
    """

    provenance: dict
    metrics: dict = field(default_factory=dict)
    trajectories: dict | None = None       # phrase_id/t/token/label/coords arrays
    fixed_point_set: object = None
    fp_projections: np.ndarray | None = None
    linearizations: list | None = None     # per-point summary dicts
    hidden_dims: object = None
    fp_dims: object = None
    readout: object = None
    deflections: object = None
    lsa_report: object = None
    count_matrix: object = None
    speed_grid: object = None
    hidden_variances: np.ndarray | None = None
    fp_variances: np.ndarray | None = None


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(out_dir, name: str, rows) -> str:
    """Write one flat table with its schema banner; returns the path."""
    columns = TABLE_SCHEMAS[name]
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# slowpoints.table.{name}.v{FORMAT_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"table {name}: row has {len(row)} cells, schema has {len(columns)}")
            writer.writerow([_fmt(v) for v in row])
    return path


def read_table(path):
    """Read a table written by ``write_table``; returns (schema, header, rows)."""
    with open(path, encoding="utf-8", newline="") as fh:
        schema = fh.readline().strip().lstrip("# ")
        rows = list(csv.reader(fh))
    return schema, rows[0], rows[1:]


def _variance_rows(source, variances):
    total = float(np.sum(variances))
    cum = 0.0
    rows = []
    for i, v in enumerate(np.asarray(variances, dtype=float)):
        cum += float(v)
        rows.append((source, i, float(v), cum / total if total > 0 else 0.0))
    return rows


def export_report(bundle: AnalysisBundle, out_dir) -> dict:
    """Write report.json plus the seven flat tables under ``out_dir``.

    Empty sections are exported as empty tables/null fields so a bundle with
    no fixed points still produces a valid document.  Returns a dict of
    written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    tables_dir = os.path.join(out_dir, "tables")
    os.makedirs(tables_dir, exist_ok=True)
    paths = {}

    rows = []
    if bundle.trajectories:
        tr = bundle.trajectories
        coords = tr["coords"]
        for i in range(coords.shape[0]):
            rows.append(
                (tr["phrase_id"][i], tr["t"][i], tr["token"][i], tr["label"][i],
                 coords[i, 0], coords[i, 1], coords[i, 2])
            )
    paths["trajectories"] = write_table(tables_dir, "trajectories", rows)

    rows = []
    fps = bundle.fixed_point_set
    if fps is not None and len(fps.points) and bundle.fp_projections is not None:
        for i, (p, proj) in enumerate(zip(fps.points, bundle.fp_projections)):
            rows.append((i, p.q_loss, p.speed, p.converged, p.predicted_label,
                         proj[0], proj[1], proj[2]))
    paths["fixed_points"] = write_table(tables_dir, "fixed_points", rows)

    rows = []
    for i, summary in enumerate(bundle.linearizations or []):
        eig = summary["eigenvalues"]
        taus = summary["taus"]
        fracs = summary["plane_fractions"]
        for a in range(len(taus)):
            re, im = eig[a]
            rows.append((summary["fp_id"], a, re, im, abs(complex(re, im)), taus[a],
                         fracs[a] if fracs is not None else float("nan")))
    paths["spectrum"] = write_table(tables_dir, "spectrum", rows)

    rows = []
    if bundle.hidden_variances is not None:
        rows += _variance_rows("hidden", bundle.hidden_variances)
    if bundle.fp_variances is not None:
        rows += _variance_rows("fixed_points", bundle.fp_variances)
    if bundle.lsa_report is not None:
        rows += _variance_rows("lsa", bundle.lsa_report.singular_values**2)
    paths["variance_curves"] = write_table(tables_dir, "variance_curves", rows)

    rows = []
    if bundle.deflections is not None:
        for token, entry in bundle.deflections.per_token.items():
            if entry.mean_plane_projection is not None and entry.count:
                u, v = entry.mean_plane_projection[:2]
                rows.append(("mean", token, float(u), float(v)))
            if entry.sample_plane_projections is not None:
                for u, v in entry.sample_plane_projections:
                    rows.append(("sample", token, float(u), float(v)))
    paths["deflections"] = write_table(tables_dir, "deflections", rows)

    rows = []
    grid = bundle.speed_grid
    if grid is not None:
        for k, off in enumerate(grid.offsets):
            for j, vv in enumerate(grid.v):
                for i, uu in enumerate(grid.u):
                    rows.append((float(off), float(vv), float(uu), grid.log10_speed[k, j, i]))
    paths["speed_grid"] = write_table(tables_dir, "speed_grid", rows)

    rows = []
    if bundle.lsa_report is not None and bundle.count_matrix is not None:
        def proj_row(mat, i):
            vals = [float(mat[i, a]) if a < mat.shape[1] else 0.0 for a in range(3)]
            return tuple(vals)

        for i, name in enumerate(bundle.count_matrix.class_names):
            rows.append(("class", name) + proj_row(bundle.lsa_report.class_projections, i))
        for i, name in enumerate(bundle.count_matrix.token_names):
            rows.append(("token", name) + proj_row(bundle.lsa_report.token_projections, i))
    paths["lsa_projections"] = write_table(tables_dir, "lsa_projections", rows)

    doc = {
        "kind": REPORT_KIND,
        "format_version": FORMAT_VERSION,
        "provenance": bundle.provenance,
        "metrics": bundle.metrics,
        "tables": {k: os.path.relpath(v, out_dir) for k, v in paths.items()},
        "fixed_points": None,
        "linearizations": bundle.linearizations,
        "dimensionality": {},
        "readout": None,
        "lsa": None,
    }
    if fps is not None:
        doc["fixed_points"] = {
            "dedup_radius": fps.dedup_radius,
            "params_hash": fps.params_hash,
            "n_candidates": fps.n_candidates,
            "n_converged": fps.n_converged,
            "count": len(fps.points),
            "states": encode_array(fps.states() if len(fps.points) else np.zeros((0, 1))),
            "q_loss": [p.q_loss for p in fps.points],
            "speed": [p.speed for p in fps.points],
            "predicted_label": [p.predicted_label for p in fps.points],
            "converged": [bool(p.converged) for p in fps.points],
        }
    for key, rep in (("hidden", bundle.hidden_dims), ("fixed_points", bundle.fp_dims)):
        if rep is not None:
            doc["dimensionality"][key] = {
                "variance_dims": {f"{t:g}": int(v) for t, v in rep.variance_dims.items()},
                "global_pr": rep.global_pr,
                "local_pr": rep.local_pr,
                "local_pr_k": rep.local_pr_k,
                "mle_dim": rep.mle_dim,
                "mle_k": rep.mle_k,
                "corr_dim": rep.corr_dim,
                "corr_fit_range": list(rep.corr_fit_range) if rep.corr_fit_range else None,
                "num_points": rep.num_points,
                "ambient_dim": rep.ambient_dim,
            }
    if bundle.readout is not None:
        ro = bundle.readout
        doc["readout"] = {
            "magnitudes": [float(v) for v in ro.magnitudes],
            "pairwise_angles_deg": {f"{i}-{j}": a for (i, j), a in ro.pairwise_angles.items()},
            "theta_theory_deg": ro.theta_theory,
            "subspace_percentage": ro.subspace_percentage,
            "zero_readouts": list(ro.zero_readouts),
        }
    if bundle.lsa_report is not None:
        doc["lsa"] = {
            "singular_values": [float(v) for v in bundle.lsa_report.singular_values],
            "variance_fractions": [float(v) for v in bundle.lsa_report.variance_fractions],
            "centered": bundle.lsa_report.centered,
            "normalize": bundle.lsa_report.normalize,
        }
    report_path = os.path.join(out_dir, "report.json")
    _write_document(doc, report_path)
    paths["report"] = report_path
    return paths
