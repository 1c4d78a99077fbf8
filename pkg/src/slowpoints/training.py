"""Backprop-through-time training of the RNN cells on labeled datasets.

Gradients are exact reverse-mode derivatives computed with the cell-level
backward passes in :mod:`slowpoints.cells` (the same code paths used for
fixed-point search), so training, analysis, and linearization all agree on
what F is.  Optimization is Adam with an exponentially decaying learning
rate and global-norm gradient clipping; the loss is softmax cross-entropy
for exclusive labels or per-label sigmoid cross-entropy for multi-label
sets, plus a squared-L2 penalty on every parameter (readout included).
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import cells
from .errors import DivergenceError, ParameterError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    initial_lr: float = 0.1
    lr_decay_per_step: float = 0.9997
    grad_clip: float = 10.0
    l2_penalty: float = 5e-4
    steps: int = 3000
    seed: int = 0
    loss_kind: str = "softmax_xent"  # or "sigmoid_bce"

    def __post_init__(self):
        if not 0.0 < self.lr_decay_per_step <= 1.0:
            raise ParameterError("lr_decay_per_step must be in (0, 1]")
        if self.grad_clip <= 0.0:
            raise ParameterError("grad_clip must be positive")
        if self.l2_penalty < 0.0:
            raise ParameterError("l2_penalty must be nonnegative")
        if self.loss_kind not in ("softmax_xent", "sigmoid_bce"):
            raise ParameterError(f"unknown loss_kind {self.loss_kind!r}")

    def with_(self, **kwargs):
        return replace(self, **kwargs)


@dataclass
class TrainReport:
    losses: np.ndarray            # per-step training loss
    test_accuracy: float
    shuffled_test_accuracy: float
    params: cells.RnnParams
    config: TrainConfig
    lr_schedule: np.ndarray = field(default=None)


def learning_rate(config: TrainConfig, step: int) -> float:
    return config.initial_lr * config.lr_decay_per_step**step


def _onehot_step(tokens_t, vocab_size):
    B = tokens_t.shape[0]
    X = np.zeros((B, vocab_size))
    valid = tokens_t >= 0
    X[np.nonzero(valid)[0], tokens_t[valid]] = 1.0
    return X


def _forward_tokens(params, tokens, want_caches):
    """Run a (B, T) token batch; returns final states and per-step caches."""
    B, T = tokens.shape
    H = np.zeros((B, params.arch.hidden_dim))
    caches = [] if want_caches else None
    for t in range(T):
        X = _onehot_step(tokens[:, t], params.arch.input_dim)
        H, cache = cells.step_batch(params, H, X)
        if want_caches:
            caches.append(cache)
    return H, caches


def _data_loss_and_dlogits(logits, labels, loss_kind):
    B = logits.shape[0]
    if loss_kind == "softmax_xent":
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(logz - shifted[np.arange(B), labels]))
        probs = np.exp(shifted - logz[:, None])
        dlogits = probs
        dlogits[np.arange(B), labels] -= 1.0
        return loss, dlogits / B
    # sigmoid_bce: one independent binary decision per label column.
    z = labels.astype(float)
    per = np.maximum(logits, 0.0) - logits * z + np.log1p(np.exp(-np.abs(logits)))
    loss = float(per.sum(axis=1).mean())
    dlogits = (_sigmoid(logits) - z) / B
    return loss, dlogits


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _loss_and_grads_encoded(params, tokens, labels, config):
    H_T, caches = _forward_tokens(params, tokens, want_caches=True)
    logits = cells.logits_batch(params, H_T)
    loss, dlogits = _data_loss_and_dlogits(logits, labels, config.loss_kind)

    grads = {name: np.zeros_like(arr) for name, arr in params.all_arrays().items()}
    grads["W_out"] += dlogits.T @ H_T
    if "b_out" in grads:
        grads["b_out"] += dlogits.sum(axis=0)
    dH = dlogits @ params.readout_w
    for cache in reversed(caches):
        dH = cells.backward_batch(params, cache, dH, grads)

    if config.l2_penalty > 0.0:
        lam = config.l2_penalty
        for name, arr in params.all_arrays().items():
            loss += lam * float(np.sum(arr * arr))
            grads[name] += (2.0 * lam) * arr
    return loss, grads


def loss_and_grads(params, phrases, config: TrainConfig):
    """Mean data loss plus L2 penalty and its exact parameter gradients.

    ``phrases`` is a nonempty list of :class:`slowpoints.synth_data.Phrase`;
    gradients come back as a name->array dict matching ``params.all_arrays``.
    """
    if not phrases:
        raise ParameterError("loss_and_grads needs a nonempty batch")
    max_len = max(len(p) for p in phrases)
    tokens = np.full((len(phrases), max_len), -1, dtype=np.int64)
    for i, p in enumerate(phrases):
        tokens[i, : len(p)] = p.token_indices
    labels = np.array([p.label for p in phrases], dtype=np.int64)
    loss, grads = _loss_and_grads_encoded(params, tokens, labels, config)
    if not np.isfinite(loss):
        raise DivergenceError("loss is non-finite", step=None)
    return loss, grads


def clip_by_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class AdamState:
    """Per-array first/second moment accumulators."""

    def __init__(self, arrays):
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def update(self, arrays, grads, lr):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for k, arr in arrays.items():
            g = grads[k]
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g
            arr -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + ADAM_EPS)


def predictions(params, tokens, multilabel, chunk=1024):
    """Predicted labels for a (B, T) token matrix."""
    outs = []
    for lo in range(0, tokens.shape[0], chunk):
        H_T, _ = _forward_tokens(params, tokens[lo : lo + chunk], want_caches=False)
        logits = cells.logits_batch(params, H_T)
        outs.append((logits > 0.0).astype(np.int64) if multilabel else logits.argmax(axis=1))
    return np.concatenate(outs, axis=0)


def accuracy(params, dataset) -> float:
    """Fraction of phrases predicted exactly right (all labels, if multi-label)."""
    tokens = dataset.token_matrix()
    labels = dataset.labels_array()
    pred = predictions(params, tokens, dataset.multilabel)
    if dataset.multilabel:
        return float(np.mean(np.all(pred == labels, axis=1)))
    return float(np.mean(pred == labels))


def shuffled_accuracy(params, dataset, seed) -> float:
    from .synth_data import shuffle_phrase

    rng = np.random.default_rng([seed, 0x51F])
    shuffled = [shuffle_phrase(p, rng) for p in dataset.phrases]
    clone = type(dataset)(
        grammar=dataset.grammar,
        num_classes=dataset.num_classes,
        class_names=dataset.class_names,
        vocabulary=dataset.vocabulary,
        phrases=shuffled,
        sampling_mode=dataset.sampling_mode,
        multilabel=dataset.multilabel,
        params=dataset.params,
    )
    return accuracy(params, clone)


def train(arch, dataset, config: TrainConfig, test_dataset=None, readout_bias=False):
    """Train a fresh network; deterministic given ``config.seed``.

    If no ``test_dataset`` is supplied, the last tenth of ``dataset`` is held
    out for the accuracy numbers and excluded from the training batches.
    """
    if len(dataset) == 0:
        raise ParameterError("train needs a nonempty dataset")
    if dataset.vocabulary.size != arch.input_dim:
        raise ParameterError(
            f"architecture input_dim {arch.input_dim} != vocabulary size {dataset.vocabulary.size}"
        )
    train_phrases = dataset.phrases
    if test_dataset is None:
        n_test = max(1, len(dataset) // 10)
        test_dataset = type(dataset)(
            grammar=dataset.grammar,
            num_classes=dataset.num_classes,
            class_names=dataset.class_names,
            vocabulary=dataset.vocabulary,
            phrases=dataset.phrases[-n_test:],
            sampling_mode=dataset.sampling_mode,
            multilabel=dataset.multilabel,
            params=dataset.params,
        )
        train_phrases = dataset.phrases[:-n_test]

    rng = np.random.default_rng(config.seed)
    params = cells.init_params(arch, dataset.num_classes, rng, readout_bias=readout_bias)

    max_len = max(len(p) for p in train_phrases)
    tokens = np.full((len(train_phrases), max_len), -1, dtype=np.int64)
    for i, p in enumerate(train_phrases):
        tokens[i, : len(p)] = p.token_indices
    labels = np.array([p.label for p in train_phrases], dtype=np.int64)

    arrays = params.all_arrays()
    adam = AdamState(arrays)
    losses = np.empty(config.steps)
    lrs = np.empty(config.steps)
    for step in range(config.steps):
        idx = rng.integers(0, len(train_phrases), size=config.batch_size)
        loss, grads = _loss_and_grads_encoded(params, tokens[idx], labels[idx], config)
        if not np.isfinite(loss):
            raise DivergenceError(f"training diverged at step {step}", step=step)
        clip_by_global_norm(grads, config.grad_clip)
        lr = learning_rate(config, step)
        adam.update(arrays, grads, lr)
        losses[step] = loss
        lrs[step] = lr

    params.validate()
    return TrainReport(
        losses=losses,
        test_accuracy=accuracy(params, test_dataset),
        shuffled_test_accuracy=shuffled_accuracy(params, test_dataset, config.seed),
        params=params,
        config=config,
        lr_schedule=lrs,
    )
