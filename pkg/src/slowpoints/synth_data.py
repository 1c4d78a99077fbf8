"""Synthetic text-classification grammars with exact scoring and labeling.

Four generators are provided:

* ``gen_categorical`` - N evidence words plus a neutral word; the label is
  the class with the highest evidence count (ties go to the smallest index).
* ``gen_ordered_sentiment`` - good/bad/neutral with a scalar score split
  into N ordered regions (N in {2, 3, 5}).
* ``gen_ordered_sentiment_intensity`` - a six-word bank with 2-d
  (sentiment, intensity) scores and a five-star labeling rule.
* ``gen_multilabel`` - N independent good_i/bad_i pairs; each coordinate is
  labeled positive iff its summed score is >= 0.

Phrases are fixed-length by default.  ``uniform_over_scores`` sampling picks
a phrase score uniformly from the achievable set, then realizes it with a
uniformly chosen word multiset emitted in shuffled order; ``iid_words``
draws each word independently and uniformly.
"""

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ParameterError, ParseError

MODES = ("uniform_over_scores", "iid_words")


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    score_vectors: np.ndarray  # (num_tokens, score_dim)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ParameterError("vocabulary token names must be unique")

    def index(self, token):
        return self.tokens.index(token)

    @property
    def size(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Phrase:
    """Token-index sequence with its summed score and assigned label.

    ``label`` is an int class index for exclusive grammars and a tuple of
    0/1 flags (one per coordinate) for the multi-label grammar.
    """

    token_indices: tuple
    score: tuple
    label: object

    def __len__(self):
        return len(self.token_indices)


@dataclass
class LabeledDataset:
    grammar: str
    num_classes: int
    class_names: tuple
    vocabulary: Vocabulary
    phrases: list
    sampling_mode: str
    multilabel: bool = False
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.phrases)

    @property
    def mean_length(self) -> float:
        return float(np.mean([len(p) for p in self.phrases]))

    def token_matrix(self) -> np.ndarray:
        """(num_phrases, max_len) int array; -1 pads short phrases."""
        max_len = max(len(p) for p in self.phrases)
        out = np.full((len(self.phrases), max_len), -1, dtype=np.int64)
        for i, p in enumerate(self.phrases):
            out[i, : len(p)] = p.token_indices
        return out

    def labels_array(self) -> np.ndarray:
        if self.multilabel:
            return np.array([p.label for p in self.phrases], dtype=np.int64)
        return np.array([p.label for p in self.phrases], dtype=np.int64)

    def save_jsonl(self, path):
        """Line-delimited export: a header record, then one record per phrase."""
        header = {
            "grammar": self.grammar,
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "tokens": list(self.vocabulary.tokens),
            "score_vectors": self.vocabulary.score_vectors.tolist(),
            "sampling_mode": self.sampling_mode,
            "multilabel": self.multilabel,
            "params": self.params,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for p in self.phrases:
                rec = {
                    "tokens": [self.vocabulary.tokens[i] for i in p.token_indices],
                    "score": list(p.score),
                    "label": list(p.label) if self.multilabel else p.label,
                }
                fh.write(json.dumps(rec) + "\n")


def load_jsonl(path) -> LabeledDataset:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad header line: {exc}") from exc
    vocab = Vocabulary(tuple(header["tokens"]), np.array(header["score_vectors"], dtype=float))
    token_to_idx = {t: i for i, t in enumerate(vocab.tokens)}
    multilabel = bool(header["multilabel"])
    phrases = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
            idx = tuple(token_to_idx[t] for t in rec["tokens"])
            label = tuple(rec["label"]) if multilabel else int(rec["label"])
            phrases.append(Phrase(idx, tuple(rec["score"]), label))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"{path}:{ln_no}: bad phrase record: {exc}") from exc
    return LabeledDataset(
        grammar=header["grammar"],
        num_classes=int(header["num_classes"]),
        class_names=tuple(header["class_names"]),
        vocabulary=vocab,
        phrases=phrases,
        sampling_mode=header["sampling_mode"],
        multilabel=multilabel,
        params=dict(header.get("params", {})),
    )


def _check_mode(mode):
    if mode not in MODES:
        raise ParameterError(f"unknown sampling mode {mode!r}; expected one of {MODES}")


def _permuted(rng, tokens):
    return tuple(int(t) for t in rng.permutation(tokens))


# -- categorical -----------------------------------------------------------

def categorical_vocab(n_classes: int) -> Vocabulary:
    names = tuple(f"evid_{i + 1}" for i in range(n_classes)) + ("neutral",)
    vecs = np.vstack([np.eye(n_classes), np.zeros(n_classes)])
    return Vocabulary(names, vecs)


def categorical_label(score) -> int:
    # argmax returns the first maximum: ties go to the smallest class index.
    return int(np.argmax(score))


def gen_categorical(n_classes, length, count, mode="uniform_over_scores", seed=0):
    if n_classes < 2:
        raise ParameterError("categorical grammar needs at least 2 classes")
    if length < 1:
        raise ParameterError("phrase length must be >= 1")
    _check_mode(mode)
    rng = np.random.default_rng(seed)
    vocab = categorical_vocab(n_classes)
    phrases = []
    for _ in range(count):
        if mode == "iid_words":
            idx = tuple(int(i) for i in rng.integers(0, n_classes + 1, size=length))
            score = np.zeros(n_classes, dtype=np.int64)
            for i in idx:
                if i < n_classes:
                    score[i] += 1
        else:
            # Stars and bars: a uniform composition of `length` into N+1 parts
            # is exactly a uniform draw over achievable score vectors (the
            # neutral count absorbs the remainder, so score <-> multiset is a
            # bijection here).
            bars = np.sort(rng.choice(length + n_classes, size=n_classes, replace=False))
            edges = np.concatenate([[-1], bars, [length + n_classes]])
            parts = np.diff(edges) - 1  # (N+1,) summing to length
            score = parts[:n_classes].astype(np.int64)
            tokens = np.repeat(np.arange(n_classes + 1), parts)
            idx = _permuted(rng, tokens)
        phrases.append(Phrase(idx, tuple(int(s) for s in score), categorical_label(score)))
    return LabeledDataset(
        grammar="categorical",
        num_classes=n_classes,
        class_names=tuple(f"class_{i + 1}" for i in range(n_classes)),
        vocabulary=vocab,
        phrases=phrases,
        sampling_mode=mode,
        params={"length": length, "seed": seed},
    )


# -- ordered, sentiment-only ------------------------------------------------

ORDERED_VOCAB = Vocabulary(("good", "bad", "neutral"), np.array([[1.0], [-1.0], [0.0]]))

_ORDERED_CLASS_NAMES = {
    2: ("negative", "positive"),
    3: ("negative", "neutral", "positive"),
    5: ("one_star", "two_star", "three_star", "four_star", "five_star"),
}


def ordered_label(n_classes: int, length: int, s: int) -> int:
    """Region index of a scalar score; boundaries go to the outer class.

    For N=3 the regions are s >= L/3 (positive), |s| < L/3 (neutral),
    s <= -L/3 (negative); N=5 splits at +-L/5 and +-3L/5; N=2 is the sign
    of s with 0 counted as positive.  Comparisons are exact (integers).
    """
    if n_classes == 2:
        return 1 if s >= 0 else 0
    if n_classes == 3:
        if 3 * s >= length:
            return 2
        if 3 * s <= -length:
            return 0
        return 1
    if n_classes == 5:
        if 5 * s >= 3 * length:
            return 4
        if 5 * s >= length:
            return 3
        if 5 * s > -length:
            return 2
        if 5 * s > -3 * length:
            return 1
        return 0
    raise ParameterError(f"ordered sentiment grammar supports N in {{2, 3, 5}}, got {n_classes}")


def gen_ordered_sentiment(n_classes, length, count, mode="uniform_over_scores", seed=0):
    if n_classes not in (2, 3, 5):
        raise ParameterError(f"ordered sentiment grammar supports N in {{2, 3, 5}}, got {n_classes}")
    if length < 1:
        raise ParameterError("phrase length must be >= 1")
    _check_mode(mode)
    rng = np.random.default_rng(seed)
    phrases = []
    for _ in range(count):
        if mode == "iid_words":
            idx = tuple(int(i) for i in rng.integers(0, 3, size=length))
            s = sum(1 if i == 0 else -1 if i == 1 else 0 for i in idx)
        else:
            s = int(rng.integers(-length, length + 1))
            # Multisets realizing s are parametrized by the bad-word count.
            lo = max(0, -s)
            hi = (length - s) // 2
            n_bad = int(rng.integers(lo, hi + 1))
            n_good = s + n_bad
            tokens = np.repeat([0, 1, 2], [n_good, n_bad, length - n_good - n_bad])
            idx = _permuted(rng, tokens)
        phrases.append(Phrase(idx, (s,), ordered_label(n_classes, length, s)))
    return LabeledDataset(
        grammar="ordered_sentiment",
        num_classes=n_classes,
        class_names=_ORDERED_CLASS_NAMES[n_classes],
        vocabulary=ORDERED_VOCAB,
        phrases=phrases,
        sampling_mode=mode,
        params={"length": length, "seed": seed},
    )


# -- ordered, sentiment + intensity ------------------------------------------

INTENSITY_VOCAB = Vocabulary(
    ("awesome", "good", "okay", "bad", "awful", "neutral"),
    np.array([
        [2.0, 1.0],
        [1.0, -0.5],
        [0.0, -2.0],
        [-1.0, -0.5],
        [-2.0, 1.0],
        [0.0, 0.0],
    ]),
)

_STAR_NAMES = ("one_star", "two_star", "three_star", "four_star", "five_star")


def intensity_label(s: float, i: float) -> int:
    """Five-star rule on (sentiment, intensity) totals.

    Low-intensity phrases whose intensity magnitude dominates are neutral
    (three stars); otherwise sentiment sign picks the side and intensity
    sign picks the extremity.
    """
    if i < 0 and abs(i) > abs(s):
        return 2
    if i >= 0 and s > 0:
        return 4
    if i < 0 and s > 0:
        return 3
    if i < 0 and s < 0:
        return 1
    return 0  # i >= 0 and s <= 0


# Cache of the enumerated multiset table per phrase length: the full list of
# word-count compositions, sorted by score, with group offsets per distinct
# score.  C(L+5, 5) rows (about 1.2M at L=40), int16.
_INTENSITY_TABLES = {}


def _intensity_table(length):
    if length in _INTENSITY_TABLES:
        return _INTENSITY_TABLES[length]
    n_words = INTENSITY_VOCAB.size
    m = comb(length + n_words - 1, n_words - 1)
    bars = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(length + n_words - 1), n_words - 1)),
        dtype=np.int32,
        count=m * (n_words - 1),
    ).reshape(m, n_words - 1)
    edges = np.concatenate(
        [np.full((m, 1), -1, np.int32), bars, np.full((m, 1), length + n_words - 1, np.int32)],
        axis=1,
    )
    counts = (np.diff(edges, axis=1) - 1).astype(np.int16)
    # Integer score keys (doubled to clear the half-point word scores).
    doubled = (2 * INTENSITY_VOCAB.score_vectors).astype(np.int64)
    s2 = counts.astype(np.int64) @ doubled[:, 0]
    i2 = counts.astype(np.int64) @ doubled[:, 1]
    key = (s2 + 4 * length) * (8 * length + 1) + (i2 + 4 * length)
    order = np.argsort(key, kind="stable")
    sorted_keys = key[order]
    starts = np.concatenate([[0], np.nonzero(np.diff(sorted_keys))[0] + 1, [m]])
    table = (counts[order], starts)
    _INTENSITY_TABLES[length] = table
    return table


def gen_ordered_sentiment_intensity(length, count, mode="uniform_over_scores", seed=0):
    if length < 1:
        raise ParameterError("phrase length must be >= 1")
    _check_mode(mode)
    rng = np.random.default_rng(seed)
    scores = INTENSITY_VOCAB.score_vectors
    phrases = []
    if mode == "uniform_over_scores":
        counts_sorted, starts = _intensity_table(length)
        n_scores = len(starts) - 1
        for _ in range(count):
            g = int(rng.integers(0, n_scores))
            row = int(rng.integers(starts[g], starts[g + 1]))
            word_counts = counts_sorted[row]
            tokens = np.repeat(np.arange(INTENSITY_VOCAB.size), word_counts)
            idx = _permuted(rng, tokens)
            s, i = (np.asarray(word_counts, dtype=float) @ scores)
            phrases.append(Phrase(idx, (float(s), float(i)), intensity_label(s, i)))
    else:
        for _ in range(count):
            idx = tuple(int(i) for i in rng.integers(0, INTENSITY_VOCAB.size, size=length))
            s, i = scores[list(idx)].sum(axis=0)
            phrases.append(Phrase(idx, (float(s), float(i)), intensity_label(s, i)))
    return LabeledDataset(
        grammar="ordered_sentiment_intensity",
        num_classes=5,
        class_names=_STAR_NAMES,
        vocabulary=INTENSITY_VOCAB,
        phrases=phrases,
        sampling_mode=mode,
        params={"length": length, "seed": seed},
    )


# -- multi-label -------------------------------------------------------------

def multilabel_vocab(n_labels: int) -> Vocabulary:
    names, vecs = [], []
    for i in range(n_labels):
        e = np.zeros(n_labels)
        e[i] = 1.0
        names += [f"good_{i + 1}", f"bad_{i + 1}"]
        vecs += [e, -e]
    names.append("neutral")
    vecs.append(np.zeros(n_labels))
    return Vocabulary(tuple(names), np.vstack(vecs))


def multilabel_label(score) -> tuple:
    """Per-coordinate flags: positive_i iff s_i >= 0."""
    return tuple(int(s >= 0) for s in score)


def gen_multilabel(n_labels, length, count, seed=0):
    if n_labels < 1:
        raise ParameterError("multilabel grammar needs at least 1 label")
    if length < 1:
        raise ParameterError("phrase length must be >= 1")
    rng = np.random.default_rng(seed)
    vocab = multilabel_vocab(n_labels)
    phrases = []
    for _ in range(count):
        idx = tuple(int(i) for i in rng.integers(0, vocab.size, size=length))
        score = vocab.score_vectors[list(idx)].sum(axis=0)
        phrases.append(
            Phrase(idx, tuple(float(s) for s in score), multilabel_label(score))
        )
    return LabeledDataset(
        grammar="multilabel",
        num_classes=n_labels,
        class_names=tuple(f"label_{i + 1}" for i in range(n_labels)),
        vocabulary=vocab,
        phrases=phrases,
        sampling_mode="iid_words",
        multilabel=True,
        params={"length": length, "seed": seed},
    )


GENERATORS = {
    "categorical": gen_categorical,
    "ordered_sentiment": gen_ordered_sentiment,
    "ordered_sentiment_intensity": gen_ordered_sentiment_intensity,
    "multilabel": gen_multilabel,
}


def generate(grammar, n_classes, length, count, mode, seed) -> LabeledDataset:
    """Dispatch to a generator by grammar name."""
    if grammar == "categorical":
        return gen_categorical(n_classes, length, count, mode, seed)
    if grammar == "ordered_sentiment":
        return gen_ordered_sentiment(n_classes, length, count, mode, seed)
    if grammar == "ordered_sentiment_intensity":
        return gen_ordered_sentiment_intensity(length, count, mode, seed)
    if grammar == "multilabel":
        return gen_multilabel(n_classes, length, count, seed)
    raise ParameterError(f"unknown grammar {grammar!r}")


def shuffle_phrase(phrase: Phrase, rng) -> Phrase:
    """Permute token order; the score and label are order-free."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return Phrase(_permuted(rng, np.array(phrase.token_indices)), phrase.score, phrase.label)
