import itertools
import json
from math import comb

import numpy as np
import pytest

from slowpoints import synth_data
from slowpoints.errors import ParameterError


def phrase_from_tokens(ds, names):
    idx = tuple(ds.vocabulary.tokens.index(t) for t in names)
    return np.asarray(ds.vocabulary.score_vectors[list(idx)]).sum(axis=0)


# Independent re-implementations of each printed labeling rule.

def categorical_rule(score):
    best, arg = -np.inf, None
    for i, s in enumerate(score):
        if s > best:
            best, arg = s, i
    return arg


def ordered_rule(n, length, s):
    if n == 2:
        return 1 if s >= 0 else 0
    if n == 3:
        if s >= length / 3:
            return 2
        if s <= -length / 3:
            return 0
        return 1
    edges = [-3 * length / 5, -length / 5, length / 5, 3 * length / 5]
    if s >= edges[3]:
        return 4
    if s >= edges[2]:
        return 3
    if s <= edges[0]:
        return 0
    if s <= edges[1]:
        return 1
    return 2


def intensity_rule(s, i):
    if i < 0 and abs(i) > abs(s):
        return 2
    if i >= 0 and s > 0:
        return 4
    if i < 0 and s > 0:
        return 3
    if i < 0 and s < 0:
        return 1
    return 0


def multilabel_rule(score):
    return tuple(1 if s >= 0 else 0 for s in score)


class TestCategorical:
    def test_direct_rule(self):
        ds = synth_data.gen_categorical(3, 4, 1, seed=0)
        score = phrase_from_tokens(ds, ["evid_2", "neutral", "evid_2", "evid_1"])
        assert tuple(score) == (1, 2, 0)
        assert synth_data.categorical_label(score) == 1  # class_2

    def test_tie_goes_to_smallest_index(self):
        assert synth_data.categorical_label([1, 1, 0]) == 0  # class_1

    def test_scores_and_labels_consistent(self):
        for mode in synth_data.MODES:
            ds = synth_data.gen_categorical(4, 12, 300, mode=mode, seed=1)
            for p in ds.phrases:
                recomputed = np.asarray(
                    ds.vocabulary.score_vectors[list(p.token_indices)]
                ).sum(axis=0)
                assert tuple(recomputed) == p.score
                assert categorical_rule(p.score) == p.label

    def test_uniform_over_scores_histogram(self):
        n, length, draws = 3, 6, 100000
        ds = synth_data.gen_categorical(n, length, draws, mode="uniform_over_scores", seed=2)
        # Oracle: enumerate the achievable score set directly.
        achievable = sorted(
            s for s in itertools.product(range(length + 1), repeat=n) if sum(s) <= length
        )
        assert len(achievable) == comb(length + n, n)
        counts = {s: 0 for s in achievable}
        for p in ds.phrases:
            counts[p.score] += 1
        assert all(v > 0 for v in counts.values())
        expected = draws / len(achievable)
        sigma = np.sqrt(draws * (1 / len(achievable)) * (1 - 1 / len(achievable)))
        outliers = sum(1 for v in counts.values() if abs(v - expected) > 3 * sigma)
        assert outliers <= max(2, int(0.01 * len(achievable)))
        chi2 = sum((v - expected) ** 2 / expected for v in counts.values())
        # chi-square critical value at alpha=0.001 for 83 dof.
        dof = len(achievable) - 1
        crit = dof + 3.09 * np.sqrt(2 * dof) + 2 * 3.09**2 / 3
        assert chi2 < crit

    def test_phrase_length_and_vocab(self):
        ds = synth_data.gen_categorical(5, 17, 20, seed=3)
        assert all(len(p) == 17 for p in ds.phrases)
        assert ds.vocabulary.tokens == ("evid_1", "evid_2", "evid_3", "evid_4", "evid_5", "neutral")

    def test_bad_params(self):
        with pytest.raises(ParameterError):
            synth_data.gen_categorical(1, 5, 1)
        with pytest.raises(ParameterError):
            synth_data.gen_categorical(3, 0, 1)
        with pytest.raises(ParameterError):
            synth_data.gen_categorical(3, 5, 1, mode="bogus")


class TestOrderedSentiment:
    def test_three_class_boundaries(self):
        # L=9 puts the threshold exactly at score 3.
        assert synth_data.ordered_label(3, 9, 3) == 2    # positive
        assert synth_data.ordered_label(3, 9, -3) == 0   # negative
        assert synth_data.ordered_label(3, 9, 2) == 1    # neutral
        assert synth_data.ordered_label(3, 9, -2) == 1

    def test_five_class_center(self):
        assert synth_data.ordered_label(5, 5, 0) == 2    # 0 in (-L/5, L/5)
        assert synth_data.ordered_label(5, 5, 1) == 3    # boundary goes outward
        assert synth_data.ordered_label(5, 5, -1) == 1
        assert synth_data.ordered_label(5, 5, 3) == 4
        assert synth_data.ordered_label(5, 5, -3) == 0

    def test_two_class_balance_and_zero_convention(self):
        length, draws = 10, 100000
        ds = synth_data.gen_ordered_sentiment(2, length, draws, seed=4)
        pos = sum(1 for p in ds.phrases if p.label == 1)
        # Scores are uniform over the 2L+1 integers; s=0 goes to positive.
        p_pos = (length + 1) / (2 * length + 1)
        sigma = np.sqrt(draws * p_pos * (1 - p_pos))
        assert abs(pos - draws * p_pos) < 3 * sigma
        assert all(p.label == 1 for p in ds.phrases if p.score[0] == 0)

    def test_uniform_over_scores(self):
        length, draws = 7, 60000
        ds = synth_data.gen_ordered_sentiment(3, length, draws, seed=5)
        counts = np.zeros(2 * length + 1, dtype=int)
        for p in ds.phrases:
            counts[p.score[0] + length] += 1
        expected = draws / (2 * length + 1)
        sigma = np.sqrt(expected * (1 - 1 / (2 * length + 1)))
        assert np.abs(counts - expected).max() < 4 * sigma

    def test_labels_and_scores_consistent(self):
        for n in (2, 3, 5):
            ds = synth_data.gen_ordered_sentiment(n, 12, 400, seed=6)
            for p in ds.phrases:
                s = sum(ds.vocabulary.score_vectors[i][0] for i in p.token_indices)
                assert s == p.score[0]
                assert ordered_rule(n, 12, s) == p.label

    def test_unsupported_n(self):
        with pytest.raises(ParameterError):
            synth_data.gen_ordered_sentiment(4, 10, 1)


class TestIntensity:
    def test_paper_rule_cases(self):
        ds = synth_data.gen_ordered_sentiment_intensity(2, 1, seed=0)
        # okay -> (0, -2): three stars.
        assert synth_data.intensity_label(0, -2) == 2
        # awesome + good -> (3, 0.5): five stars.
        s, i = phrase_from_tokens(ds, ["awesome", "good"])
        assert (s, i) == (3.0, 0.5)
        assert synth_data.intensity_label(s, i) == 4
        # bad + bad -> (-2, -1): two stars.
        s, i = phrase_from_tokens(ds, ["bad", "bad"])
        assert (s, i) == (-2.0, -1.0)
        assert synth_data.intensity_label(s, i) == 1

    def test_word_scores_match_ledger(self):
        v = synth_data.INTENSITY_VOCAB
        table = {
            "awesome": (2, 1), "good": (1, -0.5), "okay": (0, -2),
            "bad": (-1, -0.5), "awful": (-2, 1), "neutral": (0, 0),
        }
        for token, expect in table.items():
            assert tuple(v.score_vectors[v.index(token)]) == expect

    def test_labels_consistent(self):
        for mode in synth_data.MODES:
            ds = synth_data.gen_ordered_sentiment_intensity(9, 400, mode=mode, seed=7)
            for p in ds.phrases:
                sv = np.asarray(ds.vocabulary.score_vectors[list(p.token_indices)]).sum(axis=0)
                assert tuple(sv) == p.score
                assert intensity_rule(*p.score) == p.label

    def test_uniform_over_scores_small_length(self):
        length, draws = 4, 80000
        ds = synth_data.gen_ordered_sentiment_intensity(length, draws, seed=8)
        # Oracle: enumerate all multisets of 6 words and group by score.
        scores = {}
        for counts in itertools.product(range(length + 1), repeat=6):
            if sum(counts) != length:
                continue
            sv = tuple(np.asarray(counts, dtype=float) @ synth_data.INTENSITY_VOCAB.score_vectors)
            scores.setdefault(sv, 0)
        assert len(scores) > 10
        for p in ds.phrases:
            scores[p.score] += 1
        expected = draws / len(scores)
        chi2 = sum((v - expected) ** 2 / expected for v in scores.values())
        dof = len(scores) - 1
        crit = dof + 3.09 * np.sqrt(2 * dof) + 2 * 3.09**2 / 3
        assert chi2 < crit

    def test_multiset_realization_uniform_within_score(self):
        # Enumerate every multiset of length 4 and find the realizations of
        # score (0, -2); the generator must hit each equally often.
        length = 4
        target = (0.0, -2.0)
        expected_multisets = set()
        for counts in itertools.product(range(length + 1), repeat=6):
            if sum(counts) != length:
                continue
            sv = tuple(np.asarray(counts, dtype=float) @ synth_data.INTENSITY_VOCAB.score_vectors)
            if sv == target:
                expected_multisets.add(counts)
        assert len(expected_multisets) >= 3
        ds = synth_data.gen_ordered_sentiment_intensity(length, 120000, seed=9)
        combos = {m: 0 for m in expected_multisets}
        for p in ds.phrases:
            if p.score == target:
                counts = tuple(int(np.sum(np.array(p.token_indices) == i)) for i in range(6))
                combos[counts] += 1
        total = sum(combos.values())
        assert total > 500 and all(v > 0 for v in combos.values())
        k = len(expected_multisets)
        for v in combos.values():
            assert abs(v - total / k) < 4 * np.sqrt(total * (1 / k) * (1 - 1 / k))


class TestMultilabel:
    def test_direct_rule(self):
        ds = synth_data.gen_multilabel(2, 3, 1, seed=0)
        score = phrase_from_tokens(ds, ["good_1", "bad_2", "bad_2"])
        assert tuple(score) == (1, -2)
        assert synth_data.multilabel_label(score) == (1, 0)

    def test_zero_score_is_positive(self):
        assert synth_data.multilabel_label((0.0, 0.0)) == (1, 1)

    def test_four_combinations_balanced(self):
        ds = synth_data.gen_multilabel(2, 30, 100000, seed=10)
        counts = {}
        for p in ds.phrases:
            counts[p.label] = counts.get(p.label, 0) + 1
        assert len(counts) == 4
        # P(s_i >= 0) is slightly above 1/2 (zero counts as positive), and the
        # two coordinates are independent; allow 3 sigma around the exact value.
        from math import factorial

        length = 30
        p_word = 1.0 / 5.0
        # Exact marginal via the trinomial distribution of (good_i, bad_i).
        p_pos = 0.0
        for g in range(length + 1):
            for b in range(length - g + 1):
                if g >= b:
                    p_pos += (
                        factorial(length)
                        / (factorial(g) * factorial(b) * factorial(length - g - b))
                        * p_word**g * p_word**b * (1 - 2 * p_word) ** (length - g - b)
                    )
        for label, expect_p in (
            ((1, 1), p_pos * p_pos),
            ((0, 0), (1 - p_pos) * (1 - p_pos)),
            ((1, 0), p_pos * (1 - p_pos)),
            ((0, 1), (1 - p_pos) * p_pos),
        ):
            sigma = np.sqrt(100000 * expect_p * (1 - expect_p))
            assert abs(counts[label] - 100000 * expect_p) < 3 * sigma

    def test_labels_consistent(self):
        ds = synth_data.gen_multilabel(3, 10, 300, seed=11)
        for p in ds.phrases:
            sv = np.asarray(ds.vocabulary.score_vectors[list(p.token_indices)]).sum(axis=0)
            assert tuple(sv) == p.score
            assert multilabel_rule(sv) == p.label


class TestShuffle:
    def test_single_token_unchanged(self):
        p = synth_data.Phrase((2,), (1.0,), 0)
        assert synth_data.shuffle_phrase(p, 0).token_indices == (2,)

    def test_label_and_multiset_invariant(self):
        ds = synth_data.gen_categorical(3, 15, 1000, seed=12)
        rng = np.random.default_rng(13)
        for p in ds.phrases:
            q = synth_data.shuffle_phrase(p, rng)
            assert sorted(q.token_indices) == sorted(p.token_indices)
            assert q.label == p.label and q.score == p.score


class TestExport:
    def test_jsonl_round_trip(self, tmp_path):
        for ds in (
            synth_data.gen_categorical(3, 8, 25, seed=14),
            synth_data.gen_ordered_sentiment_intensity(6, 25, seed=15),
            synth_data.gen_multilabel(2, 7, 25, seed=16),
        ):
            path = tmp_path / f"{ds.grammar}.jsonl"
            ds.save_jsonl(path)
            back = synth_data.load_jsonl(path)
            assert back.grammar == ds.grammar
            assert back.class_names == ds.class_names
            assert back.vocabulary.tokens == ds.vocabulary.tokens
            assert len(back) == len(ds)
            for a, b in zip(ds.phrases, back.phrases):
                assert a.token_indices == b.token_indices
                assert a.label == b.label
                assert tuple(float(v) for v in a.score) == b.score

    def test_records_are_plain_json_lines(self, tmp_path):
        ds = synth_data.gen_categorical(2, 5, 3, seed=17)
        path = tmp_path / "data.jsonl"
        ds.save_jsonl(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        rec = json.loads(lines[1])
        assert set(rec) == {"tokens", "score", "label"}
