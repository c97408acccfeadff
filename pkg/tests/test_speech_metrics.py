"""
Tests for DTW alignment, MCD, FFE, cosine similarity and WER.
"""
from functools import lru_cache

import editdistance
import numpy as np
import pytest

from models.errors import ContractViolation, DimensionError, UndefinedSimilarityError
from models.evaluation_inputs import F0Track
from services.speech_metrics import (
    MCD_CONSTANT,
    average_cosine_similarity,
    corpus_wer,
    cosine_similarity,
    dtw_align,
    edit_operations,
    ffe,
    mcd,
    wer,
)


def exhaustive_path_cost(a, b):
    """Cheapest monotone path cost by enumerating every step sequence."""
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)

    @lru_cache(maxsize=None)
    def paths_from(i, j):
        if (i, j) == (len(a) - 1, len(b) - 1):
            return [cost[i, j]]
        totals = []
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < len(a) and j + dj < len(b):
                totals.extend(cost[i, j] + rest for rest in paths_from(i + di, j + dj))
        return totals

    return min(paths_from(0, 0))


def reachable_edit_counts(ref, hyp):
    """Every (substitutions, deletions, insertions) triple some alignment of ref and hyp produces."""

    @lru_cache(maxsize=None)
    def reach(i, j):
        if i == 0:
            return frozenset({(0, 0, j)})
        if j == 0:
            return frozenset({(0, i, 0)})
        sub = int(ref[i - 1] != hyp[j - 1])
        out = {(s + sub, d, n) for s, d, n in reach(i - 1, j - 1)}
        out.update((s, d + 1, n) for s, d, n in reach(i - 1, j))
        out.update((s, d, n + 1) for s, d, n in reach(i, j - 1))
        return frozenset(out)

    return reach(len(ref), len(hyp))


class TestDtwAlign:

    def test_identical_sequences(self):
        x = np.random.default_rng(0).standard_normal((4, 3))
        alignment = dtw_align(x, x)
        assert alignment.path == [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert alignment.cost == 0.0

    def test_repetition_is_absorbed(self):
        x = np.array([[1.0, 2.0, 3.0]])
        alignment = dtw_align(np.vstack([x, x]), x)
        assert alignment.path == [(0, 0), (1, 0)]
        assert alignment.cost == 0.0

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(1)
        for n in range(1, 6):
            for m in range(1, 6):
                a, b = rng.standard_normal((n, 3)), rng.standard_normal((m, 3))
                alignment = dtw_align(a, b)
                assert alignment.cost == pytest.approx(exhaustive_path_cost(a, b), rel=1e-9)
                assert alignment.path[0] == (0, 0) and alignment.path[-1] == (n - 1, m - 1)

    def test_path_cost_is_the_sum_along_the_path(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
        alignment = dtw_align(a, b)
        along = sum(float(np.sum((a[i] - b[j]) ** 2)) for i, j in alignment.path)
        assert alignment.cost == pytest.approx(along, rel=1e-12)

    def test_empty_input(self):
        with pytest.raises(ContractViolation):
            dtw_align(np.zeros((0, 3)), np.zeros((2, 3)))


class TestMcd:

    def test_identical(self):
        x = np.random.default_rng(3).standard_normal((6, 5))
        assert mcd(x, x) == 0.0

    def test_single_frame(self):
        value = mcd([[1.0, 0.0]], [[0.0, 0.0]], skip_c0=False)
        assert value == pytest.approx(10.0 / np.log(10.0) * np.sqrt(2.0), rel=1e-12)
        assert value == pytest.approx(6.1418, abs=1e-4)

    def test_c0_is_skipped_by_default(self):
        assert mcd([[5.0, 1.0]], [[0.0, 1.0]]) == 0.0

    def test_sign_flip(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((5, 4)), rng.standard_normal((7, 4))
        assert mcd(-a, -b) == pytest.approx(mcd(a, b), rel=1e-12)

    def test_symmetric_for_equal_lengths(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rng.standard_normal((6, 5)), rng.standard_normal((6, 5))
            assert mcd(a, b) == pytest.approx(mcd(b, a), rel=1e-12, abs=1e-12)

    def test_equal_lengths_on_the_diagonal(self):
        # one perturbed frame keeps the diagonal path
        a = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
        b = a.copy()
        b[1, 1] = 2.1
        expected = MCD_CONSTANT * 0.1 / 3
        assert mcd(a, b) == pytest.approx(expected, rel=1e-9)

    def test_order_mismatch(self):
        with pytest.raises(DimensionError):
            mcd(np.zeros((3, 4)), np.zeros((3, 5)))


class TestFfe:

    def test_identical(self):
        track = F0Track([0.0, 120.0, 130.0, 0.0])
        assert ffe(track, track) == 0.0

    def test_voicing_error(self):
        assert ffe(F0Track([100.0]), F0Track([0.0])) == 1.0

    def test_gross_pitch_threshold(self):
        assert ffe(F0Track([100.0, 100.0]), F0Track([130.0, 110.0])) == 0.5

    def test_adding_a_voicing_error_never_decreases(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            ref = np.where(rng.random(20) < 0.3, 0.0, rng.uniform(80, 300, 20))
            syn = np.where(rng.random(20) < 0.3, 0.0, ref * rng.uniform(0.7, 1.3, 20))
            base = ffe(F0Track(ref), F0Track(syn))
            frame = int(rng.integers(20))
            flipped = syn.copy()
            flipped[frame] = 150.0 if ref[frame] == 0 else 0.0
            assert ffe(F0Track(ref), F0Track(flipped)) >= base

    def test_frame_count_mismatch(self):
        with pytest.raises(DimensionError):
            ffe(F0Track([100.0, 0.0]), F0Track([100.0]))


class TestCosineSimilarity:

    def test_examples(self):
        assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0, abs=1e-15)
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.70711, abs=1e-5)

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a, b = rng.standard_normal(8), rng.standard_normal(8)
            alpha, beta = rng.uniform(0.01, 100, 2)
            assert cosine_similarity(alpha * a, beta * b) == pytest.approx(cosine_similarity(a, b), abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(UndefinedSimilarityError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_average(self):
        pairs = [([1.0, 0.0], [1.0, 0.0]), ([1.0, 0.0], [0.0, 1.0])]
        assert average_cosine_similarity(pairs) == 0.5


class TestWer:

    def test_identical(self):
        assert wer("the cat sat".split(), "the cat sat".split()).rate == 0.0

    def test_substitution_and_deletion(self):
        result = wer("a b c d".split(), "a x c".split())
        assert result.rate == 0.5
        assert (result.substitutions, result.deletions, result.insertions) == (1, 1, 0)

    def test_empty_hypothesis(self):
        result = wer("a b c".split(), [])
        assert result.rate == 1.0
        assert result.deletions == 3

    def test_empty_reference(self):
        with pytest.raises(ContractViolation):
            wer([], ["a"])

    def test_substitutions_preferred_on_ties(self):
        # two substitutions or one deletion plus one insertion
        result = wer(["a", "b"], ["b", "a"])
        assert (result.substitutions, result.deletions, result.insertions) == (2, 0, 0)

    def test_substitutions_preferred_over_extra_insertions(self):
        # cost 5 either as (1, 1, 3) or as (3, 0, 2)
        assert edit_operations("a b b a".split(), "b c c a a b".split()) == (3, 0, 2)

    def test_tie_rule_matches_exhaustive_alignments(self):
        # GIVEN: short random pairs over a 3-token vocabulary
        rng = np.random.default_rng(9)
        for _ in range(400):
            ref = [str(t) for t in rng.choice(["a", "b", "c"], size=int(rng.integers(1, 7)))]
            hyp = [str(t) for t in rng.choice(["a", "b", "c"], size=int(rng.integers(0, 8)))]

            # WHEN: picking the cheapest alignment with fewest insertions by enumeration
            expected = min(reachable_edit_counts(ref, hyp), key=lambda t: (sum(t), t[2]))

            # THEN: the dynamic program agrees
            assert edit_operations(ref, hyp) == expected, (ref, hyp)

    def test_k_substitutions(self):
        ref = "one two three four five six".split()
        for k in range(len(ref) + 1):
            hyp = [f"x{i}" if i < k else word for i, word in enumerate(ref)]
            assert wer(ref, hyp).rate == pytest.approx(k / len(ref), abs=1e-15)

    def test_edit_count_matches_levenshtein(self):
        # GIVEN: 500 random token sequence pairs over a small vocabulary
        rng = np.random.default_rng(8)
        vocabulary = ["a", "b", "c", "d", "e"]
        for _ in range(500):
            ref = [str(t) for t in rng.choice(vocabulary, size=int(rng.integers(1, 12)))]
            hyp = [str(t) for t in rng.choice(vocabulary, size=int(rng.integers(0, 12)))]

            # WHEN: aligning
            result = wer(ref, hyp)

            # THEN: the total edit count is the Levenshtein distance
            distance = editdistance.eval(ref, hyp)
            assert result.substitutions + result.deletions + result.insertions == distance
            assert result.rate == pytest.approx(distance / len(ref), abs=1e-15)

    def test_corpus_totals(self):
        result = corpus_wer([("a b".split(), "a b".split()), ("c d e f".split(), "c e f g".split())])
        assert result.reference_length == 6
        assert result.rate == pytest.approx(2 / 6, abs=1e-15)
        assert result.as_dict()["wer"] == result.rate
