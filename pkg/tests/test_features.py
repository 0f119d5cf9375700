import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnntone.features import (
    CorpusFormatError,
    DurationStats,
    SpliceConfig,
    SyllableSegment,
    Utterance,
    compute_duration_stats,
    duration_vector,
    extract_segment,
    normalize_by_speaker,
    parse_corpus,
    read_corpus,
    splice,
    write_corpus,
)


def _utt(frames, syllables=(), speaker="s1", utt_id="u1"):
    return Utterance(utt_id, speaker, np.asarray(frames, dtype=float), list(syllables))


def _two_pass_stats(rows):
    n = len(rows)
    means = [sum(r[d] for r in rows) / n for d in range(3)]
    var = [sum((r[d] - means[d]) ** 2 for r in rows) / n for d in range(3)]
    return means, var


class TestNormalizeBySpeaker:
    def test_two_frame_example(self):
        out = normalize_by_speaker([_utt([[1, 0, 0], [3, 0, 0]])])
        np.testing.assert_array_equal(out[0].frames, [[-1, 0, 0], [1, 0, 0]])

    def test_already_normalized_is_unchanged(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 3))
        x = (x - x.mean(0)) / x.std(0)
        out = normalize_by_speaker([_utt(x)])
        np.testing.assert_allclose(out[0].frames, x, atol=1e-9, rtol=0)

    def test_per_speaker_statistics_recomputed(self):
        rng = np.random.default_rng(1)
        corpus = [
            _utt(rng.normal(5.0, 2.0, size=(30, 3)), speaker="a", utt_id="a1"),
            _utt(rng.normal(5.0, 2.0, size=(12, 3)), speaker="a", utt_id="a2"),
            _utt(rng.normal(-3.0, 0.5, size=(25, 3)), speaker="b", utt_id="b1"),
        ]
        out = normalize_by_speaker(corpus)
        for spk in ("a", "b"):
            rows = [tuple(r) for u in out if u.speaker_id == spk for r in u.frames]
            means, var = _two_pass_stats(rows)
            assert max(abs(m) for m in means) < 1e-9
            assert max(abs(v - 1.0) for v in var) < 1e-6
        pooled = np.concatenate([u.frames for u in out])
        assert pooled.shape == (67, 3)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        corpus = [_utt(rng.normal(3, 2, size=(20, 3)), speaker=f"s{i % 2}", utt_id=str(i)) for i in range(4)]
        once = normalize_by_speaker(corpus)
        twice = normalize_by_speaker(once)
        for a, b in zip(once, twice):
            np.testing.assert_allclose(a.frames, b.frames, atol=1e-9, rtol=0)

    def test_empty_corpus(self):
        with pytest.raises(ValueError, match="empty corpus"):
            normalize_by_speaker([])

    def test_speaker_without_frames_is_named(self):
        with pytest.raises(ValueError, match="ghost"):
            normalize_by_speaker([_utt(np.zeros((0, 3)), speaker="ghost")])

    def test_input_not_mutated(self):
        u = _utt([[1.0, 2.0, 3.0], [2.0, 2.0, 5.0]])
        before = u.frames.copy()
        normalize_by_speaker([u])
        np.testing.assert_array_equal(u.frames, before)


class TestSplice:
    def test_radius_four_gives_27_dims(self):
        out = splice(np.random.default_rng(0).normal(size=(10, 3)), SpliceConfig(4))
        assert out.shape == (10, 27)
        assert SpliceConfig(4).output_dim == 27

    def test_radius_zero_is_identity(self):
        x = np.random.default_rng(0).normal(size=(6, 3))
        np.testing.assert_array_equal(splice(x, SpliceConfig(0)), x)

    def test_single_frame_repeats(self):
        x = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(splice(x, SpliceConfig(2)), np.tile(x, (1, 5)))

    def test_left_context_first(self):
        x = np.arange(15, dtype=float).reshape(5, 3)
        out = splice(x, SpliceConfig(1))
        np.testing.assert_array_equal(out[2], np.concatenate([x[1], x[2], x[3]]))
        np.testing.assert_array_equal(out[0], np.concatenate([x[0], x[0], x[1]]))
        np.testing.assert_array_equal(out[4], np.concatenate([x[3], x[4], x[4]]))

    def test_empty_input(self):
        with pytest.raises(ValueError):
            splice(np.zeros((0, 3)), SpliceConfig(1))

    @given(T=st.integers(1, 30), r=st.integers(0, 6))
    @settings(max_examples=60, deadline=None)
    def test_length_and_center_block(self, T, r):
        x = np.random.default_rng(T * 7 + r).normal(size=(T, 3))
        out = splice(x, SpliceConfig(r))
        assert out.shape == (T, 3 * (2 * r + 1))
        for t in range(r, T - r):
            np.testing.assert_array_equal(out[t, 3 * r:3 * r + 3], x[t])


class TestExtractSegment:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.utt = _utt(rng.normal(size=(30, 3)),
                        [SyllableSegment(0, 2, 8, 1), SyllableSegment(10, 13, 20, 2), SyllableSegment(20, 25, 30, 4)])

    def test_final_only_length(self):
        assert len(extract_segment(self.utt, 1, "final_only", SpliceConfig(0))) == 7

    def test_full_syllable_length(self):
        assert len(extract_segment(self.utt, 1, "full_syllable", SpliceConfig(0))) == 10

    def test_edge_context_matches_padded_reference(self):
        r = 4
        seg = extract_segment(self.utt, 0, "full_syllable", SpliceConfig(r))
        # Reference: pad the utterance by hand, then read windows directly.
        frames = self.utt.frames
        padded = np.vstack([frames[:1]] * r + [frames] + [frames[-1:]] * r)
        for t in range(8):
            window = padded[t:t + 2 * r + 1].reshape(-1)
            np.testing.assert_array_equal(seg[t], window)

    def test_segment_sees_neighbouring_frames(self):
        seg = extract_segment(self.utt, 1, "final_only", SpliceConfig(2))
        np.testing.assert_array_equal(seg[0, :3], self.utt.frames[11])

    def test_final_is_tail_of_full(self):
        for r in (0, 1, 4):
            for k in range(3):
                full = extract_segment(self.utt, k, "full_syllable", SpliceConfig(r))
                fin = extract_segment(self.utt, k, "final_only", SpliceConfig(r))
                np.testing.assert_array_equal(full[-len(fin):], fin)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            extract_segment(self.utt, 3, "final_only", SpliceConfig(0))

    def test_unknown_scope(self):
        with pytest.raises(ValueError):
            extract_segment(self.utt, 0, "nucleus", SpliceConfig(0))


class TestDurationVector:
    def _utt(self, durations, tones=None):
        syls, f = [], 0
        for k, d in enumerate(durations):
            syls.append(SyllableSegment(f, f, f + d, (tones or [1] * len(durations))[k]))
            f += d
        return _utt(np.zeros((f, 3)), syls)

    def test_all_mean_length(self):
        u = self._utt([10, 10, 10])
        np.testing.assert_array_equal(duration_vector(u, 1, DurationStats(10.0, 2.0)), [0, 0, 0])

    def test_one_std_longer(self):
        u = self._utt([10, 12, 10])
        np.testing.assert_array_equal(duration_vector(u, 1, DurationStats(10.0, 2.0)), [0, 1, 0])

    def test_utterance_edges(self):
        u = self._utt([14, 6])
        np.testing.assert_array_equal(duration_vector(u, 0, DurationStats(10.0, 2.0)), [0, 2, -2])
        np.testing.assert_array_equal(duration_vector(u, 1, DurationStats(10.0, 2.0)), [2, -2, 0])

    def test_degenerate_stats(self):
        with pytest.raises(ValueError, match="degenerate duration statistics"):
            duration_vector(self._utt([5]), 0, DurationStats(5.0, 0.0))

    def test_tone_relabel_invariance(self):
        a = self._utt([7, 9, 13], tones=[0, 1, 2])
        b = self._utt([7, 9, 13], tones=[4, 3, 3])
        stats = compute_duration_stats([a])
        for k in range(3):
            np.testing.assert_array_equal(duration_vector(a, k, stats), duration_vector(b, k, stats))

    def test_stats_population_moments(self):
        stats = compute_duration_stats([self._utt([4, 8]), self._utt([6])])
        assert stats.mean == pytest.approx(6.0)
        assert stats.std == pytest.approx(np.sqrt(8 / 3))


HAND_WRITTEN = """\
# two syllables, one utterance
U utt_a spk7 5 2
F 0.5 -0.25 0.9
F 1 0 0.85
F 1.5 0.5 0.8
F 2 0.5 0.75
F 2.5 0.5 0.7
S 0 1 3 2
S 3 3 5 0
"""


class TestCorpusText:
    def test_hand_written_file(self):
        corpus = parse_corpus(HAND_WRITTEN.splitlines())
        assert len(corpus) == 1
        u = corpus[0]
        assert (u.utt_id, u.speaker_id, u.num_frames) == ("utt_a", "spk7", 5)
        np.testing.assert_array_equal(u.frames[0], [0.5, -0.25, 0.9])
        np.testing.assert_array_equal(u.frames[4], [2.5, 0.5, 0.7])
        assert u.syllables == [SyllableSegment(0, 1, 3, 2), SyllableSegment(3, 3, 5, 0)]

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        corpus = [_utt(rng.normal(size=(12, 3)), [SyllableSegment(0, 3, 6, 1), SyllableSegment(6, 7, 12, 3)],
                       speaker=f"s{i}", utt_id=f"u{i}") for i in range(3)]
        path = tmp_path / "c.txt"
        write_corpus(corpus, path)
        back = read_corpus(path)
        assert [(u.utt_id, u.speaker_id, u.syllables) for u in back] == \
            [(u.utt_id, u.speaker_id, u.syllables) for u in corpus]
        for a, b in zip(corpus, back):
            np.testing.assert_allclose(a.frames, b.frames, atol=1e-7, rtol=0)

    def test_truncated_file_names_line(self):
        lines = HAND_WRITTEN.splitlines()[:-1]
        with pytest.raises(CorpusFormatError, match=r"^line 9:.*end of file"):
            parse_corpus(lines)

    @pytest.mark.parametrize("bad, line", [
        ("S 2 1 3 2", 8),      # final_start before start
        ("S 0 3 3 2", 8),      # empty final part
        ("S 0 1 3 7", 8),      # tone out of range
        ("S 0 1 9 2", 8),      # past the last frame
    ])
    def test_invariant_violations(self, bad, line):
        lines = HAND_WRITTEN.splitlines()
        lines[7] = bad
        with pytest.raises(CorpusFormatError, match=rf"^line {line}:"):
            parse_corpus(lines)

    def test_overlapping_syllables(self):
        lines = HAND_WRITTEN.splitlines()
        lines[8] = "S 2 3 5 0"
        with pytest.raises(CorpusFormatError, match=r"^line 9:.*overlap"):
            parse_corpus(lines)

    def test_non_numeric_frame(self):
        lines = HAND_WRITTEN.splitlines()
        lines[3] = "F 1 zero 0.85"
        with pytest.raises(CorpusFormatError, match=r"^line 4:"):
            parse_corpus(lines)
