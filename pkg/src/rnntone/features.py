"""Per-syllable observation sequences from utterance-level pitch frames.

Frames are stored as ``(T, 3)`` float64 arrays with columns
``(log_pitch_mvn, delta_log_pitch, nccf_warped)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

FRAME_DIM = 3
N_TONES = 5
SCOPES = ("final_only", "full_syllable")


class CorpusFormatError(ValueError):
    """Malformed corpus text or an utterance that violates its invariants."""


@dataclass(frozen=True)
class SyllableSegment:
    start_frame: int
    final_start_frame: int
    end_frame: int
    tone: int

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame

    def check(self) -> None:
        if not self.start_frame <= self.final_start_frame < self.end_frame:
            raise ValueError(
                f"segment needs start <= final_start < end, got "
                f"{self.start_frame}, {self.final_start_frame}, {self.end_frame}"
            )
        if self.start_frame < 0:
            raise ValueError(f"negative start frame {self.start_frame}")
        if not 0 <= self.tone < N_TONES:
            raise ValueError(f"tone label {self.tone} outside 0..4")


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    frames: np.ndarray
    syllables: list[SyllableSegment] = field(default_factory=list)

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float64).reshape(-1, FRAME_DIM)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def validate(self) -> None:
        """Raise ValueError if frames or segments break the utterance invariants."""
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"utterance {self.utt_id}: non-finite frame value")
        prev_end = 0
        for k, seg in enumerate(self.syllables):
            seg.check()
            if seg.start_frame < prev_end:
                raise ValueError(f"utterance {self.utt_id}: syllable {k} overlaps or is out of order")
            if seg.end_frame > self.num_frames:
                raise ValueError(
                    f"utterance {self.utt_id}: syllable {k} ends at {seg.end_frame} "
                    f"past {self.num_frames} frames"
                )
            prev_end = seg.end_frame


@dataclass(frozen=True)
class SpliceConfig:
    radius: int = 0

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("splice radius must be non-negative")

    @property
    def output_dim(self) -> int:
        return FRAME_DIM * (2 * self.radius + 1)


@dataclass(frozen=True)
class DurationStats:
    mean: float
    std: float


def normalize_by_speaker(corpus: Sequence[Utterance]) -> list[Utterance]:
    """Zero-mean, unit-variance frames per speaker and per dimension.

    Statistics are two-pass population moments over all of a speaker's frames.
    A dimension that is constant for a speaker maps to zeros.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    by_speaker: dict[str, list[int]] = {}
    for i, utt in enumerate(corpus):
        by_speaker.setdefault(utt.speaker_id, []).append(i)

    out: list[Utterance | None] = [None] * len(corpus)
    for spk, members in by_speaker.items():
        stacked = np.concatenate([corpus[i].frames for i in members], axis=0)
        if stacked.shape[0] == 0:
            raise ValueError(f"speaker {spk!r} has no frames")
        mean = stacked.mean(axis=0)
        std = np.sqrt(((stacked - mean) ** 2).mean(axis=0))
        constant = std <= 1e-12
        scale = np.where(constant, 1.0, std)
        for i in members:
            normed = (corpus[i].frames - mean) / scale
            normed[:, constant] = 0.0
            out[i] = replace(corpus[i], frames=normed)
    return out


def splice(frames: np.ndarray, cfg: SpliceConfig) -> np.ndarray:
    """Stack each frame with ``radius`` neighbours on both sides.

    Out-of-range neighbours repeat the edge frame.  Row ``t`` of the result is
    ``frames[t - r], ..., frames[t + r]`` concatenated, left context first.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("splice needs a non-empty (T, d) frame array")
    r = cfg.radius
    if r == 0:
        return frames.copy()
    T = frames.shape[0]
    padded = np.pad(frames, ((r, r), (0, 0)), mode="edge")
    return np.concatenate([padded[k:k + T] for k in range(2 * r + 1)], axis=1)


def _segment_bounds(seg: SyllableSegment, scope: str) -> tuple[int, int]:
    if scope == "final_only":
        return seg.final_start_frame, seg.end_frame
    if scope == "full_syllable":
        return seg.start_frame, seg.end_frame
    raise ValueError(f"unknown segment scope {scope!r}; expected one of {SCOPES}")


def utterance_segments(utt: Utterance, scope: str, cfg: SpliceConfig) -> list[np.ndarray]:
    """All syllable observation sequences of one utterance (spliced once, then sliced)."""
    spliced = splice(utt.frames, cfg) if utt.num_frames else np.empty((0, cfg.output_dim))
    out = []
    for seg in utt.syllables:
        lo, hi = _segment_bounds(seg, scope)
        out.append(spliced[lo:hi])
    return out


def extract_segment(utt: Utterance, syllable_index: int, scope: str, cfg: SpliceConfig) -> np.ndarray:
    if not 0 <= syllable_index < len(utt.syllables):
        raise IndexError(
            f"syllable index {syllable_index} out of range for {len(utt.syllables)} syllables"
        )
    lo, hi = _segment_bounds(utt.syllables[syllable_index], scope)
    return splice(utt.frames, cfg)[lo:hi]


def compute_duration_stats(corpus: Iterable[Utterance]) -> DurationStats:
    durations = np.array([seg.duration for utt in corpus for seg in utt.syllables], dtype=np.float64)
    if durations.size == 0:
        raise ValueError("no syllables to compute duration statistics from")
    mean = durations.mean()
    return DurationStats(mean=float(mean), std=float(np.sqrt(((durations - mean) ** 2).mean())))


def duration_vector(utt: Utterance, syllable_index: int, stats: DurationStats) -> np.ndarray:
    """z-scored durations of the preceding, current and succeeding syllables.

    A missing neighbour at an utterance edge contributes 0.
    """
    if not stats.std > 0:
        raise ValueError("degenerate duration statistics")
    syls = utt.syllables
    if not 0 <= syllable_index < len(syls):
        raise IndexError(f"syllable index {syllable_index} out of range")
    out = np.zeros(3)
    for slot, k in enumerate((syllable_index - 1, syllable_index, syllable_index + 1)):
        if 0 <= k < len(syls):
            out[slot] = (syls[k].duration - stats.mean) / stats.std
    return out


# -- corpus text format ------------------------------------------------------

def write_corpus(corpus: Iterable[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for utt in corpus:
            fh.write(f"U {utt.utt_id} {utt.speaker_id} {utt.num_frames} {len(utt.syllables)}\n")
            for a, b, c in utt.frames:
                fh.write(f"F {a:.9g} {b:.9g} {c:.9g}\n")
            for seg in utt.syllables:
                fh.write(f"S {seg.start_frame} {seg.final_start_frame} {seg.end_frame} {seg.tone}\n")


def _records(lines):
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text and not text.startswith("#"):
            yield lineno, text.split()


def parse_corpus(lines: Iterable[str]) -> list[Utterance]:
    """Parse corpus text; every error message starts with ``line N:``."""
    corpus: list[Utterance] = []
    it = _records(lines)
    last_line = 0

    def take(kind, nfields):
        nonlocal last_line
        try:
            lineno, parts = next(it)
        except StopIteration:
            raise CorpusFormatError(
                f"line {last_line + 1}: unexpected end of file, expected {kind!r} record"
            ) from None
        last_line = lineno
        if parts[0] != kind or len(parts) != nfields + 1:
            raise CorpusFormatError(
                f"line {lineno}: expected {kind!r} record with {nfields} fields, got {' '.join(parts)!r}"
            )
        return lineno, parts[1:]

    while True:
        try:
            lineno, parts = next(it)
        except StopIteration:
            break
        last_line = lineno
        if parts[0] != "U" or len(parts) != 5:
            raise CorpusFormatError(f"line {lineno}: expected 'U' header, got {' '.join(parts)!r}")
        utt_id, spk = parts[1], parts[2]
        try:
            n_frames, n_syl = int(parts[3]), int(parts[4])
        except ValueError:
            raise CorpusFormatError(f"line {lineno}: frame and syllable counts must be integers") from None
        if n_frames < 0 or n_syl < 0:
            raise CorpusFormatError(f"line {lineno}: negative count")
        header_line = lineno
        frames = np.empty((n_frames, FRAME_DIM))
        for t in range(n_frames):
            ln, vals = take("F", 3)
            try:
                frames[t] = [float(v) for v in vals]
            except ValueError:
                raise CorpusFormatError(f"line {ln}: non-numeric frame value") from None
            if not np.all(np.isfinite(frames[t])):
                raise CorpusFormatError(f"line {ln}: non-finite frame value")
        syllables = []
        prev_end = 0
        for _ in range(n_syl):
            ln, vals = take("S", 4)
            try:
                seg = SyllableSegment(*(int(v) for v in vals))
            except ValueError:
                raise CorpusFormatError(f"line {ln}: syllable fields must be integers") from None
            try:
                seg.check()
            except ValueError as exc:
                raise CorpusFormatError(f"line {ln}: {exc}") from None
            if seg.start_frame < prev_end:
                raise CorpusFormatError(f"line {ln}: syllable overlaps or precedes the previous one")
            if seg.end_frame > n_frames:
                raise CorpusFormatError(
                    f"line {ln}: syllable ends at frame {seg.end_frame} beyond {n_frames} frames"
                )
            prev_end = seg.end_frame
            syllables.append(seg)
        if not syllables and n_frames == 0:
            raise CorpusFormatError(f"line {header_line}: utterance {utt_id} is empty")
        corpus.append(Utterance(utt_id, spk, frames, syllables))
    return corpus


def read_corpus(path) -> list[Utterance]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)
