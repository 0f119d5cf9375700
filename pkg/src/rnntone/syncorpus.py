"""Deterministic synthetic Mandarin-like tone corpus.

Each syllable is an onset region (first 30% of its frames) followed by a tone
template resampled over the remaining frames.  The onset glides from a blend
of the previous syllable's final pitch into the template's starting value, so
neighbouring tones leave a trace in each other's observations.

Two optional effects make neighbours and syllable onsets matter more, as in
real speech.  A slowly drifting pitch register (AR(1) across the syllables of
an utterance) shifts whole syllables, so a syllable's pitch is best read
relative to its neighbours.  The annotated final boundary is jittered around
the true onset boundary, as with an imperfect forced alignment.  Setting
``register_drift_std = 0`` and ``boundary_jitter_frames = 0`` removes both.

Every utterance is generated from its own ``(seed, split, index)`` stream.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from rnntone.config import check_known
from rnntone.features import N_TONES, SyllableSegment, Utterance

# Reference per-tone training counts (thousands) for tones 0..4; the default priors.
REFERENCE_TRAIN_COUNTS = (60.4, 219.9, 234.7, 172.5, 359.7)
DEFAULT_TONE_PRIORS = tuple(round(c / sum(REFERENCE_TRAIN_COUNTS), 3) for c in REFERENCE_TRAIN_COUNTS)

ONSET_FRACTION = 0.3
MIN_DURATION = 4
NEUTRAL_DURATION_SCALE = 0.5
VOICED_NCCF = 0.9


def tone_template(tone: int, u):
    """Normalized log-pitch of ``tone`` at relative time ``u`` in [0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    if tone == 0:
        return np.zeros_like(u)
    if tone == 1:
        return np.full_like(u, 0.8)
    if tone == 2:
        return -0.3 + 1.0 * u
    if tone == 3:
        return np.where(u <= 0.5, 0.1 - 1.4 * u, -0.6 + 1.6 * (u - 0.5))
    if tone == 4:
        return 0.8 - 1.3 * u
    raise ValueError(f"tone {tone} outside 0..4")


@dataclass(frozen=True)
class GeneratorSpec:
    n_train_syllables: int = 5000
    n_test_syllables: int = 1000
    syllables_per_utterance: tuple[int, int] = (3, 10)
    speakers: int = 20
    tone_priors: tuple[float, ...] = DEFAULT_TONE_PRIORS
    coarticulation_strength: float = 0.5
    noise_std: float = 0.3
    duration_mean_frames: float = 20.0
    duration_std_frames: float = 4.0
    speaker_offset_std: float = 0.2
    speaker_scale_std: float = 0.1
    boundary_jitter_frames: int = 5
    register_drift_std: float = 1.2
    register_corr: float = 0.97
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "syllables_per_utterance", tuple(int(v) for v in self.syllables_per_utterance))
        object.__setattr__(self, "tone_priors", tuple(float(p) for p in self.tone_priors))
        lo, hi = self.syllables_per_utterance
        if self.n_train_syllables <= 0 or self.n_test_syllables <= 0:
            raise ValueError("syllable counts must be positive")
        if not 1 <= lo <= hi:
            raise ValueError(f"bad syllables_per_utterance range {lo}..{hi}")
        if self.speakers < 2:
            raise ValueError("need at least 2 speakers for disjoint train/test pools")
        if len(self.tone_priors) != N_TONES or min(self.tone_priors) < 0:
            raise ValueError("tone_priors must be 5 non-negative probabilities")
        if abs(sum(self.tone_priors) - 1.0) > 1e-9:
            raise ValueError(f"tone_priors sum to {sum(self.tone_priors)!r}, not 1")
        if not 0.0 <= self.coarticulation_strength <= 1.0:
            raise ValueError("coarticulation_strength must lie in [0, 1]")
        if self.noise_std < 0 or self.duration_std_frames < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.speaker_offset_std < 0 or self.speaker_scale_std < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.register_drift_std < 0 or not -1.0 < self.register_corr < 1.0:
            raise ValueError("register drift needs std >= 0 and |corr| < 1")
        if self.boundary_jitter_frames < 0:
            raise ValueError("boundary_jitter_frames must be non-negative")
        if self.duration_mean_frames <= 0:
            raise ValueError("duration_mean_frames must be positive")

    @classmethod
    def from_flat(cls, items: dict) -> "GeneratorSpec":
        check_known(items, [f.name for f in fields(cls)], "generator spec")
        kw = {}
        for key, value in items.items():
            if key == "syllables_per_utterance":
                kw[key] = tuple(int(v) for v in value.replace("-", ",").split(","))
            elif key == "tone_priors":
                kw[key] = tuple(float(v) for v in value.split(","))
            elif key in ("n_train_syllables", "n_test_syllables", "speakers", "seed",
                         "boundary_jitter_frames"):
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        return cls(**kw)

    def speaker_pools(self) -> tuple[list[int], list[int]]:
        n_test = max(1, self.speakers // 5)
        ids = list(range(self.speakers))
        return ids[:self.speakers - n_test], ids[self.speakers - n_test:]


def _speaker_transform(spec: GeneratorSpec, speaker: int) -> tuple[float, float]:
    rng = np.random.default_rng([spec.seed, 2, speaker])
    offset = rng.normal(0.0, spec.speaker_offset_std) if spec.speaker_offset_std > 0 else 0.0
    scale = np.exp(rng.normal(0.0, spec.speaker_scale_std)) if spec.speaker_scale_std > 0 else 1.0
    return float(offset), float(scale)


def _syllable_duration(spec: GeneratorSpec, rng, tone: int) -> int:
    d = rng.normal(spec.duration_mean_frames, spec.duration_std_frames)
    if tone == 0:
        d *= NEUTRAL_DURATION_SCALE
    return max(MIN_DURATION, int(round(d)))


def generate_utterance(spec: GeneratorSpec, split: int, index: int, n_syllables: int | None = None) -> Utterance:
    """Utterance ``index`` of ``split`` (0 train, 1 test); depends only on its own stream."""
    rng = np.random.default_rng([spec.seed, split, index])
    lo, hi = spec.syllables_per_utterance
    count = int(rng.integers(lo, hi + 1))
    if n_syllables is not None:
        count = min(count, n_syllables)
    pool = spec.speaker_pools()[split]
    speaker = pool[int(rng.integers(len(pool)))]
    offset, scale = _speaker_transform(spec, speaker)

    pitch = []
    syllables = []
    prev_end = None
    frame = 0
    register = 0.0
    innovation = spec.register_drift_std * np.sqrt(1.0 - spec.register_corr ** 2)
    for k in range(count):
        tone = int(rng.choice(N_TONES, p=spec.tone_priors))
        dur = _syllable_duration(spec, rng, tone)
        if spec.register_drift_std > 0:
            # AR(1) pitch register shared (with decay) by neighbouring syllables.
            register = (rng.normal(0.0, spec.register_drift_std) if k == 0
                        else spec.register_corr * register + rng.normal(0.0, innovation))
        n_onset = int(ONSET_FRACTION * dur)
        n_final = dur - n_onset
        target = float(tone_template(tone, 0.0)) + register
        start = target if prev_end is None else (
            spec.coarticulation_strength * prev_end + (1.0 - spec.coarticulation_strength) * target)
        onset = start + (target - start) * np.arange(n_onset) / max(n_onset, 1)
        final = tone_template(tone, np.linspace(0.0, 1.0, n_final)) + register
        pitch.append(onset)
        pitch.append(final)
        # Annotated final boundary, offset like an imperfect forced alignment.
        J = spec.boundary_jitter_frames
        shift = int(rng.integers(-J, J + 1)) if J > 0 else 0
        final_start = min(max(n_onset + shift, 0), dur - 1)
        syllables.append(SyllableSegment(frame, frame + final_start, frame + dur, tone))
        frame += dur
        prev_end = float(final[-1])

    clean = offset + scale * np.concatenate(pitch)
    T = clean.shape[0]
    noise = rng.normal(0.0, spec.noise_std, size=(T, 3)) if spec.noise_std > 0 else np.zeros((T, 3))
    noisy = clean + noise[:, 0]
    delta = np.zeros(T)
    delta[1:] = np.diff(noisy)
    frames = np.column_stack([
        noisy,
        delta + noise[:, 1],
        np.clip(VOICED_NCCF - np.abs(noise[:, 2]), -1.0, 1.0),
    ])
    spk_name = f"{'trn' if split == 0 else 'tst'}spk{speaker:03d}"
    return Utterance(f"{'train' if split == 0 else 'test'}_{index:06d}", spk_name, frames, syllables)


def _generate_split(spec: GeneratorSpec, split: int, n_total: int) -> list[Utterance]:
    out = []
    remaining = n_total
    index = 0
    while remaining > 0:
        utt = generate_utterance(spec, split, index, remaining)
        out.append(utt)
        remaining -= len(utt.syllables)
        index += 1
    return out


def generate(spec: GeneratorSpec) -> tuple[list[Utterance], list[Utterance]]:
    """``(train, test)`` utterance lists with exactly the requested syllable counts."""
    return (_generate_split(spec, 0, spec.n_train_syllables),
            _generate_split(spec, 1, spec.n_test_syllables))
