"""Affine-softmax tone classifier with contextual and duration inputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from rnntone.encoder import sigmoid
from rnntone.features import N_TONES


@dataclass(frozen=True)
class ClassifierConfig:
    use_preceding: bool = False
    use_succeeding: bool = False
    use_duration: bool = False
    embedding_dim: int = 250
    dur_hidden: int = 10

    @property
    def n_embeddings(self) -> int:
        return 1 + int(self.use_preceding) + int(self.use_succeeding)

    @property
    def c_dim(self) -> int:
        return self.embedding_dim * self.n_embeddings + (self.dur_hidden if self.use_duration else 0)


@dataclass
class ClassifierParams:
    U: np.ndarray
    u0: np.ndarray
    Wd: Optional[np.ndarray] = None
    bd: Optional[np.ndarray] = None

    @property
    def c_dim(self) -> int:
        return self.U.shape[1]


@dataclass
class TonePosterior:
    """Tone probabilities together with the logits they came from."""
    p: np.ndarray
    logits: np.ndarray


def duration_branch(d, params: ClassifierParams) -> np.ndarray:
    if params.Wd is None:
        raise ValueError("classifier has no duration layer")
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (params.Wd.shape[1],):
        raise ValueError(f"duration vector must have shape ({params.Wd.shape[1]},), got {d.shape}")
    return sigmoid(params.Wd @ d + params.bd)


def assemble_input(curr, prec=None, succ=None, dur=None, cfg: ClassifierConfig = None) -> np.ndarray:
    """Concatenate (preceding, current, succeeding, duration-branch output).

    ``prec``/``succ`` must be given (a zero vector at an utterance edge)
    exactly when the config enables them; ``dur`` is the duration-branch
    output, not the raw 3-vector.
    """
    if cfg is None:
        raise ValueError("assemble_input needs a ClassifierConfig")
    for name, value, flag in (("preceding", prec, cfg.use_preceding),
                              ("succeeding", succ, cfg.use_succeeding),
                              ("duration", dur, cfg.use_duration)):
        if (value is not None) != flag:
            raise ValueError(f"{name} input {'missing' if flag else 'given'} but config flag is {flag}")
    parts = []
    for emb in (prec, curr, succ):
        if emb is None:
            continue
        emb = np.asarray(emb, dtype=np.float64)
        if emb.shape != (cfg.embedding_dim,):
            raise ValueError(f"embedding of shape {emb.shape}, expected ({cfg.embedding_dim},)")
        parts.append(emb)
    if dur is not None:
        dur = np.asarray(dur, dtype=np.float64)
        if dur.shape != (cfg.dur_hidden,):
            raise ValueError(f"duration features of shape {dur.shape}, expected ({cfg.dur_hidden},)")
        parts.append(dur)
    return np.concatenate(parts)


def zero_embedding(cfg: ClassifierConfig) -> np.ndarray:
    return np.zeros(cfg.embedding_dim)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def logits(c, params: ClassifierParams) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != params.c_dim:
        raise ValueError(f"classifier input has dimension {c.shape[-1]}, expected {params.c_dim}")
    return c @ params.U.T + params.u0


def predict(c, params: ClassifierParams) -> TonePosterior:
    z = logits(c, params)
    return TonePosterior(p=softmax(z), logits=z)


def classify(c, params: ClassifierParams) -> int:
    # np.argmax returns the first maximum, i.e. the lowest tone index on ties.
    return int(np.argmax(predict(c, params).p))
