"""Elman RNN encoder with last / average / max pooling.

Single-sequence functions (``elman_step``, ``run_rnn``, ``pool``, ``encode``)
are the readable API.  Training goes through ``encode_packed`` and
``encode_packed_backward``, which run many sequences at once through the
recursion kernels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from rnntone import kernels

DIRECTIONS = ("forward", "backward", "bidirectional")
POOLINGS = ("last", "average", "max")
_POOL_CODE = {"last": 0, "average": 1, "max": 2}


def sigmoid(z):
    """Logistic function; branches on sign so large |z| never overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class EncoderConfig:
    direction: str = "forward"
    pooling: str = "last"
    hidden_size: int = 250
    input_dim: int = 3

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.hidden_size <= 0 or self.input_dim <= 0:
            raise ValueError("hidden_size and input_dim must be positive")

    @property
    def embedding_dim(self) -> int:
        return self.hidden_size * (2 if self.direction == "bidirectional" else 1)


@dataclass
class RNNWeights:
    W: np.ndarray
    V: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, hidden_size, input_dim):
        return cls(np.zeros((hidden_size, input_dim)), np.zeros((hidden_size, hidden_size)),
                   np.zeros(hidden_size))


@dataclass
class EncoderParams:
    """Forward weights plus the optional untied backward set."""
    W: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W_bwd: Optional[np.ndarray] = None
    V_bwd: Optional[np.ndarray] = None
    b_bwd: Optional[np.ndarray] = None

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def has_backward(self) -> bool:
        return self.W_bwd is not None

    def forward_set(self) -> RNNWeights:
        return RNNWeights(self.W, self.V, self.b)

    def backward_set(self) -> RNNWeights:
        if not self.has_backward:
            raise ValueError("encoder has no backward parameter set")
        return RNNWeights(self.W_bwd, self.V_bwd, self.b_bwd)


def _check_weights(w: RNNWeights, input_dim: int):
    H = w.W.shape[0]
    if w.W.shape[1] != input_dim:
        raise ValueError(f"input dimension {input_dim} does not match W with {w.W.shape[1]} columns")
    if w.V.shape != (H, H) or w.b.shape != (H,):
        raise ValueError("inconsistent encoder weight shapes")


def elman_step(x, h_prev, params: EncoderParams | RNNWeights) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape != (params.W.shape[1],) or h_prev.shape != (params.W.shape[0],):
        raise ValueError(
            f"elman_step got x{x.shape}, h{h_prev.shape}; expected "
            f"({params.W.shape[1]},), ({params.W.shape[0]},)"
        )
    return sigmoid(params.W @ x + params.V @ h_prev + params.b)


def _as_matrix(seq) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(seq, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty sequence of vectors")
    return X


def _single_offsets(T):
    return np.array([0, T], dtype=np.int64)


def run_rnn(seq, params: EncoderParams | RNNWeights, reversed: bool = False) -> np.ndarray:
    """Hidden states for every frame, ``(T, hidden)``, in original time order."""
    X = _as_matrix(seq)
    w = params if isinstance(params, RNNWeights) else params.forward_set()
    _check_weights(w, X.shape[1])
    zin = np.ascontiguousarray(X @ w.W.T + w.b)
    return kernels.recur_forward(zin, _single_offsets(X.shape[0]), np.ascontiguousarray(w.V), bool(reversed))


def pool(hiddens, kind: str) -> np.ndarray:
    Hs = _as_matrix(hiddens)
    if kind == "last":
        return Hs[-1].copy()
    if kind == "average":
        return Hs.sum(axis=0) / Hs.shape[0]
    if kind == "max":
        return Hs.max(axis=0)
    raise ValueError(f"unknown pooling {kind!r}")


def pool_backward(hiddens, kind: str, d_pooled) -> np.ndarray:
    """Gradient on each hidden state given the gradient on the pooled vector.

    For max pooling only the (earliest) argmax step of each unit receives
    gradient; all other steps get exactly zero.
    """
    Hs = _as_matrix(hiddens)
    d_pooled = np.asarray(d_pooled, dtype=np.float64)
    T, H = Hs.shape
    dH = np.zeros_like(Hs)
    if kind == "last":
        dH[-1] = d_pooled
    elif kind == "average":
        dH[:] = d_pooled / T
    elif kind == "max":
        dH[np.argmax(Hs, axis=0), np.arange(H)] = d_pooled
    else:
        raise ValueError(f"unknown pooling {kind!r}")
    return dH


def encode(seq, params: EncoderParams, cfg: EncoderConfig) -> np.ndarray:
    """Tone embedding of one observation sequence.

    For a backward pass, "last" means the final state of the backward
    recursion (the one aligned with the first frame).
    """
    X = _as_matrix(seq)
    if cfg.direction == "bidirectional" and not params.has_backward:
        raise ValueError("bidirectional encoding requires backward parameters")
    parts = []
    if cfg.direction in ("forward", "bidirectional"):
        parts.append(pool(run_rnn(X, params.forward_set(), False), cfg.pooling))
    if cfg.direction == "backward":
        parts.append(pool(run_rnn(X, params.forward_set(), True)[::-1], cfg.pooling))
    if cfg.direction == "bidirectional":
        parts.append(pool(run_rnn(X, params.backward_set(), True)[::-1], cfg.pooling))
    return np.concatenate(parts)


# -- packed batches ------------------------------------------------------------

def pack(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if np.any(lengths == 0):
        raise ValueError("empty observation sequence")
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    return np.ascontiguousarray(np.concatenate(seqs, axis=0), dtype=np.float64), offsets


@dataclass
class _PassCache:
    weights: RNNWeights
    reverse: bool
    hs: np.ndarray
    idx: np.ndarray


@dataclass
class PackedCache:
    X: np.ndarray
    offsets: np.ndarray
    passes: list


def _passes(params: EncoderParams, cfg: EncoderConfig):
    if cfg.direction == "forward":
        return [(params.forward_set(), False)]
    if cfg.direction == "backward":
        return [(params.forward_set(), True)]
    return [(params.forward_set(), False), (params.backward_set(), True)]


def encode_packed(X, offsets, params: EncoderParams, cfg: EncoderConfig):
    """Embeddings ``(S, embedding_dim)`` for a packed batch, plus a backprop cache."""
    if cfg.direction == "bidirectional" and not params.has_backward:
        raise ValueError("bidirectional encoding requires backward parameters")
    code = _POOL_CODE[cfg.pooling]
    outs, caches = [], []
    for w, reverse in _passes(params, cfg):
        _check_weights(w, X.shape[1])
        zin = np.ascontiguousarray(X @ w.W.T + w.b)
        hs = kernels.recur_forward(zin, offsets, np.ascontiguousarray(w.V), reverse)
        c, idx = kernels.pool_forward(hs, offsets, code, reverse)
        outs.append(c)
        caches.append(_PassCache(w, reverse, hs, idx))
    E = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    return E, PackedCache(X, offsets, caches)


def _previous_states(hs, offsets, reverse):
    prev = np.zeros_like(hs)
    if reverse:
        prev[:-1] = hs[1:]
        prev[offsets[1:] - 1] = 0.0
    else:
        prev[1:] = hs[:-1]
        prev[offsets[:-1]] = 0.0
    return prev


def encode_packed_backward(dE, cache: PackedCache, cfg: EncoderConfig) -> list[RNNWeights]:
    """Gradients of each pass's (W, V, b) given dL/dE; one entry per pass."""
    offsets = cache.offsets
    lengths = np.diff(offsets)
    H = cfg.hidden_size
    grads = []
    for p, pc in enumerate(cache.passes):
        dC = dE[:, p * H:(p + 1) * H]
        if cfg.pooling == "average":
            dhs = np.repeat(dC / lengths[:, None], lengths, axis=0)
        else:
            dhs = np.zeros_like(pc.hs)
            dhs[pc.idx, np.arange(H)[None, :]] = dC
        dz = kernels.recur_backward(pc.hs, np.ascontiguousarray(dhs), offsets,
                                    np.ascontiguousarray(pc.weights.V), pc.reverse)
        prev = _previous_states(pc.hs, offsets, pc.reverse)
        grads.append(RNNWeights(dz.T @ cache.X, dz.T @ prev, dz.sum(axis=0)))
    return grads
