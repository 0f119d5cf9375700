"""Joint training of encoder and classifier by backpropagation through time."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from rnntone.classifier import ClassifierParams, TonePosterior, log_softmax, softmax
from rnntone.config import check_known, to_optional_float
from rnntone.encoder import EncoderParams, encode_packed, encode_packed_backward, pack, sigmoid
from rnntone.features import (DurationStats, Utterance, duration_vector, utterance_segments)
from rnntone.model import ModelConfig, ModelParams


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingExample:
    curr_seq: np.ndarray
    label: int
    prec_seq: Optional[np.ndarray] = None
    succ_seq: Optional[np.ndarray] = None
    dur: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.05
    minibatch_size: int = 32
    epochs: int = 20
    grad_clip_norm: Optional[float] = 5.0
    seed: int = 0
    init_scale: float = 0.1
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.minibatch_size <= 0 or self.epochs <= 0:
            raise ValueError("minibatch_size and epochs must be positive")
        if self.grad_clip_norm is not None and not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be positive or None")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    @classmethod
    def from_flat(cls, items: dict) -> "Hyperparams":
        check_known(items, [f.name for f in fields(cls)], "hyperparameter")
        kw = {}
        for key, value in items.items():
            if key == "grad_clip_norm":
                kw[key] = to_optional_float(value)
            elif key in ("minibatch_size", "epochs", "seed"):
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        return cls(**kw)


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    train_acc: float
    wall_ms: float


def write_epoch_log(rows: Sequence[EpochLog], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epoch", "mean_loss", "train_acc", "wall_ms"])
    for r in rows:
        w.writerow([r.epoch, repr(r.mean_loss), repr(r.train_acc), f"{r.wall_ms:.1f}"])


def build_examples(corpus: Sequence[Utterance], cfg: ModelConfig,
                   dur_stats: Optional[DurationStats] = None) -> list[TrainingExample]:
    """One example per syllable; contexts and durations come from the same utterance."""
    clf = cfg.classifier
    if clf.use_duration and dur_stats is None:
        raise ValueError("duration features need duration statistics")
    out = []
    for utt in corpus:
        segs = utterance_segments(utt, cfg.scope, cfg.splice)
        n = len(segs)
        for k, seg in enumerate(utt.syllables):
            out.append(TrainingExample(
                curr_seq=segs[k],
                label=seg.tone,
                prec_seq=segs[k - 1] if clf.use_preceding and k > 0 else None,
                succ_seq=segs[k + 1] if clf.use_succeeding and k + 1 < n else None,
                dur=duration_vector(utt, k, dur_stats) if clf.use_duration else None,
            ))
    return out


def init_params(cfg: ModelConfig, seed: int, scale: float) -> ModelParams:
    """Weights i.i.d. uniform on [-scale, scale]; biases zero."""
    rng = np.random.default_rng(seed)
    H, D = cfg.encoder.hidden_size, cfg.encoder.input_dim

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape) if scale > 0 else np.zeros(shape)

    enc = EncoderParams(u(H, D), u(H, H), np.zeros(H))
    if cfg.encoder.direction == "bidirectional":
        enc.W_bwd, enc.V_bwd, enc.b_bwd = u(H, D), u(H, H), np.zeros(H)
    clf = ClassifierParams(u(5, cfg.classifier.c_dim), np.zeros(5))
    if cfg.classifier.use_duration:
        clf.Wd, clf.bd = u(cfg.classifier.dur_hidden, 3), np.zeros(cfg.classifier.dur_hidden)
    return ModelParams(enc, clf)


def loss(posterior: TonePosterior, label: int) -> float:
    """Negative log-likelihood of ``label``, evaluated as log-sum-exp on the logits."""
    return float(-log_softmax(posterior.logits)[label])


# -- batched forward / backward --------------------------------------------------

@dataclass
class _BatchCache:
    enc_cache: object
    slots: np.ndarray   # (n, n_embeddings) sequence index per block, -1 for zero
    C: np.ndarray
    D: Optional[np.ndarray]
    Sd: Optional[np.ndarray]


def forward_batch(examples: Sequence[TrainingExample], params: ModelParams, cfg: ModelConfig):
    """Logits ``(n, 5)`` for a list of examples, plus a cache for ``backward_batch``."""
    clf = cfg.classifier
    seqs = []
    slots = np.full((len(examples), clf.n_embeddings), -1, dtype=np.int64)
    for i, ex in enumerate(examples):
        blocks = ([ex.prec_seq] if clf.use_preceding else []) + [ex.curr_seq] + \
                 ([ex.succ_seq] if clf.use_succeeding else [])
        for j, seq in enumerate(blocks):
            if seq is not None:
                slots[i, j] = len(seqs)
                seqs.append(seq)
    X, offsets = pack(seqs)
    E, enc_cache = encode_packed(X, offsets, params.encoder, cfg.encoder)

    emb = clf.embedding_dim
    C = np.zeros((len(examples), clf.c_dim))
    for j in range(clf.n_embeddings):
        have = slots[:, j] >= 0
        C[have, j * emb:(j + 1) * emb] = E[slots[have, j]]
    D = Sd = None
    if clf.use_duration:
        D = np.array([ex.dur for ex in examples], dtype=np.float64).reshape(len(examples), 3)
        Sd = sigmoid(D @ params.classifier.Wd.T + params.classifier.bd)
        C[:, clf.n_embeddings * emb:] = Sd
    z = C @ params.classifier.U.T + params.classifier.u0
    return z, _BatchCache(enc_cache, slots, C, D, Sd)


def backward_batch(dz: np.ndarray, cache: _BatchCache, params: ModelParams, cfg: ModelConfig) -> ModelParams:
    clf = cfg.classifier
    emb = clf.embedding_dim
    g = params.zeros_like()
    g.classifier.U[...] = dz.T @ cache.C
    g.classifier.u0[...] = dz.sum(axis=0)
    dC = dz @ params.classifier.U

    n_seqs = len(cache.enc_cache.offsets) - 1
    dE = np.zeros((n_seqs, emb))
    for j in range(clf.n_embeddings):
        have = cache.slots[:, j] >= 0
        # Each sequence fills exactly one slot, so plain assignment is enough.
        dE[cache.slots[have, j]] = dC[have, j * emb:(j + 1) * emb]
    if clf.use_duration:
        dSd = dC[:, clf.n_embeddings * emb:]
        dzd = dSd * cache.Sd * (1.0 - cache.Sd)
        g.classifier.Wd[...] = dzd.T @ cache.D
        g.classifier.bd[...] = dzd.sum(axis=0)

    passes = encode_packed_backward(dE, cache.enc_cache, cfg.encoder)
    targets = [(g.encoder.W, g.encoder.V, g.encoder.b)]
    if cfg.encoder.direction == "bidirectional":
        targets.append((g.encoder.W_bwd, g.encoder.V_bwd, g.encoder.b_bwd))
    for (gW, gV, gb), pg in zip(targets, passes):
        gW[...], gV[...], gb[...] = pg.W, pg.V, pg.b
    return g


def loss_and_grads(examples: Sequence[TrainingExample], params: ModelParams, cfg: ModelConfig):
    """Mean loss over ``examples``, its gradient, and the logits."""
    z, cache = forward_batch(examples, params, cfg)
    labels = np.array([ex.label for ex in examples])
    n = len(examples)
    logp = log_softmax(z)
    mean_loss = float(-logp[np.arange(n), labels].sum() / n)
    dz = softmax(z)
    dz[np.arange(n), labels] -= 1.0
    dz /= n
    return mean_loss, backward_batch(dz, cache, params, cfg), z


def backprop(example: TrainingExample, params: ModelParams, cfg: ModelConfig) -> ModelParams:
    """Exact gradient of one example's loss with respect to every parameter tensor."""
    return loss_and_grads([example], params, cfg)[1]


def example_loss(example: TrainingExample, params: ModelParams, cfg: ModelConfig) -> float:
    z, _ = forward_batch([example], params, cfg)
    return float(-log_softmax(z[0])[example.label])


# -- SGD -------------------------------------------------------------------------

def _clip(grads: ModelParams, max_norm: Optional[float]) -> None:
    if max_norm is None:
        return
    norm = math.sqrt(sum(float(np.vdot(g, g)) for _, g in grads.named()))
    if norm > max_norm:
        scale = max_norm / norm
        for _, g in grads.named():
            g *= scale


def train(corpus: Sequence[TrainingExample], cfg: ModelConfig, hp: Hyperparams,
          params: Optional[ModelParams] = None, on_epoch=None):
    """Minibatch SGD on the mean negative log-likelihood.

    Returns ``(params, log)`` where ``log`` has one ``EpochLog`` per epoch.
    Loss and accuracy in the log are running values over the epoch's batches
    (measured before each batch's update).
    """
    if len(corpus) == 0:
        raise ValueError("empty training corpus")
    if params is None:
        params = init_params(cfg, hp.seed, hp.init_scale)
    else:
        params = params.copy()
    shuffle_rng = np.random.default_rng([hp.seed, 1])
    velocity = params.zeros_like() if hp.momentum > 0 else None
    labels = np.array([ex.label for ex in corpus])
    n = len(corpus)
    log = []
    for epoch in range(1, hp.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, hp.minibatch_size)):
            idx = order[start:start + hp.minibatch_size]
            batch_loss, grads, z = loss_and_grads([corpus[i] for i in idx], params, cfg)
            if not math.isfinite(batch_loss) or not all(np.all(np.isfinite(g)) for _, g in grads.named()):
                raise TrainingError(f"non-finite loss or gradient at epoch {epoch}, batch {b}")
            total_loss += batch_loss * len(idx)
            correct += int(np.sum(np.argmax(z, axis=1) == labels[idx]))
            _clip(grads, hp.grad_clip_norm)
            if velocity is not None:
                for (_, v), (_, g) in zip(velocity.named(), grads.named()):
                    v *= hp.momentum
                    v += g
                grads = velocity
            for (_, p), (_, g) in zip(params.named(), grads.named()):
                p -= hp.learning_rate * g
        row = EpochLog(epoch, total_loss / n, correct / n, (time.perf_counter() - t0) * 1000.0)
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return params, log


# -- gradient check ----------------------------------------------------------------

def random_example(cfg: ModelConfig, rng: np.random.Generator, max_len: int = 6) -> TrainingExample:
    D = cfg.encoder.input_dim

    def values(*shape):
        # Magnitudes bounded away from zero keep every gradient entry well above
        # the finite-difference roundoff floor.
        return rng.uniform(0.5, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)

    def seq():
        return values(int(rng.integers(1, max_len + 1)), D)

    clf = cfg.classifier
    return TrainingExample(
        curr_seq=seq(),
        label=int(rng.integers(0, 5)),
        prec_seq=seq() if clf.use_preceding else None,
        succ_seq=seq() if clf.use_succeeding else None,
        dur=values(3) if clf.use_duration else None,
    )


def random_params(cfg: ModelConfig, rng: np.random.Generator, scale: float = 0.5) -> ModelParams:
    params = init_params(cfg, int(rng.integers(2**31)), scale)
    for _, arr in params.named():
        if arr.ndim == 1:
            arr[...] = rng.uniform(-scale, scale, size=arr.shape)
    return params


def numeric_grads(example, params: ModelParams, cfg: ModelConfig, epsilon: float) -> ModelParams:
    """Central finite differences of ``example_loss`` for every parameter."""
    out = params.zeros_like()
    for (_, p), (_, g) in zip(params.named(), out.named()):
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            up = example_loss(example, params, cfg)
            flat_p[i] = orig - epsilon
            down = example_loss(example, params, cfg)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * epsilon)
    return out


def max_relative_error(a: ModelParams, b: ModelParams) -> float:
    worst = 0.0
    for (_, x), (_, y) in zip(a.named(), b.named()):
        rel = np.abs(x - y) / (np.abs(x) + np.abs(y) + 1e-12)
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst


def grad_check(cfg: ModelConfig, seed: int = 0, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central differences on a random example."""
    rng = np.random.default_rng(seed)
    example = random_example(cfg, rng)
    params = random_params(cfg, rng)
    return max_relative_error(backprop(example, params, cfg), numeric_grads(example, params, cfg, epsilon))
