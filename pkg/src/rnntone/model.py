"""Model configuration, the parameter container and its file format."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from rnntone.classifier import ClassifierConfig, ClassifierParams
from rnntone.config import check_known, format_kv, parse_kv, to_bool
from rnntone.encoder import EncoderConfig, EncoderParams
from rnntone.features import SCOPES, DurationStats, SpliceConfig

_FLAT_KEYS = ("splice_radius", "scope", "direction", "pooling", "hidden_size",
              "use_preceding", "use_succeeding", "use_duration", "dur_hidden")


@dataclass(frozen=True)
class ModelConfig:
    splice: SpliceConfig
    scope: str
    encoder: EncoderConfig
    classifier: ClassifierConfig

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.encoder.input_dim != self.splice.output_dim:
            raise ValueError("encoder input_dim must equal the spliced frame dimension")
        if self.classifier.embedding_dim != self.encoder.embedding_dim:
            raise ValueError("classifier embedding_dim must equal the encoder output dimension")

    @classmethod
    def build(cls, splice_radius=0, scope="final_only", direction="forward", pooling="last",
              hidden_size=250, use_preceding=False, use_succeeding=False, use_duration=False,
              dur_hidden=10) -> "ModelConfig":
        sp = SpliceConfig(int(splice_radius))
        enc = EncoderConfig(direction, pooling, int(hidden_size), sp.output_dim)
        clf = ClassifierConfig(to_bool(use_preceding), to_bool(use_succeeding), to_bool(use_duration),
                               enc.embedding_dim, int(dur_hidden))
        return cls(sp, scope, enc, clf)

    def flat(self) -> dict:
        return {
            "splice_radius": self.splice.radius,
            "scope": self.scope,
            "direction": self.encoder.direction,
            "pooling": self.encoder.pooling,
            "hidden_size": self.encoder.hidden_size,
            "use_preceding": self.classifier.use_preceding,
            "use_succeeding": self.classifier.use_succeeding,
            "use_duration": self.classifier.use_duration,
            "dur_hidden": self.classifier.dur_hidden,
        }

    @classmethod
    def from_flat(cls, items: dict) -> "ModelConfig":
        check_known(items, _FLAT_KEYS, "model config")
        return cls.build(**items)

    def with_changes(self, **changes) -> "ModelConfig":
        return ModelConfig.build(**{**self.flat(), **changes})

    def to_text(self) -> str:
        return format_kv({k: str(v).lower() if isinstance(v, bool) else v for k, v in self.flat().items()})

    @classmethod
    def from_text(cls, text: str, source="<config>") -> "ModelConfig":
        return cls.from_flat(parse_kv(text, source))


@dataclass
class ModelParams:
    encoder: EncoderParams
    classifier: ClassifierParams
    duration_stats: Optional[DurationStats] = None

    def named(self) -> Iterator[tuple[str, np.ndarray]]:
        """Trainable tensors by serialized name; arrays are live references."""
        e, c = self.encoder, self.classifier
        for name, arr in (("enc.W", e.W), ("enc.V", e.V), ("enc.b", e.b),
                          ("enc_bwd.W", e.W_bwd), ("enc_bwd.V", e.V_bwd), ("enc_bwd.b", e.b_bwd),
                          ("cls.U", c.U), ("cls.u0", c.u0), ("cls.Wd", c.Wd), ("cls.bd", c.bd)):
            if arr is not None:
                yield name, arr

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: v.copy() for k, v in self.named()}, self.duration_stats)

    @classmethod
    def from_named(cls, tensors: dict, duration_stats=None) -> "ModelParams":
        enc = EncoderParams(tensors["enc.W"], tensors["enc.V"], tensors["enc.b"],
                            tensors.get("enc_bwd.W"), tensors.get("enc_bwd.V"), tensors.get("enc_bwd.b"))
        clf = ClassifierParams(tensors["cls.U"], tensors["cls.u0"], tensors.get("cls.Wd"), tensors.get("cls.bd"))
        return cls(enc, clf, duration_stats)

    def zeros_like(self) -> "ModelParams":
        return ModelParams.from_named({k: np.zeros_like(v) for k, v in self.named()})

    def check_against(self, cfg: ModelConfig) -> None:
        """Raise ValueError if tensor shapes do not fit ``cfg``."""
        H, D = cfg.encoder.hidden_size, cfg.encoder.input_dim
        want = {"enc.W": (H, D), "enc.V": (H, H), "enc.b": (H,),
                "cls.U": (5, cfg.classifier.c_dim), "cls.u0": (5,)}
        if cfg.encoder.direction == "bidirectional":
            want.update({"enc_bwd.W": (H, D), "enc_bwd.V": (H, H), "enc_bwd.b": (H,)})
        if cfg.classifier.use_duration:
            want.update({"cls.Wd": (cfg.classifier.dur_hidden, 3), "cls.bd": (cfg.classifier.dur_hidden,)})
        have = {k: v.shape for k, v in self.named()}
        if have != want:
            raise ValueError(f"parameters do not match config: have {have}, config implies {want}")
        if cfg.classifier.use_duration and self.duration_stats is None:
            raise ValueError("duration model without stored duration statistics")


# -- file format -----------------------------------------------------------------
# magic | u32 version | u32 len + utf-8 config text | u32 n | n x tensor
# tensor: u16 len + utf-8 name | u8 ndim | ndim x u32 | little-endian float64 data

MAGIC = b"RNNTONE\0"
VERSION = 1


def _write_tensor(buf, name, arr):
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)) + raw)
    buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def dumps_model(params: ModelParams, cfg: ModelConfig) -> bytes:
    tensors = list(params.named())
    if params.duration_stats is not None:
        tensors.append(("dur.stats", np.array([params.duration_stats.mean, params.duration_stats.std])))
    meta = cfg.to_text().encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<II", VERSION, len(meta)) + meta)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    return buf.getvalue()


def loads_model(data: bytes) -> tuple[ModelParams, ModelConfig]:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError("truncated model file")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise ValueError("not a model file (bad magic)")
    version, meta_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ValueError(f"unsupported model file version {version}")
    cfg = ModelConfig.from_text(bytes(take(meta_len)).decode("utf-8"), "<model file>")
    (n,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(n):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(view):
        raise ValueError("trailing bytes in model file")
    stats = tensors.pop("dur.stats", None)
    dstats = None if stats is None else DurationStats(float(stats[0]), float(stats[1]))
    params = ModelParams.from_named(tensors, dstats)
    params.check_against(cfg)
    return params, cfg


def save_model(path, params: ModelParams, cfg: ModelConfig) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(params, cfg))


def load_model(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
