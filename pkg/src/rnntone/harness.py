"""Evaluation, the standard configuration grid, and report writers."""
from __future__ import annotations

import configparser
import csv
import io
import logging
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rnntone.features import Utterance, compute_duration_stats, normalize_by_speaker
from rnntone.model import ModelConfig, ModelParams
from rnntone.training import Hyperparams, build_examples, forward_batch, train

log = logging.getLogger(__name__)

EVAL_CHUNK = 512


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray   # rows = reference tone, columns = hypothesis
    n_examples: int
    config_id: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config_id", "n_examples", "accuracy"])
        w.writerow([self.config_id, self.n_examples, repr(self.accuracy)])
        w.writerow([])
        w.writerow(["reference"] + [f"hyp_{k}" for k in range(5)])
        for k, row in enumerate(self.confusion):
            w.writerow([f"tone_{k}"] + [int(v) for v in row])
        return buf.getvalue()


def predict_labels(params: ModelParams, cfg: ModelConfig, examples) -> np.ndarray:
    preds = []
    for start in range(0, len(examples), EVAL_CHUNK):
        z, _ = forward_batch(examples[start:start + EVAL_CHUNK], params, cfg)
        preds.append(np.argmax(z, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(params: ModelParams, cfg: ModelConfig, corpus: Sequence[Utterance], config_id: str = "") -> EvalReport:
    """Classify every syllable of ``corpus`` (already speaker-normalized)."""
    params.check_against(cfg)
    examples = build_examples(corpus, cfg, params.duration_stats)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    preds = predict_labels(params, cfg, examples)
    confusion = np.zeros((5, 5), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    n = len(examples)
    acc = float(np.trace(confusion) / n) if n else 0.0
    return EvalReport(acc, confusion, n, config_id)


def train_model(train_corpus: Sequence[Utterance], cfg: ModelConfig, hp: Hyperparams, on_epoch=None):
    """Train on a speaker-normalized corpus; duration statistics are frozen from it."""
    stats = compute_duration_stats(train_corpus) if cfg.classifier.use_duration else None
    examples = build_examples(train_corpus, cfg, stats)
    params, epochs = train(examples, cfg, hp, on_epoch=on_epoch)
    params.duration_stats = stats
    return params, epochs


# -- grid --------------------------------------------------------------------------

@dataclass
class GridSpec:
    rows: list[tuple[str, ModelConfig]] = field(default_factory=list)

    def __post_init__(self):
        names = [name for name, _ in self.rows]
        if len(set(names)) != len(names):
            raise ValueError("grid row names must be unique")

    def names(self) -> list[str]:
        return [name for name, _ in self.rows]

    def subset(self, names: Sequence[str]) -> "GridSpec":
        table = dict(self.rows)
        return GridSpec([(n, table[n]) for n in names])


def standard_grid(hidden_size: int = 250) -> GridSpec:
    """The twelve standard rows, each extending an earlier one.

    Splicing stays on from row 2; the syllable-scope average-pooling row is the
    base of the context and duration rows.
    """
    b = dict(hidden_size=hidden_size)
    final = dict(b, scope="final_only", splice_radius=4)
    syl = dict(b, scope="full_syllable", splice_radius=4, pooling="average")
    rows = [
        ("Baseline", dict(b, scope="final_only", splice_radius=0, pooling="last")),
        ("Splicing", dict(final, pooling="last")),
        ("Average Pooling", dict(final, pooling="average")),
        ("Max Pooling", dict(final, pooling="max")),
        ("Syllable Average Pooling", syl),
        ("Syllable Max Pooling", dict(syl, pooling="max")),
        ("Backward RNN", dict(syl, direction="backward")),
        ("Bi-directional RNN", dict(syl, direction="bidirectional")),
        ("+Preceding", dict(syl, use_preceding=True)),
        ("+Succeeding", dict(syl, use_succeeding=True)),
        ("+Both", dict(syl, use_preceding=True, use_succeeding=True)),
        ("+Duration", dict(syl, use_preceding=True, use_succeeding=True, use_duration=True)),
    ]
    return GridSpec([(name, ModelConfig.build(**kw)) for name, kw in rows])


def parse_grid(text: str, source: str = "<grid>") -> GridSpec:
    """INI-style grid: one ``[row name]`` section of model keys per row.

    Keys in ``[DEFAULT]`` apply to every row.  ``preset = standard`` in the
    DEFAULT section starts from the built-in standard grid (a ``rows`` key may
    then select a comma-separated subset, and ``hidden_size`` overrides it).
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ValueError(f"{source}: {exc}") from None
    defaults = dict(cp.defaults())
    preset = defaults.pop("preset", None)
    subset = defaults.pop("rows", None)
    rows = []
    if preset is not None:
        if preset != "standard":
            raise ValueError(f"{source}: unknown preset {preset!r}")
        grid = standard_grid(int(defaults.get("hidden_size", 250)))
        if subset:
            grid = grid.subset([s.strip() for s in subset.split(",")])
        rows.extend((name, cfg.with_changes(**defaults)) for name, cfg in grid.rows)
    for section in cp.sections():
        items = {k: v for k, v in cp.items(section) if k not in ("preset", "rows")}
        rows.append((section, ModelConfig.from_flat(items)))
    if not rows:
        raise ValueError(f"{source}: grid has no rows")
    return GridSpec(rows)


@dataclass
class GridResult:
    row: str
    seed: int
    train_acc: float
    test_acc: float
    status: str = "ok"


def run_grid(grid: GridSpec, train_corpus: Sequence[Utterance], test_corpus: Sequence[Utterance],
             hp: Hyperparams, seeds: Sequence[int], normalize: bool = True) -> list[GridResult]:
    """Train and evaluate every row for every seed; a failing row is recorded, not raised."""
    if not seeds:
        raise ValueError("need at least one seed")
    if normalize:
        train_corpus = normalize_by_speaker(train_corpus)
        test_corpus = normalize_by_speaker(test_corpus)
    results = []
    for name, cfg in grid.rows:
        for seed in seeds:
            try:
                params, _ = train_model(train_corpus, cfg, Hyperparams(**{**hp.__dict__, "seed": seed}))
                tr = evaluate(params, cfg, train_corpus, name).accuracy
                te = evaluate(params, cfg, test_corpus, name).accuracy
                results.append(GridResult(name, seed, tr, te))
                log.info("%s seed=%d train=%.4f test=%.4f", name, seed, tr, te)
            except Exception as exc:  # row-level failure; the grid keeps going
                msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
                results.append(GridResult(name, seed, float("nan"), float("nan"), msg))
                log.warning("%s seed=%d failed: %s", name, seed, msg)
    return results


def grid_csv(results: Sequence[GridResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "seed", "train_acc", "test_acc", "status"])
    for r in results:
        w.writerow([r.row, r.seed, repr(r.train_acc), repr(r.test_acc), r.status])
    return buf.getvalue()


def median_summary(results: Sequence[GridResult]) -> dict[str, tuple[float, float]]:
    """Median (train, test) accuracy per row over successful seeds, in row order."""
    by_row: dict[str, list[GridResult]] = {}
    for r in results:
        by_row.setdefault(r.row, []).append(r)
    out = {}
    for row, rs in by_row.items():
        ok = [r for r in rs if r.status == "ok"]
        if ok:
            out[row] = (statistics.median(r.train_acc for r in ok), statistics.median(r.test_acc for r in ok))
        else:
            out[row] = (float("nan"), float("nan"))
    return out


def format_summary(results: Sequence[GridResult]) -> str:
    summary = median_summary(results)
    width = max([len("Configuration")] + [len(k) for k in summary])
    lines = [f"{'Configuration':<{width}}  Train   Test", "-" * (width + 15)]
    for row, (tr, te) in summary.items():
        lines.append(f"{row:<{width}}  {100 * tr:5.1f}  {100 * te:5.1f}")
    return "\n".join(lines) + "\n"
