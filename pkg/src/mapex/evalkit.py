"""Stemmed F1@K scoring, aggregation, length binning and gain analysis."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .corpus import Document
from .text import stem_key

logger = logging.getLogger(__name__)


class AlignmentError(ValueError):
    pass


class BinMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "ScoreTriple":
        return cls(p, r, 2 * p * r / (p + r) if p + r > 0 else 0.0)

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


ZERO = ScoreTriple(0.0, 0.0, 0.0)


def _normalized_unique(phrases: Iterable[str]) -> list[str]:
    seen, out = set(), []
    for p in phrases:
        key = stem_key(p)
        if key and key not in seen:
            seen.add(key)
            out.append(key)
    return out


def f1_at_k(
    predicted: Sequence[str], gold: Sequence[str], k: int, diagnostics: list[str] | None = None
) -> ScoreTriple:
    """Precision is over ``min(k, len(predictions))`` so short lists are not padded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gold_n = _normalized_unique(gold)
    if not gold_n:
        if diagnostics is not None:
            diagnostics.append("f1: empty gold set")
        return ZERO
    pred_n = _normalized_unique(predicted)[:k]
    if not pred_n:
        return ZERO
    gold_set = set(gold_n)
    matches = sum(1 for p in pred_n if p in gold_set)
    return ScoreTriple.from_pr(matches / len(pred_n), matches / len(gold_n))


def macro_average(triples: Sequence[ScoreTriple]) -> ScoreTriple:
    if not triples:
        return ZERO
    return ScoreTriple(
        fmean(t.precision for t in triples),
        fmean(t.recall for t in triples),
        fmean(t.f1 for t in triples),
    )


def _align(results, corpus: Sequence[Document]) -> list[tuple[Document, list[str]]]:
    by_id = {r.doc_id: r for r in results}
    if len(by_id) != len(list(results)) or set(by_id) != {d.id for d in corpus}:
        missing = sorted({d.id for d in corpus} - set(by_id))[:5]
        extra = sorted(set(by_id) - {d.id for d in corpus})[:5]
        raise AlignmentError(f"results and corpus disagree on doc ids (missing={missing}, extra={extra})")
    return [(d, list(by_id[d.id].final)) for d in corpus]


def per_document_scores(results, corpus: Sequence[Document], k: int) -> dict[str, ScoreTriple]:
    return {d.id: f1_at_k(pred, d.gold, k) for d, pred in _align(results, corpus)}


def evaluate_run(results, corpus: Sequence[Document], k_values: Sequence[int]) -> dict[int, ScoreTriple]:
    """Macro-averaged P/R/F1 per K for one dataset."""
    pairs = _align(results, corpus)
    return {k: macro_average([f1_at_k(pred, d.gold, k) for d, pred in pairs]) for k in k_values}


def evaluate_datasets(
    runs: Mapping[str, tuple], k_values: Sequence[int]
) -> dict[int, dict[str, ScoreTriple]]:
    """``runs`` maps dataset -> (results, corpus). Adds an ``AVG`` column over datasets."""
    table: dict[int, dict[str, ScoreTriple]] = {k: {} for k in k_values}
    for name, (results, corpus) in runs.items():
        for k, triple in evaluate_run(results, corpus, k_values).items():
            table[k][name] = triple
    if len(runs) > 1:
        for k in k_values:
            table[k]["AVG"] = macro_average([table[k][n] for n in runs])
    return table


def score_report(table: dict[int, dict[str, ScoreTriple]], method: str = "run") -> dict:
    return {
        "method": method,
        "k": {str(k): {ds: t.as_dict() for ds, t in cols.items()} for k, cols in table.items()},
    }


def write_score_csv(report: dict, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "method", "dataset", "precision", "recall", "f1"])
        for k, cols in report["k"].items():
            for ds, t in cols.items():
                w.writerow([k, report["method"], ds, f"{t['precision']:.6f}", f"{t['recall']:.6f}", f"{t['f1']:.6f}"])


# ---------------------------------------------------------------- length bins

@dataclass
class Bin:
    index: int
    lower: float
    upper: float
    samples: list = field(default_factory=list)

    @property
    def center(self) -> float:
        return (self.lower + self.upper) / 2


def bin_index(token_count: int, width: float) -> int:
    """Bins are anchored at 0 on the ln axis: bin i covers [i*w, (i+1)*w)."""
    x = math.log(token_count)
    i = math.floor(x / width)
    # guard float rounding so lower <= x < upper holds for the stored edges
    while i * width > x:
        i -= 1
    while (i + 1) * width <= x:
        i += 1
    return i


def bin_by_length(samples: Iterable, width: float = 0.4, key=None) -> list[Bin]:
    """Group samples by ln(token count). Returns occupied bins in ascending order.

    A sample is a Document or a tuple whose first element is one; ``key``
    overrides how the token count is read.
    """
    if width <= 0:
        raise ValueError("bin width must be positive")
    if key is None:
        def key(s):
            doc = s[0] if isinstance(s, tuple) else s
            return doc.token_count
    bins: dict[int, Bin] = {}
    for s in samples:
        n = key(s)
        if n < 1:
            logger.warning("skipping sample with %d tokens", n)
            continue
        i = bin_index(n, width)
        if i not in bins:
            bins[i] = Bin(i, i * width, (i + 1) * width)
        bins[i].samples.append(s)
    return [bins[i] for i in sorted(bins)]


def binned_scores(
    results, corpus: Sequence[Document], width: float, k: int = 10
) -> dict[int, float]:
    """F1@k of one pipeline on each occupied length bin of one dataset."""
    per_doc = per_document_scores(results, corpus, k)
    return {
        b.index: fmean(per_doc[d.id].f1 for d in b.samples)
        for b in bin_by_length(corpus, width)
    }


# ---------------------------------------------------------------- gain analysis

@dataclass
class GainReport:
    width: float
    centers: list[float]
    mean_relative: dict[str, list[float | None]]
    mean_delta: dict[str, list[float | None]]
    pair_delta: list[float | None]
    pair: tuple[str, str]
    transition_interval: tuple[float, float] | None
    per_dataset: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "bin_width": self.width,
            "bin_centers": self.centers,
            "mean_relative_gain": self.mean_relative,
            "mean_absolute_difference": self.mean_delta,
            "pair": list(self.pair),
            "pair_difference": self.pair_delta,
            "transition_interval": list(self.transition_interval) if self.transition_interval else None,
            "per_dataset": self.per_dataset,
            "diagnostics": self.diagnostics,
        }


def _mean_or_none(values: list[float]) -> float | None:
    return fmean(values) if values else None


def gain_analysis(
    scores: Mapping[str, Mapping[str, Mapping[int, float]]],
    width: float,
    base: str = "base",
    pair: tuple[str, str] = ("topic", "knowledge"),
) -> GainReport:
    """Per-bin gains of each pipeline over ``base``, averaged over datasets.

    ``scores[dataset][pipeline][bin_index]`` is the pipeline's F1@10 on that
    bin. For every pipeline i != base and bin b:
    delta = F_i - F_base and relative = delta / F_base (bins with
    F_base = 0 are left out of the relative mean). ``pair = (p1, p2)`` gives
    the difference curve F_p2 - F_p1 whose sign change marks the transition
    interval.
    """
    diagnostics: list[str] = []
    pipelines: list[str] = []
    all_bins: set[int] = set()
    for ds, by_pipe in scores.items():
        if base not in by_pipe:
            raise BinMismatchError(f"dataset {ds!r} has no {base!r} scores")
        ref = set(by_pipe[base])
        for name, bins in by_pipe.items():
            if set(bins) != ref:
                raise BinMismatchError(f"dataset {ds!r}: pipeline {name!r} bins differ from {base!r}")
            if name not in pipelines:
                pipelines.append(name)
        all_bins |= ref
    others = [p for p in pipelines if p != base]
    order = sorted(all_bins)

    per_dataset: dict = {}
    rel: dict[str, dict[int, list[float]]] = {p: {b: [] for b in order} for p in others}
    dlt: dict[str, dict[int, list[float]]] = {p: {b: [] for b in order} for p in others}
    pair_d: dict[int, list[float]] = {b: [] for b in order}
    for ds, by_pipe in scores.items():
        per_dataset[ds] = {}
        for p in others:
            rows = {}
            for b, f_base in by_pipe[base].items():
                d = by_pipe[p][b] - f_base
                dlt[p][b].append(d)
                if f_base == 0:
                    diagnostics.append(f"{ds}/{p}: bin {b} has zero base score, excluded from relative gain")
                    r = None
                else:
                    r = d / f_base
                    rel[p][b].append(r)
                rows[b] = {"delta": d, "relative": r}
            per_dataset[ds][p] = rows
        if pair[0] in by_pipe and pair[1] in by_pipe:
            for b in by_pipe[base]:
                pair_d[b].append(by_pipe[pair[1]][b] - by_pipe[pair[0]][b])

    pair_curve = [_mean_or_none(pair_d[b]) for b in order]
    return GainReport(
        width=width,
        centers=[(b + 0.5) * width for b in order],
        mean_relative={p: [_mean_or_none(rel[p][b]) for b in order] for p in others},
        mean_delta={p: [_mean_or_none(dlt[p][b]) for b in order] for p in others},
        pair_delta=pair_curve,
        pair=pair,
        transition_interval=transition_interval([(b + 0.5) * width for b in order], pair_curve),
        per_dataset=per_dataset,
        diagnostics=diagnostics,
    )


def _sign(x: float | None) -> int:
    if x is None or x == 0:
        return 0
    return 1 if x > 0 else -1


def transition_interval(
    centers: Sequence[float], curve: Sequence[float | None]
) -> tuple[float, float] | None:
    """Bracket where the curve flips sign.

    The lower end is the center of the last bin in the leading run that
    shares the first nonzero sign; the upper end is the center of the first
    bin in the trailing run with the opposite sign. ``None`` when the curve
    never reaches the opposite sign at its tail.
    """
    signs = [_sign(v) for v in curve]
    nonzero = [s for s in signs if s]
    if not nonzero:
        return None
    first = nonzero[0]
    start = signs.index(first)
    i = start
    while i + 1 < len(signs) and signs[i + 1] == first:
        i += 1
    j = len(signs) - 1
    if signs[j] != -first:
        return None
    while j - 1 > i and signs[j - 1] == -first:
        j -= 1
    return (centers[i], centers[j])


def check_threshold(
    interval: tuple[float, float] | GainReport | None, length_threshold: int
) -> tuple[bool, float | None]:
    """Is ln(threshold) inside the interval, and how far is it from the midpoint."""
    if isinstance(interval, GainReport):
        interval = interval.transition_interval
    if interval is None:
        return False, None
    lo, hi = interval
    x = math.log(length_threshold)
    return lo <= x <= hi, abs(x - (lo + hi) / 2)


def write_gain_csv(report: GainReport, path: str | os.PathLike) -> None:
    others = list(report.mean_delta)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["bin_center"]
            + [f"mean_relative_{p}" for p in others]
            + [f"mean_delta_{p}" for p in others]
            + [f"delta_{report.pair[1]}_minus_{report.pair[0]}"]
        )
        for i, c in enumerate(report.centers):
            row = [f"{c:.4f}"]
            for series in (report.mean_relative, report.mean_delta):
                row += ["" if series[p][i] is None else f"{series[p][i]:.6f}" for p in others]
            v = report.pair_delta[i]
            row.append("" if v is None else f"{v:.6f}")
            w.writerow(row)


def load_reference(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
