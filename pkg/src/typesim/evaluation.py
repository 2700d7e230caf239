"""Evaluation harness: match criteria, strata, and weighted metrics.

A datapoint matches at top-n when any of the first n ranked candidates
matches its ground truth, exactly (string equality of canonical forms) or
parametrically (equality of the outermost constructors). Types seen more
than `common_threshold` times in the training set are common, all others
rare. Weighted precision/recall/F1 are computed on the top-1 assignment
per the standard support-weighted multiclass definitions, so weighted
recall at top-1 equals top-1 exact-match accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .cluster import Prediction
from .errors import EmptyEvaluation

COMMON_THRESHOLD = 100

TASKS = ("combined", "argument", "return")
STRATA = ("all", "common", "rare")
CRITERIA = ("exact", "parametric")


def base_of(canonical: str) -> str:
    """Outermost constructor: the canonical form up to the first '['."""
    bracket = canonical.find("[")
    return canonical if bracket < 0 else canonical[:bracket].strip()


def match_exact(pred: str, truth: str) -> bool:
    return pred == truth


def match_parametric(pred: str, truth: str) -> bool:
    return base_of(pred) == base_of(truth)


def stratify(train_counts: Mapping[str, int], type_name: str) -> str:
    """'common' for types seen more than COMMON_THRESHOLD times in the
    train set, 'rare' otherwise (unseen types are rare)."""
    return "common" if train_counts.get(type_name, 0) > COMMON_THRESHOLD else "rare"


@dataclass
class EvalReport:
    """Match rates per task/criterion/stratum plus weighted top-1 metrics."""

    top_n: int
    match_rates: dict = field(default_factory=dict)   # task -> criterion -> stratum -> pct
    weighted: dict = field(default_factory=dict)      # task -> {f1, recall, precision}
    counts: dict = field(default_factory=dict)        # task -> stratum -> n
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "top_n": self.top_n,
            "match_rates": self.match_rates,
            "weighted": self.weighted,
            "counts": self.counts,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            top_n=d["top_n"],
            match_rates=d["match_rates"],
            weighted=d["weighted"],
            counts=d["counts"],
            notes=d.get("notes", {}),
        )

    def render_table(self) -> str:
        header = (
            f"{'Task':<10} | {'% Exact Match':^23} | {'% Parametric Match':^23} | "
            f"{'% Weighted Metrics':^26}\n"
            f"{'':<10} | {'All':>7}{'Common':>8}{'Rare':>8} | "
            f"{'All':>7}{'Common':>8}{'Rare':>8} | "
            f"{'F1':>8}{'Recall':>9}{'Precision':>9}"
        )
        lines = [header]
        for task in TASKS:
            rates = self.match_rates[task]
            weighted = self.weighted[task]
            lines.append(
                f"{task:<10} | "
                f"{rates['exact']['all']:>7.2f}{rates['exact']['common']:>8.2f}{rates['exact']['rare']:>8.2f} | "
                f"{rates['parametric']['all']:>7.2f}{rates['parametric']['common']:>8.2f}{rates['parametric']['rare']:>8.2f} | "
                f"{100 * weighted['f1']:>8.2f}{100 * weighted['recall']:>9.2f}{100 * weighted['precision']:>9.2f}"
            )
        return "\n".join(lines)


def _weighted_prf(assigned: Sequence[Optional[str]], truths: Sequence[str]) -> dict:
    """Support-weighted precision/recall/F1 over the top-1 assignment."""
    support: dict[str, int] = {}
    tp: dict[str, int] = {}
    predicted: dict[str, int] = {}
    for pred, truth in zip(assigned, truths):
        support[truth] = support.get(truth, 0) + 1
        if pred is not None:
            predicted[pred] = predicted.get(pred, 0) + 1
        if pred == truth:
            tp[truth] = tp.get(truth, 0) + 1
    total = len(truths)
    precision = recall = f1 = 0.0
    for cls, sup in support.items():
        cls_tp = tp.get(cls, 0)
        cls_pred = predicted.get(cls, 0)
        p = cls_tp / cls_pred if cls_pred else 0.0
        r = cls_tp / sup
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        weight = sup / total
        precision += weight * p
        recall += weight * r
        f1 += weight * f
    return {"precision": precision, "recall": recall, "f1": f1}


def evaluate(
    predictions: Sequence[tuple[Prediction, str]],
    n: int,
    train_counts: Mapping[str, int],
) -> EvalReport:
    """Score (Prediction, ground-truth) pairs at top-n.

    Match-rate columns count a datapoint as matched when any of its first n
    candidates matches; weighted metrics always use the top-1 assignment.
    """
    if not predictions:
        raise EmptyEvaluation("no (prediction, truth) pairs to evaluate")

    rows = []
    for pred, truth in predictions:
        candidates = [t for t, _ in pred.top_n(n)]
        top1 = candidates[0] if candidates else None
        rows.append(
            {
                "kind": pred.kind if pred.kind in ("argument", "return") else "argument",
                "stratum": stratify(train_counts, truth),
                "exact": any(match_exact(c, truth) for c in candidates),
                "parametric": any(match_parametric(c, truth) for c in candidates),
                "top1": top1,
                "truth": truth,
            }
        )

    report = EvalReport(top_n=n)
    report.notes = {
        "common_threshold": COMMON_THRESHOLD,
        "weighted_metrics": "support-weighted over top-1 exact assignment",
        "match_rates": "micro (per-datapoint) at top-n",
    }
    for task in TASKS:
        selected = [r for r in rows if task == "combined" or r["kind"] == task]
        rates: dict = {}
        counts: dict = {}
        for criterion in CRITERIA:
            rates[criterion] = {}
            for stratum in STRATA:
                subset = [
                    r
                    for r in selected
                    if stratum == "all" or r["stratum"] == stratum
                ]
                hits = sum(1 for r in subset if r[criterion])
                rates[criterion][stratum] = (
                    100.0 * hits / len(subset) if subset else 0.0
                )
        for stratum in STRATA:
            counts[stratum] = sum(
                1 for r in selected if stratum == "all" or r["stratum"] == stratum
            )
        report.match_rates[task] = rates
        report.counts[task] = counts
        if selected:
            report.weighted[task] = _weighted_prf(
                [r["top1"] for r in selected], [r["truth"] for r in selected]
            )
        else:
            report.weighted[task] = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    return report


def type_frequency_report(labels: Sequence[str]) -> dict:
    """Descending frequency histogram and the share of the 10 most
    frequent types."""
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    histogram = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    total = len(labels)
    top10 = sum(c for _, c in histogram[:10])
    return {
        "histogram": [[t, c] for t, c in histogram],
        "total": total,
        "unique": len(histogram),
        "top10_share_percent": 100.0 * top10 / total if total else 0.0,
    }
