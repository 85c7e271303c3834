"""Classification (P/R/F1) and clustering (NMI, ARI) metrics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .classify import LABEL_ORDER, Label

NOISE_LABELS = ("noise", -1)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def prf1(counts: BinaryCounts) -> tuple[float, float, float]:
    p = _div(counts.tp, counts.tp + counts.fp)
    r = _div(counts.tp, counts.tp + counts.fn)
    return p, r, _div(2 * p * r, p + r)


def weighted_prf1(metrics: Sequence[tuple[float, float, float]],
                  supports: Sequence[int]) -> tuple[float, float, float]:
    if len(metrics) != len(supports):
        raise EvaluationError("one support per label is required")
    total = sum(supports)
    if total <= 0:
        raise EvaluationError("all supports are zero")
    return tuple(sum(m[i] * s for m, s in zip(metrics, supports)) / total for i in range(3))


def binary_counts(truth: Mapping[str, frozenset], pred: Mapping[str, frozenset],
                  label: Label) -> BinaryCounts:
    tp = fp = fn = tn = 0
    for rid, t in truth.items():
        in_t, in_p = label in t, label in pred[rid]
        if in_t and in_p:
            tp += 1
        elif in_p:
            fp += 1
        elif in_t:
            fn += 1
        else:
            tn += 1
    return BinaryCounts(tp, fp, fn, tn)


def _check_ids(truth_ids, pred_ids) -> None:
    missing = sorted(set(truth_ids) - set(pred_ids))
    extra = sorted(set(pred_ids) - set(truth_ids))
    if missing or extra:
        raise EvaluationError(
            f"id sets differ: missing predictions for {missing[:10]}, unexpected {extra[:10]}"
        )


def classification_report(truth: Mapping[str, frozenset], pred: Mapping[str, frozenset]) -> dict:
    """Per-label binary metrics plus their support-weighted average."""
    _check_ids(truth, pred)
    per_label = {}
    metrics, supports = [], []
    for label in LABEL_ORDER:
        c = binary_counts(truth, pred, label)
        p, r, f = prf1(c)
        per_label[label.value] = {"precision": p, "recall": r, "f1": f, "support": c.support,
                                  "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}
        metrics.append((p, r, f))
        supports.append(c.support)
    wp, wr, wf = weighted_prf1(metrics, supports)
    return {"per_label": per_label,
            "weighted": {"precision": wp, "recall": wr, "f1": wf},
            "n_evaluated": len(truth)}


@dataclass(frozen=True)
class PartitionPair:
    ids: tuple[str, ...]
    truth: tuple[Hashable, ...]
    pred: tuple[Hashable, ...]

    def __post_init__(self):
        if not (len(self.ids) == len(self.truth) == len(self.pred)):
            raise EvaluationError("partition pair is not aligned")

    @classmethod
    def from_maps(cls, truth: Mapping[str, Hashable], pred: Mapping[str, Hashable]) -> PartitionPair:
        _check_ids(truth, pred)
        ids = tuple(sorted(truth))
        return cls(ids, tuple(truth[i] for i in ids), tuple(pred[i] for i in ids))

    def contingency(self) -> np.ndarray:
        rows = {u: i for i, u in enumerate(dict.fromkeys(self.truth))}
        cols = {v: j for j, v in enumerate(dict.fromkeys(self.pred))}
        table = np.zeros((len(rows), len(cols)), dtype=np.int64)
        for u, v in zip(self.truth, self.pred):
            table[rows[u], cols[v]] += 1
        return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pair: PartitionPair, average: str = "arithmetic") -> float:
    n = len(pair.ids)
    if n < 1:
        raise EvaluationError("nmi needs at least one element")
    table = pair.contingency()
    a, b = table.sum(axis=1), table.sum(axis=0)
    hu, hv = _entropy(a, n), _entropy(b, n)
    if hu == 0 and hv == 0:
        return 1.0
    if hu == 0 or hv == 0:
        return 0.0
    nz = table > 0
    nij = table[nz].astype(np.float64)
    outer = np.outer(a, b)[nz].astype(np.float64)
    mi = float((nij / n * np.log(nij * n / outer)).sum())
    if average == "arithmetic":
        norm = (hu + hv) / 2
    elif average == "geometric":
        norm = math.sqrt(hu * hv)
    elif average == "max":
        norm = max(hu, hv)
    else:
        raise ValueError(f"unknown NMI normalization {average!r}")
    return min(1.0, max(0.0, mi / norm))


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def ari(pair: PartitionPair) -> float:
    n = len(pair.ids)
    if n < 2:
        raise EvaluationError("ari needs at least two elements")
    table = pair.contingency()
    index = int(_comb2(table).sum())
    sum_a = int(_comb2(table.sum(axis=1)).sum())
    sum_b = int(_comb2(table.sum(axis=0)).sum())
    expected = sum_a * sum_b / (n * (n - 1) // 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def filter_min_size(pair: PartitionPair, min_size: int = 5) -> PartitionPair:
    """Keep ids whose true cluster has >= min_size members.

    Predicted noise among the kept ids becomes one singleton cluster per point.
    """
    sizes = Counter(pair.truth)
    keep = [i for i, t in enumerate(pair.truth) if sizes[t] >= min_size]
    if not keep:
        raise EvaluationError("no evaluable clusters")
    pred = []
    for i in keep:
        p = pair.pred[i]
        pred.append(("__noise__", pair.ids[i]) if p in NOISE_LABELS else p)
    return PartitionPair(tuple(pair.ids[i] for i in keep), tuple(pair.truth[i] for i in keep),
                         tuple(pred))


def clustering_report(pair: PartitionPair, min_size: int = 5, average: str = "arithmetic") -> dict:
    kept = filter_min_size(pair, min_size)
    return {"nmi": nmi(kept, average), "ari": ari(kept), "n_evaluated": len(kept.ids),
            "nmi_average": average, "min_size": min_size}
