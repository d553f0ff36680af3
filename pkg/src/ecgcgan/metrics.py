"""Signal-similarity and classification metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


def _pair(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def nrmse(a, b) -> float:
    """RMSE normalized by the range of the reference signal ``b``."""
    a, b = _pair(a, b)
    span = b.max() - b.min()
    if span == 0:
        raise ValueError("reference signal is constant; NRMSE undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)) / span)


def cross_correlation(a, b) -> float:
    """Pearson correlation at zero lag."""
    a, b = _pair(a, b)
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0:
        raise ValueError("zero-variance input; correlation undefined")
    return float(np.clip(np.sum(da * db) / denom, -1.0, 1.0))


def ssim_1d(a, b, window: int = 11, dynamic_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all length-``window`` stride-1 windows, uniform weights.

    Window moments use population (1/n) normalization.
    """
    a, b = _pair(a, b)
    if a.shape[-1] < window:
        raise ValueError(f"signal of length {a.shape[-1]} is shorter than the SSIM window {window}")
    c1, c2 = (k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2
    wa = np.lib.stride_tricks.sliding_window_view(a, window)
    wb = np.lib.stride_tricks.sliding_window_view(b, window)
    mu_a, mu_b = wa.mean(axis=1), wb.mean(axis=1)
    var_a = ((wa - mu_a[:, None]) ** 2).mean(axis=1)
    var_b = ((wb - mu_b[:, None]) ** 2).mean(axis=1)
    cov = ((wa - mu_a[:, None]) * (wb - mu_b[:, None])).mean(axis=1)
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(s.mean())


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties; ``labels`` are 0/1."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def confusion_matrix(predictions, labels, n_classes: int = 4) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    predictions, labels = np.asarray(predictions, dtype=int), np.asarray(labels, dtype=int)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if predictions.size == 0:
        raise ValueError("empty input")
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def _ratio(num, den, flags, what):
    if den == 0:
        flags.append(what)
        return 0.0
    return num / den


@dataclass
class ClassReport:
    support: int
    sensitivity: float
    specificity: float
    precision: float
    f1: float


@dataclass
class ClassificationReport:
    class_names: list[str]
    confusion: np.ndarray
    accuracy: float
    per_class: dict[str, ClassReport]
    auc: float | None = None
    undefined: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n": self.total,
            "confusion": self.confusion.tolist(),
            "class_names": list(self.class_names),
            "per_class": {c: vars(r) for c, r in self.per_class.items()},
            "undefined": list(self.undefined),
        }


def classification_report(predictions, labels, class_names, scores=None) -> ClassificationReport:
    """One-vs-rest sensitivity/specificity/precision/F1 from the confusion matrix.

    A ratio with a zero denominator is reported as 0 and listed in
    ``undefined`` as ``"<class>.<metric>"``. ``scores`` (binary case only)
    are positive-class scores for the AUC.
    """
    k = len(class_names)
    cm = confusion_matrix(predictions, labels, k)
    total = cm.sum()
    undefined: list[str] = []
    per_class = {}
    for i, name in enumerate(class_names):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = total - tp - fn - fp
        sen = _ratio(tp, tp + fn, undefined, f"{name}.sensitivity")
        spec = _ratio(tn, tn + fp, undefined, f"{name}.specificity")
        prec = _ratio(tp, tp + fp, undefined, f"{name}.precision")
        f1 = _ratio(2 * prec * sen, prec + sen, undefined, f"{name}.f1")
        per_class[name] = ClassReport(int(tp + fn), float(sen), float(spec), float(prec), float(f1))
    score_auc = None
    if scores is not None:
        if k != 2:
            raise ValueError("AUC is only reported for binary tasks")
        score_auc = auc(scores, labels)
    return ClassificationReport(list(class_names), cm, float(np.trace(cm) / total), per_class, score_auc, undefined)


SIMILARITY_METRICS = ("mse", "ssim", "cross_correlation", "nrmse")


@dataclass
class SimilarityReport:
    mse: float
    ssim: float
    cross_correlation: float
    nrmse: float
    n_pairs: int
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mse": self.mse, "ssim": self.ssim, "cross_correlation": self.cross_correlation,
            "nrmse": self.nrmse, "n_pairs": self.n_pairs, "per_class": self.per_class,
        }


def pair_metrics(generated, real) -> dict[str, float]:
    return {
        "mse": mse(generated, real),
        "ssim": ssim_1d(generated, real),
        "cross_correlation": cross_correlation(generated, real),
        "nrmse": nrmse(generated, real),
    }


def similarity_report(generated, real, labels=None, class_names=None) -> SimilarityReport:
    """Average each per-pair metric uniformly over all pairs (and per class)."""
    generated, real = np.atleast_2d(generated), np.atleast_2d(real)
    if generated.shape != real.shape:
        raise ValueError("generated and real batches differ in shape")
    if len(real) == 0:
        raise ValueError("no pairs to compare")
    rows = [pair_metrics(g, r) for g, r in zip(generated, real)]
    table = {m: np.array([row[m] for row in rows]) for m in SIMILARITY_METRICS}
    per_class = {}
    if labels is not None:
        labels = np.asarray(labels)
        for i, name in enumerate(class_names):
            mask = labels == i
            if mask.any():
                per_class[name] = {m: float(table[m][mask].mean()) for m in SIMILARITY_METRICS}
                per_class[name]["n_pairs"] = int(mask.sum())
    return SimilarityReport(*(float(table[m].mean()) for m in SIMILARITY_METRICS), len(rows), per_class)
