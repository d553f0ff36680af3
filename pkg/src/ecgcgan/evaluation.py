"""Generator similarity and discriminator classification/detection protocols."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LABELS
from .metrics import (
    SIMILARITY_METRICS,
    ClassificationReport,
    SimilarityReport,
    classification_report,
    similarity_report,
)
from .models import make_noise, one_hot

DETECTION_CLASSES = ["real", "adversarial"]


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def synthesize(G, x, labels, seed: int = 0, sigma: float = 4.0, batch_size: int = 256) -> np.ndarray:
    """One generated beat per input beat, conditioned on its own label.

    Noise for the whole set is drawn up front from ``seed`` so the result
    does not depend on ``batch_size``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if len(x) == 0:
        return np.zeros_like(x)
    z = make_noise(np.random.default_rng(seed), len(x), sigma, x.shape[1])
    y = one_hot(labels)
    out = np.empty_like(x)
    for sl in _chunks(len(x), batch_size):
        out[sl] = G(x[sl], y[sl], z[sl])
    return out


def discriminate(D, s, labels, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    y = one_hot(labels)
    conditioned = getattr(D, "condition_on_label", False)
    probs, real = [], []
    for sl in _chunks(len(s), batch_size):
        p, r = D(s[sl], y[sl]) if conditioned else D(s[sl])
        probs.append(np.asarray(p, dtype=float))
        real.append(np.asarray(r, dtype=float).reshape(-1))
    return np.concatenate(probs), np.concatenate(real)


def evaluate_generator(G, x, labels, seed: int = 0, sigma: float = 4.0) -> SimilarityReport:
    generated = synthesize(G, x, labels, seed, sigma)
    return similarity_report(generated, x, labels, LABELS)


@dataclass
class DiscriminatorEvaluation:
    real: ClassificationReport
    adversarial: ClassificationReport
    detection: ClassificationReport
    detection_size: int
    # per-beat adversarial scores and truth (1 = generated), kept for ROC plots
    detection_scores: np.ndarray | None = None
    detection_truth: np.ndarray | None = None


def evaluate_discriminator(D, x, labels, G, seed: int = 0, sigma: float = 4.0,
                           adversarial: np.ndarray | None = None) -> DiscriminatorEvaluation:
    """Four-class accuracy on real and generated beats plus 50/50 detection.

    The detection set is the union of the ``n`` real beats and the ``n``
    beats generated from them; "adversarial" is the positive class and its
    score is ``1 - realness``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if adversarial is None:
        adversarial = synthesize(G, x, labels, seed, sigma)
    p_real, r_real = discriminate(D, x, labels)
    p_adv, r_adv = discriminate(D, adversarial, labels)
    cls_real = classification_report(p_real.argmax(axis=1), labels, LABELS)
    cls_adv = classification_report(p_adv.argmax(axis=1), labels, LABELS)
    realness = np.concatenate([r_real, r_adv])
    truth = np.concatenate([np.zeros(len(x), int), np.ones(len(adversarial), int)])
    detection = classification_report((realness < 0.5).astype(int), truth, DETECTION_CLASSES, 1.0 - realness)
    return DiscriminatorEvaluation(cls_real, cls_adv, detection, len(truth), 1.0 - realness, truth)


# -- report files -------------------------------------------------------------


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.6f}"


def write_similarity_csv(report: SimilarityReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "n_pairs", *SIMILARITY_METRICS])
        w.writerow(["all", report.n_pairs, *(_fmt(getattr(report, m)) for m in SIMILARITY_METRICS)])
        for name in LABELS:
            row = report.per_class.get(name)
            if row is None:
                w.writerow([name, 0, *(["NA"] * len(SIMILARITY_METRICS))])
            else:
                w.writerow([name, row["n_pairs"], *(_fmt(row[m]) for m in SIMILARITY_METRICS)])


def write_classification_csv(report: ClassificationReport, path) -> None:
    """Table shaped like the per-class SEN/SPEC tables: one row, class-major columns."""
    header = ["accuracy"]
    row = [_fmt(report.accuracy)]
    for name in report.class_names:
        c = report.per_class[name]
        for metric in ("sensitivity", "specificity", "precision", "f1"):
            header.append(f"{name}_{metric}")
            row.append("NA" if c.support == 0 and metric in ("sensitivity", "f1") else _fmt(getattr(c, metric)))
        header.append(f"{name}_support")
        row.append(str(c.support))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(row)


def write_detection_csv(report: ClassificationReport, path) -> None:
    header = ["accuracy"]
    row = [_fmt(report.accuracy)]
    for metric in ("sensitivity", "precision", "f1"):
        for name in report.class_names:
            header.append(f"{metric}_{name}")
            row.append(_fmt(getattr(report.per_class[name], metric)))
    header.append("auc")
    row.append(_fmt(report.auc))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(row)


def write_reports(sim: SimilarityReport, disc: DiscriminatorEvaluation, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "similarity.json").write_text(json.dumps(sim.to_dict(), indent=2, sort_keys=True) + "\n")
    write_similarity_csv(sim, out_dir / "similarity.csv")
    write_classification_csv(disc.real, out_dir / "classification_real.csv")
    write_classification_csv(disc.adversarial, out_dir / "classification_adv.csv")
    write_detection_csv(disc.detection, out_dir / "detection.csv")
    summary = {
        "similarity": sim.to_dict(),
        "classification_real": disc.real.to_dict(),
        "classification_adv": disc.adversarial.to_dict(),
        "detection": disc.detection.to_dict(),
        "detection_size": disc.detection_size,
    }
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
