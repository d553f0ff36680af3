"""Record ingestion, beat extraction, splitting and SMOTE balancing.

Raw records come as a pair of CSV files: ``<id>.sig.csv`` holds one lead-II
amplitude per line (or several named leads with a header row) and
``<id>.ann.csv`` holds ``sample_index,symbol`` lines. Beats are exchanged as
a canonical CSV with a header row, one beat per row:
``record_id,label,s0,...,s279`` (an optional ``synthetic`` column may follow
``label``).
"""

from __future__ import annotations

import csv
import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

LABELS = ("N", "S", "V", "F")
LABEL_INDEX = {c: i for i, c in enumerate(LABELS)}
BEAT_LENGTH = 280
BEFORE_PEAK = 139  # samples before the annotated R-peak; 140 follow it

# AAMI grouping of MIT-BIH beat symbols; everything else is excluded
LABEL_MAP = {
    **dict.fromkeys("NLRej", "N"),
    **dict.fromkeys("AaJS", "S"),
    **dict.fromkeys("VE", "V"),
    "F": "F",
}

# De Chazal inter-patient division
DS1 = (101, 106, 108, 109, 112, 114, 115, 116, 118, 119, 122, 124,
       201, 203, 205, 207, 208, 209, 215, 220, 223, 230)
DS2 = (100, 103, 105, 111, 113, 117, 121, 123, 200, 202, 210, 212,
       213, 214, 219, 221, 222, 228, 231, 232, 233, 234)

LEAD_II_NAMES = ("MLII", "II")


class DataError(ValueError):
    pass


class UnknownFormatError(DataError):
    pass


class MissingAnnotationsError(DataError):
    pass


class TruncatedRecordError(DataError):
    pass


class LeadUnavailableError(DataError):
    pass


class DegenerateBeatError(DataError):
    pass


class SplitError(DataError):
    pass


@dataclass
class Beat:
    samples: np.ndarray
    label: str
    record_id: str
    r_peak_index: int = -1
    synthetic: bool = False

    def __post_init__(self):
        if self.label not in LABEL_INDEX:
            raise DataError(f"unknown beat label {self.label!r}")


@dataclass
class RecordSource:
    record_id: str
    signal: np.ndarray
    annotations: list[tuple[int, str]]


@dataclass
class SplitPlan:
    mode: str = "intra"
    train_fraction: float = 0.8
    seed: int = 0
    train_records: tuple[str, ...] = field(default_factory=lambda: tuple(str(r) for r in DS1))
    test_records: tuple[str, ...] = field(default_factory=lambda: tuple(str(r) for r in DS2))

    def __post_init__(self):
        if self.mode not in ("intra", "inter"):
            raise SplitError(f"split mode must be 'intra' or 'inter', not {self.mode!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise SplitError("train_fraction must lie strictly between 0 and 1")
        if set(self.train_records) & set(self.test_records):
            raise SplitError("train and test record lists overlap")

    def describe(self) -> dict:
        d = {"mode": self.mode, "seed": self.seed}
        if self.mode == "intra":
            d["train_fraction"] = self.train_fraction
        else:
            d["train_records"] = list(self.train_records)
            d["test_records"] = list(self.test_records)
        return d


# --------------------------------------------------------------------------
# ingestion


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_signal(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise TruncatedRecordError(f"{path}: empty signal file")
    column = 0
    if not _is_number(rows[0][0]):
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        matches = [i for i, h in enumerate(header) if h in LEAD_II_NAMES]
        if not matches:
            raise LeadUnavailableError(f"{path}: lead II unavailable (leads: {', '.join(header)})")
        column = matches[0]
    try:
        return np.array([float(r[column]) for r in rows])
    except (IndexError, ValueError):
        raise TruncatedRecordError(f"{path}: malformed or truncated signal row") from None


def _read_annotations(path: Path) -> list[tuple[int, str]]:
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(row) < 2 or not row[1].strip():
                raise TruncatedRecordError(f"{path}:{lineno}: annotation row is incomplete")
            try:
                out.append((int(row[0]), row[1].strip()))
            except ValueError:
                raise TruncatedRecordError(f"{path}:{lineno}: bad sample index {row[0]!r}") from None
    return out


def record_paths(path) -> tuple[Path, Path, str]:
    """Resolve ``<dir>/<id>``, ``<id>.sig.csv`` or ``<id>.ann.csv`` to the file pair."""
    path = Path(path)
    name = path.name
    for suffix in (".sig.csv", ".ann.csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    base = path.parent / name
    return base.parent / f"{name}.sig.csv", base.parent / f"{name}.ann.csv", name


def ingest_record(path, format: str = "csv-pair") -> RecordSource:
    """Load one raw record; only the paired-CSV format is supported."""
    if format != "csv-pair":
        raise UnknownFormatError(f"unknown record format {format!r} (supported: csv-pair)")
    sig_path, ann_path, record_id = record_paths(path)
    if not sig_path.exists():
        raise UnknownFormatError(f"{sig_path}: no such signal file")
    if not ann_path.exists():
        raise MissingAnnotationsError(f"{record_id}: annotation file {ann_path.name} missing")
    signal = _read_signal(sig_path)
    annotations = _read_annotations(ann_path)
    idx = [i for i, _ in annotations]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise DataError(f"{record_id}: annotation indices are not strictly increasing")
    if idx and (idx[0] < 0 or idx[-1] >= len(signal)):
        raise TruncatedRecordError(
            f"{record_id}: annotation at sample {idx[-1]} beyond signal of length {len(signal)}"
        )
    return RecordSource(record_id, signal, annotations)


def discover_records(raw_dir) -> list[Path]:
    raw_dir = Path(raw_dir)
    return sorted(raw_dir / p.name[: -len(".sig.csv")] for p in raw_dir.glob("*.sig.csv"))


# --------------------------------------------------------------------------
# beats


def normalize_beat(window) -> np.ndarray:
    """Min-max scale to exactly [0, 1]."""
    w = np.asarray(window, dtype=float)
    lo, hi = w.min(), w.max()
    if hi == lo:
        raise DegenerateBeatError("constant window cannot be normalized")
    out = (w - lo) / (hi - lo)
    # pin the extremes against round-off
    out[w == lo] = 0.0
    out[w == hi] = 1.0
    return out


def extract_beats(record: RecordSource, label_map: dict[str, str] = LABEL_MAP) -> tuple[list[Beat], Counter]:
    """Cut a normalized 280-sample window around every mapped annotation.

    The window starts ``BEFORE_PEAK`` samples before the annotated R-peak.
    Returns the beats and a counter of skipped annotations
    (``unmapped``, ``boundary``, ``degenerate``).
    """
    beats, dropped = [], Counter()
    n = len(record.signal)
    for idx, symbol in record.annotations:
        label = label_map.get(symbol)
        if label is None:
            dropped["unmapped"] += 1
            continue
        start = idx - BEFORE_PEAK
        if start < 0 or start + BEAT_LENGTH > n:
            dropped["boundary"] += 1
            continue
        try:
            samples = normalize_beat(record.signal[start : start + BEAT_LENGTH])
        except DegenerateBeatError:
            dropped["degenerate"] += 1
            continue
        beats.append(Beat(samples, label, record.record_id, idx))
    return beats, dropped


def class_counts(beats: Iterable[Beat]) -> dict[str, int]:
    counts = dict.fromkeys(LABELS, 0)
    for b in beats:
        counts[b.label] += 1
    return counts


def as_arrays(beats: list[Beat]) -> tuple[np.ndarray, np.ndarray]:
    """Stack beats into ``(samples [n, 280], integer labels [n])``."""
    if not beats:
        return np.zeros((0, BEAT_LENGTH)), np.zeros(0, dtype=int)
    return np.stack([b.samples for b in beats]), np.array([LABEL_INDEX[b.label] for b in beats])


# --------------------------------------------------------------------------
# splitting and balancing


def build_split(beats_by_record: dict[str, list[Beat]], plan: SplitPlan) -> tuple[list[Beat], list[Beat]]:
    records = sorted(beats_by_record)
    if plan.mode == "inter":
        train_ids, test_ids = set(plan.train_records), set(plan.test_records)
        for r in records:
            if r not in train_ids and r not in test_ids:
                raise SplitError(f"record {r} is in neither the training nor the test list")
        train = [b for r in records if r in train_ids for b in beats_by_record[r]]
        test = [b for r in records if r in test_ids for b in beats_by_record[r]]
        return train, test
    pooled = [b for r in records for b in beats_by_record[r]]
    order = np.random.default_rng(plan.seed).permutation(len(pooled))
    n_train = int(round(plan.train_fraction * len(pooled)))
    return [pooled[i] for i in order[:n_train]], [pooled[i] for i in order[n_train:]]


@dataclass
class SmoteDraws:
    synthetic: np.ndarray  # [m, d], before clipping
    base: np.ndarray  # [m] row index of the base sample
    neighbor: np.ndarray  # [m] row index of the interpolation partner
    gap: np.ndarray  # [m] interpolation weight in [0, 1)


def smote_samples(X: np.ndarray, n_new: int, k_neighbors: int, rng: np.random.Generator) -> SmoteDraws:
    """Draw ``n_new`` SMOTE interpolants from the rows of ``X``.

    RNG order: base indices, then neighbor slots, then gaps, each as one
    vectorized call.
    """
    from sklearn.neighbors import NearestNeighbors

    n = len(X)
    if n < 2:
        raise DataError("SMOTE needs at least 2 samples of a class to interpolate")
    k = min(k_neighbors, n - 1)
    nn = NearestNeighbors(n_neighbors=k + 1, algorithm="brute").fit(X)
    _, neigh = nn.kneighbors(X)
    # drop each point itself; with duplicates it may not sit in column 0
    table = np.empty((n, k), dtype=int)
    for i in range(n):
        row = [j for j in neigh[i] if j != i][:k]
        table[i] = row
    base = rng.integers(0, n, size=n_new)
    slot = rng.integers(0, k, size=n_new)
    gap = rng.random(n_new)
    partner = table[base, slot]
    synthetic = X[base] + gap[:, None] * (X[partner] - X[base])
    return SmoteDraws(synthetic, base, partner, gap)


def smote_balance(train: list[Beat], k_neighbors: int = 5, seed: int = 0) -> list[Beat]:
    """Oversample every class present up to the majority-class count.

    Original beats come first, in input order; synthetic beats follow,
    class by class in N/S/V/F order.
    """
    counts = class_counts(train)
    target = max(counts.values(), default=0)
    rng = np.random.default_rng(seed)
    out = list(train)
    for label in LABELS:
        have = counts[label]
        if have == 0 or have == target:
            continue
        members = [b for b in train if b.label == label]
        X = np.stack([b.samples for b in members])
        draws = smote_samples(X, target - have, k_neighbors, rng)
        for row in np.clip(draws.synthetic, 0.0, 1.0):
            out.append(Beat(row, label, "smote", -1, True))
    return out


# --------------------------------------------------------------------------
# canonical beats file


def write_beats(beats: Iterable[Beat], path, with_flags: bool | None = None) -> None:
    beats = list(beats)
    if with_flags is None:
        with_flags = any(b.synthetic for b in beats)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "label"] + (["synthetic"] if with_flags else [])
                   + [f"s{i}" for i in range(BEAT_LENGTH)])
        for b in beats:
            w.writerow([b.record_id, b.label] + ([int(b.synthetic)] if with_flags else [])
                       + [f"{v:.8g}" for v in b.samples])


def read_beats(path) -> list[Beat]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty beats file") from None
        if header[:2] != ["record_id", "label"]:
            raise UnknownFormatError(f"{path}: not a beats file (header must start record_id,label)")
        flags = len(header) > 2 and header[2] == "synthetic"
        first = 3 if flags else 2
        if len(header) - first != BEAT_LENGTH:
            raise DataError(f"{path}: expected {BEAT_LENGTH} sample columns, found {len(header) - first}")
        beats = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise TruncatedRecordError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                samples = np.array(row[first:], dtype=float)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric sample") from None
            beats.append(Beat(samples, row[1], row[0], -1, bool(int(row[2])) if flags else False))
    return beats


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
