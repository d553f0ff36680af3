import numpy as np
import pytest

from ecgcgan.data import (
    DS1,
    DS2,
    LABEL_MAP,
    Beat,
    DataError,
    LeadUnavailableError,
    MissingAnnotationsError,
    SplitError,
    SplitPlan,
    TruncatedRecordError,
    UnknownFormatError,
    as_arrays,
    build_split,
    class_counts,
    discover_records,
    extract_beats,
    ingest_record,
    normalize_beat,
    read_beats,
    smote_balance,
    smote_samples,
    write_beats,
)
from ecgcgan.synthetic import toy_beats


def write_record(directory, record_id, signal, annotations, header=None):
    sig = directory / f"{record_id}.sig.csv"
    lines = ([",".join(header)] if header else []) + [
        ",".join(f"{v:.6f}" for v in np.atleast_1d(row)) for row in signal
    ]
    sig.write_text("\n".join(lines) + "\n")
    (directory / f"{record_id}.ann.csv").write_text("".join(f"{i},{s}\n" for i, s in annotations))
    return directory / record_id


def wavy(n, seed=0):
    return np.sin(np.arange(n) / 7.0) + np.random.default_rng(seed).normal(0, 0.05, n)


class TestIngest:
    def test_three_annotated_beats(self, tmp_path):
        path = write_record(tmp_path, "r1", wavy(2000), [(300, "N"), (700, "V"), (1100, "A")])
        rec = ingest_record(path)
        assert rec.record_id == "r1" and len(rec.signal) == 2000
        assert rec.annotations == [(300, "N"), (700, "V"), (1100, "A")]

    def test_lead_selection(self, tmp_path):
        sig = np.column_stack([np.zeros(500), wavy(500)])
        rec = ingest_record(write_record(tmp_path, "r2", sig, [(200, "N")], header=["V5", "MLII"]))
        np.testing.assert_allclose(rec.signal, np.round(wavy(500), 6))

    def test_lead_one_only(self, tmp_path):
        path = write_record(tmp_path, "r3", wavy(500), [(200, "N")], header=["I"])
        with pytest.raises(LeadUnavailableError, match="lead II unavailable"):
            ingest_record(path)

    def test_missing_annotations(self, tmp_path):
        path = write_record(tmp_path, "r4", wavy(500), [])
        (tmp_path / "r4.ann.csv").unlink()
        with pytest.raises(MissingAnnotationsError):
            ingest_record(path)

    def test_truncated_annotation_row(self, tmp_path):
        path = write_record(tmp_path, "r5", wavy(500), [(200, "N")])
        (tmp_path / "r5.ann.csv").write_text("200,N\n300\n")
        with pytest.raises(TruncatedRecordError):
            ingest_record(path)

    def test_annotation_beyond_signal(self, tmp_path):
        path = write_record(tmp_path, "r6", wavy(300), [(200, "N"), (900, "N")])
        with pytest.raises(TruncatedRecordError):
            ingest_record(path)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(UnknownFormatError):
            ingest_record(tmp_path / "x", format="wfdb")
        with pytest.raises(UnknownFormatError):
            ingest_record(tmp_path / "absent")

    def test_errors_are_distinct(self):
        kinds = {UnknownFormatError, MissingAnnotationsError, TruncatedRecordError}
        assert len(kinds) == 3 and all(issubclass(k, DataError) for k in kinds)

    def test_discover(self, tmp_path):
        for rid in ("b", "a"):
            write_record(tmp_path, rid, wavy(300), [(150, "N")])
        assert [p.name for p in discover_records(tmp_path)] == ["a", "b"]


class TestWindows:
    def record(self, tmp_path, n, annotations):
        return ingest_record(write_record(tmp_path, "w", wavy(n), annotations))

    def test_boundary_fit(self, tmp_path):
        signal = wavy(280)
        rec = ingest_record(write_record(tmp_path, "w", signal, [(139, "N")]))
        beats, dropped = extract_beats(rec)
        assert len(beats) == 1 and not dropped
        np.testing.assert_allclose(beats[0].samples, normalize_beat(rec.signal[0:280]))

    def test_underflow_dropped(self, tmp_path):
        beats, dropped = extract_beats(self.record(tmp_path, 280, [(100, "N")]))
        assert beats == [] and dropped["boundary"] == 1

    def test_overflow_dropped(self, tmp_path):
        beats, dropped = extract_beats(self.record(tmp_path, 280, [(140, "N")]))
        assert beats == [] and dropped["boundary"] == 1

    def test_unmapped_and_mapping(self, tmp_path):
        ann = [(300 + 300 * i, s) for i, s in enumerate("NLRejAaJSVEF+Q|")]
        beats, dropped = extract_beats(self.record(tmp_path, 5000, ann))
        assert [b.label for b in beats] == ["N"] * 5 + ["S"] * 4 + ["V"] * 2 + ["F"]
        assert dropped["unmapped"] == 3

    def test_label_map_total(self):
        assert set(LABEL_MAP) == set("NLRejAaJSVEF")

    def test_independent_windowing(self, tmp_path):
        rng = np.random.default_rng(4)
        sig = wavy(6000, 4)
        ann = sorted({int(i) for i in rng.integers(0, 6000, 40)})
        ann = [(i, rng.choice(list("NAVFQ"))) for i in ann]
        rec = ingest_record(write_record(tmp_path, "w", sig, ann))
        beats, _ = extract_beats(rec)
        expected = []
        for i, s in ann:
            if s in "NAVF" and i - 139 >= 0 and i + 141 <= len(rec.signal):
                w = rec.signal[i - 139 : i + 141]
                expected.append(((w - w.min()) / (w.max() - w.min()), {"A": "S"}.get(s, s)))
        assert len(beats) == len(expected)
        for b, (w, label) in zip(beats, expected):
            assert b.label == label
            np.testing.assert_allclose(b.samples, w, atol=1e-12)

    def test_degenerate_dropped(self, tmp_path):
        rec = ingest_record(write_record(tmp_path, "flat", np.zeros(600), [(300, "N")]))
        beats, dropped = extract_beats(rec)
        assert beats == [] and dropped["degenerate"] == 1


class TestNormalize:
    def test_toy(self):
        np.testing.assert_array_equal(normalize_beat([0, 5, 10]), [0, 0.5, 1])

    def test_idempotent(self):
        w = normalize_beat(np.random.default_rng(1).random(280))
        np.testing.assert_array_equal(normalize_beat(w), w)

    def test_exact_extremes(self):
        for seed in range(50):
            w = np.random.default_rng(seed).normal(size=280) * 1e3 + 17
            out = normalize_beat(w)
            assert out.min() == 0.0 and out.max() == 1.0

    def test_constant_rejected(self):
        with pytest.raises(DataError):
            normalize_beat(np.ones(280))


def by_record(beats):
    out = {}
    for b in beats:
        out.setdefault(b.record_id, []).append(b)
    return out


def fake_beat(label, record_id):
    return Beat(np.linspace(0, 1, 280), label, record_id)


class TestSplit:
    def test_intra_counts_and_determinism(self):
        beats = toy_beats(100, seed=2)
        train, test = build_split(by_record(beats), SplitPlan(seed=3))
        assert (len(train), len(test)) == (80, 20)
        again = build_split(by_record(beats), SplitPlan(seed=3))
        assert [id(b) for b in train] == [id(b) for b in again[0]]

    def test_inter_membership(self):
        records = {str(r): [fake_beat("N", str(r))] for r in DS1 + DS2}
        train, test = build_split(records, SplitPlan(mode="inter"))
        assert {b.record_id for b in train} == {str(r) for r in DS1}
        assert {b.record_id for b in test} == {str(r) for r in DS2}

    def test_inter_unknown_record_named(self):
        records = {"101": [fake_beat("N", "101")], "999": [fake_beat("N", "999")]}
        with pytest.raises(SplitError, match="999"):
            build_split(records, SplitPlan(mode="inter"))

    def test_ds_lists(self):
        assert len(DS1) == len(set(DS1)) == 22 and len(DS2) == len(set(DS2)) == 22
        assert not set(DS1) & set(DS2)

    def test_bad_plan(self):
        with pytest.raises(SplitError):
            SplitPlan(mode="cross")
        with pytest.raises(SplitError):
            SplitPlan(train_records=("1",), test_records=("1",))


def class_sized(sizes, seed=0):
    rng = np.random.default_rng(seed)
    return [Beat(rng.random(280), label, f"r{i}") for label, n in sizes.items() for i in range(n)]


class TestSmote:
    def test_balanced(self):
        out = smote_balance(class_sized({"N": 100, "S": 10, "V": 10, "F": 10}), seed=1)
        assert class_counts(out) == {"N": 100, "S": 100, "V": 100, "F": 100}
        assert sum(b.synthetic for b in out) == 270
        assert all(b.record_id == "smote" for b in out if b.synthetic)

    def test_betweenness(self):
        X = np.random.default_rng(3).random((12, 280))
        draws = smote_samples(X, 500, 5, np.random.default_rng(4))
        lo = np.minimum(X[draws.base], X[draws.neighbor])
        hi = np.maximum(X[draws.base], X[draws.neighbor])
        assert np.all(draws.synthetic >= lo - 1e-9) and np.all(draws.synthetic <= hi + 1e-9)
        assert np.all(draws.base != draws.neighbor)

    def test_two_sample_unrolled(self):
        X = np.random.default_rng(5).random((2, 280))
        rng = np.random.default_rng(9)
        draws = smote_samples(X, 3, 5, np.random.default_rng(9))
        base = rng.integers(0, 2, size=3)
        rng.integers(0, 1, size=3)  # neighbor slot: k clips to 1, only slot 0
        gap = rng.random(3)
        for j in range(3):
            a, b = X[base[j]], X[1 - base[j]]
            np.testing.assert_allclose(draws.synthetic[j], a + gap[j] * (b - a), rtol=0, atol=1e-15)

    def test_neighbors_are_nearest(self):
        X = np.random.default_rng(6).random((30, 280))
        draws = smote_samples(X, 200, 3, np.random.default_rng(7))
        d = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d, np.inf)
        nearest = np.argsort(d, axis=1)[:, :3]
        for b, n in zip(draws.base, draws.neighbor):
            assert n in nearest[b]

    def test_single_sample_class_rejected(self):
        with pytest.raises(DataError):
            smote_balance(class_sized({"N": 5, "S": 1}))

    def test_deterministic(self):
        train = class_sized({"N": 20, "V": 4})
        a = as_arrays(smote_balance(train, seed=2))[0]
        b = as_arrays(smote_balance(train, seed=2))[0]
        assert a.tobytes() == b.tobytes()


class TestBeatsFile:
    def test_round_trip(self, tmp_path):
        beats = toy_beats(8)
        write_beats(beats, tmp_path / "b.csv")
        back = read_beats(tmp_path / "b.csv")
        assert [(b.label, b.record_id) for b in back] == [(b.label, b.record_id) for b in beats]
        np.testing.assert_allclose(as_arrays(back)[0], as_arrays(beats)[0], atol=1e-8)

    def test_flags_column(self, tmp_path):
        beats = toy_beats(2)
        beats[1].synthetic = True
        write_beats(beats, tmp_path / "f.csv")
        assert (tmp_path / "f.csv").read_text().startswith("record_id,label,synthetic,s0,")
        assert [b.synthetic for b in read_beats(tmp_path / "f.csv")] == [False, True]

    def test_bad_files(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(DataError):
            read_beats(tmp_path / "e.csv")
        (tmp_path / "h.csv").write_text("a,b\n")
        with pytest.raises(UnknownFormatError):
            read_beats(tmp_path / "h.csv")
        write_beats(toy_beats(1), tmp_path / "t.csv")
        text = (tmp_path / "t.csv").read_text().rsplit(",", 5)[0] + "\n"
        (tmp_path / "t.csv").write_text(text)
        with pytest.raises(TruncatedRecordError):
            read_beats(tmp_path / "t.csv")

    def test_unknown_label(self):
        with pytest.raises(DataError):
            Beat(np.zeros(280), "Q", "r")

    def test_empty_counts(self):
        assert class_counts([]) == {"N": 0, "S": 0, "V": 0, "F": 0}
