import json
from pathlib import Path

import numpy as np
import pytest

from crossintent.dataio import (
    Observation,
    Sequence,
    TTEAnnotation,
    balance_classes,
    balance_indices,
    filter_training_samples,
    format_sequence,
    map_label,
    parse_sequence,
    read_sequence,
    read_sequences,
    read_tte_annotations,
    write_sequence,
    write_tte_annotations,
)
from crossintent.errors import (
    IoError,
    NonMonotonicFrameIndex,
    ParseError,
    SchemaVersionMismatch,
    SingleClassData,
    UnknownLabel,
)
from crossintent.forest import C, NC
from crossintent.geometry import BBox

GOLDEN = Path(__file__).parent / "data" / "golden_3frames.jsonl"


def test_golden_fixture():
    seq = read_sequence(GOLDEN)
    assert seq.id == "golden"
    frames = list(seq.frames())
    assert [f for f, _ in frames] == [0, 1, 2]
    assert [len(obs) for _, obs in frames] == [2, 2, 2]
    first = frames[0][1][0]
    assert first.bbox.as_tuple() == (100, 180, 80, 200)
    assert first.score == 0.9
    assert first.skeleton.valid_mask.sum() == 14
    assert first.label == C
    assert frames[2][1][1].occlusion == "partial"
    assert frames[2][1][1].label == NC
    assert frames[2][1][0].bbox.left == 106


def test_round_trip(tmp_path):
    seq = read_sequence(GOLDEN)
    out = tmp_path / "copy.jsonl"
    write_sequence(out, seq)
    again = read_sequence(out)
    assert again == seq
    assert format_sequence(again) == format_sequence(seq)


def test_empty_file_is_empty_sequence(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    seq = read_sequence(p)
    assert seq.observations == [] and seq.id == "empty"


def test_malformed_line_reports_line_number(tmp_path):
    lines = GOLDEN.read_text().splitlines()
    lines[6] = lines[6][:40]
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        read_sequence(p)
    assert err.value.line == 7
    assert "7" in str(err.value)


def test_schema_violation_reports_line_number():
    lines = GOLDEN.read_text().splitlines()
    rec = json.loads(lines[3])
    rec["bbox"] = [0, 0, 10]
    lines[3] = json.dumps(rec)
    with pytest.raises(ParseError) as err:
        parse_sequence("\n".join(lines))
    assert err.value.line == 4


def test_version_mismatch():
    lines = GOLDEN.read_text().splitlines()
    lines[0] = lines[0].replace('"version": 1', '"version": 2')
    with pytest.raises(SchemaVersionMismatch):
        parse_sequence("\n".join(lines))


def test_out_of_order_frames():
    lines = GOLDEN.read_text().splitlines()
    lines[1], lines[6] = lines[6], lines[1]
    with pytest.raises(NonMonotonicFrameIndex):
        parse_sequence("\n".join(lines))


def test_missing_path_is_io_error(tmp_path):
    with pytest.raises(IoError):
        read_sequences(tmp_path / "nope")


def test_directory_read_is_sorted(tmp_path):
    seq = read_sequence(GOLDEN)
    for name in ("b", "a"):
        write_sequence(tmp_path / f"{name}.jsonl", Sequence(name, seq.observations, {}))
    assert [s.id for s in read_sequences(tmp_path)] == ["a", "b"]


@pytest.mark.parametrize(
    "action, direction, label",
    [
        ("crossing", None, C),
        ("moving-fast", "lateral", C),
        ("moving-fast", "longitudinal", NC),
        ("slow-down", "lateral", C),
        ("standing", None, NC),
        ("looking", "lateral", NC),
        ("dancing", None, NC),
    ],
)
def test_label_map(action, direction, label):
    assert map_label(action, direction) == label


def test_unknown_label_strict():
    with pytest.raises(UnknownLabel):
        map_label("dancing", strict=True)


def obs(width=80.0, occlusion="none"):
    return Observation(frame=0, bbox=BBox(0, 0, width, 200), occlusion=occlusion)


def test_training_filter():
    clean = [obs() for _ in range(14)]
    narrow = clean[:7] + [obs(59.0)] + clean[8:]
    occluded = clean[:3] + [obs(occlusion="partial")] + clean[4:]
    boundary = [obs(60.0)] * 14
    kept = filter_training_samples([clean, narrow, occluded, boundary])
    assert kept == [clean, boundary]


def test_balance_quoted_counts():
    labels = [NC] * 8677 + [C] * 36253
    idx = balance_indices(labels, seed=0)
    chosen = np.asarray(labels)[idx]
    assert np.sum(chosen == NC) == 8677 and np.sum(chosen == C) == 8677
    np.testing.assert_array_equal(idx, balance_indices(labels, seed=0))
    assert not np.array_equal(idx, balance_indices(labels, seed=1))


def test_balance_already_balanced_is_identity():
    labels = [C, NC] * 5
    np.testing.assert_array_equal(balance_indices(labels, 3), np.arange(10))
    windows = [{"label": lab} for lab in labels]
    assert balance_classes(windows, 3, label=lambda w: w["label"]) == windows


def test_balance_single_class():
    with pytest.raises(SingleClassData):
        balance_indices([C, C], 0)


def test_tte_sidecar_round_trip(tmp_path):
    anns = [TTEAnnotation("s1", 3, 40, "start_walking_to_cross"), TTEAnnotation("s2", "p7", 12, "keep_walking_to_cross")]
    p = tmp_path / "tte.csv"
    write_tte_annotations(p, anns)
    assert p.read_text().splitlines()[0] == "sequence,gt_id,event_frame,kind"
    assert read_tte_annotations(p) == anns


def test_tte_sidecar_bad_row(tmp_path):
    p = tmp_path / "tte.csv"
    p.write_text("sequence,gt_id,event_frame,kind\ns1,1,x,start_walking_to_cross\n")
    with pytest.raises(ParseError) as err:
        read_tte_annotations(p)
    assert err.value.line == 2
