from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tabal import io as tio
from tabal.config import BudgetConfig, RunConfig
from tabal.evaluation import evaluate
from tabal.geometry import BinaryMask
from tabal.loop import SelectionRound
from tabal.sampler import CandidateList
from tabal.scoring import Detection, PredictionRecord, score_all
from tabal.simulator import Hardness, SyntheticImage, generate_corpus

from conftest import box

FIXTURES = Path(__file__).resolve().parents[1] / "docs" / "formats" / "fixtures"


def rewrite(write, read, obj, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write(obj, a)
    back = read(a)
    write(back, b)
    assert a.read_bytes() == b.read_bytes()
    return back


def random_images(rng, n):
    out = []
    for i in range(n):
        boxes = []
        for _ in range(rng.integers(0, 4)):
            x0, y0 = rng.uniform(0, 100, 2)
            boxes.append(box(x0, y0, x0 + rng.uniform(0, 50), y0 + rng.uniform(0, 50)))
        hardness = Hardness(int(rng.integers(5)), bool(rng.random() < 0.5), len(boxes)) if i % 3 else None
        out.append(SyntheticImage(f"img-{i:05d}-é", 160, 160, boxes, hardness))
    return out


def random_predictions(rng, n, size=24):
    out = []
    for i in range(n):
        dets = []
        for _ in range(rng.integers(0, 4)):
            x0, y0 = rng.uniform(0, size, 2)
            dets.append(Detection(box(x0, y0, x0 + rng.uniform(0, 9), y0 + rng.uniform(0, 9)), float(rng.random())))
        mask = BinaryMask(size, size, rng.random((size, size)) < 0.4) if i % 2 else None
        out.append(PredictionRecord(f"p{i}", size, size, dets, mask))
    return out


def test_fmt_float():
    assert tio.fmt_float(0.1234567891) == 0.123457
    assert tio.fmt_float(1234567.0) == 1234570.0
    assert tio._dumps({"a": tio.fmt_float(5.0), "b": tio.fmt_float(1e-7)}) == '{"a":5.0,"b":1e-07}'
    with pytest.raises(ValueError):
        tio.fmt_float(float("nan"))


def test_dataset_round_trip(tmp_path, rng):
    images = random_images(rng, 1000)
    back = rewrite(tio.write_dataset, tio.read_dataset, images, tmp_path)
    assert [im.image_id for im in back] == [im.image_id for im in images]
    assert [im.hardness for im in back] == [im.hardness for im in images]


def test_dataset_exact_fields(tmp_path):
    im = SyntheticImage("a", 10, 20, [box(1, 2, 3, 4)], Hardness(2, True, 1))
    tio.write_dataset([im], tmp_path / "d.jsonl")
    assert tio.read_dataset(tmp_path / "d.jsonl") == [im]
    (tmp_path / "e.jsonl").write_text("")
    assert tio.read_dataset(tmp_path / "e.jsonl") == []


def test_generated_corpus_round_trip(tmp_path):
    images = generate_corpus("word-like", 200, 1)
    assert rewrite(tio.write_dataset, tio.read_dataset, images, tmp_path) == images


def test_predictions_round_trip(tmp_path, rng):
    recs = random_predictions(rng, 1000)
    back = rewrite(tio.write_predictions, tio.read_predictions, recs, tmp_path)
    for r, b in zip(recs, back):
        assert r.segmentation_mask == b.segmentation_mask
        assert [d.confidence for d in b.detections] == [tio.fmt_float(d.confidence) for d in r.detections]


def test_scores_round_trip(tmp_path, rng):
    scores = score_all(random_predictions(rng, 200))
    back = rewrite(tio.write_scores, tio.read_scores, scores, tmp_path)
    assert [s.image_id for s in back] == [s.image_id for s in scores]
    assert [s.ma is None for s in back] == [s.ma is None for s in scores]


def test_candidates_round_trip(tmp_path, rng):
    cl = CandidateList("tc", [(f"c{i}", float(rng.random())) for i in rng.permutation(1000)], 42)
    back = rewrite(tio.write_candidates, tio.read_candidates, cl, tmp_path)
    assert back.ids == cl.ids
    assert [w for _, w in back.entries] == [tio.fmt_float(w) for _, w in cl.entries]
    small = CandidateList("random", [("a", 1.0), ("b", 0.5)], 3)
    tio.write_candidates(small, tmp_path / "s.jsonl")
    assert tio.read_candidates(tmp_path / "s.jsonl") == small


def _report(rng):
    gt = {f"g{i}": [box(0, 0, 10, 10)] for i in range(3)}
    recs = [PredictionRecord(k, 20, 20, [Detection(box(0, 0, 10, 10 - rng.integers(0, 6)), float(rng.random()))]) for k in gt]
    return evaluate(recs, gt)


def _rounds(rng, n):
    return [
        SelectionRound(i + 1, "bba", [f"r{i}-{j}" for j in range(rng.integers(0, 5))], 10 + i, i, _report(rng) if i % 4 else None, bool(i % 7 == 6))
        for i in range(n)
    ]


def test_round_log_round_trip(tmp_path, rng):
    rounds = _rounds(rng, 1000)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for r in rounds:
        tio.append_round_log(r, a)
    back = tio.read_round_log(a)
    for r in back:
        tio.append_round_log(r, b)
    assert a.read_bytes() == b.read_bytes()
    assert [r.picked_ids for r in back] == [r.picked_ids for r in rounds]


def test_round_log_lines_self_contained(tmp_path, rng):
    path = tmp_path / "log.jsonl"
    for r in _rounds(rng, 2):
        tio.append_round_log(r, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    single = tmp_path / "one.jsonl"
    single.write_text(lines[1] + "\n")
    assert tio.read_round_log(single)[0].round_index == 2


def test_eval_report_and_config_round_trip(tmp_path, rng):
    rewrite(tio.write_eval_report, tio.read_eval_report, _report(rng), tmp_path)
    cfg = RunConfig(strategy="ma", seed=3, budget=BudgetConfig(10, 90, 20, 5))
    a = tmp_path / "c.json"
    tio.write_config(cfg, a)
    assert tio.read_config(a) == cfg


def test_rle_round_trip_random(rng):
    for _ in range(200):
        mask = BinaryMask(64, 64, rng.random((64, 64)) < rng.random())
        assert tio.rle_to_mask(tio.mask_to_rle(mask)) == mask


@given(st.integers(1, 9), st.integers(1, 9), st.data())
def test_rle_round_trip_property(w, h, data):
    bits = data.draw(st.lists(st.booleans(), min_size=w * h, max_size=w * h))
    mask = BinaryMask(w, h, bits)
    assert tio.rle_to_mask(tio.mask_to_rle(mask)) == mask


def test_rle_known_encoding():
    mask = BinaryMask(6, 3)
    mask.data[1, 1:3] = True
    mask.data[1, 4:6] = True
    assert tio.mask_to_rle(mask) == {"width": 6, "height": 3, "rows": [[1, 1, 2, 4, 2]]}


@pytest.mark.parametrize(
    "rows",
    [[[0, 0]], [[0, 0, 7]], [[1, 0, 1], [0, 0, 1]], [[0, 2, 2, 3, 1]], [[5, 0, 1]], [[0, 0, 0]]],
)
def test_rle_rejects_bad_rows(rows):
    with pytest.raises(ValueError):
        tio.rle_to_mask({"width": 6, "height": 3, "rows": rows})


def test_truncated_final_line(tmp_path):
    path = tmp_path / "d.jsonl"
    tio.write_dataset(generate_corpus("latex-like", 3, 0), path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(tio.TruncatedFileError, match=":3:"):
        tio.read_dataset(path)


def test_corrupt_line_reports_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    tio.write_dataset(generate_corpus("latex-like", 3, 0), path)
    lines = path.read_text().splitlines(keepends=True)
    lines[1] = "{not json}\n"
    path.write_text("".join(lines))
    with pytest.raises(tio.FormatError, match=":2:") as exc:
        tio.read_dataset(path)
    assert not isinstance(exc.value, tio.TruncatedFileError)


def test_duplicate_id_rejected(tmp_path):
    im = SyntheticImage("same", 10, 10, [])
    tio.write_dataset([im, im], tmp_path / "d.jsonl")
    with pytest.raises(tio.FormatError, match="'same'"):
        tio.read_dataset(tmp_path / "d.jsonl")


@pytest.mark.parametrize(
    "line",
    [
        '{"image_id":"a","width":10,"height":10}',
        '{"image_id":"a","width":10,"height":10,"gt_boxes":[[0,0,20,5]]}',
        '{"image_id":"a","width":10,"height":10,"gt_boxes":[[3,0,1,5]]}',
        '{"image_id":"a","width":10,"height":10,"gt_boxes":[],"extra":1}',
        '{"image_id":"a","width":10,"height":10,"gt_boxes":[[0,0,NaN,1]]}',
        '[1,2]',
    ],
)
def test_dataset_rejects_invalid(tmp_path, line):
    path = tmp_path / "d.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(tio.FormatError):
        tio.read_dataset(path)


def test_predictions_reject_invalid(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"image_id":"a","width":4,"height":4,"detections":[{"box":[0,0,1,1],"confidence":1.5}]}\n')
    with pytest.raises(tio.FormatError):
        tio.read_predictions(path)
    path.write_text('{"image_id":"a","width":4,"height":4,"detections":[],"mask":{"width":5,"height":4,"rows":[]}}\n')
    with pytest.raises(tio.FormatError, match="does not match"):
        tio.read_predictions(path)


def test_candidates_reject_bad_header(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"format":"other","strategy":"tc","seed":0,"count":0}\n')
    with pytest.raises(tio.FormatError):
        tio.read_candidates(path)
    path.write_text('{"format":"tabal-candidates/1","strategy":"tc","seed":0,"count":2}\n{"rank":0,"image_id":"a","weight":1}\n')
    with pytest.raises(tio.FormatError, match="2 entries"):
        tio.read_candidates(path)


READERS = {
    "dataset.jsonl": (tio.read_dataset, tio.write_dataset),
    "predictions.jsonl": (tio.read_predictions, tio.write_predictions),
    "scores.jsonl": (tio.read_scores, tio.write_scores),
    "candidates.jsonl": (tio.read_candidates, tio.write_candidates),
    "eval_report.json": (tio.read_eval_report, tio.write_eval_report),
    "config.json": (tio.read_config, tio.write_config),
}


@pytest.mark.parametrize("name", sorted(READERS) + ["round_log.jsonl"])
def test_canonical_fixture_rewrites_byte_identical(name, tmp_path):
    src = FIXTURES / name
    out = tmp_path / name
    if name == "round_log.jsonl":
        for r in tio.read_round_log(src):
            tio.append_round_log(r, out)
    else:
        read, write = READERS[name]
        write(read(src), out)
    assert out.read_bytes() == src.read_bytes()
