"""Regenerate the canonical fixture for every file format under docs/formats/fixtures."""

from pathlib import Path

from tabal import io as tio
from tabal.config import RunConfig
from tabal.evaluation import evaluate
from tabal.geometry import BinaryMask, BoundingBox
from tabal.loop import SelectionRound
from tabal.sampler import build_candidates
from tabal.scoring import Detection, PredictionRecord, score_all
from tabal.simulator import Hardness, SyntheticImage

OUT = Path(__file__).resolve().parents[1] / "docs" / "formats" / "fixtures"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    images = [
        SyntheticImage("page-001", 12, 8, [BoundingBox(1, 1, 7, 4)], Hardness(0, False, 1)),
        SyntheticImage("page-002", 12, 8, [BoundingBox(0, 0, 6, 3), BoundingBox(2, 4, 11, 8)], Hardness(1, True, 2)),
        SyntheticImage("page-003", 12, 8, []),
    ]
    tio.write_dataset(images, OUT / "dataset.jsonl")

    mask = BinaryMask(12, 8)
    mask.data[1:4, 1:7] = True
    mask.data[5, 3:5] = True
    preds = [
        PredictionRecord("page-001", 12, 8, [Detection(BoundingBox(1, 1, 7, 4.5), 0.912345678)], mask),
        PredictionRecord(
            "page-002", 12, 8,
            [Detection(BoundingBox(0, 0, 11, 8), 0.61), Detection(BoundingBox(0.5, 0, 6, 3), 0.3333333)],
        ),
        PredictionRecord("page-003", 12, 8, []),
    ]
    tio.write_predictions(preds, OUT / "predictions.jsonl")

    scores = score_all(preds)
    tio.write_scores(scores, OUT / "scores.jsonl")
    tio.write_candidates(build_candidates("bba", scores, 7), OUT / "candidates.jsonl")

    gt = {im.image_id: im.gt_tables for im in images}
    report = evaluate(preds, gt)
    tio.write_eval_report(report, OUT / "eval_report.json")

    log = OUT / "round_log.jsonl"
    log.unlink(missing_ok=True)
    tio.append_round_log(SelectionRound(1, "tc", ["page-002"], 2, 1, report), log)
    tio.append_round_log(SelectionRound(2, "tc", ["page-003"], 3, 2, None, truncated=True), log)

    tio.write_config(RunConfig(), OUT / "config.json")


if __name__ == "__main__":
    main()
