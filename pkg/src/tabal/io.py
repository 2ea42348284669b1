"""On-disk formats: datasets, predictions, scores, candidate lists, round logs, reports.

Every file is line-delimited JSON, one record per line, UTF-8, each line
terminated by ``\\n``. Writers are deterministic:

* keys appear in a fixed order,
* separators are ``,`` and ``:`` with no spaces,
* integers are written as integers,
* floats are rounded to 6 significant digits and then written in shortest
  round-trip form (``0.123457``, ``5.0``, ``1e-07``),
* NaN and infinity are rejected.

Readers validate instead of repairing. A malformed line raises
:class:`FormatError` with its line number. A final line without its
terminating newline raises :class:`TruncatedFileError`, meaning the write
was interrupted rather than the content being corrupt.

Grammar pages and canonical fixtures live in ``docs/formats/``.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from tabal.config import RunConfig
from tabal.evaluation import EvalReport
from tabal.geometry import BinaryMask, BoundingBox
from tabal.loop import SelectionRound
from tabal.sampler import CandidateList
from tabal.scoring import Detection, ImageScore, PredictionRecord
from tabal.simulator import Hardness, SyntheticImage

CANDIDATES_FORMAT = "tabal-candidates/1"


class FormatError(ValueError):
    def __init__(self, path, lineno: int | None, message: str):
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.lineno = lineno


class TruncatedFileError(FormatError):
    """The last line lacks its newline: an interrupted write, not corruption."""


# -- primitives ---------------------------------------------------------------


def fmt_float(x: float) -> float:
    """Round to 6 significant digits (the value that gets written)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    return float(f"{x:.6g}")


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return int(x)
    return fmt_float(x)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _write_lines(path, objs: Iterable[dict], mode: str = "w") -> None:
    with open(path, mode, encoding="utf-8", newline="\n") as f:
        for obj in objs:
            f.write(_dumps(obj))
            f.write("\n")


def _read_lines(path) -> Iterator[tuple]:
    raw = Path(path).read_bytes()
    if not raw:
        return
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(path, None, f"not UTF-8: {exc}") from None
    lines = text.split("\n")
    last_complete = text.endswith("\n")
    if last_complete:
        lines = lines[:-1]
    for lineno, line in enumerate(lines, start=1):
        if not last_complete and lineno == len(lines):
            raise TruncatedFileError(path, lineno, "final line has no newline (interrupted write)")
        if not line.strip():
            raise FormatError(path, lineno, "empty line")
        try:
            obj = json.loads(line, parse_constant=_reject_constant)
        except ValueError as exc:
            raise FormatError(path, lineno, f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise FormatError(path, lineno, "record is not a JSON object")
        yield lineno, obj


def _reject_constant(name):
    raise ValueError(f"non-finite constant {name}")


def _require(obj: dict, keys: Sequence[str], path, lineno):
    missing = [k for k in keys if k not in obj]
    if missing:
        raise FormatError(path, lineno, f"missing field(s) {missing}")
    extra = set(obj) - set(keys)
    return extra


def _check_number(value, path, lineno, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(path, lineno, f"{what} must be a number, got {value!r}")
    return value


def _box_out(box: BoundingBox) -> list:
    return [_num(v) for v in box.as_list()]


def _box_in(value, path, lineno) -> BoundingBox:
    if not isinstance(value, list) or len(value) != 4:
        raise FormatError(path, lineno, f"box must be a list of 4 numbers, got {value!r}")
    for v in value:
        _check_number(v, path, lineno, "box coordinate")
    try:
        return BoundingBox(*value)
    except ValueError as exc:
        raise FormatError(path, lineno, str(exc)) from None


# -- masks ----------------------------------------------------------------------


def mask_to_rle(mask: BinaryMask) -> dict:
    """Per-row run-length encoding.

    ``rows`` lists only non-empty rows as ``[y, start, length, start, length, ...]``.
    """
    rows = []
    padded = np.zeros((mask.height, mask.width + 2), dtype=np.int8)
    padded[:, 1:-1] = mask.data
    diff = np.diff(padded, axis=1)
    for y in range(mask.height):
        starts = np.flatnonzero(diff[y] == 1)
        if len(starts) == 0:
            continue
        ends = np.flatnonzero(diff[y] == -1)
        row = [y]
        for s, e in zip(starts, ends):
            row.extend((int(s), int(e - s)))
        rows.append(row)
    return {"width": mask.width, "height": mask.height, "rows": rows}


def rle_to_mask(obj: dict) -> BinaryMask:
    width, height = obj["width"], obj["height"]
    mask = BinaryMask(width, height)
    last_y = -1
    for row in obj["rows"]:
        if not row or (len(row) - 1) % 2 or len(row) < 3:
            raise ValueError(f"malformed RLE row {row!r}")
        y = row[0]
        if not last_y < y < height:
            raise ValueError(f"RLE rows must be strictly increasing and in range, got y={y}")
        last_y = y
        prev_end = -1
        for s, n in zip(row[1::2], row[2::2]):
            if n <= 0 or s <= prev_end or s + n > width:
                raise ValueError(f"invalid run ({s}, {n}) in row {y}")
            mask.data[y, s : s + n] = True
            prev_end = s + n
    return mask


# -- datasets ---------------------------------------------------------------------

_DATASET_KEYS = ("image_id", "width", "height", "gt_boxes")


def _dataset_record(img: SyntheticImage) -> dict:
    rec = {
        "image_id": img.image_id,
        "width": int(img.width),
        "height": int(img.height),
        "gt_boxes": [_box_out(b) for b in img.gt_tables],
    }
    if img.hardness is not None:
        rec["hardness"] = {
            "style_cluster": int(img.hardness.style_cluster),
            "overlap_prone": bool(img.hardness.overlap_prone),
            "table_count": int(img.hardness.table_count),
        }
    return rec


def write_dataset(images: Iterable[SyntheticImage], path) -> None:
    _write_lines(path, (_dataset_record(im) for im in images))


def read_dataset(path) -> list:
    images = []
    seen = set()
    for lineno, obj in _read_lines(path):
        extra = _require(obj, _DATASET_KEYS, path, lineno)
        if extra - {"hardness"}:
            raise FormatError(path, lineno, f"unknown field(s) {sorted(extra - {'hardness'})}")
        image_id = obj["image_id"]
        if not isinstance(image_id, str) or not image_id:
            raise FormatError(path, lineno, "image_id must be a non-empty string")
        if image_id in seen:
            raise FormatError(path, lineno, f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        if not isinstance(obj["gt_boxes"], list):
            raise FormatError(path, lineno, "gt_boxes must be a list")
        boxes = [_box_in(b, path, lineno) for b in obj["gt_boxes"]]
        hardness = None
        if "hardness" in obj:
            h = obj["hardness"]
            if not isinstance(h, dict) or set(h) != {"style_cluster", "overlap_prone", "table_count"}:
                raise FormatError(path, lineno, f"malformed hardness {h!r}")
            if not isinstance(h["overlap_prone"], bool):
                raise FormatError(path, lineno, "hardness.overlap_prone must be a boolean")
            hardness = Hardness(h["style_cluster"], h["overlap_prone"], h["table_count"])
        try:
            images.append(SyntheticImage(image_id, obj["width"], obj["height"], boxes, hardness))
        except (ValueError, TypeError) as exc:
            raise FormatError(path, lineno, str(exc)) from None
    return images


# -- predictions ------------------------------------------------------------------


def _prediction_record(rec: PredictionRecord) -> dict:
    out = {
        "image_id": rec.image_id,
        "width": int(rec.image_width),
        "height": int(rec.image_height),
        "detections": [
            {"box": _box_out(d.box), "confidence": _num(d.confidence)} for d in rec.detections
        ],
    }
    if rec.segmentation_mask is not None:
        out["mask"] = mask_to_rle(rec.segmentation_mask)
    return out


def write_predictions(records: Iterable[PredictionRecord], path) -> None:
    _write_lines(path, (_prediction_record(r) for r in records))


def read_predictions(path) -> list:
    records = []
    seen = set()
    for lineno, obj in _read_lines(path):
        extra = _require(obj, ("image_id", "width", "height", "detections"), path, lineno)
        if extra - {"mask"}:
            raise FormatError(path, lineno, f"unknown field(s) {sorted(extra - {'mask'})}")
        image_id = obj["image_id"]
        if image_id in seen:
            raise FormatError(path, lineno, f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        dets = []
        for d in obj["detections"]:
            if not isinstance(d, dict) or set(d) != {"box", "confidence"}:
                raise FormatError(path, lineno, f"malformed detection {d!r}")
            conf = _check_number(d["confidence"], path, lineno, "confidence")
            try:
                dets.append(Detection(_box_in(d["box"], path, lineno), conf))
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
        mask = None
        if "mask" in obj:
            try:
                mask = rle_to_mask(obj["mask"])
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(path, lineno, f"bad mask: {exc}") from None
        try:
            records.append(PredictionRecord(image_id, obj["width"], obj["height"], dets, mask))
        except ValueError as exc:
            raise FormatError(path, lineno, str(exc)) from None
    return records


# -- scores -----------------------------------------------------------------------

_SCORE_KEYS = ("image_id", "mean_confidence", "entropy", "bba", "ma", "table_count")


def write_scores(scores: Iterable[ImageScore], path) -> None:
    def rec(s):
        return {
            "image_id": s.image_id,
            "mean_confidence": None if s.mean_confidence is None else _num(s.mean_confidence),
            "entropy": _num(s.entropy),
            "bba": _num(s.bba),
            "ma": None if s.ma is None else _num(s.ma),
            "table_count": int(s.table_count),
        }

    _write_lines(path, (rec(s) for s in scores))


def read_scores(path) -> list:
    out = []
    for lineno, obj in _read_lines(path):
        if _require(obj, _SCORE_KEYS, path, lineno):
            raise FormatError(path, lineno, "unknown fields in score record")
        out.append(ImageScore(**{k: obj[k] for k in _SCORE_KEYS}))
    return out


# -- candidate lists --------------------------------------------------------------


def write_candidates(candidates: CandidateList, path) -> None:
    header = {
        "format": CANDIDATES_FORMAT,
        "strategy": candidates.strategy,
        "seed": int(candidates.seed),
        "count": len(candidates.entries),
    }
    entries = (
        {"rank": i, "image_id": image_id, "weight": _num(weight)}
        for i, (image_id, weight) in enumerate(candidates.entries)
    )
    _write_lines(path, [header, *entries])


def read_candidates(path) -> CandidateList:
    lines = list(_read_lines(path))
    if not lines:
        raise FormatError(path, None, "empty candidate file (header missing)")
    lineno, header = lines[0]
    _require(header, ("format", "strategy", "seed", "count"), path, lineno)
    if header["format"] != CANDIDATES_FORMAT:
        raise FormatError(path, lineno, f"unsupported format {header['format']!r}")
    entries = []
    for lineno, obj in lines[1:]:
        _require(obj, ("rank", "image_id", "weight"), path, lineno)
        if obj["rank"] != len(entries):
            raise FormatError(path, lineno, f"rank {obj['rank']} out of sequence")
        entries.append((obj["image_id"], _check_number(obj["weight"], path, lineno, "weight")))
    if len(entries) != header["count"]:
        raise FormatError(path, None, f"header says {header['count']} entries, found {len(entries)}")
    try:
        return CandidateList(header["strategy"], entries, header["seed"])
    except ValueError as exc:
        raise FormatError(path, None, str(exc)) from None


# -- evaluation reports -----------------------------------------------------------


def _threshold_key(t: float) -> str:
    return f"{t:.2f}"


def report_to_dict(report: EvalReport) -> dict:
    return {
        "map_50": _num(report.map_50),
        "map_coco": _num(report.map_coco),
        "ap_per_threshold": {
            _threshold_key(t): _num(v) for t, v in sorted(report.ap_per_threshold.items())
        },
        "counts": {k: int(report.counts[k]) for k in sorted(report.counts)},
    }


def report_from_dict(obj: dict) -> EvalReport:
    return EvalReport(
        ap_per_threshold={float(k): v for k, v in obj["ap_per_threshold"].items()},
        map_50=obj["map_50"],
        map_coco=obj["map_coco"],
        counts=dict(obj["counts"]),
    )


def write_eval_report(report: EvalReport, path) -> None:
    _write_lines(path, [report_to_dict(report)])


def read_eval_report(path) -> EvalReport:
    lines = list(_read_lines(path))
    if len(lines) != 1:
        raise FormatError(path, None, f"expected exactly one record, found {len(lines)}")
    lineno, obj = lines[0]
    _require(obj, ("map_50", "map_coco", "ap_per_threshold", "counts"), path, lineno)
    return report_from_dict(obj)


# -- round logs -------------------------------------------------------------------

_ROUND_KEYS = (
    "round_index",
    "strategy",
    "picked_ids",
    "cumulative_labeled",
    "annotated",
    "truncated",
    "map_50",
    "map_coco",
    "report",
)


def round_to_dict(rnd: SelectionRound) -> dict:
    report = rnd.metrics
    return {
        "round_index": int(rnd.round_index),
        "strategy": rnd.strategy,
        "picked_ids": list(rnd.picked_ids),
        "cumulative_labeled": int(rnd.cumulative_labeled),
        "annotated": int(rnd.annotated),
        "truncated": bool(rnd.truncated),
        "map_50": None if report is None else _num(report.map_50),
        "map_coco": None if report is None else _num(report.map_coco),
        "report": None if report is None else report_to_dict(report),
    }


def append_round_log(rnd: SelectionRound, path) -> None:
    """Append one self-contained line; the file has a single writer."""
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        f.write(_dumps(round_to_dict(rnd)))
        f.write("\n")
        f.flush()
        os.fsync(f.fileno())


def read_round_log(path) -> list:
    rounds = []
    for lineno, obj in _read_lines(path):
        if _require(obj, _ROUND_KEYS, path, lineno):
            raise FormatError(path, lineno, "unknown fields in round record")
        report = None if obj["report"] is None else report_from_dict(obj["report"])
        rounds.append(
            SelectionRound(
                round_index=obj["round_index"],
                strategy=obj["strategy"],
                picked_ids=obj["picked_ids"],
                cumulative_labeled=obj["cumulative_labeled"],
                annotated=obj["annotated"],
                metrics=report,
                truncated=obj["truncated"],
            )
        )
    return rounds


# -- configuration ----------------------------------------------------------------


def write_config(config: RunConfig, path) -> None:
    _write_lines(path, [_config_json(config.to_dict())])


def _config_json(obj):
    if isinstance(obj, dict):
        return {k: _config_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_config_json(v) for v in obj]
    if isinstance(obj, float):
        return fmt_float(obj)
    return obj


def read_config(path) -> RunConfig:
    lines = list(_read_lines(path))
    if len(lines) != 1:
        raise FormatError(path, None, f"expected exactly one record, found {len(lines)}")
    return RunConfig.from_dict(lines[0][1])
