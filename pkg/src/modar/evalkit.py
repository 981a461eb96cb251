"""Detection metrics in the Waymo style: AP and heading-weighted APH per
class, at two difficulty levels, with range and speed breakdowns.

AP integrates the precision envelope over recall exactly (no 11-point
interpolation), sweeping every distinct detection score. APH applies the
heading weight h = 1 - dyaw/pi to the true-positive mass in both the
precision and recall numerators, which guarantees APH <= AP.

Bucket conventions: ground truth is bucketed by its own range/speed;
unmatched detections (false positives) fall into range buckets by their
own range and are excluded from speed buckets, whose speed is unknowable.
Buckets without ground truth are reported as absent, never as zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataio import SequenceDataset
from .errors import IoFailure, NoGroundTruth
from .geometry import Box3D, ObjectClass, heading_delta, iou_3d

RANGE_BUCKETS = (("RANGE_0_30", 0.0, 30.0), ("RANGE_30_50", 30.0, 50.0),
                 ("RANGE_50_INF", 50.0, math.inf))
SPEED_BUCKETS = (("SPEED_STN", 0.0, 0.2), ("SPEED_SLOW", 0.2, 3.0),
                 ("SPEED_MED", 3.0, 6.0), ("SPEED_FST", 6.0, 10.0),
                 ("SPEED_VFST", 10.0, math.inf))
DIFFICULTIES = ("L1", "L2")

CSV_HEADER = "class,difficulty,breakdown,ap,aph,tp,fp,fn"


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: Mapping[ObjectClass, float] = field(default_factory=lambda: {
        ObjectClass.VEHICLE: 0.7,
        ObjectClass.PEDESTRIAN: 0.5,
        ObjectClass.CYCLIST: 0.5,
    })
    l1_min_points: int = 6   # "more than 5" interior points
    l2_min_points: int = 1

    def __post_init__(self):
        for cls, thr in self.iou_thresholds.items():
            if not 0.0 < thr < 1.0:
                raise ValueError(f"threshold for {cls} must be in (0, 1)")

    def in_difficulty(self, difficulty: str, num_points: int) -> bool:
        if difficulty == "L1":
            return num_points >= self.l1_min_points
        return num_points >= self.l2_min_points


@dataclass(frozen=True)
class ApResult:
    ap: float
    aph: float
    tp: int
    fp: int
    fn: int
    curve: tuple[tuple[float, float, float], ...]  # (score, recall, precision)


@dataclass
class EvalResult:
    cells: dict[tuple[str, str, str], ApResult]
    mean_aph_l2: float | None
    num_predictions: int = 0

    def cell(self, label: ObjectClass | str, difficulty: str,
             breakdown: str = "ALL") -> ApResult | None:
        key = (label.value if isinstance(label, ObjectClass) else label,
               difficulty, breakdown)
        return self.cells.get(key)

    def to_dict(self) -> dict:
        return {
            "cells": {
                "|".join(k): {
                    "ap": v.ap, "aph": v.aph,
                    "tp": v.tp, "fp": v.fp, "fn": v.fn,
                    "curve": [list(p) for p in v.curve],
                } for k, v in sorted(self.cells.items())
            },
            "mean_aph_l2": self.mean_aph_l2,
            "num_predictions": self.num_predictions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        cells = {}
        for key, v in d["cells"].items():
            parts = tuple(key.split("|"))
            cells[parts] = ApResult(
                ap=v["ap"], aph=v["aph"], tp=v["tp"], fp=v["fp"], fn=v["fn"],
                curve=tuple(tuple(p) for p in v["curve"]))
        return cls(cells=cells, mean_aph_l2=d["mean_aph_l2"],
                   num_predictions=int(d.get("num_predictions", 0)))

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
            + "\n")

    @classmethod
    def load(cls, path) -> "EvalResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def match_frame(dets: Sequence[Box3D], gts: Sequence[Box3D],
                iou_threshold: float) -> tuple[list[tuple[int, int, float]],
                                               list[int], list[int]]:
    """Optimal single-frame, single-class matching.

    Hungarian assignment maximizing summed 3D IoU over pairs at or above
    the threshold; each side matched at most once.
    """
    if not dets or not gts:
        return [], list(range(len(dets))), list(range(len(gts)))
    iou = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            v = iou_3d(d, g)
            if v >= iou_threshold:
                iou[i, j] = v
    rows, cols = linear_sum_assignment(-iou)
    matches = []
    used_d, used_g = set(), set()
    for i, j in zip(rows, cols):
        if iou[i, j] >= iou_threshold and iou[i, j] > 0.0:
            matches.append((i, j, float(iou[i, j])))
            used_d.add(i)
            used_g.add(j)
    unmatched_d = [i for i in range(len(dets)) if i not in used_d]
    unmatched_g = [j for j in range(len(gts)) if j not in used_g]
    return matches, unmatched_d, unmatched_g


def compute_ap(records: Sequence[tuple[float, bool, float]],
               total_gt: int) -> ApResult:
    """PR sweep over all distinct detection scores.

    Args:
        records: per-detection (score, is_true_positive, heading_weight);
            the weight is ignored for false positives.
        total_gt: recall denominator.

    Raises:
        NoGroundTruth: total_gt == 0.
    """
    if total_gt <= 0:
        raise NoGroundTruth("bucket has no ground truth")
    ordered = sorted(enumerate(records), key=lambda it: (-it[1][0], it[0]))
    points = []  # (score, recall, precision, recall_h, precision_h)
    tp = fp = 0
    tph = 0.0
    i = 0
    n = len(ordered)
    while i < n:
        score = ordered[i][1][0]
        while i < n and ordered[i][1][0] == score:
            _, (_, is_tp, weight) = ordered[i]
            if is_tp:
                tp += 1
                tph += weight
            else:
                fp += 1
            i += 1
        points.append((score, tp / total_gt, tp / (tp + fp),
                       tph / total_gt, tph / (tp + fp)))
    ap = aph = 0.0
    max_p = max_ph = 0.0
    prev_r = prev_rh = None
    for score, r, p, rh, ph in reversed(points):
        if prev_r is not None:
            ap += (prev_r - r) * max_p
            aph += (prev_rh - rh) * max_ph
        max_p = max(max_p, p)
        max_ph = max(max_ph, ph)
        prev_r, prev_rh = r, rh
    if prev_r is not None:
        ap += prev_r * max_p
        aph += prev_rh * max_ph
    aph = min(aph, ap)
    return ApResult(ap=ap, aph=aph, tp=tp, fp=fp, fn=total_gt - tp,
                    curve=tuple((s, r, p) for s, r, p, _, _ in points))


@dataclass
class _DetRecord:
    score: float
    matched: bool
    heading_weight: float
    gt_points: int
    gt_range: float
    gt_speed: float
    det_range: float


def _bucket_of(value: float, buckets) -> str:
    for name, lo, hi in buckets:
        if lo <= value < hi:
            return name
    return buckets[-1][0]


def evaluate(detections: Mapping[int, Sequence[Box3D]],
             dataset: SequenceDataset,
             config: EvalConfig | None = None,
             num_predictions: int = 0) -> EvalResult:
    """Metrics per class, difficulty, and range/speed bucket over the frames
    present in `detections`.

    Detections matched to ground truth outside the difficulty or bucket
    under consideration are ignored there rather than counted as false
    positives. The overall mean APH averages the per-class L2 APH over
    classes that have ground truth.
    """
    config = config or EvalConfig()
    det_records: dict[ObjectClass, list[_DetRecord]] = {c: [] for c in ObjectClass}
    gt_records: dict[ObjectClass, list[tuple[int, float, float]]] = {
        c: [] for c in ObjectClass}

    for frame_index in sorted(detections):
        rec = dataset.frames[frame_index]
        ego = rec.ego_pose.matrix[:3, 3]
        frame_dets = detections[frame_index]
        for cls in ObjectClass:
            dets = [d for d in frame_dets if d.label is cls]
            gts = [g for g in rec.gt_boxes if g.box.label is cls]
            matches, unmatched_d, _ = match_frame(
                dets, [g.box for g in gts], config.iou_thresholds[cls])
            for di, gi, _ in matches:
                d, g = dets[di], gts[gi]
                det_records[cls].append(_DetRecord(
                    score=d.score, matched=True,
                    heading_weight=1.0 - heading_delta(d.yaw, g.box.yaw) / math.pi,
                    gt_points=g.num_points_inside,
                    gt_range=math.hypot(g.box.cx - ego[0], g.box.cy - ego[1]),
                    gt_speed=g.speed_mps,
                    det_range=0.0,
                ))
            for di in unmatched_d:
                d = dets[di]
                det_records[cls].append(_DetRecord(
                    score=d.score, matched=False, heading_weight=0.0,
                    gt_points=-1, gt_range=-1.0, gt_speed=-1.0,
                    det_range=math.hypot(d.cx - ego[0], d.cy - ego[1]),
                ))
            for g in gts:
                gt_records[cls].append((
                    g.num_points_inside,
                    math.hypot(g.box.cx - ego[0], g.box.cy - ego[1]),
                    g.speed_mps,
                ))

    cells: dict[tuple[str, str, str], ApResult] = {}
    for cls in ObjectClass:
        dets = det_records[cls]
        gts = gt_records[cls]
        for difficulty in DIFFICULTIES:
            buckets: list[tuple[str, str]] = [("ALL", "")]
            buckets += [(name, "range") for name, _, _ in RANGE_BUCKETS]
            buckets += [(name, "speed") for name, _, _ in SPEED_BUCKETS]
            for bucket_name, kind in buckets:
                def gt_in(points, rng, speed) -> bool:
                    if not config.in_difficulty(difficulty, points):
                        return False
                    if kind == "range":
                        return _bucket_of(rng, RANGE_BUCKETS) == bucket_name
                    if kind == "speed":
                        return _bucket_of(speed, SPEED_BUCKETS) == bucket_name
                    return True

                total = sum(1 for g in gts if gt_in(*g))
                if total == 0:
                    continue
                records = []
                for r in dets:
                    if r.matched:
                        if gt_in(r.gt_points, r.gt_range, r.gt_speed):
                            records.append((r.score, True, r.heading_weight))
                        # else: matched outside this cell; ignored here
                    else:
                        if kind == "speed":
                            continue  # unmatched detections have no speed
                        if kind == "range" and _bucket_of(
                                r.det_range, RANGE_BUCKETS) != bucket_name:
                            continue
                        records.append((r.score, False, 0.0))
                cells[(cls.value, difficulty, bucket_name)] = compute_ap(
                    records, total)

    per_class = [cells[(cls.value, "L2", "ALL")].aph
                 for cls in ObjectClass if (cls.value, "L2", "ALL") in cells]
    mean_aph = float(np.mean(per_class)) if per_class else None
    return EvalResult(cells=cells, mean_aph_l2=mean_aph,
                      num_predictions=num_predictions)


def _csv_rows(result: EvalResult) -> list[str]:
    rows = [CSV_HEADER]
    for (cls, difficulty, bucket), cell in sorted(result.cells.items()):
        rows.append(f"{cls},{difficulty},{bucket},{cell.ap:.6f},"
                    f"{cell.aph:.6f},{cell.tp},{cell.fp},{cell.fn}")
    return rows


def _svg_chart(results: Sequence[EvalResult]) -> str:
    """Bar chart of overall L2 mean APH against the number of forecast
    windows per frame."""
    width, height, margin = 480, 280, 48
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    bars = [(r.num_predictions, r.mean_aph_l2 or 0.0) for r in results]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" '
        f'font-size="12">number of forecast windows</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height // 2})">L2 mean APH</text>',
    ]
    n = max(len(bars), 1)
    slot = plot_w / n
    for i, (count, aph) in enumerate(bars):
        bar_h = plot_h * max(0.0, min(1.0, aph))
        x = margin + i * slot + 0.15 * slot
        y = height - margin - bar_h
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{0.7 * slot:.2f}" '
                     f'height="{bar_h:.2f}" fill="#4477aa"/>')
        parts.append(f'<text x="{margin + (i + 0.5) * slot:.2f}" '
                     f'y="{height - margin + 16}" text-anchor="middle" '
                     f'font-size="11">{count}</text>')
        parts.append(f'<text x="{margin + (i + 0.5) * slot:.2f}" '
                     f'y="{y - 4:.2f}" text-anchor="middle" '
                     f'font-size="10">{aph:.3f}</text>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def write_report(results: EvalResult | Sequence[EvalResult], directory) -> None:
    """Write CSV tables plus an APH-versus-window-count SVG chart.

    Output bytes are a pure function of the results.
    """
    if isinstance(results, EvalResult):
        results = [results]
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        if len(results) == 1:
            (directory / "report.csv").write_text(
                "\n".join(_csv_rows(results[0])) + "\n")
        else:
            for i, result in enumerate(results):
                (directory / f"report_{i:02d}.csv").write_text(
                    "\n".join(_csv_rows(result)) + "\n")
        (directory / "aph_vs_predictions.svg").write_text(_svg_chart(results))
    except OSError as exc:
        raise IoFailure(f"cannot write report to {directory}: {exc}") from exc
