"""LiDAR-MoDAR fusion: early point-set assembly with a geometric consumer,
weighted box fusion, MoDAR-only decoding, and late fusion.

The early-fusion consumer is deterministic: it clusters the LiDAR subset,
builds consensus proposals from the virtual points, refines matched LiDAR
boxes with them, and recovers unmatched proposals only where the LiDAR
subset is empty enough to suggest occlusion or long range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dataio import NormalizationManifest
from .detector import ClusterParams, detect_cluster, nms
from .geometry import (Box3D, ObjectClass, Pose, heading_delta, iou_bev,
                       transform_box, transform_points, wrap_angle)
from .points import (CH_ONEHOT, CH_T_CLOSEST, FEATURE_SIZE, Direction,
                     ModarPoint)

LIDAR_FLAG = 0
MODAR_FLAG = 1

# fusion_detector knobs (fixed, not configuration).
PROPOSAL_MATCH_IOU = 0.1
PROPOSAL_LINK_RADIUS = 1.0
MAX_LIDAR_POINTS_FOR_RECOVERY = 5
RECOVERY_SCORE_FACTOR = 0.5
FINAL_NMS_IOU = 0.5


@dataclass(frozen=True)
class FusedPoint:
    x: float
    y: float
    z: float
    feature: tuple[float, ...]
    modality: int
    time_s: float

    def __post_init__(self):
        if self.modality not in (LIDAR_FLAG, MODAR_FLAG):
            raise ValueError("modality flag must be 0 or 1")
        if len(self.feature) != FEATURE_SIZE:
            raise ValueError(f"feature must be padded to {FEATURE_SIZE}")


@dataclass(frozen=True)
class FusionWeights:
    lidar_weight: float = 0.9
    modar_weight: float = 0.1
    offset_decay: tuple[float, ...] = (1.0, 0.8, 0.6, 0.4, 0.2)
    wbf_iou: float = 0.55
    max_boxes: int = 300

    def __post_init__(self):
        if min(self.lidar_weight, self.modar_weight, *self.offset_decay) < 0:
            raise ValueError("fusion weights must be non-negative")


def assemble_early(lidar_frames: Sequence[tuple[np.ndarray, Pose, float]],
                   modar_points: Sequence[ModarPoint],
                   target_pose: Pose) -> list[FusedPoint]:
    """Union the LiDAR stack and the virtual points in the target frame.

    LiDAR features are [intensity] zero-padded to the MoDAR width, flag 0,
    time channel = source frame offset in seconds. MoDAR points keep their
    13 features, flag 1, time channel = closest-frame timestamp.
    """
    fused: list[FusedPoint] = []
    zeros = (0.0,) * (FEATURE_SIZE - 1)
    for points, pose, offset in sorted(lidar_frames, key=lambda it: it[2]):
        pts = np.asarray(points, dtype=float).reshape(-1, 4)
        xyz = transform_points(pts[:, :3], pose, target_pose)
        for (x, y, z), intensity in zip(xyz.tolist(), pts[:, 3].tolist()):
            fused.append(FusedPoint(
                x=x, y=y, z=z,
                feature=(intensity,) + zeros,
                modality=LIDAR_FLAG, time_s=offset,
            ))
    if modar_points:
        world = np.array([[mp.x, mp.y, mp.z] for mp in modar_points])
        local = transform_points(world, Pose.identity(), target_pose)
        for mp, (x, y, z) in zip(modar_points, local.tolist()):
            fused.append(FusedPoint(
                x=x, y=y, z=z,
                feature=tuple(mp.feature),
                modality=MODAR_FLAG, time_s=mp.feature[CH_T_CLOSEST],
            ))
    return fused


class _Cluster:
    __slots__ = ("rep", "sums", "cos_sum", "sin_sum", "weight_sum",
                 "source_weights")

    def __init__(self):
        self.rep: Box3D | None = None
        self.sums = np.zeros(6)  # cx, cy, cz, l, w, h weighted by w*s
        self.cos_sum = 0.0
        self.sin_sum = 0.0
        self.weight_sum = 0.0
        self.source_weights: dict[int, float] = {}

    def add(self, box: Box3D, weight: float, source: int) -> None:
        ws = weight * box.score
        yaw = box.yaw
        if self.rep is not None and heading_delta(yaw, self.rep.yaw) > 0.5 * math.pi:
            yaw = wrap_angle(yaw + math.pi)
        self.sums += ws * np.array(
            [box.cx, box.cy, box.cz, box.length, box.width, box.height])
        self.cos_sum += ws * math.cos(yaw)
        self.sin_sum += ws * math.sin(yaw)
        self.weight_sum += ws
        self.source_weights[source] = weight
        self.rep = self._fused(box.label)

    def _fused(self, label: ObjectClass) -> Box3D:
        if self.weight_sum <= 0.0:
            # All member scores are zero; degenerate but well-defined.
            v = self.sums * 0.0
            score = 0.0
        else:
            v = self.sums / self.weight_sum
            score = min(1.0, self.weight_sum / sum(self.source_weights.values()))
        return Box3D(
            cx=float(v[0]), cy=float(v[1]), cz=float(v[2]),
            length=max(float(v[3]), 1e-3), width=max(float(v[4]), 1e-3),
            height=max(float(v[5]), 1e-3),
            yaw=math.atan2(self.sin_sum, self.cos_sum) if self.weight_sum > 0 else 0.0,
            label=label, score=score,
        )


def weighted_box_fusion(groups: Sequence[tuple[Sequence[Box3D], float]],
                        iou_threshold: float) -> list[Box3D]:
    """Cluster overlapping same-class boxes greedily and average them.

    Boxes are pooled from per-source groups and visited in descending
    weight*score order. A box joins the first cluster whose running fused
    representative overlaps it above the threshold; member headings are
    pi-flip aligned to the representative before averaging. The fused score
    is sum(w_i * s_i) / sum(w over the cluster's distinct sources).
    """
    entries = []
    for source, (boxes, weight) in enumerate(groups):
        for box in boxes:
            entries.append((box, weight, source))
    entries.sort(key=lambda e: (-e[1] * e[0].score, e[0].cx, e[0].cy,
                                e[0].yaw, e[2]))
    clusters: list[_Cluster] = []
    for box, weight, source in entries:
        area = box.footprint_area
        target = None
        for cluster in clusters:
            rep = cluster.rep
            if rep.label is not box.label:
                continue
            # IoU can never exceed the footprint area ratio.
            ra = rep.footprint_area
            if min(ra, area) <= iou_threshold * max(ra, area):
                continue
            if iou_bev(rep, box) > iou_threshold:
                target = cluster
                break
        if target is None:
            target = _Cluster()
            clusters.append(target)
        target.add(box, weight, source)
    fused = [c.rep for c in clusters]
    fused.sort(key=lambda b: (-b.score, b.cx, b.cy, b.yaw))
    return fused


def modar_only_detect(points: Sequence[ModarPoint], weights: FusionWeights,
                      manifest: NormalizationManifest) -> list[Box3D]:
    """Decode virtual points from the nearest offsets into boxes and fuse
    them with recency-decayed weights."""
    from .points import decode_box

    closest = len(weights.offset_decay)
    groups = []
    for direction in (Direction.FORWARD, Direction.REVERSE):
        for offset in range(1, closest + 1):
            boxes = [decode_box(p, manifest) for p in points
                     if p.direction is direction and p.offset == offset]
            if boxes:
                groups.append((boxes, weights.offset_decay[offset - 1]))
    fused = weighted_box_fusion(groups, weights.wbf_iou)
    return fused[:weights.max_boxes]


def _link_modar_groups(boxes: list[Box3D]) -> list[list[int]]:
    """Single-linkage BEV grouping at PROPOSAL_LINK_RADIUS, same class only."""
    parent = list(range(len(boxes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    cell = PROPOSAL_LINK_RADIUS / math.sqrt(2.0)
    grid: dict[tuple, list[int]] = {}
    for i, b in enumerate(boxes):
        key = (b.label, int(math.floor(b.cx / cell)), int(math.floor(b.cy / cell)))
        grid.setdefault(key, []).append(i)
    for key, members in grid.items():
        first = members[0]
        for other in members[1:]:  # same cell is always within the radius
            union(first, other)
    r2 = PROPOSAL_LINK_RADIUS ** 2
    for (label, cx, cy), members in grid.items():
        for dx in range(2, -3, -1):
            for dy in range(2, -3, -1):
                if dx == 0 and dy == 0:
                    continue
                other = grid.get((label, cx + dx, cy + dy))
                if not other:
                    continue
                for i in members:
                    if find(i) == find(other[0]):
                        break
                    bi = boxes[i]
                    for k in other:
                        bk = boxes[k]
                        d2 = (bi.cx - bk.cx) ** 2 + (bi.cy - bk.cy) ** 2
                        if d2 <= r2:
                            union(i, k)
                            break
    groups: dict[int, list[int]] = {}
    for i in range(len(boxes)):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def _refine(lidar_box: Box3D, proposal: Box3D, weights: FusionWeights) -> Box3D:
    """Blend a matched proposal into a LiDAR box (LiDAR-dominant weights).

    Geometry follows the weighted box fusion formulas; the class and score
    come from the higher-scoring side, so a weak LiDAR box (sparse points,
    unreliable class) defers to a confident consensus proposal.
    """
    cluster = _Cluster()
    trusted = lidar_box if lidar_box.score >= proposal.score else proposal
    cluster.add(replace(lidar_box, label=trusted.label), weights.lidar_weight, 0)
    cluster.add(replace(proposal, label=trusted.label), weights.modar_weight, 1)
    return replace(cluster.rep, label=trusted.label,
                   score=max(lidar_box.score, proposal.score))


def _points_in_footprint(xy: np.ndarray, box: Box3D) -> int:
    if len(xy) == 0:
        return 0
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = xy[:, 0] - box.cx
    dy = xy[:, 1] - box.cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    inside = (np.abs(u) <= 0.5 * box.length) & (np.abs(v) <= 0.5 * box.width)
    return int(np.count_nonzero(inside))


def fusion_detector(fused: Sequence[FusedPoint], cluster_params: ClusterParams,
                    weights: FusionWeights, manifest: NormalizationManifest,
                    target_pose: Pose) -> list[Box3D]:
    """Geometric consumer of an early-fused point set.

    With no virtual points this reduces exactly to detect_cluster + nms.
    Virtual-point consensus refines matched LiDAR boxes (LiDAR-dominant
    weights) and recovers unmatched proposals only where fewer than
    MAX_LIDAR_POINTS_FOR_RECOVERY LiDAR points fall inside the footprint,
    at a discounted score.
    """
    lidar = [p for p in fused if p.modality == LIDAR_FLAG]
    modar = [p for p in fused if p.modality == MODAR_FLAG]
    lidar_arr = (np.array([[p.x, p.y, p.z, p.feature[0]] for p in lidar])
                 if lidar else np.empty((0, 4)))
    lidar_boxes = detect_cluster(lidar_arr, cluster_params, target_pose)

    proposals: list[Box3D] = []
    if modar:
        from .points import decode_feature

        local = np.array([[p.x, p.y, p.z] for p in modar])
        world = transform_points(local, target_pose, Pose.identity())
        decoded = []
        sources = []
        for p, (wx, wy, wz) in zip(modar, world.tolist()):
            decoded.append(decode_feature(wx, wy, wz, p.feature, manifest))
            sources.append(int(round(p.time_s / 0.1)))
        for group in _link_modar_groups(decoded):
            by_source: dict[int, list[Box3D]] = {}
            for i in group:
                by_source.setdefault(sources[i], []).append(decoded[i])
            wbf_groups = [(by_source[k], 1.0) for k in sorted(by_source)]
            proposals.extend(weighted_box_fusion(wbf_groups, weights.wbf_iou))

    lidar_xy = lidar_arr[:, :2]
    consumed = [False] * len(lidar_boxes)
    out: list[Box3D] = []
    proposals.sort(key=lambda b: (-b.score, b.cx, b.cy, b.yaw))
    for prop in proposals:
        best, best_iou = -1, PROPOSAL_MATCH_IOU
        for i, lbox in enumerate(lidar_boxes):
            if consumed[i]:
                continue
            iou = iou_bev(lbox, prop)
            if iou > best_iou:
                best, best_iou = i, iou
        if best >= 0:
            consumed[best] = True
            out.append(_refine(lidar_boxes[best], prop, weights))
        else:
            prop_local = transform_box(prop, Pose.identity(), target_pose)
            if _points_in_footprint(lidar_xy, prop_local) < MAX_LIDAR_POINTS_FOR_RECOVERY:
                out.append(replace(prop, score=prop.score * RECOVERY_SCORE_FACTOR))
    for i, lbox in enumerate(lidar_boxes):
        if not consumed[i]:
            out.append(lbox)
    return nms(out, FINAL_NMS_IOU, bev=True)


def late_fuse(lidar_boxes: Sequence[Box3D], modar_boxes: Sequence[Box3D],
              weights: FusionWeights) -> list[Box3D]:
    """Weighted box fusion of the two box sets, truncated to the top
    max_boxes by score."""
    fused = weighted_box_fusion(
        [(list(lidar_boxes), weights.lidar_weight),
         (list(modar_boxes), weights.modar_weight)],
        weights.wbf_iou)
    return fused[:weights.max_boxes]


def early_plus_late(early_boxes: Sequence[Box3D], modar_boxes: Sequence[Box3D],
                    weights: FusionWeights) -> list[Box3D]:
    """Late-fuse the early-fusion output with the MoDAR-only boxes."""
    return late_fuse(early_boxes, modar_boxes, weights)
