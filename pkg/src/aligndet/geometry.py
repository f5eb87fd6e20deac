"""Axis-aligned box geometry on numpy arrays.

Boxes are (x1, y1, x2, y2) with x2 > x1, y2 > y1, in pixel units. The
overlap helpers accept [N,4]/[M,4] arrays and return dense matrices; the
differentiable GIoU used by the training loss lives in ``losses`` and is
built from tensor ops, with these functions serving as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class Box:
    """One axis-aligned box with a class label."""

    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int = 0

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise GeometryError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_array(self):
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


@dataclass(frozen=True)
class Detection:
    """A scored detection candidate."""

    box: Box
    score: float
    class_id: int
    anchor_index: int = -1


def _as_boxes(arr):
    a = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if a.ndim != 2 or a.shape[1] != 4:
        raise GeometryError(f"expected an [N,4] box array, got shape {a.shape}")
    return a


def pairwise_iou(boxes_a, boxes_b):
    """Intersection over union for every pair; [N,M] in [0,1].

    Pairs with zero union are defined to have IoU 0.
    """
    a = _as_boxes(boxes_a)
    b = _as_boxes(boxes_b)
    x1 = np.maximum(a[:, None, 0], b[None, :, 0])
    y1 = np.maximum(a[:, None, 1], b[None, :, 1])
    x2 = np.minimum(a[:, None, 2], b[None, :, 2])
    y2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x2 - x1, 0.0, None) * np.clip(y2 - y1, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    return out


def iou(box_a, box_b):
    """Scalar IoU of two boxes (Box instances or length-4 sequences)."""
    a = box_a.as_array() if isinstance(box_a, Box) else np.asarray(box_a, dtype=np.float64)
    b = box_b.as_array() if isinstance(box_b, Box) else np.asarray(box_b, dtype=np.float64)
    return float(pairwise_iou(a[None, :], b[None, :])[0, 0])


def pairwise_giou(boxes_a, boxes_b):
    """Generalized IoU for every pair; [N,M] in [-1,1].

    giou = iou - (hull - union) / hull, with the smallest enclosing
    axis-aligned hull. Equals iou when one box contains the other.
    """
    a = _as_boxes(boxes_a)
    b = _as_boxes(boxes_b)
    x1 = np.maximum(a[:, None, 0], b[None, :, 0])
    y1 = np.maximum(a[:, None, 1], b[None, :, 1])
    x2 = np.minimum(a[:, None, 2], b[None, :, 2])
    y2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x2 - x1, 0.0, None) * np.clip(y2 - y1, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    hx1 = np.minimum(a[:, None, 0], b[None, :, 0])
    hy1 = np.minimum(a[:, None, 1], b[None, :, 1])
    hx2 = np.maximum(a[:, None, 2], b[None, :, 2])
    hy2 = np.maximum(a[:, None, 3], b[None, :, 3])
    hull = (hx2 - hx1) * (hy2 - hy1)
    iou_mat = np.where(union > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        penalty = np.where(hull > 0.0, (hull - union) / np.where(hull > 0.0, hull, 1.0), 0.0)
    return iou_mat - penalty


def giou(box_a, box_b):
    """Scalar generalized IoU of two boxes."""
    a = box_a.as_array() if isinstance(box_a, Box) else np.asarray(box_a, dtype=np.float64)
    b = box_b.as_array() if isinstance(box_b, Box) else np.asarray(box_b, dtype=np.float64)
    return float(pairwise_giou(a[None, :], b[None, :])[0, 0])


def distances_to_box(px, py, box):
    """Signed (left, top, right, bottom) distances from points to box edges.

    All four are positive exactly when the point is strictly inside.
    """
    b = box.as_array() if isinstance(box, Box) else np.asarray(box, dtype=np.float64)
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    return np.stack([px - b[0], py - b[1], b[2] - px, b[3] - py], axis=-1)


def box_from_distances(px, py, ltrb):
    """Invert :func:`distances_to_box`: (x1, y1, x2, y2) arrays from ltrb."""
    d = np.asarray(ltrb, dtype=np.float64)
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    return np.stack(
        [px - d[..., 0], py - d[..., 1], px + d[..., 2], py + d[..., 3]], axis=-1
    )


def centers_inside(px, py, boxes):
    """[N_points, N_boxes] bool mask: point strictly inside box."""
    b = _as_boxes(boxes)
    px = np.asarray(px, dtype=np.float64)[:, None]
    py = np.asarray(py, dtype=np.float64)[:, None]
    return (
        (px > b[None, :, 0])
        & (px < b[None, :, 2])
        & (py > b[None, :, 1])
        & (py < b[None, :, 3])
    )


def nms(detections, iou_threshold=0.6):
    """Greedy class-wise non-maximum suppression.

    Candidates are visited in descending score order (ties broken by lower
    anchor index, then input order); a candidate is kept unless some
    already-kept detection of the same class overlaps it at IoU strictly
    above the threshold. Returns kept detections in visit order.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise GeometryError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    order = sorted(
        range(len(detections)),
        key=lambda k: (-detections[k].score, detections[k].anchor_index, k),
    )
    kept = []
    for k in order:
        det = detections[k]
        suppressed = False
        for other in kept:
            if other.class_id != det.class_id:
                continue
            if iou(other.box, det.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(det)
    return kept
