"""Detection and grounding metrics: AP50, Recall@k, and REC-style scores.

Each ground-truth sample (one image-text pair) is its own evaluation group
with a single pseudo-class. Matching is greedy in descending score with
each GT box claimable once; score ties break by stable input order. AP
uses all-points interpolation of the pooled precision-recall curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, box_area, intersection_area, iou

RECALL_KS = (1, 10, 100)
RSVG_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class Prediction:
    sample_id: str
    box: Box
    score: float

    def validate(self) -> None:
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"prediction for {self.sample_id}: degenerate box {self.box}")
        if not np.isfinite(self.score):
            raise ValueError(f"prediction for {self.sample_id}: non-finite score")

    @classmethod
    def from_dict(cls, d: dict) -> "Prediction":
        pred = cls(sample_id=d["sample_id"],
                   box=tuple(float(v) for v in d["box"]),
                   score=float(d["score"]))
        pred.validate()
        return pred


@dataclass
class MetricsReport:
    ap50: float = 0.0
    recall_at: dict[int, float] = field(default_factory=dict)
    rsvg: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {}
        if self.recall_at or self.ap50:
            out["ap50"] = self.ap50
            out["recall_at"] = {str(k): v for k, v in sorted(self.recall_at.items())}
        if self.rsvg:
            out["rsvg"] = dict(self.rsvg)
        return out


def _group(preds: list[Prediction]) -> dict[str, list[tuple[int, Prediction]]]:
    groups: dict[str, list[tuple[int, Prediction]]] = {}
    for idx, pred in enumerate(preds):
        pred.validate()
        groups.setdefault(pred.sample_id, []).append((idx, pred))
    return groups


def _greedy_match(group: list[tuple[int, Prediction]], gt_boxes: list[Box],
                  iou_thr: float, top_k: int | None = None) -> list[tuple[int, bool]]:
    """Match one group's predictions to its GT boxes.

    Returns (input_index, is_tp) per prediction in descending-score order.
    Each GT is claimed once, by the highest-IoU unmatched GT at or above
    the threshold (lowest GT index on IoU ties).
    """
    ordered = sorted(group, key=lambda p: (-p[1].score, p[0]))
    if top_k is not None:
        ordered = ordered[:top_k]
    taken = [False] * len(gt_boxes)
    out = []
    for idx, pred in ordered:
        best_iou, best_gt = 0.0, -1
        for g, gt in enumerate(gt_boxes):
            if taken[g]:
                continue
            val = iou(pred.box, gt)
            if val >= iou_thr and val > best_iou:
                best_iou, best_gt = val, g
        if best_gt >= 0:
            taken[best_gt] = True
            out.append((idx, True))
        else:
            out.append((idx, False))
    return out


def average_precision(scores: np.ndarray, is_tp: np.ndarray, total_gt: int) -> float:
    """All-points interpolated AP over pooled, pre-matched predictions."""
    if total_gt == 0 or len(scores) == 0:
        return 0.0
    order = np.lexsort((np.arange(len(scores)), -scores))
    tp = is_tp[order].astype(float)
    fp = 1.0 - tp
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / total_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    # precision envelope, then sum rectangle areas where recall steps
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def evaluate_detection(
    preds: list[Prediction],
    gts: dict[str, list[Box]],
    iou_thr: float = 0.5,
    recall_ks: tuple[int, ...] = RECALL_KS,
) -> MetricsReport:
    """AP at the IoU threshold plus Recall@k over per-sample top-k lists."""
    groups = _group(preds)
    total_gt = sum(len(b) for b in gts.values())

    flat_scores: list[float] = []
    flat_tp: list[bool] = []
    flat_idx: list[int] = []
    for sample_id, group in groups.items():
        gt_boxes = gts.get(sample_id, [])
        for idx, is_tp in _greedy_match(group, gt_boxes, iou_thr):
            flat_idx.append(idx)
            flat_scores.append(preds[idx].score)
            flat_tp.append(is_tp)
    # restore stable global order for deterministic tie handling
    restore = np.argsort(np.asarray(flat_idx), kind="stable")
    scores = np.asarray(flat_scores, dtype=float)[restore]
    is_tp = np.asarray(flat_tp, dtype=bool)[restore]

    report = MetricsReport(ap50=average_precision(scores, is_tp, total_gt))
    for k in recall_ks:
        matched = 0
        for sample_id, group in groups.items():
            gt_boxes = gts.get(sample_id, [])
            matched += sum(1 for _, tp in _greedy_match(group, gt_boxes, iou_thr, top_k=k) if tp)
        report.recall_at[k] = matched / total_gt if total_gt else 0.0
    return report


def evaluate_rsvg(
    preds: list[Prediction],
    gts: dict[str, Box],
    thresholds: tuple[float, ...] = RSVG_THRESHOLDS,
) -> MetricsReport:
    """REC protocol: keep the single highest-confidence box per sample.

    Pr@t is the fraction of samples whose kept box reaches IoU >= t;
    mean_iou averages per-sample IoU; cum_iou is total intersection over
    total union. A sample with no prediction scores IoU 0 and contributes
    its GT area to the union sum.
    """
    if not gts:
        raise ValueError("RSVG evaluation requires at least one GT sample")
    groups = _group(preds)
    per_sample_iou: list[float] = []
    inter_sum = 0.0
    union_sum = 0.0
    for sample_id in sorted(gts):
        gt_box = gts[sample_id]
        group = groups.get(sample_id, [])
        if group:
            _, best = min(group, key=lambda p: (-p[1].score, p[0]))
            value = iou(best.box, gt_box)
            inter = intersection_area(best.box, gt_box)
            union = box_area(best.box) + box_area(gt_box) - inter
        else:
            value, inter, union = 0.0, 0.0, box_area(gt_box)
        per_sample_iou.append(value)
        inter_sum += inter
        union_sum += union
    ious = np.asarray(per_sample_iou)
    rsvg = {f"pr@{t}": float(np.mean(ious >= t)) for t in thresholds}
    rsvg["mean_iou"] = float(np.mean(ious))
    rsvg["cum_iou"] = float(inter_sum / union_sum) if union_sum > 0 else 0.0
    return MetricsReport(rsvg=rsvg)
