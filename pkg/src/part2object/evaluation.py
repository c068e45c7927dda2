"""Class-agnostic instance segmentation AP over point-id masks.

Predictions are sorted by confidence (ties: larger masks first, then input
order), greedily matched to the unmatched ground truth with highest IoU, and
scored with the all-points interpolated area under the precision-recall
curve. mean_ap averages the IoU thresholds 0.50:0.95 in steps of 0.05;
ap25/ap50 are read at fixed thresholds.
"""

from dataclasses import dataclass, field

import numpy as np

REPORT_SCHEMA = "p2o.report/1"

STRICT_THRESHOLDS = tuple(round(0.50 + 0.05 * k, 2) for k in range(10))
DEFAULT_THRESHOLDS = (0.25,) + STRICT_THRESHOLDS


def mask_iou(a, b):
    """Intersection over union of two point-id sets (both empty -> 0)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size == 0 and b.size == 0:
        return 0.0
    inter = np.intersect1d(a, b, assume_unique=True).size
    union = a.size + b.size - inter
    return inter / union


@dataclass
class ApReport:
    ap25: float
    ap50: float
    mean_ap: float
    ap_by_threshold: dict
    curves: dict = field(default_factory=dict)
    matches: dict = field(default_factory=dict)
    gt_empty: bool = False

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "ap25": self.ap25,
            "ap50": self.ap50,
            "map": self.mean_ap,
            "ap_by_threshold": {f"{t:.2f}": v for t, v in self.ap_by_threshold.items()},
            "curves": {
                f"{t:.2f}": {"recall": list(r), "precision": list(p)}
                for t, (r, p) in self.curves.items()
            },
            "matches": {
                f"{t:.2f}": [m if m is None else int(m) for m in ms]
                for t, ms in self.matches.items()
            },
            "gt_empty": self.gt_empty,
        }


def _interpolated_ap(recalls, precisions):
    """Area under the precision envelope (all-points interpolation)."""
    mrec = np.concatenate(([0.0], recalls, [1.0]))
    mpre = np.concatenate(([0.0], precisions, [0.0]))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]).sum())


def evaluate(preds, gt, thresholds=DEFAULT_THRESHOLDS):
    """Score predictions against disjoint ground-truth instances.

    Both arguments are InstanceSets; kinds are not inspected (pass object
    instances). Empty ground truth yields zero APs with gt_empty set. The
    matching and all reported numbers are deterministic.
    """
    gt_sets = [inst.point_ids for inst in gt.instances]
    if gt_sets:
        pooled = np.concatenate(gt_sets)
        if np.unique(pooled).size != pooled.size:
            raise ValueError("ground-truth instances must be pairwise disjoint")

    order = sorted(
        range(len(preds.instances)),
        key=lambda k: (-preds.instances[k].confidence, -preds.instances[k].point_ids.size, k),
    )
    pred_sets = [preds.instances[k].point_ids for k in order]

    ap_by_threshold = {}
    curves = {}
    matches = {}
    gt_empty = not gt_sets
    for theta in thresholds:
        assigned = [None] * len(preds.instances)
        gt_taken = np.zeros(len(gt_sets), dtype=bool)
        tp = np.zeros(len(pred_sets))
        for rank, pset in enumerate(pred_sets):
            best_iou, best_g = 0.0, None
            for g, gset in enumerate(gt_sets):
                if gt_taken[g]:
                    continue
                iou = mask_iou(pset, gset)
                if iou > best_iou:
                    best_iou, best_g = iou, g
            if best_g is not None and best_iou >= theta:
                gt_taken[best_g] = True
                tp[rank] = 1.0
                assigned[order[rank]] = best_g
        if gt_empty or not pred_sets:
            recalls = np.zeros(len(pred_sets))
            precisions = np.zeros(len(pred_sets))
            ap = 0.0
        else:
            cum_tp = np.cumsum(tp)
            cum_fp = np.cumsum(1.0 - tp)
            recalls = cum_tp / len(gt_sets)
            precisions = cum_tp / (cum_tp + cum_fp)
            ap = _interpolated_ap(recalls, precisions)
        ap_by_threshold[theta] = ap
        curves[theta] = (recalls.tolist(), precisions.tolist())
        matches[theta] = assigned

    strict = [ap_by_threshold[t] for t in STRICT_THRESHOLDS if t in ap_by_threshold]
    return ApReport(
        ap25=ap_by_threshold.get(0.25, 0.0),
        ap50=ap_by_threshold.get(0.50, 0.0),
        mean_ap=float(np.mean(strict)) if strict else 0.0,
        ap_by_threshold=ap_by_threshold,
        curves=curves,
        matches=matches,
        gt_empty=gt_empty,
    )


def evaluate_multi(scene_pairs, thresholds=DEFAULT_THRESHOLDS):
    """Pool several scenes' (preds, gt) into one AP curve.

    Point ids are namespaced per scene by offsetting, so instances never
    match across scenes. Pooled tie-breaks follow scene order then manifest
    order, matching the single-scene convention.
    """
    from .scene_io import Instance, InstanceSet

    pooled_preds, pooled_gt = [], []
    offset = 0
    for preds, gt in scene_pairs:
        top = 0
        for inst in list(preds.instances) + list(gt.instances):
            if inst.point_ids.size:
                top = max(top, int(inst.point_ids.max()) + 1)
        for inst in preds.instances:
            pooled_preds.append(
                Instance(inst.point_ids + offset, inst.confidence, inst.kind)
            )
        for inst in gt.instances:
            pooled_gt.append(Instance(inst.point_ids + offset, inst.confidence, inst.kind))
        offset += top
    return evaluate(
        InstanceSet(instances=pooled_preds), InstanceSet(instances=pooled_gt), thresholds
    )
