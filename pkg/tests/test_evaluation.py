import numpy as np
import pytest

from part2object.evaluation import DEFAULT_THRESHOLDS, evaluate, evaluate_multi, mask_iou
from part2object.scene_io import Instance, InstanceSet


def oracle_ap(pred_items, gt_sets, theta):
    """Literal greedy matching + envelope integral, independent of the library.

    pred_items: list of (point-id set, confidence) in manifest order.
    """
    order = sorted(
        range(len(pred_items)),
        key=lambda k: (-pred_items[k][1], -len(pred_items[k][0]), k),
    )
    taken = set()
    flags = []
    for k in order:
        pset = pred_items[k][0]
        best_iou, best_g = 0.0, None
        for g, gset in enumerate(gt_sets):
            if g in taken:
                continue
            union = len(pset | gset)
            iou = len(pset & gset) / union if union else 0.0
            if iou > best_iou:
                best_iou, best_g = iou, g
        if best_g is not None and best_iou >= theta:
            taken.add(best_g)
            flags.append(1)
        else:
            flags.append(0)
    if not gt_sets:
        return 0.0
    points = []
    tp = fp = 0
    for f in flags:
        tp += f
        fp += 1 - f
        points.append((tp / len(gt_sets), tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for r, _p in points:
        if r > prev_r:
            envelope = max(pp for rr, pp in points if rr >= r)
            ap += (r - prev_r) * envelope
            prev_r = r
    return ap


def instset(*id_lists, confs=None, kind="object"):
    confs = confs or [1.0] * len(id_lists)
    return InstanceSet(
        [Instance(np.asarray(sorted(ids), dtype=np.int64), c, kind)
         for ids, c in zip(id_lists, confs)]
    )


# ---------------------------------------------------------------------------
# mask_iou


def test_iou_identical():
    assert mask_iou([1, 2, 3], [1, 2, 3]) == 1.0


def test_iou_disjoint():
    assert mask_iou([1, 2], [3, 4]) == 0.0


def test_iou_half_overlap():
    a = np.arange(100)
    b = np.arange(50, 150)
    assert mask_iou(a, b) == pytest.approx(1.0 / 3.0)


def test_iou_both_empty_is_zero():
    assert mask_iou([], []) == 0.0


# ---------------------------------------------------------------------------
# evaluate


def test_identity_predictions_score_one():
    gt = instset(range(10), range(10, 30), range(40, 45))
    report = evaluate(gt, gt)
    assert report.ap25 == 1.0
    assert report.ap50 == 1.0
    assert report.mean_ap == 1.0


def test_disjoint_predictions_score_zero():
    gt = instset(range(10))
    preds = instset(range(100, 110))
    report = evaluate(preds, gt)
    assert report.ap25 == 0.0
    assert report.ap50 == 0.0
    assert report.mean_ap == 0.0


def test_contrived_three_preds_two_gt_matches_oracle():
    gt_sets = [set(range(10)), set(range(20, 30))]
    pred_items = [
        (set(range(8)) | {15}, 0.9),          # good match for gt0
        (set(range(20, 26)), 0.8),            # partial match for gt1
        (set(range(5)) | set(range(20, 23)), 0.7),  # straddles both
    ]
    preds = instset(*[sorted(s) for s, _ in pred_items],
                    confs=[c for _, c in pred_items])
    gt = instset(*[sorted(s) for s in gt_sets])
    report = evaluate(preds, gt)
    for theta in DEFAULT_THRESHOLDS:
        want = oracle_ap(pred_items, gt_sets, theta)
        assert report.ap_by_threshold[theta] == pytest.approx(want, abs=1e-12)


def test_matches_oracle_on_random_small_cases():
    rng = np.random.default_rng(31)
    for _ in range(100):
        n_gt = int(rng.integers(1, 4))
        n_pred = int(rng.integers(0, 5))
        universe = 40
        starts = rng.choice(universe - 10, size=n_gt, replace=False)
        gt_sets = []
        used = set()
        for s in sorted(starts):
            ids = set(range(s, s + int(rng.integers(3, 9)))) - used
            if ids:
                gt_sets.append(ids)
                used |= ids
        pred_items = []
        for _ in range(n_pred):
            base = int(rng.integers(0, universe - 8))
            ids = set(range(base, base + int(rng.integers(2, 9))))
            pred_items.append((ids, float(rng.choice([0.5, 0.7, 0.9, 1.0]))))
        preds = instset(*[sorted(s) for s, _ in pred_items],
                        confs=[c for _, c in pred_items])
        gt = instset(*[sorted(s) for s in gt_sets])
        report = evaluate(preds, gt)
        for theta in (0.25, 0.5, 0.75):
            want = oracle_ap(pred_items, gt_sets, theta)
            assert report.ap_by_threshold[theta] == pytest.approx(want, abs=1e-12)


def test_ap_monotone_in_threshold():
    rng = np.random.default_rng(37)
    for _ in range(20):
        gt_sets = [set(range(k * 12, k * 12 + 10)) for k in range(3)]
        pred_items = []
        for k in range(4):
            base = int(rng.integers(0, 30))
            pred_items.append(
                (set(range(base, base + int(rng.integers(3, 12)))), 1.0)
            )
        preds = instset(*[sorted(s) for s, _ in pred_items])
        gt = instset(*[sorted(s) for s in gt_sets])
        aps = [
            evaluate(preds, gt).ap_by_threshold[t]
            for t in sorted(DEFAULT_THRESHOLDS)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))


def test_duplicate_prediction_never_raises_ap():
    gt = instset(range(10), range(20, 30))
    preds = instset(range(10), range(20, 30))
    base = evaluate(preds, gt)
    duped = instset(range(10), range(20, 30), range(10))
    after = evaluate(duped, gt)
    for theta in DEFAULT_THRESHOLDS:
        assert after.ap_by_threshold[theta] <= base.ap_by_threshold[theta] + 1e-12


def test_equal_confidence_reorder_is_stable():
    # size tie-break restores one deterministic processing order
    gt = instset(range(10), range(20, 26))
    a = instset(range(10), range(20, 26))        # big first
    b = instset(range(20, 26), range(10))        # small first
    ra, rb = evaluate(a, gt), evaluate(b, gt)
    assert ra.ap_by_threshold == rb.ap_by_threshold


def test_equal_iou_match_takes_lowest_gt_index():
    gt = instset(range(0, 10), range(10, 20))
    preds = instset(range(5, 15))  # overlaps each gt by exactly 5 points
    report = evaluate(preds, gt)
    assert report.matches[0.25][0] == 0


def test_empty_ground_truth_flagged():
    preds = instset(range(10))
    report = evaluate(preds, InstanceSet())
    assert report.gt_empty is True
    assert report.ap50 == 0.0


def test_overlapping_ground_truth_rejected():
    gt = instset(range(10), range(5, 15))
    with pytest.raises(ValueError):
        evaluate(instset(range(10)), gt)


def test_multi_scene_pooling_matches_single_scene_duplication():
    gt = instset(range(10), range(20, 30))
    preds = instset(range(10), range(20, 28))
    single = evaluate(preds, gt)
    pooled = evaluate_multi([(preds, gt), (preds, gt)])
    # same PR structure duplicated -> identical AP
    for theta in DEFAULT_THRESHOLDS:
        assert pooled.ap_by_threshold[theta] == pytest.approx(
            single.ap_by_threshold[theta], abs=1e-12
        )


def test_report_serializes_to_plain_json_types():
    import json

    gt = instset(range(10))
    report = evaluate(gt, gt)
    data = json.loads(json.dumps(report.to_dict()))
    assert data["ap25"] == 1.0
    assert data["ap50"] == 1.0
    assert data["map"] == 1.0
    assert data["schema"] == "p2o.report/1"
