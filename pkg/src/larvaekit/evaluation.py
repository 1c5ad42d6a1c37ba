"""IoU matching of detections to ground truth and the derived metrics.

The matcher is greedy: predictions are visited in descending confidence
and each grabs its best-overlapping unclaimed ground-truth box. Counts
feed precision/recall/F1 and two accuracy flavors that are deliberately
kept apart:

- ``confusion_accuracy``: (TP + TN) / (TP + TN + FP + FN), with TN fixed
  at 0 since "everything that is not an object" is uncountable.
- ``counting_accuracy``: TP / num_gt, the definition our result tables
  use; it coincides with recall exactly.

Average precision integrates the monotone envelope of the PR curve over
recall (all-point interpolation); 101-point sampling is available for
comparison with other toolkits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotations import (
    DatasetManifest,
    ImageAnnotation,
    LabeledBox,
    PixelBox,
    ScoredBox,
    load_image_annotation,
    to_absolute,
)
from .errors import DegenerateBox, InconsistentCounts, NoGroundTruth, OutOfRange

AGGREGATIONS = ("global", "per_image_mean")
AP_METHODS = ("envelope", "101point")
GROUP_FIELDS = ("day_label", "density_group")


@dataclass(frozen=True)
class MatchConfig:
    """Thresholds and aggregation policy for an evaluation run."""

    iou_threshold: float = 0.5
    confidence_threshold: float = 0.4
    aggregation: str = "global"
    ap_method: str = "envelope"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise OutOfRange(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise OutOfRange(
                f"confidence_threshold must lie in [0, 1], got {self.confidence_threshold}"
            )
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.ap_method not in AP_METHODS:
            raise ValueError(f"ap_method must be one of {AP_METHODS}")


@dataclass(frozen=True)
class ConfusionCounts:
    """Detection outcome counts; true negatives are identically zero."""

    tp: int
    fp: int
    fn: int
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0 or self.tn != 0:
            raise InconsistentCounts(f"bad counts tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn}")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MetricSet:
    precision: float
    recall: float
    f1: float
    confusion_accuracy: float
    counting_accuracy: float


@dataclass(frozen=True)
class PRPoint:
    confidence: float
    precision: float
    recall: float


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection-over-union of two corner-form boxes."""
    for box in (a, b):
        if box.x_max <= box.x_min or box.y_max <= box.y_min:
            raise DegenerateBox(f"box {tuple(box)} has non-positive extent")
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _unit_corners(box) -> PixelBox:
    # Normalized coords are a uniform per-axis scaling, so IoU computed in
    # the unit square equals IoU in pixel space.
    return to_absolute(box, 1, 1)


@dataclass(frozen=True)
class MatchResult:
    counts: ConfusionCounts
    # (confidence, is_tp) per retained prediction, in input order.
    scored_flags: tuple[tuple[float, bool], ...]


def match_detections(
    ground_truth: Sequence[LabeledBox],
    predictions: Sequence[ScoredBox],
    config: MatchConfig = MatchConfig(),
) -> MatchResult:
    """Greedily assign predictions to ground truth at the IoU threshold.

    Predictions below ``config.confidence_threshold`` are discarded first.
    The rest are processed in descending confidence (ties keep input
    order); each becomes a TP if its best-IoU still-unclaimed gt box
    reaches the threshold, consuming that box, and an FP otherwise.
    Unclaimed gt boxes are FNs. Matching is class-blind: the datasets
    here are single-class.
    """
    kept = [p for p in predictions if p.confidence >= config.confidence_threshold]
    order = sorted(range(len(kept)), key=lambda j: (-kept[j].confidence, j))
    gt_corners = [_unit_corners(g.box) for g in ground_truth]
    claimed = [False] * len(ground_truth)
    flags = [False] * len(kept)
    for j in order:
        pc = _unit_corners(kept[j].box)
        best_iou, best_k = 0.0, -1
        for k, gc in enumerate(gt_corners):
            if claimed[k]:
                continue
            v = iou(pc, gc)
            if v > best_iou:  # strict: ties stay with the lowest gt index
                best_iou, best_k = v, k
        if best_k >= 0 and best_iou >= config.iou_threshold:
            claimed[best_k] = True
            flags[j] = True
    tp = sum(flags)
    counts = ConfusionCounts(tp=tp, fp=len(kept) - tp, fn=len(ground_truth) - tp)
    return MatchResult(counts, tuple((p.confidence, f) for p, f in zip(kept, flags)))


def confusion_metrics(counts: ConfusionCounts, num_gt: int) -> MetricSet:
    """Derive the ratio metrics from confusion counts.

    ``num_gt`` must equal TP + FN. Ratios whose denominator is zero are
    reported as 0 by convention.
    """
    if num_gt != counts.tp + counts.fn:
        raise InconsistentCounts(
            f"num_gt={num_gt} but tp+fn={counts.tp + counts.fn}"
        )
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    denom = tp + tn + fp + fn
    confusion_accuracy = (tp + tn) / denom if denom else 0.0
    counting_accuracy = tp / num_gt if num_gt else 0.0
    return MetricSet(precision, recall, f1, confusion_accuracy, counting_accuracy)


def pr_curve(scored_flags: Iterable[tuple[float, bool]], total_gt: int) -> list[PRPoint]:
    """Precision/recall after each prediction, in descending confidence.

    ``scored_flags`` should come from matching with confidence threshold 0
    so the curve sweeps every score the detector emitted.
    """
    if total_gt <= 0:
        raise NoGroundTruth("a PR curve needs at least one ground-truth box")
    ordered = sorted(scored_flags, key=lambda t: -t[0])
    points = []
    tp = fp = 0
    for confidence, is_tp in ordered:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append(PRPoint(confidence, tp / (tp + fp), tp / total_gt))
    return points


def average_precision(curve: Sequence[PRPoint], method: str = "envelope") -> float:
    """Integrate a PR curve into a single AP value.

    ``envelope`` replaces precision by its running maximum from the right
    and integrates exactly over recall (all-point interpolation).
    ``101point`` instead averages the enveloped precision sampled at
    recalls 0.00, 0.01, ..., 1.00.
    """
    if method not in AP_METHODS:
        raise ValueError(f"method must be one of {AP_METHODS}")
    if not curve:
        return 0.0
    recalls = [p.recall for p in curve]
    envelope = [p.precision for p in curve]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    if method == "101point":
        total = 0.0
        for i in range(101):
            r = i / 100
            # highest enveloped precision at recall >= r
            best = 0.0
            for rec, pre in zip(recalls, envelope):
                if rec >= r:
                    best = pre
                    break
            total += best
        return total / 101
    ap = recalls[0] * envelope[0]
    for i in range(1, len(curve)):
        ap += (recalls[i] - recalls[i - 1]) * envelope[i]
    return ap


@dataclass(frozen=True)
class EvalReport:
    """Metrics bundle for one image, one group, or a whole dataset.

    ``ap`` always integrates the stored ``curve``; ``mean_image_ap`` is the
    average of per-image APs (over images that have ground truth) and is
    only populated on reports built from several images.
    """

    num_images: int
    num_gt: int
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    confusion_accuracy: float
    counting_accuracy: float
    ap: float
    curve: tuple[PRPoint, ...]
    mean_image_ap: float | None = None

    @staticmethod
    def build(
        counts: ConfusionCounts,
        num_gt: int,
        num_images: int,
        scored_flags: Iterable[tuple[float, bool]],
        ap_method: str = "envelope",
        mean_image_ap: float | None = None,
    ) -> "EvalReport":
        metrics = confusion_metrics(counts, num_gt)
        curve: tuple[PRPoint, ...] = ()
        ap = 0.0
        if num_gt > 0:
            curve = tuple(pr_curve(scored_flags, num_gt))
            ap = average_precision(curve, ap_method)
        return EvalReport(
            num_images=num_images,
            num_gt=num_gt,
            counts=counts,
            precision=metrics.precision,
            recall=metrics.recall,
            f1=metrics.f1,
            confusion_accuracy=metrics.confusion_accuracy,
            counting_accuracy=metrics.counting_accuracy,
            ap=ap,
            curve=curve,
            mean_image_ap=mean_image_ap,
        )


@dataclass(frozen=True)
class DatasetEvaluation:
    overall: EvalReport
    per_image: Mapping[str, EvalReport]
    config: MatchConfig
    group_by: str | None = None
    groups: Mapping[str, EvalReport] = field(default_factory=dict)

    def summary_ap(self, report: EvalReport | None = None) -> float:
        """The AP value the configured aggregation reports."""
        report = report or self.overall
        if self.config.aggregation == "per_image_mean" and report.mean_image_ap is not None:
            return report.mean_image_ap
        return report.ap


@dataclass(frozen=True)
class _ImagePart:
    annotation: ImageAnnotation
    counts: ConfusionCounts
    sweep_flags: tuple[tuple[float, bool], ...]
    report: EvalReport


def _evaluate_image(annotation: ImageAnnotation, config: MatchConfig) -> _ImagePart:
    matched = match_detections(annotation.ground_truth, annotation.predictions, config)
    # The curve sweeps every score, so rematch with the threshold dropped.
    sweep = match_detections(
        annotation.ground_truth,
        annotation.predictions,
        replace(config, confidence_threshold=0.0),
    )
    report = EvalReport.build(
        matched.counts,
        num_gt=len(annotation.ground_truth),
        num_images=1,
        scored_flags=sweep.scored_flags,
        ap_method=config.ap_method,
    )
    return _ImagePart(annotation, matched.counts, sweep.scored_flags, report)


def _pooled_report(parts: Sequence[_ImagePart], config: MatchConfig) -> EvalReport:
    counts = ConfusionCounts(0, 0, 0)
    flags: list[tuple[float, bool]] = []
    num_gt = 0
    image_aps = []
    for part in parts:
        counts = counts + part.counts
        flags.extend(part.sweep_flags)
        num_gt += len(part.annotation.ground_truth)
        if part.report.num_gt > 0:
            image_aps.append(part.report.ap)
    mean_ap = sum(image_aps) / len(image_aps) if image_aps else 0.0
    return EvalReport.build(
        counts,
        num_gt=num_gt,
        num_images=len(parts),
        scored_flags=flags,
        ap_method=config.ap_method,
        mean_image_ap=mean_ap,
    )


def evaluate_dataset(
    manifest: DatasetManifest,
    config: MatchConfig = MatchConfig(),
    root: Path | str = ".",
    group_by: str | None = None,
) -> DatasetEvaluation:
    """Evaluate every manifest entry and pool the results.

    Label paths resolve against ``root``. ``group_by`` may be
    ``"day_label"`` or ``"density_group"`` to add per-group pooled
    reports; entries missing the field fall into an ``"unlabeled"``
    group. Results are deterministic regardless of entry order within
    a group.
    """
    if group_by is not None and group_by not in GROUP_FIELDS:
        raise ValueError(f"group_by must be one of {GROUP_FIELDS} or None")
    parts = []
    for entry in manifest:
        annotation = load_image_annotation(entry, root)
        parts.append((entry, _evaluate_image(annotation, config)))
    overall = _pooled_report([p for _, p in parts], config)
    per_image = {entry.image_id: part.report for entry, part in parts}
    groups: dict[str, EvalReport] = {}
    if group_by is not None:
        buckets: dict[object, list[_ImagePart]] = {}
        for entry, part in parts:
            buckets.setdefault(getattr(entry, group_by), []).append(part)
        def group_key(value):
            return (value is None, value if value is not None else "")
        for value in sorted(buckets, key=group_key):
            label = "unlabeled" if value is None else str(value)
            groups[label] = _pooled_report(buckets[value], config)
    return DatasetEvaluation(
        overall=overall,
        per_image=per_image,
        config=config,
        group_by=group_by,
        groups=groups,
    )


def render_eval_csv(evaluation: DatasetEvaluation) -> str:
    """One CSV row per group ('all' when ungrouped); ratios to 4 decimals."""
    header = (
        "group,num_images,num_gt,tp,fp,fn,precision,recall,f1,"
        "confusion_accuracy,counting_accuracy,ap\n"
    )
    rows = evaluation.groups if evaluation.groups else {"all": evaluation.overall}
    out = [header]
    for label, report in rows.items():
        c = report.counts
        out.append(
            f"{label},{report.num_images},{report.num_gt},{c.tp},{c.fp},{c.fn},"
            f"{report.precision:.4f},{report.recall:.4f},{report.f1:.4f},"
            f"{report.confusion_accuracy:.4f},{report.counting_accuracy:.4f},"
            f"{evaluation.summary_ap(report):.4f}\n"
        )
    return "".join(out)


def render_pr_curve_csv(curve: Sequence[PRPoint]) -> str:
    out = ["confidence,recall,precision\n"]
    for point in curve:
        out.append(f"{point.confidence:.6f},{point.recall:.6f},{point.precision:.6f}\n")
    return "".join(out)
