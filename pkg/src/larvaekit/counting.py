"""Per-image larvae counts, pond extrapolation and density summaries.

A photographed bucket holds 6 L drawn from a 100 L pond; counts scale by
the volume factor 16.6 used in the field protocol (kept as the printed
rounded value rather than 100/6, and overridable).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .annotations import ImageAnnotation
from .errors import MissingDensity, OutOfRange
from .evaluation import EvalReport

DEFAULT_VOLUME_FACTOR = 16.6


@dataclass(frozen=True)
class CountRecord:
    image_id: str
    predicted_count: int
    true_count: int | None = None


@dataclass(frozen=True)
class PondEstimate:
    sampled_count: int
    volume_factor: float
    estimated_total: float


@dataclass(frozen=True)
class DensityRow:
    density: int
    num_images: int
    mean_counting_accuracy: float
    mean_ap: float


@dataclass(frozen=True)
class DensityReport:
    """Per-density means, ascending; flags the crowding falloff trend."""

    rows: tuple[DensityRow, ...]
    accuracy_decreases_with_density: bool


def count_image(
    annotation: ImageAnnotation,
    confidence_threshold: float = 0.4,
    truth_known: bool = True,
) -> CountRecord:
    """Count predictions at or above the threshold (inclusive).

    Pass ``truth_known=False`` for field imagery that was never labeled,
    so the record carries ``true_count=None`` instead of a spurious 0.
    Thresholds above 1 are allowed and simply count nothing.
    """
    if not confidence_threshold >= 0.0:
        raise OutOfRange(
            f"confidence_threshold must be non-negative, got {confidence_threshold}"
        )
    predicted = sum(1 for p in annotation.predictions if p.confidence >= confidence_threshold)
    true_count = len(annotation.ground_truth) if truth_known else None
    return CountRecord(annotation.image_id, predicted, true_count)


def extrapolate_pond(count: int, volume_factor: float = DEFAULT_VOLUME_FACTOR) -> float:
    """Scale a bucket count to the whole pond."""
    if count < 0:
        raise OutOfRange(f"count must be non-negative, got {count}")
    if volume_factor <= 0:
        raise OutOfRange(f"volume_factor must be positive, got {volume_factor}")
    return count * volume_factor


def pond_estimate(count: int, volume_factor: float = DEFAULT_VOLUME_FACTOR) -> PondEstimate:
    return PondEstimate(count, volume_factor, extrapolate_pond(count, volume_factor))


def density_summary(
    items: Sequence[tuple[int | None, EvalReport]],
) -> DensityReport:
    """Mean counting accuracy and AP per density group.

    ``items`` pairs each image's density group with its evaluation
    report. Every image must carry a group. Rows come out in ascending
    density; the trend flag is set when mean counting accuracy strictly
    decreases from each density to the next.
    """
    buckets: dict[int, list[EvalReport]] = {}
    for density, report in items:
        if density is None:
            raise MissingDensity("every image needs a density_group for a density summary")
        buckets.setdefault(density, []).append(report)
    rows = []
    for density in sorted(buckets):
        reports = buckets[density]
        rows.append(
            DensityRow(
                density=density,
                num_images=len(reports),
                mean_counting_accuracy=sum(r.counting_accuracy for r in reports) / len(reports),
                mean_ap=sum(r.ap for r in reports) / len(reports),
            )
        )
    decreasing = len(rows) >= 2 and all(
        rows[i + 1].mean_counting_accuracy < rows[i].mean_counting_accuracy
        for i in range(len(rows) - 1)
    )
    return DensityReport(tuple(rows), decreasing)


def render_counts_csv(records: Sequence[CountRecord], volume_factor: float = DEFAULT_VOLUME_FACTOR) -> str:
    """Rows of per-image counts with the pond estimate to one decimal."""
    out = ["image_id,predicted_count,true_count,estimated_total\n"]
    for rec in records:
        true_part = "" if rec.true_count is None else str(rec.true_count)
        total = extrapolate_pond(rec.predicted_count, volume_factor)
        out.append(f"{rec.image_id},{rec.predicted_count},{true_part},{total:.1f}\n")
    return "".join(out)


def render_density_csv(report: DensityReport) -> str:
    out = ["density,num_images,mean_counting_accuracy,mean_ap\n"]
    for row in report.rows:
        out.append(
            f"{row.density},{row.num_images},"
            f"{row.mean_counting_accuracy:.4f},{row.mean_ap:.4f}\n"
        )
    return "".join(out)
