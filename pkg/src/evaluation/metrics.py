"""NME under the four normalisations, CED curves, AUC and failure rate."""
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.errors import ConfigurationError, DegenerateNormaliserError, DimensionError
from ..models.evaluation import EYE_LAYOUTS, CedCurve, EvaluationReport, EyeLayout, NmeMode
from ..models.landmarks import LandmarkSet
from ..utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_MAX_THRESHOLD = 0.08
DEFAULT_BINS = 80
FAILURE_CUTOFF = 0.08
# thresholds are computed as max * i / n; absorb the rounding of that product
_THRESHOLD_SLACK = 1e-12


def eye_layout(n: int) -> EyeLayout:
    if n not in EYE_LAYOUTS:
        raise ConfigurationError([f"eye-based NME needs a known eye layout; none for {n} landmarks "
                                  f"(known: {sorted(EYE_LAYOUTS)})"])
    return EYE_LAYOUTS[n]


def normaliser(gt: LandmarkSet, mode: NmeMode) -> float:
    if mode in (NmeMode.EYE_CENTRE, NmeMode.OUTER_EYE_CORNER):
        layout = eye_layout(gt.n)
        if mode == NmeMode.EYE_CENTRE:
            left = gt.points[layout.left_eye].mean(axis=0)
            right = gt.points[layout.right_eye].mean(axis=0)
        else:
            left = gt.points[layout.left_outer_corner]
            right = gt.points[layout.right_outer_corner]
        value = float(np.hypot(*(left - right)))
    else:
        x_min, y_min, x_max, y_max = gt.bbox()
        width, height = x_max - x_min, y_max - y_min
        if mode == NmeMode.BBOX_DIAGONAL:
            value = float(np.hypot(width, height))
        else:
            value = float(np.sqrt(width * height))
    if not value > 0:
        raise DegenerateNormaliserError(f"{mode.value} normaliser is {value}")
    return value


def nme(pred: LandmarkSet, gt: LandmarkSet, mode: NmeMode) -> float:
    """Mean point error over the visible ground-truth landmarks, normalised"""
    if pred.n != gt.n:
        raise DimensionError('landmarks', gt.n, pred.n, op='nme')
    visible = gt.visibility
    if not visible.any():
        raise DegenerateNormaliserError("no visible ground-truth landmarks")
    distances = np.hypot(*(pred.points[visible] - gt.points[visible]).T)
    return float(np.mean(distances)) / normaliser(gt, mode)


def ced(errors: Sequence[float], max_threshold: float = DEFAULT_MAX_THRESHOLD,
        n_bins: int = DEFAULT_BINS, cutoff: float = FAILURE_CUTOFF) -> CedCurve:
    """Empirical CDF of per-image errors on thresholds max * i / n_bins, i = 0..n_bins.

    AUC is the trapezoid integral of that curve divided by max_threshold;
    the failure rate is the share of errors above `cutoff`.
    """
    errors = np.asarray(errors, dtype=np.float64)
    problems = []
    if errors.size == 0:
        problems.append("CED needs at least one error value")
    if max_threshold <= 0:
        problems.append("max_threshold must be positive")
    if n_bins < 1:
        problems.append("n_bins must be at least 1")
    ConfigurationError.raise_if(problems)

    thresholds = max_threshold * np.arange(n_bins + 1) / n_bins
    fractions = np.array([np.mean(errors <= t + _THRESHOLD_SLACK) for t in thresholds])
    widths = np.diff(thresholds)
    auc = float(np.sum(widths * (fractions[1:] + fractions[:-1]) / 2.0) / max_threshold)
    failure_rate = float(np.mean(errors > cutoff))
    return CedCurve(thresholds=thresholds, fractions=fractions, auc=auc,
                    failure_rate=failure_rate, cutoff=cutoff)


def evaluate(predictions: Sequence[LandmarkSet], ground_truth: Sequence[LandmarkSet],
             mode: NmeMode, sample_ids: Optional[Sequence[str]] = None,
             max_threshold: float = DEFAULT_MAX_THRESHOLD, n_bins: int = DEFAULT_BINS,
             cutoff: float = FAILURE_CUTOFF) -> EvaluationReport:
    """Per-sample NME plus its CED; degenerate samples are skipped with a warning"""
    if len(predictions) != len(ground_truth):
        raise DimensionError('samples', len(ground_truth), len(predictions), op='evaluate')
    sample_ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(ground_truth))]
    report = EvaluationReport(mode=mode)
    for sample_id, pred, gt in zip(sample_ids, predictions, ground_truth):
        try:
            error = nme(pred, gt, mode)
        except DegenerateNormaliserError as e:
            logger.warning(f"Skipping {sample_id}: {e}")
            report.skipped.append(sample_id)
            continue
        report.errors.append(error)
        report.sample_ids.append(sample_id)
    if report.errors:
        report.ced = ced(report.errors, max_threshold, n_bins, cutoff)
    logger.info(f"{mode.value} NME over {len(report.errors)} samples: {report.mean_nme:.5f}")
    return report


def errors_from_report(data) -> List[float]:
    """Error list from a bare JSON list or an evaluation report dict"""
    if isinstance(data, dict):
        if 'per_sample' in data:
            return [float(entry['nme']) for entry in data['per_sample']]
        if 'errors' in data:
            return [float(v) for v in data['errors']]
        raise ConfigurationError(["error file must hold a list or a report with 'per_sample'"])
    return [float(v) for v in data]


def summary(report: EvaluationReport) -> Dict:
    ced_curve = report.ced
    return {
        'mode': report.mode.value,
        'count': len(report.errors),
        'mean_nme': report.mean_nme if report.errors else None,
        'auc': ced_curve.auc if ced_curve else None,
        'failure_rate': ced_curve.failure_rate if ced_curve else None,
        'success_rate': ced_curve.success_rate if ced_curve else None,
    }
