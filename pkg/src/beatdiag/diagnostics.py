"""Activation-quality diagnostics, failure taxonomy, and tempo statistics.

The activation diagnostics quantify whether a curve is usable at all
(energy at annotated beats, peaked shape, periodic structure) independently
of any decoder. The taxonomy buckets evaluation results into disjoint
failure modes with fixed precedence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats as scipy_stats

from .errors import DegenerateInput, InsufficientReference, NoOverlap
from .ingest import ActivationCurve, BeatAnnotation
from .metrics import EvalResult
from .peaks import PeakConfig, pick_peaks

log = logging.getLogger(__name__)

GT_NEIGHBORHOOD_FRAMES = 2  # +/- window around each annotated beat
SHARPNESS_OFFSET_FRAMES = 3
PERIODICITY_BPM_RANGE = (30.0, 215.0)


@dataclass(frozen=True)
class ActivationDiagnostics:
    act_at_gt: float
    max_activation: float
    peak_sharpness: float
    periodicity_strength: float
    entropy: float
    false_positive_activation: float


@dataclass(frozen=True)
class TaxonomyConfig:
    good_f: float = 0.8
    octave_gap: float = 0.25
    continuity_gap: float = 0.2
    total_f: float = 0.3
    total_amlt: float = 0.3


class FailureCategory(str, Enum):
    GOOD = "good"
    TOTAL_FAILURE = "total_failure"
    OCTAVE_ERROR = "octave_error"
    CONTINUITY_ERROR = "continuity_error"
    OTHER = "other"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TempoStats:
    gt_bpm: float
    ibi_cv: float


def _beat_frames(act: ActivationCurve, ref: BeatAnnotation) -> np.ndarray:
    frames = np.round(ref.beats * act.fps).astype(np.int64)
    in_range = (frames >= 0) & (frames < len(act.values))
    if not in_range.all():
        log.warning(
            "%s: %d beat(s) outside the %d-frame curve skipped",
            ref.track_id, int((~in_range).sum()), len(act.values),
        )
    return frames[in_range]


def act_at_gt(act: ActivationCurve, ref: BeatAnnotation) -> float:
    """Mean over annotated beats of the max activation within +/-2 frames."""
    frames = _beat_frames(act, ref)
    if frames.size == 0:
        raise NoOverlap(f"{ref.track_id}: no annotated beat inside the curve")
    values = act.values
    peaks = [
        values[max(f - GT_NEIGHBORHOOD_FRAMES, 0): f + GT_NEIGHBORHOOD_FRAMES + 1].max()
        for f in frames
    ]
    return float(np.mean(peaks))


def false_positive_activation(act: ActivationCurve, ref: BeatAnnotation) -> float:
    """Mean activation over frames farther than 2 frames from every beat."""
    frames = _beat_frames(act, ref)
    far = np.ones(len(act.values), dtype=bool)
    for f in frames:
        far[max(f - GT_NEIGHBORHOOD_FRAMES, 0): f + GT_NEIGHBORHOOD_FRAMES + 1] = False
    if not far.any():
        return 0.0
    return float(act.values[far].mean())


def peak_sharpness(act: ActivationCurve) -> float:
    """Mean peak prominence over a 3-frame offset; 0 when no peaks."""
    values = act.values
    peak_times = pick_peaks(act, PeakConfig(threshold=0.1, min_separation=0.0))
    if peak_times.size == 0:
        return 0.0
    frames = np.round(peak_times * act.fps).astype(int)
    last = len(values) - 1
    sharpness = [
        max(
            values[f]
            - 0.5 * (values[max(f - SHARPNESS_OFFSET_FRAMES, 0)] + values[min(f + SHARPNESS_OFFSET_FRAMES, last)]),
            0.0,
        )
        for f in frames
    ]
    return float(np.mean(sharpness))


def periodicity_strength(act: ActivationCurve) -> float:
    """Max normalized autocorrelation over lags in the 30-215 BPM range."""
    x = act.values - act.values.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return 0.0
    lag_min = int(round(60.0 * act.fps / PERIODICITY_BPM_RANGE[1]))
    lag_max = int(round(60.0 * act.fps / PERIODICITY_BPM_RANGE[0]))
    lag_min = max(lag_min, 1)
    lag_max = min(lag_max, len(x) - 1)
    if lag_max < lag_min:
        return 0.0
    best = max(float(np.dot(x[:-lag], x[lag:])) / denom for lag in range(lag_min, lag_max + 1))
    return float(np.clip(best, 0.0, 1.0))


def activation_entropy(act: ActivationCurve) -> float:
    """Shannon entropy of the sum-normalized curve, scaled to [0, 1]."""
    total = act.values.sum()
    n = len(act.values)
    if total == 0.0 or n < 2:
        return 0.0
    p = act.values / total
    nonzero = p[p > 0]
    return float(-(nonzero * np.log(nonzero)).sum() / np.log(n))


def compute_diagnostics(act: ActivationCurve, ref: BeatAnnotation) -> ActivationDiagnostics:
    return ActivationDiagnostics(
        act_at_gt=act_at_gt(act, ref),
        max_activation=float(act.values.max()),
        peak_sharpness=peak_sharpness(act),
        periodicity_strength=periodicity_strength(act),
        entropy=activation_entropy(act),
        false_positive_activation=false_positive_activation(act, ref),
    )


def classify_failure(result: EvalResult, cfg: TaxonomyConfig = TaxonomyConfig()) -> FailureCategory:
    """Assign exactly one failure category; precedence is fixed.

    good -> total failure -> octave error -> continuity error -> other.
    """
    if result.f_measure >= cfg.good_f:
        return FailureCategory.GOOD
    if result.f_measure < cfg.total_f and result.amlt < cfg.total_amlt:
        return FailureCategory.TOTAL_FAILURE
    if result.amlt - result.f_measure > cfg.octave_gap:
        return FailureCategory.OCTAVE_ERROR
    if result.cmlt - result.cmlc > cfg.continuity_gap:
        return FailureCategory.CONTINUITY_ERROR
    return FailureCategory.OTHER


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> tuple[float, float]:
    """Spearman rank correlation with average ranks and a t-test p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise DegenerateInput("spearman needs two equal-length sequences of >= 3 values")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0.0:
        raise DegenerateInput("zero rank variance")
    rho = float(np.dot(rx, ry) / denom)
    rho = float(np.clip(rho, -1.0, 1.0))
    n = x.size
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(scipy_stats.t.sf(abs(t), df=n - 2))
    return rho, p


def tempo_stats(ref: BeatAnnotation) -> TempoStats:
    """Median-IBI tempo and the coefficient of variation of the IBIs."""
    if len(ref.beats) < 3:
        raise InsufficientReference(f"{ref.track_id}: tempo stats need >= 3 beats")
    ibis = np.diff(ref.beats)
    return TempoStats(
        gt_bpm=float(60.0 / np.median(ibis)),
        ibi_cv=float(ibis.std() / ibis.mean()),
    )


# ---------------------------------------------------------------------------
# Tempo-estimate scoring
# ---------------------------------------------------------------------------

BPM_BANDS = ((0.0, 55.0), (55.0, 70.0), (70.0, 90.0), (90.0, 120.0), (120.0, np.inf))

TEMPO_LABELS = ("correct", "double", "half", "other")


def _band_name(bpm: float) -> str:
    for lo, hi in BPM_BANDS:
        if lo <= bpm < hi:
            if np.isinf(hi):
                return f">={lo:g}"
            if lo == 0.0:
                return f"<{hi:g}"
            return f"{lo:g}-{hi:g}"
    return "unknown"


@dataclass(frozen=True)
class TempoAccuracyReport:
    labels: dict           # track_id -> label
    rates: dict            # label -> fraction of scored tracks
    band_rates: dict       # band name -> {label: fraction, "n": count}
    n_scored: int
    skipped: tuple


def score_tempo_estimate(est_bpm: float, gt_bpm: float, tol: float = 0.08) -> str:
    """correct / double / half within relative tolerance, else other."""
    if abs(est_bpm - gt_bpm) / gt_bpm <= tol:
        return "correct"
    if abs(est_bpm - 2.0 * gt_bpm) / (2.0 * gt_bpm) <= tol:
        return "double"
    if abs(est_bpm - 0.5 * gt_bpm) / (0.5 * gt_bpm) <= tol:
        return "half"
    return "other"


def tempo_accuracy(estimates, refs, tol: float = 0.08) -> TempoAccuracyReport:
    """Score tempo estimates against annotations, overall and per BPM band.

    ``estimates`` is an iterable of TempoEstimate; ``refs`` maps track_id to
    BeatAnnotation. Estimates without a matching annotation are skipped with
    a warning and reported.
    """
    labels = {}
    bands = {}
    skipped = []
    for est in estimates:
        ref = refs.get(est.track_id)
        if ref is None or len(ref.beats) < 3:
            log.warning("tempo estimate for unmatched track %s skipped", est.track_id)
            skipped.append(est.track_id)
            continue
        gt = tempo_stats(ref).gt_bpm
        label = score_tempo_estimate(est.bpm, gt, tol)
        labels[est.track_id] = label
        bands.setdefault(_band_name(gt), []).append(label)
    n = len(labels)
    rates = {lab: sum(v == lab for v in labels.values()) / n for lab in TEMPO_LABELS} if n else {}
    band_rates = {}
    for band, labs in sorted(bands.items()):
        band_rates[band] = {lab: labs.count(lab) / len(labs) for lab in TEMPO_LABELS}
        band_rates[band]["n"] = len(labs)
    return TempoAccuracyReport(
        labels=labels, rates=rates, band_rates=band_rates, n_scored=n, skipped=tuple(skipped)
    )
