"""Threshold-based peak picking over activation curves.

This is the raw, DBN-free beat extraction path: local maxima above a
threshold, with close peaks suppressed in favor of the higher one.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .ingest import ActivationCurve, BeatAnnotation
from . import metrics


@dataclass(frozen=True)
class PeakConfig:
    threshold: float = 0.5
    min_separation: float = 0.1  # seconds

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")
        if self.min_separation < 0:
            raise ValueError("min_separation must be >= 0")


# Sweep endpoints 0.05 and 0.98 with uniform 0.05 spacing in between.
DEFAULT_THRESHOLD_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20)) + (0.98,)


def _candidate_peaks(values: np.ndarray) -> list[int]:
    """Frames of local maxima; a plateau yields its first frame.

    A run of equal values is a peak when no neighboring run is higher and at
    least one existing neighboring run is strictly lower.
    """
    n = len(values)
    peaks = []
    start = 0
    while start < n:
        end = start
        while end + 1 < n and values[end + 1] == values[start]:
            end += 1
        left = values[start - 1] if start > 0 else None
        right = values[end + 1] if end + 1 < n else None
        not_below = (left is None or left < values[start]) and (right is None or right < values[start])
        strictly_above_one = (left is not None and left < values[start]) or (
            right is not None and right < values[start]
        )
        if not_below and strictly_above_one:
            peaks.append(start)
        start = end + 1
    return peaks


def pick_peaks(act: ActivationCurve, cfg: PeakConfig = PeakConfig()) -> np.ndarray:
    """Beat times (seconds) from thresholded local maxima.

    Among peaks closer than ``min_separation`` the higher one wins; equal
    heights keep the earlier frame.
    """
    values = act.values
    candidates = [f for f in _candidate_peaks(values) if values[f] >= cfg.threshold]
    min_gap = cfg.min_separation * act.fps
    if min_gap > 0 and len(candidates) > 1:
        kept: list[int] = []
        for frame in sorted(candidates, key=lambda f: (-values[f], f)):
            pos = bisect.bisect_left(kept, frame)
            before = kept[pos - 1] if pos > 0 else None
            after = kept[pos] if pos < len(kept) else None
            if before is not None and frame - before < min_gap:
                continue
            if after is not None and after - frame < min_gap:
                continue
            kept.insert(pos, frame)
        candidates = kept
    return np.sort(np.asarray(candidates, dtype=float)) / act.fps


@dataclass(frozen=True)
class ThresholdSweep:
    """Per-threshold results plus the F-optimal threshold (ties go lower)."""

    thresholds: tuple
    results: tuple
    best_threshold: float
    best_result: metrics.EvalResult


def sweep_threshold(
    act: ActivationCurve,
    ref: BeatAnnotation,
    thresholds=DEFAULT_THRESHOLD_GRID,
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    min_separation: float = 0.1,
) -> ThresholdSweep:
    """Evaluate pick_peaks against ``ref`` at every threshold in the grid."""
    if not len(thresholds):
        raise ValueError("thresholds must be non-empty")
    results = []
    for thr in thresholds:
        est = pick_peaks(act, PeakConfig(threshold=thr, min_separation=min_separation))
        results.append(metrics.evaluate(est, ref.beats, eval_cfg))
    best_i = 0
    for i, res in enumerate(results):
        if res.f_measure > results[best_i].f_measure:
            best_i = i
    return ThresholdSweep(
        thresholds=tuple(thresholds),
        results=tuple(results),
        best_threshold=float(thresholds[best_i]),
        best_result=results[best_i],
    )
