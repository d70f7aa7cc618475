"""Experiment drivers: GT-activation synthesis, sweeps, tempo-constrained
decoding, bottleneck quantification, taxonomy runs, and figure-data export.

Each driver maps a function over the annotated tracks of a dataset (with
optional process-level parallelism), produces a RunReport of per-track rows
plus corpus-level summaries, and leaves all file emission to
:mod:`beatdiag.reports`. Tracks missing a required input are skipped,
counted, and listed in the report notes, never imputed.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dbn, diagnostics, metrics, peaks
from .errors import DegenerateInput
from .ingest import ActivationCurve, BeatAnnotation, Dataset
from .reports import ReportRow, RunReport


@dataclass(frozen=True)
class SynthConfig:
    """Gaussian ground-truth activation synthesis parameters."""

    sigma_frames: float = 2.0
    fps: float = 43.07
    peak_amplitude: float = 1.0
    tail_seconds: float = 1.0

    def __post_init__(self):
        if self.sigma_frames <= 0:
            raise ValueError("sigma_frames must be positive")
        if self.fps <= 0:
            raise ValueError("fps must be positive")


@dataclass(frozen=True)
class SweepSpec:
    lambdas: tuple = (1, 2, 5, 10, 20, 30, 50, 80, 100, 150, 200, 300, 500)
    thresholds: tuple = peaks.DEFAULT_THRESHOLD_GRID

    def __post_init__(self):
        for name, grid in (("lambdas", self.lambdas), ("thresholds", self.thresholds)):
            arr = np.asarray(grid, dtype=float)
            if arr.size == 0 or arr.min() <= 0 or np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} must be non-empty, positive, ascending")


GT_SOURCE = "gt-synth"


def synthesize_gt_activation(ref: BeatAnnotation, cfg: SynthConfig = SynthConfig()) -> ActivationCurve:
    """Gaussian peaks centered on the annotated beats, combined by max.

    The curve runs one tail second past the last beat so trailing beats get
    full support.
    """
    if len(ref.beats) == 0:
        raise ValueError(f"{ref.track_id}: cannot synthesize from an empty annotation")
    n_frames = int(math.ceil((ref.beats[-1] + cfg.tail_seconds) * cfg.fps))
    values = np.zeros(n_frames)
    support = int(math.ceil(6 * cfg.sigma_frames))
    centers = ref.beats * cfg.fps
    for center in centers:
        lo = max(int(math.floor(center)) - support, 0)
        hi = min(int(math.ceil(center)) + support + 1, n_frames)
        frames = np.arange(lo, hi)
        bump = cfg.peak_amplitude * np.exp(-((frames - center) ** 2) / (2 * cfg.sigma_frames**2))
        np.maximum(values[lo:hi], bump, out=values[lo:hi])
    return ActivationCurve(values=values, fps=cfg.fps, source_label=GT_SOURCE)


# ---------------------------------------------------------------------------
# Track mapping
# ---------------------------------------------------------------------------


def _map_tracks(fn, items, jobs: int = 1) -> dict:
    """Apply fn to (track_id, payload) pairs; results keyed and sorted by id."""
    items = sorted(items, key=lambda kv: kv[0])
    if jobs <= 1:
        results = {tid: fn(payload) for tid, payload in items}
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = pool.map(fn, [payload for _, payload in items], chunksize=1)
            results = {tid: out for (tid, _), out in zip(items, outputs)}
    return dict(sorted(results.items()))


def _tracks_with_source(dataset: Dataset, source: str):
    """(record, activation) pairs for annotated tracks carrying ``source``."""
    found, missing = [], []
    for record in dataset.annotated():
        if source == GT_SOURCE:
            found.append((record, None))
        elif source in record.activations:
            found.append((record, record.activations[source]))
        else:
            missing.append(record.track_id)
    return found, missing


def _base_row(record, system: str, config: str) -> ReportRow:
    meta = record.metadata
    tempo = None
    if record.annotation is not None and len(record.annotation.beats) >= 3:
        tempo = diagnostics.tempo_stats(record.annotation)
    return ReportRow(
        track_id=record.track_id,
        system=system,
        config=config,
        tempo=tempo,
        axes=meta.axes,
        confidence=meta.annotator_confidence,
        tag_count=len(meta.canonical_tags) if meta.canonical_tags else 0,
    )


def _resolve_activation(record, act, synth_cfg: SynthConfig):
    if act is not None:
        return act
    return synthesize_gt_activation(record.annotation, synth_cfg)


# ---------------------------------------------------------------------------
# Dataset statistics
# ---------------------------------------------------------------------------


def dataset_stats(dataset: Dataset) -> RunReport:
    """Tempo distribution and IBI-variability statistics from annotations."""
    rows = []
    bpms = []
    cvs = []
    skipped = []
    for record in dataset.annotated():
        if len(record.annotation.beats) < 3:
            skipped.append(record.track_id)
            continue
        row = _base_row(record, system="annotation", config="stats")
        rows.append(row)
        bpms.append(row.tempo.gt_bpm)
        cvs.append(row.tempo.ibi_cv)
    report = RunReport(experiment="dataset-stats", rows=rows)
    if bpms:
        bpms_arr = np.asarray(bpms)
        report.summary = {
            "n_tracks": len(bpms),
            "median_gt_bpm": float(np.median(bpms_arr)),
            "n_below_55_bpm": int((bpms_arr < 55).sum()),
            "n_below_60_bpm": int((bpms_arr < 60).sum()),
            "median_ibi_cv": float(np.median(cvs)),
        }
    if skipped:
        report.notes.append(f"{len(skipped)} track(s) with <3 beats skipped: {sorted(skipped)}")
    if dataset.residue_tags:
        n_residue = sum(len(v) for v in dataset.residue_tags.values())
        report.notes.append(
            f"{n_residue} unrecognized tag(s) on {len(dataset.residue_tags)} track(s): "
            + "; ".join(f"{tid}={tags}" for tid, tags in sorted(dataset.residue_tags.items()))
        )
    return report


# ---------------------------------------------------------------------------
# GT-activation bottleneck
# ---------------------------------------------------------------------------


def _decode_and_score(payload):
    ref_beats, act, cfg, eval_cfg = payload
    est = dbn.decode(act, cfg)
    return metrics.evaluate(est, ref_beats, eval_cfg)


def run_gt_bottleneck(
    dataset: Dataset,
    synth_cfg: SynthConfig = SynthConfig(),
    cfg: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    jobs: int = 1,
) -> RunReport:
    """Decode synthetic GT activations for every annotated track."""
    items = []
    for record in dataset.annotated():
        act = synthesize_gt_activation(record.annotation, synth_cfg)
        items.append((record.track_id, (record.annotation.beats, act, cfg, eval_cfg)))
    results = _map_tracks(_decode_and_score, items, jobs)
    rows = []
    for record in dataset.annotated():
        row = _base_row(record, system=GT_SOURCE, config=_dbn_label(cfg))
        row.eval = results[record.track_id]
        row.category = diagnostics.classify_failure(row.eval)
        rows.append(row)
    fs = [r.eval.f_measure for r in rows]
    report = RunReport(experiment="gt-bottleneck", rows=rows)
    report.summary = {
        "n_tracks": len(rows),
        "mean_f": float(np.mean(fs)) if fs else float("nan"),
        "mean_cmlt": float(np.mean([r.eval.cmlt for r in rows])) if rows else float("nan"),
        "mean_amlt": float(np.mean([r.eval.amlt for r in rows])) if rows else float("nan"),
        "n_below_f_0.5": int(sum(f < 0.5 for f in fs)),
    }
    return report


def _dbn_label(cfg: dbn.DbnConfig) -> str:
    return (
        f"dbn[{cfg.min_bpm:g}-{cfg.max_bpm:g}bpm,lam={cfg.transition_lambda:g},"
        f"obs={cfg.observation_lambda},correct={int(cfg.correct_beats)}]"
    )


def run_bottleneck_table(
    datasets,
    source: str | None = None,
    synth_cfg: SynthConfig = SynthConfig(),
    dbn_cfg: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    peak_cfg: peaks.PeakConfig = peaks.PeakConfig(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    jobs: int = 1,
) -> RunReport:
    """Cross-dataset activation-bottleneck table.

    ``datasets`` is an iterable of (name, Dataset). Real-activation columns
    are filled only where ``source`` activations exist; the GT+DBN column is
    always computed. The gap column is GT+DBN minus Real+DBN.
    """
    header = ("dataset", "n", "median_ibi_cv", "real_peak_f", "real_dbn_f", "gt_dbn_f", "gap")
    table_rows = []
    report = RunReport(experiment="bottleneck")
    if source == GT_SOURCE:
        source = None  # the GT columns are always computed; nothing "real" to add
    for name, dataset in datasets:
        stats = dataset_stats(dataset)
        gt = run_gt_bottleneck(dataset, synth_cfg, dbn_cfg, eval_cfg, jobs)
        report.rows.extend(gt.rows)
        real_peak_f = real_dbn_f = None
        if source is not None:
            found, missing = _tracks_with_source(dataset, source)
            if found:
                peak_fs, dbn_fs = [], []
                items = [
                    (rec.track_id, (rec.annotation.beats, act, dbn_cfg, eval_cfg))
                    for rec, act in found
                ]
                dbn_results = _map_tracks(_decode_and_score, items, jobs)
                for rec, act in found:
                    est = peaks.pick_peaks(act, peak_cfg)
                    peak_fs.append(metrics.f_measure(est, rec.annotation.beats, eval_cfg))
                    dbn_fs.append(dbn_results[rec.track_id].f_measure)
                real_peak_f = float(np.mean(peak_fs))
                real_dbn_f = float(np.mean(dbn_fs))
            if missing:
                report.notes.append(f"{name}: {len(missing)} track(s) missing '{source}'")
        gt_f = gt.summary["mean_f"]
        gap = None if real_dbn_f is None else gt_f - real_dbn_f
        table_rows.append(
            (
                name,
                stats.summary.get("n_tracks", 0),
                _fmt3(stats.summary.get("median_ibi_cv")),
                _fmt3(real_peak_f),
                _fmt3(real_dbn_f),
                _fmt3(gt_f),
                _fmt3(gap),
            )
        )
    report.tables["bottleneck"] = (header, table_rows)
    return report


def _fmt3(value):
    return "" if value is None else f"{value:.3f}"


# ---------------------------------------------------------------------------
# Lambda sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaSweep:
    lambdas: tuple
    results: tuple
    best_lambda: float
    best_result: metrics.EvalResult


def sweep_lambda(
    act: ActivationCurve,
    ref: BeatAnnotation,
    spec: SweepSpec = SweepSpec(),
    base: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
) -> LambdaSweep:
    """Decode at every lambda; the F-optimal one wins, ties to the smaller."""
    results = []
    for lam in spec.lambdas:
        est = dbn.decode(act, dataclasses.replace(base, transition_lambda=float(lam)))
        results.append(metrics.evaluate(est, ref.beats, eval_cfg))
    best_i = 0
    for i, res in enumerate(results):
        if res.f_measure > results[best_i].f_measure:
            best_i = i
    return LambdaSweep(
        lambdas=tuple(float(x) for x in spec.lambdas),
        results=tuple(results),
        best_lambda=float(spec.lambdas[best_i]),
        best_result=results[best_i],
    )


def _sweep_lambda_worker(payload):
    ref, act, spec, base, eval_cfg, synth_cfg = payload
    if act is None:
        act = synthesize_gt_activation(ref, synth_cfg)
    return sweep_lambda(act, ref, spec, base, eval_cfg)


def run_lambda_sweep(
    dataset: Dataset,
    source: str,
    spec: SweepSpec = SweepSpec(),
    base: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    synth_cfg: SynthConfig = SynthConfig(),
    jobs: int = 1,
) -> RunReport:
    """Per-track lambda sweep over a corpus, plus the best fixed lambda."""
    found, missing = _tracks_with_source(dataset, source)
    items = [
        (rec.track_id, (rec.annotation, act, spec, base, eval_cfg, synth_cfg))
        for rec, act in found
    ]
    sweeps = _map_tracks(_sweep_lambda_worker, items, jobs)
    report = RunReport(experiment="lambda-sweep")
    for rec, _ in found:
        sweep = sweeps[rec.track_id]
        row = _base_row(rec, system=source, config="per-track-optimal-lambda")
        row.eval = sweep.best_result
        row.category = diagnostics.classify_failure(sweep.best_result)
        row.best_lambda = sweep.best_lambda
        report.rows.append(row)
    if sweeps:
        per_lambda = []
        for i, lam in enumerate(spec.lambdas):
            mean_f = float(np.mean([s.results[i].f_measure for s in sweeps.values()]))
            mean_cmlt = float(np.mean([s.results[i].cmlt for s in sweeps.values()]))
            per_lambda.append((f"{lam:g}", f"{mean_f:.3f}", f"{mean_cmlt:.3f}"))
        fixed_means = [float(r[1]) for r in per_lambda]
        best_fixed_i = int(np.argmax(fixed_means))
        optimal = [s.best_result for s in sweeps.values()]
        best_lams = [s.best_lambda for s in sweeps.values()]
        report.summary = {
            "n_tracks": len(sweeps),
            "optimal_mean_f": float(np.mean([r.f_measure for r in optimal])),
            "optimal_mean_cmlt": float(np.mean([r.cmlt for r in optimal])),
            "best_fixed_lambda": float(spec.lambdas[best_fixed_i]),
            "best_fixed_mean_f": fixed_means[best_fixed_i],
            "median_optimal_lambda": float(np.median(best_lams)),
            "frac_preferring_min_lambda": float(np.mean([b == spec.lambdas[0] for b in best_lams])),
        }
        report.tables["per-lambda"] = (("lambda", "mean_f", "mean_cmlt"), per_lambda)
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


# ---------------------------------------------------------------------------
# Threshold sweep
# ---------------------------------------------------------------------------


def _sweep_threshold_worker(payload):
    ref, act, grid, eval_cfg, min_separation = payload
    return peaks.sweep_threshold(act, ref, grid, eval_cfg, min_separation)


def run_threshold_sweep(
    dataset: Dataset,
    source: str,
    spec: SweepSpec = SweepSpec(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    min_separation: float = 0.1,
    default_threshold: float = 0.5,
    jobs: int = 1,
) -> RunReport:
    """Per-track peak-picking threshold sweep; the ceiling for any decoder."""
    found, missing = _tracks_with_source(dataset, source)
    found = [(rec, _resolve_activation(rec, act, SynthConfig())) for rec, act in found]
    items = [
        (rec.track_id, (rec.annotation, act, spec.thresholds, eval_cfg, min_separation))
        for rec, act in found
    ]
    sweeps = _map_tracks(_sweep_threshold_worker, items, jobs)
    report = RunReport(experiment="threshold-sweep")
    default_fs = []
    for rec, act in found:
        sweep = sweeps[rec.track_id]
        row = _base_row(rec, system=source, config="per-track-optimal-threshold")
        row.eval = sweep.best_result
        row.category = diagnostics.classify_failure(sweep.best_result)
        row.best_threshold = sweep.best_threshold
        default_est = peaks.pick_peaks(act, peaks.PeakConfig(default_threshold, min_separation))
        row.baseline_f = metrics.f_measure(default_est, rec.annotation.beats, eval_cfg)
        default_fs.append(row.baseline_f)
        report.rows.append(row)
    if report.rows:
        report.summary = {
            "n_tracks": len(report.rows),
            "optimal_mean_f": float(np.mean([r.eval.f_measure for r in report.rows])),
            "default_threshold": default_threshold,
            "default_mean_f": float(np.mean(default_fs)),
        }
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


# ---------------------------------------------------------------------------
# Peak picking vs DBN
# ---------------------------------------------------------------------------


def _peak_vs_dbn_worker(payload):
    ref, act, dbn_cfg, peak_cfg, eval_cfg = payload
    dbn_result = metrics.evaluate(dbn.decode(act, dbn_cfg), ref.beats, eval_cfg)
    peak_result = metrics.evaluate(peaks.pick_peaks(act, peak_cfg), ref.beats, eval_cfg)
    return dbn_result, peak_result


HURT_MARGIN = 0.01  # |delta F| below this counts as unchanged


def run_peak_vs_dbn(
    dataset: Dataset,
    source: str,
    dbn_cfg: dbn.DbnConfig = dbn.DbnConfig(),
    peak_cfg: peaks.PeakConfig = peaks.PeakConfig(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    jobs: int = 1,
) -> RunReport:
    """Effect of routing activations through the DBN instead of peak picking."""
    found, missing = _tracks_with_source(dataset, source)
    found = [(rec, _resolve_activation(rec, act, SynthConfig())) for rec, act in found]
    items = [
        (rec.track_id, (rec.annotation, act, dbn_cfg, peak_cfg, eval_cfg)) for rec, act in found
    ]
    results = _map_tracks(_peak_vs_dbn_worker, items, jobs)
    report = RunReport(experiment="peak-vs-dbn")
    for rec, _ in found:
        dbn_result, peak_result = results[rec.track_id]
        row = _base_row(rec, system=source, config=_dbn_label(dbn_cfg))
        row.eval = dbn_result
        row.category = diagnostics.classify_failure(dbn_result)
        row.baseline_f = peak_result.f_measure
        row.delta_f = dbn_result.f_measure - peak_result.f_measure
        report.rows.append(row)
    if report.rows:
        deltas = np.asarray([r.delta_f for r in report.rows])
        report.summary = {
            "n_tracks": len(report.rows),
            "peak_mean_f": float(np.mean([r.baseline_f for r in report.rows])),
            "dbn_mean_f": float(np.mean([r.eval.f_measure for r in report.rows])),
            "mean_delta_f": float(deltas.mean()),
            "n_worsened": int((deltas < -HURT_MARGIN).sum()),
            "n_improved": int((deltas > HURT_MARGIN).sum()),
            "n_unchanged": int((np.abs(deltas) <= HURT_MARGIN).sum()),
        }
        report.tables["per-axis"] = _axis_delta_table(report.rows)
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


def _axis_delta_table(rows):
    from .ingest import AXES

    header = ("axis", "n_on", "delta_f_on", "pct_hurt_on", "n_off", "delta_f_off", "pct_hurt_off")
    out = []
    for axis in AXES:
        on = [r for r in rows if axis in r.axes]
        off = [r for r in rows if axis not in r.axes]

        def cells(group):
            if not group:
                return "0", "", ""
            deltas = np.asarray([r.delta_f for r in group])
            hurt = float((deltas < -HURT_MARGIN).mean())
            return str(len(group)), f"{deltas.mean():+.3f}", f"{100 * hurt:.0f}%"

        out.append((axis,) + cells(on) + cells(off))
    return header, out


# ---------------------------------------------------------------------------
# Tempo-constrained decoding
# ---------------------------------------------------------------------------


def _constrained_worker(payload):
    ref_beats, act, bpm, window, cfg, eval_cfg = payload
    constraint = dbn.TempoConstraint(center_bpm=bpm, window_fraction=window)
    est = dbn.decode_constrained(act, cfg, constraint)
    return metrics.evaluate(est, ref_beats, eval_cfg)


GT_TEMPO_SOURCE = "gt-tempo"


def run_tempo_curve(
    dataset: Dataset,
    source: str,
    tempo_sources,
    window: float = 0.20,
    cfg: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    synth_cfg: SynthConfig = SynthConfig(),
    jobs: int = 1,
) -> RunReport:
    """Constrained decoding for tempo sources of increasing accuracy.

    ``tempo_sources`` is an ordered list of (label, {track_id: bpm}); the
    special label ``gt-tempo`` derives per-track BPM from the annotation.
    The unconstrained decode is always included as the baseline series.
    """
    found, missing = _tracks_with_source(dataset, source)
    report = RunReport(experiment="tempo-curve")
    header = ("tempo_source", "n", "mean_f", "mean_cmlt", "mean_amlt", "n_skipped")
    series = []

    baseline_items = []
    for rec, act in found:
        act = _resolve_activation(rec, act, synth_cfg)
        baseline_items.append((rec.track_id, (rec.annotation.beats, act, cfg, eval_cfg)))
    baseline = _map_tracks(_decode_and_score, baseline_items, jobs)
    if baseline:
        series.append(
            (
                "unconstrained",
                len(baseline),
                f"{np.mean([r.f_measure for r in baseline.values()]):.3f}",
                f"{np.mean([r.cmlt for r in baseline.values()]):.3f}",
                f"{np.mean([r.amlt for r in baseline.values()]):.3f}",
                0,
            )
        )
    for rec, _ in found:
        row = _base_row(rec, system=source, config="unconstrained")
        row.eval = baseline[rec.track_id]
        row.category = diagnostics.classify_failure(row.eval)
        report.rows.append(row)

    for label, bpm_by_track in tempo_sources:
        items = []
        skipped = 0
        used = []
        for rec, act in found:
            if label == GT_TEMPO_SOURCE:
                bpm = diagnostics.tempo_stats(rec.annotation).gt_bpm
            else:
                bpm = bpm_by_track.get(rec.track_id)
            if bpm is None:
                skipped += 1
                continue
            act = _resolve_activation(rec, act, synth_cfg)
            items.append((rec.track_id, (rec.annotation.beats, act, bpm, window, cfg, eval_cfg)))
            used.append(rec)
        results = _map_tracks(_constrained_worker, items, jobs)
        for rec in used:
            row = _base_row(rec, system=source, config=f"constrained[{label}]")
            row.eval = results[rec.track_id]
            row.category = diagnostics.classify_failure(row.eval)
            report.rows.append(row)
        if results:
            series.append(
                (
                    label,
                    len(results),
                    f"{np.mean([r.f_measure for r in results.values()]):.3f}",
                    f"{np.mean([r.cmlt for r in results.values()]):.3f}",
                    f"{np.mean([r.amlt for r in results.values()]):.3f}",
                    skipped,
                )
            )
        if skipped:
            report.notes.append(f"tempo source '{label}': {skipped} track(s) without estimate")
    report.tables["tempo-curve"] = (header, series)
    if baseline:
        report.summary = {
            "n_tracks": len(baseline),
            "unconstrained_mean_f": float(np.mean([r.f_measure for r in baseline.values()])),
            "unconstrained_mean_cmlt": float(np.mean([r.cmlt for r in baseline.values()])),
        }
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


# ---------------------------------------------------------------------------
# Systems table (decoder configurations side by side)
# ---------------------------------------------------------------------------


def _constrained_sweep_worker(payload):
    ref, act, spec, base, window, eval_cfg = payload
    bpm = diagnostics.tempo_stats(ref).gt_bpm
    best = None
    best_lam = None
    for lam in spec.lambdas:
        cfg = dataclasses.replace(base, transition_lambda=float(lam))
        constraint = dbn.TempoConstraint(center_bpm=bpm, window_fraction=window)
        est = dbn.decode_constrained(act, cfg, constraint)
        result = metrics.evaluate(est, ref.beats, eval_cfg)
        if best is None or result.f_measure > best.f_measure:
            best = result
            best_lam = float(lam)
    return best, best_lam


def run_systems_table(
    dataset: Dataset,
    source: str,
    spec: SweepSpec = SweepSpec(),
    base: dbn.DbnConfig = dbn.DbnConfig(min_bpm=30.0),
    peak_cfg: peaks.PeakConfig = peaks.PeakConfig(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    synth_cfg: SynthConfig = SynthConfig(),
    window: float = 0.20,
    jobs: int = 1,
) -> RunReport:
    """Corpus means for the standard decoder configurations, one table row
    each: raw peak picking, the fixed-lambda DBN, the per-track optimal
    lambda, GT-tempo constraint combined with the optimal lambda, and the
    GT-activation upper bound.
    """
    found, missing = _tracks_with_source(dataset, source)
    found = [(rec, _resolve_activation(rec, act, synth_cfg)) for rec, act in found]
    report = RunReport(experiment="systems")

    def add_rows(config_label, results, extra=None):
        for rec, _ in found:
            row = _base_row(rec, system=source, config=config_label)
            row.eval = results[rec.track_id]
            row.category = diagnostics.classify_failure(row.eval)
            if extra is not None:
                row.best_lambda = extra.get(rec.track_id)
            report.rows.append(row)
        fs = [r.f_measure for r in results.values()]
        cmlts = [r.cmlt for r in results.values()]
        amlts = [r.amlt for r in results.values()]
        return (config_label, f"{np.mean(fs):.3f}", f"{np.mean(cmlts):.3f}", f"{np.mean(amlts):.3f}")

    table = []

    peak_results = {
        rec.track_id: metrics.evaluate(peaks.pick_peaks(act, peak_cfg), rec.annotation.beats, eval_cfg)
        for rec, act in found
    }
    table.append(add_rows("peak-picking", peak_results))

    items = [(rec.track_id, (rec.annotation.beats, act, base, eval_cfg)) for rec, act in found]
    table.append(add_rows(f"dbn-lambda={base.transition_lambda:g}",
                          _map_tracks(_decode_and_score, items, jobs)))

    items = [(rec.track_id, (rec.annotation, act, spec, base, eval_cfg, synth_cfg))
             for rec, act in found]
    sweeps = _map_tracks(_sweep_lambda_worker, items, jobs)
    table.append(add_rows(
        "dbn-optimal-lambda",
        {tid: s.best_result for tid, s in sweeps.items()},
        extra={tid: s.best_lambda for tid, s in sweeps.items()},
    ))

    items = [(rec.track_id, (rec.annotation, act, spec, base, window, eval_cfg))
             for rec, act in found]
    constrained = _map_tracks(_constrained_sweep_worker, items, jobs)
    table.append(add_rows(
        "gt-tempo+optimal-lambda",
        {tid: r for tid, (r, _) in constrained.items()},
        extra={tid: lam for tid, (_, lam) in constrained.items()},
    ))

    gt_items = [
        (rec.track_id,
         (rec.annotation.beats, synthesize_gt_activation(rec.annotation, synth_cfg), base, eval_cfg))
        for rec, _ in found
    ]
    table.append(add_rows("gt-activations+dbn", _map_tracks(_decode_and_score, gt_items, jobs)))

    report.tables["systems"] = (("configuration", "mean_f", "mean_cmlt", "mean_amlt"), table)
    report.summary = {"n_tracks": len(found)}
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


# ---------------------------------------------------------------------------
# Axis table (difficulty axes side by side)
# ---------------------------------------------------------------------------


def _axis_table_worker(payload):
    ref, act, dbn_cfg, peak_cfg, window, eval_cfg = payload
    peak_result = metrics.evaluate(peaks.pick_peaks(act, peak_cfg), ref.beats, eval_cfg)
    dbn_result = metrics.evaluate(dbn.decode(act, dbn_cfg), ref.beats, eval_cfg)
    bpm = diagnostics.tempo_stats(ref).gt_bpm
    constraint = dbn.TempoConstraint(center_bpm=bpm, window_fraction=window)
    constrained = metrics.evaluate(
        dbn.decode_constrained(act, dbn_cfg, constraint), ref.beats, eval_cfg
    )
    return peak_result, dbn_result, constrained, diagnostics.act_at_gt(act, ref)


def run_axis_table(
    dataset: Dataset,
    source: str,
    dbn_cfg: dbn.DbnConfig = dbn.DbnConfig(),
    peak_cfg: peaks.PeakConfig = peaks.PeakConfig(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    synth_cfg: SynthConfig = SynthConfig(),
    window: float = 0.20,
    jobs: int = 1,
) -> RunReport:
    """Per-difficulty-axis comparison table.

    For each axis, on-axis vs off-axis tracks: mean activation at annotated
    beats, its rank correlation with the system's (peak-picked) F-measure,
    the F change from routing through the DBN with the fraction of tracks
    hurt, and the CMLt gain from constraining to the ground-truth tempo.
    """
    from .ingest import AXES

    found, missing = _tracks_with_source(dataset, source)
    found = [(rec, _resolve_activation(rec, act, synth_cfg)) for rec, act in found]
    items = [
        (rec.track_id, (rec.annotation, act, dbn_cfg, peak_cfg, window, eval_cfg))
        for rec, act in found
    ]
    results = _map_tracks(_axis_table_worker, items, jobs)
    report = RunReport(experiment="axis-table")
    for rec, _ in found:
        peak_result, dbn_result, constrained, at_gt = results[rec.track_id]
        row = _base_row(rec, system=source, config="peak-picking")
        row.eval = peak_result
        row.category = diagnostics.classify_failure(peak_result)
        row.delta_f = dbn_result.f_measure - peak_result.f_measure
        report.rows.append(row)

    header = ("axis", "side", "n", "act_at_gt", "rho_act_f", "delta_f_dbn", "pct_hurt", "delta_cmlt_gt_tempo")
    table = []
    for axis in AXES:
        for side in ("on", "off"):
            members = [
                (rec, results[rec.track_id]) for rec, _ in found
                if (axis in rec.metadata.axes) == (side == "on")
            ]
            if not members:
                table.append((axis, side, 0, "", "", "", "", ""))
                continue
            at_gts = [m[1][3] for m in members]
            peak_fs = [m[1][0].f_measure for m in members]
            deltas = [m[1][1].f_measure - m[1][0].f_measure for m in members]
            cmlt_gains = [m[1][2].cmlt - m[1][1].cmlt for m in members]
            try:
                rho, _ = diagnostics.spearman(at_gts, peak_fs)
                rho_text = f"{rho:+.3f}"
            except DegenerateInput:
                rho_text = ""
            table.append((
                axis, side, len(members),
                f"{np.mean(at_gts):.3f}", rho_text,
                f"{np.mean(deltas):+.3f}",
                f"{100 * np.mean([d < -HURT_MARGIN for d in deltas]):.0f}%",
                f"{np.mean(cmlt_gains):+.3f}",
            ))
    report.tables["axis-table"] = (header, table)
    report.summary = {"n_tracks": len(found)}
    if missing:
        report.notes.append(f"{len(missing)} track(s) missing '{source}' skipped")
    return report


# ---------------------------------------------------------------------------
# Taxonomy
# ---------------------------------------------------------------------------


def _taxonomy_worker(payload):
    ref, act, decoder, dbn_cfg, peak_cfg, eval_cfg = payload
    if decoder == "peaks":
        est = peaks.pick_peaks(act, peak_cfg)
    else:
        est = dbn.decode(act, dbn_cfg)
    return metrics.evaluate(est, ref.beats, eval_cfg)


def run_taxonomy(
    dataset: Dataset,
    source: str,
    decoder: str = "peaks",
    intersect_source: str | None = None,
    dbn_cfg: dbn.DbnConfig = dbn.DbnConfig(),
    peak_cfg: peaks.PeakConfig = peaks.PeakConfig(),
    eval_cfg: metrics.EvalConfig = metrics.DEFAULT_EVAL,
    taxonomy_cfg: diagnostics.TaxonomyConfig = diagnostics.TaxonomyConfig(),
    synth_cfg: SynthConfig = SynthConfig(),
    jobs: int = 1,
) -> RunReport:
    """Failure taxonomy over a corpus, with activation diagnostics per track.

    With ``intersect_source`` the category reflects both systems: a track
    keeps its category only when both systems agree (the intersection view);
    disagreements are counted as ``mixed`` and left uncategorized.
    """

    def score_source(src):
        found, missing = _tracks_with_source(dataset, src)
        items = []
        for rec, act in found:
            act = _resolve_activation(rec, act, synth_cfg)
            items.append((rec.track_id, (rec.annotation, act, decoder, dbn_cfg, peak_cfg, eval_cfg)))
        if missing:
            report.notes.append(f"{len(missing)} track(s) missing '{src}' skipped")
        return _map_tracks(_taxonomy_worker, items, jobs)

    report = RunReport(experiment="taxonomy")
    primary_results = score_source(source)
    other_results = score_source(intersect_source) if intersect_source else None
    counts: dict[str, int] = {}
    for rec in dataset.annotated():
        result = primary_results.get(rec.track_id)
        if result is None:
            continue
        row = _base_row(rec, system=source, config=decoder)
        row.eval = result
        category = diagnostics.classify_failure(result, taxonomy_cfg)
        if other_results is not None:
            other = other_results.get(rec.track_id)
            if other is None:
                continue
            row.config = f"{decoder}+intersect[{intersect_source}]"
            if diagnostics.classify_failure(other, taxonomy_cfg) != category:
                report.rows.append(row)
                counts["mixed"] = counts.get("mixed", 0) + 1
                continue
        row.category = category
        act_curve = _resolve_activation(rec, rec.activations.get(source), synth_cfg)
        row.diagnostics = diagnostics.compute_diagnostics(act_curve, rec.annotation)
        report.rows.append(row)
        counts[str(category)] = counts.get(str(category), 0) + 1
    report.summary = {"n_tracks": len(report.rows)}
    for cat in sorted(counts):
        report.summary[f"n_{cat}"] = counts[cat]
    return report


# ---------------------------------------------------------------------------
# Figure data
# ---------------------------------------------------------------------------


def emit_figure_data(dataset: Dataset, rows=None, tempo_curve=None, bin_width: float = 5.0):
    """CSV bundles for the three figure kinds; returns {filename: csv text}.

    (a) GT tempo histogram with a marker at the 55 BPM default minimum;
    (b) activation-vs-F scatter rows; (c) tempo-curve series.
    """
    bundles = {}

    bpms = []
    for record in dataset.annotated():
        if len(record.annotation.beats) >= 3:
            bpms.append(diagnostics.tempo_stats(record.annotation).gt_bpm)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("bin_lo", "bin_hi", "count", "below_default_min_bpm"))
    if bpms:
        lo = math.floor(min(bpms) / bin_width) * bin_width
        hi = math.ceil(max(bpms) / bin_width) * bin_width
        edges = np.arange(lo, hi + bin_width, bin_width)
        counts, _ = np.histogram(bpms, bins=edges)
        for b_lo, b_hi, count in zip(edges[:-1], edges[1:], counts):
            writer.writerow((f"{b_lo:g}", f"{b_hi:g}", int(count), int(b_hi <= 55.0)))
    bundles["fig_tempo_histogram.csv"] = buf.getvalue()

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("track_id", "act_at_gt", "f_measure", "category"))
    for row in sorted(rows or [], key=lambda r: r.track_id):
        if row.diagnostics is None or row.eval is None:
            continue
        writer.writerow(
            (
                row.track_id,
                f"{row.diagnostics.act_at_gt:.6f}",
                f"{row.eval.f_measure:.6f}",
                str(row.category) if row.category else "",
            )
        )
    bundles["fig_act_scatter.csv"] = buf.getvalue()

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("tempo_source", "n", "mean_f", "mean_cmlt", "mean_amlt", "n_skipped"))
    for series_row in tempo_curve or []:
        writer.writerow(series_row)
    bundles["fig_tempo_curve.csv"] = buf.getvalue()
    return bundles
