"""Command-line front end.

Subcommands: decode, eval, diagnose, synth-gt, experiment, report.
Flags mirror config fields in kebab-case; a flat key=value config file can
supply any of them, with explicit flags taking precedence. Exit codes:
0 ok, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from . import dbn, diagnostics, experiments, ingest, metrics, peaks, reports
from .errors import ToolkitError

EXPERIMENTS = (
    "bottleneck",
    "lambda-sweep",
    "threshold-sweep",
    "tempo-curve",
    "peak-vs-dbn",
    "taxonomy",
    "dataset-stats",
    "systems",
    "axis-table",
)


def load_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; keys use snake_case."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ToolkitError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


class Settings:
    """Layered lookup: explicit CLI flag, then config file, then default."""

    def __init__(self, args):
        self.args = vars(args)
        self.file = load_config_file(args.config) if getattr(args, "config", None) else {}
        self.resolved = {}

    def get(self, key, default, cast=float):
        value = self.args.get(key)
        if value is None:
            raw = self.file.get(key)
            if raw is not None:
                value = cast(raw) if cast is not bool else raw.lower() in ("1", "true", "yes")
        if value is None:
            value = default
        self.resolved[key] = value
        return value

    def dbn_config(self, min_bpm_default=55.0) -> dbn.DbnConfig:
        return dbn.DbnConfig(
            min_bpm=self.get("min_bpm", min_bpm_default),
            max_bpm=self.get("max_bpm", 215.0),
            transition_lambda=self.get("transition_lambda", 100.0),
            observation_lambda=self.get("observation_lambda", 16, cast=int),
            correct_beats=not self.get("no_correct", False, cast=bool),
        )

    def peak_config(self) -> peaks.PeakConfig:
        return peaks.PeakConfig(
            threshold=self.get("threshold", 0.5),
            min_separation=self.get("min_separation", 0.1),
        )

    def eval_config(self) -> metrics.EvalConfig:
        return metrics.EvalConfig(trim_seconds=self.get("trim", 0.0))

    def synth_config(self) -> experiments.SynthConfig:
        return experiments.SynthConfig(
            sigma_frames=self.get("sigma_frames", 2.0),
            fps=self.get("fps", 43.07),
        )

    def sweep_spec(self) -> experiments.SweepSpec:
        spec = experiments.SweepSpec()
        lambdas = self.get("lambdas", None, cast=str)
        thresholds = self.get("thresholds", None, cast=str)
        if lambdas:
            spec = dataclasses.replace(spec, lambdas=tuple(float(x) for x in lambdas.split(",")))
        if thresholds:
            spec = dataclasses.replace(spec, thresholds=tuple(float(x) for x in thresholds.split(",")))
        return spec


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--jobs", type=int, default=None, help="track-level parallelism")


def _add_dbn_flags(parser):
    parser.add_argument("--min-bpm", dest="min_bpm", type=float, default=None)
    parser.add_argument("--max-bpm", dest="max_bpm", type=float, default=None)
    parser.add_argument("--lambda", dest="transition_lambda", type=float, default=None)
    parser.add_argument("--observation-lambda", dest="observation_lambda", type=int, default=None)
    parser.add_argument(
        "--no-correct", dest="no_correct", action="store_const", const=True, default=None,
        help="disable beat-position correction to the activation peak",
    )


def _add_peak_flags(parser):
    parser.add_argument("--threshold", type=float, default=None)
    parser.add_argument("--min-separation", dest="min_separation", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beatdiag", description=__doc__)
    parser.add_argument("--version", action="version", version=f"beatdiag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode activation files into .beats files")
    _add_common(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--dbn", action="store_true", help="DBN Viterbi decoding")
    mode.add_argument("--peaks", action="store_true", help="threshold peak picking")
    mode.add_argument("--dbn-constrained", action="store_true", help="DBN with per-track tempo window")
    p.add_argument("inputs", nargs="+", help="activation files or directories")
    p.add_argument("-o", "--output", required=True, help="output directory for .beats files")
    _add_dbn_flags(p)
    _add_peak_flags(p)
    p.add_argument("--tempo-file", help="track_id,bpm,source_label CSV for --dbn-constrained")
    p.add_argument("--tempo-window", dest="tempo_window", type=float, default=None)

    p = sub.add_parser("eval", help="evaluate estimated beats against references")
    _add_common(p)
    p.add_argument("--est", required=True, help="directory of estimated .beats files")
    p.add_argument("--ref", required=True, help="directory of reference .beats files")
    p.add_argument("--trim", type=float, default=None, help="drop beats before this many seconds")
    p.add_argument("-o", "--output", help="write per-track CSV here")

    p = sub.add_parser("diagnose", help="activation diagnostics per track")
    _add_common(p)
    p.add_argument("--activations", required=True, help="directory of activation files")
    p.add_argument("--beats", required=True, help="directory of reference .beats files")
    p.add_argument("-o", "--output", help="write CSV here instead of stdout")

    p = sub.add_parser("synth-gt", help="synthesize GT activations from annotations")
    _add_common(p)
    p.add_argument("--beats", required=True, help="directory of reference .beats files")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--sigma-frames", dest="sigma_frames", type=float, default=None)
    p.add_argument("--binary", action="store_true", help="write binary ACT1 files")

    p = sub.add_parser("experiment", help="run a named experiment and write its report")
    _add_common(p)
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--beats-dir", dest="beats_dir", help="annotation directory")
    p.add_argument("--tags-dir", dest="tags_dir", help="difficulty-tag directory")
    p.add_argument(
        "--activations", action="append", default=[], metavar="LABEL=DIR",
        help="named activation source (repeatable)",
    )
    p.add_argument(
        "--dataset", action="append", default=[], metavar="NAME=ROOT",
        help="dataset root with beats/, tags/, activations/ subdirs (repeatable; bottleneck)",
    )
    p.add_argument("--axis-map", dest="axis_map", help="tag vocabulary / axis file")
    p.add_argument("--source", help="activation source label (default gt-synth)")
    p.add_argument("--intersect-source", dest="intersect_source", help="second system for taxonomy")
    p.add_argument("--decoder", choices=("dbn", "peaks"), default=None, help="taxonomy decoder")
    p.add_argument(
        "--tempo-file", action="append", default=[], metavar="LABEL=CSV",
        help="ordered tempo-estimate sources for tempo-curve (repeatable)",
    )
    p.add_argument("--gt-tempo", action="store_true", help="append the ground-truth tempo source")
    p.add_argument("--tempo-window", dest="tempo_window", type=float, default=None)
    p.add_argument("--trim", type=float, default=None)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--sigma-frames", dest="sigma_frames", type=float, default=None)
    p.add_argument("--lambdas", default=None, help="comma-separated lambda grid")
    p.add_argument("--thresholds", default=None, help="comma-separated threshold grid")
    _add_dbn_flags(p)
    _add_peak_flags(p)
    p.add_argument("-o", "--output", required=True, help="run directory")

    p = sub.add_parser("report", help="re-aggregate a rows.csv and print a table")
    p.add_argument("rows_csv")
    p.add_argument("--group-by", dest="group_by", default="category", choices=reports.GROUPINGS)
    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _activation_paths(inputs) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(
                q for q in p.iterdir() if q.is_file() and q.name != "manifest.txt"
            ))
        elif p.is_file():
            paths.append(p)
        else:
            raise ToolkitError(f"no such file or directory: {p}")
    if not paths:
        raise ToolkitError("no activation files found")
    return paths


def _beats_by_track(directory) -> dict:
    directory = Path(directory)
    if not directory.is_dir():
        raise ToolkitError(f"not a directory: {directory}")
    out = {}
    for path in sorted(directory.iterdir()):
        if path.name == "manifest.txt":
            continue
        if path.suffix in (".beats", ".txt") and path.is_file():
            ann = ingest.load_beats(path)
            out[ann.track_id] = ann
    return out


def _parse_labeled(pairs, what) -> list[tuple[str, str]]:
    out = []
    for pair in pairs:
        if "=" not in pair:
            raise ToolkitError(f"{what} must look like LABEL=PATH, got {pair!r}")
        label, _, path = pair.partition("=")
        out.append((label.strip(), path.strip()))
    return out


def _tempo_map(path) -> dict:
    return {e.track_id: e.bpm for e in ingest.load_tempo_estimates(path)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_decode(args) -> int:
    settings = Settings(args)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    dbn_cfg = settings.dbn_config()
    peak_cfg = settings.peak_config()
    tempo = {}
    window = settings.get("tempo_window", 0.20)
    if args.dbn_constrained:
        if not args.tempo_file:
            raise ToolkitError("--dbn-constrained requires --tempo-file")
        tempo = _tempo_map(args.tempo_file)
    written = 0
    for path in _activation_paths(args.inputs):
        act = ingest.load_activation(path)
        track_id = ingest.track_id_from_path(path)
        if args.peaks:
            beats = peaks.pick_peaks(act, peak_cfg)
        elif args.dbn_constrained:
            bpm = tempo.get(track_id)
            if bpm is None:
                print(f"warning: no tempo estimate for {track_id}, skipped", file=sys.stderr)
                continue
            constraint = dbn.TempoConstraint(center_bpm=bpm, window_fraction=window)
            beats = dbn.decode_constrained(act, dbn_cfg, constraint)
        else:
            beats = dbn.decode(act, dbn_cfg)
        ingest.write_beats(beats, out_dir / f"{track_id}.beats")
        written += 1
    mode = "peaks" if args.peaks else ("dbn-constrained" if args.dbn_constrained else "dbn")
    reports.write_manifest(out_dir / "manifest.txt", {"command": f"decode:{mode}", **settings.resolved})
    print(f"wrote {written} beats file(s) to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    settings = Settings(args)
    eval_cfg = settings.eval_config()
    est = _beats_by_track(args.est)
    ref = _beats_by_track(args.ref)
    missing_ref = sorted(set(est) - set(ref))
    missing_est = sorted(set(ref) - set(est))
    if missing_ref or missing_est:
        for track in missing_ref:
            print(f"no reference for estimate {track}", file=sys.stderr)
        for track in missing_est:
            print(f"no estimate for reference {track}", file=sys.stderr)
        return 1
    header = ("track_id", "f_measure", "cmlc", "cmlt", "amlc", "amlt", "n_ref", "n_est")
    lines = [",".join(header)]
    results = []
    for track_id in sorted(ref):
        r = metrics.evaluate(est[track_id].beats, ref[track_id].beats, eval_cfg)
        results.append(r)
        lines.append(
            f"{track_id},{r.f_measure:.6f},{r.cmlc:.6f},{r.cmlt:.6f},"
            f"{r.amlc:.6f},{r.amlt:.6f},{r.n_ref},{r.n_est}"
        )
    body = "\n".join(lines) + "\n"
    if args.output:
        out = Path(args.output)
        out.write_text(body)
        reports.write_manifest(out.with_suffix(out.suffix + ".manifest.txt"),
                               {"command": "eval", **settings.resolved})
    else:
        print(body, end="")
    if results:
        print(
            f"mean over {len(results)} track(s): "
            f"F={np.mean([r.f_measure for r in results]):.3f} "
            f"CMLt={np.mean([r.cmlt for r in results]):.3f} "
            f"AMLt={np.mean([r.amlt for r in results]):.3f}"
        )
    return 0


def cmd_diagnose(args) -> int:
    refs = _beats_by_track(args.beats)
    header = (
        "track_id,act_at_gt,max_activation,peak_sharpness,"
        "periodicity_strength,entropy,false_positive_activation"
    )
    lines = [header]
    for path in _activation_paths([args.activations]):
        track_id = ingest.track_id_from_path(path)
        ref = refs.get(track_id)
        if ref is None:
            print(f"warning: no reference beats for {track_id}, skipped", file=sys.stderr)
            continue
        act = ingest.load_activation(path)
        d = diagnostics.compute_diagnostics(act, ref)
        lines.append(
            f"{track_id},{d.act_at_gt:.6f},{d.max_activation:.6f},{d.peak_sharpness:.6f},"
            f"{d.periodicity_strength:.6f},{d.entropy:.6f},{d.false_positive_activation:.6f}"
        )
    body = "\n".join(lines) + "\n"
    if args.output:
        out = Path(args.output)
        out.write_text(body)
        reports.write_manifest(out.with_suffix(out.suffix + ".manifest.txt"),
                               {"command": "diagnose"})
    else:
        print(body, end="")
    return 0


def cmd_synth_gt(args) -> int:
    settings = Settings(args)
    synth_cfg = settings.synth_config()
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    refs = _beats_by_track(args.beats)
    for track_id in sorted(refs):
        act = experiments.synthesize_gt_activation(refs[track_id], synth_cfg)
        suffix = ".bin" if args.binary else ".act"
        ingest.write_activation(act, out_dir / f"{track_id}{suffix}", binary=args.binary)
    reports.write_manifest(out_dir / "manifest.txt", {"command": "synth-gt", **settings.resolved})
    print(f"wrote {len(refs)} activation file(s) to {out_dir}")
    return 0


def _dataset_from_args(args, root=None) -> ingest.Dataset:
    axis_map = ingest.load_axis_map(args.axis_map) if args.axis_map else None
    sources = dict(_parse_labeled(args.activations, "--activations"))
    if root is not None:
        layout = ingest.DatasetLayout(
            activation_dirs={p.name: str(p) for p in sorted((Path(root) / "activations").glob("*")) if p.is_dir()},
        )
        return ingest.load_dataset(root, layout, axis_map)
    if not args.beats_dir:
        raise ToolkitError("provide --beats-dir (or --dataset NAME=ROOT)")
    layout = ingest.DatasetLayout(
        beats_dir=args.beats_dir,
        tags_dir=args.tags_dir,
        activation_dirs={label: path for label, path in sources.items()},
    )
    dataset = ingest.load_dataset(Path.cwd(), layout, axis_map)
    if len(dataset) == 0:
        raise ToolkitError(f"no tracks found under beats dir {args.beats_dir!r}")
    return dataset


def cmd_experiment(args) -> int:
    settings = Settings(args)
    jobs = settings.get("jobs", 1, cast=int)
    eval_cfg = settings.eval_config()
    synth_cfg = settings.synth_config()
    sweep = settings.sweep_spec()
    source = args.source or experiments.GT_SOURCE
    out_dir = Path(args.output)

    if args.name == "bottleneck":
        if args.dataset:
            datasets = [
                (name, _dataset_from_args(args, root=root))
                for name, root in _parse_labeled(args.dataset, "--dataset")
            ]
        else:
            datasets = [("dataset", _dataset_from_args(args))]
        report = experiments.run_bottleneck_table(
            datasets,
            source=args.source,
            synth_cfg=synth_cfg,
            dbn_cfg=settings.dbn_config(min_bpm_default=30.0),
            peak_cfg=settings.peak_config(),
            eval_cfg=eval_cfg,
            jobs=jobs,
        )
    else:
        dataset = _dataset_from_args(args)
        if args.name == "dataset-stats":
            report = experiments.dataset_stats(dataset)
        elif args.name == "lambda-sweep":
            report = experiments.run_lambda_sweep(
                dataset, source, sweep, settings.dbn_config(min_bpm_default=30.0),
                eval_cfg, synth_cfg, jobs,
            )
        elif args.name == "threshold-sweep":
            report = experiments.run_threshold_sweep(
                dataset, source, sweep, eval_cfg,
                settings.get("min_separation", 0.1), settings.get("threshold", 0.5), jobs,
            )
        elif args.name == "tempo-curve":
            tempo_sources = [
                (label, _tempo_map(path)) for label, path in _parse_labeled(args.tempo_file, "--tempo-file")
            ]
            if args.gt_tempo or not tempo_sources:
                tempo_sources.append((experiments.GT_TEMPO_SOURCE, {}))
            report = experiments.run_tempo_curve(
                dataset, source, tempo_sources, settings.get("tempo_window", 0.20),
                settings.dbn_config(min_bpm_default=30.0), eval_cfg, synth_cfg, jobs,
            )
        elif args.name == "peak-vs-dbn":
            report = experiments.run_peak_vs_dbn(
                dataset, source, settings.dbn_config(), settings.peak_config(), eval_cfg, jobs,
            )
        elif args.name == "taxonomy":
            report = experiments.run_taxonomy(
                dataset, source,
                decoder=args.decoder or "peaks",
                intersect_source=args.intersect_source,
                dbn_cfg=settings.dbn_config(),
                peak_cfg=settings.peak_config(),
                eval_cfg=eval_cfg,
                synth_cfg=synth_cfg,
                jobs=jobs,
            )
        elif args.name == "systems":
            report = experiments.run_systems_table(
                dataset, source, sweep, settings.dbn_config(min_bpm_default=30.0),
                settings.peak_config(), eval_cfg, synth_cfg,
                settings.get("tempo_window", 0.20), jobs,
            )
        elif args.name == "axis-table":
            report = experiments.run_axis_table(
                dataset, source, settings.dbn_config(), settings.peak_config(),
                eval_cfg, synth_cfg, settings.get("tempo_window", 0.20), jobs,
            )
        else:  # unreachable; argparse enforces choices
            raise ToolkitError(f"unknown experiment {args.name}")

    run_dir = reports.write_run_report(report, out_dir, {"experiment": args.name, **settings.resolved})
    if args.name in ("taxonomy", "dataset-stats", "tempo-curve"):
        curve = report.tables.get("tempo-curve", (None, []))[1]
        bundles = experiments.emit_figure_data(dataset, rows=report.rows, tempo_curve=curve)
        for name, text in bundles.items():
            (run_dir / name).write_text(text)
    print(reports.render_report_text(report))
    print(f"report written to {run_dir}")
    return 0


def cmd_report(args) -> int:
    rows = reports.rows_from_csv(Path(args.rows_csv).read_text())
    if not rows:
        raise ToolkitError(f"{args.rows_csv}: no rows")
    stats = reports.aggregate(rows, args.group_by)
    table = [
        (s.group, s.n) + tuple(f"{s.means[c]:.3f}" if c in s.means else "" for c in reports.METRIC_FIELDS)
        for s in stats
    ]
    print(reports.render_text_table(("group", "n") + reports.METRIC_FIELDS, table, title=args.group_by))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "decode": cmd_decode,
        "eval": cmd_eval,
        "diagnose": cmd_diagnose,
        "synth-gt": cmd_synth_gt,
        "experiment": cmd_experiment,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ToolkitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
