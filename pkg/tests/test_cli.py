import numpy as np
import pytest

from beatdiag import cli, ingest
from beatdiag.experiments import SynthConfig, synthesize_gt_activation
from beatdiag.ingest import write_activation, write_beats
from conftest import PSEUDO_DIR, make_grid_annotation


def run(argv):
    return cli.main(argv)


def _write_mini_inputs(tmp_path, bpms=(72, 96)):
    beats_dir = tmp_path / "beats"
    acts_dir = tmp_path / "acts"
    beats_dir.mkdir()
    acts_dir.mkdir()
    for i, bpm in enumerate(bpms):
        ref = make_grid_annotation(bpm=bpm, start=0.5, duration=20.0, track_id=f"trk{i}")
        write_beats(ref.beats, beats_dir / f"trk{i}.beats")
        act = synthesize_gt_activation(ref, SynthConfig(fps=50.0))
        write_activation(act, acts_dir / f"trk{i}.act")
    return beats_dir, acts_dir


def test_decode_dbn_round_trip(tmp_path, capsys):
    beats_dir, acts_dir = _write_mini_inputs(tmp_path)
    out = tmp_path / "out"
    code = run(["decode", "--dbn", "--min-bpm", "30", str(acts_dir), "-o", str(out)])
    assert code == 0
    written = sorted(out.glob("*.beats"))
    assert len(written) == 2
    ann = ingest.load_beats(written[0])  # round-trips through the parser
    assert len(ann.beats) > 10
    assert (out / "manifest.txt").exists()
    assert "min_bpm=30" in (out / "manifest.txt").read_text()


def test_decode_peaks(tmp_path):
    beats_dir, acts_dir = _write_mini_inputs(tmp_path)
    out = tmp_path / "out"
    assert run(["decode", "--peaks", "--threshold", "0.5", str(acts_dir), "-o", str(out)]) == 0
    assert len(list(out.glob("*.beats"))) == 2


def test_decode_constrained_requires_tempo_file(tmp_path):
    _, acts_dir = _write_mini_inputs(tmp_path)
    out = tmp_path / "out"
    assert run(["decode", "--dbn-constrained", str(acts_dir), "-o", str(out)]) == 1


def test_decode_constrained_with_tempo_file(tmp_path):
    beats_dir, acts_dir = _write_mini_inputs(tmp_path)
    tempo = tmp_path / "tempo.csv"
    tempo.write_text("track_id,bpm,source_label\ntrk0,72,gt\ntrk1,96,gt\n")
    out = tmp_path / "out"
    assert run([
        "decode", "--dbn-constrained", str(acts_dir), "-o", str(out), "--tempo-file", str(tempo),
    ]) == 0
    assert len(list(out.glob("*.beats"))) == 2


def test_decode_missing_fps_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.act"
    bad.write_text("0.5\n0.6\n")
    out = tmp_path / "out"
    assert run(["decode", "--dbn", str(bad), "-o", str(out)]) == 1
    assert "bad.act" in capsys.readouterr().err


def test_eval_perfect_copy(tmp_path, capsys):
    beats_dir, _ = _write_mini_inputs(tmp_path)
    assert run(["eval", "--est", str(beats_dir), "--ref", str(beats_dir)]) == 0
    out = capsys.readouterr().out
    assert "F=1.000" in out
    assert "CMLt=1.000" in out


def test_eval_trim_flag(tmp_path, capsys):
    beats_dir = tmp_path / "ref"
    est_dir = tmp_path / "est"
    beats_dir.mkdir()
    est_dir.mkdir()
    ref = make_grid_annotation(bpm=60, start=1.0, duration=20.0, track_id="a")
    write_beats(ref.beats, beats_dir / "a.beats")
    write_beats(np.concatenate([[0.2], ref.beats[ref.beats >= 5.0]]), est_dir / "a.beats")
    assert run(["eval", "--est", str(est_dir), "--ref", str(beats_dir), "--trim", "5"]) == 0
    assert "F=1.000" in capsys.readouterr().out


def test_eval_mismatched_ids_exit_one(tmp_path, capsys):
    beats_dir, _ = _write_mini_inputs(tmp_path)
    other = tmp_path / "other"
    other.mkdir()
    write_beats([1.0, 2.0], other / "zz.beats")
    assert run(["eval", "--est", str(other), "--ref", str(beats_dir)]) == 1
    err = capsys.readouterr().err
    assert "zz" in err and "trk0" in err


def test_diagnose_csv(tmp_path, capsys):
    beats_dir, acts_dir = _write_mini_inputs(tmp_path)
    assert run(["diagnose", "--activations", str(acts_dir), "--beats", str(beats_dir)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("track_id,act_at_gt,")
    assert len(out.strip().splitlines()) == 3


def test_synth_gt_then_decode_round_trip(tmp_path):
    beats_dir, _ = _write_mini_inputs(tmp_path)
    synth_dir = tmp_path / "synth"
    assert run([
        "synth-gt", "--beats", str(beats_dir), "-o", str(synth_dir), "--fps", "50",
    ]) == 0
    act = ingest.load_activation(sorted(synth_dir.glob("*.act"))[0])
    assert act.fps == 50.0


def test_experiment_dataset_stats_prints_median(tmp_path, capsys):
    out = tmp_path / "run"
    assert run([
        "experiment", "dataset-stats",
        "--beats-dir", str(PSEUDO_DIR / "beats"),
        "--tags-dir", str(PSEUDO_DIR / "tags"),
        "-o", str(out),
    ]) == 0
    stdout = capsys.readouterr().out
    assert "median_gt_bpm" in stdout
    assert (out / "dataset-stats" / "rows.csv").exists()
    assert (out / "dataset-stats" / "fig_tempo_histogram.csv").exists()


def test_experiment_unknown_name_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["experiment", "frobnicate", "-o", str(tmp_path)])
    assert exc.value.code == 2


def test_report_subcommand(tmp_path, capsys):
    out = tmp_path / "run"
    run([
        "experiment", "taxonomy",
        "--beats-dir", str(PSEUDO_DIR / "beats"),
        "--tags-dir", str(PSEUDO_DIR / "tags"),
        "--activations", f"pseudo={PSEUDO_DIR / 'activations' / 'pseudo'}",
        "--source", "pseudo",
        "-o", str(out),
    ])
    capsys.readouterr()
    rows_csv = out / "taxonomy" / "rows.csv"
    assert run(["report", str(rows_csv), "--group-by", "category"]) == 0
    stdout = capsys.readouterr().out
    assert "group" in stdout
    assert "good" in stdout


def test_experiment_bottleneck_with_dataset_roots(tmp_path, capsys):
    out = tmp_path / "run"
    assert run([
        "experiment", "bottleneck",
        "--dataset", f"mini={PSEUDO_DIR}",
        "--source", "pseudo",
        "-o", str(out),
    ]) == 0
    stdout = capsys.readouterr().out
    assert "bottleneck" in stdout
    report_txt = (out / "bottleneck" / "report.txt").read_text()
    assert "mini" in report_txt
    assert "gt_dbn_f" in report_txt


def test_experiment_lambda_sweep_cli(tmp_path, capsys):
    out = tmp_path / "run"
    assert run([
        "experiment", "lambda-sweep",
        "--beats-dir", str(PSEUDO_DIR / "beats"),
        "--activations", f"pseudo={PSEUDO_DIR / 'activations' / 'pseudo'}",
        "--source", "pseudo",
        "--lambdas", "1,100",
        "-o", str(out),
    ]) == 0
    stdout = capsys.readouterr().out
    assert "optimal_mean_f" in stdout
    rows = (out / "lambda-sweep" / "rows.csv").read_text().splitlines()
    assert len(rows) == 4  # header + 3 tracks


def test_experiment_tempo_curve_cli_with_tempo_file(tmp_path, capsys):
    tempo = tmp_path / "tempo.csv"
    tempo.write_text(
        "track_id,bpm,source_label\npseudo01,96,est\npseudo02,90,est\npseudo03,72,est\n"
    )
    out = tmp_path / "run"
    assert run([
        "experiment", "tempo-curve",
        "--beats-dir", str(PSEUDO_DIR / "beats"),
        "--activations", f"pseudo={PSEUDO_DIR / 'activations' / 'pseudo'}",
        "--source", "pseudo",
        "--tempo-file", f"est={tempo}",
        "--gt-tempo",
        "-o", str(out),
    ]) == 0
    curve = (out / "tempo-curve" / "fig_tempo_curve.csv").read_text().splitlines()
    assert curve[0].startswith("tempo_source,")
    labels = [line.split(",")[0] for line in curve[1:]]
    assert labels == ["unconstrained", "est", "gt-tempo"]


def test_run_suite_script_on_pseudo_corpus(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "scripts/run_smc_suite.py", str(PSEUDO_DIR), "-o", str(tmp_path / "suite")],
        capture_output=True, text=True, cwd=str(PSEUDO_DIR.parent.parent.parent),
    )
    assert proc.returncode == 0, proc.stderr
    for name in ("dataset-stats", "gt-bottleneck", "bottleneck", "lambda-sweep",
                 "tempo-curve", "threshold-sweep", "peak-vs-dbn", "taxonomy"):
        assert (tmp_path / "suite" / name / "rows.csv").exists(), name
    assert (tmp_path / "suite" / "figures" / "fig_act_scatter.csv").exists()


def test_experiment_empty_dataset_exits_one(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert run([
        "experiment", "dataset-stats", "--beats-dir", str(empty), "-o", str(tmp_path / "o"),
    ]) == 1
    assert "no tracks" in capsys.readouterr().err


def test_bad_config_value_exits_one(tmp_path, capsys):
    _, acts_dir = _write_mini_inputs(tmp_path, bpms=(72,))
    assert run([
        "decode", "--peaks", "--threshold", "1.5", str(acts_dir), "-o", str(tmp_path / "o"),
    ]) == 1
    assert "threshold" in capsys.readouterr().err


def test_public_import_surface():
    import beatdiag

    for name in beatdiag.__all__:
        assert getattr(beatdiag, name) is not None


def test_decode_binary_activations(tmp_path):
    ref = make_grid_annotation(bpm=75, start=0.5, duration=15.0, track_id="bin0")
    act = synthesize_gt_activation(ref, SynthConfig(fps=50.0))
    acts_dir = tmp_path / "acts"
    acts_dir.mkdir()
    write_activation(act, acts_dir / "bin0.bin", binary=True)
    out = tmp_path / "out"
    assert run(["decode", "--dbn", "--min-bpm", "30", str(acts_dir), "-o", str(out)]) == 0
    decoded = ingest.load_beats(out / "bin0.beats")
    assert len(decoded.beats) >= len(ref.beats) - 1


def test_experiment_with_jobs_two(tmp_path):
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    common = [
        "experiment", "peak-vs-dbn",
        "--beats-dir", str(PSEUDO_DIR / "beats"),
        "--activations", f"pseudo={PSEUDO_DIR / 'activations' / 'pseudo'}",
        "--source", "pseudo",
    ]
    assert run(common + ["-o", str(out1), "--jobs", "1"]) == 0
    assert run(common + ["-o", str(out2), "--jobs", "2"]) == 0
    rows1 = (out1 / "peak-vs-dbn" / "rows.csv").read_text()
    rows2 = (out2 / "peak-vs-dbn" / "rows.csv").read_text()
    assert rows1 == rows2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    assert "beatdiag" in capsys.readouterr().out


def test_config_file_with_flag_override(tmp_path):
    beats_dir, acts_dir = _write_mini_inputs(tmp_path, bpms=(42,))
    cfg = tmp_path / "run.cfg"
    cfg.write_text("min_bpm=30\n")
    out_file_cfg = tmp_path / "o1"
    out_flag = tmp_path / "o2"
    run(["decode", "--dbn", "--config", str(cfg), str(acts_dir), "-o", str(out_file_cfg)])
    run(["decode", "--dbn", "--config", str(cfg), "--min-bpm", "55", str(acts_dir), "-o", str(out_flag)])
    with_file = ingest.load_beats(next(out_file_cfg.glob("*.beats")))
    with_flag = ingest.load_beats(next(out_flag.glob("*.beats")))
    # config file widens the range so the 42 BPM track decodes at its level;
    # the explicit flag forces the default minimum back and doubles it
    assert len(with_flag.beats) > 1.5 * len(with_file.beats)
    assert "min_bpm=55" in (out_flag / "manifest.txt").read_text()
    assert "min_bpm=30" in (out_file_cfg / "manifest.txt").read_text()
