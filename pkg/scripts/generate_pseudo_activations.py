#!/usr/bin/env python3
"""Generate the bundled pseudo-model smoke corpus at tests/data/pseudo/.

Three synthetic tracks exercise distinct behaviors end to end:
  pseudo01  steady 96 BPM, light noise        (clean tracking)
  pseudo02  slow 45 BPM, light noise          (octave error at default min_bpm)
  pseudo03  rubato ~72 BPM, wrong extra peaks (degraded activations)

Activations are ground-truth Gaussians perturbed with calibrated noise:
attenuated true peaks, spurious peaks, and a low uniform floor. Expected
outputs (expected.json) are produced by the toolkit itself and frozen, so
the smoke test checks end-to-end pipeline determinism, not metric math.
"""

import json
from pathlib import Path

import numpy as np

from beatdiag import dbn, metrics, peaks
from beatdiag.diagnostics import classify_failure
from beatdiag.experiments import SynthConfig, synthesize_gt_activation
from beatdiag.ingest import ActivationCurve, BeatAnnotation, write_activation, write_beats

ROOT = Path(__file__).resolve().parent.parent / "tests" / "data" / "pseudo"
FPS = 43.07
SOURCE = "pseudo"


def make_tracks(rng):
    tracks = {}

    beats = np.round(np.arange(0.625, 39.5, 60.0 / 96.0), 6)
    tracks["pseudo01"] = {
        "beats": beats,
        "tags": ["Strong Syncopation"],
        "confidence": 1,
        "attenuation": (0.75, 1.0),
        "n_spurious": 2,
        "spurious_height": (0.2, 0.4),
        "floor": 0.03,
    }

    beats = np.round(np.arange(0.8, 39.0, 60.0 / 45.0), 6)
    tracks["pseudo02"] = {
        "beats": beats,
        "tags": ["slow tempo", "Missing Bass"],
        "confidence": 2,
        "attenuation": (0.7, 1.0),
        "n_spurious": 3,
        "spurious_height": (0.2, 0.5),
        "floor": 0.03,
    }

    ibis = (60.0 / 72.0) * (1 + rng.uniform(-0.18, 0.18, size=47))
    beats = np.round(0.7 + np.concatenate(([0], np.cumsum(ibis))), 6)
    tracks["pseudo03"] = {
        "beats": beats,
        "tags": ["expressive timing (rubato)", "lack of transients", "mystery descriptor"],
        "confidence": 4,
        "attenuation": (0.3, 0.55),
        "n_spurious": 45,
        "spurious_height": (0.6, 0.98),
        "floor": 0.05,
    }
    return tracks


def perturb(act_values, rng, spec):
    values = act_values.copy()
    n = len(values)
    lo, hi = spec["attenuation"]
    # attenuate true peaks beat by beat: scale each local neighborhood
    scale = rng.uniform(lo, hi)
    values *= scale
    for _ in range(spec["n_spurious"]):
        center = rng.uniform(0, n - 1)
        height = rng.uniform(*spec["spurious_height"])
        lo = max(0, int(center) - 12)
        hi = min(n, int(center) + 13)
        bump = height * np.exp(-((np.arange(lo, hi) - center) ** 2) / 8.0)
        np.maximum(values[lo:hi], bump, out=values[lo:hi])
    values += rng.uniform(0, spec["floor"], size=n)
    return np.clip(values, 0.0, 1.0)


def main():
    rng = np.random.default_rng(1234)
    (ROOT / "beats").mkdir(parents=True, exist_ok=True)
    (ROOT / "tags").mkdir(parents=True, exist_ok=True)
    (ROOT / "activations" / SOURCE).mkdir(parents=True, exist_ok=True)

    expected = {"source": SOURCE, "fps": FPS, "tracks": {}}
    for track_id, spec in make_tracks(rng).items():
        ref = BeatAnnotation(track_id=track_id, beats=spec["beats"])
        clean = synthesize_gt_activation(ref, SynthConfig(fps=FPS))
        noisy = ActivationCurve(
            values=perturb(clean.values, rng, spec), fps=FPS, source_label=SOURCE
        )
        write_beats(ref.beats, ROOT / "beats" / f"{track_id}.beats", decimals=6)
        tag_lines = list(spec["tags"]) + [f"confidence: {spec['confidence']}", "annotator: a1"]
        (ROOT / "tags" / f"{track_id}.tags").write_text("\n".join(tag_lines) + "\n")
        write_activation(noisy, ROOT / "activations" / SOURCE / f"{track_id}.act")

        peak_est = peaks.pick_peaks(noisy, peaks.PeakConfig())
        peak_eval = metrics.evaluate(peak_est, ref.beats)
        dbn_est = dbn.decode(noisy, dbn.DbnConfig())
        dbn_eval = metrics.evaluate(dbn_est, ref.beats)
        wide_est = dbn.decode(noisy, dbn.DbnConfig(min_bpm=30.0))
        wide_eval = metrics.evaluate(wide_est, ref.beats)
        expected["tracks"][track_id] = {
            "n_beats": len(ref.beats),
            "peak_f": peak_eval.f_measure,
            "peak_category": str(classify_failure(peak_eval)),
            "dbn_default_f": dbn_eval.f_measure,
            "dbn_default_amlt": dbn_eval.amlt,
            "dbn_min30_f": wide_eval.f_measure,
            "delta_f_dbn_minus_peak": dbn_eval.f_measure - peak_eval.f_measure,
        }

    (ROOT / "expected.json").write_text(json.dumps(expected, indent=1, sort_keys=True) + "\n")
    for track_id, values in expected["tracks"].items():
        print(track_id, {k: round(v, 3) if isinstance(v, float) else v for k, v in values.items()})
    print(f"corpus written to {ROOT}")


if __name__ == "__main__":
    main()
