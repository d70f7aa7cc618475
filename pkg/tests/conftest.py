import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).resolve().parent
DATA_DIR = TESTS_DIR / "data"
PSEUDO_DIR = DATA_DIR / "pseudo"

sys.path.insert(0, str(TESTS_DIR))

from beatdiag.ingest import ActivationCurve, BeatAnnotation  # noqa: E402


@pytest.fixture
def pseudo_root() -> Path:
    return PSEUDO_DIR


def make_grid_annotation(bpm: float, start: float = 0.5, duration: float = 40.0,
                         track_id: str = "grid") -> BeatAnnotation:
    beats = np.arange(start, duration, 60.0 / bpm)
    return BeatAnnotation(track_id=track_id, beats=beats)


def make_pulse_activation(beats, fps: float = 50.0, duration: float | None = None,
                          sigma: float = 2.0, label: str = "pulse") -> ActivationCurve:
    """Direct Gaussian pulse-train activation covering exactly ``duration``."""
    beats = np.asarray(beats, dtype=float)
    if duration is None:
        duration = beats[-1] + 0.5
    n = int(round(duration * fps))
    t = np.arange(n)
    values = np.zeros(n)
    for b in beats:
        c = b * fps
        lo = max(0, int(c) - 15)
        hi = min(n, int(c) + 16)
        np.maximum(values[lo:hi], np.exp(-((t[lo:hi] - c) ** 2) / (2 * sigma**2)),
                   out=values[lo:hi])
    return ActivationCurve(values=values, fps=fps, source_label=label)
