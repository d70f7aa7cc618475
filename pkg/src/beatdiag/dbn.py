"""Bar-pointer DBN beat decoder.

The latent state is (beat period tau in frames, phase within the period).
Phase advances deterministically one frame at a time; the period may change
only when the phase wraps, with probability proportional to
exp(-lambda * |tau'/tau - 1|). Observations split each period into a beat
region covering roughly 1/observation_lambda of the period and a non-beat
remainder:

    p(a_t | beat state)     = a_t
    p(a_t | non-beat state) = (1 - a_t) / (observation_lambda - 1)

Decoding is exact Viterbi in log space with a uniform initial distribution.
Ties are broken toward the lower flat state id, which makes the decoder
fully deterministic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, StateSpaceError
from .ingest import ActivationCurve

# Densities are floored here before the log so -inf never enters the DP.
DENSITY_FLOOR = 1e-12

# Hard bounds applied to tempo-constrained decoding windows.
CONSTRAINT_MIN_BPM = 30.0
CONSTRAINT_MAX_BPM = 215.0


@dataclass(frozen=True)
class DbnConfig:
    """Full decoder parameterization.

    transition_lambda controls tempo rigidity: high values enforce a near
    constant tempo, low values let the decoder follow the activation.
    """

    min_bpm: float = 55.0
    max_bpm: float = 215.0
    transition_lambda: float = 100.0
    observation_lambda: int = 16
    correct_beats: bool = True

    def __post_init__(self):
        # equality makes a single-tempo space, used by constrained decoding
        if not 0 < self.min_bpm <= self.max_bpm:
            raise ValueError(f"need 0 < min_bpm <= max_bpm, got [{self.min_bpm}, {self.max_bpm}]")
        if self.transition_lambda <= 0:
            raise ValueError("transition_lambda must be positive")
        if self.observation_lambda < 2:
            raise ValueError("observation_lambda must be >= 2")


@dataclass(frozen=True)
class TempoConstraint:
    """A BPM window around an externally supplied tempo estimate."""

    center_bpm: float
    window_fraction: float = 0.20

    def effective_range(self) -> tuple[float, float]:
        """Window intersected with the global constraint bounds."""
        lo = max(self.center_bpm * (1 - self.window_fraction), CONSTRAINT_MIN_BPM)
        hi = min(self.center_bpm * (1 + self.window_fraction), CONSTRAINT_MAX_BPM)
        if lo > hi:
            raise ConstraintError(
                f"empty BPM range for center {self.center_bpm} +/- {self.window_fraction:.0%}"
            )
        return lo, hi


class StateSpace:
    """Tempo x phase state space with a flat id layout.

    States are grouped by tempo in ascending period order; within a group
    the flat id increases with phase. ``intervals[k]`` is the beat period of
    tempo k in frames, so the group for tempo k spans
    [first_states[k], first_states[k] + intervals[k]).
    """

    def __init__(self, fps: float, intervals: np.ndarray, observation_lambda: int):
        self.fps = float(fps)
        self.intervals = np.asarray(intervals, dtype=np.int64)
        self.observation_lambda = int(observation_lambda)
        self.num_tempi = len(self.intervals)
        self.num_states = int(self.intervals.sum())
        self.first_states = np.concatenate(([0], np.cumsum(self.intervals)[:-1]))
        self.last_states = self.first_states + self.intervals - 1
        self.state_interval = np.repeat(self.intervals, self.intervals)
        self.state_phase = np.arange(self.num_states) - np.repeat(self.first_states, self.intervals)
        self.beat_region_sizes = np.maximum(1, np.round(self.intervals / self.observation_lambda)).astype(np.int64)
        self.is_beat_state = self.state_phase < np.repeat(self.beat_region_sizes, self.intervals)

    def bpm_of_tempo(self, k: int) -> float:
        return 60.0 * self.fps / self.intervals[k]


def build_state_space(cfg: DbnConfig, fps: float) -> StateSpace:
    """All integer beat periods representable inside the configured BPM range."""
    tau_min = int(round(60.0 * fps / cfg.max_bpm))
    tau_max = int(round(60.0 * fps / cfg.min_bpm))
    if tau_min < 2:
        raise StateSpaceError(
            f"fps {fps} too low for max_bpm {cfg.max_bpm} (beat period {tau_min} < 2 frames)"
        )
    if tau_max < tau_min:
        raise StateSpaceError(f"empty interval range [{tau_min}, {tau_max}]")
    intervals = np.arange(tau_min, tau_max + 1)
    return StateSpace(fps, intervals, cfg.observation_lambda)


def transition_log_probs(space: StateSpace, transition_lambda: float) -> np.ndarray:
    """Log transition matrix between tempi at phase-wrap time, shape (K, K).

    Entry [k, k'] is log p(next period = intervals[k'] | current period =
    intervals[k]); rows are normalized. Within-beat transitions are
    deterministic and therefore not represented.
    """
    tau = space.intervals.astype(float)
    log_w = -transition_lambda * np.abs(tau[np.newaxis, :] / tau[:, np.newaxis] - 1.0)
    # log-sum-exp per row; rows always contain the 0.0 self-transition term
    row_max = log_w.max(axis=1, keepdims=True)
    log_norm = row_max + np.log(np.exp(log_w - row_max).sum(axis=1, keepdims=True))
    return log_w - log_norm


def observation_log_probs(act: ActivationCurve, space: StateSpace) -> np.ndarray:
    """Per-frame log densities, shape (T, 2): column 0 non-beat, column 1 beat."""
    a = act.values
    out = np.empty((len(a), 2))
    out[:, 0] = np.log(np.maximum((1.0 - a) / (space.observation_lambda - 1), DENSITY_FLOOR))
    out[:, 1] = np.log(np.maximum(a, DENSITY_FLOOR))
    return out


def _viterbi_in_space(
    act: ActivationCurve, space: StateSpace, transition_lambda: float
) -> tuple[np.ndarray, float]:
    wrap_log = transition_log_probs(space, transition_lambda)
    obs = observation_log_probs(act, space)
    n_frames = len(act.values)
    n_states = space.num_states
    first = space.first_states
    last = space.last_states
    is_beat = space.is_beat_state
    is_first = np.zeros(n_states, dtype=bool)
    is_first[first] = True
    shifted_idx = np.flatnonzero(~is_first)

    def frame_obs(t):
        return np.where(is_beat, obs[t, 1], obs[t, 0])

    delta = frame_obs(0) - np.log(n_states)
    # Back pointers are only needed at phase wraps: wrap_from[t, k] is the
    # tempo index active at t-1 when tempo k starts a new beat at frame t.
    wrap_from = np.empty((n_frames, space.num_tempi), dtype=np.int32)
    scratch = np.empty(n_states)
    tempo_range = np.arange(space.num_tempi)
    for t in range(1, n_frames):
        candidates = delta[last][:, np.newaxis] + wrap_log
        src = candidates.argmax(axis=0)  # first max -> lowest flat state id
        wrap_from[t] = src
        scratch[shifted_idx] = delta[shifted_idx - 1]
        scratch[first] = candidates[src, tempo_range]
        scratch += frame_obs(t)
        delta, scratch = scratch, delta  # every state was rewritten, swap buffers
    end = int(delta.argmax())
    log_prob = float(delta[end])

    path = np.empty(n_frames, dtype=np.int64)
    state = end
    for t in range(n_frames - 1, 0, -1):
        path[t] = state
        if is_first[state]:
            k = int(np.searchsorted(first, state))
            state = int(last[wrap_from[t, k]])
        else:
            state -= 1
    path[0] = state
    return path, log_prob


def viterbi(act: ActivationCurve, cfg: DbnConfig = DbnConfig()) -> tuple[np.ndarray, float]:
    """Exact MAP state path for the activation, plus its log score."""
    space = build_state_space(cfg, act.fps)
    return _viterbi_in_space(act, space, cfg.transition_lambda)


def path_to_beats(
    path: np.ndarray, space: StateSpace, act: ActivationCurve, correct: bool = True
) -> np.ndarray:
    """Beat times from a state path.

    A beat is emitted where the path enters the beat region (frame 0 counts
    when it starts inside). With ``correct`` the beat moves to the frame of
    maximum activation within that contiguous beat-region run.
    """
    in_region = space.is_beat_state[path]
    if not in_region.any():
        return np.empty(0)
    starts = np.flatnonzero(in_region & ~np.concatenate(([False], in_region[:-1])))
    ends = np.flatnonzero(in_region & ~np.concatenate((in_region[1:], [False]))) + 1
    if correct:
        frames = np.array(
            [s + int(np.argmax(act.values[s:e])) for s, e in zip(starts, ends)], dtype=np.int64
        )
    else:
        frames = starts
    return frames / space.fps


def decode(act: ActivationCurve, cfg: DbnConfig = DbnConfig()) -> np.ndarray:
    """Decode an activation curve into beat times (seconds)."""
    space = build_state_space(cfg, act.fps)
    path, _ = _viterbi_in_space(act, space, cfg.transition_lambda)
    return path_to_beats(path, space, act, cfg.correct_beats)


def decode_constrained(
    act: ActivationCurve, cfg: DbnConfig, constraint: TempoConstraint
) -> np.ndarray:
    """Decode with the BPM range replaced by the constraint window."""
    lo, hi = constraint.effective_range()
    return decode(act, dataclasses.replace(cfg, min_bpm=lo, max_bpm=hi))
