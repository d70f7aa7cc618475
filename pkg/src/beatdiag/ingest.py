"""Dataset ingestion: beat annotations, difficulty tags, activations, tempo estimates.

File conventions
----------------
* Beat annotation: one decimal timestamp (seconds) per line; anything after
  the first whitespace-separated token on a line is ignored.
* Activation text format v1: first line ``#fps=<decimal>``, then one decimal
  in [0, 1] per non-empty line; later ``#`` lines are comments.
* Activation binary format v1: magic ``ACT1``, fps as little-endian float64,
  frame count as little-endian uint64, then count little-endian float32 values.
* Tempo estimates: CSV ``track_id,bpm,source_label`` with a header row.
* Axis map: ``canonical_tag<TAB>axis_name`` lines; a line with no axis adds
  the tag to the vocabulary without an axis.
"""

from __future__ import annotations

import csv
import logging
import re
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    CorruptActivation,
    MalformedAnnotation,
    MissingFps,
    ParseError,
)

log = logging.getLogger(__name__)

AXES = ("weak_beat_cues", "tempo_instability", "metrical_ambiguity", "structural")

VALUE_TOLERANCE = 1e-6  # activation values may overshoot [0,1] by at most this

ACT_MAGIC = b"ACT1"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BeatAnnotation:
    """Ground-truth beat times for one track, strictly increasing, in seconds."""

    track_id: str
    beats: np.ndarray

    def __post_init__(self):
        beats = np.asarray(self.beats, dtype=float)
        object.__setattr__(self, "beats", beats)
        if beats.size and beats[0] < 0:
            raise MalformedAnnotation(f"{self.track_id}: negative timestamp {beats[0]}")
        if beats.size > 1 and not np.all(np.diff(beats) > 0):
            raise MalformedAnnotation(f"{self.track_id}: timestamps not strictly increasing")

    def __len__(self):
        return len(self.beats)


@dataclass(frozen=True)
class TrackMetadata:
    """Per-track difficulty descriptors and annotation provenance."""

    track_id: str
    raw_tags: tuple[str, ...] = ()
    canonical_tags: tuple[str, ...] = ()
    axes: frozenset = frozenset()
    annotator_confidence: int | None = None
    annotator_id: str | None = None
    is_easy: bool | None = None


@dataclass(frozen=True)
class ActivationCurve:
    """Per-frame beat probability sequence at a fixed frame rate."""

    values: np.ndarray
    fps: float
    source_label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.fps <= 0:
            raise CorruptActivation(f"fps must be positive, got {self.fps}")
        if values.ndim != 1 or values.size < 1:
            raise CorruptActivation("activation must be a non-empty 1-d sequence")
        if values.min() < -VALUE_TOLERANCE or values.max() > 1 + VALUE_TOLERANCE:
            raise CorruptActivation(
                f"activation values outside [0,1]: min={values.min()}, max={values.max()}"
            )
        object.__setattr__(self, "values", np.clip(values, 0.0, 1.0))

    def __len__(self):
        return len(self.values)

    @property
    def duration(self) -> float:
        return len(self.values) / self.fps


@dataclass(frozen=True)
class TempoEstimate:
    track_id: str
    bpm: float
    source_label: str

    def __post_init__(self):
        if self.bpm <= 0:
            raise ParseError(f"{self.track_id}: bpm must be positive, got {self.bpm}")


@dataclass(frozen=True)
class AxisMap:
    """Canonical-tag vocabulary plus tag -> difficulty-axis assignment."""

    entries: dict
    vocabulary: frozenset

    def __post_init__(self):
        bad = set(self.entries.values()) - set(AXES)
        if bad:
            raise ParseError(f"unknown axis names: {sorted(bad)}")
        object.__setattr__(self, "vocabulary", frozenset(self.vocabulary) | set(self.entries))


@dataclass
class TrackRecord:
    """One track's annotation, metadata, and named activation sources."""

    track_id: str
    annotation: BeatAnnotation | None
    metadata: TrackMetadata
    activations: dict = field(default_factory=dict)


class Dataset:
    """Immutable collection of TrackRecords, iterated in track_id order."""

    def __init__(self, records, residue_tags=None):
        self._records = sorted(records, key=lambda r: r.track_id)
        self._by_id = {r.track_id: r for r in self._records}
        # raw tags that failed normalization, keyed by track_id
        self.residue_tags = dict(residue_tags or {})

    def __iter__(self):
        return iter(self._records)

    def __len__(self):
        return len(self._records)

    def __getitem__(self, track_id: str) -> TrackRecord:
        return self._by_id[track_id]

    def __contains__(self, track_id: str) -> bool:
        return track_id in self._by_id

    def annotated(self):
        """Records that carry a beat annotation."""
        return [r for r in self._records if r.annotation is not None]


@dataclass(frozen=True)
class DatasetLayout:
    """Where the loaders look for each file kind below a dataset root.

    All directories may be absolute or relative to the root passed to
    load_dataset. ``activation_dirs`` maps a source label (e.g. a model
    name) to the directory holding that source's activation files.
    """

    beats_dir: str = "beats"
    tags_dir: str | None = "tags"
    activation_dirs: dict = field(default_factory=dict)
    beats_glob: tuple[str, ...] = ("*.beats", "*.txt")
    tags_glob: tuple[str, ...] = ("*.tag", "*.tags")
    activation_glob: tuple[str, ...] = ("*.act", "*.act.txt", "*.bin")


# ---------------------------------------------------------------------------
# Beat annotations
# ---------------------------------------------------------------------------


def track_id_from_path(path) -> str:
    """Lowercased filename stem; strips a double extension like `.act.txt`."""
    stem = Path(path).stem
    if stem.endswith(".act"):
        stem = stem[: -len(".act")]
    return stem.lower()


def load_beats(path) -> BeatAnnotation:
    """Parse a beat annotation file: one timestamp per line, seconds.

    Raises ParseError (with line number) on unparseable lines and
    MalformedAnnotation when timestamps are negative or not strictly
    increasing.
    """
    path = Path(path)
    beats = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        token = stripped.split()[0]
        try:
            beats.append(float(token))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected a timestamp, got {token!r}") from None
    arr = np.asarray(beats, dtype=float)
    if arr.size and arr.min() < 0:
        raise MalformedAnnotation(f"{path}: negative timestamp")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        bad = int(np.flatnonzero(np.diff(arr) <= 0)[0]) + 2
        raise MalformedAnnotation(f"{path}: timestamps not strictly increasing at line ~{bad}")
    return BeatAnnotation(track_id=track_id_from_path(path), beats=arr)


def write_beats(beats, path, decimals: int = 3):
    """Write beat times one per line; round-trips through load_beats."""
    path = Path(path)
    path.write_text("".join(f"{t:.{decimals}f}\n" for t in np.asarray(beats, dtype=float)))


# ---------------------------------------------------------------------------
# Difficulty tags
# ---------------------------------------------------------------------------


def load_axis_map(path=None) -> AxisMap:
    """Read the tag vocabulary / axis assignment file (default: bundled map)."""
    if path is None:
        text = resources.files("beatdiag").joinpath("data/axis_map.tsv").read_text()
        origin = "<bundled axis_map.tsv>"
    else:
        text = Path(path).read_text()
        origin = str(path)
    entries = {}
    vocabulary = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        tag = parts[0].strip()
        if len(parts) == 1:
            vocabulary.add(tag)
        elif len(parts) == 2:
            axis = parts[1].strip()
            if axis not in AXES:
                raise ParseError(f"{origin}:{lineno}: unknown axis {axis!r}")
            entries[tag] = axis
        else:
            raise ParseError(f"{origin}:{lineno}: expected 'tag<TAB>axis'")
    return AxisMap(entries=entries, vocabulary=frozenset(vocabulary))


_PAREN = re.compile(r"\([^)]*\)")
_SEPARATORS = re.compile(r"[\s_\-]+")


def _singular_candidates(word: str):
    if word.endswith("ies") and len(word) > 4:
        yield word[:-3] + "y"
    if word.endswith("es") and len(word) > 3:
        yield word[:-2]
    if word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        yield word[:-1]


def normalize_tag(raw: str, axis_map: AxisMap | None = None) -> str | None:
    """Normalize a free-text difficulty descriptor to its canonical id.

    Lowercases, strips parenthesized suffixes, collapses whitespace, and maps
    plural forms to the singular vocabulary entry. Returns None when the
    result is not in the vocabulary; callers collect those in a residue list.
    """
    if axis_map is None:
        axis_map = default_axis_map()
    words = _SEPARATORS.split(_PAREN.sub(" ", raw.lower()).strip())
    words = [w for w in words if w]
    if not words:
        return None
    candidate = "_".join(words)
    if candidate in axis_map.vocabulary:
        return candidate
    for singular in _singular_candidates(words[-1]):
        candidate = "_".join(words[:-1] + [singular])
        if candidate in axis_map.vocabulary:
            return candidate
    return None


def assign_axes(tags, axis_map: AxisMap) -> frozenset:
    """Union of the axes mapped from the given canonical tags."""
    return frozenset(axis_map.entries[t] for t in tags if t in axis_map.entries)


_META_LINE = re.compile(r"^(annotator|confidence|easy)\s*[:=]\s*(.+)$", re.IGNORECASE)


def load_tags(path, axis_map: AxisMap | None = None):
    """Parse a free-text tag file into (TrackMetadata, residue raw tags).

    Tags are separated by newlines, commas, or semicolons. Lines of the form
    ``annotator: X``, ``confidence: N``, ``easy: true`` carry annotation
    provenance; either inline keys or a separate metadata file may be used.
    """
    if axis_map is None:
        axis_map = default_axis_map()
    path = Path(path)
    raw_tags = []
    annotator = None
    confidence = None
    is_easy = None
    for line in path.read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        meta = _META_LINE.match(stripped)
        if meta:
            key, value = meta.group(1).lower(), meta.group(2).strip()
            if key == "annotator":
                annotator = value
            elif key == "confidence":
                confidence = int(value)
            elif key == "easy":
                is_easy = value.lower() in ("1", "true", "yes")
            continue
        raw_tags.extend(t.strip() for t in re.split(r"[,;]", stripped) if t.strip())
    canonical = []
    residue = []
    for raw in raw_tags:
        tag = normalize_tag(raw, axis_map)
        if tag is None:
            residue.append(raw)
        elif tag not in canonical:
            canonical.append(tag)
    if residue:
        log.warning("%s: %d unrecognized tag(s): %s", path.name, len(residue), residue)
    metadata = TrackMetadata(
        track_id=track_id_from_path(path),
        raw_tags=tuple(raw_tags),
        canonical_tags=tuple(canonical),
        axes=assign_axes(canonical, axis_map),
        annotator_confidence=confidence,
        annotator_id=annotator,
        is_easy=is_easy,
    )
    return metadata, residue


_default_axis_map = None


def default_axis_map() -> AxisMap:
    global _default_axis_map
    if _default_axis_map is None:
        _default_axis_map = load_axis_map()
    return _default_axis_map


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def load_activation(path, source_label: str | None = None) -> ActivationCurve:
    """Load an activation curve in either the text or binary interchange format."""
    path = Path(path)
    label = source_label if source_label is not None else track_id_from_path(path)
    blob = path.read_bytes()
    if blob[:4] == ACT_MAGIC:
        return _parse_activation_binary(blob, path, label)
    return _parse_activation_text(blob, path, label)


def _parse_activation_text(blob: bytes, path, label: str) -> ActivationCurve:
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptActivation(f"{path}: neither ACT1 binary nor utf-8 text") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#fps="):
        raise MissingFps(f"{path}: first line must be '#fps=<decimal>'")
    try:
        fps = float(lines[0][len("#fps="):])
    except ValueError:
        raise MissingFps(f"{path}: bad fps value {lines[0]!r}") from None
    if fps <= 0:
        raise MissingFps(f"{path}: fps must be positive, got {fps}")
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            values.append(float(stripped))
        except ValueError:
            raise CorruptActivation(f"{path}:{lineno}: bad value {stripped!r}") from None
    if not values:
        raise CorruptActivation(f"{path}: no activation values")
    try:
        return ActivationCurve(values=np.asarray(values), fps=fps, source_label=label)
    except CorruptActivation as exc:
        raise CorruptActivation(f"{path}: {exc}") from None


def _parse_activation_binary(blob: bytes, path, label: str) -> ActivationCurve:
    if len(blob) < 4 + 8 + 8:
        raise CorruptActivation(f"{path}: truncated header")
    fps = struct.unpack_from("<d", blob, 4)[0]
    count = struct.unpack_from("<Q", blob, 12)[0]
    expected = 4 + 8 + 8 + 4 * count
    if len(blob) != expected:
        raise CorruptActivation(f"{path}: expected {expected} bytes for {count} frames, got {len(blob)}")
    if fps <= 0 or not np.isfinite(fps):
        raise CorruptActivation(f"{path}: bad fps {fps}")
    values = np.frombuffer(blob, dtype="<f4", offset=20, count=count).astype(float)
    try:
        return ActivationCurve(values=values, fps=fps, source_label=label)
    except CorruptActivation as exc:
        raise CorruptActivation(f"{path}: {exc}") from None


def write_activation(act: ActivationCurve, path, binary: bool = False):
    """Write an activation curve in the v1 text or binary interchange format."""
    path = Path(path)
    if binary:
        payload = bytearray(ACT_MAGIC)
        payload += struct.pack("<d", act.fps)
        payload += struct.pack("<Q", len(act.values))
        payload += act.values.astype("<f4").tobytes()
        path.write_bytes(bytes(payload))
    else:
        lines = [f"#fps={act.fps}"]
        lines += [f"{v:.8f}" for v in act.values]
        path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Tempo estimates
# ---------------------------------------------------------------------------


def load_tempo_estimates(path) -> list[TempoEstimate]:
    """Read a ``track_id,bpm,source_label`` CSV (header row required)."""
    path = Path(path)
    estimates = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"track_id", "bpm", "source_label"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                bpm = float(row["bpm"])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad bpm {row['bpm']!r}") from None
            if bpm <= 0:
                raise ParseError(f"{path}:{lineno}: bpm must be positive")
            estimates.append(
                TempoEstimate(
                    track_id=row["track_id"].strip().lower(),
                    bpm=bpm,
                    source_label=row["source_label"].strip(),
                )
            )
    return estimates


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------


def _glob_sorted(directory: Path, patterns) -> list[Path]:
    seen = {}
    for pattern in patterns:
        for p in directory.glob(pattern):
            if p.is_file():
                seen[p] = None
    return sorted(seen)


def load_dataset(root, layout: DatasetLayout | None = None, axis_map: AxisMap | None = None) -> Dataset:
    """Assemble a Dataset from a directory tree described by ``layout``.

    One TrackRecord per annotation file; tags and activations join on
    track_id. An activation without an annotation is kept for decode-only
    use (with a warning). Iteration order is sorted by track_id regardless
    of filesystem enumeration order.
    """
    root = Path(root)
    layout = layout or DatasetLayout()
    axis_map = axis_map or default_axis_map()

    def resolve(rel):
        p = Path(rel)
        return p if p.is_absolute() else root / p

    records: dict[str, TrackRecord] = {}
    residue: dict[str, list[str]] = {}

    beats_dir = resolve(layout.beats_dir)
    if beats_dir.is_dir():
        for path in _glob_sorted(beats_dir, layout.beats_glob):
            ann = load_beats(path)
            records[ann.track_id] = TrackRecord(
                track_id=ann.track_id,
                annotation=ann,
                metadata=TrackMetadata(track_id=ann.track_id),
            )

    if layout.tags_dir is not None:
        tags_dir = resolve(layout.tags_dir)
        if tags_dir.is_dir():
            for path in _glob_sorted(tags_dir, layout.tags_glob):
                meta, unknown = load_tags(path, axis_map)
                if unknown:
                    residue[meta.track_id] = unknown
                record = records.get(meta.track_id)
                if record is None:
                    log.warning("tags for unknown track %s", meta.track_id)
                    records[meta.track_id] = TrackRecord(
                        track_id=meta.track_id, annotation=None, metadata=meta
                    )
                else:
                    record.metadata = meta

    for label, act_dir in sorted(layout.activation_dirs.items()):
        act_dir = resolve(act_dir)
        if not act_dir.is_dir():
            log.warning("activation directory missing: %s", act_dir)
            continue
        for path in _glob_sorted(act_dir, layout.activation_glob):
            curve = load_activation(path, source_label=label)
            track_id = track_id_from_path(path)
            record = records.get(track_id)
            if record is None:
                log.warning("activation without annotation: %s (%s)", track_id, label)
                records[track_id] = TrackRecord(
                    track_id=track_id,
                    annotation=None,
                    metadata=TrackMetadata(track_id=track_id),
                    activations={label: curve},
                )
            else:
                record.activations[label] = curve

    return Dataset(records.values(), residue_tags=residue)
