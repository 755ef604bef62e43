"""Variable-length clip handling.

Clips are never padded.  A batch concatenates every (clip, person)
trajectory along the frame axis and keeps two integer vectors (which
clip and which attention segment each frame row belongs to) so both
attention directions and the classifier can recover structure from the
flat layout.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError
from .tensor import Tensor

NUM_JOINTS = 25
RAW_CHANNELS = 3

_ACTION_CODE = re.compile(r"A(\d{3})")


@dataclass
class ClipRecord:
    """One action sample: per-person joint trajectories plus a label.

    Each person array has shape [frames, joints, 3] (x, y, z).  Person 0
    must be the longest trajectory so the on-disk frame-major layout can
    be reproduced exactly.
    """

    persons: list[np.ndarray]
    label: int
    source_id: str = ""

    def __post_init__(self):
        if not 1 <= len(self.persons) <= 2:
            raise DataFormatError(f"{self.source_id}: clips carry 1 or 2 persons")
        v = self.persons[0].shape[1]
        for p, arr in enumerate(self.persons):
            if arr.ndim != 3 or arr.shape[2] != RAW_CHANNELS or arr.shape[1] != v:
                raise DataFormatError(
                    f"{self.source_id}: person {p} has shape {arr.shape}, "
                    f"expected [T, {v}, {RAW_CHANNELS}]")
            if arr.shape[0] < 1:
                raise DataFormatError(f"{self.source_id}: person {p} has no frames")
        if len(self.persons) == 2 and self.persons[1].shape[0] > self.persons[0].shape[0]:
            raise DataFormatError(f"{self.source_id}: person 0 must be the longest")

    @property
    def num_joints(self) -> int:
        return self.persons[0].shape[1]

    @property
    def total_frames(self) -> int:
        return sum(p.shape[0] for p in self.persons)


@dataclass
class RaggedBatch:
    """Concatenated frames of variable-length clips, no padding rows.

    frames           [N, V, C] float64
    clip_index       [N] which clip each frame row belongs to
    segment_index    [N] which attention segment (one per clip-person by
                     default); non-decreasing, segments of a clip adjacent
    segment_offsets  [S] start row of each segment
    labels           [num_clips]
    """

    frames: np.ndarray
    clip_index: np.ndarray
    segment_index: np.ndarray
    segment_offsets: np.ndarray
    labels: np.ndarray
    segment_clip: np.ndarray = field(default=None)  # [S] owning clip of each segment

    def __post_init__(self):
        n = self.frames.shape[0]
        if self.frames.ndim != 3:
            raise DataFormatError("frames must be [N, V, C]")
        for name in ("clip_index", "segment_index"):
            vec = getattr(self, name)
            if vec.shape != (n,):
                raise DataFormatError(f"{name} must have one entry per frame row")
            if n and np.any(np.diff(vec) < 0):
                raise DataFormatError(f"{name} must be non-decreasing")
        if self.segment_clip is None:
            self.segment_clip = self.clip_index[self.segment_offsets]
        lengths = self.segment_lengths
        if np.any(lengths < 1):
            raise DataFormatError("zero-length segment")
        # every segment maps to exactly one clip
        for s in range(self.num_segments):
            lo = self.segment_offsets[s]
            hi = lo + lengths[s]
            if np.any(self.clip_index[lo:hi] != self.segment_clip[s]):
                raise DataFormatError(f"segment {s} spans more than one clip")
        if self.num_clips != len(np.unique(self.clip_index)):
            raise DataFormatError("labels and clip_index disagree on clip count")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def num_segments(self) -> int:
        return len(self.segment_offsets)

    @property
    def num_clips(self) -> int:
        return len(self.labels)

    @property
    def segment_lengths(self) -> np.ndarray:
        bounds = np.append(self.segment_offsets, self.num_frames)
        return np.diff(bounds)

    @property
    def clip_offsets(self) -> np.ndarray:
        """Start row of each clip (clip rows are contiguous)."""
        return np.searchsorted(self.clip_index, np.arange(self.num_clips))


def collate(clips: list[ClipRecord], segment_per: str = "person") -> RaggedBatch:
    """Concatenate clips (and their persons) along the frame axis.

    segment_per="person" gives each (clip, person) trajectory its own
    attention segment; "clip" merges a clip's persons into one segment,
    letting temporal attention cross the person boundary.
    """
    if not clips:
        raise DataFormatError("collate: empty clip list")
    if segment_per not in ("person", "clip"):
        raise ConfigError(f"segment_per must be 'person' or 'clip', got {segment_per!r}")
    blocks, clip_ids, seg_ids, offsets, seg_clips = [], [], [], [], []
    row = 0
    seg = 0
    for c, clip in enumerate(clips):
        for p, person in enumerate(clip.persons):
            t = person.shape[0]
            blocks.append(np.asarray(person, dtype=np.float64))
            clip_ids.append(np.full(t, c, dtype=np.int64))
            if segment_per == "person" or p == 0:
                offsets.append(row)
                seg_clips.append(c)
            seg_ids.append(np.full(t, seg, dtype=np.int64))
            row += t
            if segment_per == "person":
                seg += 1
        if segment_per == "clip":
            seg += 1
    return RaggedBatch(
        frames=np.concatenate(blocks, axis=0),
        clip_index=np.concatenate(clip_ids),
        segment_index=np.concatenate(seg_ids),
        segment_offsets=np.array(offsets, dtype=np.int64),
        labels=np.array([c.label for c in clips], dtype=np.int64),
        segment_clip=np.array(seg_clips, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# positional encoding

def sinusoid_table(positions: np.ndarray, d_model: int) -> np.ndarray:
    """Interleaved sin/cos encoding of integer positions."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    idx = np.arange(d_model, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d_model)
    table = np.empty((len(positions), d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def segmented_positional_encoding(batch: RaggedBatch, d_model: int) -> Tensor:
    """Sinusoidal encoding whose position counter restarts at every
    segment boundary, so each trajectory is encoded as if it stood alone."""
    if d_model % 2:
        raise ConfigError(f"d_model must be even, got {d_model}")
    starts = batch.segment_offsets[batch.segment_index]
    positions = np.arange(batch.num_frames, dtype=np.int64) - starts
    return Tensor(sinusoid_table(positions, d_model))


# ---------------------------------------------------------------------------
# on-disk skeleton clip format

def parse_ntu_skeleton(path) -> ClipRecord:
    """Parse a `.skeleton` text file down to 3-D joint coordinates.

    Layout: a frame-count line; per frame a body-count line; per body one
    metadata line, a joint-count line (must be 25) and 25 joint lines
    whose first three fields are x, y, z.  Bodies are assigned to persons
    by their slot order within the frame; bodies beyond the second are
    dropped with a warning.  The label comes from an `A###` action code
    in the filename (code 1 -> label 0), or -1 when absent.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    cursor = 0

    def next_line(what: str) -> str:
        nonlocal cursor
        while cursor < len(lines) and not lines[cursor]:
            cursor += 1
        if cursor >= len(lines):
            raise DataFormatError(f"{path}: truncated file while reading {what}")
        cursor += 1
        return lines[cursor - 1]

    try:
        num_frames = int(next_line("frame count"))
    except ValueError:
        raise DataFormatError(f"{path}: frame count is not an integer") from None
    if num_frames < 1:
        raise DataFormatError(f"{path}: clip has no frames")

    person_frames: dict[int, list[np.ndarray]] = {}
    dropped = 0
    for f in range(num_frames):
        try:
            num_bodies = int(next_line(f"body count of frame {f}"))
        except ValueError:
            raise DataFormatError(f"{path}: body count is not an integer") from None
        for b in range(num_bodies):
            next_line("body metadata")
            try:
                num_joints = int(next_line("joint count"))
            except ValueError:
                raise DataFormatError(f"{path}: joint count is not an integer") from None
            if num_joints != NUM_JOINTS:
                raise DataFormatError(
                    f"{path}: joint count {num_joints} != {NUM_JOINTS}")
            joints = np.empty((NUM_JOINTS, RAW_CHANNELS), dtype=np.float64)
            for j in range(NUM_JOINTS):
                fields = next_line("joint line").split()
                if len(fields) < 3:
                    raise DataFormatError(f"{path}: joint line has < 3 fields")
                try:
                    joints[j] = [float(fields[0]), float(fields[1]), float(fields[2])]
                except ValueError:
                    raise DataFormatError(f"{path}: unparseable joint coordinates") from None
            if b < 2:
                person_frames.setdefault(b, []).append(joints)
            else:
                dropped += 1
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} bodies beyond the second")

    persons = [np.stack(person_frames[p]) for p in sorted(person_frames)]
    m = _ACTION_CODE.search(path)
    label = int(m.group(1)) - 1 if m else -1
    return ClipRecord(persons=persons, label=label, source_id=path)


def write_ntu_skeleton(clip: ClipRecord, path) -> None:
    """Serialize a clip to the `.skeleton` layout parse_ntu_skeleton reads."""
    lengths = [p.shape[0] for p in clip.persons]
    num_frames = max(lengths)
    out = [str(num_frames)]
    for f in range(num_frames):
        present = [p for p, t in enumerate(lengths) if f < t]
        out.append(str(len(present)))
        for p in present:
            out.append(f"body {p}")
            out.append(str(clip.num_joints))
            for j in range(clip.num_joints):
                x, y, z = (float(c) for c in clip.persons[p][f, j])
                out.append(f"{x!r} {y!r} {z!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def write_manifest(entries: list[tuple[str, int]], path) -> None:
    """One `<path> <label>` line per clip."""
    with open(path, "w", encoding="utf-8") as fh:
        for clip_path, label in entries:
            fh.write(f"{clip_path} {label}\n")


def read_manifest(path) -> list[tuple[str, int]]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            clip_path, _, label = line.rpartition(" ")
            if not clip_path:
                raise DataFormatError(f"{path}:{lineno}: expected '<path> <label>'")
            try:
                entries.append((clip_path, int(label)))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: label {label!r} is not "
                                      "an integer") from None
    return entries


def load_manifest_clips(path) -> list[ClipRecord]:
    entries = read_manifest(path)
    clips = []
    for clip_path, label in entries:
        clip = parse_ntu_skeleton(clip_path)
        clip.label = label
        clips.append(clip)
    return clips


# ---------------------------------------------------------------------------
# synthetic motions

# Rough rest pose for the 25-joint skeleton: spine up the y axis, arms
# along x, legs below the pelvis.  Only relative geometry matters.
_REST_POSE = np.array([
    (0.00, 0.00, 0.00),   # 0  pelvis
    (0.00, 0.25, 0.00),   # 1  mid spine
    (0.00, 0.62, 0.02),   # 2  neck
    (0.00, 0.75, 0.03),   # 3  head
    (-0.18, 0.52, 0.00),  # 4  left shoulder
    (-0.44, 0.50, 0.01),  # 5  left elbow
    (-0.68, 0.49, 0.02),  # 6  left wrist
    (-0.78, 0.49, 0.02),  # 7  left hand
    (0.18, 0.52, 0.00),   # 8  right shoulder
    (0.44, 0.50, 0.01),   # 9  right elbow
    (0.68, 0.49, 0.02),   # 10 right wrist
    (0.78, 0.49, 0.02),   # 11 right hand
    (-0.10, -0.05, 0.00), # 12 left hip
    (-0.11, -0.45, 0.01), # 13 left knee
    (-0.12, -0.85, 0.02), # 14 left ankle
    (-0.12, -0.92, 0.12), # 15 left foot
    (0.10, -0.05, 0.00),  # 16 right hip
    (0.11, -0.45, 0.01),  # 17 right knee
    (0.12, -0.85, 0.02),  # 18 right ankle
    (0.12, -0.92, 0.12),  # 19 right foot
    (0.00, 0.50, 0.01),   # 20 shoulder spine
    (-0.94, 0.50, 0.03),  # 21 left hand tip
    (-0.84, 0.44, 0.03),  # 22 left thumb
    (0.94, 0.50, 0.03),   # 23 right hand tip
    (0.84, 0.44, 0.03),   # 24 right thumb
], dtype=np.float64)

_RIGHT_ARM = (9, 10, 11, 23, 24)


def _motion(klass: int, t: np.ndarray, phase: float) -> np.ndarray:
    """Per-class displacement field, shape [T, 25, 3]."""
    disp = np.zeros((len(t), NUM_JOINTS, RAW_CHANNELS))
    base = klass % 3
    speed = 1.0 + 0.6 * (klass // 3)
    if base == 0:
        # arm wave: the right arm chain lifts and swings, amplitude
        # growing distally; rectified so the arm stays raised on average
        for depth, j in enumerate(_RIGHT_ARM):
            amp = 0.10 * (depth + 1)
            disp[:, j, 1] = amp * np.abs(np.sin(0.45 * speed * t + phase + 0.4 * depth))
    elif base == 1:
        # vertical bounce: the whole body springs up from rest
        disp[:, :, 1] = 0.20 * np.abs(np.sin(0.30 * speed * t + phase))[:, None]
    else:
        # lateral sway: the whole body oscillates around the rest pose
        disp[:, :, 0] = 0.25 * np.sin(0.22 * speed * t + phase)[:, None]
    return disp


def synth_dataset(classes: int = 3, clips_per_class: int = 10,
                  len_range: tuple[int, int] = (20, 60),
                  noise_sigma: float = 0.01, seed: int = 0,
                  two_person_every: int = 3) -> list[ClipRecord]:
    """Procedurally animated skeleton clips with class-specific motion.

    Deterministic for a fixed argument set; every `two_person_every`-th
    clip carries a second, shorter person offset along x.
    """
    if classes < 1:
        raise ConfigError("synth_dataset: empty class list")
    lo, hi = len_range
    if not (8 <= lo <= hi <= 512):
        raise ConfigError(f"len_range must be within [8, 512], got {len_range}")
    rng = np.random.Generator(np.random.Philox(seed))
    clips = []
    idx = 0
    for klass in range(classes):
        for _ in range(clips_per_class):
            t1 = int(rng.integers(lo, hi + 1))
            persons = [_render_person(klass, t1, rng, noise_sigma, x_offset=0.0)]
            if two_person_every and idx % two_person_every == two_person_every - 1:
                t2 = min(t1, int(rng.integers(lo, hi + 1)))
                persons.append(_render_person(klass, t2, rng, noise_sigma, x_offset=1.2))
            clips.append(ClipRecord(persons=persons, label=klass,
                                    source_id=f"synth{idx:04d}A{klass + 1:03d}"))
            idx += 1
    return clips


def _render_person(klass: int, frames: int, rng: np.random.Generator,
                   noise_sigma: float, x_offset: float) -> np.ndarray:
    t = np.arange(frames, dtype=np.float64)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    pose = _REST_POSE[None, :, :] + _motion(klass, t, phase)
    if noise_sigma > 0:
        pose = pose + rng.normal(0.0, noise_sigma, size=pose.shape)
    else:
        pose = pose.copy()
    pose[:, :, 0] += x_offset
    return pose
