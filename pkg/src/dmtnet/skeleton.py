"""Skeleton sequences: preprocessing, SPD descriptors, synthetic actions, file I/O.

A sequence is an array of frames with shape (T', N_j, 3).  The descriptor
of frame t is the N_j x N_j Gram matrix of the joints' offsets from the
sequence mean pose, plus a small ridge so that it is strictly positive
definite (the Gram matrix has rank at most 3).
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

FILE_MAGIC = "spdnet-skel"
FILE_VERSION = "v1"
RIDGE_FRACTION = 1e-3
RIDGE_FLOOR = 1e-6
SCALE_RANGE = (0.95, 1.05)
ANGLE_RANGE = 45.0


@dataclass
class SkeletonSequence:
    frames: np.ndarray
    label: int
    subject: int = 0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"frames must have shape (T, N_j, 3) with T >= 1, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("non-finite joint coordinate")

    @property
    def length(self):
        return self.frames.shape[0]

    @property
    def joints(self):
        return self.frames.shape[1]

    def with_frames(self, frames):
        return SkeletonSequence(frames, self.label, self.subject)


@dataclass
class SpdSample:
    """Per-subclip descriptors of shape (T, 1, N_j, N_j) and the class label."""

    descriptors: np.ndarray
    label: int


# -- preprocessing --------------------------------------------------------


def subsequence_bounds(length, parts):
    """Start/stop of ``parts`` contiguous near-equal chunks of ``range(length)``.

    The first ``length % parts`` chunks get one extra frame.
    """
    base, extra = divmod(length, parts)
    bounds = []
    start = 0
    for i in range(parts):
        stop = start + base + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def downsample_indices(length, parts, rng=None):
    """Frame index picked from each chunk: uniform with ``rng``, else the middle one."""
    if length < parts:
        warnings.warn(
            f"sequence of {length} frames is shorter than {parts} subclips; repeating cyclically",
            RuntimeWarning,
            stacklevel=2,
        )
        return np.arange(parts) % length
    idx = []
    for start, stop in subsequence_bounds(length, parts):
        if rng is None:
            idx.append(start + (stop - start - 1) // 2)
        else:
            idx.append(start + int(rng.integers(stop - start)))
    return np.array(idx)


def downsample(seq, parts, rng=None):
    """Keep one frame per subsequence; ``rng=None`` selects the middle frames."""
    return seq.with_frames(seq.frames[downsample_indices(seq.length, parts, rng)])


def random_scale(seq, rng, factor=None):
    """Multiply all coordinates by one factor drawn from [0.95, 1.05]."""
    if factor is None:
        factor = rng.uniform(*SCALE_RANGE)
    return seq.with_frames(seq.frames * factor)


def rotation_matrix(ax, ay, az):
    """``Rz @ Ry @ Rx`` for angles in degrees (right-handed, active rotations)."""
    ax, ay, az = np.radians([ax, ay, az])
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def random_rotate(seq, rng, angles=None):
    """Rotate every joint about the origin by angles drawn from [-45, 45] degrees.

    With the convention of :func:`rotation_matrix`, 90 degrees about z maps
    (1, 0, 0) to (0, 1, 0).
    """
    if angles is None:
        angles = rng.uniform(-ANGLE_RANGE, ANGLE_RANGE, size=3)
    R = rotation_matrix(*angles)
    return seq.with_frames(seq.frames @ R.T)


# -- descriptors ------------------------------------------------------------


def pre_ridge_descriptors(frames, literal_sum=False):
    """Gram matrices ``(x_t - xbar)(x_t - xbar)^T`` for every frame.

    ``xbar`` is the mean pose over all frames, or their plain sum when
    ``literal_sum`` is set.
    """
    frames = np.asarray(frames, dtype=np.float64)
    center = frames.sum(axis=0) if literal_sum else frames.mean(axis=0)
    dev = frames - center
    return dev @ np.swapaxes(dev, -1, -2)


def ridge_for(gram):
    """Per-frame ridge ``max(1e-3 * trace / N_j, 1e-6)``."""
    n = gram.shape[-1]
    return np.maximum(RIDGE_FRACTION * np.trace(gram, axis1=-2, axis2=-1) / n, RIDGE_FLOOR)


def extract_spd_features(seq, literal_sum=False):
    gram = pre_ridge_descriptors(seq.frames, literal_sum)
    lam = ridge_for(gram)
    eye = np.eye(seq.joints)
    desc = gram + lam[:, None, None] * eye
    return SpdSample(descriptors=desc[:, None, :, :], label=seq.label)


# -- synthetic actions ---------------------------------------------------------

_BASE_POSE = np.array(
    [
        [0.00, 1.70, 0.0],  # head
        [0.00, 1.50, 0.0],  # neck
        [0.00, 1.20, 0.0],  # torso
        [-0.20, 1.45, 0.0],  # left shoulder
        [-0.25, 1.20, 0.0],  # left elbow
        [-0.28, 0.95, 0.0],  # left wrist
        [0.20, 1.45, 0.0],  # right shoulder
        [0.25, 1.20, 0.0],  # right elbow
        [0.28, 0.95, 0.0],  # right wrist
        [-0.10, 0.95, 0.0],  # left hip
        [-0.10, 0.50, 0.0],  # left knee
        [-0.10, 0.05, 0.0],  # left ankle
        [0.10, 0.95, 0.0],  # right hip
        [0.10, 0.50, 0.0],  # right knee
        [0.10, 0.05, 0.0],  # right ankle
    ]
)
_BONES = [(0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 8), (2, 9), (9, 10), (10, 11), (2, 12), (12, 13), (13, 14)]

ACTION_FAMILIES = ("wave", "crouch", "circle", "clap", "kick", "bow")


def base_pose(joints):
    """Rest pose with ``joints`` points: the 15-joint body, truncated or
    extended with bone midpoints."""
    if joints < 1:
        raise ValueError("need at least one joint")
    pose = [p for p in _BASE_POSE[:joints]]
    level = 0
    while len(pose) < joints:
        level += 1
        for a, b in _BONES:
            if len(pose) >= joints:
                break
            w = level / (level + 1)
            pose.append((1 - w) * _BASE_POSE[a] + w * _BASE_POSE[b])
    return np.array(pose)


def _displacement(family, pose, t, amp, phase, freq):
    """Per-joint offsets (F, N, 3) of one action family at normalized times ``t``."""
    x, y = pose[:, 0], pose[:, 1]
    tt = t[:, None]
    d = np.zeros((t.size,) + pose.shape)
    arm_weight = np.clip((1.45 - y) / 0.5, 0.0, 1.0)
    if family == "wave":
        w = arm_weight * (x > 0.15) * (y > 0.8)
        d[:, :, 0] = amp * 0.25 * np.sin(2 * np.pi * freq * tt + phase) * w
        d[:, :, 1] = amp * 0.45 * w * np.ones_like(tt)
    elif family == "crouch":
        w = (y > 0.7).astype(float)
        depth = amp * 0.35 * 0.5 * (1 - np.cos(2 * np.pi * tt + phase))
        d[:, :, 1] = -depth * w
        d[:, :, 2] = 0.5 * depth * ((y > 0.3) & (y < 0.7))
    elif family == "circle":
        w = arm_weight * (x < -0.15) * (y > 0.8)
        ang = 2 * np.pi * freq * tt + phase
        d[:, :, 1] = amp * 0.2 * np.sin(ang) * w
        d[:, :, 2] = amp * 0.2 * np.cos(ang) * w
    elif family == "clap":
        w = arm_weight * (np.abs(x) > 0.15) * (y > 0.8)
        close = 0.5 * (1 + np.sin(2 * np.pi * freq * tt + phase))
        d[:, :, 0] = -np.sign(x) * amp * 0.22 * close * w
        d[:, :, 2] = amp * 0.3 * w * np.ones_like(tt)
    elif family == "kick":
        w = np.clip((0.95 - y) / 0.9, 0.0, 1.0) * (x > 0.05)
        d[:, :, 2] = amp * 0.45 * np.sin(np.pi * tt) ** 2 * w
        d[:, :, 1] = amp * 0.15 * np.sin(np.pi * tt) ** 2 * w
    elif family == "bow":
        w = np.clip(y - 0.95, 0.0, None)
        d[:, :, 2] = amp * 0.6 * np.sin(np.pi * tt) * w
        d[:, :, 1] = -amp * 0.2 * np.sin(np.pi * tt) * w
    else:
        raise ValueError(f"unknown action family {family!r}")
    return d


def generate_synthetic(classes, per_class, joints=15, frames=60, rng=None, subject_offset=0, noise=0.005):
    """Labeled synthetic actions, one parametric motion family per class.

    Classes beyond the six base families reuse them at a higher frequency.
    Each sample jitters amplitude, phase, tempo, body scale and position,
    and adds coordinate noise.  Output is ordered class by class.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if rng is None:
        rng = np.random.default_rng(0)
    pose = base_pose(joints)
    t = np.linspace(0.0, 1.0, frames)
    out = []
    for label in range(classes):
        family = ACTION_FAMILIES[label % len(ACTION_FAMILIES)]
        base_freq = 1.0 + label // len(ACTION_FAMILIES)
        for i in range(per_class):
            amp = rng.uniform(0.85, 1.15)
            phase = rng.uniform(-0.5, 0.5)
            freq = base_freq * rng.uniform(0.9, 1.1)
            body = rng.uniform(0.95, 1.05)
            shift = rng.normal(0.0, 0.1, size=3)
            motion = _displacement(family, pose, t, amp, phase, freq)
            seq = body * (pose[None] + motion) + shift
            seq = seq + rng.normal(0.0, noise, size=seq.shape)
            out.append(SkeletonSequence(seq, label, subject_offset + i % 10))
    return out


def class_margins(dataset):
    """RMS distance (per joint coordinate) between class-mean trajectories.

    Sequences must share one shape.  Returns a (classes, classes) matrix.
    """
    labels = sorted({s.label for s in dataset})
    means = []
    for c in labels:
        stack = np.stack([s.frames for s in dataset if s.label == c])
        means.append(stack.mean(axis=0))
    k = len(means)
    margins = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            diff = means[a] - means[b]
            margins[a, b] = np.sqrt(np.mean(diff * diff))
    return margins


# -- file format ----------------------------------------------------------------


class SkeletonFormatError(ValueError):
    pass


def save_skeleton_file(path, sequences):
    """Write sequences in the line-oriented ``spdnet-skel v1`` format."""
    if not sequences:
        joints = 0
    else:
        joints = sequences[0].joints
        if any(s.joints != joints for s in sequences):
            raise ValueError("all sequences in one file must have the same joint count")
    lines = [f"{FILE_MAGIC} {FILE_VERSION} {joints}"]
    for s in sequences:
        lines.append(f"seq {s.label} {s.subject} {s.length}")
        for frame in s.frames:
            lines.append(" ".join(repr(float(v)) for v in frame.reshape(-1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_skeleton_file(path):
    """Parse a ``spdnet-skel v1`` file.

    Malformed sequence records are skipped with a warning naming the line;
    a bad header raises :class:`SkeletonFormatError`.  An empty file gives
    an empty list.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not any(line.strip() for line in lines):
        warnings.warn(f"{path}: empty skeleton file", RuntimeWarning, stacklevel=2)
        return []
    head = lines[0].split()
    if len(head) != 3 or head[0] != FILE_MAGIC:
        raise SkeletonFormatError(f"{path}:1: bad header {lines[0]!r}")
    if head[1] != FILE_VERSION:
        raise SkeletonFormatError(f"{path}:1: unsupported version {head[1]!r}")
    joints = int(head[2])

    out = []
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        parts = line.split()
        if parts[0] != "seq" or len(parts) != 4:
            warnings.warn(f"{path}:{i + 1}: expected a 'seq' record, skipping line", RuntimeWarning, stacklevel=2)
            i += 1
            continue
        try:
            label, subject, length = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            warnings.warn(f"{path}:{i + 1}: bad seq header {line!r}", RuntimeWarning, stacklevel=2)
            i += 1
            continue
        body = lines[i + 1 : i + 1 + length]
        start = i + 1
        i = start + length
        try:
            if len(body) != length:
                raise SkeletonFormatError(f"expected {length} frame lines, found {len(body)}")
            rows = []
            for off, row in enumerate(body):
                vals = [float(v) for v in row.split()]
                if len(vals) != 3 * joints:
                    raise SkeletonFormatError(
                        f"line {start + off + 1}: expected {3 * joints} values, found {len(vals)}"
                    )
                rows.append(vals)
            frames = np.array(rows).reshape(length, joints, 3)
            out.append(SkeletonSequence(frames, label, subject))
        except ValueError as exc:
            warnings.warn(f"{path}:{start}: rejected sequence record ({exc})", RuntimeWarning, stacklevel=2)
    return out
