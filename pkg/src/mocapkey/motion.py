"""World-space motion sequences: forward kinematics and preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .asfamc import Joint, RawMotion, Skeleton, local_rotations, root_track
from .errors import TooShort

# Distal extremities dropped before windowing. With these removed the
# standard CMU skeleton keeps 22 bones whose ends, together with the root,
# are the usual 23 tracked body points.
CMU_EXCLUDED_JOINTS = (
    "lhand", "lfingers", "lthumb",
    "rhand", "rfingers", "rthumb",
    "ltoes", "rtoes",
)


@dataclass(frozen=True)
class MotionSequence:
    """World-space positions and velocities for the non-root joints plus a
    separate root track. Positions are (N, M, 3), frame-major."""
    dt: float
    positions: np.ndarray
    velocities: np.ndarray
    root_positions: np.ndarray
    root_velocities: np.ndarray
    joint_names: tuple[str, ...]
    parents: tuple[int, ...]      # index into joint_names; -1 means the root
    source: str = ""

    def __post_init__(self):
        n, m = self.positions.shape[:2]
        if self.positions.shape != (n, m, 3) or self.velocities.shape != (n, m, 3):
            raise ValueError("positions and velocities must both be (N, M, 3)")
        if self.root_positions.shape != (n, 3) or self.root_velocities.shape != (n, 3):
            raise ValueError("root tracks must be (N, 3)")
        if len(self.joint_names) != m or len(self.parents) != m:
            raise ValueError("joint_names and parents must have length M")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]


def forward_kinematics(skeleton: Skeleton, raw: RawMotion, dt: float,
                       source: str = "") -> MotionSequence:
    """World positions of every bone end over the clip.

    Joint order matches the skeleton's (topological, root excluded).
    Velocities are central finite differences, one-sided at the ends.
    """
    n = raw.frame_count
    joints = skeleton.joints
    rotations = np.empty((len(joints), n, 3, 3))
    positions = np.empty((len(joints), n, 3))
    rotations[0] = local_rotations(skeleton, joints[0], raw)
    positions[0] = root_track(skeleton, raw)
    for idx in range(1, len(joints)):
        joint = joints[idx]
        local = local_rotations(skeleton, joint, raw)
        rotations[idx] = rotations[joint.parent] @ local
        offset = joint.length * joint.direction
        positions[idx] = positions[joint.parent] + rotations[idx] @ offset

    body = np.moveaxis(positions[1:], 0, 1)   # (N, M, 3)
    root = positions[0]
    return MotionSequence(
        dt=dt,
        positions=body,
        velocities=finite_difference(body, dt),
        root_positions=root,
        root_velocities=finite_difference(root, dt),
        joint_names=tuple(j.name for j in joints[1:]),
        parents=tuple(j.parent - 1 for j in joints[1:]),
        source=source,
    )


def finite_difference(track: np.ndarray, dt: float) -> np.ndarray:
    """Central differences along axis 0, one-sided at the first/last frame."""
    if len(track) < 2:
        return np.zeros_like(track)
    out = np.empty_like(track)
    out[1:-1] = (track[2:] - track[:-2]) / (2.0 * dt)
    out[0] = (track[1] - track[0]) / dt
    out[-1] = (track[-1] - track[-2]) / dt
    return out


def filter_joints(skeleton: Skeleton, excluded: tuple[str, ...]) -> Skeleton:
    """Skeleton with the named bones removed.

    Every excluded bone must be a leaf of the remaining tree (no retained
    descendants), otherwise the hierarchy would be broken.
    """
    names = {j.name for j in skeleton.joints}
    unknown = [e for e in excluded if e not in names]
    if unknown:
        raise ValueError(f"excluded joints not in skeleton: {unknown}")
    keep: list[Joint] = []
    new_index: dict[int, int] = {}
    for old_idx, joint in enumerate(skeleton.joints):
        if joint.name in excluded:
            continue
        if joint.parent is not None and joint.parent not in new_index:
            raise ValueError(
                f"cannot exclude '{skeleton.joints[joint.parent].name}': "
                f"retained joint '{joint.name}' descends from it")
        parent = None if joint.parent is None else new_index[joint.parent]
        new_index[old_idx] = len(keep)
        keep.append(replace(joint, parent=parent))
    return replace(skeleton, joints=tuple(keep))


def select_joints(seq: MotionSequence, names: tuple[str, ...]) -> MotionSequence:
    """Restrict a sequence to the named joints (which must be parent-closed
    within the sequence: a kept joint's parent is the root or also kept)."""
    index_of = {nm: i for i, nm in enumerate(seq.joint_names)}
    missing = [nm for nm in names if nm not in index_of]
    if missing:
        raise ValueError(f"joints not in sequence: {missing}")
    old_indices = [index_of[nm] for nm in names]
    new_of_old = {o: n for n, o in enumerate(old_indices)}
    parents = []
    for o in old_indices:
        p = seq.parents[o]
        if p != -1 and p not in new_of_old:
            raise ValueError(
                f"joint '{seq.joint_names[o]}' kept without its parent "
                f"'{seq.joint_names[p]}'")
        parents.append(-1 if p == -1 else new_of_old[p])
    return replace(
        seq,
        positions=seq.positions[:, old_indices],
        velocities=seq.velocities[:, old_indices],
        joint_names=tuple(seq.joint_names[o] for o in old_indices),
        parents=tuple(parents),
    )


@dataclass(frozen=True)
class PreprocessConfig:
    source_fps: float = 120.0
    target_fps: float = 30.0
    window_len: int = 60
    excluded_joints: tuple[str, ...] = CMU_EXCLUDED_JOINTS

    def __post_init__(self):
        if self.source_fps <= 0 or self.target_fps <= 0:
            raise ValueError("frame rates must be positive")
        ratio = self.source_fps / self.target_fps
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"source fps {self.source_fps} is not an integer multiple "
                f"of target fps {self.target_fps}")
        if self.window_len < 2:
            raise ValueError("window_len must be at least 2")

    @property
    def stride(self) -> int:
        return round(self.source_fps / self.target_fps)


def preprocess(seq: MotionSequence, config: PreprocessConfig) -> list[MotionSequence]:
    """Downsample, drop excluded joints, cut fixed-length windows.

    Windows are consecutive and non-overlapping; a trailing remainder
    shorter than the window length is discarded. Velocities are recomputed
    per window by finite differences at the new frame spacing. Raises
    TooShort when the clip yields no complete window.
    """
    stride = config.stride
    kept_names = tuple(nm for nm in seq.joint_names if nm not in config.excluded_joints)
    thinned = select_joints(seq, kept_names)
    dt = stride * seq.dt
    pos = thinned.positions[::stride]
    root = thinned.root_positions[::stride]
    n_windows = len(pos) // config.window_len
    if n_windows == 0:
        raise TooShort(
            f"{len(pos)} downsampled frames < window length {config.window_len}")
    windows = []
    for w in range(n_windows):
        lo = w * config.window_len
        hi = lo + config.window_len
        wpos = pos[lo:hi]
        wroot = root[lo:hi]
        windows.append(MotionSequence(
            dt=dt,
            positions=wpos,
            velocities=finite_difference(wpos, dt),
            root_positions=wroot,
            root_velocities=finite_difference(wroot, dt),
            joint_names=thinned.joint_names,
            parents=thinned.parents,
            source=f"{seq.source}[{lo * stride}:{hi * stride}]" if seq.source else "",
        ))
    return windows
