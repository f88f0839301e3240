"""Skeleton sequences, joint layouts and the hand-crafted alignment baselines."""

from dataclasses import dataclass, field, replace
import warnings

import numpy as np

DEGENERATE_EPS = 1e-6


class DegeneratePoseWarning(UserWarning):
    pass


class DegeneratePoseError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonLayout:
    """Joint count plus the joints the alignment baselines rely on.

    ``body_center`` may coincide with ``spine_base`` (it does by default);
    the other four named joints must be distinct unless J < 4, where the
    rotation baselines cannot be defined anyway.
    """

    joint_count: int
    body_center: int = 0
    spine_base: int = 0
    spine: int = 1
    left_shoulder: int = 2
    right_shoulder: int = 3
    name: str = "generic"

    def __post_init__(self):
        named = (self.spine_base, self.spine, self.left_shoulder, self.right_shoulder)
        if self.joint_count < 1:
            raise ValueError("joint_count must be positive")
        if self.joint_count >= 4 and len(set(named)) != len(named):
            raise ValueError(f"named joints must be distinct: {named}")
        for idx in named + (self.body_center,):
            if not 0 <= idx < self.joint_count:
                raise ValueError(f"joint index {idx} out of range for J={self.joint_count}")

    @classmethod
    def ntu(cls, bodies=1):
        # 0-based Kinect v2 indices: 0 spine base, 4/8 shoulders, 20 "spine" (spine shoulder)
        return cls(25 * bodies, body_center=0, spine_base=0, spine=20,
                   left_shoulder=4, right_shoulder=8, name=f"ntu{bodies}")

    @classmethod
    def default(cls, joint_count):
        """Layout used when a file only tells us J."""
        if joint_count == 25:
            return cls.ntu(1)
        if joint_count == 50:
            return cls.ntu(2)
        if joint_count >= 4:
            return cls(joint_count)
        # too few joints for the rotation baselines; translation still works
        return cls(joint_count, 0, 0, 0, 0, 0, name="tiny")


@dataclass
class SkeletonSequence:
    """``joints`` has shape (T, J, 3), float64."""

    joints: np.ndarray
    label: int = 0
    subject: int | None = None
    camera: int | None = None
    setup: int | None = None
    layout: SkeletonLayout | None = None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.ndim != 3 or self.joints.shape[2] != 3:
            raise ValueError(f"joints must have shape (T, J, 3), got {self.joints.shape}")
        if self.joints.shape[0] < 1 or self.joints.shape[1] < 1:
            raise ValueError("a sequence needs at least one frame and one joint")
        if not np.all(np.isfinite(self.joints)):
            raise ValueError("joint coordinates must be finite")
        if self.label < 0:
            raise ValueError("label must be non-negative")
        if self.layout is None:
            self.layout = SkeletonLayout.default(self.joints.shape[1])
        elif self.layout.joint_count != self.joints.shape[1]:
            raise ValueError("layout joint count does not match the data")

    @property
    def num_frames(self):
        return self.joints.shape[0]

    @property
    def num_joints(self):
        return self.joints.shape[1]

    @property
    def has_meta(self):
        return None not in (self.subject, self.camera, self.setup)

    def with_joints(self, joints):
        return replace(self, joints=joints)


@dataclass
class Dataset:
    sequences: list
    num_classes: int
    split: str = "train"
    layout: SkeletonLayout | None = field(default=None)

    def __post_init__(self):
        if not self.sequences:
            raise ValueError("dataset is empty")
        J = self.sequences[0].num_joints
        if self.layout is None:
            self.layout = self.sequences[0].layout
        for i, s in enumerate(self.sequences):
            if s.num_joints != J:
                raise ValueError(f"sequence {i} has {s.num_joints} joints, expected {J}")
            if s.label >= self.num_classes:
                raise ValueError(f"sequence {i} label {s.label} >= num_classes {self.num_classes}")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def num_joints(self):
        return self.sequences[0].num_joints

    def map(self, fn):
        return replace(self, sequences=[fn(s) for s in self.sequences])


# -- translation baselines ---------------------------------------------------

def s_trans(seq):
    """Shift the whole sequence so the first frame's body center is the origin."""
    c = seq.joints[0, seq.layout.body_center]
    return seq.with_joints(seq.joints - c)


def f_trans(seq):
    """Shift every frame so its own body center is the origin."""
    c = seq.joints[:, seq.layout.body_center : seq.layout.body_center + 1]
    return seq.with_joints(seq.joints - c)


# -- rotation baselines ------------------------------------------------------

def rota_params_from_frame(frame, layout):
    """Rotation taking the shoulder line to +X and the spine into the +Y half plane.

    Raises DegeneratePoseError when the shoulder or spine vector is too short
    or the two are (nearly) parallel.
    """
    frame = np.asarray(frame, dtype=np.float64)
    shoulder = frame[layout.right_shoulder] - frame[layout.left_shoulder]
    spine = frame[layout.spine] - frame[layout.spine_base]
    ns = np.linalg.norm(shoulder)
    if ns <= DEGENERATE_EPS or np.linalg.norm(spine) <= DEGENERATE_EPS:
        raise DegeneratePoseError("shoulder or spine vector is degenerate")
    x = shoulder / ns
    y = spine - (spine @ x) * x
    ny = np.linalg.norm(y)
    if ny <= DEGENERATE_EPS:
        raise DegeneratePoseError("shoulder and spine vectors are parallel")
    y = y / ny
    z = np.cross(x, y)
    return np.stack([x, y, z])


def _rota_or_identity(frame, layout, where):
    try:
        return rota_params_from_frame(frame, layout)
    except DegeneratePoseError as exc:
        warnings.warn(f"{where}: {exc}; using identity rotation", DegeneratePoseWarning,
                      stacklevel=3)
        return np.eye(3)


def s_rota(seq):
    """Rotate every frame with the rotation computed from the first frame,
    about the first frame's body center."""
    lay = seq.layout
    R = _rota_or_identity(seq.joints[0], lay, "frame 0")
    c = seq.joints[0, lay.body_center]
    return seq.with_joints((seq.joints - c) @ R.T + c)


def f_rota(seq):
    """Rotate each frame with its own rotation, about its own body center."""
    lay = seq.layout
    out = np.empty_like(seq.joints)
    for t, frame in enumerate(seq.joints):
        R = _rota_or_identity(frame, lay, f"frame {t}")
        c = frame[lay.body_center]
        out[t] = (frame - c) @ R.T + c
    return seq.with_joints(out)


def downsample_temporal(seq, target_len):
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    T = seq.num_frames
    if T <= target_len:
        return seq
    if target_len == 1:
        return seq.with_joints(seq.joints[:1].copy())
    idx = np.rint(np.arange(target_len) * (T - 1) / (target_len - 1)).astype(int)
    return seq.with_joints(seq.joints[idx])


def identity(seq):
    return seq


PREPROCESSORS = {
    "raw": (identity,),
    "s-trans": (s_trans,),
    "f-trans": (f_trans,),
    "s-trans+s-rota": (s_trans, s_rota),
    "s-trans+f-rota": (s_trans, f_rota),
    "f-trans+f-rota": (f_trans, f_rota),
}


def preprocess(seq, name):
    """Apply one of the named baseline pipelines (keys of PREPROCESSORS)."""
    try:
        ops = PREPROCESSORS[name]
    except KeyError:
        raise ValueError(f"unknown preprocessing {name!r}; "
                         f"choose from {sorted(PREPROCESSORS)}") from None
    for op in ops:
        seq = op(seq)
    return seq
