"""Synthetic multi-view skeleton benchmark.

Each class is one canonical motion of a stick figure (Z up): every joint
follows its own sinusoid, and the whole body may additionally turn about the
vertical axis or travel along a horizontal path.  Classes come in pairs that
share their limb motion and differ in one whole-body component only: turning
for even pairs, travelling for odd pairs.  Frame-level normalisation removes
exactly that component, so it cannot tell the partners apart, while
sequence-level normalisation keeps it.

Every sequence shows its class motion from a freshly drawn viewpoint, i.e. the
canonical joints are placed in the camera frame by ``v = R^T v' + d``, plus
isotropic Gaussian joint noise.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np

from . import geometry
from . import model as va
from .skeleton import Dataset, SkeletonSequence, SkeletonLayout, preprocess

# canonical stick figure, metres; x = right, y = forward, z = up.
# The first four joints are the generic layout's named joints.
TEMPLATE = np.array([
    [0.00, 0.00, 1.00],   # 0 spine base (body center)
    [0.00, 0.00, 1.45],   # 1 spine (between the shoulders)
    [-0.20, 0.00, 1.42],  # 2 left shoulder
    [0.20, 0.00, 1.42],   # 3 right shoulder
    [0.00, 0.02, 1.65],   # 4 head
    [-0.26, 0.00, 1.15],  # 5 left elbow
    [-0.28, 0.04, 0.90],  # 6 left hand
    [0.26, 0.00, 1.15],   # 7 right elbow
    [0.28, 0.04, 0.90],   # 8 right hand
    [-0.10, 0.00, 0.95],  # 9 left hip
    [-0.11, 0.02, 0.50],  # 10 left knee
    [-0.12, 0.06, 0.05],  # 11 left foot
    [0.10, 0.00, 0.95],   # 12 right hip
    [0.11, 0.02, 0.50],   # 13 right knee
    [0.12, 0.06, 0.05],   # 14 right foot
])
# how much each template joint may swing (limbs more than torso)
MOBILITY = np.array([0.3, 0.3, 0.4, 0.4, 0.5, 0.8, 1.0, 0.8, 1.0, 0.3, 0.7, 0.9, 0.3, 0.7, 0.9])

# viewpoint ranges (radians / metres): about +-30 deg tilt, any heading
TILT_RANGE = math.pi / 6
HEADING_RANGE = math.pi
TRANSLATION_BOX = 2.0
# whole-body motion of the second class in a pair
TURN_SWING = math.pi     # peak heading change of a turning class, radians
TRAVEL_SWING = 0.6       # peak displacement of a travelling class, metres


@dataclass
class MotionSpec:
    label: int
    base: np.ndarray        # (J, 3)
    amplitude: np.ndarray   # (J, 3)
    frequency: np.ndarray   # (J,) cycles per sequence
    phase: np.ndarray       # (J,)
    num_frames: int
    turn: float = 0.0       # heading swing about the vertical axis, radians
    travel: np.ndarray = field(default_factory=lambda: np.zeros(3))  # path amplitude, metres

    def joints(self):
        t = np.arange(self.num_frames) / self.num_frames
        arg = 2 * np.pi * self.frequency[None, :] * t[:, None] + self.phase[None, :]
        V = self.base[None] + self.amplitude[None] * np.sin(arg)[..., None]
        # one slow cycle of whole-body motion, starting at rest
        swing = np.sin(np.pi * t) ** 2
        if self.turn:
            R = geometry.compose_rotation(
                np.stack([np.zeros_like(t), np.zeros_like(t), self.turn * swing], axis=1))
            center = self.base[0] * np.array([1.0, 1.0, 0.0])
            V = geometry.transform_frame(V, R, center) + center
        return V + swing[:, None, None] * self.travel


@dataclass
class ViewSpec:
    angles: np.ndarray      # (3,)
    d: np.ndarray           # (3,)
    drift: float = 0.0      # heading change per frame, radians

    def place(self, canonical):
        """Camera-frame joints of a canonical (T, J, 3) motion."""
        T = canonical.shape[0]
        ang = np.tile(self.angles, (T, 1))
        ang[:, 2] += self.drift * np.arange(T)
        R = geometry.compose_rotation(ang)
        return geometry.inverse_transform_frame(canonical, R, np.tile(self.d, (T, 1)))

    def canonicalize(self, observed):
        """Exact inverse of :meth:`place`."""
        T = observed.shape[0]
        ang = np.tile(self.angles, (T, 1))
        ang[:, 2] += self.drift * np.arange(T)
        return geometry.transform_frame(observed, geometry.compose_rotation(ang),
                                        np.tile(self.d, (T, 1)))


def base_pose(J, rng):
    if J < 4:
        raise ValueError("synthetic skeletons need at least 4 joints")
    if J <= len(TEMPLATE):
        return TEMPLATE[:J].copy(), MOBILITY[:J].copy()
    extra = TEMPLATE[1] + rng.uniform(-0.3, 0.3, size=(J - len(TEMPLATE), 3))
    return (np.concatenate([TEMPLATE, extra]),
            np.concatenate([MOBILITY, np.full(J - len(TEMPLATE), 0.6)]))


def motion_spec(label, T, J, rng, amplitude=0.25):
    base, mobility = base_pose(J, rng)
    direction = rng.normal(size=(J, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    amp = amplitude * mobility[:, None] * direction
    return MotionSpec(label, base, amp,
                      frequency=rng.uniform(0.75, 1.25, size=J),
                      phase=rng.uniform(0, 2 * np.pi, size=J),
                      num_frames=T)


def class_motions(num_classes, T, J, rng):
    """One MotionSpec per class; see the module docstring for the pairing."""
    specs = []
    for k in range(num_classes):
        if k % 2 == 0:
            specs.append(motion_spec(k, T, J, rng))
            continue
        partner = specs[-1]
        spec = replace(partner, label=k)
        if (k // 2) % 2 == 0:
            spec.turn = rng.choice([-1, 1]) * TURN_SWING
        else:
            heading = rng.uniform(0, 2 * np.pi)
            spec.travel = TRAVEL_SWING * np.array(
                [np.cos(heading), np.sin(heading), 0.0])
        specs.append(spec)
    return specs


def sample_view(rng, view_scale=1.0, drift=0.0):
    angles = np.array([
        rng.uniform(-TILT_RANGE, TILT_RANGE),
        rng.uniform(-TILT_RANGE, TILT_RANGE),
        rng.uniform(-HEADING_RANGE, HEADING_RANGE),
    ]) * view_scale
    d = rng.uniform(-TRANSLATION_BOX / 2, TRANSLATION_BOX / 2, size=3) * view_scale
    return ViewSpec(angles, d, drift * view_scale)


def generate_dataset(num_classes, seqs_per_class, T, J, seed, *, test_per_class=None,
                     noise=0.01, view_scale=1.0, drift=0.0):
    """Returns ``(train, test, views)``.

    ``views`` has one record per sequence: ``(split, index, label, ViewSpec)``.
    Per class the first ``seqs_per_class - test_per_class`` sequences go to
    the training split (default: a third of each class is held out).
    """
    if min(num_classes, seqs_per_class, T, J) < 1:
        raise ValueError("all sizes must be positive")
    if test_per_class is None:
        test_per_class = seqs_per_class // 3
    if not 0 <= test_per_class < seqs_per_class:
        raise ValueError("test_per_class must leave at least one training sequence")
    motion_rng, view_rng, noise_rng = (np.random.default_rng(s)
                                       for s in np.random.SeedSequence(seed).spawn(3))
    layout = SkeletonLayout.default(J)
    specs = class_motions(num_classes, T, J, motion_rng)
    split_seqs = {"train": [], "test": []}
    views = []
    n_train = seqs_per_class - test_per_class
    for spec in specs:
        canonical = spec.joints()
        for i in range(seqs_per_class):
            view = sample_view(view_rng, view_scale, drift)
            joints = view.place(canonical)
            if noise > 0:
                joints = joints + noise_rng.normal(scale=noise, size=joints.shape)
            split = "train" if i < n_train else "test"
            views.append((split, len(split_seqs[split]), spec.label, view))
            split_seqs[split].append(SkeletonSequence(joints, spec.label, layout=layout))
    train = Dataset(split_seqs["train"], num_classes, "train", layout)
    test = Dataset(split_seqs["test"], num_classes, "test", layout) if split_seqs["test"] else None
    return train, test, views


# -- view consistency -----------------------------------------------------------

def _pairwise_rmsd(frames):
    """RMSD of every (same t, different sequence) pair; frames is (S, T, J, 3)."""
    out = []
    S = frames.shape[0]
    for a in range(S):
        diff = frames[a + 1:] - frames[a]
        out.extend(np.sqrt(np.mean(np.sum(diff * diff, axis=-1), axis=-1)).ravel())
    return out


def view_consistency_metric(groups, transform=None):
    """Cross-view RMSD after ``transform`` divided by the RMSD of the inputs.

    ``groups`` is a list of lists of sequences sharing one canonical motion;
    ``transform`` maps a sequence to a (T, J, 3) array (identity if None).
    """
    before, after = [], []
    for g in groups:
        if len(g) < 2:
            raise ValueError("each group needs at least two sequences")
        shapes = {s.joints.shape for s in g}
        if len(shapes) != 1:
            raise ValueError("sequences in a group must share T and J")
        raw = np.stack([s.joints for s in g])
        moved = raw if transform is None else np.stack([np.asarray(transform(s)) for s in g])
        before.extend(_pairwise_rmsd(raw))
        after.extend(_pairwise_rmsd(moved))
    # fsum: exact sums, so the result cannot depend on group order
    return math.fsum(after) / math.fsum(before)


def groups_by_label(dataset):
    groups = {}
    for s in dataset:
        groups.setdefault(s.label, []).append(s)
    return [groups[k] for k in sorted(groups)]


# -- ablation -----------------------------------------------------------------------

ABLATION_MODES = {
    "Raw+LSTM": "baseline:raw",
    "S-trans+LSTM": "baseline:s-trans",
    "F-trans+LSTM": "baseline:f-trans",
    "S-trans&S-rota+LSTM": "baseline:s-trans+s-rota",
    "S-trans&F-rota+LSTM": "baseline:s-trans+f-rota",
    "F-trans&F-rota+LSTM": "baseline:f-trans+f-rota",
    "VA-trans": "va-trans",
    "VA-rota": "va-rota",
    "VA-full": "va-full",
}


@dataclass
class BenchConfig:
    num_classes: int = 5
    train_per_class: int = 40
    test_per_class: int = 20
    frames: int = 30
    joints: int = 15
    noise: float = 0.01
    view_scale: float = 1.0
    drift: float = 0.0
    train: va.TrainConfig = field(default_factory=lambda: va.TrainConfig(
        hidden=50, batch_size=64, epochs=100))
    modes: tuple = tuple(ABLATION_MODES)
    workers: int = 1


def make_benchmark(cfg, seed):
    return generate_dataset(cfg.num_classes, cfg.train_per_class + cfg.test_per_class,
                            cfg.frames, cfg.joints, seed, test_per_class=cfg.test_per_class,
                            noise=cfg.noise, view_scale=cfg.view_scale, drift=cfg.drift)


def model_transform(model):
    return lambda s: va.transformed_joints(model, s)


def run_mode(name, cfg, train_set, test_set, seed):
    """Train one ablation mode; returns (name, accuracy, consistency ratio, model)."""
    tcfg = replace(cfg.train, mode=ABLATION_MODES[name], seed=seed)
    rng = np.random.default_rng(seed)
    model = va.init_model(tcfg, train_set.num_joints, train_set.num_classes, rng)
    va.train(model, train_set, tcfg, rng)
    acc, _ = va.evaluate(model, test_set)
    ratio = view_consistency_metric(groups_by_label(test_set), model_transform(model))
    return name, acc, ratio, model


def _run_mode_worker(args):
    name, acc, ratio, _ = run_mode(*args)
    return name, acc, ratio


def mode_seeds(seed, names):
    """Per-mode training seeds, fixed by the master seed and the mode's table position."""
    children = np.random.SeedSequence(seed).spawn(len(ABLATION_MODES) + 1)[1:]
    index = {n: i for i, n in enumerate(ABLATION_MODES)}
    return {n: int(children[index[n]].generate_state(1)[0]) for n in names}


def run_ablation(cfg, seed):
    """Train every mode on one synthetic split.

    Returns a list of ``(mode, test_accuracy, consistency_ratio)`` rows in
    table order.
    """
    unknown = set(cfg.modes) - set(ABLATION_MODES)
    if unknown:
        raise ValueError(f"unknown ablation modes {sorted(unknown)}")
    train_set, test_set, _ = make_benchmark(cfg, seed)
    seeds = mode_seeds(seed, cfg.modes)
    jobs = [(name, cfg, train_set, test_set, seeds[name]) for name in cfg.modes]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_run_mode_worker, jobs))
    else:
        rows = [_run_mode_worker(j) for j in jobs]
    return rows


def format_table(rows):
    """Tab-separated ``mode accuracy consistency_ratio`` records."""
    return "".join(f"{m}\t{a:.4f}\t{r:.6f}\n" for m, a, r in rows)


def bench_config_dict(cfg):
    d = asdict(cfg)
    d["modes"] = list(cfg.modes)
    return d
