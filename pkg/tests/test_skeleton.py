import numpy as np
import pytest

from viewadapt import geometry as geo
from viewadapt.skeleton import (
    DegeneratePoseError, DegeneratePoseWarning, SkeletonLayout, SkeletonSequence,
    downsample_temporal, f_rota, f_trans, preprocess, PREPROCESSORS,
    rota_params_from_frame, s_rota, s_trans,
)
from viewadapt.synth import TEMPLATE

LAYOUT = SkeletonLayout(15)


def random_seq(seed=0, T=8, J=15, view=True):
    """Template body with joint jitter, placed under a random view."""
    rng = np.random.default_rng(seed)
    joints = TEMPLATE[None, :J] + rng.normal(scale=0.05, size=(T, J, 3))
    if view:
        R = geo.compose_rotation(rng.uniform(-np.pi, np.pi, 3))
        joints = joints @ R + rng.normal(size=3)
    return SkeletonSequence(joints, label=2, subject=1, camera=2, setup=3, layout=LAYOUT)


def pairwise(frame):
    return np.linalg.norm(frame[:, None] - frame[None], axis=-1)


def shoulder(frame, lay=LAYOUT):
    return frame[lay.right_shoulder] - frame[lay.left_shoulder]


def test_layout_validation():
    with pytest.raises(ValueError):
        SkeletonLayout(10, spine=2)  # spine == left shoulder
    with pytest.raises(ValueError):
        SkeletonLayout(3, right_shoulder=3)
    lay = SkeletonLayout.default(25)
    assert lay.name == "ntu1" and lay.spine == 20
    assert SkeletonLayout.default(50).joint_count == 50


def test_sequence_validation():
    with pytest.raises(ValueError):
        SkeletonSequence(np.zeros((0, 3, 3)))
    with pytest.raises(ValueError):
        SkeletonSequence(np.full((2, 4, 3), np.inf))
    with pytest.raises(ValueError):
        SkeletonSequence(np.zeros((2, 4, 3)), layout=SkeletonLayout(5))


def test_s_trans():
    seq = random_seq()
    out = s_trans(seq)
    assert np.all(out.joints[0, LAYOUT.body_center] == 0)
    np.testing.assert_allclose(np.diff(out.joints, axis=0), np.diff(seq.joints, axis=0),
                               atol=1e-12)
    np.testing.assert_array_equal(s_trans(out).joints, out.joints)


def test_f_trans():
    seq = random_seq()
    out = f_trans(seq)
    assert np.all(out.joints[:, LAYOUT.body_center] == 0)
    np.testing.assert_array_equal(f_trans(out).joints, out.joints)
    # pure translation motion becomes static
    drift = np.cumsum(np.ones((8, 1, 3)) * 0.1, axis=0)
    moving = seq.with_joints(np.repeat(seq.joints[:1], 8, axis=0) + drift)
    still = f_trans(moving).joints
    np.testing.assert_allclose(still, np.repeat(still[:1], 8, axis=0), atol=1e-12)


def test_rota_params_axis_aligned_is_identity():
    frame = np.zeros((15, 3))
    frame[1] = [0, 0.5, 0]      # spine straight up +Y
    frame[2] = [-0.2, 0.45, 0]  # shoulders along +X
    frame[3] = [0.2, 0.45, 0]
    np.testing.assert_allclose(rota_params_from_frame(frame, LAYOUT), np.eye(3), atol=1e-12)


def test_rota_params_postconditions():
    for seed in range(50):
        frame = random_seq(seed).joints[0]
        R = rota_params_from_frame(frame, LAYOUT)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(R) - 1) < 1e-12
        s = R @ shoulder(frame)
        assert abs(s[1]) < 1e-9 and abs(s[2]) < 1e-9 and s[0] > 0
        sp = R @ (frame[LAYOUT.spine] - frame[LAYOUT.spine_base])
        assert abs(sp[2]) < 1e-9 and sp[1] > 0


def test_rota_params_degenerate():
    frame = np.zeros((15, 3))
    with pytest.raises(DegeneratePoseError):
        rota_params_from_frame(frame, LAYOUT)
    frame = TEMPLATE.copy()
    frame[1] = frame[0] + (frame[3] - frame[2])  # spine parallel to shoulders
    with pytest.raises(DegeneratePoseError):
        rota_params_from_frame(frame, LAYOUT)


def test_degenerate_fallback_warns_and_keeps_frame():
    seq = SkeletonSequence(np.zeros((3, 15, 3)), layout=LAYOUT)
    with pytest.warns(DegeneratePoseWarning):
        out = s_rota(seq)
    np.testing.assert_array_equal(out.joints, seq.joints)


def test_s_rota():
    seq = s_trans(random_seq(1))
    out = s_rota(seq)
    s = shoulder(out.joints[0])
    assert abs(s[1]) < 1e-9 and abs(s[2]) < 1e-9 and s[0] > 0
    # one rigid motion for the whole sequence: cross-frame distances survive
    a = seq.joints.reshape(-1, 3)
    b = out.joints.reshape(-1, 3)
    np.testing.assert_allclose(pairwise(b), pairwise(a), rtol=1e-9, atol=1e-12)
    again = s_rota(out)
    np.testing.assert_allclose(again.joints, out.joints, atol=1e-9)


def test_f_rota():
    out = f_rota(random_seq(2))
    for frame in out.joints:
        s = shoulder(frame)
        assert abs(s[1]) < 1e-9 and abs(s[2]) < 1e-9 and s[0] > 0


@pytest.mark.parametrize("name", sorted(PREPROCESSORS))
def test_preprocessing_preserves_structure(name):
    seq = random_seq(3)
    out = preprocess(seq, name)
    assert out.joints.shape == seq.joints.shape
    assert (out.label, out.subject, out.camera, out.setup) == (2, 1, 2, 3)
    for f0, f1 in zip(seq.joints, out.joints):
        np.testing.assert_allclose(pairwise(f1), pairwise(f0), rtol=1e-9, atol=1e-12)


def test_preprocess_unknown():
    with pytest.raises(ValueError):
        preprocess(random_seq(), "z-rota")


def test_downsample():
    seq = SkeletonSequence(np.arange(9 * 4 * 3, dtype=float).reshape(9, 4, 3))
    assert downsample_temporal(seq, 10) is seq
    out = downsample_temporal(seq, 3)
    np.testing.assert_array_equal(out.joints, seq.joints[[0, 4, 8]])
    np.testing.assert_array_equal(downsample_temporal(seq, 1).joints, seq.joints[:1])
    ten = SkeletonSequence(np.zeros((10, 4, 3)))
    assert downsample_temporal(ten, 10).num_frames == 10
    with pytest.raises(ValueError):
        downsample_temporal(seq, 0)
