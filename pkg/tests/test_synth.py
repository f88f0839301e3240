import itertools

import numpy as np
import pytest

from viewadapt import geometry, synth
from viewadapt.formats import write_native
from viewadapt.model import TrainConfig
from viewadapt.skeleton import SkeletonSequence


def kabsch_residual(A, B):
    """Max joint residual after the best rigid map of A onto B (both (n, 3))."""
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    U, _, Vt = np.linalg.svd((A - ca).T @ (B - cb))
    D = np.diag([1, 1, np.sign(np.linalg.det(U @ Vt))])
    R = U @ D @ Vt
    return np.abs((A - ca) @ R - (B - cb)).max()


def test_generate_is_deterministic():
    a = synth.generate_dataset(3, 6, 10, 15, seed=7)
    b = synth.generate_dataset(3, 6, 10, 15, seed=7)
    c = synth.generate_dataset(3, 6, 10, 15, seed=8)
    assert write_native(a[0]) == write_native(b[0]) and write_native(a[1]) == write_native(b[1])
    assert write_native(a[0]) != write_native(c[0])


def test_split_sizes_and_views():
    train, test, views = synth.generate_dataset(4, 9, 12, 15, seed=0, test_per_class=3)
    assert len(train) == 24 and len(test) == 12 and len(views) == 36
    assert np.bincount([s.label for s in test]).tolist() == [3, 3, 3, 3]
    assert train.num_joints == 15 and train.sequences[0].num_frames == 12
    for split, idx, label, view in views:
        ds = train if split == "train" else test
        assert ds.sequences[idx].label == label
        assert abs(view.angles[2]) <= np.pi and np.all(np.abs(view.angles[:2]) <= np.pi / 6)
        assert np.all(np.abs(view.d) <= 1.0)
    with pytest.raises(ValueError):
        synth.generate_dataset(0, 3, 5, 15, 0)


def test_zero_views_and_noise_give_identical_class_members():
    train, _, _ = synth.generate_dataset(3, 4, 8, 15, seed=2, noise=0.0, view_scale=0.0)
    for group in synth.groups_by_label(train):
        for s in group[1:]:
            np.testing.assert_array_equal(s.joints, group[0].joints)


def test_views_are_rigidly_related():
    train, _, _ = synth.generate_dataset(2, 5, 10, 15, seed=3, noise=0.0)
    for group in synth.groups_by_label(train):
        for a, b in itertools.combinations(group, 2):
            A, B = a.joints.reshape(-1, 3), b.joints.reshape(-1, 3)
            assert kabsch_residual(A, B) < 1e-9
            # and the views are really different
            assert np.abs(A - B).max() > 1e-3


def test_ground_truth_canonicalization():
    train, _, views = synth.generate_dataset(2, 4, 6, 15, seed=4, noise=0.0, test_per_class=0,
                                             drift=0.05)
    canon = {}
    for _, i, label, view in views:
        canon.setdefault(label, []).append(view.canonicalize(train.sequences[i].joints))
    for members in canon.values():
        for c in members[1:]:
            np.testing.assert_allclose(c, members[0], atol=1e-12)


def test_pairs_differ_in_whole_body_motion_only():
    rng = np.random.default_rng(0)
    specs = synth.class_motions(5, 20, 15, rng)
    assert [s.label for s in specs] == list(range(5))
    # pair (0, 1): same limbs, 1 turns about the vertical axis through the body center
    a, b = specs[0].joints(), specs[1].joints()
    assert abs(specs[1].turn) == synth.TURN_SWING and not specs[1].travel.any()
    np.testing.assert_allclose(a[0], b[0], atol=1e-15)
    axis = specs[0].base[0, :2]
    for fa, fb in zip(a, b):
        D0 = np.linalg.norm(fa[:, None] - fa[None], axis=-1)
        D1 = np.linalg.norm(fb[:, None] - fb[None], axis=-1)
        np.testing.assert_allclose(D1, D0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(fb[:, :2] - axis, axis=1),
                                   np.linalg.norm(fa[:, :2] - axis, axis=1), atol=1e-12)
        np.testing.assert_allclose(fb[:, 2], fa[:, 2], atol=1e-12)  # heights unchanged
    assert np.abs(a - b).max() > 0.1
    # pair (2, 3): 3 travels horizontally, limbs and orientation unchanged
    a, b = specs[2].joints(), specs[3].joints()
    assert specs[3].turn == 0 and specs[3].travel[2] == 0
    shift = b - a
    np.testing.assert_allclose(shift, np.repeat(shift[:, :1], 15, axis=1), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(shift[:, 0], axis=1).max(), synth.TRAVEL_SWING)
    assert specs[4].turn == 0 and not specs[4].travel.any()


def test_metric_identity_is_exactly_one():
    train, _, _ = synth.generate_dataset(3, 4, 6, 15, seed=5)
    groups = synth.groups_by_label(train)
    assert synth.view_consistency_metric(groups) == 1.0
    assert synth.view_consistency_metric(groups, lambda s: s.joints) == 1.0


def test_metric_ground_truth_inverse_is_zero():
    train, _, views = synth.generate_dataset(3, 4, 6, 15, seed=6, noise=0.0, test_per_class=0)
    index = {id(train.sequences[i]): v for _, i, _, v in views}
    ratio = synth.view_consistency_metric(synth.groups_by_label(train),
                                          lambda s: index[id(s)].canonicalize(s.joints))
    assert ratio < 1e-9


def test_metric_hand_computed():
    # two single-frame, one-joint sequences 2 apart; transform halves the gap
    a = SkeletonSequence(np.zeros((1, 1, 3)))
    b = SkeletonSequence(np.array([[[2.0, 0, 0]]]))
    assert synth.view_consistency_metric([[a, b]], lambda s: s.joints * 0.5) == 0.5


def test_metric_order_invariance():
    train, _, _ = synth.generate_dataset(4, 5, 6, 15, seed=7)
    groups = synth.groups_by_label(train)
    f = lambda s: s.joints * np.array([1.0, 0.5, 0.25])  # noqa: E731
    ref = synth.view_consistency_metric(groups, f)
    rng = np.random.default_rng(0)
    for _ in range(5):
        shuffled = [[groups[i][j] for j in rng.permutation(len(groups[i]))]
                    for i in rng.permutation(len(groups))]
        assert synth.view_consistency_metric(shuffled, f) == ref


def test_metric_errors():
    s = SkeletonSequence(np.zeros((2, 3, 3)))
    with pytest.raises(ValueError, match="two"):
        synth.view_consistency_metric([[s]])
    with pytest.raises(ValueError, match="share"):
        synth.view_consistency_metric([[s, SkeletonSequence(np.zeros((3, 3, 3)))]])


def test_view_spec_place_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(10):
        v = synth.sample_view(rng, drift=0.1)
        X = rng.normal(size=(4, 6, 3))
        np.testing.assert_allclose(v.canonicalize(v.place(X)), X, atol=1e-12)
        R = geometry.compose_rotation(v.angles)
        np.testing.assert_allclose(v.place(X)[0], X[0] @ R + v.d, atol=1e-12)


def test_mode_seeds_are_stable():
    a = synth.mode_seeds(0, list(synth.ABLATION_MODES))
    b = synth.mode_seeds(0, ["VA-full"])
    assert a["VA-full"] == b["VA-full"] and len(set(a.values())) == 9


def test_small_ablation_table():
    cfg = synth.BenchConfig(num_classes=2, train_per_class=3, test_per_class=2, frames=4,
                            joints=6)
    cfg.train = TrainConfig(hidden=4, epochs=1, batch_size=4)
    rows = synth.run_ablation(cfg, seed=0)
    assert [r[0] for r in rows] == list(synth.ABLATION_MODES)
    assert all(0 <= acc <= 1 and ratio > 0 for _, acc, ratio in rows)
    lines = synth.format_table(rows).splitlines()
    assert len(lines) == 9 and all(len(line.split("\t")) == 3 for line in lines)
    with pytest.raises(ValueError):
        synth.run_ablation(synth.BenchConfig(modes=("nope",)), 0)
