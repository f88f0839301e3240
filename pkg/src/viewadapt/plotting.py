"""Figures written next to the tab-separated outputs."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# bones of the synthetic 15-joint figure (see synth.TEMPLATE)
GENERIC_BONES = [(0, 1), (1, 4), (1, 2), (1, 3), (2, 5), (5, 6), (3, 7), (7, 8),
                 (0, 9), (9, 10), (10, 11), (0, 12), (12, 13), (13, 14)]
# Kinect v2, 0-based
NTU_BONES = [(0, 1), (1, 20), (20, 2), (2, 3), (20, 4), (4, 5), (5, 6), (6, 7), (7, 21),
             (7, 22), (20, 8), (8, 9), (9, 10), (10, 11), (11, 23), (11, 24), (0, 12),
             (12, 13), (13, 14), (14, 15), (0, 16), (16, 17), (17, 18), (18, 19)]

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 120,
}


def bones_for(J):
    if J == 15:
        return GENERIC_BONES
    if J % 25 == 0:
        return [(a + 25 * k, b + 25 * k) for k in range(J // 25) for a, b in NTU_BONES]
    return []


def _draw(ax, joints, bones, color):
    ax.scatter(joints[:, 0], joints[:, 1], joints[:, 2], s=6, color=color)
    for a, b in bones:
        if a < len(joints) and b < len(joints):
            ax.plot(*joints[[a, b]].T, color=color, lw=1)


def _equal_box(ax, pts):
    c = (pts.max(axis=0) + pts.min(axis=0)) / 2
    r = max((pts.max(axis=0) - pts.min(axis=0)).max() / 2, 1e-3)
    ax.set_xlim(c[0] - r, c[0] + r)
    ax.set_ylim(c[1] - r, c[1] + r)
    ax.set_zlim(c[2] - r, c[2] + r)


def plot_views(raw_seqs, transformed, path, frame=0, title=None):
    """Top row: input skeletons; bottom row: the same frames after re-observation.

    ``raw_seqs`` and ``transformed`` are sequences of (T, J, 3) arrays.
    """
    n = len(raw_seqs)
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(2.2 * n, 4.4))
        for row, (label, group) in enumerate((("input", raw_seqs), ("observed", transformed))):
            for i, joints in enumerate(group):
                ax = fig.add_subplot(2, n, row * n + i + 1, projection="3d")
                f = joints[min(frame, len(joints) - 1)]
                _draw(ax, f, bones_for(f.shape[0]), "C0" if row == 0 else "C3")
                _equal_box(ax, f)
                ax.set_xticks([])
                ax.set_yticks([])
                ax.set_zticks([])
                ax.set_title(f"{label} #{i}")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_ablation(rows, path):
    """Bar chart of test accuracy per mode with consistency ratio annotated."""
    names = [r[0] for r in rows]
    acc = np.array([r[1] for r in rows]) * 100
    ratio = [r[2] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        colors = ["C3" if n.startswith("VA") else "C0" for n in names]
        ax.bar(range(len(names)), acc, color=colors)
        for i, (a, r) in enumerate(zip(acc, ratio)):
            ax.text(i, a + 1, f"{r:.2f}", ha="center", va="bottom", fontsize=7)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=35, ha="right")
        ax.set_ylabel("test accuracy (%)")
        ax.set_ylim(0, 110)
        ax.set_title("accuracy per mode (numbers: view-consistency ratio)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_metrics(metrics, path):
    ep = [m[0] for m in metrics]
    with plt.rc_context(STYLE):
        fig, ax1 = plt.subplots(figsize=(4.5, 3))
        ax1.plot(ep, [m[1] for m in metrics], "C0-")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("train loss", color="C0")
        ax1.set_yscale("log")
        ax2 = ax1.twinx()
        ax2.plot(ep, [m[2] for m in metrics], "C1--")
        ax2.set_ylabel("train accuracy", color="C1")
        ax2.set_ylim(0, 1.05)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
