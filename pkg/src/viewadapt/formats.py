"""Reading and writing skeleton datasets.

Native text format (UTF-8, LF line endings)::

    VASKEL 1 <num_sequences> <num_classes> <J>
    SEQ <label> <T> [<subject> <camera> <setup>]
    <3*J floats, joint-major: x1 y1 z1 x2 ...>      (T lines)
    ...

Floats are written with 9 significant digits (``%.9g``).
"""

import math

import numpy as np

from .skeleton import Dataset, SkeletonLayout, SkeletonSequence

MAGIC = "VASKEL"
VERSION = 1
NTU_JOINTS = 25


class ParseError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def _fmt(x):
    return "%.9g" % x


def write_native(dataset):
    """Serialize a Dataset to its canonical native-format string."""
    J = dataset.num_joints
    out = [f"{MAGIC} {VERSION} {len(dataset)} {dataset.num_classes} {J}"]
    for seq in dataset:
        head = f"SEQ {seq.label} {seq.num_frames}"
        if seq.has_meta:
            head += f" {seq.subject} {seq.camera} {seq.setup}"
        out.append(head)
        for frame in seq.joints.reshape(seq.num_frames, 3 * J):
            out.append(" ".join(map(_fmt, frame)))
    return "\n".join(out) + "\n"


def _int(tok, what, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None


def parse_native(data, split="train", layout=None):
    """Parse native-format text (str or bytes) into a Dataset."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)

    head = lines[0].split()
    if len(head) != 5 or head[0] != MAGIC:
        raise ParseError(f"expected '{MAGIC} <version> <n> <classes> <J>' header", 1)
    if _int(head[1], "version", 1) != VERSION:
        raise ParseError(f"unsupported version {head[1]}", 1)
    n_seq = _int(head[2], "sequence count", 1)
    n_cls = _int(head[3], "class count", 1)
    J = _int(head[4], "joint count", 1)
    if n_seq < 1 or n_cls < 1 or J < 1:
        raise ParseError("sequence count, class count and J must be positive", 1)
    if layout is None:
        layout = SkeletonLayout.default(J)

    seqs = []
    i = 1
    for s in range(n_seq):
        if i >= len(lines):
            raise ParseError(f"missing sequence {s} (file truncated)", i + 1)
        tok = lines[i].split()
        if not tok or tok[0] != "SEQ" or len(tok) not in (3, 6):
            raise ParseError("expected 'SEQ <label> <T> [subject camera setup]'", i + 1)
        label = _int(tok[1], "label", i + 1)
        T = _int(tok[2], "frame count", i + 1)
        if T < 1:
            raise ParseError("frame count must be positive", i + 1)
        if not 0 <= label < n_cls:
            raise ParseError(f"label {label} outside [0, {n_cls})", i + 1)
        meta = [_int(t, "metadata", i + 1) for t in tok[3:]] or [None] * 3
        i += 1
        frames = np.empty((T, 3 * J))
        for t in range(T):
            lineno = i + 1
            if i >= len(lines):
                raise ParseError(f"sequence {s} frame {t}: file truncated", lineno)
            vals = lines[i].split(" ")
            if len(vals) != 3 * J:
                raise ParseError(
                    f"sequence {s} frame {t}: expected {J} joints, got {len(vals) / 3:g}", lineno)
            try:
                row = [float(v) for v in vals]
            except ValueError:
                raise ParseError(f"sequence {s} frame {t}: bad number", lineno) from None
            if not all(map(math.isfinite, row)):
                raise ParseError(f"sequence {s} frame {t}: non-finite value", lineno)
            frames[t] = row
            i += 1
        seqs.append(SkeletonSequence(frames.reshape(T, J, 3), label, *meta, layout=layout))
    if i != len(lines):
        raise ParseError("trailing content after the declared sequences", i + 1)
    return Dataset(seqs, n_cls, split=split, layout=layout)


def read_native(path, split="train", layout=None):
    with open(path, "rb") as f:
        return parse_native(f.read(), split=split, layout=layout)


def save_native(dataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_native(dataset))


# -- NTU RGB+D .skeleton -----------------------------------------------------

def parse_ntu_skeleton(data, label=0, merge_bodies=True):
    """Parse one NTU ``.skeleton`` file.

    With ``merge_bodies`` the result is a single sequence; when any frame has
    two bodies the two are concatenated (ascending tracking id, J=50) and a
    missing second body is zero-padded.  Otherwise one sequence per tracking
    id is returned, each spanning the frames in which that body appears.
    Extra per-joint fields (depth/colour projections, orientation, tracking
    state) are read and discarded.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    lines = [ln for ln in data.splitlines()]
    pos = 0

    def take():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file (truncated)", pos + 1)
        pos += 1
        return lines[pos - 1].split()

    def take_int(what):
        tok = take()
        if len(tok) != 1:
            raise ParseError(f"expected {what}", pos)
        return _int(tok[0], what, pos)

    n_frames = take_int("frame count")
    frames = []  # per frame: {body_id: (25, 3)}
    for f in range(n_frames):
        n_bodies = take_int("body count")
        bodies = {}
        for _ in range(n_bodies):
            meta = take()
            if not meta:
                raise ParseError("missing body metadata", pos)
            body_id = meta[0]
            nj = take_int("joint count")
            if nj != NTU_JOINTS:
                raise ParseError(f"frame {f}: joint count {nj} != {NTU_JOINTS}", pos)
            xyz = np.empty((NTU_JOINTS, 3))
            for j in range(NTU_JOINTS):
                tok = take()
                try:
                    xyz[j] = [float(v) for v in tok[:3]]
                    [float(v) for v in tok[3:]]
                except ValueError:
                    raise ParseError(f"frame {f} joint {j}: bad number", pos) from None
                if len(tok) < 3 or not np.all(np.isfinite(xyz[j])):
                    raise ParseError(f"frame {f} joint {j}: bad coordinates", pos)
            bodies[body_id] = xyz
        frames.append(bodies)

    ids = sorted({b for fr in frames for b in fr}, key=_id_key)
    if not ids:
        raise ParseError("no bodies in any frame (empty sequence)")

    if not merge_bodies:
        out = []
        for b in ids:
            joints = np.stack([fr[b] for fr in frames if b in fr])
            out.append(SkeletonSequence(joints, label, layout=SkeletonLayout.ntu(1)))
        return out

    if len(ids) == 1:
        joints = np.stack([fr.get(ids[0], np.zeros((NTU_JOINTS, 3))) for fr in frames])
        return SkeletonSequence(joints, label, layout=SkeletonLayout.ntu(1))
    if len(ids) > 2:
        # keep the two bodies seen in most frames
        counts = {b: sum(b in fr for fr in frames) for b in ids}
        ids = sorted(sorted(ids, key=lambda b: -counts[b])[:2], key=_id_key)
    zeros = np.zeros((NTU_JOINTS, 3))
    joints = np.stack([np.concatenate([fr.get(ids[0], zeros), fr.get(ids[1], zeros)])
                       for fr in frames])
    return SkeletonSequence(joints, label, layout=SkeletonLayout.ntu(2))


def _id_key(body_id):
    try:
        return (0, int(body_id))
    except ValueError:
        return (1, body_id)


def read_ntu_skeleton(path, label=0, merge_bodies=True):
    with open(path, "rb") as f:
        return parse_ntu_skeleton(f.read(), label=label, merge_bodies=merge_bodies)
