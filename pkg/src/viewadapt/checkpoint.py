"""Binary checkpoints.

Layout (little-endian)::

    b"VASK" | u32 version | u32 n | n * tensor
    [ b"ADAM" | u32 m | m * tensor ]
    u32 crc32 of every preceding byte

    tensor = u16 name_len | name (UTF-8) | u8 rank | u32 dims[rank] | f64 data

Model hyperparameters travel as ``meta.*`` tensors so the file needs no
second encoding.
"""

import struct
import zlib

import numpy as np

from . import model as va
from .nn import AdamState
from .skeleton import PREPROCESSORS

MAGIC = b"VASK"
ADAM_TAG = b"ADAM"
VERSION = 1
_PREPROCS = list(PREPROCESSORS)


class CheckpointError(ValueError):
    pass


def _pack_tensor(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def _pack_section(tensors):
    return struct.pack("<I", len(tensors)) + b"".join(_pack_tensor(k, v) for k, v in tensors.items())


def _meta(model):
    return {
        "meta.shape": np.array([model.num_joints, model.num_classes,
                                model.hidden, model.branch_hidden], dtype=float),
        "meta.switches": np.array([model.s_rota, model.s_trans], dtype=float),
        "meta.preproc": np.array([_PREPROCS.index(model.preproc)], dtype=float),
        "meta.aggregation": np.array([va.AGGREGATIONS.index(model.aggregation)], dtype=float),
        "meta.dropout_p": np.array([model.dropout_p]),
    }


def dumps(model, adam=None):
    body = MAGIC + struct.pack("<I", VERSION)
    body += _pack_section({**_meta(model), **model.params})
    if adam is not None:
        tensors = {"state": np.array([adam.t, adam.lr, adam.beta1, adam.beta2, adam.eps])}
        for k in adam.m:
            tensors[f"m.{k}"] = adam.m[k]
            tensors[f"v.{k}"] = adam.v[k]
        body += ADAM_TAG + _pack_section(tensors)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model, path, adam=None):
    with open(path, "wb") as f:
        f.write(dumps(model, adam))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensor(self):
        (n,) = self.unpack("<H")
        try:
            name = self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("tensor name is not UTF-8") from None
        (rank,) = self.unpack("<B")
        dims = self.unpack(f"<{rank}I")
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)
        return name, data.reshape(dims)

    def section(self):
        (n,) = self.unpack("<I")
        out = {}
        for _ in range(n):
            k, v = self.tensor()
            out[k] = v
        return out


def loads(buf):
    """Parse checkpoint bytes into ``(model, adam_state_or_None)``."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    if len(buf) < 12:
        raise CheckpointError("truncated checkpoint")
    (crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != crc:
        raise CheckpointError("checksum mismatch (corrupted or truncated file)")
    r = _Reader(buf[:-4])
    r.take(4)
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = r.section()
    adam = None
    if r.pos < len(r.buf):
        if r.take(4) != ADAM_TAG:
            raise CheckpointError("unexpected trailing section")
        adam = _adam_from(r.section())
    if r.pos != len(r.buf):
        raise CheckpointError("trailing bytes after last section")
    return _model_from(tensors), adam


def load_checkpoint(path):
    with open(path, "rb") as f:
        return loads(f.read())


def _model_from(tensors):
    try:
        J, K, N, Nb = (int(x) for x in tensors.pop("meta.shape"))
        s_rota, s_trans = (bool(x) for x in tensors.pop("meta.switches"))
        preproc = _PREPROCS[int(tensors.pop("meta.preproc")[0])]
        aggregation = va.AGGREGATIONS[int(tensors.pop("meta.aggregation")[0])]
        dropout_p = float(tensors.pop("meta.dropout_p")[0])
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckpointError(f"missing or invalid metadata: {exc}") from None
    m = va.VaModel(tensors, J, K, N, Nb, s_rota, s_trans, preproc, aggregation, dropout_p)
    expected = _expected_shapes(J, K, N, Nb)
    if set(tensors) != set(expected):
        raise CheckpointError(f"parameter names disagree with header: "
                              f"{sorted(set(tensors) ^ set(expected))}")
    for k, shape in expected.items():
        if tensors[k].shape != shape:
            raise CheckpointError(f"{k} has shape {tensors[k].shape}, header implies {shape}")
    return m


def _expected_shapes(J, K, N, Nb):
    D = 3 * J
    shapes = {}
    for br in va.BRANCHES:
        shapes.update({f"{br}.Wx": (4 * Nb, D), f"{br}.Wh": (4 * Nb, Nb), f"{br}.b": (4 * Nb,),
                       f"{br}.fc.W": (3, Nb), f"{br}.fc.b": (3,)})
    for layer in range(va.MAIN_LAYERS):
        Din = D if layer == 0 else N
        shapes.update({f"main{layer}.Wx": (4 * N, Din), f"main{layer}.Wh": (4 * N, N),
                       f"main{layer}.b": (4 * N,)})
    shapes.update({"cls.W": (K, N), "cls.b": (K,)})
    return shapes


def _adam_from(tensors):
    try:
        t, lr, b1, b2, eps = tensors.pop("state")
    except (KeyError, ValueError):
        raise CheckpointError("ADAM section lacks a valid state tensor") from None
    state = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps), t=int(t))
    for k, v in tensors.items():
        kind, _, name = k.partition(".")
        if kind == "m":
            state.m[name] = v
        elif kind == "v":
            state.v[name] = v
        else:
            raise CheckpointError(f"unexpected tensor {k!r} in ADAM section")
    return state
