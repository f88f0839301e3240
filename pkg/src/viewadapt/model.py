"""View-adaptive recurrent classifier.

Two single-layer LSTM branches read each (sequence-translated) skeleton frame
and regress a per-frame observation viewpoint: Euler angles from the rotation
branch and a translation from the translation branch.  The frame is
re-expressed in that viewpoint and fed to a three-layer LSTM stack whose
per-frame class scores are averaged over time.

Batches are padded to the longest sequence.  Because every layer is causal,
padded tail frames cannot influence the real ones; they are simply left out
of the temporal average, which makes a padded batch equivalent to running
each sequence on its own.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import geometry, nn
from .nn import TrainingDiverged
from .skeleton import preprocess, PREPROCESSORS

MODES = ("va-full", "va-rota", "va-trans") + tuple(f"baseline:{p}" for p in PREPROCESSORS)
AGGREGATIONS = ("mean", "last")
BRANCHES = ("rot", "trans")
MAIN_LAYERS = 3


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.005
    clip_norm: float = 1.0
    dropout_p: float = 0.5
    hidden: int = 100
    branch_hidden: int | None = None  # defaults to ``hidden``
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    aggregation: str = "mean"
    mask_padding: bool = True  # False: group equal-length sequences instead of padding
    mode: str = "va-full"

    def __post_init__(self):
        if self.hidden < 1 or (self.branch_hidden is not None and self.branch_hidden < 1):
            raise ValueError("hidden sizes must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.lr < 0 or self.clip_norm <= 0:
            raise ValueError("lr must be >= 0 and clip_norm > 0")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def switches(self):
        """(s_rota, s_trans) for the configured mode."""
        return {"va-full": (True, True), "va-rota": (True, False),
                "va-trans": (False, True)}.get(self.mode, (False, False))

    @property
    def preproc(self):
        return self.mode.split(":", 1)[1] if self.mode.startswith("baseline:") else "s-trans"


@dataclass
class VaModel:
    params: dict
    num_joints: int
    num_classes: int
    hidden: int
    branch_hidden: int
    s_rota: bool = True
    s_trans: bool = True
    preproc: str = "s-trans"
    aggregation: str = "mean"
    dropout_p: float = 0.5

    def active_params(self):
        """Names of parameters that influence the output under the current switches."""
        off = {b for b, on in zip(BRANCHES, (self.s_rota, self.s_trans)) if not on}
        return [k for k in self.params if k.split(".", 1)[0] not in off]

    def copy(self):
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


def _lstm(params, prefix):
    return {k: params[f"{prefix}.{k}"] for k in ("Wx", "Wh", "b")}


def init_model(config, num_joints, num_classes, rng):
    """Fresh model; the viewpoint regression heads start at exactly zero."""
    N = config.hidden
    Nb = config.branch_hidden or N
    D = 3 * num_joints
    params = {}
    for br in BRANCHES:
        for k, v in nn.lstm_init(D, Nb, rng).items():
            params[f"{br}.{k}"] = v
        params[f"{br}.fc.W"] = np.zeros((3, Nb))
        params[f"{br}.fc.b"] = np.zeros(3)
    for layer in range(MAIN_LAYERS):
        for k, v in nn.lstm_init(D if layer == 0 else N, N, rng).items():
            params[f"main{layer}.{k}"] = v
    k = 1.0 / np.sqrt(N)
    params["cls.W"] = rng.uniform(-k, k, size=(num_classes, N))
    params["cls.b"] = np.zeros(num_classes)
    s_rota, s_trans = config.switches
    return VaModel(params, num_joints, num_classes, N, Nb, s_rota, s_trans,
                   config.preproc, config.aggregation, config.dropout_p)


def _pad(seqs):
    lengths = np.array([s.num_frames for s in seqs])
    J = seqs[0].num_joints
    V = np.zeros((len(seqs), lengths.max(), J, 3))
    for b, s in enumerate(seqs):
        V[b, : s.num_frames] = s.joints
    return V, lengths


def _frame_weights(lengths, T, aggregation):
    w = np.zeros((len(lengths), T))
    for b, L in enumerate(lengths):
        if aggregation == "mean":
            w[b, :L] = 1.0 / L
        else:
            w[b, L - 1] = 1.0
    return w


def _first_bad_frame(*arrays):
    for a in arrays:
        bad = ~np.isfinite(a.reshape(a.shape[0], a.shape[1], -1)).all(axis=(0, 2))
        if bad.any():
            return int(np.argmax(bad))
    return None


def va_forward(model, seqs, training=False, rng=None):
    """Forward a batch of already-preprocessed sequences.

    Returns ``(logits (B, K), cache)``; ``cache["angles"]``, ``cache["d"]`` and
    ``cache["Vp"]`` hold the per-frame viewpoints and re-observed frames.
    """
    if hasattr(seqs, "joints"):
        seqs = [seqs]
    if any(s.num_joints != model.num_joints for s in seqs):
        raise ValueError(f"model expects {model.num_joints} joints")
    if training and model.dropout_p > 0 and rng is None:
        raise ValueError("training mode with dropout needs an rng")
    p = model.params
    V, lengths = _pad(seqs)
    B, T, J, _ = V.shape
    X = V.reshape(B, T, 3 * J)
    cache = {"V": V, "lengths": lengths}

    angles = np.zeros((B, T, 3))
    d = np.zeros((B, T, 3))
    if model.s_rota:
        Hr, cache["rot.lstm"] = nn.lstm_forward(_lstm(p, "rot"), X)
        angles = nn.fc_forward(p["rot.fc.W"], p["rot.fc.b"], Hr)
        cache["rot.h"] = Hr
    if model.s_trans:
        Hd, cache["trans.lstm"] = nn.lstm_forward(_lstm(p, "trans"), X)
        d = nn.fc_forward(p["trans.fc.W"], p["trans.fc.b"], Hd)
        cache["trans.h"] = Hd
    if model.s_rota or model.s_trans:
        bad = _first_bad_frame(angles, d)
        if bad is not None:
            raise NumericError(f"non-finite viewpoint at frame {bad}")
        Vp = geometry.transform_frame(V, geometry.compose_rotation(angles), d)
    else:
        Vp = V
    cache.update(angles=angles, d=d, Vp=Vp)

    h = Vp.reshape(B, T, 3 * J)
    for layer in range(MAIN_LAYERS):
        h, cache[f"main{layer}.lstm"] = nn.lstm_forward(_lstm(p, f"main{layer}"), h)
        h, cache[f"main{layer}.mask"] = nn.dropout(h, model.dropout_p, rng, training)
    cache["top"] = h
    frame_logits = nn.fc_forward(p["cls.W"], p["cls.b"], h)
    w = _frame_weights(lengths, T, model.aggregation)
    cache["w"] = w
    logits = np.einsum("bt,btk->bk", w, frame_logits)
    if not np.all(np.isfinite(logits)):
        bad = _first_bad_frame(frame_logits)
        raise NumericError(f"non-finite activation at frame {bad}")
    return logits, cache


def va_backward(model, cache, dlogits):
    """Gradients of a loss with upstream ``dlogits`` (B, K) for every active parameter."""
    p = model.params
    V, w = cache["V"], cache["w"]
    B, T, J, _ = V.shape
    grads = {}

    dframe = w[:, :, None] * dlogits[:, None, :]
    grads["cls.W"], grads["cls.b"], dh = nn.fc_backward(p["cls.W"], cache["top"], dframe)
    for layer in reversed(range(MAIN_LAYERS)):
        mask = cache[f"main{layer}.mask"]
        if mask is not None:
            dh = dh * mask
        g, dh = nn.lstm_backward(_lstm(p, f"main{layer}"), cache[f"main{layer}.lstm"], dh)
        for k, v in g.items():
            grads[f"main{layer}.{k}"] = v
    if not (model.s_rota or model.s_trans):
        return grads

    eps_vp = dh.reshape(B, T, J, 3)
    # the branches read the data V directly, so the gradient w.r.t. V is not needed
    eps_angles, eps_d, _ = geometry.backprop_transform(eps_vp, V, cache["angles"], cache["d"])
    for br, on, eps in (("rot", model.s_rota, eps_angles), ("trans", model.s_trans, eps_d)):
        if not on:
            continue
        grads[f"{br}.fc.W"], grads[f"{br}.fc.b"], dhb = nn.fc_backward(
            p[f"{br}.fc.W"], cache[f"{br}.h"], eps)
        g, _ = nn.lstm_backward(_lstm(p, br), cache[f"{br}.lstm"], dhb)
        for k, v in g.items():
            grads[f"{br}.{k}"] = v
    return grads


def loss_and_grads(model, seqs, labels, training=False, rng=None):
    """Mean cross-entropy over the batch, its gradients and the logits."""
    logits, cache = va_forward(model, seqs, training, rng)
    losses, dlogits = nn.softmax_cross_entropy(logits, np.asarray(labels))
    grads = va_backward(model, cache, dlogits / len(losses))
    return float(losses.mean()), grads, logits


def prepare(model, seqs):
    """Apply the model's input preprocessing to raw sequences."""
    return [preprocess(s, model.preproc) for s in seqs]


def _groups(seqs, mask_padding):
    if mask_padding:
        return [list(range(len(seqs)))]
    by_len = {}
    for i, s in enumerate(seqs):
        by_len.setdefault(s.num_frames, []).append(i)
    return [by_len[k] for k in sorted(by_len)]


def train_batch(model, seqs, adam, config, rng):
    """One optimizer step on a minibatch of preprocessed sequences.

    Returns (sum of per-sequence losses, number correct).
    """
    n = len(seqs)
    total = None
    loss_sum = 0.0
    correct = 0
    for idx in _groups(seqs, config.mask_padding):
        group = [seqs[i] for i in idx]
        labels = np.array([s.label for s in group])
        logits, cache = va_forward(model, group, True, rng)
        losses, dlogits = nn.softmax_cross_entropy(logits, labels)
        g = va_backward(model, cache, dlogits / n)
        total = g if total is None else {k: total[k] + g[k] for k in total}
        loss_sum += float(losses.sum())
        correct += int(np.sum(logits.argmax(axis=1) == labels))
    if not np.isfinite(loss_sum):
        raise TrainingDiverged("non-finite loss")
    total = nn.clip_global_norm(total, config.clip_norm)
    nn.adam_step(model.params, total, adam)
    return loss_sum, correct


def train(model, train_set, config, rng=None, adam=None, log=None):
    """Train in place.  Returns ``(model, adam_state, metrics)`` where metrics is a
    list of ``(epoch, mean_loss, train_accuracy)`` measured in training mode."""
    seqs = prepare(model, train_set.sequences)
    if not seqs:
        raise ValueError("empty training set")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if adam is None:
        adam = nn.AdamState(lr=config.lr)
    metrics = []
    n = len(seqs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            batch = [seqs[i] for i in order[start : start + config.batch_size]]
            try:
                ls, c = train_batch(model, batch, adam, config, rng)
            except (TrainingDiverged, NumericError) as exc:
                raise TrainingDiverged(f"epoch {epoch} batch {bi}: {exc}") from exc
            loss_sum += ls
            correct += c
        metrics.append((epoch, loss_sum / n, correct / n))
        if log is not None:
            log(*metrics[-1])
    return model, adam, metrics


def predict_logits(model, seqs, batch_size=256):
    seqs = prepare(model, seqs)
    out = []
    for start in range(0, len(seqs), batch_size):
        logits, _ = va_forward(model, seqs[start : start + batch_size])
        out.append(logits)
    return np.concatenate(out)


def evaluate(model, dataset):
    """Returns ``(accuracy, confusion)`` with confusion[true, predicted] counts."""
    if len(dataset.sequences) == 0:
        raise ValueError("empty dataset")
    pred = predict_logits(model, dataset.sequences).argmax(axis=1)
    K = model.num_classes
    conf = np.zeros((K, K), dtype=np.int64)
    for s, y in zip(dataset.sequences, pred):
        conf[s.label, y] += 1
    return float(np.trace(conf) / conf.sum()), conf


def transform_dump(model, seq):
    """Per-frame ``(t, angles, d, V'_t)`` from an eval-mode pass over one raw sequence."""
    (s,) = prepare(model, [seq])
    _, cache = va_forward(model, [s])
    return [(t, cache["angles"][0, t], cache["d"][0, t], cache["Vp"][0, t])
            for t in range(s.num_frames)]


def transformed_joints(model, seq):
    """The re-observed frames V' of one raw sequence, shape (T, J, 3)."""
    (s,) = prepare(model, [seq])
    _, cache = va_forward(model, [s])
    return cache["Vp"][0, : s.num_frames]
