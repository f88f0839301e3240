"""Small recurrent-network kernel with hand-written gradients.

Everything works on float64 numpy arrays with a leading batch axis; a single
example is just a batch of one.  Parameters are plain dicts of arrays so the
optimizer and checkpoint code can treat a whole model as ``{name: array}``.

LSTM gate order inside the stacked weight matrices is (input, forget,
cell candidate, output), no peepholes.
"""

from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(FloatingPointError):
    pass


def sigmoid(x):
    # tanh form saturates cleanly instead of overflowing exp
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


# -- LSTM ---------------------------------------------------------------------

def lstm_init(input_size, hidden_size, rng, forget_bias=1.0):
    k = 1.0 / np.sqrt(hidden_size)
    N = hidden_size
    b = np.zeros(4 * N)
    b[N:2 * N] = forget_bias
    return {
        "Wx": rng.uniform(-k, k, size=(4 * N, input_size)),
        "Wh": rng.uniform(-k, k, size=(4 * N, N)),
        "b": b,
    }


def _check_lstm(p, D):
    N4, Dw = p["Wx"].shape
    if Dw != D or p["Wh"].shape != (N4, N4 // 4) or p["b"].shape != (N4,):
        raise ValueError(f"LSTM parameter shapes {p['Wx'].shape}/{p['Wh'].shape}/{p['b'].shape} "
                         f"do not fit input size {D}")


def lstm_step_forward(p, x, state=None):
    """One time step.  ``x`` is (B, D) or (D,); ``state`` is (h, c) or None for zeros.

    Returns ``(h, (h, c), cache)``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    _check_lstm(p, x.shape[1])
    N = p["Wh"].shape[1]
    if state is None:
        h_prev = np.zeros((x.shape[0], N))
        c_prev = np.zeros((x.shape[0], N))
    else:
        h_prev, c_prev = (np.atleast_2d(s) for s in state)
    a = x @ p["Wx"].T + h_prev @ p["Wh"].T + p["b"]
    i = sigmoid(a[:, :N])
    f = sigmoid(a[:, N:2 * N])
    g = np.tanh(a[:, 2 * N:3 * N])
    o = sigmoid(a[:, 3 * N:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, h_prev, c_prev, i, f, g, o, tc)
    if single:
        h, c = h[0], c[0]
    return h, (h, c), cache


def lstm_forward(p, X):
    """Run a layer over ``X`` of shape (B, T, D) from a zero state.

    Returns ``(H, cache)`` with H of shape (B, T, N).
    """
    X = np.asarray(X, dtype=np.float64)
    B, T, D = X.shape
    _check_lstm(p, D)
    N = p["Wh"].shape[1]
    # input projection for all steps in one matmul
    A_in = X @ p["Wx"].T + p["b"]
    Wh_T = p["Wh"].T
    H = np.empty((B, T, N))
    C = np.empty((B, T, N))
    gates = np.empty((B, T, 4 * N))
    h = np.zeros((B, N))
    c = np.zeros((B, N))
    for t in range(T):
        a = A_in[:, t] + h @ Wh_T
        i = sigmoid(a[:, :N])
        f = sigmoid(a[:, N:2 * N])
        g = np.tanh(a[:, 2 * N:3 * N])
        o = sigmoid(a[:, 3 * N:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :N] = i
        gates[:, t, N:2 * N] = f
        gates[:, t, 2 * N:3 * N] = g
        gates[:, t, 3 * N:] = o
        C[:, t] = c
        H[:, t] = h
    return H, (X, H, C, gates)


def lstm_backward(p, cache, dH):
    """Backpropagation through time for :func:`lstm_forward`.

    Returns ``(grads, dX)``; the zero initial state receives no gradient.
    """
    X, H, C, gates = cache
    B, T, N = H.shape
    if dH.shape != H.shape:
        raise ValueError(f"upstream gradient shape {dH.shape} != output shape {H.shape}")
    Wh = p["Wh"]
    dA = np.empty((B, T, 4 * N))
    dh_next = np.zeros((B, N))
    dc_next = np.zeros((B, N))
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :N]
        f = gates[:, t, N:2 * N]
        g = gates[:, t, 2 * N:3 * N]
        o = gates[:, t, 3 * N:]
        tc = np.tanh(C[:, t])
        c_prev = C[:, t - 1] if t > 0 else 0.0
        dh = dH[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dA[:, t, :N] = dc * g * i * (1.0 - i)
        dA[:, t, N:2 * N] = dc * c_prev * f * (1.0 - f)
        dA[:, t, 2 * N:3 * N] = dc * i * (1.0 - g * g)
        dA[:, t, 3 * N:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dA[:, t] @ Wh
    H_prev = np.concatenate([np.zeros((B, 1, N)), H[:, :-1]], axis=1)
    dA2 = dA.reshape(B * T, 4 * N)
    grads = {
        "Wx": dA2.T @ X.reshape(B * T, -1),
        "Wh": dA2.T @ H_prev.reshape(B * T, N),
        "b": dA2.sum(axis=0),
    }
    dX = dA @ p["Wx"]
    return grads, dX


def lstm_sequence_backward(p, step_caches, grad_h_sequence):
    """BPTT over a list of caches produced by repeated :func:`lstm_step_forward`.

    ``grad_h_sequence`` holds one (B, N) upstream gradient per step.
    """
    if len(step_caches) != len(grad_h_sequence):
        raise ValueError(f"{len(step_caches)} caches but {len(grad_h_sequence)} gradients")
    X = np.stack([c[0] for c in step_caches], axis=1)
    gates = np.stack([np.concatenate(c[3:7], axis=1) for c in step_caches], axis=1)
    tc = np.stack([c[7] for c in step_caches], axis=1)
    H = gates[..., 3 * tc.shape[-1]:] * tc
    # recover c from the cache chain: c_t is the next step's c_prev
    c_last = step_caches[-1][4] * step_caches[-1][2] + step_caches[-1][3] * step_caches[-1][5]
    C = np.stack([c[2] for c in step_caches[1:]] + [c_last], axis=1)
    dH = np.stack([np.atleast_2d(g) for g in grad_h_sequence], axis=1)
    return lstm_backward(p, (X, H, C, gates), dH)


# -- fully connected ----------------------------------------------------------

def fc_forward(W, b, x):
    return x @ W.T + b


def fc_backward(W, x, grad_y):
    """Gradients of y = W x + b; leading axes of x and grad_y are summed over."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_y.reshape(-1, grad_y.shape[-1])
    return g2.T @ x2, g2.sum(axis=0), grad_y @ W


# -- dropout ------------------------------------------------------------------

def dropout(x, p, rng, training=True):
    """Inverted dropout.  Returns ``(y, mask)``; backward is ``grad * mask``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


# -- loss ---------------------------------------------------------------------

def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss and gradient w.r.t. the logits.

    ``logits`` is (K,) with an int label, or (B, K) with a length-B label array
    (per-example losses are returned, not averaged).
    """
    logits = np.asarray(logits, dtype=np.float64)
    label = np.asarray(label)
    K = logits.shape[-1]
    if np.any(label < 0) or np.any(label >= K):
        raise ValueError(f"label out of range for {K} classes")
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, label[..., None], axis=-1)[..., 0]
    loss = logsum - picked
    grad = np.exp(z - logsum[..., None])
    np.put_along_axis(grad, label[..., None],
                      np.take_along_axis(grad, label[..., None], axis=-1) - 1.0, axis=-1)
    return loss, grad


# -- optimisation ---------------------------------------------------------------

def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads, max_norm=1.0):
    """Rescale all gradients jointly so their combined L2 norm is <= max_norm."""
    total = global_norm(grads)
    if not np.isfinite(total):
        raise TrainingDiverged("non-finite gradient")
    if total <= max_norm:
        return dict(grads)
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Bias-corrected Adam update of ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    updates = {}
    for k, g in grads.items():
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(step)):
            raise TrainingDiverged(f"non-finite Adam update for {k}")
        updates[k] = step
    for k, step in updates.items():
        params[k] -= step
    return params
