"""Central finite-difference checks of the hand-written gradients."""

import numpy as np

from . import model as va
from .skeleton import SkeletonSequence

STEP = 1e-5
TOLERANCE = 1e-4


def numeric_grad(f, x, h=STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of array ``x`` (in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    """||a - n|| / max(||a|| + ||n||, tiny): scale-free, robust to tiny entries."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom < 1e-300:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def random_problem(seed=0, J=5, T=4, N=8, K=3, batch=2):
    """A small VA model with non-zero viewpoint heads plus a random batch."""
    rng = np.random.default_rng(seed)
    cfg = va.TrainConfig(hidden=N, dropout_p=0.0, mode="va-full")
    model = va.init_model(cfg, J, K, rng)
    for br in va.BRANCHES:
        model.params[f"{br}.fc.W"] = rng.uniform(-0.5, 0.5, size=(3, N))
        model.params[f"{br}.fc.b"] = rng.uniform(-0.3, 0.3, size=3)
    seqs = [SkeletonSequence(rng.normal(scale=0.5, size=(T, J, 3)), int(rng.integers(K)))
            for _ in range(batch)]
    return model, seqs


def check_model(model, seqs, corrupt=None, h=STEP):
    """Compare analytic and numeric gradients for every active parameter group.

    Returns ``{group: max relative error}``.  ``corrupt`` names a group whose
    analytic gradient is deliberately perturbed (negative control).
    """
    labels = [s.label for s in seqs]
    _, grads, _ = va.loss_and_grads(model, seqs, labels)
    if corrupt is not None:
        if corrupt not in grads:
            raise KeyError(f"unknown parameter group {corrupt!r}")
        grads[corrupt] = grads[corrupt] * 1.01 + 1e-3

    def loss():
        return va.loss_and_grads(model, seqs, labels)[0]

    report = {}
    for name in model.active_params():
        num = numeric_grad(loss, model.params[name], h)
        report[name] = rel_error(grads[name], num)
    return report


def run(seed=0, J=5, T=4, N=8, K=3, corrupt=None):
    model, seqs = random_problem(seed, J, T, N, K)
    return check_model(model, seqs, corrupt=corrupt)
