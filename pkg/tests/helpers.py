"""Shared oracles for the bounds test suite.

Member sampling draws concrete networks/inputs/labels from their interval
sets and evaluates the exact quantities with a vectorized straight-line
implementation that is independent of the bounds engine.
"""

import numpy as np

from agt_cert.bounds import ParamBox
from agt_cert.network import DenseReluNetwork, LossKind

TOL = 1e-9


def random_net(rng, dims, scale=1.0):
    ws = [rng.normal(scale=scale / np.sqrt(i), size=(o, i))
          for i, o in zip(dims[:-1], dims[1:])]
    bs = [rng.normal(scale=0.3, size=o) for o in dims[1:]]
    return DenseReluNetwork(ws, bs)


def random_box(rng, net, rel_radius=0.1):
    """Box around net with per-parameter radius rel_radius * (|theta| + 0.1)."""
    wp, bp = [], []
    for w in net.weights:
        r = rel_radius * (np.abs(w) + 0.1) * rng.uniform(size=w.shape)
        wp.append((w - r, w + r))
    for b in net.biases:
        r = rel_radius * (np.abs(b) + 0.1) * rng.uniform(size=b.shape)
        bp.append((b - r, b + r))
    return ParamBox.from_arrays(net, wp, bp)


def sample_box_members(rng, box, n):
    """n member parameter sets, stacked: Ws[k] (n, nk, nk-1), bs[k] (n, nk)."""
    Ws, bs = [], []
    for w in box.weights:
        u = rng.uniform(size=(n,) + w.lo.shape)
        Ws.append(w.lo + u * (w.hi - w.lo))
    for b in box.biases:
        u = rng.uniform(size=(n,) + b.lo.shape)
        bs.append(b.lo + u * (b.hi - b.lo))
    return Ws, bs


def member_forward(Ws, bs, X):
    """Per-member forward pass.  X: (n, n_in).  Returns (pres, acts)."""
    K = len(Ws)
    acts = [X]
    pres = []
    cur = X
    for k in range(K):
        pre = np.einsum("sij,sj->si", Ws[k], cur) + bs[k]
        pres.append(pre)
        if k < K - 1:
            cur = np.maximum(pre, 0.0)
            acts.append(cur)
    return pres, acts


def member_grads(Ws, delta, pres, acts):
    """Per-member backprop from dL/dlogits = delta: (n, n_out)."""
    K = len(Ws)
    dWs = [None] * K
    dbs = [None] * K
    for k in range(K - 1, -1, -1):
        dWs[k] = np.einsum("si,sj->sij", delta, acts[k])
        dbs[k] = delta
        if k > 0:
            delta = np.einsum("si,sij->sj", delta, Ws[k]) * (pres[k - 1] > 0)
    return dWs, dbs


def member_loss_delta(logits, labels, loss, n_out):
    """Exact dL/dlogits for concrete members."""
    if loss is LossKind.MSE:
        return 2.0 * (logits - labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(p)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return p - onehot


def member_losses(logits, labels, loss):
    if loss is LossKind.MSE:
        return ((logits - labels) ** 2).sum(axis=1)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    return logz - logits[np.arange(labels.shape[0]), labels]


def contained(values, lo, hi, tol=TOL):
    return bool(np.all(values >= lo - tol) and np.all(values <= hi + tol))
