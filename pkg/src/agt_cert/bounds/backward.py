"""Interval enclosures of the backward pass and the full gradient pipeline.

The backward pass pushes the loss-gradient interval through the layers
with interval arithmetic only: transposed interval weight products for
the flow into earlier layers, a per-neuron Heaviside gate interval for
each ReLU, and interval outer products against the forward post-activation
enclosures for the weight gradients.

The Heaviside gate over a pre-activation interval [l, u] is [H(l), H(u)]
with the endpoint conventions H(u)=1 iff u >= 0 on the upper gate and
H(l)=1 iff l > 0 on the lower gate, so an endpoint exactly at zero always
yields the gate [0, 1], which covers either subgradient choice.
"""

from __future__ import annotations

import numpy as np

from ..intervals import IntervalError, IntervalVector, _arr_elemmul, _arr_matmul
from ..network import LossKind, _one_hot
from .box import GradBounds, LayerBounds, ParamBox
from .forward import forward_bounds_arrays
from .losses import ce_grad_bounds_arrays, mse_grad_bounds_arrays


def backward_bounds_arrays(box: ParamBox, pre, post, x_lo, x_hi, g_lo, g_hi) -> GradBounds:
    """Batched engine: g_lo/g_hi bound d(loss)/d(logits), (batch, n_out)."""
    K = box.n_layers
    w_lo = [w.lo for w in box.weights]
    w_hi = [w.hi for w in box.weights]
    dw_lo = [None] * K
    dw_hi = [None] * K
    db_lo = [None] * K
    db_hi = [None] * K
    cur_lo, cur_hi = g_lo, g_hi
    for k in range(K - 1, -1, -1):
        z_lo, z_hi = (x_lo, x_hi) if k == 0 else post[k - 1]
        olo, ohi = _arr_elemmul(cur_lo[:, :, None], cur_hi[:, :, None],
                                z_lo[:, None, :], z_hi[:, None, :])
        dw_lo[k], dw_hi[k] = olo, ohi
        db_lo[k], db_hi[k] = cur_lo, cur_hi
        if k > 0:
            dz_lo, dz_hi = _arr_matmul(cur_lo, cur_hi, w_lo[k], w_hi[k])
            p_lo, p_hi = pre[k - 1]
            gate_lo = (p_lo > 0).astype(np.float64)
            gate_hi = (p_hi >= 0).astype(np.float64)
            cur_lo, cur_hi = _arr_elemmul(gate_lo, gate_hi, dz_lo, dz_hi)
    return GradBounds(dw_lo, dw_hi, db_lo, db_hi)


def backward_bounds(box: ParamBox, layer_bounds: LayerBounds,
                    dl_dlogits: IntervalVector) -> GradBounds:
    """Single-sample gradient enclosure given a forward bounding pass."""
    if dl_dlogits.lo.shape != layer_bounds.logits.lo.shape:
        raise IntervalError("loss-gradient shape does not match the logit bounds")
    pre = [(iv.lo[None, :], iv.hi[None, :]) for iv in layer_bounds.pre]
    post = [(iv.lo[None, :], iv.hi[None, :]) for iv in layer_bounds.post]
    return backward_bounds_arrays(
        box, pre, post,
        layer_bounds.input.lo[None, :], layer_bounds.input.hi[None, :],
        dl_dlogits.lo[None, :], dl_dlogits.hi[None, :],
    )


def _loss_grad_arrays(loss: LossKind, n_out: int, y_lo, y_hi, labels, nu, flip):
    if loss is LossKind.MSE:
        targets = np.atleast_2d(np.asarray(labels, dtype=np.float64))
        if targets.shape != y_lo.shape:
            raise IntervalError(f"MSE labels shape {targets.shape} != logits {y_lo.shape}")
        return mse_grad_bounds_arrays(y_lo, y_hi, targets, nu)
    onehot = _one_hot(np.asarray(labels), n_out)
    return ce_grad_bounds_arrays(y_lo, y_hi, onehot, flip)


def gradient_bounds_batch(box: ParamBox, X, labels, loss: LossKind,
                          eps=0.0, nu=0.0, flip=False,
                          method: str = "ibp") -> GradBounds:
    """Gradient enclosures for a batch with per-row perturbation budgets.

    eps gives each row's sup-norm feature radius; nu (MSE) each row's
    label radius; flip (cross-entropy) marks rows whose label may be
    replaced.  Zeros/False give clean-sample bounds where only the
    parameter box varies.
    """
    X = np.asarray(X, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (X.shape[0],))
    if np.any(eps < 0):
        raise IntervalError("feature radius eps must be nonnegative")
    x_lo = X - eps[:, None]
    x_hi = X + eps[:, None]
    pre, post = forward_bounds_arrays(box, x_lo, x_hi, method)
    y_lo, y_hi = pre[-1]
    g_lo, g_hi = _loss_grad_arrays(loss, box.nominal.n_out, y_lo, y_hi, labels, nu, flip)
    return backward_bounds_arrays(box, pre, post, x_lo, x_hi, g_lo, g_hi)


def grad_bounds_sample(box: ParamBox, x, y, eps: float, nu: float, loss: LossKind,
                       p: float = np.inf, q: float | None = None,
                       method: str = "ibp"):
    """Clean and poisoned gradient enclosures for one sample.

    Returns (clean, poisoned) GradBounds (batch dimension 1): the clean
    pair bounds the gradient over the parameter box alone; the poisoned
    pair additionally ranges the features over the eps-ball and the label
    over the nu-ball (MSE, q=inf) or the flip set (cross-entropy, q=0,
    active when nu > 0).  The poisoned intervals always enclose the clean
    ones.
    """
    if eps < 0 or nu < 0:
        raise IntervalError("eps and nu must be nonnegative")
    if not np.isinf(p):
        raise IntervalError(f"only p=inf feature balls are supported, got p={p}")
    if q is None:
        q = np.inf if loss is LossKind.MSE else 0
    if loss is LossKind.MSE and not np.isinf(q):
        raise IntervalError("MSE label balls require q=inf")
    if loss is LossKind.CROSS_ENTROPY and q != 0:
        raise IntervalError("cross-entropy label poisoning requires q=0 (flips)")
    x = np.asarray(x, dtype=np.float64)[None, :]
    labels = np.atleast_2d(np.asarray(y, dtype=np.float64)) if loss is LossKind.MSE \
        else np.asarray([int(y)])
    clean = gradient_bounds_batch(box, x, labels, loss, method=method)
    if loss is LossKind.MSE:
        poisoned = gradient_bounds_batch(box, x, labels, loss, eps=eps, nu=nu,
                                         method=method)
    else:
        poisoned = gradient_bounds_batch(box, x, labels, loss, eps=eps,
                                         flip=nu > 0, method=method)
    return clean, poisoned
