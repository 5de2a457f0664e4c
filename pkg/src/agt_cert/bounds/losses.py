"""Interval bounds on losses and their logit gradients.

Supported (label-ball, loss) pairings mirror what the trainer certifies:
sup-norm label balls of radius nu for MSE, and outright label flips for
cross-entropy.  All functions are batched: logit bounds are (batch, n_out)
arrays, labels one row per sample.

MSE is the squared error summed over output components, so its logit
gradient is 2(y - y'); with logits in [y_lo, y_hi] and poisoned labels
within nu of the clean ones, the gradient enclosure is
[2(y_lo - y_t - nu), 2(y_hi - y_t + nu)].

Softmax probabilities are bounded in log space:
log p_lo_i = y_lo_i - logsumexp(y_hi), log p_hi_i = y_hi_i - logsumexp(y_lo)
(the upper bound clamped to probability 1), which for point logits reduce
to the exact softmax.
"""

from __future__ import annotations

import numpy as np

from ..intervals import IntervalError, IntervalVector


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def mse_grad_bounds_arrays(y_lo, y_hi, y_t, nu):
    """Enclosure of d(loss)/d(logits); nu may be scalar or per-row."""
    nu = np.broadcast_to(np.asarray(nu, dtype=np.float64), (y_lo.shape[0],))[:, None]
    if np.any(nu < 0):
        raise IntervalError("label radius nu must be nonnegative")
    return 2.0 * (y_lo - y_t - nu), 2.0 * (y_hi - y_t + nu)


def mse_loss_bounds_arrays(y_lo, y_hi, y_t):
    """Per-sample loss enclosure: componentwise case split, summed.

    The lower bound of a component is 0 when the target lies inside the
    logit interval, otherwise the nearer squared endpoint.
    """
    d_lo = y_lo - y_t
    d_hi = y_hi - y_t
    comp_hi = np.maximum(d_lo ** 2, d_hi ** 2)
    inside = (d_lo <= 0) & (d_hi >= 0)
    comp_lo = np.where(inside, 0.0, np.minimum(d_lo ** 2, d_hi ** 2))
    return comp_lo.sum(axis=1), comp_hi.sum(axis=1)


def softmax_bounds_arrays(y_lo, y_hi):
    """Bounds on softmax probabilities for logits in [y_lo, y_hi]."""
    p_lo = np.exp(y_lo - _logsumexp(y_hi)[:, None])
    p_hi = np.minimum(np.exp(y_hi - _logsumexp(y_lo)[:, None]), 1.0)
    return p_lo, np.maximum(p_hi, p_lo)


def ce_grad_bounds_arrays(y_lo, y_hi, onehot, flip):
    """Enclosure of softmax(y) - y' over the logit box and label set.

    flip is a per-row boolean: flipped rows let the one-hot label range
    over every class, giving [p_lo - 1, p_hi - 0] per index.
    """
    p_lo, p_hi = softmax_bounds_arrays(y_lo, y_hi)
    flip = np.broadcast_to(np.asarray(flip, dtype=bool), (y_lo.shape[0],))[:, None]
    g_lo = np.where(flip, p_lo - 1.0, p_lo - onehot)
    g_hi = np.where(flip, p_hi, p_hi - onehot)
    return g_lo, g_hi


def ce_loss_bounds_arrays(y_lo, y_hi, labels):
    """Cross-entropy enclosure at the clean labels, computed in log space."""
    labels = np.asarray(labels)
    rows = np.arange(y_lo.shape[0])
    l_hi = _logsumexp(y_hi) - y_lo[rows, labels]
    l_lo = np.maximum(_logsumexp(y_lo) - y_hi[rows, labels], 0.0)
    return np.minimum(l_lo, l_hi), l_hi


# Single-sample wrappers over IntervalVector, matching the rest of the
# public bounds API.

def loss_grad_bounds_mse(logits: IntervalVector, y_t, nu: float):
    """Returns (gradient IntervalVector, (loss_lo, loss_hi))."""
    y_t = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    if y_t.shape != logits.lo.shape:
        raise IntervalError(f"target shape {y_t.shape} != logits {logits.lo.shape}")
    g_lo, g_hi = mse_grad_bounds_arrays(logits.lo[None, :], logits.hi[None, :],
                                        y_t[None, :], nu)
    l_lo, l_hi = mse_loss_bounds_arrays(logits.lo[None, :], logits.hi[None, :],
                                        y_t[None, :])
    return IntervalVector(g_lo[0], g_hi[0]), (float(l_lo[0]), float(l_hi[0]))


def loss_grad_bounds_ce(logits: IntervalVector, label: int, flip: bool = False):
    """Returns (gradient IntervalVector, (loss_lo, loss_hi)) for one sample."""
    n = logits.lo.shape[0]
    if n < 2:
        raise IntervalError("cross-entropy requires at least 2 classes")
    if not 0 <= int(label) < n:
        raise IntervalError(f"label {label} out of range [0, {n})")
    onehot = np.zeros((1, n))
    onehot[0, int(label)] = 1.0
    g_lo, g_hi = ce_grad_bounds_arrays(logits.lo[None, :], logits.hi[None, :],
                                       onehot, np.asarray([flip]))
    l_lo, l_hi = ce_loss_bounds_arrays(logits.lo[None, :], logits.hi[None, :],
                                       np.asarray([int(label)]))
    return IntervalVector(g_lo[0], g_hi[0]), (float(l_lo[0]), float(l_hi[0]))
