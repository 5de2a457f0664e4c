"""Sound forward-pass enclosures for networks with interval parameters.

Three methods over the same (parameter box, input box) problem:

* ``ibp``      - chain interval affine maps and ReLU images front to back.
* ``crown``    - for each layer, back-substitute linear relaxations of the
  ReLUs down to the input, with the relaxation coefficients themselves
  interval-valued because the weights are.  Earlier-layer pre-activation
  bounds (needed to build the relaxations) are produced layer by layer,
  starting from the exact affine image at layer 1.
* ``tightest`` - run both and intersect per entry, feeding the intersected
  bounds to deeper layers.

The CROWN back-substitution keeps, per output neuron j, an interval row
of coefficients on the current layer's pre-activations plus an interval
constant.  At each ReLU, a coefficient entry whose interval is strictly
signed selects the matching linear relaxation; a stably-active (or
stably-inactive) neuron is an exact identity (or zero) and propagates
regardless of sign; an entry whose interval strictly spans zero over an
unstable neuron cannot choose a relaxation soundly, so its coefficient is
zeroed and the interval product of the coefficient with the neuron's
concrete post-activation range is added to the constant instead.

Endpoint pairs that invert by float rounding (lower > upper by ~1 ulp,
possible because the two endpoints take different code paths) are
repaired to their midpoint; soundness here is with respect to real
arithmetic throughout.
"""

from __future__ import annotations

import numpy as np

from ..intervals import (
    IntervalError,
    IntervalVector,
    _arr_elemmul,
    _arr_intersect,
    _arr_matmul,
    _arr_matmul_exact,
    _arr_relu,
)
from .box import LayerBounds, ParamBox

FORWARD_METHODS = ("ibp", "crown", "tightest")


def _fix_pair(lo: np.ndarray, hi: np.ndarray):
    """Repair float-noise endpoint inversions to the midpoint."""
    bad = lo > hi
    if np.any(bad):
        mid = 0.5 * (lo + hi)
        lo = np.where(bad, mid, lo)
        hi = np.where(bad, mid, hi)
    return lo, hi


def _relu_relaxation(l: np.ndarray, u: np.ndarray):
    """Per-neuron linear ReLU relaxations on pre-activation range [l, u].

    Returns (alpha_up, beta_up, alpha_lo, beta_lo) with
    alpha_lo*(z+beta_lo) <= relu(z) <= alpha_up*(z+beta_up) on [l, u].
    Upper: the chord; lower: slope 1 when u >= |l| else 0.
    """
    active = l >= 0
    unstable = (l < 0) & (u > 0)
    denom = np.where(unstable, u - l, 1.0)
    alpha_up = np.where(active, 1.0, np.where(unstable, u / denom, 0.0))
    beta_up = np.where(unstable, -l, 0.0)
    alpha_lo = np.where(active, 1.0, np.where(unstable, (u >= -l).astype(np.float64), 0.0))
    beta_lo = np.zeros_like(l)
    return alpha_up, beta_up, alpha_lo, beta_lo


def _box_arrays(box: ParamBox):
    w_lo = [w.lo for w in box.weights]
    w_hi = [w.hi for w in box.weights]
    b_lo = [b.lo for b in box.biases]
    b_hi = [b.hi for b in box.biases]
    return w_lo, w_hi, b_lo, b_hi


def _affine_step(w_lo, w_hi, b_lo, b_hi, x_lo, x_hi):
    """Interval image of x W^T + b for batched row vectors x."""
    lo, hi = _arr_matmul(x_lo, x_hi, w_lo.T, w_hi.T)
    return lo + b_lo, hi + b_hi


def _crown_backward(w_lo, w_hi, b_lo, b_hi, x_lo, x_hi, pre, post, m: int,
                    init: np.ndarray | None = None):
    """Bounds on rows of (init @ layer m's pre-activation), back-substituted
    to the input.

    init defaults to the identity (per-neuron bounds of layer m); a point
    coefficient matrix (rows, n_m) bounds arbitrary linear combinations of
    the layer outputs instead, e.g. pairwise logit differences.  pre/post
    hold (lo, hi) pairs of (batch, n_k) arrays for layers 0..m-2 (python
    indexing); both channels (upper via Lambda-style coefficients, lower
    via Omega-style) are carried simultaneously.
    """
    batch = x_lo.shape[0]
    n_m = w_lo[m - 1].shape[0]
    if init is None:
        init = np.eye(n_m)
    rows = init.shape[0]
    start = np.broadcast_to(init, (batch, rows, n_m))
    # Coefficient intervals on the current layer's pre-activations.
    ua_lo, ua_hi = start, start
    la_lo, la_hi = start, start
    uc_lo = np.zeros((batch, rows))
    uc_hi = np.zeros((batch, rows))
    lc_lo = np.zeros((batch, rows))
    lc_hi = np.zeros((batch, rows))
    # Relaxation offsets pending from the previous (deeper) step; the
    # bias of layer k is grouped with them, matching b + beta per neuron.
    u_beta = np.zeros((batch, rows, n_m))
    l_beta = np.zeros((batch, rows, n_m))

    for kk in range(m - 1, -1, -1):
        tb_lo = b_lo[kk][None, None, :] + u_beta
        tb_hi = b_hi[kk][None, None, :] + u_beta
        plo, phi = _arr_elemmul(ua_lo, ua_hi, tb_lo, tb_hi)
        uc_lo = uc_lo + plo.sum(axis=-1)
        uc_hi = uc_hi + phi.sum(axis=-1)
        tb_lo = b_lo[kk][None, None, :] + l_beta
        tb_hi = b_hi[kk][None, None, :] + l_beta
        plo, phi = _arr_elemmul(la_lo, la_hi, tb_lo, tb_hi)
        lc_lo = lc_lo + plo.sum(axis=-1)
        lc_hi = lc_hi + phi.sum(axis=-1)

        ua_lo, ua_hi = _arr_matmul(ua_lo, ua_hi, w_lo[kk], w_hi[kk])
        la_lo, la_hi = _arr_matmul(la_lo, la_hi, w_lo[kk], w_hi[kk])
        if kk == 0:
            break

        l, u = pre[kk - 1]
        alpha_up, beta_up, alpha_lo, beta_lo = _relu_relaxation(l, u)
        unstable = ((l < 0) & (u > 0))[:, None, :]
        a_up = alpha_up[:, None, :]
        b_up = beta_up[:, None, :]
        a_dn = alpha_lo[:, None, :]
        b_dn = beta_lo[:, None, :]
        z_lo, z_hi = post[kk - 1]
        z_lo = z_lo[:, None, :]
        z_hi = z_hi[:, None, :]

        # Upper channel: positive coefficients take the upper relaxation,
        # negative the lower; strict spans over unstable neurons fall back
        # to the concrete post-activation range.
        amb = (ua_lo < 0) & (ua_hi > 0) & unstable
        sel_a = np.where(ua_hi <= 0, a_dn, a_up)
        sel_b = np.where(ua_hi <= 0, b_dn, b_up)
        hlo, hhi = _arr_elemmul(ua_lo, ua_hi, z_lo, z_hi)
        uc_lo = uc_lo + np.where(amb, hlo, 0.0).sum(axis=-1)
        uc_hi = uc_hi + np.where(amb, hhi, 0.0).sum(axis=-1)
        sel_a = np.where(amb, 0.0, sel_a)
        u_beta = np.where(amb, 0.0, sel_b)
        ua_lo = ua_lo * sel_a
        ua_hi = ua_hi * sel_a

        # Lower channel: the selections swap.
        amb = (la_lo < 0) & (la_hi > 0) & unstable
        sel_a = np.where(la_hi <= 0, a_up, a_dn)
        sel_b = np.where(la_hi <= 0, b_up, b_dn)
        hlo, hhi = _arr_elemmul(la_lo, la_hi, z_lo, z_hi)
        lc_lo = lc_lo + np.where(amb, hlo, 0.0).sum(axis=-1)
        lc_hi = lc_hi + np.where(amb, hhi, 0.0).sum(axis=-1)
        sel_a = np.where(amb, 0.0, sel_a)
        l_beta = np.where(amb, 0.0, sel_b)
        la_lo = la_lo * sel_a
        la_hi = la_hi * sel_a

    # Close with the input term: gamma_U from the upper channel's max,
    # gamma_L from the lower channel's min.
    xu_lo, xu_hi = _arr_matmul(ua_lo, ua_hi, x_lo[:, :, None], x_hi[:, :, None])
    xl_lo, xl_hi = _arr_matmul(la_lo, la_hi, x_lo[:, :, None], x_hi[:, :, None])
    gamma_hi = uc_hi + xu_hi[:, :, 0]
    gamma_lo = lc_lo + xl_lo[:, :, 0]
    return _fix_pair(gamma_lo, gamma_hi)


def forward_bounds_arrays(box: ParamBox, x_lo: np.ndarray, x_hi: np.ndarray,
                          method: str = "ibp"):
    """Batched engine shared by all public entry points.

    x_lo/x_hi: (batch, n_in).  Returns (pre, post): lists of (lo, hi)
    pairs of (batch, n_k) arrays.
    """
    if method not in FORWARD_METHODS:
        raise IntervalError(f"unknown forward method {method!r}")
    net = box.nominal
    if x_lo.ndim != 2 or x_lo.shape[1] != net.n_in:
        raise IntervalError(f"input shape {x_lo.shape} incompatible with n_in={net.n_in}")
    w_lo, w_hi, b_lo, b_hi = _box_arrays(box)

    pre = []
    post = []
    cur_lo, cur_hi = x_lo, x_hi
    for k in range(net.n_layers):
        if method == "crown" and k > 0:
            plo, phi = _crown_backward(w_lo, w_hi, b_lo, b_hi, x_lo, x_hi, pre, post, k + 1)
        else:
            plo, phi = _affine_step(w_lo[k], w_hi[k], b_lo[k], b_hi[k], cur_lo, cur_hi)
            if method == "tightest" and k > 0:
                clo, chi = _crown_backward(w_lo, w_hi, b_lo, b_hi, x_lo, x_hi, pre, post, k + 1)
                plo, phi = _fix_pair(*_arr_intersect(plo, phi, clo, chi))
        pre.append((plo, phi))
        if k < net.n_layers - 1:
            zlo, zhi = _arr_relu(plo, phi)
            post.append((zlo, zhi))
            cur_lo, cur_hi = zlo, zhi
    return pre, post


def _wrap_layer_bounds(x: IntervalVector, pre, post) -> LayerBounds:
    return LayerBounds(
        input=x,
        pre=[IntervalVector(lo[0], hi[0]) for lo, hi in pre],
        post=[IntervalVector(lo[0], hi[0]) for lo, hi in post],
    )


def _run_single(box: ParamBox, x: IntervalVector, method: str) -> LayerBounds:
    pre, post = forward_bounds_arrays(box, x.lo[None, :], x.hi[None, :], method)
    return _wrap_layer_bounds(x, pre, post)


def ibp_forward(box: ParamBox, x: IntervalVector) -> LayerBounds:
    """Layer-by-layer interval enclosure, forward ordering."""
    return _run_single(box, x, "ibp")


def crown_forward(box: ParamBox, x: IntervalVector) -> LayerBounds:
    """Back-substituted linear-relaxation enclosure with interval weights."""
    return _run_single(box, x, "crown")


def tightest_forward(box: ParamBox, x: IntervalVector) -> LayerBounds:
    """Elementwise intersection of the IBP and CROWN enclosures."""
    return _run_single(box, x, "tightest")


def logit_bounds_batch(box: ParamBox, X: np.ndarray, radius=0.0,
                       method: str = "tightest"):
    """Output enclosures for a batch of inputs in per-row radius balls.

    Returns (lo, hi) arrays of shape (batch, n_out).
    """
    X = np.asarray(X, dtype=np.float64)
    r = np.broadcast_to(np.asarray(radius, dtype=np.float64), (X.shape[0],))
    if np.any(r < 0):
        raise IntervalError("radius must be nonnegative")
    pre, _ = forward_bounds_arrays(box, X - r[:, None], X + r[:, None], method)
    return pre[-1]


def logit_diff_bounds_batch(box: ParamBox, X: np.ndarray, radius=0.0,
                            method: str = "tightest"):
    """Enclosures of every pairwise logit difference f_j - f_i.

    Bounding the differences directly (a +/-1 output functional pushed
    through the last layer, or through the whole back-substitution) is
    never looser than subtracting per-logit intervals, because the shared
    input and shared earlier layers cancel instead of double-counting.
    Returns (lo, hi) of shape (batch, n_out, n_out) with entry [.., j, i]
    bounding f_j - f_i.
    """
    if method not in FORWARD_METHODS:
        raise IntervalError(f"unknown forward method {method!r}")
    X = np.asarray(X, dtype=np.float64)
    r = np.broadcast_to(np.asarray(radius, dtype=np.float64), (X.shape[0],))
    if np.any(r < 0):
        raise IntervalError("radius must be nonnegative")
    x_lo = X - r[:, None]
    x_hi = X + r[:, None]
    net = box.nominal
    n_out = net.n_out
    K = net.n_layers
    w_lo, w_hi, b_lo, b_hi = _box_arrays(box)
    # Difference functional rows: C[j*n_out+i] = e_j - e_i.
    eye = np.eye(n_out)
    C = (eye[:, None, :] - eye[None, :, :]).reshape(n_out * n_out, n_out)

    pre, post = forward_bounds_arrays(box, x_lo, x_hi, method)

    def _ibp_diff():
        # The final contraction uses the exact hull: the difference rows and
        # the input/post-activation entries vary independently, so this is
        # the true range of the affine difference (Rump's midpoint-radius
        # form overestimates when both operands carry radius).
        d_lo, d_hi = _arr_matmul(C, C, w_lo[K - 1], w_hi[K - 1])
        db_lo, db_hi = _arr_matmul(C, C, b_lo[K - 1][:, None], b_hi[K - 1][:, None])
        z_lo, z_hi = (x_lo, x_hi) if K == 1 else post[K - 2]
        lo, hi = _arr_matmul_exact(z_lo[:, None, :], z_hi[:, None, :],
                                   d_lo.T, d_hi.T)
        return lo[:, 0, :] + db_lo[:, 0], hi[:, 0, :] + db_hi[:, 0]

    if method == "ibp" or K == 1:
        lo, hi = _ibp_diff()
    else:
        c_lo, c_hi = _crown_backward(w_lo, w_hi, b_lo, b_hi, x_lo, x_hi,
                                     pre[:-1], post, K, init=C)
        if method == "crown":
            lo, hi = c_lo, c_hi
        else:
            lo, hi = _fix_pair(*_arr_intersect(*_ibp_diff(), c_lo, c_hi))
    shape = (X.shape[0], n_out, n_out)
    return lo.reshape(shape), hi.reshape(shape)
