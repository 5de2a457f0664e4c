"""Abstract gradient training: SGD with a co-evolving parameter box.

Alongside the nominal SGD iterate, the trainer maintains per-parameter
intervals [theta_lo, theta_hi] that contain every parameter vector
reachable by running the same schedule on any dataset the adversary
could have produced.  Each batch:

1. takes the ordinary (optionally clipped) SGD step on the nominal
   parameters,
2. bounds the set of descent directions reachable under the adversary
   and the current box, and
3. pushes the box through the update:
   [theta_lo, theta_hi] <- [theta_lo - lr * d_hi, theta_hi - lr * d_lo].

Descent-direction bounds per batch of size b:

* bounded adversary (at most n feature-poisoned and m label-poisoned
  points per batch, radii eps / nu):
  d_lo = (SEMin_{max(m,n)} {poisoned_lo - clean_lo} + sum clean_lo) / b
  and symmetrically for d_hi with SEMax of the upper differences;
* unbounded adversary (up to n points per batch replaced outright,
  per-sample gradients clipped to [-kappa, kappa]):
  d_lo = (SEMin_{b-n} {clean_lo} - n * kappa) / b, symmetrically above.

SEMax_a / SEMin_a sum the a largest / smallest values per index across
the per-sample vectors.

Budgets are PER BATCH, not per dataset.  The bounded-adversary budget
pair (n, m) is accounted with the max(m, n) worst per-sample differences,
each difference bounding a joint feature+label perturbation of its
sample; this covers any attack touching at most max(m, n) samples per
batch (feature-only, label-only, or paired edits), the regime all
shipped attacks and certificates operate in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bounds.backward import gradient_bounds_batch
from .bounds.box import GradBounds, ParamBox
from .network import (
    DenseReluNetwork,
    LossKind,
    NetworkError,
    TrainConfig,
    iter_batches,
    loss_batch,
    sgd_step,
)


class AdversaryError(ValueError):
    """Raised for malformed adversary models or budget violations."""


class AgtDivergenceError(RuntimeError):
    """Raised when training produces non-finite parameters or bounds."""


class AgtSoundnessError(RuntimeError):
    """Raised when a runtime invariant of the box evolution fails."""


@dataclass(frozen=True)
class BoundedAdversary:
    """Perturbs at most n features by eps (sup norm) and at most m labels
    by nu per batch; q=inf is a label ball (MSE), q=0 a label flip (CE)."""

    n: int = 0
    eps: float = 0.0
    m: int = 0
    nu: float = 0.0
    p: float = np.inf
    q: float = np.inf

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise AdversaryError("budgets n, m must be nonnegative")
        if self.eps < 0 or self.nu < 0:
            raise AdversaryError("radii eps, nu must be nonnegative")
        if not np.isinf(self.p):
            raise AdversaryError(f"only p=inf feature balls are supported, got {self.p}")
        if self.q not in (0, np.inf):
            raise AdversaryError(f"label norm q must be 0 or inf, got {self.q}")

    @property
    def se_count(self) -> int:
        return max(self.m, self.n)

    def effective_radii(self):
        """(eps, nu) actually applied: a zero budget disables its radius."""
        return (self.eps if self.n > 0 else 0.0,
                self.nu if self.m > 0 else 0.0)

    def validate_batch_size(self, b: int) -> None:
        if self.n > b or self.m > b:
            raise AdversaryError(f"budgets (n={self.n}, m={self.m}) exceed batch size {b}")


@dataclass(frozen=True)
class UnboundedAdversary:
    """Substitutes up to n arbitrary points per batch; requires gradient
    clipping at level kappa, otherwise the effect is unbounded."""

    n: int
    kappa: float

    def __post_init__(self):
        if self.n < 0:
            raise AdversaryError("budget n must be nonnegative")
        if self.kappa is None or self.kappa <= 0:
            raise AdversaryError("unbounded adversary requires clipping level kappa > 0")

    def validate_batch_size(self, b: int) -> None:
        if self.n > b:
            raise AdversaryError(f"budget n={self.n} exceeds batch size {b}")


def semax(vectors, a: int) -> np.ndarray:
    """Per index, the sum of the a largest values across the vectors."""
    values = np.asarray(vectors, dtype=np.float64)
    b = values.shape[0]
    if not 0 <= a <= b:
        raise AdversaryError(f"SEMax count {a} out of range [0, {b}]")
    if a == 0:
        return np.zeros(values.shape[1:])
    return np.sort(values, axis=0)[b - a:].sum(axis=0)


def semin(vectors, a: int) -> np.ndarray:
    """Per index, the sum of the a smallest values across the vectors."""
    values = np.asarray(vectors, dtype=np.float64)
    b = values.shape[0]
    if not 0 <= a <= b:
        raise AdversaryError(f"SEMin count {a} out of range [0, {b}]")
    if a == 0:
        return np.zeros(values.shape[1:])
    return np.sort(values, axis=0)[:a].sum(axis=0)


@dataclass
class ParamUpdate:
    """Per-layer weight/bias arrays with the shape of the parameters."""

    weights: list
    biases: list


def descent_bounds_bounded(clean: GradBounds, poisoned: GradBounds,
                           adv: BoundedAdversary, b: int):
    """Elementwise bounds on the averaged batch update under the adversary.

    clean / poisoned are the per-sample gradient enclosures of the same
    batch (poisoned computed with the adversary's radii; rows excluded by
    a poisonable mask simply carry zero difference).
    """
    if clean.batch_size != b or poisoned.batch_size != b:
        raise AdversaryError("gradient bounds batch size does not match b")
    adv.validate_batch_size(b)
    a = adv.se_count
    lo_w, hi_w, lo_b, hi_b = [], [], [], []
    for k in range(clean.n_layers):
        lo_w.append((semin(poisoned.dw_lo[k] - clean.dw_lo[k], a)
                     + clean.dw_lo[k].sum(axis=0)) / b)
        hi_w.append((semax(poisoned.dw_hi[k] - clean.dw_hi[k], a)
                     + clean.dw_hi[k].sum(axis=0)) / b)
        lo_b.append((semin(poisoned.db_lo[k] - clean.db_lo[k], a)
                     + clean.db_lo[k].sum(axis=0)) / b)
        hi_b.append((semax(poisoned.db_hi[k] - clean.db_hi[k], a)
                     + clean.db_hi[k].sum(axis=0)) / b)
    return ParamUpdate(lo_w, lo_b), ParamUpdate(hi_w, hi_b)


def descent_bounds_unbounded(clean: GradBounds, adv: UnboundedAdversary, b: int):
    """Update bounds when up to n batch points are replaced outright.

    clean must hold kappa-clipped gradient enclosures: each substituted
    point contributes at most +/- kappa per index after clipping.
    """
    if clean.batch_size != b:
        raise AdversaryError("gradient bounds batch size does not match b")
    adv.validate_batch_size(b)
    keep = b - adv.n
    shift = adv.n * adv.kappa
    lo_w, hi_w, lo_b, hi_b = [], [], [], []
    for k in range(clean.n_layers):
        lo_w.append((semin(clean.dw_lo[k], keep) - shift) / b)
        hi_w.append((semax(clean.dw_hi[k], keep) + shift) / b)
        lo_b.append((semin(clean.db_lo[k], keep) - shift) / b)
        hi_b.append((semax(clean.db_hi[k], keep) + shift) / b)
    return ParamUpdate(lo_w, lo_b), ParamUpdate(hi_w, hi_b)


@dataclass
class StepRecord:
    step: int
    lr: float
    loss: float
    mean_width: float
    max_width: float
    box_lo: tuple    # (per-layer weight lows, per-layer bias lows)
    box_hi: tuple


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def box_contains(self, step: int, net: DenseReluNetwork, atol: float = 0.0) -> bool:
        rec = self.records[step]
        w_lo, b_lo = rec.box_lo
        w_hi, b_hi = rec.box_hi
        for k in range(net.n_layers):
            if np.any(net.weights[k] < w_lo[k] - atol) or np.any(net.weights[k] > w_hi[k] + atol):
                return False
            if np.any(net.biases[k] < b_lo[k] - atol) or np.any(net.biases[k] > b_hi[k] + atol):
                return False
        return True

    def containment_margin(self, step: int, net: DenseReluNetwork) -> float:
        """Smallest slack between the parameters and the box faces
        (negative means a violation)."""
        rec = self.records[step]
        w_lo, b_lo = rec.box_lo
        w_hi, b_hi = rec.box_hi
        margins = []
        for k in range(net.n_layers):
            margins.append(np.min(net.weights[k] - w_lo[k]))
            margins.append(np.min(w_hi[k] - net.weights[k]))
            margins.append(np.min(net.biases[k] - b_lo[k]))
            margins.append(np.min(b_hi[k] - net.biases[k]))
        return float(min(margins))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "lr", "nominal_loss", "mean_box_width", "max_box_width"])
            for rec in self.records:
                writer.writerow([rec.step, repr(rec.lr), repr(rec.loss),
                                 repr(rec.mean_width), repr(rec.max_width)])


@dataclass
class AgtResult:
    nominal: DenseReluNetwork
    box: ParamBox
    history: TrainingHistory


def _snapshot(w_lo, w_hi, b_lo, b_hi):
    return (([w.copy() for w in w_lo], [b.copy() for b in b_lo]),
            ([w.copy() for w in w_hi], [b.copy() for b in b_hi]))


def _finite(arrs) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrs)


def agt_train(net_init: DenseReluNetwork, X, Y, cfg: TrainConfig, adversary,
              poisonable=None, bound_method: str = "ibp",
              batch_indices=None) -> AgtResult:
    """Run SGD while soundly tracking every parameter reachable under the
    adversary.

    poisonable, when given, is a per-dataset-row boolean mask; rows
    marked False are treated as clean on both bound paths (their
    gradients still vary with the parameter box).  The nominal update
    path is shared with sgd_train, so a zero-budget run reproduces plain
    SGD bit for bit.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    bounded = isinstance(adversary, BoundedAdversary)
    if not bounded and not isinstance(adversary, UnboundedAdversary):
        raise AdversaryError(f"unknown adversary type {type(adversary).__name__}")
    adversary.validate_batch_size(cfg.batch_size)
    if poisonable is None:
        poisonable = np.ones(X.shape[0], dtype=bool)
    else:
        poisonable = np.asarray(poisonable, dtype=bool)
        if poisonable.shape != (X.shape[0],):
            raise NetworkError("poisonable mask length does not match the dataset")

    clip = cfg.clip
    if not bounded:
        if clip is None:
            clip = adversary.kappa
        elif clip != adversary.kappa:
            raise AdversaryError(
                f"clip level {clip} conflicts with the adversary's kappa {adversary.kappa}")
    if bounded and adversary.m > 0:
        if adversary.q == 0 and cfg.loss is not LossKind.CROSS_ENTROPY:
            raise AdversaryError("label flips (q=0) pair with cross-entropy training")
        if np.isinf(adversary.q) and cfg.loss is not LossKind.MSE:
            raise AdversaryError("label balls (q=inf) pair with MSE training")

    nominal = net_init.copy()
    w_lo = [w.copy() for w in net_init.weights]
    w_hi = [w.copy() for w in net_init.weights]
    b_lo = [b.copy() for b in net_init.biases]
    b_hi = [b.copy() for b in net_init.biases]
    trainable = cfg.trainable_mask(net_init.n_layers)
    history = TrainingHistory()
    b = cfg.batch_size

    step = 0
    for idx in iter_batches(X.shape[0], cfg, batch_indices):
        Xb, Yb = X[idx], Y[idx]
        mask_b = poisonable[idx]
        lr = cfg.lr_at(step)
        batch_loss = float(loss_batch(nominal, Xb, Yb, cfg.loss).mean())

        # Bound the reachable descent directions over the *current* box,
        # then take the nominal step and push the box through the update.
        box = _raw_box(nominal, w_lo, w_hi, b_lo, b_hi)
        clean = gradient_bounds_batch(box, Xb, Yb, cfg.loss, method=bound_method)
        if clip is not None:
            clean = clean.clipped(clip)

        if bounded:
            eps_eff, nu_eff = adversary.effective_radii()
            if adversary.se_count == 0 or (eps_eff == 0.0 and nu_eff == 0.0):
                poisoned = clean
            else:
                eps_rows = eps_eff * mask_b
                if adversary.q == 0:
                    flip_rows = mask_b & (nu_eff > 0)
                    poisoned = gradient_bounds_batch(box, Xb, Yb, cfg.loss,
                                                     eps=eps_rows, flip=flip_rows,
                                                     method=bound_method)
                else:
                    poisoned = gradient_bounds_batch(box, Xb, Yb, cfg.loss,
                                                     eps=eps_rows, nu=nu_eff * mask_b,
                                                     method=bound_method)
                if clip is not None:
                    poisoned = poisoned.clipped(clip)
            d_lo, d_hi = descent_bounds_bounded(clean, poisoned, adversary, b)
        else:
            d_lo, d_hi = descent_bounds_unbounded(clean, adversary, b)

        nominal = sgd_step(nominal, Xb, Yb, cfg.loss, lr, clip, trainable)
        for k in range(net_init.n_layers):
            if not trainable[k]:
                continue
            w_lo[k] = w_lo[k] - lr * d_hi.weights[k]
            w_hi[k] = w_hi[k] - lr * d_lo.weights[k]
            b_lo[k] = b_lo[k] - lr * d_hi.biases[k]
            b_hi[k] = b_hi[k] - lr * d_lo.biases[k]

        if not (_finite(nominal.weights) and _finite(nominal.biases)
                and _finite(w_lo) and _finite(w_hi) and _finite(b_lo) and _finite(b_hi)):
            raise AgtDivergenceError(
                f"non-finite parameters or bounds at step {step} (lr={lr}); "
                "reduce the learning rate or budgets")
        for k in range(net_init.n_layers):
            ok = (np.all(w_lo[k] - 1e-9 <= nominal.weights[k])
                  and np.all(nominal.weights[k] <= w_hi[k] + 1e-9)
                  and np.all(b_lo[k] - 1e-9 <= nominal.biases[k])
                  and np.all(nominal.biases[k] <= b_hi[k] + 1e-9))
            if not ok:
                raise AgtSoundnessError(f"nominal parameters left the box at step {step}")

        widths = np.concatenate([(hi - lo).ravel() for lo, hi in zip(w_lo, w_hi)]
                                + [hi - lo for lo, hi in zip(b_lo, b_hi)])
        lo_snap, hi_snap = _snapshot(w_lo, w_hi, b_lo, b_hi)
        history.records.append(StepRecord(
            step=step, lr=lr, loss=batch_loss,
            mean_width=float(widths.mean()), max_width=float(widths.max()),
            box_lo=lo_snap, box_hi=hi_snap,
        ))
        step += 1

    final_box = _raw_box(nominal, w_lo, w_hi, b_lo, b_hi)
    return AgtResult(nominal=nominal, box=final_box, history=history)


def _raw_box(net, w_lo, w_hi, b_lo, b_hi) -> ParamBox:
    return ParamBox.from_arrays(net, list(zip(w_lo, w_hi)), list(zip(b_lo, b_hi)))
