"""Certificates on model behavior derived from a parameter box.

Every certificate reduces to enclosures computed over the box (and, for
backdoor queries, over an input ball).  A class i is *reachable* unless
some other class strictly dominates it: there is j != i whose logit
provably exceeds i's for every parameter in the box and every input in
the region.  Domination is decided from direct bounds on the pairwise
differences f_j - f_i, which cancel the shared input/parameters instead
of double-counting them and so are never looser than subtracting
per-logit intervals.  The reachable set always contains the nominal
prediction.  A prediction is certified when the reachable set is exactly
the true label; a trigger region is certified safe when the reachable set
over the whole region stays inside the safe label set.

Strict (rather than non-strict) dominance is deliberate: under exact
logit ties non-strict dominance would empty the reachable set and certify
vacuously, while strict dominance degrades to "not certified".

Per-test-point certificates are combined by simple averaging; the
denial-of-service objective is bounded by averaging per-point loss
intervals.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .bounds.box import ParamBox
from .bounds.forward import logit_bounds_batch, logit_diff_bounds_batch
from .bounds.losses import ce_loss_bounds_arrays, mse_loss_bounds_arrays
from .network import LossKind, NetworkError, predict_batch


@dataclass(frozen=True)
class BackdoorRegion:
    """Sup-norm ball of trigger manipulations around a test input."""

    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise NetworkError(f"trigger radius must be nonnegative, got {self.radius}")


@dataclass
class Certificate:
    index: int
    nominal_prediction: int
    reachable: tuple
    logit_lo: np.ndarray
    logit_hi: np.ndarray
    certified: bool
    loss_lo: float | None = None
    loss_hi: float | None = None

    @property
    def verdict(self) -> str:
        return "certified" if self.certified else "not-certified"


def reachable_mask(diff_lo: np.ndarray) -> np.ndarray:
    """Boolean (batch, classes) mask of classes not strictly dominated.

    diff_lo[.., j, i] lower-bounds f_j - f_i; class i is excluded iff
    some j != i has diff_lo[.., j, i] > 0.
    """
    return ~np.any(diff_lo > 0, axis=1)


def _reachable_sets(box, X, radius, method):
    diff_lo, _ = logit_diff_bounds_batch(box, X, radius=radius, method=method)
    return reachable_mask(diff_lo)


def _certificates_from_bounds(box, X, lo, hi, mask, labels=None, safe=None):
    preds = predict_batch(box.nominal, X)
    certs = []
    for i in range(X.shape[0]):
        reach = tuple(int(c) for c in np.flatnonzero(mask[i]))
        if safe is not None:
            ok = set(reach).issubset(safe)
        elif labels is not None:
            ok = reach == (int(labels[i]),)
        else:
            ok = reach == (int(preds[i]),)
        certs.append(Certificate(
            index=i, nominal_prediction=int(preds[i]), reachable=reach,
            logit_lo=lo[i], logit_hi=hi[i], certified=bool(ok),
        ))
    return certs


def certified_prediction(box: ParamBox, x, true_label=None,
                         method: str = "tightest") -> Certificate:
    """Reachable label set for a clean test point.

    With true_label, certified means the reachable set is exactly that
    label; without it, that the nominal prediction cannot change.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = logit_bounds_batch(box, x[None, :], method=method)
    mask = _reachable_sets(box, x[None, :], 0.0, method)
    labels = None if true_label is None else np.asarray([int(true_label)])
    cert = _certificates_from_bounds(box, x[None, :], lo, hi, mask, labels=labels)[0]
    assert cert.nominal_prediction in cert.reachable
    return cert


def backdoor_certificate(box: ParamBox, x, trigger: BackdoorRegion | float,
                         safe, method: str = "tightest") -> Certificate:
    """Certificate over every trigger-perturbed input in the region.

    safe is the set of acceptable labels (e.g. {true label}); certified
    means no parameter in the box maps any point of the region outside it.
    """
    if not isinstance(trigger, BackdoorRegion):
        trigger = BackdoorRegion(float(trigger))
    safe = {int(s) for s in (safe if np.iterable(safe) else [safe])}
    x = np.asarray(x, dtype=np.float64)
    lo, hi = logit_bounds_batch(box, x[None, :], radius=trigger.radius, method=method)
    mask = _reachable_sets(box, x[None, :], trigger.radius, method)
    return _certificates_from_bounds(box, x[None, :], lo, hi, mask, safe=safe)[0]


def certified_accuracy(box: ParamBox, X, labels, method: str = "tightest",
                       trigger_radius: float = 0.0) -> float:
    """Fraction of test points whose true label is provably predicted by
    every parameter in the box (over the trigger ball when radius > 0)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.shape[0] == 0:
        raise NetworkError("empty test set")
    mask = _reachable_sets(box, X, trigger_radius, method)
    only_true = mask.sum(axis=1) == 1
    true_reachable = mask[np.arange(X.shape[0]), labels]
    return float(np.mean(only_true & true_reachable))


def loss_bound_testset(box: ParamBox, X, Y, loss: LossKind,
                       method: str = "tightest"):
    """Mean per-point loss interval over the test set.

    The upper mean bounds the denial-of-service objective: no parameters
    in the box achieve a higher average test loss.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise NetworkError("empty test set")
    lo, hi = logit_bounds_batch(box, X, method=method)
    if loss is LossKind.MSE:
        l_lo, l_hi = mse_loss_bounds_arrays(lo, hi, np.atleast_2d(np.asarray(Y, dtype=np.float64)))
    else:
        l_lo, l_hi = ce_loss_bounds_arrays(lo, hi, np.asarray(Y))
    return float(l_lo.mean()), float(l_hi.mean())


REPORT_VERSION = 1


def certification_report(box: ParamBox, X, labels, loss: LossKind,
                         method: str = "tightest"):
    """Per-point certificates plus the summary used by the report files."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    lo, hi = logit_bounds_batch(box, X, method=method)
    mask = _reachable_sets(box, X, 0.0, method)
    certs = _certificates_from_bounds(box, X, lo, hi, mask, labels=labels)
    l_lo, l_hi = ce_loss_bounds_arrays(lo, hi, labels) if loss is LossKind.CROSS_ENTROPY \
        else mse_loss_bounds_arrays(lo, hi, np.atleast_2d(np.asarray(labels, dtype=np.float64)))
    for cert, a, b in zip(certs, l_lo, l_hi):
        cert.loss_lo = float(a)
        cert.loss_hi = float(b)
    nominal_acc = float(np.mean(predict_batch(box.nominal, X) == labels)) \
        if loss is LossKind.CROSS_ENTROPY else None
    summary = {
        "version": REPORT_VERSION,
        "n_points": int(X.shape[0]),
        "certified_accuracy": float(np.mean([c.certified for c in certs])),
        "nominal_accuracy": nominal_acc,
        "mean_loss_lo": float(np.mean(l_lo)),
        "mean_loss_hi": float(np.mean(l_hi)),
        "method": method,
    }
    return certs, summary


def write_certification_report(csv_path, json_path, certs, summary) -> None:
    """CSV: one row per test point; JSON: the summary dict."""
    n_classes = len(certs[0].logit_lo) if certs else 0
    header = (["index", "nominal_pred", "reachable_bitmask"]
              + [f"logit{c}_lo" for c in range(n_classes)]
              + [f"logit{c}_hi" for c in range(n_classes)]
              + ["loss_lo", "loss_hi", "verdict"])
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in certs:
            bitmask = sum(1 << r for r in c.reachable)
            writer.writerow([c.index, c.nominal_prediction, bitmask]
                            + [repr(v) for v in c.logit_lo]
                            + [repr(v) for v in c.logit_hi]
                            + [repr(c.loss_lo), repr(c.loss_hi), c.verdict])
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_certification_csv(path):
    """Round-trip loader for the per-point report rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, row)) for row in reader]
    return rows
