"""Carrier types for parameter boxes and per-layer/per-sample bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..intervals import IntervalError, IntervalMatrix, IntervalVector
from ..network import DenseReluNetwork

# Containment checks involving the nominal parameters allow this much
# absolute slack: the box endpoints and the nominal iterate travel through
# different float expressions, so mathematically-tight containment can be
# off by a few ulps.
FLOAT_GUARD = 1e-9


@dataclass
class ParamBox:
    """Per-layer interval weights/biases plus the nominal parameters.

    Invariant: the nominal network lies inside the box elementwise (up to
    FLOAT_GUARD) and the shapes match layer by layer.
    """

    nominal: DenseReluNetwork
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != self.nominal.n_layers or len(self.biases) != self.nominal.n_layers:
            raise IntervalError("box layer count does not match the nominal network")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.lo.shape != self.nominal.weights[k].shape:
                raise IntervalError(f"layer {k}: weight box shape {w.lo.shape} mismatch")
            if b.lo.shape != self.nominal.biases[k].shape:
                raise IntervalError(f"layer {k}: bias box shape {b.lo.shape} mismatch")
            if not (w.contains(self.nominal.weights[k], FLOAT_GUARD)
                    and b.contains(self.nominal.biases[k], FLOAT_GUARD)):
                raise IntervalError(f"layer {k}: nominal parameters fall outside the box")

    @classmethod
    def point(cls, net: DenseReluNetwork) -> "ParamBox":
        return cls(
            net,
            [IntervalMatrix.point(w) for w in net.weights],
            [IntervalVector.point(b) for b in net.biases],
        )

    @classmethod
    def from_radius(cls, net: DenseReluNetwork, radius: float) -> "ParamBox":
        if radius < 0:
            raise IntervalError("radius must be nonnegative")
        return cls(
            net,
            [IntervalMatrix(w - radius, w + radius) for w in net.weights],
            [IntervalVector(b - radius, b + radius) for b in net.biases],
        )

    @classmethod
    def from_arrays(cls, net: DenseReluNetwork, weight_pairs, bias_pairs) -> "ParamBox":
        return cls(
            net,
            [IntervalMatrix(lo, hi) for lo, hi in weight_pairs],
            [IntervalVector(lo, hi) for lo, hi in bias_pairs],
        )

    @property
    def n_layers(self) -> int:
        return self.nominal.n_layers

    def widths(self) -> np.ndarray:
        """All parameter interval widths as one flat vector."""
        parts = [w.width.ravel() for w in self.weights] + [b.width for b in self.biases]
        return np.concatenate(parts)

    def mean_width(self) -> float:
        return float(self.widths().mean())

    def max_width(self) -> float:
        return float(self.widths().max())

    def contains_network(self, net: DenseReluNetwork, atol: float = 0.0) -> bool:
        return all(
            self.weights[k].contains(net.weights[k], atol)
            and self.biases[k].contains(net.biases[k], atol)
            for k in range(self.n_layers)
        )

    def sample_member(self, rng) -> DenseReluNetwork:
        """Uniform member network; used by soundness fuzzers."""
        ws = [w.lo + rng.uniform(size=w.lo.shape) * (w.hi - w.lo) for w in self.weights]
        bs = [b.lo + rng.uniform(size=b.lo.shape) * (b.hi - b.lo) for b in self.biases]
        return DenseReluNetwork(ws, bs)


@dataclass
class LayerBounds:
    """Per-layer enclosures from a forward bounding pass.

    pre[k] encloses the pre-activation of layer k and post[k] its ReLU
    image (the last layer has no ReLU, so len(post) == len(pre) - 1).
    """

    input: IntervalVector
    pre: list
    post: list

    @property
    def logits(self) -> IntervalVector:
        return self.pre[-1]


@dataclass
class GradBounds:
    """Per-sample, per-layer interval enclosures of loss gradients.

    dw_lo[k] / dw_hi[k] have shape (batch, n_k, n_{k-1}); db_lo[k] /
    db_hi[k] have shape (batch, n_k).
    """

    dw_lo: list
    dw_hi: list
    db_lo: list
    db_hi: list

    @property
    def batch_size(self) -> int:
        return self.db_lo[0].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.dw_lo)

    def clipped(self, kappa: float) -> "GradBounds":
        """Interval image of the elementwise clamp to [-kappa, kappa]."""
        if kappa <= 0:
            raise IntervalError(f"clip level must be positive, got {kappa}")
        return GradBounds(
            [np.clip(a, -kappa, kappa) for a in self.dw_lo],
            [np.clip(a, -kappa, kappa) for a in self.dw_hi],
            [np.clip(a, -kappa, kappa) for a in self.db_lo],
            [np.clip(a, -kappa, kappa) for a in self.db_hi],
        )

    def contains_sample(self, i: int, dWs, dbs, atol: float = 0.0) -> bool:
        """Do the i-th sample's intervals contain the given exact gradients?"""
        for k in range(self.n_layers):
            if np.any(dWs[k] < self.dw_lo[k][i] - atol) or np.any(dWs[k] > self.dw_hi[k][i] + atol):
                return False
            if np.any(dbs[k] < self.db_lo[k][i] - atol) or np.any(dbs[k] > self.db_hi[k][i] + atol):
                return False
        return True

    def encloses(self, other: "GradBounds", atol: float = 0.0) -> bool:
        """True when self's intervals contain other's, elementwise."""
        for k in range(self.n_layers):
            if np.any(self.dw_lo[k] > other.dw_lo[k] + atol):
                return False
            if np.any(self.dw_hi[k] < other.dw_hi[k] - atol):
                return False
            if np.any(self.db_lo[k] > other.db_lo[k] + atol):
                return False
            if np.any(self.db_hi[k] < other.db_hi[k] - atol):
                return False
        return True
