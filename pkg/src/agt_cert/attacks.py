"""Heuristic poisoning attacks and the soundness harness built on them.

The attacks serve two roles: adversarial baselines, and oracles for the
trainer's boxes — every attacked training trajectory that respects the
declared budget must stay inside the certified parameter intervals at
every recorded step.  They only need to be budget-feasible, not strong.

* parameter-targeted feature poisoning: PGD over a sup-norm ball to push
  the batch gradient against a chosen direction in parameter space (so
  the SGD step moves the parameters along that direction);
* feature collision: replace n samples' features with a fixed target
  point and randomize their labels (unbounded substitution);
* label flipping: relabel up to m eligible samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .network import DenseReluNetwork, LossKind, TrainConfig, grad_batch, sgd_train
from .training import AgtResult, BoundedAdversary, UnboundedAdversary, agt_train


class AttackError(ValueError):
    """Raised for infeasible attack specifications."""


@dataclass
class ParamDirection:
    """Linear functional on the parameters: sum_k <cw[k], W_k> + <cb[k], b_k>."""

    cw: list
    cb: list

    @classmethod
    def single_weight(cls, net: DenseReluNetwork, layer: int, i: int, j: int,
                      sign: float = 1.0) -> "ParamDirection":
        cw = [np.zeros_like(w) for w in net.weights]
        cb = [np.zeros_like(b) for b in net.biases]
        cw[layer][i, j] = sign
        return cls(cw, cb)

    def inner_with_grads(self, dWs, dbs) -> np.ndarray:
        """Per-sample inner products with stacked gradients."""
        total = np.zeros(dWs[0].shape[0])
        for k in range(len(self.cw)):
            total += np.einsum("bij,ij->b", dWs[k], self.cw[k])
            total += np.einsum("bi,i->b", dbs[k], self.cb[k])
        return total


def _pgd_objective(net, X, Y, loss, direction):
    """Per-sample poisoning payoff: the SGD step is -lr * grad, so pushing
    the parameters along `direction` means minimizing <direction, grad>."""
    dWs, dbs = grad_batch(net, X, Y, loss)
    return -direction.inner_with_grads(dWs, dbs)


def param_target_pgd_poison(Xb, Yb, net: DenseReluNetwork, loss: LossKind,
                            direction: ParamDirection, eps: float, n: int,
                            rng, steps: int = 20, step_size: float | None = None,
                            fd_step: float = 1e-5):
    """Perturb n batch samples within the eps ball to steer the update.

    Projected gradient ascent on the poisoning payoff; the input gradient
    is taken by central finite differences per coordinate (the payoff is
    already a gradient, so this avoids second-order backprop).  eps=0
    returns the batch unchanged.
    """
    if eps < 0:
        raise AttackError("eps must be nonnegative")
    if n > Xb.shape[0]:
        raise AttackError(f"n={n} exceeds batch size {Xb.shape[0]}")
    Xp = np.asarray(Xb, dtype=np.float64).copy()
    if eps == 0.0 or n == 0:
        return Xp, np.asarray(Yb)
    if step_size is None:
        step_size = eps / 10.0
    rows = rng.choice(Xb.shape[0], size=n, replace=False)
    base = Xp[rows].copy()
    Yr = np.asarray(Yb)[rows]
    cur = base.copy()
    for _ in range(steps):
        g = np.zeros_like(cur)
        for c in range(cur.shape[1]):
            plus = cur.copy()
            plus[:, c] += fd_step
            minus = cur.copy()
            minus[:, c] -= fd_step
            g[:, c] = (_pgd_objective(net, plus, Yr, loss, direction)
                       - _pgd_objective(net, minus, Yr, loss, direction)) / (2 * fd_step)
        cur = cur + step_size * np.sign(g)
        cur = np.clip(cur, base - eps, base + eps)
    Xp[rows] = cur
    return Xp, np.asarray(Yb)


def feature_collision_attack(Xb, Yb, x_target, n: int, rng, label_values=None):
    """Replace n samples' features with the target point; labels drawn
    uniformly from label_values (classification) or the batch label range
    (regression)."""
    if n > Xb.shape[0]:
        raise AttackError(f"n={n} exceeds batch size {Xb.shape[0]}")
    Xp = np.asarray(Xb, dtype=np.float64).copy()
    Yp = np.asarray(Yb).copy()
    if n == 0:
        return Xp, Yp
    rows = rng.choice(Xb.shape[0], size=n, replace=False)
    Xp[rows] = np.asarray(x_target, dtype=np.float64)
    if label_values is not None:
        Yp[rows] = rng.choice(np.asarray(label_values), size=n)
    else:
        lo, hi = Yp.min(axis=0), Yp.max(axis=0)
        Yp[rows] = rng.uniform(lo, hi, size=Yp[rows].shape)
    return Xp, Yp


def label_flip_attack(Yb, m: int, class_to: int, class_from=None, rng=None):
    """Flip exactly min(m, eligible) labels to class_to; features untouched.

    class_from restricts eligibility; None makes every sample not already
    labeled class_to eligible.  Returns (labels, flipped row indices).
    """
    Yp = np.asarray(Yb).copy()
    if class_from is None:
        eligible = np.flatnonzero(Yp != class_to)
    else:
        eligible = np.flatnonzero(Yp == class_from)
    flips = min(m, eligible.size)
    if flips == 0:
        return Yp, np.empty(0, dtype=int)
    rng = np.random.default_rng(0) if rng is None else rng
    rows = rng.choice(eligible, size=flips, replace=False)
    Yp[rows] = class_to
    return Yp, rows


@dataclass
class AttackSpec:
    """One attack family plus its budget; must fit inside the adversary
    the box was certified against."""

    kind: str                     # param_target_pgd | feature_collision | label_flip
    n: int = 0
    m: int = 0
    eps: float = 0.0
    pgd_steps: int = 20
    pgd_step_size: float | None = None
    direction: ParamDirection | None = None
    target_point: np.ndarray | None = None
    class_to: int = 0
    class_from: int | None = None
    label_values: tuple | None = None
    seed: int = 0

    KINDS = ("param_target_pgd", "feature_collision", "label_flip")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}")

    def validate_against(self, adversary) -> None:
        if isinstance(adversary, BoundedAdversary):
            if self.kind == "param_target_pgd":
                if self.n > adversary.n or self.eps > adversary.eps:
                    raise AttackError(
                        f"PGD budget (n={self.n}, eps={self.eps}) exceeds adversary "
                        f"(n={adversary.n}, eps={adversary.eps})")
            elif self.kind == "label_flip":
                if self.m > adversary.m or adversary.q != 0:
                    raise AttackError("label flips need a q=0 label budget covering m")
            else:
                raise AttackError("feature collision needs an unbounded adversary")
        elif isinstance(adversary, UnboundedAdversary):
            if self.kind != "feature_collision":
                raise AttackError(f"{self.kind} is not an unbounded substitution attack")
            if self.n > adversary.n:
                raise AttackError(f"collision n={self.n} exceeds adversary n={adversary.n}")
        else:
            raise AttackError(f"unknown adversary type {type(adversary).__name__}")

    def make_batch_transform(self, net: DenseReluNetwork, loss: LossKind, seed: int):
        """Per-batch poisoning callback for sgd_train; re-poisons every
        batch against the live model."""
        rng = np.random.default_rng(seed)

        def transform(Xb, Yb, step, current):
            if self.kind == "param_target_pgd":
                direction = self.direction
                if direction is None:
                    direction = ParamDirection.single_weight(net, 0, 0, 0)
                return param_target_pgd_poison(
                    Xb, Yb, current, loss, direction, self.eps, self.n, rng,
                    steps=self.pgd_steps, step_size=self.pgd_step_size)
            if self.kind == "feature_collision":
                target = self.target_point if self.target_point is not None else Xb[0]
                return feature_collision_attack(Xb, Yb, target, self.n, rng,
                                                label_values=self.label_values)
            Yp, _ = label_flip_attack(Yb, self.m, self.class_to, self.class_from, rng)
            return Xb.copy(), Yp

        return transform


@dataclass
class SoundnessReport:
    trials: int
    violations: int
    min_margin: float
    per_attack: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({
                "trials": self.trials,
                "violations": self.violations,
                "min_margin": self.min_margin,
                "passed": self.passed,
                "per_attack": self.per_attack,
            }, fh, indent=2, sort_keys=True)
            fh.write("\n")


# Attacked runs and the box evolve through different float expressions;
# margins this small count as rounding, not violations (soundness is
# stated for real arithmetic).
CONTAINMENT_TOL = 1e-9


def soundness_harness(net_init: DenseReluNetwork, X, Y, cfg: TrainConfig,
                      adversary, attack_specs, trials: int,
                      poisonable=None, bound_method: str = "ibp",
                      agt_result: AgtResult | None = None,
                      batch_indices=None) -> SoundnessReport:
    """Check attacked SGD trajectories against the certified box trajectory.

    Runs abstract training once for the box, then `trials` attacked plain
    SGD runs per attack spec on the identical batch schedule; every
    recorded step of every trial must stay inside the step's box.  Any
    violation is a hard failure (reported, and an error in run_experiment).
    """
    for spec in attack_specs:
        spec.validate_against(adversary)
    if agt_result is None:
        agt_result = agt_train(net_init, X, Y, cfg, adversary,
                               poisonable=poisonable, bound_method=bound_method,
                               batch_indices=batch_indices)
    history = agt_result.history
    # The box bounds the (optionally clipped) algorithm; attacked runs must
    # train with the same clipping, which is mandatory for substitution
    # adversaries.
    attack_cfg = cfg
    if isinstance(adversary, UnboundedAdversary) and cfg.clip is None:
        attack_cfg = replace(cfg, clip=adversary.kappa)

    total = 0
    violations = 0
    min_margin = np.inf
    per_attack = {}
    for spec in attack_specs:
        a_violations = 0
        a_margin = np.inf
        for trial in range(trials):
            transform = spec.make_batch_transform(net_init, cfg.loss,
                                                  seed=spec.seed + 7919 * trial)
            snapshots = []
            sgd_train(net_init, X, Y, attack_cfg, batch_transform=transform,
                      record=lambda s, m: snapshots.append((s, m.copy())),
                      batch_indices=batch_indices)
            for s, model in snapshots:
                margin = history.containment_margin(s, model)
                a_margin = min(a_margin, margin)
                if margin < -CONTAINMENT_TOL:
                    a_violations += 1
                    break
            total += 1
        violations += a_violations
        min_margin = min(min_margin, a_margin)
        per_attack[spec.kind] = {
            "trials": trials,
            "violations": a_violations,
            "min_margin": float(a_margin),
        }
    return SoundnessReport(trials=total, violations=violations,
                           min_margin=float(min_margin), per_attack=per_attack)
