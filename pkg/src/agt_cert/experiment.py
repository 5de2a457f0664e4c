"""End-to-end experiments: config parsing, run orchestration, artifacts.

A single YAML file drives everything.  Schema (fixed key names):

    name: halfmoons-demo
    seed: 0
    dataset:
      kind: halfmoons | csv | idx | synthetic_digits
      # halfmoons / synthetic_digits:
      n: 600
      noise: 0.1              # halfmoons only
      # csv:
      path: data.csv
      label_columns: [target]
      max_rows: 10000         # optional subsample
      # idx:
      images: train-images.idx
      labels: train-labels.idx
      # common:
      pca: 32                 # optional projection dimension
      test_fraction: 0.25
      poisonable_fraction: 1.0   # seeded random subset of train rows
    network:
      hidden: [128]
      seed: 0
    train:
      epochs: 2
      batch_size: 100
      lr: 0.3
      lr_decay: 0.0
      clip: null
      loss: cross_entropy | mse
      bound_method: ibp | crown | tightest
    adversary:
      kind: bounded | unbounded
      n: 10
      eps: 0.05
      m: 0
      nu: 0.0
      q: inf                  # inf | 0
      kappa: 0.05             # unbounded only
    certify:
      method: tightest
      backdoor_radius: 0.0    # optional: also certify under this trigger
    mix:                      # optional fixed poisonable share per batch
      ratio: 0.3
      seed: 0
    attacks:                  # optional soundness harness
      trials: 20
      specs:
        - kind: label_flip | param_target_pgd | feature_collision
          m: 5
          class_to: 1
          seed: 0

Artifacts written to the output directory: training_history.csv,
checkpoint.npz, certification.csv, certification.json, soundness.json
(when attacks run), metadata.json.  All result files are deterministic
for a fixed config; wall-clock facts live only in metadata.json.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .attacks import AttackSpec, soundness_harness
from .certify import certification_report, write_certification_report
from .data import (
    Dataset,
    DatasetError,
    gen_halfmoons,
    gen_synthetic_digits,
    load_csv_regression,
    load_idx_images,
    make_interleaved_batches,
    pca_project,
)
from .network import (
    DenseReluNetwork,
    LossKind,
    NetworkError,
    TrainConfig,
    save_checkpoint,
)
from .training import BoundedAdversary, UnboundedAdversary, agt_train

OUTPUT_ROOT_ENV = "AGT_CERT_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Raised for missing/contradictory experiment configuration."""


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    for key in ("dataset", "network", "train", "adversary"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required section {key!r}")
    return raw


def resolve_output_dir(config: dict, override=None) -> Path:
    """--output-dir flag beats config, which beats ./<name>; a relative
    path lands under $AGT_CERT_OUTPUT_ROOT when that is set."""
    chosen = Path(override or config.get("output_dir")
                  or config.get("name", "experiment"))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not chosen.is_absolute():
        chosen = Path(root) / chosen
    return chosen


def build_dataset(spec: dict) -> tuple:
    """Returns (train, test) Datasets per the config's dataset section."""
    kind = spec.get("kind")
    seed = int(spec.get("seed", 0))
    if kind == "halfmoons":
        ds = gen_halfmoons(int(spec.get("n", 600)), float(spec.get("noise", 0.1)), seed)
    elif kind == "synthetic_digits":
        ds = gen_synthetic_digits(int(spec.get("n", 2000)), seed)
    elif kind == "csv":
        ds = load_csv_regression(spec["path"], list(spec["label_columns"]),
                                 max_rows=spec.get("max_rows"))
    elif kind == "idx":
        ds = load_idx_images(spec["images"], spec["labels"])
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    if spec.get("pca"):
        _, ds = pca_project(ds, int(spec["pca"]))
    train, test = ds.split(float(spec.get("test_fraction", 0.25)), seed)
    frac = float(spec.get("poisonable_fraction", 1.0))
    if not 0.0 <= frac <= 1.0:
        raise ConfigError("poisonable_fraction must be within [0, 1]")
    if frac < 1.0:
        rng = np.random.default_rng(seed + 1)
        mask = np.zeros(train.n_samples, dtype=bool)
        n_pois = int(round(frac * train.n_samples))
        mask[rng.choice(train.n_samples, size=n_pois, replace=False)] = True
        train = Dataset(train.X, train.y, mask, train.feature_scaler,
                        train.label_scaler, train.name)
    return train, test


def build_train_config(spec: dict, seed: int) -> TrainConfig:
    loss = LossKind(spec.get("loss", "cross_entropy"))
    clip = spec.get("clip")
    return TrainConfig(
        epochs=int(spec.get("epochs", 1)),
        batch_size=int(spec.get("batch_size", 32)),
        lr=float(spec.get("lr", 0.1)),
        lr_decay=float(spec.get("lr_decay", 0.0)),
        clip=None if clip is None else float(clip),
        seed=int(spec.get("seed", seed)),
        loss=loss,
        trainable=spec.get("trainable"),
    )


def _parse_q(value):
    if value in ("inf", "infinity", None):
        return np.inf
    return float(value)


def build_adversary(spec: dict):
    kind = spec.get("kind", "bounded")
    if kind == "bounded":
        return BoundedAdversary(
            n=int(spec.get("n", 0)), eps=float(spec.get("eps", 0.0)),
            m=int(spec.get("m", 0)), nu=float(spec.get("nu", 0.0)),
            q=_parse_q(spec.get("q")),
        )
    if kind == "unbounded":
        return UnboundedAdversary(n=int(spec.get("n", 0)),
                                  kappa=float(spec["kappa"]))
    raise ConfigError(f"unknown adversary kind {kind!r}")


def build_attack_specs(spec: dict, train: Dataset):
    specs = []
    for item in spec.get("specs", []):
        kwargs = dict(item)
        kind = kwargs.pop("kind", None)
        if kind == "feature_collision" and "target_point" not in kwargs:
            kwargs["target_point"] = train.X[0]
        if kind == "feature_collision" and train.is_classification:
            kwargs.setdefault("label_values", tuple(range(train.n_classes)))
        specs.append(AttackSpec(kind=kind, **kwargs))
    return specs


def build_network(spec: dict, n_in: int, n_out: int) -> DenseReluNetwork:
    hidden = [int(h) for h in spec.get("hidden", [])]
    return DenseReluNetwork.init_random([n_in] + hidden + [n_out],
                                        seed=int(spec.get("seed", 0)))


def _validate_cross_fields(cfg: TrainConfig, adversary, train: Dataset) -> None:
    adversary.validate_batch_size(cfg.batch_size)
    if cfg.loss is LossKind.CROSS_ENTROPY and not train.is_classification:
        raise ConfigError("cross-entropy training needs integer labels")
    if cfg.loss is LossKind.MSE and train.is_classification:
        raise ConfigError("MSE training needs real-vector labels")


def run_experiment(config: dict, output_dir=None) -> dict:
    """Train with box tracking, certify, optionally attack; write artifacts.

    Returns the summary dict (also stored in certification.json /
    soundness.json); the caller maps soundness failures to exit codes.
    """
    started = time.time()
    out = resolve_output_dir(config, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0))

    train, test = build_dataset(config["dataset"])
    cfg = build_train_config(config["train"], seed)
    adversary = build_adversary(config["adversary"])
    _validate_cross_fields(cfg, adversary, train)
    if train.is_classification:
        n_out = train.n_classes
    else:
        n_out = train.y.shape[1]
    net = build_network(config["network"], train.n_features, n_out)

    batch_indices = None
    if "mix" in config:
        mix = config["mix"]
        batch_indices = make_interleaved_batches(
            train.poisonable, cfg.batch_size, float(mix["ratio"]),
            cfg.epochs, int(mix.get("seed", seed)))

    bound_method = config["train"].get("bound_method", "ibp")
    result = agt_train(net, train.X, train.y, cfg, adversary,
                       poisonable=train.poisonable, bound_method=bound_method,
                       batch_indices=batch_indices)

    result.history.write_csv(out / "training_history.csv")
    save_checkpoint(out / "checkpoint.npz", result.nominal, cfg.loss, box=result.box)

    cert_cfg = config.get("certify", {})
    method = cert_cfg.get("method", "tightest")
    certs, summary = certification_report(result.box, test.X, test.y, cfg.loss,
                                          method=method)
    radius = float(cert_cfg.get("backdoor_radius", 0.0))
    if radius > 0 and train.is_classification:
        from .certify import certified_accuracy
        summary["backdoor_radius"] = radius
        summary["backdoor_certified_accuracy"] = certified_accuracy(
            result.box, test.X, test.y, method=method, trigger_radius=radius)
    write_certification_report(out / "certification.csv",
                               out / "certification.json", certs, summary)

    soundness_passed = True
    if "attacks" in config:
        specs = build_attack_specs(config["attacks"], train)
        report = soundness_harness(
            net, train.X, train.y, cfg, adversary, specs,
            trials=int(config["attacks"].get("trials", 10)),
            poisonable=train.poisonable, bound_method=bound_method,
            agt_result=result, batch_indices=batch_indices)
        report.to_json(out / "soundness.json")
        soundness_passed = report.passed

    metadata = {
        "package_version": __version__,
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
        "output_dir": str(out),
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")

    summary["soundness_passed"] = soundness_passed
    summary["final_mean_box_width"] = result.box.mean_width()
    summary["final_max_box_width"] = result.box.max_width()
    return summary


def certify_checkpoint(checkpoint_path, config: dict, output_dir=None) -> dict:
    """Re-certify a stored (net, box) against the config's test split."""
    from .network import load_checkpoint

    out = resolve_output_dir(config, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    net, loss, box = load_checkpoint(checkpoint_path)
    if box is None:
        raise NetworkError(f"{checkpoint_path} holds no parameter box")
    _, test = build_dataset(config["dataset"])
    if test.n_features != net.n_in:
        raise DatasetError(
            f"dataset has {test.n_features} features but the model expects {net.n_in}")
    method = config.get("certify", {}).get("method", "tightest")
    certs, summary = certification_report(box, test.X, test.y, loss, method=method)
    write_certification_report(out / "certification.csv",
                               out / "certification.json", certs, summary)
    return summary


def run_attacks_only(config: dict, output_dir=None) -> dict:
    """Box + soundness harness without the certification step."""
    if "attacks" not in config:
        raise ConfigError("config has no attacks section")
    out = resolve_output_dir(config, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(config.get("seed", 0))
    train, _ = build_dataset(config["dataset"])
    cfg = build_train_config(config["train"], seed)
    adversary = build_adversary(config["adversary"])
    _validate_cross_fields(cfg, adversary, train)
    n_out = train.n_classes if train.is_classification else train.y.shape[1]
    net = build_network(config["network"], train.n_features, n_out)
    specs = build_attack_specs(config["attacks"], train)
    report = soundness_harness(
        net, train.X, train.y, cfg, adversary, specs,
        trials=int(config["attacks"].get("trials", 10)),
        poisonable=train.poisonable,
        bound_method=config["train"].get("bound_method", "ibp"))
    report.to_json(out / "soundness.json")
    return {"soundness_passed": report.passed, "violations": report.violations,
            "trials": report.trials, "min_margin": report.min_margin}
