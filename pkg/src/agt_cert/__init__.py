"""Certified training under data poisoning.

Train with SGD while soundly tracking per-parameter intervals containing
every parameter vector an in-budget poisoning adversary could reach, then
turn the final box into certificates: certified accuracy, test-loss
bounds, and backdoor robustness.
"""

__version__ = "0.1.0"

from .bounds import (
    GradBounds,
    LayerBounds,
    ParamBox,
    crown_forward,
    grad_bounds_sample,
    ibp_forward,
    tightest_forward,
)
from .certify import (
    BackdoorRegion,
    Certificate,
    backdoor_certificate,
    certified_accuracy,
    certified_prediction,
    loss_bound_testset,
)
from .data import Dataset, gen_halfmoons, load_csv_regression, load_idx_images, pca_fit
from .intervals import IntervalMatrix, IntervalVector
from .network import (
    DenseReluNetwork,
    LossKind,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    sgd_train,
)
from .training import (
    AgtResult,
    BoundedAdversary,
    UnboundedAdversary,
    agt_train,
    descent_bounds_bounded,
    descent_bounds_unbounded,
    semax,
    semin,
)

__all__ = [
    "AgtResult",
    "BackdoorRegion",
    "BoundedAdversary",
    "Certificate",
    "Dataset",
    "DenseReluNetwork",
    "GradBounds",
    "IntervalMatrix",
    "IntervalVector",
    "LayerBounds",
    "LossKind",
    "ParamBox",
    "TrainConfig",
    "UnboundedAdversary",
    "agt_train",
    "backdoor_certificate",
    "certified_accuracy",
    "certified_prediction",
    "crown_forward",
    "descent_bounds_bounded",
    "descent_bounds_unbounded",
    "gen_halfmoons",
    "grad_bounds_sample",
    "ibp_forward",
    "load_checkpoint",
    "load_csv_regression",
    "load_idx_images",
    "loss_bound_testset",
    "pca_fit",
    "save_checkpoint",
    "semax",
    "semin",
    "sgd_train",
    "tightest_forward",
]
