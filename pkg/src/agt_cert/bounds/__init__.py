"""Sound enclosures of the network forward pass, losses, and gradients
for inputs in a sup-norm ball, labels in a ball or flip set, and
parameters in a box."""

from .backward import (
    backward_bounds,
    backward_bounds_arrays,
    grad_bounds_sample,
    gradient_bounds_batch,
)
from .box import GradBounds, LayerBounds, ParamBox
from .forward import (
    crown_forward,
    forward_bounds_arrays,
    ibp_forward,
    logit_bounds_batch,
    tightest_forward,
)
from .losses import (
    ce_loss_bounds_arrays,
    loss_grad_bounds_ce,
    loss_grad_bounds_mse,
    mse_loss_bounds_arrays,
    softmax_bounds_arrays,
)

__all__ = [
    "GradBounds",
    "LayerBounds",
    "ParamBox",
    "backward_bounds",
    "backward_bounds_arrays",
    "ce_loss_bounds_arrays",
    "crown_forward",
    "forward_bounds_arrays",
    "grad_bounds_sample",
    "gradient_bounds_batch",
    "ibp_forward",
    "logit_bounds_batch",
    "loss_grad_bounds_ce",
    "loss_grad_bounds_mse",
    "mse_loss_bounds_arrays",
    "softmax_bounds_arrays",
    "tightest_forward",
]
