"""U-Net lesion segmentation toolkit (python surface over the C++ core)."""

from ._core import (
    UNet,
    binarize,
    compose_report,
    concat_channels,
    conv2d,
    conv_transpose2d,
    dice_bce_loss,
    maxpool2d,
    quadratic_weighted_kappa,
    relu,
    segmentation_metrics,
    sigmoid,
)

__version__ = "0.1.0"

__all__ = [
    "UNet",
    "binarize",
    "compose_report",
    "concat_channels",
    "conv2d",
    "conv_transpose2d",
    "dice_bce_loss",
    "maxpool2d",
    "quadratic_weighted_kappa",
    "relu",
    "segmentation_metrics",
    "sigmoid",
]
