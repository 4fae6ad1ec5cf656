"""Correlation-refining attention tracker: python surface of the C++ core."""

from corrtrack._core import (
    AttentionBlock,
    box_giou,
    box_iou,
    default_config,
    normalize_config,
    sinusoidal_2d,
)

__all__ = [
    "AttentionBlock",
    "box_giou",
    "box_iou",
    "default_config",
    "normalize_config",
    "sinusoidal_2d",
]
