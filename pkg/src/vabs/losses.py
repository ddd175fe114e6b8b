"""Relaxed Jaccard objective with optional per-pixel validity masking.

The relaxed index replaces hard set intersection and union with their
probabilistic counterparts so the measure is differentiable in the
prediction.  A smoothing constant keeps it defined when both the target and
the prediction are empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidConfigError, ShapeMismatchError
from .frames import BinaryMask, Label, LabelMap


@dataclass(frozen=True)
class LossConfig:
    smoothing: float = 1.0
    loss_masking: bool = True

    def __post_init__(self):
        if not self.smoothing > 0:
            raise InvalidConfigError("smoothing constant must be positive")


def _values(x):
    # Bare arrays / tensors pass through; torch.Tensor.values is a method and
    # must not be mistaken for wrapped pixel data.
    if isinstance(x, (np.ndarray, torch.Tensor)):
        return x
    for attr in ("values", "pixels", "labels"):
        inner = getattr(x, attr, None)
        if inner is not None and not callable(inner):
            return inner
    return x


def relaxed_jaccard(y, y_hat, smoothing: float = 1.0, valid=None):
    """(T + sum(Y * Yhat)) / (T + sum(Y + Yhat - Y * Yhat)) over valid pixels.

    Accepts binary masks / probability maps, bare numpy arrays, or torch
    tensors; with tensor input the result is a scalar tensor that carries
    gradients, otherwise a float.
    """
    if not smoothing > 0:
        raise InvalidConfigError("smoothing constant must be positive")
    yv, pv = _values(y), _values(y_hat)
    if tuple(yv.shape) != tuple(pv.shape):
        raise ShapeMismatchError(
            f"target shape {tuple(yv.shape)} != prediction shape "
            f"{tuple(pv.shape)}"
        )
    is_torch = isinstance(pv, torch.Tensor) or isinstance(yv, torch.Tensor)
    if is_torch:
        pv = pv if isinstance(pv, torch.Tensor) else torch.as_tensor(np.asarray(pv))
        yv = torch.as_tensor(np.asarray(yv)) if not isinstance(yv, torch.Tensor) else yv
        yv = yv.to(pv.dtype)
    else:
        yv = np.asarray(yv, dtype=np.float64)
        pv = np.asarray(pv, dtype=np.float64)

    intersection = yv * pv
    union = yv + pv - intersection
    if valid is not None:
        vv = _values(valid)
        if tuple(vv.shape) != tuple(yv.shape):
            raise ShapeMismatchError(
                f"validity mask shape {tuple(vv.shape)} != {tuple(yv.shape)}"
            )
        if is_torch:
            vv = torch.as_tensor(np.asarray(vv)) if not isinstance(vv, torch.Tensor) else vv
            vv = vv.to(pv.dtype)
        else:
            vv = np.asarray(vv, dtype=np.float64)
        intersection = intersection * vv
        union = union * vv
    result = (smoothing + intersection.sum()) / (smoothing + union.sum())
    return result if is_torch else float(result)


def jaccard_loss(y, y_hat, config: LossConfig = LossConfig(), valid=None):
    """1 minus the relaxed Jaccard index; 0 exactly at a perfect prediction."""
    return 1.0 - relaxed_jaccard(
        y, y_hat, smoothing=config.smoothing, valid=valid
    )


def training_target(
    label_map: LabelMap, config: LossConfig = LossConfig()
) -> tuple[BinaryMask, BinaryMask | None]:
    """Turn a reference label map into a loss target and validity mask.

    Foreground maps to 1; background and hard shadow map to 0.  With masking
    enabled, unknown-motion and outside-of-interest pixels drop out of the
    loss sums entirely.
    """
    labels = label_map.labels
    target = BinaryMask((labels == Label.FOREGROUND).astype(np.uint8))
    if not config.loss_masking:
        return target, None
    excluded = (labels == Label.UNKNOWN_MOTION) | (labels == Label.OUTSIDE_ROI)
    return target, BinaryMask((~excluded).astype(np.uint8))
