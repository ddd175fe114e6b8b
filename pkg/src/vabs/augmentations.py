"""Stochastic training-time input transformations.

Three photometric effects model the mismatch between a background reference
captured earlier and the frame being processed: a global illumination shift
shared across channels, smaller per-channel shifts, and per-pixel Gaussian
noise.  A joint random crop then cuts the 12-channel stack and its label map
to the training size.  Probability-map channels are never shifted or noised;
semantic content does not change with lighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .errors import FrameTooSmallError, InvalidConfigError, ShapeMismatchError
from .frames import (
    ColorFrame,
    CURRENT_RGB,
    EMPTY_RGB,
    LabelMap,
    NetworkInput,
    RECENT_RGB,
)

# How illumination shifts are distributed over the three stacked frames:
#   empty-independent: current and recent share one shift, the empty
#                      background draws its own (the default; the network
#                      should see a lighting difference against the older
#                      reference)
#   independent:       three separate draws
#   shared:            one draw for all three
SHIFT_TOPOLOGIES = ("empty-independent", "independent", "shared")


@dataclass(frozen=True)
class IlluminationShift:
    """Additive per-channel offsets applied uniformly over a frame."""

    d: tuple[float, float, float]

    def __post_init__(self):
        d = tuple(float(v) for v in self.d)
        if len(d) != 3 or not all(math.isfinite(v) for v in d):
            raise InvalidConfigError("shift needs three finite components")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class AugmentationConfig:
    shared_std: float = 0.1
    channel_std: float = 0.04
    noise_std: float = 0.01
    crop_size: int = 224
    topology: str = "empty-independent"

    def __post_init__(self):
        for name in ("shared_std", "channel_std", "noise_std"):
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name} must be non-negative")
        if self.crop_size < 1:
            raise InvalidConfigError("crop_size must be positive")
        if self.topology not in SHIFT_TOPOLOGIES:
            raise InvalidConfigError(
                f"topology must be one of {SHIFT_TOPOLOGIES}"
            )


def sample_illumination(
    rng: np.random.Generator,
    shared_std: float = 0.1,
    channel_std: float = 0.04,
) -> IlluminationShift:
    """One shared Gaussian draw plus three independent per-channel draws."""
    shared = rng.normal(0.0, shared_std)
    per_channel = rng.normal(0.0, channel_std, size=3)
    return IlluminationShift(tuple(shared + per_channel))


def apply_illumination(frame: ColorFrame, shift: IlluminationShift) -> ColorFrame:
    """Add the per-channel offsets everywhere, clamped back to [0, 1]."""
    shifted = frame.pixels + np.asarray(shift.d, dtype=np.float64)
    return ColorFrame(np.clip(shifted, 0.0, 1.0))


def add_pixel_noise(
    frame: ColorFrame, rng: np.random.Generator, std: float = 0.01
) -> ColorFrame:
    """Independent Gaussian noise per pixel and channel, clamped to [0, 1]."""
    if std == 0.0:
        return frame
    noisy = frame.pixels + rng.normal(0.0, std, size=frame.pixels.shape)
    return ColorFrame(np.clip(noisy, 0.0, 1.0))


def random_crop_joint(
    network_input: NetworkInput,
    label: LabelMap,
    size: int,
    rng: np.random.Generator,
) -> tuple[NetworkInput, LabelMap]:
    """Cut the same uniformly drawn window from all 12 channels and the label."""
    h, w = network_input.shape
    if label.shape != (h, w):
        raise ShapeMismatchError(
            f"label shape {label.shape} differs from input {h}x{w}"
        )
    if h < size or w < size:
        raise FrameTooSmallError(
            f"frame {h}x{w} is smaller than the {size}x{size} crop"
        )
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    window = network_input.channels[top : top + size, left : left + size]
    labels = label.labels[top : top + size, left : left + size]
    return NetworkInput(window), LabelMap(labels)


def _shifts_for_topology(
    rng: np.random.Generator, config: AugmentationConfig
) -> tuple[IlluminationShift, IlluminationShift, IlluminationShift]:
    current = sample_illumination(rng, config.shared_std, config.channel_std)
    if config.topology == "shared":
        return current, current, current
    if config.topology == "empty-independent":
        empty = sample_illumination(rng, config.shared_std, config.channel_std)
        return current, current, empty
    recent = sample_illumination(rng, config.shared_std, config.channel_std)
    empty = sample_illumination(rng, config.shared_std, config.channel_std)
    return current, recent, empty


def augment_stack(
    network_input: NetworkInput,
    label: LabelMap,
    rng: np.random.Generator,
    config: AugmentationConfig = AugmentationConfig(),
) -> tuple[NetworkInput, LabelMap]:
    """Shift and noise the color channels, then jointly crop stack and label.

    Draw order is fixed (current shift, further shifts as the topology
    needs, then noise per frame group, then crop offsets), so results are
    reproducible from the generator state.
    """
    channels = np.array(network_input.channels, copy=True)
    shifts = _shifts_for_topology(rng, config)
    for group, shift in zip((CURRENT_RGB, RECENT_RGB, EMPTY_RGB), shifts):
        sl = slice(group[0], group[-1] + 1)
        channels[:, :, sl] = np.clip(
            channels[:, :, sl] + np.asarray(shift.d), 0.0, 1.0
        )
        if config.noise_std > 0:
            noise = rng.normal(
                0.0, config.noise_std, size=channels[:, :, sl].shape
            )
            channels[:, :, sl] = np.clip(channels[:, :, sl] + noise, 0.0, 1.0)
    return random_crop_joint(
        NetworkInput(channels), label, config.crop_size, rng
    )
