"""Fully convolutional encoder-decoder that maps 12-channel stacks to
per-pixel foreground probabilities.

Encoder stages are VGG-like pairs of 3x3 convolutions, each followed by batch
normalization and a rectified linear unit, with spatial dropout before every
2x2 max-pool.  The decoder mirrors the encoder with stride-2 up-convolutions
(also batch-normalized) and concatenates each encoder stage's pre-pool
activation into the matching decoder stage.  A final 3x3 convolution and a
sigmoid produce the probability map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import (
    CheckpointError,
    InvalidConfigError,
    ShapeNotPoolableError,
)
from .frames import BinaryMask, INPUT_CHANNELS, NetworkInput, ProbabilityMap

_CHECKPOINT_MAGIC = b"VABSCKPT"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    """Channel widths and regularization settings of the segmenter."""

    stage_widths: tuple[int, ...] = (64, 128, 256, 512)
    convs_per_stage: int = 2
    dropout_rate: float = 0.25
    kernel_size: int = 3
    pool_size: int = 2
    in_channels: int = INPUT_CHANNELS

    def __post_init__(self):
        widths = tuple(int(w) for w in self.stage_widths)
        if not widths or any(w < 1 for w in widths):
            raise InvalidConfigError(
                "stage_widths must be non-empty positive integers"
            )
        object.__setattr__(self, "stage_widths", widths)
        if self.convs_per_stage < 1:
            raise InvalidConfigError("convs_per_stage must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError("dropout_rate must lie in [0, 1)")
        if self.kernel_size != 3:
            raise InvalidConfigError("kernel_size is fixed at 3")
        if self.pool_size != 2:
            raise InvalidConfigError("pool_size is fixed at 2")
        if self.in_channels < 1:
            raise InvalidConfigError("in_channels must be positive")

    @property
    def pool_steps(self) -> int:
        """Number of pooling (and matching up-convolution) steps."""
        return len(self.stage_widths) - 1

    def to_dict(self) -> dict:
        return {
            "stage_widths": list(self.stage_widths),
            "convs_per_stage": self.convs_per_stage,
            "dropout_rate": self.dropout_rate,
            "kernel_size": self.kernel_size,
            "pool_size": self.pool_size,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        return cls(
            stage_widths=tuple(data["stage_widths"]),
            convs_per_stage=int(data["convs_per_stage"]),
            dropout_rate=float(data["dropout_rate"]),
            kernel_size=int(data["kernel_size"]),
            pool_size=int(data["pool_size"]),
            in_channels=int(data.get("in_channels", INPUT_CHANNELS)),
        )


def _conv_block(in_ch: int, out_ch: int, convs: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    ch = in_ch
    for _ in range(convs):
        layers += [
            nn.Conv2d(ch, out_ch, kernel_size=3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        ]
        ch = out_ch
    return nn.Sequential(*layers)


class SegmentationNetwork(nn.Module):
    """See the module docstring for the layer recipe."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        widths = config.stage_widths
        convs = config.convs_per_stage

        self.encoder_stages = nn.ModuleList()
        ch = config.in_channels
        for w in widths:
            self.encoder_stages.append(_conv_block(ch, w, convs))
            ch = w
        self.dropouts = nn.ModuleList(
            nn.Dropout2d(config.dropout_rate) for _ in range(config.pool_steps)
        )
        self.pool = nn.MaxPool2d(config.pool_size)

        self.up_convs = nn.ModuleList()
        self.up_norms = nn.ModuleList()
        self.decoder_stages = nn.ModuleList()
        for i in range(config.pool_steps - 1, -1, -1):
            # Kernel 3 with stride 2, padding 1, output padding 1 doubles
            # the spatial size exactly.
            self.up_convs.append(
                nn.ConvTranspose2d(
                    widths[i + 1], widths[i], kernel_size=3, stride=2,
                    padding=1, output_padding=1,
                )
            )
            self.up_norms.append(nn.BatchNorm2d(widths[i]))
            self.decoder_stages.append(
                _conv_block(2 * widths[i], widths[i], convs)
            )
        self.head = nn.Conv2d(widths[0], 1, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        factor = self.config.pool_size ** self.config.pool_steps
        h, w = x.shape[-2], x.shape[-1]
        if h % factor or w % factor:
            raise ShapeNotPoolableError(
                f"input {h}x{w} is not divisible by {factor}; "
                f"apply pad_for_network first"
            )
        skips = []
        for i in range(self.config.pool_steps):
            x = self.encoder_stages[i](x)
            skips.append(x)
            x = self.pool(self.dropouts[i](x))
        x = self.encoder_stages[-1](x)
        for up, norm, stage, skip in zip(
            self.up_convs, self.up_norms, self.decoder_stages,
            reversed(skips),
        ):
            x = torch.relu(norm(up(x)))
            x = stage(torch.cat([x, skip], dim=1))
        return torch.sigmoid(self.head(x))


def build_model(config: NetworkConfig, seed: int) -> SegmentationNetwork:
    """Construct the network and initialize it deterministically from a seed.

    Weight tensors draw from a uniform distribution scaled by the inverse
    square root of their fan-in (elements per leading-dimension slice);
    normalization scales start at 1 and every bias at 0.
    """
    model = SegmentationNetwork(config)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.ndim > 1:
                fan_in = p.numel() // p.shape[0]
                bound = 1.0 / fan_in ** 0.5
                p.uniform_(-bound, bound, generator=gen)
            elif name.endswith("weight"):
                p.fill_(1.0)
            else:
                p.zero_()
    return model


def parameter_manifest(model: SegmentationNetwork) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Stable (name, shape) listing of every learnable parameter."""
    return tuple(
        (name, tuple(p.shape)) for name, p in model.named_parameters()
    )


def parameter_count(model: SegmentationNetwork) -> int:
    return sum(p.numel() for p in model.parameters())


@dataclass(frozen=True)
class CropRecord:
    """Remembers the pre-padding size so outputs can be cut back down."""

    height: int
    width: int

    def crop(self, values: np.ndarray) -> np.ndarray:
        return values[: self.height, : self.width]


def pad_for_network(
    network_input: NetworkInput, stages: int
) -> tuple[NetworkInput, CropRecord]:
    """Edge-replicate bottom and right up to the next multiple of 2**stages."""
    h, w = network_input.shape
    factor = 2 ** int(stages)
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    record = CropRecord(height=h, width=w)
    if pad_h == 0 and pad_w == 0:
        return network_input, record
    padded = np.pad(
        network_input.channels, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge"
    )
    return NetworkInput(padded), record


def input_to_tensor(
    network_input: NetworkInput, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """(H, W, 12) numpy stack to a (1, 12, H, W) torch tensor."""
    arr = network_input.channels.transpose(2, 0, 1)[None]
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)


def forward_map(
    model: SegmentationNetwork,
    network_input: NetworkInput,
    training: bool = False,
) -> ProbabilityMap:
    """Run one stack through the network and return its probability map.

    Evaluation mode freezes batch statistics and disables dropout, so repeat
    calls are identical.
    """
    was_training = model.training
    model.train(training)
    try:
        x = input_to_tensor(network_input, dtype=next(model.parameters()).dtype)
        if training:
            out = model(x)
        else:
            with torch.no_grad():
                out = model(x)
        values = out.detach().double().numpy()[0, 0]
    finally:
        model.train(was_training)
    # A saturated sigmoid can round to exactly 0 or 1 in finite precision;
    # nudge back inside the open interval.
    tiny = np.nextafter(0.0, 1.0)
    top = np.nextafter(1.0, 0.0)
    return ProbabilityMap(np.clip(values, tiny, top))


def binarize(output: ProbabilityMap, theta: float = 0.5) -> BinaryMask:
    """Foreground wherever the probability strictly exceeds theta."""
    if not 0.0 < theta < 1.0:
        raise InvalidConfigError(f"theta must lie in (0, 1); got {theta}")
    return BinaryMask((output.values > theta).astype(np.uint8))


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(path: str | Path, model: SegmentationNetwork, step: int) -> None:
    """Write config, step count, and all tensors as little-endian float32.

    Integer-valued state (batch counters) travels in the header so the binary
    section stays homogeneous.
    """
    tensors: list[tuple[str, np.ndarray]] = []
    int_scalars: dict[str, int] = {}
    for name, value in model.state_dict().items():
        arr = value.detach().cpu().numpy()
        if np.issubdtype(arr.dtype, np.integer):
            int_scalars[name] = int(arr)
        else:
            tensors.append((name, arr.astype("<f4")))
    header = {
        "format_version": _CHECKPOINT_VERSION,
        "step": int(step),
        "config": model.config.to_dict(),
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors
        ],
        "int_scalars": int_scalars,
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", _CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> tuple[SegmentationNetwork, int]:
    """Rebuild a model from a checkpoint, validating every tensor shape."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(raw) < len(_CHECKPOINT_MAGIC) + 12 or not raw.startswith(_CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    offset = len(_CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<IQ", raw, offset)
    if version != _CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset += 12
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    offset += header_len

    config = NetworkConfig.from_dict(header["config"])
    model = SegmentationNetwork(config)
    reference = model.state_dict()

    state: dict[str, torch.Tensor] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise CheckpointError(f"checkpoint truncated at tensor {name}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += nbytes
        if name not in reference:
            raise CheckpointError(f"unexpected tensor {name}")
        if tuple(reference[name].shape) != shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {shape}, "
                f"model {tuple(reference[name].shape)}"
            )
        state[name] = torch.from_numpy(
            arr.reshape(shape).astype(np.float32, copy=True)
        ).to(reference[name].dtype)
    for name, value in header.get("int_scalars", {}).items():
        if name not in reference:
            raise CheckpointError(f"unexpected scalar {name}")
        state[name] = torch.tensor(value, dtype=reference[name].dtype)

    missing = set(reference) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    model.load_state_dict(state)
    return model, int(header["step"])
