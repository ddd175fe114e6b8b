"""Video-agnostic training loop: frame selection, batching, optimization,
logging, and per-epoch checkpoints.

An epoch is one shuffled pass over (training videos x selected frames).
Every stochastic choice flows from the run seed, so a rerun with identical
configs and data reproduces the loss trajectory exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from .adam import AdamConfig, AdamState, adam_step, init_adam_state
from .augmentations import (
    AugmentationConfig,
    augment_stack,
    random_crop_joint,
)
from .dataset import CacheLayout, load_descriptor, load_label_map, load_roi
from .errors import (
    IndexOutOfRangeError,
    InvalidConfigError,
    NotEnoughLabeledFramesError,
    NumericalError,
)
from .frames import NetworkInput, VideoDescriptor
from .losses import LossConfig, training_target
from .network import (
    NetworkConfig,
    SegmentationNetwork,
    build_model,
    save_checkpoint,
)
from .pipeline import AblationFlags, apply_ablation, assemble_stack
from .splits import SplitSpec


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    batch_size: int = 8
    epochs: int = 50
    frames_per_video: int = 200
    seed: int = 0
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be positive")
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be positive")
        if self.frames_per_video < 1:
            raise InvalidConfigError("frames_per_video must be positive")

    def adam(self) -> AdamConfig:
        return AdamConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )


def select_training_frames(
    descriptor: VideoDescriptor,
    n: int = 200,
    manifest: Sequence[int] | None = None,
) -> list[int]:
    """Manifest indices when given, otherwise n frames evenly spaced over
    the labeled span."""
    if manifest is not None:
        indices = [int(i) for i in manifest]
        for i in indices:
            if not 1 <= i <= descriptor.frame_count:
                raise IndexOutOfRangeError(
                    f"{descriptor.category}/{descriptor.video}: manifest "
                    f"frame {i} outside 1..{descriptor.frame_count}"
                )
        return indices
    first, last = descriptor.temporal_roi
    labeled = last - first + 1
    if labeled < n:
        raise NotEnoughLabeledFramesError(
            f"{descriptor.category}/{descriptor.video}: {labeled} labeled "
            f"frames but {n} requested"
        )
    return [first + (k * labeled) // n for k in range(n)]


def batch_jaccard_loss(
    outputs: torch.Tensor,
    targets: torch.Tensor,
    valids: torch.Tensor | None = None,
    smoothing: float = 1.0,
) -> torch.Tensor:
    """Mean over the batch of (1 - relaxed Jaccard) per sample."""
    inter = targets * outputs
    union = targets + outputs - inter
    if valids is not None:
        inter = inter * valids
        union = union * valids
    dims = tuple(range(1, outputs.ndim))
    j = (smoothing + inter.sum(dim=dims)) / (smoothing + union.sum(dim=dims))
    return (1.0 - j).mean()


def model_parameters(model: SegmentationNetwork) -> dict[str, torch.Tensor]:
    return {name: p for name, p in model.named_parameters()}


def gradient_step(
    model: SegmentationNetwork,
    x: torch.Tensor,
    y: torch.Tensor,
    valid: torch.Tensor | None,
    state: AdamState,
    adam_cfg: AdamConfig,
    loss_cfg: LossConfig,
) -> tuple[float, torch.Tensor, AdamState]:
    """One forward/backward/update; returns the loss, raw outputs, new state."""
    model.train(True)
    model.zero_grad(set_to_none=True)
    out = model(x)[:, 0]
    loss = batch_jaccard_loss(out, y, valid, loss_cfg.smoothing)
    loss.backward()
    params = {n: p.detach() for n, p in model.named_parameters()}
    grads = {
        n: p.grad if p.grad is not None else torch.zeros_like(p)
        for n, p in model.named_parameters()
    }
    new_params, state = adam_step(params, grads, state, adam_cfg)
    with torch.no_grad():
        for n, p in model.named_parameters():
            p.copy_(new_params[n])
    return float(loss.detach()), out.detach(), state


def batch_f1(
    outputs: torch.Tensor,
    targets: torch.Tensor,
    valid: torch.Tensor | None = None,
    theta: float = 0.5,
) -> float:
    """F-measure of the thresholded outputs against binary targets."""
    pred = outputs.detach() > theta
    truth = targets > 0.5
    keep = (
        valid > 0.5 if valid is not None
        else torch.ones_like(truth, dtype=torch.bool)
    )
    tp = int((pred & truth & keep).sum())
    fp = int((pred & ~truth & keep).sum())
    fn = int((~pred & truth & keep).sum())
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def fit_batch(
    model: SegmentationNetwork,
    x: torch.Tensor,
    y: torch.Tensor,
    valid: torch.Tensor | None = None,
    steps: int = 500,
    adam_cfg: AdamConfig = AdamConfig(),
    loss_cfg: LossConfig = LossConfig(),
    target_f1: float | None = None,
    check_every: int = 10,
) -> tuple[list[float], float, int]:
    """Optimize one fixed batch; stop early once the target F-measure holds.

    Returns the loss history, the last measured F-measure, and the number of
    steps actually run.
    """
    state = init_adam_state(model_parameters(model))
    losses: list[float] = []
    f1 = 0.0
    for step in range(1, steps + 1):
        loss, out, state = gradient_step(
            model, x, y, valid, state, adam_cfg, loss_cfg
        )
        if not math.isfinite(loss):
            raise NumericalError(f"loss became non-finite at step {step}")
        losses.append(loss)
        if step % check_every == 0 or step == steps:
            f1 = batch_f1(out, y, valid)
            if target_f1 is not None and f1 >= target_f1:
                return losses, f1, step
    return losses, f1, len(losses)


def _prepare_example(
    dataset_root: str | Path,
    cache: CacheLayout,
    descriptor: VideoDescriptor,
    t: int,
    roi: np.ndarray | None,
    rng: np.random.Generator,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    aug_cfg: AugmentationConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    stack = assemble_stack(dataset_root, cache, descriptor, t)
    label = load_label_map(
        dataset_root, descriptor.category, descriptor.video, t, roi
    )
    if train_cfg.ablation.use_illumination_aug:
        stack, label = augment_stack(stack, label, rng, aug_cfg)
    else:
        stack, label = random_crop_joint(stack, label, aug_cfg.crop_size, rng)
    channels = apply_ablation(stack.channels, train_cfg.ablation)
    target, valid = training_target(label, loss_cfg)
    return (
        channels.transpose(2, 0, 1).astype(np.float32),
        target.values.astype(np.float32),
        valid.values.astype(np.float32) if valid is not None else None,
    )


def train(
    split: SplitSpec,
    train_cfg: TrainConfig,
    net_cfg: NetworkConfig,
    dataset_root: str | Path,
    cache_root: str | Path,
    out_dir: str | Path,
    loss_cfg: LossConfig = LossConfig(),
    aug_cfg: AugmentationConfig = AugmentationConfig(),
    frame_manifest: Mapping[str, Sequence[int]] | None = None,
) -> SegmentationNetwork:
    """Train on the split's training videos; returns the final model.

    Writes `training_log.csv` (step, epoch, loss, timestamp), `last.ckpt`
    after every epoch, and `best.ckpt` for the lowest mean epoch loss.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = CacheLayout(Path(cache_root))

    descriptors: dict[tuple[str, str], VideoDescriptor] = {}
    rois: dict[tuple[str, str], np.ndarray | None] = {}
    examples: list[tuple[str, str, int]] = []
    for cat, vid in sorted(split.train_videos):
        descriptor = load_descriptor(dataset_root, cat, vid)
        descriptors[(cat, vid)] = descriptor
        rois[(cat, vid)] = load_roi(dataset_root, cat, vid)
        manifest = (frame_manifest or {}).get(f"{cat}/{vid}")
        for t in select_training_frames(
            descriptor, train_cfg.frames_per_video, manifest
        ):
            examples.append((cat, vid, t))
    if not examples:
        raise NotEnoughLabeledFramesError(
            f"split {split.id} has no training examples"
        )

    model = build_model(net_cfg, train_cfg.seed)
    torch.manual_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    adam_cfg = train_cfg.adam()
    state = init_adam_state(model_parameters(model))

    log_path = out_dir / "training_log.csv"
    if not log_path.exists():
        log_path.write_text("step,epoch,loss,timestamp\n")

    step = 0
    best_epoch_loss = math.inf
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(examples))
        epoch_losses: list[float] = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [examples[i] for i in order[start : start + train_cfg.batch_size]]
            xs, ys, vs = [], [], []
            for cat, vid, t in batch:
                cx, cy, cv = _prepare_example(
                    dataset_root, cache, descriptors[(cat, vid)], t,
                    rois[(cat, vid)], rng, train_cfg, loss_cfg, aug_cfg,
                )
                xs.append(cx)
                ys.append(cy)
                vs.append(cv)
            x = torch.from_numpy(np.stack(xs))
            y = torch.from_numpy(np.stack(ys))
            valid = (
                torch.from_numpy(np.stack(vs)) if vs[0] is not None else None
            )
            loss, _, state = gradient_step(
                model, x, y, valid, state, adam_cfg, loss_cfg
            )
            step += 1
            if not math.isfinite(loss):
                raise NumericalError(
                    f"loss became non-finite at step {step} (epoch {epoch})"
                )
            epoch_losses.append(loss)
            with open(log_path, "a") as fh:
                fh.write(
                    f"{step},{epoch},{loss!r},{datetime.now().isoformat()}\n"
                )
        save_checkpoint(out_dir / "last.ckpt", model, step)
        mean_loss = sum(epoch_losses) / len(epoch_losses)
        if mean_loss < best_epoch_loss:
            best_epoch_loss = mean_loss
            save_checkpoint(out_dir / "best.ckpt", model, step)
    return model
