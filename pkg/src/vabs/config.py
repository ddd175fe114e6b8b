"""Declarative run configuration: YAML file, command-line overrides, and
defaults, in that order of precedence (the cache-root environment variable
slots between flags and file).

Every command copies its fully resolved configuration into the directory it
writes, so outputs stay traceable to the settings that produced them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .augmentations import AugmentationConfig
from .dataset import CACHE_ROOT_ENV
from .errors import InvalidConfigError
from .losses import LossConfig
from .network import NetworkConfig
from .pipeline import AblationFlags
from .semantics import (
    DEFAULT_CLASS_COUNT,
    DEFAULT_FOREGROUND_CLASSES,
    ExternalSegmenterAdapter,
    PERSON_CLASS,
    Segmenter,
    StubSegmenter,
)
from .train import TrainConfig

# Keys whose values are free-form user mappings rather than known settings.
_FREE_KEYS = {"empty_frames", "frame_manifest"}


def _defaults() -> dict[str, Any]:
    return {
        "dataset_root": "dataset",
        "cache_root": "vabs_cache",
        "output_root": "runs",
        "split_id": 1,
        "splits_manifest": None,
        "method_name": "vabs",
        "theta": 0.5,
        "segmenter": {
            "kind": "stub",
            "entry_point": None,
            "class_count": DEFAULT_CLASS_COUNT,
            "person_class": PERSON_CLASS,
        },
        "foreground_classes": list(DEFAULT_FOREGROUND_CLASSES),
        "empty_frames": {},
        "empty_frame_heuristic": {
            "enabled": False,
            "threshold": 0.5,
            "max_fraction": 0.0,
        },
        "frame_manifest": {},
        "network": {
            "stage_widths": [64, 128, 256, 512],
            "convs_per_stage": 2,
            "dropout_rate": 0.25,
            "kernel_size": 3,
            "pool_size": 2,
        },
        "train": {
            "learning_rate": 1e-4,
            "beta1": 0.9,
            "beta2": 0.99,
            "epsilon": 1e-8,
            "batch_size": 8,
            "epochs": 50,
            "frames_per_video": 200,
            "seed": 0,
            "ablation": {
                "use_empty_bg": True,
                "use_recent_bg": True,
                "use_fpm": True,
                "use_illumination_aug": True,
            },
        },
        "loss": {"smoothing": 1.0, "loss_masking": True},
        "augmentation": {
            "shared_std": 0.1,
            "channel_std": 0.04,
            "noise_std": 0.01,
            "crop_size": 224,
            "topology": "empty-independent",
        },
    }


def _merge(base: dict, incoming: Mapping, path: str = "") -> None:
    for key, value in incoming.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise InvalidConfigError(f"unknown config key {where!r}")
        if (
            isinstance(base[key], dict)
            and key not in _FREE_KEYS
            and isinstance(value, Mapping)
        ):
            _merge(base[key], value, where)
        else:
            base[key] = (
                dict(value) if isinstance(value, Mapping) else value
            )


def _set_dotted(base: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = base
    free = False
    for part in parts[:-1]:
        if part in _FREE_KEYS:
            free = True
        if part not in node or not isinstance(node[part], dict):
            raise InvalidConfigError(f"unknown config key {dotted!r}")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node and not free:
        raise InvalidConfigError(f"unknown config key {dotted!r}")
    node[leaf] = value


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str
    cache_root: str
    output_root: str
    split_id: int
    splits_manifest: str | None
    method_name: str
    theta: float
    segmenter_kind: str
    segmenter_entry_point: str | None
    segmenter_class_count: int
    segmenter_person_class: int
    foreground_classes: tuple[int, ...]
    empty_frames: dict
    empty_frame_heuristic: dict
    frame_manifest: dict
    network: NetworkConfig
    train: TrainConfig
    loss: LossConfig
    augmentation: AugmentationConfig
    resolved: dict

    def __post_init__(self):
        if self.split_id < 1:
            raise InvalidConfigError("split_id must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise InvalidConfigError("theta must lie in (0, 1)")
        if self.segmenter_kind not in ("stub", "external"):
            raise InvalidConfigError(
                f"segmenter kind {self.segmenter_kind!r} must be stub or external"
            )

    def build_segmenter(self) -> Segmenter:
        if self.segmenter_kind == "stub":
            return StubSegmenter(
                class_count=self.segmenter_class_count,
                person_class=self.segmenter_person_class,
            )
        if not self.segmenter_entry_point:
            raise InvalidConfigError(
                "external segmenter needs an entry_point (module:attribute)"
            )
        return ExternalSegmenterAdapter(self.segmenter_entry_point)


def load_run_config(
    config_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    merged = _defaults()
    if config_path is not None:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise InvalidConfigError(f"cannot read config: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InvalidConfigError(
                f"config {config_path} is not valid YAML: {exc}"
            ) from exc
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            raise InvalidConfigError(
                f"config {config_path} must be a mapping at the top level"
            )
        _merge(merged, data)

    env_cache = os.environ.get(CACHE_ROOT_ENV)
    if env_cache:
        merged["cache_root"] = env_cache

    for dotted, value in (overrides or {}).items():
        _set_dotted(merged, dotted, value)

    try:
        network = NetworkConfig(
            stage_widths=tuple(merged["network"]["stage_widths"]),
            convs_per_stage=int(merged["network"]["convs_per_stage"]),
            dropout_rate=float(merged["network"]["dropout_rate"]),
            kernel_size=int(merged["network"]["kernel_size"]),
            pool_size=int(merged["network"]["pool_size"]),
        )
        ablation = AblationFlags(
            use_empty_bg=bool(merged["train"]["ablation"]["use_empty_bg"]),
            use_recent_bg=bool(merged["train"]["ablation"]["use_recent_bg"]),
            use_fpm=bool(merged["train"]["ablation"]["use_fpm"]),
            use_illumination_aug=bool(
                merged["train"]["ablation"]["use_illumination_aug"]
            ),
        )
        train = TrainConfig(
            learning_rate=float(merged["train"]["learning_rate"]),
            beta1=float(merged["train"]["beta1"]),
            beta2=float(merged["train"]["beta2"]),
            epsilon=float(merged["train"]["epsilon"]),
            batch_size=int(merged["train"]["batch_size"]),
            epochs=int(merged["train"]["epochs"]),
            frames_per_video=int(merged["train"]["frames_per_video"]),
            seed=int(merged["train"]["seed"]),
            ablation=ablation,
        )
        loss = LossConfig(
            smoothing=float(merged["loss"]["smoothing"]),
            loss_masking=bool(merged["loss"]["loss_masking"]),
        )
        augmentation = AugmentationConfig(
            shared_std=float(merged["augmentation"]["shared_std"]),
            channel_std=float(merged["augmentation"]["channel_std"]),
            noise_std=float(merged["augmentation"]["noise_std"]),
            crop_size=int(merged["augmentation"]["crop_size"]),
            topology=str(merged["augmentation"]["topology"]),
        )
        return RunConfig(
            dataset_root=str(merged["dataset_root"]),
            cache_root=str(merged["cache_root"]),
            output_root=str(merged["output_root"]),
            split_id=int(merged["split_id"]),
            splits_manifest=(
                str(merged["splits_manifest"])
                if merged["splits_manifest"] is not None
                else None
            ),
            method_name=str(merged["method_name"]),
            theta=float(merged["theta"]),
            segmenter_kind=str(merged["segmenter"]["kind"]),
            segmenter_entry_point=merged["segmenter"]["entry_point"],
            segmenter_class_count=int(merged["segmenter"]["class_count"]),
            segmenter_person_class=int(merged["segmenter"]["person_class"]),
            foreground_classes=tuple(
                int(i) for i in merged["foreground_classes"]
            ),
            empty_frames=dict(merged["empty_frames"]),
            empty_frame_heuristic=dict(merged["empty_frame_heuristic"]),
            frame_manifest=dict(merged["frame_manifest"]),
            network=network,
            train=train,
            loss=loss,
            augmentation=augmentation,
            resolved=merged,
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise InvalidConfigError(f"bad config value: {exc}") from exc


def write_resolved_config(config: RunConfig, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.yaml"
    path.write_text(yaml.safe_dump(config.resolved, sort_keys=True))
    return path
