"""Command line operator surface.

Subcommands cover the pipeline stages in their natural order: `backgrounds`
and `fpm` fill the cache, `train` fits a model for one split, `infer` writes
masks for the split's test videos, `eval` scores them, `rank` compares
report directories, `ablate` runs component studies, and `splits validate`
checks a manifest.  Exit codes: 0 success, 2 configuration problem, 3 data
problem, 4 numerical failure, 5 split-manifest violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import yaml

from .config import RunConfig, load_run_config, write_resolved_config
from .dataset import CacheLayout, discover_videos, load_descriptor
from .errors import (
    ConfigError,
    DataError,
    InvalidConfigError,
    NumericalError,
    VabsError,
    ValidationError,
)
from .network import load_checkpoint
from .pipeline import (
    AblationFlags,
    build_backgrounds_for_video,
    build_fpms_for_video,
    infer_video,
    resolve_empty_policy,
)
from .plots import comparison_bar_chart
from .reports import REPORT_HEADER, evaluate_run, rank_reports
from .semantics import ForegroundClassSet
from .splits import (
    SplitTable,
    bundled_manifest_path,
    category_coverage_report,
    load_splits,
)
from .train import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_VALIDATION = 5

ABLATION_VARIANTS = {
    "full": AblationFlags(),
    "no-empty": AblationFlags(use_empty_bg=False),
    "no-recent": AblationFlags(use_recent_bg=False),
    "no-fpm": AblationFlags(use_fpm=False),
    "no-aug": AblationFlags(use_illumination_aug=False),
    "current-only": AblationFlags(use_empty_bg=False, use_recent_bg=False),
}
DEFAULT_VARIANTS = "full,no-empty,no-recent,no-fpm,no-aug"


@contextmanager
def output_lock(directory: Path):
    """Guard a directory against concurrent writers with a pid lock file."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InvalidConfigError(
            f"{directory} is locked by another run; remove {lock} if stale"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _parse_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise InvalidConfigError(f"--set needs KEY=VALUE, got {item!r}")
        try:
            overrides[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise InvalidConfigError(
                f"--set value for {key!r} is not valid YAML: {exc}"
            ) from exc
    for attr, key in (
        ("dataset_root", "dataset_root"),
        ("cache_root", "cache_root"),
        ("output_root", "output_root"),
        ("split_id", "split_id"),
        ("seed", "train.seed"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(getattr(args, "config", None), _parse_overrides(args))


def _split_table(config: RunConfig) -> SplitTable:
    manifest = config.splits_manifest or bundled_manifest_path()
    return load_splits(manifest)


def _require_dataset(config: RunConfig) -> None:
    if not Path(config.dataset_root).is_dir():
        raise InvalidConfigError(
            f"dataset root {config.dataset_root} does not exist"
        )


def cmd_backgrounds(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    segmenter = config.build_segmenter()
    fg = ForegroundClassSet(config.foreground_classes)
    cache = CacheLayout(Path(config.cache_root))
    with output_lock(Path(config.cache_root)):
        write_resolved_config(config, config.cache_root)
        for descriptor in discover_videos(config.dataset_root):
            policy = resolve_empty_policy(
                config.dataset_root, descriptor,
                config.empty_frames, config.empty_frame_heuristic,
                segmenter, fg,
            )
            written = build_backgrounds_for_video(
                config.dataset_root, cache, descriptor, policy
            )
            print(
                f"{descriptor.category}/{descriptor.video}: "
                f"{written} background files written"
            )
    return EXIT_OK


def cmd_fpm(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    segmenter = config.build_segmenter()
    fg = ForegroundClassSet(config.foreground_classes)
    cache = CacheLayout(Path(config.cache_root))
    with output_lock(Path(config.cache_root)):
        for descriptor in discover_videos(config.dataset_root):
            written = build_fpms_for_video(
                config.dataset_root, cache, descriptor, segmenter, fg
            )
            print(
                f"{descriptor.category}/{descriptor.video}: "
                f"{written} probability maps written"
            )
    return EXIT_OK


def _train_dir(config: RunConfig, args: argparse.Namespace) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(config.output_root) / f"train_split{config.split_id:02d}"


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    spec = _split_table(config).split(config.split_id)
    out_dir = _train_dir(config, args)
    with output_lock(out_dir):
        write_resolved_config(config, out_dir)
        train(
            spec, config.train, config.network,
            config.dataset_root, config.cache_root, out_dir,
            config.loss, config.augmentation, config.frame_manifest,
        )
    print(f"training complete; checkpoints in {out_dir}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    spec = _split_table(config).split(config.split_id)
    checkpoint = (
        Path(args.checkpoint) if args.checkpoint
        else _train_dir(config, args) / "best.ckpt"
    )
    model, _ = load_checkpoint(checkpoint)
    masks_root = (
        Path(args.out) if getattr(args, "out", None)
        else Path(config.output_root) / f"masks_split{config.split_id:02d}"
    )
    cache = CacheLayout(Path(config.cache_root))
    with output_lock(masks_root):
        write_resolved_config(config, masks_root)
        for category, video in sorted(spec.test_videos):
            descriptor = load_descriptor(config.dataset_root, category, video)
            count = infer_video(
                model, config.dataset_root, cache, descriptor, masks_root,
                theta=config.theta, flags=config.train.ablation,
            )
            print(f"{category}/{video}: {count} masks written")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    spec = _split_table(config).split(config.split_id)
    masks_root = (
        Path(args.masks) if args.masks
        else Path(config.output_root) / f"masks_split{config.split_id:02d}"
    )
    out_dir = (
        Path(args.out) if getattr(args, "out", None)
        else Path(config.output_root) / f"report_split{config.split_id:02d}"
    )
    with output_lock(out_dir):
        write_resolved_config(config, out_dir)
        report = evaluate_run(
            masks_root, config.dataset_root, spec, out_dir, config.method_name
        )
    f1 = report.overall.F1
    shown = f"{float(f1):.4f}" if f1 is not None else "undefined"
    print(f"report written to {out_dir}; overall F1 = {shown}")
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    with output_lock(out_dir):
        scores = rank_reports(list(args.reports), out_dir)
    for method in sorted(scores):
        print(
            f"{method}: R = {float(scores[method].R):.3f}, "
            f"R_cat = {float(scores[method].R_cat):.3f}"
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_dataset(config)
    spec = _split_table(config).split(config.split_id)
    names = (args.variants or DEFAULT_VARIANTS).split(",")
    for name in names:
        if name not in ABLATION_VARIANTS:
            raise InvalidConfigError(
                f"unknown ablation variant {name!r}; "
                f"choose from {sorted(ABLATION_VARIANTS)}"
            )
    out_base = (
        Path(args.out) if getattr(args, "out", None)
        else Path(config.output_root) / f"ablate_split{config.split_id:02d}"
    )
    cache = CacheLayout(Path(config.cache_root))
    overall_rows = []
    overall_f1 = {}
    report_dirs = []
    with output_lock(out_base):
        write_resolved_config(config, out_base)
        for name in names:
            flags = ABLATION_VARIANTS[name]
            run_cfg = dataclasses.replace(config.train, ablation=flags)
            run_dir = out_base / name
            model = train(
                spec, run_cfg, config.network,
                config.dataset_root, config.cache_root, run_dir / "train",
                config.loss, config.augmentation, config.frame_manifest,
            )
            for category, video in sorted(spec.test_videos):
                descriptor = load_descriptor(
                    config.dataset_root, category, video
                )
                infer_video(
                    model, config.dataset_root, cache, descriptor,
                    run_dir / "masks", theta=config.theta, flags=flags,
                )
            report = evaluate_run(
                run_dir / "masks", config.dataset_root, spec,
                run_dir / "report", method=name,
            )
            report_dirs.append(run_dir / "report")
            row = (name, "", "") + tuple(
                "" if v is None else repr(float(v))
                for v in report.overall.as_dict().values()
            )
            overall_rows.append(row)
            overall_f1[name] = (
                float(report.overall.F1)
                if report.overall.F1 is not None else 0.0
            )
            print(f"variant {name}: overall F1 = {overall_f1[name]:.4f}")
        with open(out_base / "comparison.csv", "w", newline="") as fh:
            import csv as _csv

            writer = _csv.writer(fh)
            writer.writerow(REPORT_HEADER)
            writer.writerows(overall_rows)
        comparison_bar_chart(
            overall_f1, out_base / "comparison_f1.png",
            title="Overall F-measure by ablation variant",
        )
        if len(report_dirs) >= 2:
            rank_reports(report_dirs, out_base)
    print(f"ablation study written to {out_base}")
    return EXIT_OK


def cmd_splits_validate(args: argparse.Namespace) -> int:
    manifest = args.manifest or bundled_manifest_path()
    table = load_splits(manifest)
    tested = {key for s in table.splits for key in s.test_videos}
    print(f"{len(table.splits)} splits, {len(tested)} videos covered")
    coverage = category_coverage_report(table)
    for split_id, categories in sorted(coverage.items()):
        print(
            f"note: split {split_id} tests categories with no training "
            f"examples: {', '.join(categories)}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration file")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config entry (dotted path, YAML value)",
    )
    common.add_argument("--dataset-root", dest="dataset_root")
    common.add_argument("--cache-root", dest="cache_root")
    common.add_argument("--output-root", dest="output_root")
    common.add_argument("--split-id", dest="split_id", type=int)
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(
        prog="vabs",
        description="Video-agnostic background subtraction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "backgrounds", parents=[common],
        help="build median background references into the cache",
    )
    p.set_defaults(func=cmd_backgrounds)

    p = sub.add_parser(
        "fpm", parents=[common],
        help="build foreground probability maps into the cache",
    )
    p.set_defaults(func=cmd_fpm)

    p = sub.add_parser("train", parents=[common], help="train one split")
    p.add_argument("--out", help="training output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "infer", parents=[common],
        help="write masks for the split's test videos",
    )
    p.add_argument("--checkpoint", help="checkpoint file (default: best.ckpt)")
    p.add_argument("--out", help="masks output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score masks")
    p.add_argument("--masks", help="masks directory")
    p.add_argument("--out", help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "rank", help="compare report directories by average rank"
    )
    p.add_argument("reports", nargs="+", help="report directories")
    p.add_argument("--out", required=True, help="ranking output directory")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser(
        "ablate", parents=[common], help="train/score ablation variants"
    )
    p.add_argument(
        "--variants",
        help=f"comma-separated variant names (default {DEFAULT_VARIANTS})",
    )
    p.add_argument("--out", help="study output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("splits", help="split-manifest utilities")
    ssub = p.add_subparsers(dest="splits_command", required=True)
    v = ssub.add_parser("validate", help="validate a split manifest")
    v.add_argument("--manifest", help="manifest path (default: bundled)")
    v.set_defaults(func=cmd_splits_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VabsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
