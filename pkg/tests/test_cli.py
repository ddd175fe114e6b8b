"""Command line behavior: exit codes, lock discipline, output layout."""

import csv

import numpy as np

from vabs.cli import main
from vabs.dataset import gt_path, load_descriptor, mask_path, read_image, write_image
from vabs.pipeline import evaluated_frames
from vabs.reports import REPORT_HEADER


MANIFEST = (
    "split_id,category,video,role\n"
    "1,mini,clip,test\n"
    "1,mini,clip2,train\n"
    "2,mini,clip2,test\n"
    "2,mini,clip,train\n"
)


def _write_perfect_masks(dataset_root, masks_root, category, video):
    descriptor = load_descriptor(dataset_root, category, video)
    for t in evaluated_frames(descriptor):
        gt = np.asarray(read_image(gt_path(dataset_root, category, video, t)))
        mask = np.where(gt > 127, 255, 0).astype(np.uint8)
        write_image(mask_path(masks_root, category, video, t), mask)


def test_splits_validate_bundled(capsys):
    assert main(["splits", "validate"]) == 0
    out = capsys.readouterr().out
    assert "18 splits, 53 videos covered" in out


def test_splits_validate_overlap_is_protocol_violation(tmp_path, capsys):
    manifest = tmp_path / "bad.csv"
    manifest.write_text("1,mini,clip,train\n1,mini,clip,test\n")
    assert main(["splits", "validate", "--manifest", str(manifest)]) == 5
    assert "both train and test" in capsys.readouterr().err


def test_splits_validate_malformed_row(tmp_path, capsys):
    manifest = tmp_path / "bad.csv"
    manifest.write_text("1,mini,clip\n")
    assert main(["splits", "validate", "--manifest", str(manifest)]) == 2
    assert "expected 4 fields" in capsys.readouterr().err


def test_missing_dataset_root(tmp_path, capsys):
    rc = main([
        "backgrounds",
        "--dataset-root", str(tmp_path / "absent"),
        "--cache-root", str(tmp_path / "cache"),
    ])
    assert rc == 2
    assert "does not exist" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text("mystery: 1\n")
    assert main(["eval", "--config", str(config)]) == 2
    assert "mystery" in capsys.readouterr().err


def test_bad_set_syntax(capsys):
    assert main(["eval", "--set", "oops"]) == 2
    assert "KEY=VALUE" in capsys.readouterr().err


def test_missing_checkpoint_is_data_error(mini_dataset, tmp_path, capsys):
    rc = main([
        "infer",
        "--dataset-root", str(mini_dataset),
        "--cache-root", str(tmp_path / "cache"),
        "--output-root", str(tmp_path / "runs"),
        "--checkpoint", str(tmp_path / "absent.ckpt"),
    ])
    assert rc == 3
    assert "cannot read" in capsys.readouterr().err


def test_foreign_lock_respected(mini_dataset, tmp_path, capsys):
    cache = tmp_path / "cache"
    cache.mkdir()
    (cache / ".lock").write_text("12345")
    rc = main([
        "fpm",
        "--dataset-root", str(mini_dataset),
        "--cache-root", str(cache),
    ])
    assert rc == 2
    assert "locked by another run" in capsys.readouterr().err
    # The foreign lock must survive untouched.
    assert (cache / ".lock").read_text() == "12345"


def test_backgrounds_writes_cache_and_config(mini_dataset, tmp_path, capsys):
    cache = tmp_path / "cache"
    rc = main([
        "backgrounds",
        "--dataset-root", str(mini_dataset),
        "--cache-root", str(cache),
        "--set", "empty_frame_heuristic.enabled=true",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mini/clip: " in out
    assert "background files written" in out
    assert (cache / "config.yaml").exists()
    assert not (cache / ".lock").exists()


def test_eval_writes_report_and_prints_f1(mini_dataset, tmp_path, capsys):
    masks = tmp_path / "masks"
    _write_perfect_masks(mini_dataset, masks, "mini", "clip")
    manifest = tmp_path / "splits.csv"
    manifest.write_text(MANIFEST)
    out = tmp_path / "report"
    rc = main([
        "eval",
        "--dataset-root", str(mini_dataset),
        "--masks", str(masks),
        "--out", str(out),
        "--split-id", "1",
        "--set", f"splits_manifest={manifest}",
    ])
    assert rc == 0
    assert "overall F1 = 1.0000" in capsys.readouterr().out
    assert (out / "config.yaml").exists()
    assert (out / "per_video.csv").exists()
    assert (out / "per_category.csv").exists()
    assert (out / "overall.csv").exists()
    assert (out / "f1_by_category.png").exists()
    assert not (out / ".lock").exists()


def _report_dir(root, method, scale):
    root.mkdir(parents=True)
    values = (
        0.9 * scale, 0.9 * scale, 0.1 / scale, 0.1 / scale,
        5.0 / scale, 0.9 * scale, 0.9 * scale,
    )
    with open(root / "per_category.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for category in ("c1", "c2"):
            writer.writerow(
                (method, category, "") + tuple(repr(v) for v in values)
            )
    return root


def test_rank_command(tmp_path, capsys):
    dir_a = _report_dir(tmp_path / "a", "a", 1.0)
    dir_b = _report_dir(tmp_path / "b", "b", 0.5)
    out = tmp_path / "ranked"
    rc = main(["rank", str(dir_a), str(dir_b), "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "a: R = 1.000, R_cat = 1.000" in printed
    assert "b: R = 2.000, R_cat = 2.000" in printed
    assert (out / "ranking.csv").exists()


def test_unknown_ablation_variant(mini_dataset, tmp_path, capsys):
    rc = main([
        "ablate",
        "--dataset-root", str(mini_dataset),
        "--cache-root", str(tmp_path / "cache"),
        "--output-root", str(tmp_path / "runs"),
        "--variants", "full,warp-drive",
    ])
    assert rc == 2
    assert "warp-drive" in capsys.readouterr().err
