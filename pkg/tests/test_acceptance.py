"""Acceptance gate.

One test per criterion.  Every test prints a single
`ACCEPTANCE NN PASS/FAIL: name` line so the suite's verdict can be read off
the run log directly.  Tolerances are asserted exactly as stated; nothing
here is weakened to pass.
"""

import csv
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
import torch

from vabs import (
    AdamConfig,
    NetworkConfig,
    build_model,
    jaccard_loss,
    relaxed_jaccard,
)
from vabs.augmentations import add_pixel_noise, sample_illumination
from vabs.background import StreamingMedian, temporal_median
from vabs.cli import main as cli_main
from vabs.errors import (
    DuplicateTestAssignmentError,
    TrainTestOverlapError,
    UncoveredVideoError,
)
from vabs.evaluation import (
    ConfusionCounts,
    MetricVector,
    RankingScores,
    aggregate,
    confusion,
    metrics,
    rankings,
)
from vabs.frames import BinaryMask, ColorFrame, Label, LabelMap
from vabs.semantics import (
    ClassProbabilityField,
    DEFAULT_FOREGROUND_CLASSES,
    ForegroundClassSet,
    compute_fpm,
)
from vabs.splits import bundled_manifest_path, load_splits
from vabs.train import fit_batch

from _synthetic import build_e2e_dataset


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number:02d} FAIL: {name}")
        raise
    print(f"\nACCEPTANCE {number:02d} PASS: {name}")


def _oracle_relaxed(y, y_hat, smoothing):
    inter = smoothing
    union = smoothing
    for a, b in zip(y.ravel().tolist(), y_hat.ravel().tolist()):
        inter += a * b
        union += a + b - a * b
    return inter / union


def test_criterion_01_loss_value():
    with criterion(1, "soft-overlap score matches the worked example and a "
                      "scalar oracle"):
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        y_hat = np.array([[0.5, 0.5], [0.0, 0.0]])
        assert relaxed_jaccard(y, y_hat, smoothing=1.0) == 0.6

        rng = np.random.default_rng(101)
        for _ in range(50):
            y = (rng.random((8, 8)) < 0.5).astype(np.float64)
            y_hat = rng.random((8, 8))
            smoothing = float(rng.uniform(0.1, 4.0))
            got = relaxed_jaccard(y, y_hat, smoothing=smoothing)
            assert abs(got - _oracle_relaxed(y, y_hat, smoothing)) <= 1e-12


def test_criterion_02_loss_gradient():
    with criterion(2, "loss gradient matches central finite differences "
                      "to 1e-5"):
        rng = np.random.default_rng(202)
        h = 1e-4
        for _ in range(5):
            y = torch.from_numpy(
                (rng.random((8, 8)) < 0.4).astype(np.float64)
            )
            base = rng.uniform(0.1, 0.9, (8, 8))
            y_hat = torch.from_numpy(base.copy()).requires_grad_(True)
            jaccard_loss(y, y_hat).backward()
            analytic = y_hat.grad.numpy()

            def value(arr):
                return float(jaccard_loss(y, torch.from_numpy(arr)))

            for i in range(8):
                for j in range(8):
                    plus = base.copy()
                    plus[i, j] += h
                    minus = base.copy()
                    minus[i, j] -= h
                    fd = (value(plus) - value(minus)) / (2 * h)
                    rel = abs(analytic[i, j] - fd) / max(
                        abs(analytic[i, j]), abs(fd), 1e-12
                    )
                    assert rel < 1e-5


def test_criterion_03_network_shapes_and_gradients():
    with criterion(3, "network keeps shape, is deterministic in eval mode, "
                      "and passes a parameter gradient check"):
        model = build_model(NetworkConfig(), seed=0)
        model.train(False)
        rng = np.random.default_rng(303)
        for side in (64, 224):
            x = torch.from_numpy(
                rng.uniform(0, 1, (1, 12, side, side)).astype(np.float32)
            )
            with torch.no_grad():
                out = model(x)
            assert out.shape == (1, 1, side, side)
            assert float(out.min()) > 0.0
            assert float(out.max()) < 1.0
            if side == 64:
                with torch.no_grad():
                    again = model(x)
                assert torch.equal(out, again)

        # Gradient check at a smooth operating point: a single stage avoids
        # max-pool tie kinks, and shifted BatchNorm affine parameters keep
        # every ReLU input far from zero, so the step-1e-4 finite difference
        # is well conditioned.
        cfg = NetworkConfig(
            stage_widths=(8,), convs_per_stage=2, dropout_rate=0.0
        )
        smooth = build_model(cfg, seed=11).double()
        smooth.train(False)
        with torch.no_grad():
            for mod in smooth.modules():
                if isinstance(mod, torch.nn.BatchNorm2d):
                    mod.bias.fill_(3.0)
                    mod.weight.fill_(0.5)
        rng = np.random.default_rng(7)
        x = torch.from_numpy(rng.uniform(0, 1, (1, 12, 16, 16)))
        w = torch.from_numpy(rng.normal(0, 1, (1, 1, 16, 16)))

        def scalar():
            return (smooth(x) * w).sum()

        smooth.zero_grad()
        scalar().backward()
        params = dict(smooth.named_parameters())
        names = sorted(params)
        pick = np.random.default_rng(5)
        h = 1e-4
        for _ in range(20):
            name = names[pick.integers(len(names))]
            p = params[name]
            idx = tuple(pick.integers(s) for s in p.shape)
            analytic = p.grad[idx].item()
            with torch.no_grad():
                orig = p[idx].item()
                p[idx] = orig + h
                plus = scalar().item()
                p[idx] = orig - h
                minus = scalar().item()
                p[idx] = orig
            fd = (plus - minus) / (2 * h)
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-12)
            assert rel < 1e-3


def test_criterion_04_overfit_one_batch():
    with criterion(4, "a reduced-width model overfits one example to "
                      "F1 >= 0.95 within 500 steps"):
        torch.manual_seed(0)
        rng = np.random.default_rng(42)
        height = width = 224
        square = (slice(60, 124), slice(80, 144))
        chan = np.zeros((12, height, width), dtype=np.float32)
        base = 0.2 + 0.1 * np.linspace(0, 1, width)[None, :]
        for c in range(3):
            chan[c] = base
            chan[4 + c] = base
            chan[8 + c] = base
        chan[3] = 0.1
        chan[7] = 0.1
        chan[11] = 0.1
        for c in range(3):
            chan[c][square] = 0.9
        chan[3][square] = 0.9
        chan = np.clip(
            chan + rng.normal(0, 0.02, chan.shape).astype(np.float32), 0, 1
        )
        target = np.zeros((height, width), dtype=np.float32)
        target[square] = 1.0

        model = build_model(
            NetworkConfig(
                stage_widths=(16, 32, 64), convs_per_stage=2, dropout_rate=0.0
            ),
            seed=3,
        )
        losses, f1, steps = fit_batch(
            model,
            torch.from_numpy(chan[None]),
            torch.from_numpy(target[None]),
            steps=500,
            adam_cfg=AdamConfig(),
            target_f1=0.95,
            check_every=10,
        )
        assert steps <= 500
        assert f1 >= 0.95
        assert losses[-1] < losses[0]


def _sorted_median(values):
    ordered = sorted(values)
    k = len(ordered)
    if k % 2:
        return ordered[k // 2]
    return (ordered[k // 2 - 1] + ordered[k // 2]) * 0.5


def _median_oracle(stack):
    out = np.empty(stack.shape[1:], dtype=np.float64)
    for i in range(stack.shape[1]):
        for j in range(stack.shape[2]):
            for c in range(stack.shape[3]):
                out[i, j, c] = _sorted_median(stack[:, i, j, c].tolist())
    return out


def test_criterion_05_median_oracle():
    with criterion(5, "streaming median is bit-identical to per-pixel "
                      "sorting and suppresses minority outliers"):
        rng = np.random.default_rng(505)
        for _ in range(20):
            # Quantized values force duplicates; duplicates stress removal.
            stack = rng.integers(0, 7, size=(10, 16, 16, 3)) / 6.0
            expected = _median_oracle(stack)

            stream = StreamingMedian(window=10)
            for frame in stack:
                stream.push(frame)
            assert np.array_equal(stream.median(), expected)

            batch = temporal_median([ColorFrame(f) for f in stack])
            assert np.array_equal(batch.pixels, expected)

        # Fewer than ceil(n/2) outliers never move the median.
        stack = np.full((10, 16, 16, 3), 0.35)
        for k in range(4):
            stack[k, 2:9, 3:12, :] = 0.95
        result = temporal_median([ColorFrame(f) for f in stack])
        assert np.array_equal(result.pixels, np.full((16, 16, 3), 0.35))


def test_criterion_06_probability_fusion():
    with criterion(6, "foreground probability plus its complement is one; "
                      "uniform fields give the exact subset ratio"):
        rng = np.random.default_rng(606)
        for _ in range(25):
            k = int(rng.integers(5, 20))
            raw = rng.random((6, 6, k)) + 1e-3
            field = ClassProbabilityField(raw / raw.sum(axis=2, keepdims=True))
            size = int(rng.integers(1, k))
            fg = ForegroundClassSet(
                tuple(rng.choice(k, size=size, replace=False).tolist())
            )
            fpm = compute_fpm(field, fg)
            rest = compute_fpm(field, fg.complement(k))
            assert np.abs(fpm.values + rest.values - 1.0).max() <= 1e-6

        uniform = ClassProbabilityField(np.full((8, 8, 150), 1.0 / 150))
        fg = ForegroundClassSet(DEFAULT_FOREGROUND_CLASSES)
        assert len(fg.indices) == 12
        fpm = compute_fpm(uniform, fg)
        assert np.all(fpm.values == 0.08)


def _confusion_oracle(pred, labels):
    tp = fp = tn = fn = 0
    for p, label in zip(pred.ravel().tolist(), labels.ravel().tolist()):
        if label == int(Label.FOREGROUND):
            tp += p
            fn += not p
        elif label in (int(Label.BACKGROUND), int(Label.HARD_SHADOW)):
            fp += p
            tn += not p
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def test_criterion_07_metrics_oracle():
    with criterion(7, "confusion counting and the seven metrics match a "
                      "pixel-loop oracle with exact identities"):
        rng = np.random.default_rng(707)
        values = np.array([int(v) for v in Label], dtype=np.uint8)
        for _ in range(100):
            labels = rng.choice(values, size=(32, 32))
            labels.ravel()[:5] = values  # all five classes present
            pred = rng.random((32, 32)) < 0.5
            counts = confusion(BinaryMask(pred), LabelMap(labels))
            expected = _confusion_oracle(pred, labels)
            assert counts == expected

            vec = metrics(counts)
            c = counts
            assert vec.Re == Fraction(c.tp, c.tp + c.fn)
            assert vec.Sp == Fraction(c.tn, c.tn + c.fp)
            assert vec.Re + vec.FNR == 1
            assert vec.Sp + vec.FPR == 1
            assert vec.PWC == 100 * Fraction(c.fp + c.fn, c.evaluated)
            assert vec.Pr == Fraction(c.tp, c.tp + c.fp)


def test_criterion_08_reference_table_aggregates():
    with criterion(8, "transcribed reference per-category scores aggregate "
                      "to the reference overall within 0.0005"):
        per_category_f1 = (
            0.8713, 0.6797, 0.6987, 0.6282, 0.8581, 0.9233,
            0.7499, 0.7743, 0.7967, 0.9693, 0.7051,
        )
        reference_overall = 0.7868
        per_video = {}
        video_to_category = {}
        for i, value in enumerate(per_category_f1):
            key = f"cat{i:02d}/video"
            per_video[key] = MetricVector(
                Re=None, Sp=None, FPR=None, FNR=None, PWC=None, Pr=None,
                F1=value,
            )
            video_to_category[key] = f"cat{i:02d}"
        _, overall = aggregate(per_video, video_to_category)
        assert abs(float(overall.F1) - reference_overall) < 0.0005


def test_criterion_09_augmentation_statistics():
    with criterion(9, "illumination shift and pixel noise sampling hit "
                      "their target statistics"):
        rng = np.random.default_rng(123)
        draws = np.array([sample_illumination(rng).d for _ in range(10000)])
        covariances = [
            float(np.cov(draws[:, i], draws[:, j])[0, 1])
            for i, j in ((0, 1), (0, 2), (1, 2))
        ]
        for value in covariances:
            assert abs(value - 0.01) <= 0.001
        shared_std = float(np.sqrt(np.mean(covariances)))
        assert abs(shared_std - 0.1) <= 0.005
        # Pairwise differences cancel the shared component, leaving twice
        # the per-channel variance.
        diffs = np.concatenate([
            draws[:, 0] - draws[:, 1],
            draws[:, 1] - draws[:, 2],
            draws[:, 0] - draws[:, 2],
        ])
        extra_std = float(np.sqrt(diffs.var() / 2))
        assert abs(extra_std - 0.04) <= 0.002

        frame = ColorFrame(np.full((128, 128, 3), 0.5))
        noised = add_pixel_noise(frame, np.random.default_rng(9))
        noise_std = float((noised.pixels - frame.pixels).std())
        assert abs(noise_std - 0.01) <= 0.0005


def test_criterion_10_split_protocol(tmp_path):
    with criterion(10, "bundled split manifest satisfies the protocol and "
                       "violations raise their named errors"):
        table = load_splits(bundled_manifest_path())
        assert len(table.splits) == 18
        assert len(table.universe) == 53
        tested = []
        for split in table.splits:
            assert not (split.train_videos & split.test_videos)
            tested.extend(split.test_videos)
        assert len(tested) == len(set(tested)) == 53
        assert set(tested) == set(table.universe)

        overlap = tmp_path / "overlap.csv"
        overlap.write_text("1,cat,a,train\n1,cat,a,test\n")
        with pytest.raises(TrainTestOverlapError):
            load_splits(overlap)

        duplicate = tmp_path / "duplicate.csv"
        duplicate.write_text("1,cat,a,test\n2,cat,a,test\n")
        with pytest.raises(DuplicateTestAssignmentError):
            load_splits(duplicate)

        uncovered = tmp_path / "uncovered.csv"
        uncovered.write_text("1,cat,a,test\n1,cat,b,train\n")
        with pytest.raises(UncoveredVideoError):
            load_splits(uncovered)


def test_criterion_11_rankings():
    with criterion(11, "average-rank scores match hand-computed ranks and "
                       "survive monotone rescaling"):
        values = {
            "A": {
                "c1": dict(Re=0.9, Sp=0.9, FPR=0.1, FNR=0.1, PWC=5.0,
                           Pr=0.9, F1=0.9),
                "c2": dict(Re=0.6, Sp=0.6, FPR=0.4, FNR=0.4, PWC=20.0,
                           Pr=0.6, F1=0.6),
            },
            "B": {
                "c1": dict(Re=0.8, Sp=0.8, FPR=0.2, FNR=0.2, PWC=10.0,
                           Pr=0.8, F1=0.8),
                "c2": dict(Re=0.85, Sp=0.85, FPR=0.15, FNR=0.15, PWC=8.0,
                           Pr=0.85, F1=0.85),
            },
            "C": {
                "c1": dict(Re=0.7, Sp=0.7, FPR=0.3, FNR=0.3, PWC=10.0,
                           Pr=0.7, F1=0.7),
                "c2": dict(Re=0.5, Sp=0.5, FPR=0.5, FNR=0.5, PWC=30.0,
                           Pr=0.5, F1=0.5),
            },
        }

        def table(cells):
            return {
                method: {
                    cat: MetricVector(**cell) for cat, cell in cats.items()
                }
                for method, cats in cells.items()
            }

        scores = rankings(table(values))
        # Hand ranks: in c1, A is first on all seven metrics while B and C
        # tie on PWC (average rank 2.5); in c2 the order is B, A, C on all
        # seven.  Category means put B, A, C on every metric overall.
        assert scores["A"] == RankingScores(R=Fraction(2), R_cat=Fraction(3, 2))
        assert scores["B"] == RankingScores(
            R=Fraction(1), R_cat=Fraction(43, 28)
        )
        assert scores["C"] == RankingScores(
            R=Fraction(3), R_cat=Fraction(83, 28)
        )

        rescaled = {
            method: {
                cat: dict(cell, PWC=cell["PWC"] / 2, F1=cell["F1"] ** 0.5)
                for cat, cell in cats.items()
            }
            for method, cats in values.items()
        }
        assert rankings(table(rescaled)) == scores


def test_criterion_12_end_to_end(tmp_path):
    with criterion(12, "cache, train, infer, and eval stages reach "
                       "F1 >= 0.7 on a held-out synthetic video"):
        dataset_root, manifest = build_e2e_dataset(tmp_path)
        config = tmp_path / "config.yaml"
        config.write_text(
            f"dataset_root: {dataset_root}\n"
            f"cache_root: {tmp_path / 'cache'}\n"
            f"output_root: {tmp_path / 'runs'}\n"
            "split_id: 1\n"
            f"splits_manifest: {manifest}\n"
            "method_name: e2e\n"
            "empty_frame_heuristic:\n"
            "  enabled: true\n"
            "network:\n"
            "  stage_widths: [8, 16, 32]\n"
            "train:\n"
            "  learning_rate: 0.002\n"
            "  batch_size: 4\n"
            "  epochs: 2\n"
            "  frames_per_video: 96\n"
            "  seed: 7\n"
            "augmentation:\n"
            "  crop_size: 64\n"
        )
        for stage in ("backgrounds", "fpm", "train", "infer", "eval"):
            assert cli_main([stage, "--config", str(config)]) == 0, stage

        with open(tmp_path / "runs" / "report_split01" / "overall.csv",
                  newline="") as fh:
            rows = list(csv.reader(fh))
        record = dict(zip(rows[0], rows[1]))
        assert float(record["F1"]) >= 0.7
