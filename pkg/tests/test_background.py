"""Temporal median references: batch, policy-driven, and streaming forms."""

import numpy as np
import pytest

from vabs import (
    AutoFirst100,
    BackgroundPair,
    ColorFrame,
    ManualFrameList,
    PTZ,
    StreamingMedian,
    empty_background,
    ptz_backgrounds,
    recent_background,
    temporal_median,
)
from vabs.background import PTZ_EMPTY_WINDOW, PTZ_RECENT_WINDOW
from vabs.errors import (
    EmptySequenceError,
    IndexOutOfRangeError,
    InvalidConfigError,
    NoEligibleFramesError,
    ShapeMismatchError,
)


def _frames(values, shape=(4, 4, 3)):
    return [ColorFrame(np.full(shape, v)) for v in values]


def _random_frames(rng, count, shape=(4, 4, 3)):
    return [ColorFrame(rng.random(shape)) for _ in range(count)]


def sort_oracle(frames):
    """Per-pixel sort; even counts average the two central order statistics."""
    stack = np.sort(np.stack([f.pixels for f in frames]), axis=0)
    k = len(frames)
    if k % 2 == 1:
        return stack[k // 2]
    return (stack[k // 2 - 1] + stack[k // 2]) * 0.5


def test_odd_count_is_middle_order_statistic():
    result = temporal_median(_frames([1.0, 0.0, 0.5]))
    assert np.all(result.pixels == 0.5)


def test_even_count_averages_central_pair():
    result = temporal_median(_frames([0.0, 1.0, 2 / 3, 1 / 3]))
    assert np.all(result.pixels == (1 / 3 + 2 / 3) * 0.5)


def test_matches_sort_oracle_bitwise():
    rng = np.random.default_rng(2)
    for count in (1, 2, 5, 8):
        frames = _random_frames(rng, count)
        np.testing.assert_array_equal(
            temporal_median(frames).pixels, sort_oracle(frames)
        )


def test_outlier_suppression():
    frames = [ColorFrame(np.full((4, 4, 3), 0.2)) for _ in range(10)]
    for i in range(4):  # 4 < ceil(10 / 2) corrupted frames
        corrupted = np.full((4, 4, 3), 0.2)
        corrupted[i, i] = 0.97
        frames[2 * i] = ColorFrame(corrupted)
    assert np.all(temporal_median(frames).pixels == 0.2)


def test_empty_sequence_rejected():
    with pytest.raises(EmptySequenceError):
        temporal_median([])


def test_mixed_shapes_rejected():
    with pytest.raises(ShapeMismatchError):
        temporal_median(
            [ColorFrame(np.zeros((4, 4, 3))), ColorFrame(np.zeros((4, 5, 3)))]
        )


def test_empty_background_uses_selected_frames_only():
    rng = np.random.default_rng(7)
    frames = _random_frames(rng, 10)
    policy = AutoFirst100(foreground_free=(1, 4, 9))
    result = empty_background(frames, policy)
    np.testing.assert_array_equal(
        result.pixels, sort_oracle([frames[0], frames[3], frames[8]])
    )


def test_empty_background_requires_eligible_frames():
    frames = _frames([0.1, 0.2])
    with pytest.raises(NoEligibleFramesError):
        empty_background(frames, AutoFirst100())
    with pytest.raises(NoEligibleFramesError):
        empty_background(frames, AutoFirst100(foreground_free=()))


def test_empty_background_manual_list():
    rng = np.random.default_rng(8)
    frames = _random_frames(rng, 6)
    result = empty_background(frames, ManualFrameList((1, 3)))
    np.testing.assert_array_equal(
        result.pixels, sort_oracle([frames[0], frames[2]])
    )
    with pytest.raises(IndexOutOfRangeError):
        empty_background(frames, ManualFrameList((7,)))


def test_empty_background_rejects_ptz_policy():
    with pytest.raises(InvalidConfigError):
        empty_background(_frames([0.1]), PTZ())


def test_recent_background_window():
    rng = np.random.default_rng(9)
    frames = _random_frames(rng, 12)
    np.testing.assert_array_equal(
        recent_background(frames, 2).pixels, frames[0].pixels
    )
    np.testing.assert_array_equal(
        recent_background(frames, 5, window=3).pixels,
        sort_oracle(frames[1:4]),
    )
    # head truncation: fewer preceding frames than the window
    np.testing.assert_array_equal(
        recent_background(frames, 4, window=100).pixels,
        sort_oracle(frames[:3]),
    )
    with pytest.raises(IndexOutOfRangeError):
        recent_background(frames, 1)
    with pytest.raises(IndexOutOfRangeError):
        recent_background(frames, 13)
    with pytest.raises(InvalidConfigError):
        recent_background(frames, 3, window=0)


def test_ptz_two_window_pair_on_ramp_video():
    frames = _frames([i / 255 for i in range(1, 102)], shape=(2, 2, 3))
    pair = ptz_backgrounds(frames, 101)
    assert isinstance(pair, BackgroundPair)
    assert PTZ_EMPTY_WINDOW == 100 and PTZ_RECENT_WINDOW == 30
    # medians over frames 1..100 and 71..100 of the ramp
    assert np.allclose(pair.empty_bg.pixels, 50.5 / 255, atol=1e-12)
    assert np.allclose(pair.recent_bg.pixels, 85.5 / 255, atol=1e-12)
    np.testing.assert_array_equal(
        pair.empty_bg.pixels, sort_oracle(frames[:100])
    )
    np.testing.assert_array_equal(
        pair.recent_bg.pixels, sort_oracle(frames[70:100])
    )


def test_background_pair_shape_check():
    with pytest.raises(ShapeMismatchError):
        BackgroundPair(
            ColorFrame(np.zeros((2, 2, 3))), ColorFrame(np.zeros((3, 2, 3)))
        )


def test_streaming_median_tracks_sort_oracle():
    rng = np.random.default_rng(21)
    frames = [rng.random((4, 4, 3)) for _ in range(10)]
    streaming = StreamingMedian(window=4)
    for t, frame in enumerate(frames, start=1):
        streaming.push(frame)
        window = frames[max(0, t - 4) : t]
        stack = np.sort(np.stack(window), axis=0)
        k = len(window)
        expected = (
            stack[k // 2]
            if k % 2
            else (stack[k // 2 - 1] + stack[k // 2]) * 0.5
        )
        np.testing.assert_array_equal(streaming.median(), expected)
        assert len(streaming) == k


def test_streaming_median_handles_duplicate_values():
    streaming = StreamingMedian(window=3)
    for value in (0.5, 0.5, 0.5, 0.25, 0.25):
        streaming.push(np.full((2, 2), value))
    assert np.all(streaming.median() == 0.25)


def test_streaming_median_validation():
    with pytest.raises(InvalidConfigError):
        StreamingMedian(window=0)
    streaming = StreamingMedian(window=3)
    with pytest.raises(EmptySequenceError):
        streaming.median()
    streaming.push(np.zeros((2, 2)))
    with pytest.raises(ShapeMismatchError):
        streaming.push(np.zeros((3, 2)))
