import pytest

from _synthetic import write_mini_video


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """Read-only three-video dataset plus one PTZ video for the fast tests."""
    root = tmp_path_factory.mktemp("mini") / "dataset"
    write_mini_video(root, "mini", "clip")
    write_mini_video(root, "mini", "clip2", drift=0.03)
    write_mini_video(root, "mini", "clip3", flicker=0.01, flicker_seed=5)
    write_mini_video(root, "PTZ", "pan", gradient_axis=0)
    return root
