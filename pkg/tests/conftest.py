import numpy as np
import pytest

from opensslac import dataset


def write_fake_mnist(root, per_class=40, test_per_class=4, seed=0):
    """Random-pixel IDX files under the standard MNIST names."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for prefix, n in (("train", per_class), ("t10k", test_per_class)):
        labels = np.repeat(np.arange(10), n).astype(np.uint8)
        images = rng.integers(0, 256, size=(len(labels), 28, 28), dtype=np.uint8)
        dataset.write_idx(root / f"{prefix}-images.idx3-ubyte", images)
        dataset.write_idx(root / f"{prefix}-labels.idx1-ubyte", labels)
    return root


@pytest.fixture
def fake_mnist_dir(tmp_path):
    return write_fake_mnist(tmp_path / "mnist")


# small enough to train a handful of steps in well under a second
TINY_CNN = dict(batch_size=8, z_length=4, gen_base_filters=4, gen_filters=(4, 4), disc_filters=(4, 4, 4),
                max_steps=6, min_steps_before_stopping=2, eval_every=2, patience=4,
                labelled_per_class=20, unlabelled_per_class=10)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
