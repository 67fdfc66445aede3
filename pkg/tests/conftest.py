import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(ROOT / "scripts"))


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """Desk-scale MNIST split (2000 train / 500 test) written as IDX files."""
    pytest.importorskip("mlxtend")
    from make_mnist_subset import write_subset

    out = tmp_path_factory.mktemp("mnist")
    write_subset(out)
    return out


@pytest.fixture(scope="session")
def desk_data(mnist_dir):
    """(train, test) datasets: binarized at 128 and downsampled to 14x14."""
    from spikegibbs.data_io import load_dataset

    def load(name):
        return load_dataset(mnist_dir / f"{name}-images-idx3-ubyte",
                            mnist_dir / f"{name}-labels-idx1-ubyte", 128, 2)

    return load("train"), load("test")


@pytest.fixture(scope="session")
def desk_model(desk_data):
    """Labeled RBM with 100 hidden units trained on the desk-scale split."""
    from spikegibbs.trainer import TrainConfig, build_labeled_rbm

    return build_labeled_rbm(desk_data[0], TrainConfig(n_hidden=100, seed=1)).rbm


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split("_")[2])):
        terminalreporter.write_line(f"{_acceptance[name]:7s} {name}")
