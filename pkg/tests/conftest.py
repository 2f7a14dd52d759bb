import shutil

import numpy as np
import pytest

from adasim.cli import main
from adasim.core import ClassEmbedding, Dataset, EmbeddedInstance, OmegaParams
from adasim.data import SynthConfig, synth_generate

def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )

def pytest_configure(config):
    config.addinivalue_line("markers", "slow: mark test as slow to run")

def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        # --runslow given in cli: do not skip slow tests
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

class Workspace:
    def __init__(self, directory):
        self.directory = directory

    def path(self, name):
        return self.directory / name

    def run(self, *args, expect=0):
        argv = [str(arg) for arg in args]
        code = main(argv)
        if code != expect:
            pytest.fail(f"Command adasim {' '.join(argv)} (running in {self.directory}) exited with {code}, expected {expect}")
        return code

    def __str__(self):
        return str(self.directory)

@pytest.fixture(scope="class")
def workspace(tmp_path_factory):
    dir = tmp_path_factory.mktemp("base") / "workspace"
    dir = dir.resolve()
    dir.mkdir()

    yield Workspace(dir)

    shutil.rmtree(dir)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def unit_omega():
    return OmegaParams(1.0, 1.0, 0.0, 0.0)

@pytest.fixture
def two_class_data():
    """Two seen classes in 2-D with features near twice their attribute vector, one unseen class"""
    noise = np.random.default_rng(5).normal(scale=0.05, size=(30, 2))
    psi = {0: [1.0, 0.0], 1: [0.0, 1.0], 2: [0.7, 0.7]}
    instances = [
        EmbeddedInstance(i, i % 3, 2.0 * np.array(psi[i % 3]) + noise[i])
        for i in range(30)
    ]
    return Dataset(
        classes=tuple(ClassEmbedding(label, vector) for label, vector in psi.items()),
        instances=tuple(instances),
        seen=frozenset({0, 1}),
        unseen=frozenset({2}),
    )

@pytest.fixture(scope="session")
def small_synth():
    return synth_generate(SynthConfig(n_seen=8, n_unseen=2, d_s=3, d_t=4, instances_per_class=5, feature_noise=0.02, seed=3))
