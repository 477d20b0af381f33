import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmdisaster.data_io import SynthConfig, synth_generate  # noqa: E402
from mmdisaster.embedders import EmbedderSet  # noqa: E402
from mmdisaster.model import ModelConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return ModelConfig(num_classes=3, d=8, d_t=6, d_i=6, d_g=4)


@pytest.fixture(scope="session")
def clean_dataset():
    return synth_generate(SynthConfig(num_classes=3, samples_per_class=20, noise_level=0.0, seed=7))


@pytest.fixture(scope="session")
def embedders():
    return EmbedderSet()


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
