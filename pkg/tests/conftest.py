import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jmtfusion.data import DatasetConfig, generate_dataset  # noqa: E402
from jmtfusion.fusion import FusionConfig  # noqa: E402
from jmtfusion.harness.config import RunConfig  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_fusion():
    return FusionConfig(model_dim=16, num_heads=2, head_output_dim=2)


@pytest.fixture(scope="session")
def tiny_data_config():
    return DatasetConfig(n_subjects=4, sequences_per_subject=6, frames=32, k_folds=4, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_data_config):
    return generate_dataset(tiny_data_config)


@pytest.fixture
def tiny_run_config(tiny_data_config):
    return RunConfig(
        fusion=FusionConfig(model_dim=8, num_heads=2, temporal_pooling="none"),
        data=tiny_data_config,
        batch_size=8,
        max_epochs=4,
        patience=2,
        learning_rate=3e-3,
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
