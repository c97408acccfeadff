"""
Pytest configuration and shared fixtures for integration tests.
"""
import pytest
import tempfile
import shutil
from pathlib import Path

from models.model_config import ModelConfig
from models.synth_spec import SynthSpec
from services.dataset_service import synth_dataset
from services.train_service import TrainService

CONFIG_DIR = Path(__file__).parent / "config"


@pytest.fixture
def temp_workspace():
    """
    Create a temporary workspace directory for testing.
    Yields the path and cleans up after the test.
    """
    temp_dir = tempfile.mkdtemp()
    workspace_path = Path(temp_dir)

    yield workspace_path

    # Cleanup
    shutil.rmtree(temp_dir)


@pytest.fixture
def tiny_config_path():
    return CONFIG_DIR / "tiny_model.yaml"


@pytest.fixture
def tiny_config(tiny_config_path):
    """
    Tiny model: F=6, hidden 16, latent 3, codebooks of 4 entries, 200 steps.
    """
    return ModelConfig.from_file(tiny_config_path)


@pytest.fixture
def tiny_spec():
    """
    3 accents x 2 speakers x 4 utterances of 5 frames with 6 features.
    """
    return SynthSpec.from_file(CONFIG_DIR / "tiny_synth.yaml")


@pytest.fixture
def tiny_dataset(tiny_spec):
    return synth_dataset(tiny_spec)


@pytest.fixture(scope="module")
def trained_tiny():
    """
    A tiny model trained once per test module on the tiny dataset.
    Returns (TrainingResult, Dataset).
    """
    data = synth_dataset(SynthSpec.from_file(CONFIG_DIR / "tiny_synth.yaml"))
    result = TrainService(ModelConfig.from_file(CONFIG_DIR / "tiny_model.yaml")).train(data)
    return result, data
