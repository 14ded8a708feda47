import numpy as np
import pytest

from ppnet import CompiledModel, ModelConfig, build_bio_model
from ppnet.synthetic import write_synthetic_database


@pytest.fixture(scope="session")
def bio_state():
    return build_bio_model(ModelConfig())


@pytest.fixture(scope="session")
def compiled_bio(bio_state):
    return CompiledModel(bio_state)


@pytest.fixture(scope="session")
def synth_db(tmp_path_factory):
    """Miniature on-disk image-quality database (3 refs x 4 levels)."""
    root = tmp_path_factory.mktemp("synthdb")
    manifest_path = write_synthetic_database(root, n_refs=3, levels=4, size=32)
    return manifest_path


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
