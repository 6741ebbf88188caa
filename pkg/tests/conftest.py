import numpy as np
import pytest

from edemajoint.encoders import ModelConfig, init_params
from edemajoint.synthgen import GenConfig, gen_dataset

TINY = dict(image_size=16, image_channels=(4, 8), embed_dim=8, text_width=8,
            text_layers=1, text_heads=2, text_ffn=16, max_seq_len=32)


@pytest.fixture(scope="session")
def small_split():
    return gen_dataset(GenConfig(n_labeled=24, n_unlabeled=16, image_size=16, seed=5))


@pytest.fixture(scope="session")
def tiny_model(small_split):
    return ModelConfig(vocab_size=len(small_split.vocabulary), **TINY)


@pytest.fixture
def tiny_params(tiny_model):
    return init_params(tiny_model, seed=1)


@pytest.fixture
def np_rng():
    return np.random.default_rng(0)
