import os
from unittest.mock import Mock

import numpy as np
import pytest

from src.handlers.case_model import CaseModel
from src.handlers.toy_generator import generate
from src.helpers.tokenizer import Tokenizer
from src.schemas.model_config import InitConfig, ModelConfig
from src.schemas.toy_config import ToyConfig

TINY_TEXTS = [
    "change the color of the disc to red",
    "remove the square",
    "add a cross in the empty cell",
    "replace the frame with a disc",
]


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CASELAB_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set CASELAB_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def mock_logger():
    return Mock()


@pytest.fixture
def tiny_config():
    return ModelConfig(
        image_size=16,
        patch_size=8,
        d=8,
        n_heads=2,
        vit_layers=1,
        shift_layers=1,
        d_e=8,
        max_text_len=12,
        ffn_mult=2,
    )


@pytest.fixture
def tiny_tokenizer():
    return Tokenizer.from_texts(TINY_TEXTS, max_text_len=12)


@pytest.fixture
def tiny_model(tiny_config, tiny_tokenizer):
    return CaseModel.create(tiny_config, tiny_tokenizer, InitConfig(seed=1))


@pytest.fixture
def random_image():
    rng = np.random.default_rng(5)
    return rng.uniform(0.0, 1.0, size=(16, 16, 3)).astype(np.float32)


@pytest.fixture
def tiny_toy():
    return generate(ToyConfig(image_size=16, triplets=8, corpus=4, group_size=2, seed=3))


@pytest.fixture
def toy_model(tiny_config, tiny_toy):
    texts = [t.query_text for t in tiny_toy.triplets]
    tokenizer = Tokenizer.from_texts(texts, max_text_len=12)
    return CaseModel.create(tiny_config, tokenizer, InitConfig(seed=2))
