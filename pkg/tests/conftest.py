import pytest
import torch

from volgan.networks import new_bundle
from volgan.volume import phantom_corpus

SMALL_SHAPE = (32, 64, 64)


@pytest.fixture(scope="session")
def progan_bundle():
    b = new_bundle("progan", SMALL_SHAPE, channel_base=4, seed=0, with_encoder=True)
    b.stage = 5
    return b.freeze()


@pytest.fixture(scope="session")
def stylegan_bundle():
    b = new_bundle("stylegan", SMALL_SHAPE, channel_base=4, seed=0, with_encoder=True)
    b.stage = 5
    return b.freeze()


@pytest.fixture(scope="session")
def small_phantoms():
    return phantom_corpus(8, SMALL_SHAPE, base_seed=11)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
