import os

import numpy as np
import pytest
import torch

import gentext as gt
from gentext.losses import NCEConfig

torch.set_num_threads(1)

RUN_SLOW = os.environ.get("GENTEXT_RUN_SLOW") == "1"

# slim dims keep every forward/backward test fast on CPU; contract
# tests that pin the default shapes build their own default bundle
TINY_DIMS = gt.Dims(c_sp=8, d_gl=64, base=8, max_ch=64, nce_k=64)
TINY_NCE = NCEConfig(n_query=64, n_neg=63)


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="slow training test; set GENTEXT_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return gt.generate_corpus(root, n_glyphs=8, n_fonts=2, n_styles=4,
                              hw=(64, 64), seed=7)


@pytest.fixture(scope="session")
def bundle():
    return gt.build_bundle(TINY_DIMS, seed=0)


@pytest.fixture(scope="session")
def batch(corpus):
    rng = np.random.default_rng(0)
    return gt.sample_batch(corpus, 2, rng)


@pytest.fixture
def rng_t():
    return torch.Generator().manual_seed(0)
