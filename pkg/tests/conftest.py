"""Shared fixtures: datasets are generated once per session and reused."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from m3pt.config import desk_config
from m3pt.data import CorpusSpec, generate_corpus


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture(scope="session")
def tiny_spec():
    return CorpusSpec(poi_count=60, tag_count=10, tags_per_poi=2.0,
                      images_per_poi=2.0, texts_per_poi=5.0, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec, tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus")
    return generate_corpus(tiny_spec, out)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tiny_spec, tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus_dir")
    generate_corpus(tiny_spec, out)
    return out


@pytest.fixture
def grad_cfg():
    """Desk-scale config for gradient checks (float64-friendly, no dropout)."""
    return desk_config(dropout=0.0, aug_token_drop=0.0, aug_image_noise=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
