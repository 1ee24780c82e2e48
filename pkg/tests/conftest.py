import dataclasses

import numpy as np
import pytest
import torch

from crowdpose3d.body_model import build_body_model
from crowdpose3d.config import SceneConfig
from crowdpose3d.scene import generate_dataset

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def body():
    return build_body_model(0)


@pytest.fixture(scope="session")
def single_person_dataset(tmp_path_factory):
    """16 single-person scenes + 4 held-out, shared across tests."""
    root = tmp_path_factory.mktemp("ds_single")
    cfg = dataclasses.replace(SceneConfig(), n_persons=1, overlap_target=0.0)
    generate_dataset(root, cfg, base_seed=0, splits={"train": 16, "heldout": 4})
    return str(root)


@pytest.fixture(scope="session")
def overlap_dataset(tmp_path_factory):
    """Small two-person overlap dataset for pipeline tests."""
    root = tmp_path_factory.mktemp("ds_overlap")
    cfg = SceneConfig()
    generate_dataset(root, cfg, base_seed=100, splits={"train": 8, "heldout": 4})
    return str(root)


def rel_err(a, b, floor=1.0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
