import numpy as np
import pytest

from ddeatlas import build_atlas, get_model
from ddeatlas.registry import BUILTIN_IDS, builtin

MODEL_IDS = list(BUILTIN_IDS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def models():
    return {mid: get_model(mid) for mid in MODEL_IDS}


@pytest.fixture(scope="session")
def atlases(models):
    out = {}
    for mid, model in models.items():
        entry = builtin(mid)
        seeds = entry.default_seeds(model, np.random.default_rng(99))
        out[mid] = build_atlas(model, seeds, coverage_boxes=entry.coverage_boxes(model))
    return out


def node_gap(a, b):
    return float(np.max(np.abs(a.values - b.values)) + np.max(np.abs(a.derivs - b.derivs)))
