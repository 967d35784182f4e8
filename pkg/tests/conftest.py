import json

import numpy as np
import pytest

from priormix.learning import model as mlp
from priormix.utils.dataset_io import make_gaussian_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def gaussian4():
    """400 samples, 4 balanced classes in 2-D."""
    return make_gaussian_dataset(400, 4, 2, separation=3.0, rng_seed=0)


@pytest.fixture
def small_model():
    return mlp.init((4, 8, 3), rng_seed=3)


@pytest.fixture
def finite_difference():
    """Central-difference gradient of ``f(model)`` for every parameter entry."""

    def _gradient(f, model, eps=1e-6):
        params = [p.copy() for p in model.parameters()]
        grads = []
        for i, p in enumerate(params):
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                original = p[idx]
                p[idx] = original + eps
                plus = f(model.with_parameters(params))
                p[idx] = original - eps
                minus = f(model.with_parameters(params))
                p[idx] = original
                g[idx] = (plus - minus) / (2.0 * eps)
            grads.append(g)
        return grads

    return _gradient


@pytest.fixture
def write_config(tmp_path):
    def _write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path

    return _write


def relative_error(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


@pytest.fixture
def grad_relative_error():
    return relative_error
