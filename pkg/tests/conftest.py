import json

import pytest

from mxmc.model import validate


@pytest.fixture
def model_a():
    """M/M/1 with b0=2, b2=1, h1=1."""
    return validate(1, {0: 2.0, 2: 1.0}, {1: 1.0})


@pytest.fixture
def model_b():
    """Supercritical single server, no resurrection: e*_k = 2^-k."""
    return validate(1, {0: 1.0, 2: 2.0})


@pytest.fixture
def model_b_resurrected():
    return validate(1, {0: 1.0, 2: 2.0}, {1: 1.0})


@pytest.fixture
def model_c():
    """Two servers, single arrivals: the ordinary M/M/2 queue."""
    return validate(2, {0: 1.0, 2: 1.0}, {1: 1.0})


@pytest.fixture
def model_d():
    """Model A with catastrophes at rate 1."""
    return validate(1, {0: 2.0, 2: 1.0}, {1: 1.0}, beta=1.0)


@pytest.fixture
def model_batch():
    """Batches of one and two, two servers, resurrection into 1 or 2."""
    return validate(2, {0: 1.5, 2: 0.5, 3: 0.3}, {1: 0.4, 2: 0.6})


@pytest.fixture
def model_file(tmp_path):
    def _write(model, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(model.to_dict()))
        return path

    return _write
