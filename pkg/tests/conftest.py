import numpy as np
import pytest

from bjsd import InputSpec, gen_open_loop, sec51_model


@pytest.fixture(scope="session")
def open_loop_data():
    return gen_open_loop(sec51_model(), InputSpec("sensitivity"), 3000, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
