import numpy as np
import pytest

from spinsearch import (
    HeisenbergSpec,
    PoolConfig,
    build_heisenberg,
    build_vocabulary,
)


@pytest.fixture(scope="session")
def vocab4():
    return build_vocabulary(PoolConfig(n_qubits=4))


@pytest.fixture(scope="session")
def ham_10_10_4():
    return build_heisenberg(HeisenbergSpec(10.0, 10.0, 4))


@pytest.fixture(scope="session")
def ham_1_10_4():
    return build_heisenberg(HeisenbergSpec(1.0, 10.0, 4))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_circuit_ids(rng, vocab, length=12):
    return [int(t) for t in rng.integers(1, vocab.size, size=length)]
