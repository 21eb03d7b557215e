import numpy as np
import pytest

from mztomo import BogoliubovDevice, LossyDevice, UnitaryDevice, haar_random_unitary, random_bogoliubov

BS = np.array([[1, 1j], [1j, 1]]) / np.sqrt(2)


@pytest.fixture
def bs():
    return BS.copy()


def make_devices(n, seed, eta=None):
    """One device of every kind on ``n`` modes."""
    rng = np.random.default_rng(seed)
    u = haar_random_unitary(n, rng)
    bu, bv = random_bogoliubov(n, 0.8, rng)
    if eta is None:
        eta = rng.uniform(0.3, 1.0, size=n)
    return [
        UnitaryDevice(u),
        BogoliubovDevice(bu, bv),
        LossyDevice(UnitaryDevice(u), eta),
        LossyDevice(BogoliubovDevice(bu, bv), eta),
    ]
