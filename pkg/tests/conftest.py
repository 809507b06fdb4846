import itertools

import numpy as np
import pytest

from miqubo.data import DiscretizedTable
from miqubo.infotheory import cmi_tensor


@pytest.fixture
def duplicate_table():
    """Full factorial over five bits: x0 and its copy x1, x2, three noise bits.

    The target 2 * x0 + x2 is fully explained by x0 and x2 while the noise
    bits are exactly independent of everything else.
    """
    rows = np.array(list(itertools.product((0, 1), repeat=5)))
    a, b, noise = rows[:, 0], rows[:, 1], rows[:, 2:]
    codes = np.column_stack([a, a, b, noise])
    names = ["x0", "x0_copy", "x2", "noise_0", "noise_1", "noise_2"]
    return DiscretizedTable.from_codes(codes, 2 * a + b, names)


@pytest.fixture
def duplicate_tensor(duplicate_table):
    return cmi_tensor(duplicate_table)
