import numpy as np
import pytest

from gridcrf.model import GridCrfModel, GridGeometry, OffsetClass


@pytest.fixture
def two_site_model():
    """1x2 grid, two labels, one horizontal class with an anti-diagonal table.

    Reference values (enumeration over the 4 states):
        E(0,1) = 3, E(1,0) = 6, E(0,0) = 2, E(1,1) = 1
        Z = e^-2 + e^-3 + e^-6 + e^-1 = 0.55548054495...
    """
    model = GridCrfModel(
        2, GridGeometry(1, 2), [OffsetClass(1, 0)],
        tables=[np.array([[0.0, 3.0], [3.0, 0.0]])])
    unaries = np.array([[0.0, 1.0], [2.0, 0.0]])
    return model, unaries


def random_small_model(gen, height=None, width=None, num_labels=None,
                       table_scale=1.0, unary_scale=1.0, max_classes=2):
    """Random instance within oracle range, offsets valid for the grid."""
    height = height or int(gen.integers(1, 4))
    width = width or int(gen.integers(1, 4))
    num_labels = num_labels or int(gen.integers(2, 4))
    pool = [(1, 0), (0, 1), (1, 1), (-1, 1), (2, 0), (0, 2)]
    k = int(gen.integers(1, max_classes + 1))
    picks = [pool[i] for i in gen.choice(len(pool), size=k, replace=False)]
    classes = [OffsetClass(dx, dy) for dx, dy in picks]
    tables = [gen.normal(0, table_scale, (num_labels, num_labels)) for _ in classes]
    model = GridCrfModel(num_labels, GridGeometry(height, width), classes, tables)
    unaries = gen.normal(0, unary_scale, (model.num_sites, num_labels))
    return model, unaries
