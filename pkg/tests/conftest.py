import numpy as np
import pytest

from hyperformer.data import SparseInstance


def random_batch(rng, n=None, num_fields=3, ids_per_field=8, max_multi=2):
    """Random instances with a consistent field structure: field f owns ids
    [f*ids_per_field, (f+1)*ids_per_field)."""
    n = n if n is not None else int(rng.integers(2, 9))
    batch = []
    for _ in range(n):
        slots = []
        for f in range(num_fields):
            k = int(rng.integers(1, max_multi + 1))
            base = f * ids_per_field
            ids = rng.choice(ids_per_field, size=min(k, ids_per_field), replace=False)
            slots.append([int(base + i) for i in ids])
        batch.append(SparseInstance(label=int(rng.integers(2)), slots=slots))
    return batch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
