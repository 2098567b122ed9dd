"""Both kernel backends must agree on random ragged problems."""

import numpy as np
import pytest

from hyperformer.kernels import IMPLEMENTATIONS, seg_ids


def random_problem(rng, segments=50, dim=5):
    counts = rng.integers(1, 9, size=segments)
    ptr = np.zeros(segments + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    nnz = int(ptr[-1])
    n_rows = 30
    return {
        "ptr": ptr, "seg": seg_ids(ptr),
        "idx": rng.integers(0, n_rows, size=nnz), "n_rows": n_rows,
        "x": rng.normal(size=nnz) * 5, "w": rng.random(nnz),
        "dw": rng.normal(size=nnz),
        "A": rng.normal(size=(segments, dim)), "B": rng.normal(size=(n_rows, dim)),
    }


needs_numba = pytest.mark.skipif("numba" not in IMPLEMENTATIONS,
                                 reason="numba not available")


def test_seg_ids():
    ptr = np.array([0, 2, 3, 6], dtype=np.int64)
    assert seg_ids(ptr).tolist() == [0, 0, 1, 2, 2, 2]


def test_numpy_seg_softmax_normalizes():
    rng = np.random.default_rng(0)
    p = random_problem(rng)
    w = IMPLEMENTATIONS["numpy"]["seg_softmax"](p["x"], p["ptr"])
    sums = np.add.reduceat(w, p["ptr"][:-1])
    assert np.all(np.abs(sums - 1.0) < 1e-12)
    assert np.all(w > 0)


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    np_impl = IMPLEMENTATIONS["numpy"]
    nb_impl = IMPLEMENTATIONS["numba"]
    pairs = [
        ("seg_softmax", (p["x"], p["ptr"])),
        ("seg_softmax_grad", (p["w"], p["dw"], p["ptr"])),
        ("gather_dot", (p["A"], p["seg"], p["B"], p["idx"])),
        ("weighted_seg_sum", (p["w"], p["B"], p["idx"], p["ptr"])),
        ("weighted_scatter_rows", (p["w"], p["A"], p["seg"], p["idx"], p["n_rows"])),
    ]
    for name, args in pairs:
        a = np_impl[name](*args)
        b = nb_impl[name](*args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12, err_msg=name)
