import numpy as np
import pytest

from milab.rng import generator


def fd_check(loss_fn, model, grads, rng, n_coords=120, step=1e-5, rel_tol=1e-4):
    """Central-difference check of `grads` against `loss_fn` at random
    parameter coordinates; loss_fn must be deterministic in the parameters."""
    worst = 0.0
    for _ in range(n_coords):
        l = int(rng.integers(0, model.num_layers))
        kind = int(rng.integers(0, 2))
        arr = model.weights[l] if kind == 0 else model.biases[l]
        g = grads.d_weights[l] if kind == 0 else grads.d_biases[l]
        idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + step
        lp = loss_fn()
        arr[idx] = old - step
        lm = loss_fn()
        arr[idx] = old
        fd = (lp - lm) / (2 * step)
        rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8)
        worst = max(worst, rel)
    assert worst <= rel_tol, f"finite-difference mismatch: worst rel err {worst}"
    return worst


@pytest.fixture
def rng():
    return generator(12345)
