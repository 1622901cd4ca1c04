import numpy as np
import pytest


def fd_gradient_check(loss_fn, params_obj, h: float = 1e-5,
                      denom_floor: float = 1e-5) -> float:
    """Max relative error between analytic grads and central differences.

    `loss_fn(params_obj)` returns (loss, grads, ...) with grads aligned to
    params_obj.arrays().  The denominator floor keeps coordinates whose true
    gradient sits below the finite-difference noise floor from dominating.
    """
    arrays = params_obj.arrays()
    _, grads, *_ = loss_fn(params_obj)
    max_rel = 0.0
    for ai, arr in enumerate(arrays):
        for k in range(arr.size):
            orig = arr.flat[k]
            arr.flat[k] = orig + h
            lp = loss_fn(params_obj)[0]
            arr.flat[k] = orig - h
            lm = loss_fn(params_obj)[0]
            arr.flat[k] = orig
            fd = (lp - lm) / (2.0 * h)
            ga = grads[ai].flat[k]
            rel = abs(fd - ga) / max(denom_floor, abs(fd) + abs(ga))
            max_rel = max(max_rel, rel)
    return max_rel


@pytest.fixture
def rng():
    return np.random.default_rng(0)
