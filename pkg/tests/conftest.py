import numpy as np
import pytest

from dsqil import nets


def finite_difference_grad(loss_fn, params: nets.MlpParams, h: float = 1e-5) -> nets.MlpParams:
    """Central differences of a scalar loss over every parameter entry.

    loss_fn takes no arguments and must read `params` afresh on each call.
    """
    grad = nets.zeros_like_params(params)
    for p_arr, g_arr in zip(params.arrays(), grad.arrays()):
        flat_p = p_arr.ravel()
        flat_g = g_arr.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn()
            flat_p[i] = orig - h
            down = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * h)
    return grad


def gradient_rel_error(analytic: nets.MlpParams, fd: nets.MlpParams) -> float:
    """Worst per-entry relative error, floored so true-zero derivatives are
    not compared against finite-difference noise."""
    a = np.concatenate([x.ravel() for x in analytic.arrays()])
    f = np.concatenate([x.ravel() for x in fd.arrays()])
    floor = 1e-3 * max(np.max(np.abs(f)), 1.0)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / scale))


def assert_grads_close(analytic: nets.MlpParams, fd: nets.MlpParams, rtol: float = 1e-4):
    rel = gradient_rel_error(analytic, fd)
    assert rel <= rtol, f"gradient mismatch: worst relative error {rel:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
