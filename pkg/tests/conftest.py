import numpy as np
import pytest


def central_diff(func, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.ravel()
    base = x0.ravel()
    for i in range(base.size):
        x = base.copy()
        x[i] = base[i] + step
        f_plus = func(x.reshape(x0.shape))
        x[i] = base[i] - step
        f_minus = func(x.reshape(x0.shape))
        flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def rel_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Norm-wise relative error, guarded against a zero reference."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = max(np.max(np.abs(exact)), 1e-12)
    return float(np.max(np.abs(approx - exact)) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
