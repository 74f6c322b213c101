"""
Finite-difference oracle for the gradient tape.
"""

from typing import Callable, Optional, Sequence, Union

import numpy as np

from src import config
from src.exceptions import NonFiniteError
from src.tensor.core import Tensor

ScalarFn = Callable[[Tensor], Union[Tensor, float]]


def _scalar(value: Union[Tensor, float]) -> float:
    result = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(result):
        raise NonFiniteError(f"finite-difference evaluation returned {result}")
    return result


def finite_diff_grad(f: ScalarFn, x: Tensor, eps: float = config.FINITE_DIFF_EPS,
                     indices: Optional[Sequence[int]] = None) -> Tensor:
    """Central-difference gradient of a scalar function.

    Args:
        f: Deterministic function of one tensor returning a scalar
        x: Point at which the gradient is estimated
        eps: Perturbation step (> 0)
        indices: Flat indices to perturb; all elements when None. Untouched
            entries of the result are zero.

    Returns:
        Tensor shaped like x holding (f(x + eps*e) - f(x - eps*e)) / (2*eps)

    Raises:
        ValueError: If eps is not positive
        NonFiniteError: If f returns a non-finite value
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    base = np.array(x.data, copy=True)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    targets = range(flat.size) if indices is None else indices
    for idx in targets:
        original = flat[idx]
        flat[idx] = original + eps
        f_plus = _scalar(f(Tensor(base.copy())))
        flat[idx] = original - eps
        f_minus = _scalar(f(Tensor(base.copy())))
        flat[idx] = original
        grad.reshape(-1)[idx] = (f_plus - f_minus) / (2.0 * eps)
    return Tensor(grad)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """||a - n|| / max(||a||, ||n||, floor) over the whole tensor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), floor)
    return float(np.linalg.norm(a - n)) / scale
