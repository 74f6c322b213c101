"""
Tensor type and reverse-mode gradient tape.

A Tensor wraps a NumPy array of 32- or 64-bit floats. Operations from
``src.tensor.ops`` record themselves on the active GradTape when one of their
inputs requires a gradient; ``GradTape.backward`` then replays the recorded
operations in reverse order and accumulates gradients additively.

Tensors are treated as immutable values: operations always allocate new
arrays, and parameter updates replace tensors instead of writing into them.
"""

import logging
from contextvars import ContextVar
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src import config
from src.exceptions import NonFiniteError, TapeError

logger = logging.getLogger(__name__)

DTYPES = {"f32": np.float32, "f64": np.float64}

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: ContextVar[Optional["GradTape"]] = ContextVar("active_tape", default=None)
_debug_checks = [config.DEBUG_FINITE_CHECKS]


def resolve_dtype(dtype: Union[str, np.dtype, type, None]) -> np.dtype:
    """Map "f32"/"f64" (or a NumPy float dtype) to a NumPy dtype."""
    if dtype is None:
        dtype = config.DEFAULT_DTYPE
    if isinstance(dtype, str) and dtype in DTYPES:
        return np.dtype(DTYPES[dtype])
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise TypeError(f"unsupported tensor dtype {resolved}, expected f32 or f64")
    return resolved


def dtype_name(dtype: np.dtype) -> str:
    """Inverse of resolve_dtype."""
    return "f64" if np.dtype(dtype) == np.float64 else "f32"


def set_debug(enabled: bool) -> None:
    """Enable or disable the finite-value check applied to every op output."""
    _debug_checks[0] = bool(enabled)


def debug_enabled() -> bool:
    return _debug_checks[0]


class Tensor:
    """Dense float tensor, usually NCHW.

    Attributes:
        data (np.ndarray): Values, float32 or float64
        requires_grad (bool): Whether gradients flow to / through this tensor
        name (Optional[str]): Optional label used in error messages
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype: Union[str, np.dtype, None] = None):
        """Create a tensor.

        Args:
            data: Array-like values
            requires_grad: Mark the tensor as a leaf that receives gradients
            name: Optional label
            dtype: "f32", "f64" or a NumPy float dtype; inferred from data when None
        """
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(resolve_dtype(dtype), copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, no gradient tracking."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def astype(self, dtype: Union[str, np.dtype]) -> "Tensor":
        return Tensor(self.data.astype(resolve_dtype(dtype)), requires_grad=self.requires_grad,
                      name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={dtype_name(self.dtype)}{label})"


class _Node:
    __slots__ = ("op", "output", "inputs", "backward")

    def __init__(self, op: str, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn):
        self.op = op
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Gradients:
    """Result of GradTape.backward: gradients keyed by tensor identity.

    Looking up a tensor that did not contribute to the loss returns zeros.
    """

    def __init__(self, grads: Dict[int, np.ndarray], tensors: Dict[int, Tensor]):
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None or self._tensors.get(id(tensor)) is not tensor:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return self._tensors.get(id(tensor)) is tensor

    def for_named(self, named: Iterable[Tuple[str, Tensor]]) -> Dict[str, np.ndarray]:
        """Gradients of named parameters, keyed by name."""
        return {name: self[t] for name, t in named}


class GradTape:
    """Records differentiable operations for one forward pass.

    A tape is single-owner: it is bound to the current context while active
    (``with GradTape() as tape``) and must not be shared between concurrent
    forward passes. ``backward`` may be called once.
    """

    def __init__(self):
        self._nodes: List[_Node] = []
        self._consumed = False
        self._token = None

    def __enter__(self) -> "GradTape":
        if self._consumed:
            raise TapeError("cannot re-enter a consumed tape")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, op: str, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> None:
        if self._consumed:
            raise TapeError("cannot record on a consumed tape")
        self._nodes.append(_Node(op, output, inputs, backward))

    def backward(self, loss: Tensor) -> Gradients:
        """Propagate d(loss)/d(tensor) to every tensor recorded on the tape.

        Recording order is a topological order of the graph, so walking the
        node list backwards visits each op after all of its consumers.

        Args:
            loss: 1-element tensor produced on this tape

        Returns:
            Gradients for all tensors reachable from the loss

        Raises:
            TapeError: If the tape was already consumed or the loss is not scalar
        """
        if self._consumed:
            raise TapeError("backward() called twice on the same tape")
        if loss.size != 1:
            raise TapeError(f"loss must be a 1-element tensor, got shape {loss.shape}")
        self._consumed = True

        grads: Dict[int, np.ndarray] = {}
        tensors: Dict[int, Tensor] = {}
        if not loss.requires_grad:
            self._nodes = []
            return Gradients(grads, tensors)

        grads[id(loss)] = np.ones_like(loss.data)
        tensors[id(loss)] = loss
        for node in reversed(self._nodes):
            grad_out = grads.get(id(node.output))
            if grad_out is None:
                continue
            input_grads = node.backward(grad_out)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad
                    tensors[key] = tensor
        logger.debug("backward replayed %d ops", len(self._nodes))
        self._nodes = []
        return Gradients(grads, tensors)


def current_tape() -> Optional[GradTape]:
    return _active_tape.get()


def backward(loss: Tensor, tape: Optional[GradTape] = None) -> Gradients:
    """Run GradTape.backward on the given tape, or on the active one."""
    tape = tape if tape is not None else _active_tape.get()
    if tape is None:
        raise TapeError("backward() needs a tape: record the forward pass inside `with GradTape()`")
    return tape.backward(loss)


def check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


def apply_op(op: str, out: np.ndarray, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Wrap an op result and record it on the active tape if needed."""
    if _debug_checks[0]:
        check_finite(op, out)
    result = Tensor(out)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        tape.record(op, result, inputs, backward)
    return result
