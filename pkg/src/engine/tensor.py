"""
Dense tensors with a reverse-mode gradient tape

Every differentiable operation records an ``Operation`` on the active
``GradientTape`` (if any). Operations run outside a tape produce detached
results, which is how evaluation avoids paying for the graph.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import DomainError, GradientError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

ELEMENTWISE_FUNCTIONS = ("relu", "sigmoid", "neg", "log", "exp", "square", "sqrt")
REDUCTIONS = ("sum", "mean", "l2norm")


class _EngineSettings:
    """Process-wide numeric settings"""

    def __init__(self):
        self.dtype = np.float32
        self.anomaly_detection = False


_settings = _EngineSettings()
_local = threading.local()


def get_default_dtype():
    return _settings.dtype


def set_default_dtype(dtype):
    """Switch the precision used for new tensors (float32 for training, float64 for gradient checks)"""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"Unsupported precision: {dtype}")
    _settings.dtype = dtype


@contextmanager
def precision(dtype):
    previous = _settings.dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _settings.dtype = previous


def set_anomaly_detection(enabled: bool):
    _settings.anomaly_detection = bool(enabled)


@contextmanager
def anomaly_mode(enabled: bool = True):
    """Check every operation output for NaN/Inf while active"""
    previous = _settings.anomaly_detection
    _settings.anomaly_detection = enabled
    try:
        yield
    finally:
        _settings.anomaly_detection = previous


def _tape_stack() -> List["GradientTape"]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def current_tape() -> Optional["GradientTape"]:
    stack = _tape_stack()
    if not stack or stack[-1] is None:
        return None
    return stack[-1]


@contextmanager
def no_grad():
    """Suspend recording, even inside an active tape"""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


class Tensor:
    """Dense N-dimensional array participating in a gradient tape"""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        self.data = np.array(data, dtype=dtype or _settings.dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._op: Optional["Operation"] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.asarray(data, dtype=_settings.dtype)
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._op = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._op is None

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{label})"

    def __len__(self):
        return self.shape[0]

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return map_elementwise(self, "neg")

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return map_elementwise(self, "relu")

    def sigmoid(self):
        return map_elementwise(self, "sigmoid")

    def exp(self):
        return map_elementwise(self, "exp")

    def log(self):
        return map_elementwise(self, "log")

    def square(self):
        return map_elementwise(self, "square")

    def sqrt(self):
        return map_elementwise(self, "sqrt")

    def sum(self, axis=None, keepdims=False):
        return reduce(self, axis, "sum", keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce(self, axis, "mean", keepdims=keepdims)

    def l2norm(self, axis=None, keepdims=False):
        return reduce(self, axis, "l2norm", keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Parameter(Tensor):
    """Learnable leaf tensor; ``decay`` marks it for weight decay"""

    def __init__(self, data: ArrayLike, name: Optional[str] = None, decay: bool = True):
        super().__init__(data, requires_grad=True, name=name)
        self.decay = decay


class Operation:
    """One recorded step of the tape: inputs, output and local backward rule"""

    __slots__ = ("name", "inputs", "output", "backward", "tape", "index")

    def __init__(self, name: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: BackwardFn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.tape: Optional["GradientTape"] = None
        self.index = -1

    def __repr__(self):
        return f"<Operation {self.index}:{self.name} {[t.shape for t in self.inputs]} -> {self.output.shape}>"


class GradientTape:
    """Ordered record of operations for one mini-batch

    Operations are appended in execution order, so the list is topologically
    sorted by construction.
    """

    def __init__(self):
        self.operations: List[Operation] = []
        self._replayed = False
        self._retained = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.operations)

    def _record(self, op: Operation):
        op.tape = self
        op.index = len(self.operations)
        self.operations.append(op)

    def backward(self, loss: Tensor, accumulate: bool = False, retain: bool = False):
        """Replay the tape from a scalar loss

        With ``accumulate=False`` a leaf that already holds a gradient is an
        error; with ``accumulate=True`` new gradients are added to it. A tape
        can only be replayed once unless the previous replay passed
        ``retain=True``.
        """
        if loss.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._op is None or loss._op.tape is not self:
            raise GradientError("loss is detached from this tape")
        if self._replayed and not self._retained:
            raise GradientError("tape was already replayed; record a new tape or pass retain=True")

        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for op in reversed(self.operations[: loss._op.index + 1]):
            upstream = grads.pop(id(op.output), None)
            if upstream is None:
                continue
            input_grads = op.backward(upstream)
            for inp, g in zip(op.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                g = np.asarray(g, dtype=inp.data.dtype)
                if g.shape != inp.data.shape:
                    raise GradientError(f"{op.name} produced gradient of shape {g.shape} for input {inp.shape}")
                if inp._op is not None and inp._op.tape is self:
                    key = id(inp)
                    grads[key] = grads[key] + g if key in grads else g
                else:
                    key = id(inp)
                    if key in leaves:
                        leaves[key] = (inp, leaves[key][1] + g)
                    else:
                        leaves[key] = (inp, g)

        if not accumulate:
            for inp, _ in leaves.values():
                if inp.grad is not None:
                    raise GradientError(
                        f"gradient already populated for {inp.name or inp.shape}; call zero_grad() or accumulate=True"
                    )
        for inp, g in leaves.values():
            inp.grad = g.copy() if inp.grad is None else inp.grad + g

        self._replayed = True
        self._retained = retain
        logger.debug(f"Backward replayed {loss._op.index + 1} operations into {len(leaves)} leaves")


def backward(loss: Tensor, accumulate: bool = False, retain: bool = False):
    """Populate gradients of all requires_grad leaves reachable from ``loss``"""
    if loss._op is None or loss._op.tape is None:
        if loss.size != 1:
            raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
        raise GradientError("loss is not on a gradient tape (detached or computed under no_grad)")
    loss._op.tape.backward(loss, accumulate=accumulate, retain=retain)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=_settings.dtype))


def record(name: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result and put it on the active tape when any input needs gradients"""
    inputs = tuple(inputs)
    out = Tensor._wrap(data)
    if _settings.anomaly_detection and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"{name} produced non-finite values (shapes {[t.shape for t in inputs]})")
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        op = Operation(name, inputs, out, backward_fn)
        tape._record(op)
        out._op = op
    return out


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op_name: str) -> Tuple[int, ...]:
    # Restricted broadcasting: equal rank with size-1 dims, or a 0-d scalar.
    if a == b:
        return a
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if len(a) != len(b):
        raise ShapeError(f"{op_name}: cannot broadcast shapes {a} and {b}")
    out = []
    for da, db in zip(a, b):
        if da == db or db == 1:
            out.append(da)
        elif da == 1:
            out.append(db)
        else:
            raise ShapeError(f"{op_name}: cannot broadcast shapes {a} and {b}")
    return tuple(out)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum())
    axes = tuple(i for i, (gd, sd) in enumerate(zip(grad.shape, shape)) if sd == 1 and gd != 1)
    return grad.sum(axis=axes, keepdims=True)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", a.data + b.data, (a, b), _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", a.data - b.data, (a, b), _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    out = a.data / b.data

    def _backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return record("div", out, (a, b), _backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an M×K and a K×N tensor"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: dimension mismatch between {a.shape} and {b.shape}")

    def _backward(g):
        return g @ b.data.T, a.data.T @ g

    return record("matmul", a.data @ b.data, (a, b), _backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def map_elementwise(t: Tensor, fn: str) -> Tensor:
    """Apply one of ELEMENTWISE_FUNCTIONS with its matching backward rule"""
    t = as_tensor(t)
    x = t.data

    if fn == "relu":
        mask = x > 0
        return record("relu", np.maximum(x, 0.0), (t,), lambda g: (g * mask,))
    if fn == "sigmoid":
        y = _sigmoid(x)
        return record("sigmoid", y, (t,), lambda g: (g * y * (1.0 - y),))
    if fn == "neg":
        return record("neg", -x, (t,), lambda g: (-g,))
    if fn == "log":
        if np.any(x <= 0):
            raise DomainError(f"log of non-positive input (min {float(x.min())})")
        return record("log", np.log(x), (t,), lambda g: (g / x,))
    if fn == "exp":
        y = np.exp(x)
        return record("exp", y, (t,), lambda g: (g * y,))
    if fn == "square":
        return record("square", x * x, (t,), lambda g: (2.0 * x * g,))
    if fn == "sqrt":
        if np.any(x < 0):
            raise DomainError(f"sqrt of negative input (min {float(x.min())})")
        y = np.sqrt(x)
        safe = np.where(y > 0, y, 1.0)
        return record("sqrt", y, (t,), lambda g: (np.where(y > 0, g / (2.0 * safe), 0.0),))
    raise ValueError(f"Unknown elementwise function '{fn}' (expected one of {ELEMENTWISE_FUNCTIONS})")


def _normalize_axes(axes, ndim: int) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise ShapeError(f"invalid axis {axis} for tensor of rank {ndim}")
        normalized.append(axis % ndim)
    return tuple(sorted(set(normalized)))


def reduce(t: Tensor, axes=None, kind: str = "sum", keepdims: bool = False) -> Tensor:
    """Sum, mean or l2norm over ``axes`` (all axes when None)"""
    t = as_tensor(t)
    axes = _normalize_axes(axes, t.ndim)
    x = t.data
    kept_shape = tuple(1 if i in axes else d for i, d in enumerate(x.shape))
    count = int(np.prod([x.shape[i] for i in axes])) if axes else 1

    def _expand(g):
        return np.broadcast_to(np.reshape(g, kept_shape), x.shape)

    if kind == "sum":
        out = x.sum(axis=axes, keepdims=keepdims)
        return record("sum", out, (t,), lambda g: (np.array(_expand(g)),))
    if kind == "mean":
        out = x.sum(axis=axes, keepdims=keepdims) / count
        return record("mean", out, (t,), lambda g: (_expand(g) / count,))
    if kind == "l2norm":
        norm = np.sqrt((x * x).sum(axis=axes, keepdims=True))
        safe = np.where(norm > 0, norm, 1.0)
        out = norm if keepdims else np.reshape(norm, tuple(d for i, d in enumerate(x.shape) if i not in axes))

        def _backward(g):
            return (np.where(norm > 0, _expand(g) * x / safe, 0.0),)

        return record("l2norm", out, (t,), _backward)
    raise ValueError(f"Unknown reduction '{kind}' (expected one of {REDUCTIONS})")


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    t = as_tensor(t)
    try:
        out = t.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {t.shape} as {tuple(shape)}") from e
    return record("reshape", out, (t,), lambda g: (g.reshape(t.shape),))


def transpose(t: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    t = as_tensor(t)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(t.ndim)))
    inverse = tuple(np.argsort(axes))
    return record("transpose", t.data.transpose(axes), (t,), lambda g: (g.transpose(inverse),))


def clamp_min(t: Tensor, floor: float) -> Tensor:
    t = as_tensor(t)
    mask = t.data > floor
    return record("clamp_min", np.maximum(t.data, floor), (t,), lambda g: (g * mask,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tensors, _backward)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)
