"""Dense tensor carriers.

Layout is row-major N x H x W x C with channels fastest, so every feature map
is an ndarray of shape ``(N, H, W, C)``.  Only float32 ("single") and float64
("double") storage is used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SINGLE = np.float32
DOUBLE = np.float64

_PRECISIONS = {"single": SINGLE, "double": DOUBLE, "float32": SINGLE, "float64": DOUBLE}


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def resolve_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(_PRECISIONS[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    dt = np.dtype(precision)
    if dt not in (np.dtype(SINGLE), np.dtype(DOUBLE)):
        raise ValueError(f"unsupported dtype {dt}")
    return dt


class Tensor:
    """An ndarray plus the bookkeeping the tape needs.

    ``_node`` is set when the tensor was produced by a recorded operation.
    """

    __array_priority__ = 1000.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(resolve_dtype(dtype), copy=False)
        elif arr.dtype not in (np.dtype(SINGLE), np.dtype(DOUBLE)):
            arr = arr.astype(DOUBLE)
        self.data = arr
        self.requires_grad = requires_grad
        self._node = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; the real work is in mural_restore.ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *perm):
        from . import ops
        if len(perm) == 1 and isinstance(perm[0], (tuple, list)):
            perm = tuple(perm[0])
        return ops.transpose(self, perm)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A named trainable tensor; ``grad`` always has the value's shape."""

    def __init__(self, data, name: str = "", trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


@dataclass
class ComplexTensor:
    """Real and imaginary parts held as two real tensors of one shape."""

    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"re/im shapes differ: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def to_numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else np.asarray(x, dtype=DOUBLE))
