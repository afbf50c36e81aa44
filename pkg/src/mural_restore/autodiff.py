"""Reverse-mode differentiation on an append-only tape.

Operations in :mod:`mural_restore.ops` call :func:`record` with an operation id and
whatever activations their backward rule needs.  Backward rules are looked up
in :data:`VJP` by id at backward time, which keeps the rule table patchable
(the mutation sentinel in the test-suite relies on that).
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Parameter, Tensor

# op id -> rule(grad_output, node) -> tuple of input grads (None = no grad)
VJP: dict[str, Callable] = {}

_ACTIVE: list["Tape"] = []


class TapeError(RuntimeError):
    pass


class NonDeterministicError(RuntimeError):
    pass


class Node:
    __slots__ = ("op", "inputs", "output", "saved", "tape")

    def __init__(self, op, inputs, output, saved, tape):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.saved = saved
        self.tape = tape

    def __repr__(self):
        return f"Node({self.op}, out={self.output.shape})"


class Tape:
    """Records differentiable operations executed while it is active.

    Usage::

        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.used = False

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def parameters(self) -> list[Parameter]:
        seen: dict[int, Parameter] = {}
        for node in self.nodes:
            for t in node.inputs:
                if isinstance(t, Parameter) and t.trainable:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, loss: Tensor, params: Iterable[Parameter] | None = None) -> None:
        """Assign ``p.grad = d loss / d p`` for every parameter on the tape.

        Parameters listed in ``params`` that the loss does not reach get zeros.
        """
        if self.used:
            raise TapeError("backward already ran on this tape")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node.tape is not self:
            raise TapeError("loss was not produced on this tape")
        self.used = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = VJP[node.op](g, node)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise TapeError(
                        f"{node.op}: gradient shape {gi.shape} != input shape {inp.shape}")
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi

        for p in self.parameters():
            g = grads.get(id(p))
            p.grad = np.zeros_like(p.data) if g is None else g.astype(p.dtype, copy=False)
        if params is not None:
            on_tape = {id(p) for p in self.parameters()}
            for p in params:
                if id(p) not in on_tape:
                    p.grad = np.zeros_like(p.data)

    def first_non_finite(self) -> Node | None:
        for node in self.nodes:
            if not np.all(np.isfinite(node.output.data)):
                return node
        return None


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def record(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], **saved) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and put a node on the active tape."""
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, inputs, out, saved, tape)
        out._node = node
        tape.nodes.append(node)
    return out


def backward(loss: Tensor, params: Iterable[Parameter] | None = None) -> None:
    if loss._node is None:
        raise TapeError("loss was not produced on an active tape")
    loss._node.tape.backward(loss, params)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data.copy())


def _sample_indices(size: int, max_entries: int, rng: np.random.Generator) -> np.ndarray:
    if size <= max_entries:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_entries, replace=False))


def finite_diff_report(f: Callable[[], Tensor], params: list[Parameter], h: float = 1e-3,
                       max_entries: int = 256, seed: int = 0) -> dict[str, float]:
    """Worst relative error between tape gradients and central differences, per parameter.

    ``f`` must be deterministic and return a scalar tensor.  Parameters with more
    than ``max_entries`` entries are probed at a seeded random subset.
    """
    with Tape() as tape:
        loss = f()
    tape.backward(loss, params)
    analytic = {id(p): p.grad.copy() for p in params}

    f0 = float(f().data)
    f1 = float(f().data)
    if f0 != f1:
        raise NonDeterministicError(f"f evaluated twice gave {f0!r} and {f1!r}")

    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}
    for i, p in enumerate(params):
        flat = p.data.reshape(-1)
        ga = analytic[id(p)].reshape(-1)
        worst = 0.0
        for j in _sample_indices(flat.size, max_entries, rng):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(f().data)
            flat[j] = orig - h
            fm = float(f().data)
            flat[j] = orig
            num = (fp - fm) / (2 * h)
            ana = float(ga[j])
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
        report[p.name or f"param{i}"] = worst
    return report


def finite_diff_check(f: Callable[[], Tensor], params: list[Parameter], h: float = 1e-3,
                      max_entries: int = 256, seed: int = 0) -> float:
    report = finite_diff_report(f, params, h=h, max_entries=max_entries, seed=seed)
    return max(report.values(), default=0.0)
