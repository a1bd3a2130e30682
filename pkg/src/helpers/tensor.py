"""Dense tensors with reverse-mode differentiation.

Operations record themselves on the active `Tape` (see `Tape.__enter__`) when
at least one input requires a gradient. Outside a tape nothing is recorded,
which is the inference path.
"""

import contextvars
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from src.errors import ContractError

_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "active_tape", default=None
)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        return Tensor(
            self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name
        )

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), name=self.name)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable operations. Single writer."""

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self):
        return len(self.entries)

    def record(self, op: str, inputs, output: Tensor, backward: BackwardFn):
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward))


def active_tape() -> Tape | None:
    return _active_tape.get()


def record(op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn):
    tape = _active_tape.get()
    if tape is None or not any(t.requires_grad for t in inputs):
        return output
    output.requires_grad = True
    tape.record(op, inputs, output, backward)
    return output


def backward(tape: Tape, loss: Tensor):
    """Populate `.grad` of every requires_grad tensor reachable from `loss`.

    Leaf gradients accumulate into existing buffers; recorded intermediates
    receive their gradient as a fresh buffer. Accumulation follows reverse tape
    order, so identical tapes give identical gradients.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not require grad; nothing to differentiate")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    produced = set()

    for entry in reversed(tape.entries):
        produced.add(id(entry.output))
        upstream = grads.pop(id(entry.output), None)
        if upstream is None:
            continue
        entry.output.grad = upstream
        input_grads = entry.backward(upstream)
        for tensor, grad in zip(entry.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            tensors[key] = tensor
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad

    for key, grad in grads.items():
        if key in produced:
            continue
        leaf = tensors[key]
        grad = grad.astype(leaf.data.dtype, copy=False).reshape(leaf.shape)
        leaf.grad = grad if leaf.grad is None else leaf.grad + grad
