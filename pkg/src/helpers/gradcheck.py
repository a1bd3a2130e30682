from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from src.errors import ContractError
from src.helpers.tensor import Tape, Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    worst_tensor: str | None = None
    worst_index: tuple[int, ...] | None = None
    analytic: float = 0.0
    numeric: float = 0.0
    coordinates: int = 0
    per_tensor: dict[str, float] = field(default_factory=dict)


def _evaluate(f: Callable[[], Tensor]) -> float:
    out = f()
    if out.data.size != 1:
        raise ContractError(f"checked function must be scalar, got {out.shape}")
    return float(out.data.reshape(-1)[0])


def finite_diff_check_many(
    f: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-3,
    float64: bool = True,
    floor: float | None = None,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of `f` w.r.t. `tensors` to central differences.

    With `float64` the checked tensors are recomputed in double precision and
    restored afterwards. `max_coords` samples that many coordinates per tensor.
    Relative error is |a - n| / max(|a|, |n|, floor).
    """
    if not 1e-4 <= eps <= 1e-2:
        raise ContractError(f"eps {eps} outside [1e-4, 1e-2]")
    if floor is None:
        floor = 1e-6 if float64 else 1e-2

    originals = [t.data for t in tensors]
    flags = [t.requires_grad for t in tensors]
    try:
        for t in tensors:
            dtype = np.float64 if float64 else t.data.dtype
            t.data = np.array(t.data, dtype=dtype, order="C", copy=True)
            t.requires_grad = True
            t.grad = None

        with Tape() as tape:
            loss = f()
        backward(tape, loss)
        analytic = [
            t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors
        ]

        rng = np.random.default_rng(seed)
        report = GradCheckReport()
        for position, (t, grad) in enumerate(zip(tensors, analytic)):
            label = t.name or f"input{position}"
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            worst = 0.0
            for c in coords:
                saved = flat[c]
                flat[c] = saved + eps
                plus = _evaluate(f)
                flat[c] = saved - eps
                minus = _evaluate(f)
                flat[c] = saved
                numeric = (plus - minus) / (2.0 * eps)
                a = float(grad.reshape(-1)[c])
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                report.coordinates += 1
                worst = max(worst, err)
                if err > report.max_rel_err or report.worst_tensor is None:
                    report.max_rel_err = err
                    report.worst_tensor = label
                    report.worst_index = tuple(
                        int(i) for i in np.unravel_index(c, t.data.shape)
                    )
                    report.analytic = a
                    report.numeric = numeric
            report.per_tensor[label] = worst
        return report
    finally:
        for t, data, flag in zip(tensors, originals, flags):
            t.data = data
            t.requires_grad = flag
            t.grad = None


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-3, float64: bool = True
) -> GradCheckReport:
    return finite_diff_check_many(lambda: f(x), [x], eps=eps, float64=float64)
