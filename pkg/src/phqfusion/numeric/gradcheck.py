"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError
from .tensor import Parameter, Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tolerance: float
    checked: int
    worst: str = ""
    per_tensor: dict[str, float] = field(default_factory=dict)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients meaningful."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    fragment: Callable[..., Tensor],
    inputs: Sequence = (),
    tolerance: float = 1e-4,
    *,
    params: Sequence[Tensor] | None = None,
    h: float = 1e-5,
    max_elements: int = 64,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of ``fragment(*inputs)`` with central differences.

    Checked tensors are ``params`` (default: ``fragment.parameters()`` when the
    fragment is a module) plus every input tensor with ``requires_grad``. Tensors
    larger than ``max_elements`` are checked on a random subsample of that size.
    """
    if params is None:
        params = fragment.parameters() if hasattr(fragment, "parameters") else []
    targets = list(params) + [t for t in inputs if isinstance(t, Tensor) and t.requires_grad]
    if not targets:
        raise NumericError("grad_check found nothing to differentiate")

    def evaluate() -> float:
        with no_grad():
            out = fragment(*inputs)
        return float(out.data)

    first, second = evaluate(), evaluate()
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise NumericError(f"non-deterministic fragment: {first!r} != {second!r}")

    for t in targets:
        t.grad = None
    loss = fragment(*inputs)
    if loss.size != 1:
        raise NumericError("fragment must return a scalar")
    backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in targets]

    rng = np.random.default_rng(seed)
    worst, worst_where, checked = 0.0, "", 0
    per_tensor: dict[str, float] = {}
    for k, (t, grad) in enumerate(zip(targets, analytic)):
        label = getattr(t, "name", "") or f"tensor{k}"
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        if flat.size > max_elements:
            picks = rng.choice(flat.size, size=max_elements, replace=False)
        else:
            picks = np.arange(flat.size)
        local = 0.0
        for i in picks:
            original = flat[i]
            flat[i] = original + h
            up = evaluate()
            flat[i] = original - h
            down = evaluate()
            flat[i] = original
            numeric = (up - down) / (2.0 * h)
            err = relative_error(float(grad.reshape(-1)[i]), numeric, floor)
            checked += 1
            local = max(local, err)
            if err > worst:
                worst, worst_where = err, f"{label}[{int(i)}]"
        per_tensor[label] = local
    for t in targets:
        t.grad = None
    return GradCheckReport(
        max_rel_error=worst,
        passed=worst < tolerance,
        tolerance=tolerance,
        checked=checked,
        worst=worst_where,
        per_tensor=per_tensor,
    )
