"""Central finite-difference verification of analytic gradients.

Checks run in float64: the closure is evaluated with each input coordinate
nudged by +/-epsilon and the two-sided difference is compared against the
gradient produced by the backward pass. Large tensors can be spot-checked on
a seeded coordinate sample to keep runtimes bounded.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CheckFailed
from .tensor import Tensor, no_grad


@dataclass
class InputReport:
    name: str
    max_rel_err: float
    worst_coord: tuple
    checked: int


@dataclass
class GradCheckReport:
    per_input: list = field(default_factory=list)
    epsilon: float = 0.0
    tol: float = 0.0

    @property
    def max_rel_err(self) -> float:
        return max((r.max_rel_err for r in self.per_input), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def summary(self) -> str:
        lines = [f"grad check (eps={self.epsilon:g}, tol={self.tol:g}):"]
        for r in self.per_input:
            lines.append(f"  {r.name:<28s} max rel err {r.max_rel_err:.3e} over {r.checked} coords")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'} (max {self.max_rel_err:.3e})")
        return "\n".join(lines)


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


def grad_check(fn, inputs, epsilon: float = 1e-3, tol: float = 1e-4,
               max_coords: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued fn() against central differences.

    fn: zero-argument closure returning a scalar Tensor; it must read the
        current .data of each checked input on every call.
    inputs: list of (name, Tensor) whose gradients are verified; tensors must
        be float64 with requires_grad=True.
    max_coords: if set, check at most this many coordinates per input,
        sampled with the given seed.
    """
    for name, t in inputs:
        if t.data.dtype != np.float64:
            raise CheckFailed(f"grad_check input '{name}' must be float64")
        t.data = np.ascontiguousarray(t.data)  # FD loop mutates a flat view
        t.zero_grad()

    loss = fn()
    if not np.isfinite(loss.data).all():
        raise CheckFailed("non-finite loss in forward pass")
    loss.backward()

    analytic = {}
    for name, t in inputs:
        if t.grad is None:
            analytic[name] = np.zeros_like(t.data)
        else:
            if not np.isfinite(t.grad).all():
                raise CheckFailed(f"non-finite analytic gradient for '{name}'")
            analytic[name] = t.grad.copy()

    rng = np.random.default_rng(seed)
    report = GradCheckReport(epsilon=epsilon, tol=tol)
    for name, t in inputs:
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
            coords.sort()
        worst = (0.0, ())
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + epsilon
                f_plus = float(fn().data.reshape(-1)[0])
                flat[c] = orig - epsilon
                f_minus = float(fn().data.reshape(-1)[0])
            flat[c] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise CheckFailed(f"non-finite finite-difference evaluation at {name}[{c}]")
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            err = _rel_err(float(analytic[name].reshape(-1)[c]), numeric)
            if err > worst[0]:
                worst = (err, np.unravel_index(int(c), t.shape))
        report.per_input.append(InputReport(name=name, max_rel_err=worst[0],
                                            worst_coord=worst[1], checked=len(coords)))
    return report


def model_grad_check(model, build_loss, data_inputs=(), epsilon: float = 1e-3,
                     tol: float = 1e-4, max_coords_per_param: int = 40,
                     seed: int = 0) -> GradCheckReport:
    """grad_check over all parameters of a module plus optional data inputs.

    The module must already be in float64 (module.astype(np.float64)) and in
    eval mode so the forward pass is deterministic.
    """
    inputs = list(data_inputs) + list(model.named_parameters())
    for _, t in inputs:
        t.zero_grad()

    def fn():
        model.zero_grad()
        return build_loss()

    return grad_check(fn, inputs, epsilon=epsilon, tol=tol,
                      max_coords=max_coords_per_param, seed=seed)
