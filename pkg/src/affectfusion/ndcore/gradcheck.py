"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    n_checked: int
    worst: tuple[int, tuple[int, ...]] | None = None
    failures: list[tuple[int, tuple[int, ...], float, float]] = field(default_factory=list)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel err {self.max_rel_err:.3e} over {self.n_checked} coords (tol {self.tol:g})"


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare the gradient of the scalar ``f()`` w.r.t. ``inputs`` to
    ``(f(x+h) - f(x-h)) / 2h`` coordinate by coordinate.

    ``f`` takes no arguments and must read the current ``.data`` of the
    inputs, which are perturbed in place and restored. The relative error of a
    coordinate is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps exactly
    zero gradients from turning rounding noise into an unbounded ratio.
    ``max_coords`` samples that many coordinates per input (uniformly, with
    ``rng``) instead of sweeping all of them.
    """
    for x in inputs:
        x.grad = None
    out = f()
    backward(out)
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]
    for x in inputs:
        x.grad = None

    worst_err, worst = 0.0, None
    failures = []
    n_checked = 0
    rng = rng if rng is not None else np.random.default_rng(0)
    for k, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for j in coords:
            orig = flat[j]
            flat[j] = orig + h
            fp = f().item()
            flat[j] = orig - h
            fm = f().item()
            flat[j] = orig
            num = (fp - fm) / (2.0 * h)
            ana = analytic[k].reshape(-1)[j]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            n_checked += 1
            idx = np.unravel_index(j, x.shape) if x.ndim else ()
            if err > worst_err or worst is None:
                worst_err, worst = err, (k, tuple(int(i) for i in idx))
            if err > tol:
                failures.append((k, tuple(int(i) for i in idx), float(ana), float(num)))
    return GradCheckReport(float(worst_err), not failures, tol, n_checked, worst, failures)
