"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericsError
from .tensor import DOUBLE, Parameter, Tensor


@dataclass
class GradCheckReport:
    per_param: dict = field(default_factory=dict)  # name -> max relative error
    eps: float = 1e-5
    tol: float = 1e-4

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def worst(self) -> tuple[str, float]:
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    named_params: Sequence[tuple[str, Parameter]],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must be a deterministic, pure function of the current
    parameter values, returning a scalar Tensor. All parameters must be in
    double precision. The relative error uses the denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    named_params = list(named_params)
    for name, p in named_params:
        if p.data.dtype != DOUBLE:
            raise NumericsError(f"gradient check requires double precision (parameter {name!r})")

    for _, p in named_params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericsError("non-finite loss in gradient check")
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in named_params}

    report = GradCheckReport(eps=eps, tol=tol)
    for name, p in named_params:
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi = float(loss_fn().data.reshape(()))
            flat[i] = orig - eps
            lo_lo = float(loss_fn().data.reshape(()))
            flat[i] = orig
            if not (np.isfinite(lo_hi) and np.isfinite(lo_lo)):
                raise NumericsError(f"non-finite loss while perturbing {name!r}")
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
        report.per_param[name] = worst
    return report
