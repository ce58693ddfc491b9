"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import ParamStore, Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    per_param: dict[str, float] = field(default_factory=dict)
    failures: list[tuple[str, int, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} max_rel_error={self.max_rel_error:.3e} tol={self.tolerance:g} entries={self.n_checked}"]
        for name, err in self.per_param.items():
            lines.append(f"  {name}: {err:.3e}")
        for name, idx, a, n in self.failures[:20]:
            lines.append(f"  offending {name}[{idx}]: analytic={a:.6e} numeric={n:.6e}")
        return "\n".join(lines)


def rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def gradient_check(
    loss_fn: Callable[[ParamStore], Tensor],
    params: ParamStore,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    max_entries: int = 100,
    seed: int = 0,
    fd_dtype=None,
) -> GradCheckReport:
    """Compare backprop gradients with ``(L(p+h) - L(p-h)) / 2h``.

    ``loss_fn`` must rebuild the graph from the store it is given on every
    call. Tensors with more than ``max_entries`` entries are checked on a
    random subset of that many entries. Parameters are restored before
    returning.

    ``fd_dtype`` (e.g. ``np.longdouble``) runs the finite-difference
    evaluations on a copy of the parameters in that dtype. Round-off in the
    loss then no longer swamps very small gradient entries; the analytic
    side stays float64.
    """
    for name, t in params.items():
        if t.dtype != np.float64:
            raise TypeError(f"gradient_check needs float64 parameters; {name} is {t.dtype}")

    loss = loss_fn(params)
    backward(loss, params)
    analytic = {name: t.grad.copy() for name, t in params.items()}

    fd_params = params if fd_dtype is None else params.astype(fd_dtype)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance, n_checked=0)
    for name in fd_params.names():
        base = fd_params[name].data.copy()
        flat = base.reshape(-1)
        if flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            idx = np.arange(flat.size)
        worst = 0.0
        for j in idx:
            plus = flat.copy()
            plus[j] += h
            fd_params.set(name, plus.reshape(base.shape))
            lp = loss_fn(fd_params).data
            minus = flat.copy()
            minus[j] -= h
            fd_params.set(name, minus.reshape(base.shape))
            lm = loss_fn(fd_params).data
            numeric = float((lp - lm) / (2 * base.dtype.type(h)))
            a = float(analytic[name].reshape(-1)[j])
            err = rel_error(a, numeric)
            worst = max(worst, err)
            if err > tolerance:
                report.failures.append((name, int(j), a, numeric))
        fd_params.set(name, base)
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
        report.n_checked += len(idx)
    return report
