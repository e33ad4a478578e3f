"""Embedded Runge-Kutta-Fehlberg 4(5) for complex flows confined to C+.

The exact flows integrated here preserve the upper half-plane, so any trial
step (or stage point) with Im <= 0 is rejected and the step halved; when the
step falls below min_step the integrator gives up with StepUnderflow instead
of continuing through the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError, StepUnderflow

# classic Fehlberg tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


@dataclass(frozen=True)
class OdeConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    min_step: float = 1e-12
    max_steps: int = 200000


def integrate_halfplane(rhs, y0: complex, t_end: float,
                        config: OdeConfig = OdeConfig()) -> complex:
    """Integrate y' = rhs(y) from 0 to t_end >= 0 with y confined to C+."""
    if t_end < 0:
        raise DomainError("integration time must be nonnegative")
    y = complex(y0)
    if y.imag <= 0:
        raise DomainError("initial point must lie in the upper half-plane")
    if t_end == 0:
        return y
    t = 0.0
    h = min(0.01, t_end)
    for _ in range(config.max_steps):
        if t >= t_end:
            return y
        h = min(h, t_end - t)
        if h < config.min_step:
            raise StepUnderflow(
                f"step {h:.3g} below minimum at t = {t:.6g}, y = {y}")
        ks = []
        ok = True
        for row in _A:
            stage = y + h * sum(a * k for a, k in zip(row, ks))
            if stage.imag <= 0:
                ok = False
                break
            try:
                ks.append(complex(rhs(stage)))
            except (ArithmeticError, ValueError, DomainError):
                ok = False
                break
        if not ok:
            h *= 0.5
            continue
        y4 = y + h * sum(b * k for b, k in zip(_B4, ks))
        y5 = y + h * sum(b * k for b, k in zip(_B5, ks))
        if y5.imag <= 0 or y5 != y5:
            h *= 0.5
            continue
        err = abs(y5 - y4)
        tol = config.abs_tol + config.rel_tol * max(abs(y), abs(y5))
        if err <= tol:
            t += h
            y = y5
        factor = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
        h *= min(max(factor, 0.2), 5.0)
    raise StepUnderflow(f"step budget exhausted at t = {t:.6g}")
