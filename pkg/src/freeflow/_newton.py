"""Damped Newton iteration confined to the open upper half-plane."""
from __future__ import annotations

import numpy as np

from .errors import NewtonDivergence, QuadratureFailure

MAX_ITER = 80
DAMPING = 0.5
MAX_DAMP = 45


def newton_halfplane(residual, derivative, seed: complex, *,
                     rtol: float = 1e-12, scale: float = 1.0,
                     max_iter: int = MAX_ITER) -> complex:
    """Solve residual(w) = 0 for w with Im w > 0.

    Steps that would leave the half-plane or increase |residual| are damped
    by halving; running out of damping or iterations raises NewtonDivergence
    with the iterate trace attached.
    """
    w = complex(seed)
    if w.imag <= 0:
        raise NewtonDivergence("seed not in the upper half-plane", trace=(w,))
    tol = rtol * max(1.0, abs(scale))
    trace = [w]
    # overflow during damped probing is routine, not a fault
    with np.errstate(all="ignore"):
        return _iterate(residual, derivative, w, tol=tol,
                        trace=trace, max_iter=max_iter)


def _iterate(residual, derivative, w, *, tol, trace, max_iter):
    try:
        fw = complex(residual(w))
    except QuadratureFailure as exc:
        raise NewtonDivergence(f"residual unevaluable at seed: {exc}",
                               trace=trace) from exc
    for _ in range(max_iter):
        if abs(fw) <= tol:
            return w
        try:
            d = complex(derivative(w))
        except QuadratureFailure as exc:
            raise NewtonDivergence(f"derivative unevaluable: {exc}",
                                   trace=trace) from exc
        if d == 0 or not _finite(d):
            raise NewtonDivergence("vanishing or invalid derivative",
                                   trace=trace)
        dw = fw / d
        step = 1.0
        for _ in range(MAX_DAMP):
            cand = w - step * dw
            if cand.imag > 0:
                # evaluation failures (e.g. grazing the cut) damp like
                # overshoots instead of aborting the solve
                try:
                    fc = complex(residual(cand))
                except (ArithmeticError, ValueError, QuadratureFailure):
                    fc = complex("nan")
                if _finite(fc) and (abs(fc) < abs(fw) or abs(fc) <= tol):
                    w, fw = cand, fc
                    trace.append(w)
                    break
            step *= DAMPING
        else:
            raise NewtonDivergence("no admissible damped step", trace=trace)
    if abs(fw) <= tol:
        return w
    raise NewtonDivergence(
        f"no convergence in {max_iter} iterations (|res|={abs(fw):.3g})",
        trace=trace)


def _finite(z: complex) -> bool:
    return z == z and abs(z.real) < 1e300 and abs(z.imag) < 1e300
