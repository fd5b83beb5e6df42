"""Fixed-step classical Runge-Kutta propagation of linear ODEs y' = f(t, y)."""

from __future__ import annotations

import math
from typing import Callable, Iterator, Sequence, Tuple

import numpy as np

from .errors import NumericalError


def rk4_step(f: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagate(f: Callable, y0: np.ndarray, times: Sequence[float],
                  max_step: float) -> Iterator[Tuple[float, np.ndarray]]:
    """Yield (t, y(t)) at each requested time.

    Each output interval is split into the smallest number of equal steps not
    exceeding ``max_step``, so every output time is hit exactly.
    """
    if not max_step > 0:
        raise NumericalError(f"invalid step size {max_step!r}", time_reached=times[0] if len(times) else None)
    t = float(times[0])
    y = np.array(y0, dtype=complex)
    yield t, y.copy()
    for t_next in times[1:]:
        span = float(t_next) - t
        n = max(1, math.ceil(span / max_step - 1e-12)) if span > 0 else 0
        h = span / n if n else 0.0
        for i in range(n):
            y = rk4_step(f, t + i * h, y, h)
        if not np.all(np.isfinite(y)):
            raise NumericalError("integration diverged", time_reached=t)
        t = float(t_next)
        yield t, y.copy()
