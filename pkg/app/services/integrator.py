"""Dormand–Prince 5(4) with PI step-size control and quartic dense output."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from app.services.errors import NonFiniteState, StepUnderflow

Rhs = Callable[[float, np.ndarray], np.ndarray]

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = np.array(
    [
        [0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# разность решений 5-го и 4-го порядка
E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# коэффициенты плотного вывода при theta, theta^2, theta^3, theta^4
P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

ORDER = 5
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ALPHA = 0.7 / ORDER
BETA = 0.4 / ORDER


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


@dataclass
class Step:
    t0: float
    t1: float
    y0: np.ndarray
    y1: np.ndarray
    Q: np.ndarray

    @property
    def h(self) -> float:
        return self.t1 - self.t0

    def dense(self, t: float) -> np.ndarray:
        theta = (t - self.t0) / self.h
        powers = np.array([theta, theta**2, theta**3, theta**4])
        return self.y0 + self.h * (self.Q @ powers)


class DormandPrince:
    """Adaptive stepper; ``direction=-1`` integrates backwards in time."""

    def __init__(
        self,
        fun: Rhs,
        t0: float,
        y0: np.ndarray,
        *,
        atol: float,
        rtol: float,
        direction: int = 1,
        first_step: Optional[float] = None,
        max_step: float = math.inf,
    ) -> None:
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.atol = atol
        self.rtol = rtol
        self.direction = 1 if direction >= 0 else -1
        self.max_step = max_step
        self.f = self._call(self.t, self.y)
        self.h_abs = abs(first_step) if first_step else self._initial_step()
        self.err_prev: Optional[float] = None
        self.steps = 0
        self.rejected = 0

    def _call(self, t: float, y: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fun(t, y), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteState(f"non-finite derivative at t={t!r}", t=t)
        return out

    def _initial_step(self) -> float:
        scale = self.atol + np.abs(self.y) * self.rtol
        d0 = _rms(self.y / scale)
        d1 = _rms(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = self.y + self.direction * h0 * self.f
        f1 = self._call(self.t + self.direction * h0, y1)
        d2 = _rms((f1 - self.f) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / ORDER)
        return min(100 * h0, h1, self.max_step)

    def _attempt(self, h: float):
        K = np.empty((7, self.y.size))
        K[0] = self.f
        for s in range(1, 6):
            dy = h * (A[s, :s] @ K[:s])
            K[s] = self._call(self.t + C[s] * h, self.y + dy)
        y_new = self.y + h * (B @ K[:6])
        f_new = self._call(self.t + h, y_new)
        K[6] = f_new
        err = h * (E @ K)
        scale = self.atol + np.maximum(np.abs(self.y), np.abs(y_new)) * self.rtol
        return y_new, f_new, K, _rms(err / scale)

    def step(self) -> Step:
        """Advance by one accepted step."""
        rejected_here = False
        while True:
            h_abs = min(self.h_abs, self.max_step)
            min_step = 16 * np.spacing(abs(self.t)) + 1e-300
            if h_abs < min_step:
                raise StepUnderflow(f"step size underflow at t={self.t!r}", t=self.t)
            h = self.direction * h_abs
            y_new, f_new, K, err = self._attempt(h)
            if err <= 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * err ** -ALPHA
                    if self.err_prev is not None:
                        factor *= self.err_prev**BETA
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                if rejected_here:
                    factor = min(1.0, factor)
                self.err_prev = max(err, 1e-4)
                break
            self.rejected += 1
            rejected_here = True
            self.h_abs = h_abs * max(MIN_FACTOR, SAFETY * err ** -ALPHA)

        step = Step(self.t, self.t + h, self.y.copy(), y_new, K.T @ P)
        self.t += h
        self.y = y_new
        self.f = f_new
        self.h_abs = h_abs * factor
        self.steps += 1
        return step
