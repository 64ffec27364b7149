"""Moebius shift group generated by eps*x^2*d/dx.

``Lambda^k f(x) = f(x / (1 - k eps x))``.  In the coordinate ``y = -1/x`` the
shift is the plain translation ``y -> y + k eps``, which is what the simulator
and the operator-algebra oracles rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import evaluable as ev
from .errors import DomainError, PoleError
from .evaluable import Expr


@dataclass(frozen=True)
class ShiftParams:
    """Holds the deformation parameter eps > 0."""

    epsilon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")

    @classmethod
    def from_e_epsilon(cls, q: float) -> "ShiftParams":
        """Build from ``e**eps`` (the presets use e^eps = 1.25)."""
        if not (q > 1.0):
            raise ValueError(f"e^epsilon must exceed 1, got {q!r}")
        return cls(math.log(q))

    @property
    def e_epsilon(self) -> float:
        return math.exp(self.epsilon)


def mobius_shift(x, k: int, p: ShiftParams):
    """Return ``x / (1 - k eps x)``; raises PoleError on the pole."""
    r = ev.moebius(np.asarray(x, dtype=float), k * p.epsilon)
    return float(r) if np.ndim(r) == 0 else r


def x_to_y(x):
    xa = np.asarray(x, dtype=float)
    if np.any(xa == 0.0):
        raise DomainError("x = 0 has no image under y = -1/x")
    y = -1.0 / xa
    return float(y) if y.ndim == 0 else y


def y_to_x(y):
    ya = np.asarray(y, dtype=float)
    if np.any(ya == 0.0):
        raise DomainError("y = 0 corresponds to x = infinity")
    x = -1.0 / ya
    return float(x) if x.ndim == 0 else x


def shift_apply(f: Expr, k: int, p: ShiftParams) -> Expr:
    return ev.shift(f, k, p.epsilon)


def central_difference(f: Expr, p: ShiftParams) -> Expr:
    """``(Lambda + Lambda^-1 - 2) f``."""
    return ev.add(shift_apply(f, 1, p), shift_apply(f, -1, p), ev.mul(-2.0, f))


@dataclass(frozen=True)
class Domain:
    """A window ``[x_min, x_max]`` on which shifts up to ``|k| <= max_shift`` are pole free."""

    x_min: float
    x_max: float
    max_shift: int = 1

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError("Domain needs x_min < x_max")
        if self.x_min <= 0.0 <= self.x_max:
            raise DomainError("Domain must not contain x = 0")

    def check(self, p: ShiftParams) -> None:
        for k in range(1, self.max_shift + 1):
            for pole in (1.0 / (k * p.epsilon), -1.0 / (k * p.epsilon)):
                band = ev.POLE_GUARD * abs(pole)
                if self.x_min - band <= pole <= self.x_max + band:
                    raise PoleError(f"pole x = {pole:.17g} (k = {k}) lies inside the domain")

    @classmethod
    def from_y(cls, y_lo: float, y_hi: float, max_shift: int = 1) -> "Domain":
        """Domain whose image in y = -1/x is ``[y_lo, y_hi]`` (one side of y = 0)."""
        if y_lo * y_hi <= 0.0:
            raise DomainError("y-window must not contain y = 0")
        xs = sorted((-1.0 / y_lo, -1.0 / y_hi))
        return cls(xs[0], xs[1], max_shift)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.x_min, self.x_max, size=n)
