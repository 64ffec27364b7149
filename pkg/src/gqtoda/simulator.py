"""Time integration of ``eps^2 (log(1+V))_tt = V(Lambda x) + V(Lambda^-1 x) - 2V``.

The lattice lives on a uniform grid in ``y = -1/x`` with spacing eps, where
``Lambda^{+-1}`` are exact neighbour shifts, so the only discretisation error
is temporal.  The state is ``L_n = log(1+V_n)`` and ``M_n = dL_n/dt``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, DomainError, StabilityError
from .evaluable import Expr
from .hirota import SolitonSpec, gqte_soliton
from .qshift import ShiftParams, y_to_x

BOUNDARIES = ("zero_force", "analytic_clamp")
CSV_COLUMNS = ("t", "node", "y", "x", "V", "V_analytic", "abs_err")


@dataclass(frozen=True)
class LatticeGrid:
    """Nodes ``y_n = y0 + n*eps``, ``n = 0..count-1``."""

    params: ShiftParams
    y0: float
    count: int

    def __post_init__(self) -> None:
        if self.count < 3:
            raise ValueError("grid needs at least three nodes")

    @property
    def spacing(self) -> float:
        return self.params.epsilon

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.spacing * np.arange(self.count)

    @property
    def ghost_y(self) -> np.ndarray:
        return np.array([self.y0 - self.spacing, self.y0 + self.spacing * self.count])

    @property
    def x(self) -> np.ndarray:
        """x-nodes; DomainError if a node sits at y = 0 (x = infinity)."""
        return y_to_x(self.y)

    @classmethod
    def centered(cls, params: ShiftParams, count: int, center: float = 0.0) -> "LatticeGrid":
        """Grid symmetric about ``center`` with nodes at half-integer offsets."""
        return cls(params, center - 0.5 * (count - 1) * params.epsilon, count)


@dataclass(frozen=True)
class LatticeState:
    t: float
    L: np.ndarray
    M: np.ndarray

    @property
    def V(self) -> np.ndarray:
        return np.expm1(self.L)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    boundary: str = "zero_force"
    t_start: float = 0.0
    output_every: float = 0.1
    #: analytic field supplying ghost values for ``analytic_clamp``;
    #: integrate_and_compare defaults it to the reference solution
    ghost_field: Expr | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")


def stability_bound(state: LatticeState, p: ShiftParams) -> float:
    """``0.25 eps / sqrt(max(1 + V))``."""
    return 0.25 * p.epsilon / math.sqrt(float(np.max(np.exp(state.L))))


def init_from_field(V: Expr, grid: LatticeGrid, t0: float) -> LatticeState:
    x = grid.x
    v = V(x, t0)
    one_plus = 1.0 + v
    if np.any(~(one_plus > 0.0)):
        raise DomainError("1 + V must be positive at every node")
    return LatticeState(float(t0), np.log(one_plus), V.dt()(x, t0) / one_plus)


def _ghosts(t: float, grid: LatticeGrid, cfg: IntegratorConfig) -> tuple[float, float]:
    if cfg.boundary == "zero_force":
        return 0.0, 0.0
    if cfg.ghost_field is None:
        raise ValueError("analytic_clamp needs ghost_field (integrate_and_compare fills it in)")
    gx = y_to_x(grid.ghost_y)
    g = cfg.ghost_field(gx, t)
    return float(g[0]), float(g[1])


def rhs(state: LatticeState, grid: LatticeGrid, cfg: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(dL/dt, dM/dt) = (M, (V_{n+1} + V_{n-1} - 2 V_n) / eps^2)``."""
    return _rhs(state.t, state.L, state.M, grid, cfg)


def _rhs(t, L, M, grid, cfg):
    V = np.expm1(L)
    lo, hi = _ghosts(t, grid, cfg)
    padded = np.concatenate(([lo], V, [hi]))
    return M, (padded[2:] + padded[:-2] - 2.0 * V) / grid.spacing ** 2


def step_rk4(state: LatticeState, grid: LatticeGrid, cfg: IntegratorConfig, dt: float | None = None) -> LatticeState:
    """One classical Runge-Kutta step of size ``dt`` (default ``cfg.dt``; may be negative)."""
    h = cfg.dt if dt is None else dt
    if abs(h) > stability_bound(state, grid.params):
        raise StabilityError(
            f"|dt| = {abs(h):.3e} exceeds the bound 0.25*eps/sqrt(max(1+V)) = {stability_bound(state, grid.params):.3e}"
        )
    t, L, M = state.t, state.L, state.M
    # non-finite values are reported below as BlowUpError
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _rhs(t, L, M, grid, cfg)
        k2 = _rhs(t + h / 2, L + h / 2 * k1[0], M + h / 2 * k1[1], grid, cfg)
        k3 = _rhs(t + h / 2, L + h / 2 * k2[0], M + h / 2 * k2[1], grid, cfg)
        k4 = _rhs(t + h, L + h * k3[0], M + h * k3[1], grid, cfg)
        L1 = L + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        M1 = M + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(L1)) and np.all(np.isfinite(M1))):
        raise BlowUpError(f"non-finite state after step to t = {t + h:.6g}")
    return LatticeState(t + h, L1, M1)


def integrate(
    state: LatticeState,
    grid: LatticeGrid,
    cfg: IntegratorConfig,
    t_end: float | None = None,
    observer: Callable[[LatticeState], None] | None = None,
) -> LatticeState:
    """Step from ``state.t`` to ``t_end`` (default ``cfg.t_end``); backwards when t_end < t.

    ``observer`` sees the initial state and every state landing on a multiple
    of ``cfg.output_every`` as well as the final one.
    """
    target = cfg.t_end if t_end is None else t_end
    span = target - state.t
    nsteps = int(round(abs(span) / cfg.dt))
    h = math.copysign(cfg.dt, span) if nsteps else 0.0
    if nsteps and not math.isclose(nsteps * cfg.dt, abs(span), rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t_end - t_start must be a multiple of dt")
    every = max(1, int(round(cfg.output_every / cfg.dt)))
    t0 = state.t
    if observer:
        observer(state)
    for i in range(1, nsteps + 1):
        state = step_rk4(state, grid, cfg, h)
        # re-anchor t to avoid drift from repeated addition
        state = replace(state, t=t0 + i * h)
        if observer and (i % every == 0 or i == nsteps):
            observer(state)
    return state


@dataclass
class ErrorReport:
    max_abs: float
    l2: float
    per_time_series: list  # [(t, max_abs_err)]
    boundary: str
    rows: list = field(default_factory=list, repr=False)


def integrate_and_compare(
    spec: SolitonSpec | None,
    grid: LatticeGrid,
    cfg: IntegratorConfig,
    analytic: Expr | None = None,
    keep_rows: bool = False,
) -> ErrorReport:
    """Integrate from the analytic soliton and record the error at every output time.

    ``spec=None`` with ``analytic=None`` runs the vacuum V = 0.  ``l2`` is the
    root-mean-square over all recorded nodes and times.
    """
    if analytic is None:
        analytic = gqte_soliton(spec) if spec is not None else None
    if analytic is None:
        from .evaluable import ZERO

        analytic = ZERO
    if cfg.boundary == "analytic_clamp" and cfg.ghost_field is None:
        cfg = replace(cfg, ghost_field=analytic)
    x = grid.x
    y = grid.y
    series: list = []
    rows: list = []
    sq = [0.0, 0]

    def observe(s: LatticeState) -> None:
        exact = np.broadcast_to(analytic(x, s.t), x.shape)
        V = s.V
        err = np.abs(V - exact)
        series.append((s.t, float(np.max(err))))
        sq[0] += float(np.sum(err ** 2))
        sq[1] += err.size
        if keep_rows:
            for n in range(grid.count):
                rows.append((s.t, n, y[n], x[n], V[n], exact[n], err[n]))

    state = init_from_field(analytic, grid, cfg.t_start)
    integrate(state, grid, cfg, observer=observe)
    return ErrorReport(
        max_abs=max(e for _, e in series),
        l2=math.sqrt(sq[0] / sq[1]),
        per_time_series=series,
        boundary=cfg.boundary,
        rows=rows,
    )


def convergence_order(errors: Sequence[float], dts: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def write_csv(path, rows, header_lines: Sequence[str] = ()) -> None:
    """Write rows in the ``CSV_COLUMNS`` schema; floats with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")
