"""Laurent algebra of difference operators sum_k c_k(x) Lambda^k.

Composition follows ``(a Lambda^i) o (b Lambda^j) = a(x) b(Lambda^i x) Lambda^{i+j}``.
On top of it sit the Lax operator ``L = Lambda + u + e^v Lambda^-1``, the flows
``eps d_{t_j} L = [(L^j/j!)_+, L]``, the densities ``h_j = Res L^j / j!`` and the
identities that make up the bi-Hamiltonian and tau-symmetry structure.  All
coefficients are exact ``Expr`` closed forms in x; identities are checked by
evaluating them at sample points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from . import evaluable as ev
from .errors import BandOverflowError, ConsistencyError, DomainError
from .evaluable import Expr
from .qshift import ShiftParams

MAX_POWER = 6
MAX_BAND = 2 * MAX_POWER


def _is_zero(e: Expr) -> bool:
    return isinstance(e, ev.Const) and e.value == 0.0


@dataclass(frozen=True)
class DifferenceOperator:
    """Finite band ``sum_k coeffs[k] * Lambda^k``; immutable.

    Structurally zero coefficients are dropped on construction, so the band of
    ``A + (-1)*A`` is empty.
    """

    params: ShiftParams
    terms: tuple  # ((k, Expr), ...) sorted by k

    def __post_init__(self) -> None:
        merged: dict[int, Expr] = {}
        for k, c in self.terms:
            c = ev.as_expr(c)
            merged[int(k)] = ev.add(merged[int(k)], c) if int(k) in merged else c
        cleaned = tuple(sorted((k, c) for k, c in merged.items() if not _is_zero(c)))
        object.__setattr__(self, "terms", cleaned)

    @classmethod
    def of(cls, params: ShiftParams, coeffs: Mapping[int, object]) -> "DifferenceOperator":
        return cls(params, tuple(coeffs.items()))

    @property
    def eps(self) -> float:
        return self.params.epsilon

    @property
    def band(self) -> tuple[int, int] | None:
        if not self.terms:
            return None
        return self.terms[0][0], self.terms[-1][0]

    def coeff(self, k: int) -> Expr:
        for kk, c in self.terms:
            if kk == k:
                return c
        return ev.ZERO

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: "DifferenceOperator") -> "DifferenceOperator":
        return op_add(self, other)

    def __sub__(self, other: "DifferenceOperator") -> "DifferenceOperator":
        return op_add(self, op_scale(-1.0, other))

    def __neg__(self) -> "DifferenceOperator":
        return op_scale(-1.0, self)

    def __rmul__(self, c: float) -> "DifferenceOperator":
        return op_scale(c, self)

    def __matmul__(self, other: "DifferenceOperator") -> "DifferenceOperator":
        return op_compose(self, other)

    def values(self, x) -> dict[int, np.ndarray]:
        """Coefficients evaluated at the points ``x``."""
        return {k: np.broadcast_to(c(x), np.shape(x)) for k, c in self.terms}

    def trimmed(self, x, atol: float) -> "DifferenceOperator":
        """Drop coefficients whose values at ``x`` are all within ``atol`` of zero."""
        vals = self.values(x)
        return DifferenceOperator(
            self.params, tuple((k, c) for k, c in self.terms if np.max(np.abs(vals[k])) > atol)
        )

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, c in self.terms:
            lam = "" if k == 0 else ("*Lambda" if k == 1 else f"*Lambda^{k}")
            parts.append(f"({c}){lam}")
        return " + ".join(parts)


def _same_params(a: DifferenceOperator, b: DifferenceOperator) -> ShiftParams:
    if a.params != b.params:
        raise ValueError("operators built with different eps cannot be combined")
    return a.params


def op_add(a: DifferenceOperator, b: DifferenceOperator) -> DifferenceOperator:
    return DifferenceOperator(_same_params(a, b), a.terms + b.terms)


def op_scale(c: float, a: DifferenceOperator) -> DifferenceOperator:
    return DifferenceOperator(a.params, tuple((k, ev.mul(c, e)) for k, e in a.terms))


def op_compose(a: DifferenceOperator, b: DifferenceOperator, max_band: int = MAX_BAND) -> DifferenceOperator:
    """Coefficient of ``Lambda^m`` in ``a o b`` is ``sum_{i+j=m} a_i(x) b_j(Lambda^i x)``."""
    p = _same_params(a, b)
    acc: dict[int, list] = {}
    for i, ai in a.terms:
        for j, bj_ in b.terms:
            m = i + j
            if abs(m) > max_band:
                raise BandOverflowError(f"composition reaches Lambda^{m}, beyond max band {max_band}")
            acc.setdefault(m, []).append(ev.mul(ai, ev.shift(bj_, i, p.epsilon)))
    return DifferenceOperator(p, tuple((m, ev.add(*cs)) for m, cs in acc.items()))


def commutator(a: DifferenceOperator, b: DifferenceOperator, max_band: int = MAX_BAND) -> DifferenceOperator:
    return op_compose(a, b, max_band) - op_compose(b, a, max_band)


def project_plus(a: DifferenceOperator) -> DifferenceOperator:
    """Part with ``k >= 0``."""
    return DifferenceOperator(a.params, tuple((k, c) for k, c in a.terms if k >= 0))


def project_minus(a: DifferenceOperator) -> DifferenceOperator:
    """Part with ``k < 0``."""
    return DifferenceOperator(a.params, tuple((k, c) for k, c in a.terms if k < 0))


def residue(a: DifferenceOperator) -> Expr:
    return a.coeff(0)


def identity(p: ShiftParams) -> DifferenceOperator:
    return DifferenceOperator.of(p, {0: 1.0})


def shift_operator(p: ShiftParams, k: int = 1) -> DifferenceOperator:
    """``Lambda^k``."""
    return DifferenceOperator.of(p, {k: 1.0})


# -- Lax operator ------------------------------------------------------------


@dataclass(frozen=True)
class LaxFields:
    """Fields of ``L = Lambda + u + e^v Lambda^-1``.

    ``v=None`` encodes the limit ``e^v -> 0`` (the free operator when ``u = 0``).
    """

    params: ShiftParams
    u: Expr
    v: Expr | None

    @cached_property
    def V(self) -> Expr:
        return ev.ZERO if self.v is None else ev.exp(self.v)

    @classmethod
    def named(cls, params: ShiftParams, u: Expr, v: Expr | None) -> "LaxFields":
        """Wrap ``u`` and ``v`` so that derived expressions print as ``u(x)``, ``v(x)``."""
        return cls(params, ev.field("u", u), None if v is None else ev.field("v", v))

    @classmethod
    def random(cls, params: ShiftParams, rng: np.random.Generator, bumps: int = 3) -> "LaxFields":
        """Smooth random fields: sums of ``bumps`` Gaussians in y = -1/x."""
        return cls.named(params, gaussian_bumps(rng, bumps), gaussian_bumps(rng, bumps))


def gaussian_bumps(rng: np.random.Generator, n: int = 3) -> Expr:
    """``sum_i a_i exp(-((y - c_i)/w_i)^2)`` with y = -1/x and random a, c, w."""
    terms = []
    for _ in range(n):
        a = rng.uniform(-1.0, 1.0)
        c = rng.uniform(-2.0, 2.0)
        w = rng.uniform(0.5, 1.5)
        terms.append(ev.mul(a, ev.exp(ev.mul(-1.0 / (w * w), ev.power(ev.add(ev.Y, -c), 2)))))
    return ev.add(*terms)


def lax_from_fields(fields: LaxFields) -> DifferenceOperator:
    return DifferenceOperator.of(fields.params, {1: 1.0, 0: fields.u, -1: fields.V})


def _check_power(j: int, max_power: int) -> None:
    if j < 1:
        raise ValueError("powers of L are indexed from 1")
    if j > max_power:
        raise BandOverflowError(f"power {j} exceeds the configured maximum {max_power}")


def lax_power(L: DifferenceOperator, j: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> DifferenceOperator:
    _check_power(j, max_power)
    out = L
    for _ in range(j - 1):
        out = op_compose(L, out, max_band)
    return out


def bj(L: DifferenceOperator, j: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> DifferenceOperator:
    """``B_j = L^j / j!``."""
    return op_scale(1.0 / math.factorial(j), lax_power(L, j, max_power, max_band))


def default_probe(p: ShiftParams, n: int = 17) -> np.ndarray:
    """x-points whose y = -1/x sit at ``eps*(m + 0.37)``; no shift ever hits a pole."""
    m = np.arange(n) - n // 2
    return -1.0 / (p.epsilon * (m + 0.37))


def sample_points(
    p: ShiftParams,
    n: int,
    rng: np.random.Generator,
    y_range: tuple[float, float] = (-3.0, 3.0),
    max_shift: int = MAX_BAND,
    gap: float = 1e-3,
) -> np.ndarray:
    """Random x-points (uniform in y) kept ``gap`` away from every shift pole."""
    ks = np.arange(-max_shift, max_shift + 1) * p.epsilon
    out: list[float] = []
    while len(out) < n:
        y = rng.uniform(*y_range, size=2 * n)
        ok = np.min(np.abs(y[:, None] + ks[None, :]), axis=1) > gap
        out.extend((-1.0 / y[ok]).tolist())
    return np.array(out[:n])


def flow_commutator(fields: LaxFields, j: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> DifferenceOperator:
    """``[(B_j)_+, L]``."""
    L = lax_from_fields(fields)
    return commutator(project_plus(bj(L, j, max_power, max_band)), L, max_band)


def off_band_defect(C: DifferenceOperator, x, allowed: Iterable[int] = (-1, 0)) -> float:
    """Largest coefficient outside ``allowed`` at ``x``, relative to ``1 + max |coefficient|``."""
    allowed = set(allowed)
    vals = C.values(x)
    if not vals:
        return 0.0
    scale = 1.0 + max(float(np.max(np.abs(v))) for v in vals.values())
    off = [float(np.max(np.abs(v))) for k, v in vals.items() if k not in allowed]
    return max(off, default=0.0) / scale


def flow_rhs(
    fields: LaxFields,
    j: int,
    probe=None,
    atol: float = 1e-10,
    max_power: int = MAX_POWER,
    max_band: int = MAX_BAND,
) -> tuple[Expr, Expr]:
    """``(du/dt_j, dv/dt_j)`` from ``eps dL/dt_j = [(B_j)_+, L]``.

    The commutator must live on Lambda^{-1}, Lambda^0; that is verified at the
    probe points and a ConsistencyError raised otherwise.
    """
    p = fields.params
    C = flow_commutator(fields, j, max_power, max_band)
    x = default_probe(p) if probe is None else probe
    defect = off_band_defect(C, x)
    if defect > atol:
        raise ConsistencyError(f"[(B_{j})_+, L] leaves band [-1, 0]: relative defect {defect:.3e}")
    du = ev.mul(1.0 / p.epsilon, C.coeff(0))
    if fields.v is None:
        return du, ev.ZERO
    # d(e^v)/dt = e^v dv/dt
    dv = ev.mul(1.0 / p.epsilon, C.coeff(-1), ev.exp(ev.mul(-1.0, fields.v)))
    return du, dv


def toda_t1_closed_form(fields: LaxFields) -> tuple[Expr, Expr]:
    """``(du/dt_1, dV/dt_1)`` written out by hand with V = e^v."""
    p = fields.params
    e = p.epsilon
    V = fields.V
    du = ev.mul(1.0 / e, ev.add(ev.shift(V, 1, e), ev.mul(-1.0, V)))
    dV = ev.mul(1.0 / e, ev.add(ev.mul(fields.u, V), ev.mul(-1.0, V, ev.shift(fields.u, -1, e))))
    return du, dV


def hamiltonian_density(fields: LaxFields, j: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> Expr:
    """``h_j = Res L^j / j!``."""
    return residue(bj(lax_from_fields(fields), j, max_power, max_band))


def variational_derivatives(
    fields: LaxFields, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND
) -> tuple[Expr, Expr]:
    """``(a_{n;0}(x), a_{n;1}(Lambda^-1 x) e^{v(x)})`` with ``B_n = sum_k a_{n;k} Lambda^k``."""
    B = bj(lax_from_fields(fields), n, max_power, max_band)
    e = fields.params.epsilon
    return B.coeff(0), ev.mul(ev.shift(B.coeff(1), -1, e), fields.V)


def hamiltonian_flow(fields: LaxFields, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> tuple[Expr, Expr]:
    """First-bracket flow ``(du, dv)`` generated by ``variational_derivatives(fields, n)``.

    ``du = (Lambda - 1) dH/dv / eps``, ``dv = (1 - Lambda^-1) dH/du / eps``.
    """
    e = fields.params.epsilon
    gu, gv = variational_derivatives(fields, n, max_power, max_band)
    du = ev.mul(1.0 / e, ev.add(ev.shift(gv, 1, e), ev.mul(-1.0, gv)))
    dv = ev.mul(1.0 / e, ev.add(gu, ev.mul(-1.0, ev.shift(gu, -1, e))))
    return du, dv


def second_bracket_flow(fields: LaxFields, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> tuple[Expr, Expr]:
    """Second-bracket flow ``({u, H_n}_2, {v, H_n}_2)``.

    ``{u,.}_2 = [(Lambda e^v - e^v Lambda^-1) dH/du + u (Lambda - 1) dH/dv] / eps``
    ``{v,.}_2 = [(1 - Lambda^-1)(u dH/du) + (Lambda - Lambda^-1) dH/dv] / eps``
    """
    e = fields.params.epsilon
    u, V = fields.u, fields.V
    gu, gv = variational_derivatives(fields, n, max_power, max_band)
    du = ev.add(
        ev.shift(ev.mul(V, gu), 1, e),
        ev.mul(-1.0, V, ev.shift(gu, -1, e)),
        ev.mul(u, ev.add(ev.shift(gv, 1, e), ev.mul(-1.0, gv))),
    )
    ug = ev.mul(u, gu)
    dv = ev.add(
        ug,
        ev.mul(-1.0, ev.shift(ug, -1, e)),
        ev.shift(gv, 1, e),
        ev.mul(-1.0, ev.shift(gv, -1, e)),
    )
    return ev.mul(1.0 / e, du), ev.mul(1.0 / e, dv)


def recursion_residual(fields: LaxFields, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND) -> Expr:
    """``n a_{n;1} - a_{n-1;0}(Lambda x) - u a_{n-1;1} - e^v a_{n-1;2}(Lambda^-1 x)``; vanishes identically."""
    if n < 2:
        raise ValueError("recursion needs n >= 2")
    L = lax_from_fields(fields)
    e = fields.params.epsilon
    Bn = bj(L, n, max_power, max_band)
    Bm = bj(L, n - 1, max_power, max_band)
    return ev.add(
        ev.mul(float(n), Bn.coeff(1)),
        ev.mul(-1.0, ev.shift(Bm.coeff(0), 1, e)),
        ev.mul(-1.0, fields.u, Bm.coeff(1)),
        ev.mul(-1.0, fields.V, ev.shift(Bm.coeff(2), -1, e)),
    )


def density_flow_derivative(
    fields: LaxFields, m: int, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND
) -> Expr:
    """``d h_m / d t_n = Res[(B_n)_+, B_m] / eps``."""
    L = lax_from_fields(fields)
    Bm = bj(L, m, max_power, max_band)
    Bn = bj(L, n, max_power, max_band)
    return ev.mul(1.0 / fields.params.epsilon, residue(commutator(project_plus(Bn), Bm, max_band)))


def tau_symmetry_residual(
    fields: LaxFields, m: int, n: int, max_power: int = MAX_POWER, max_band: int = MAX_BAND
) -> Expr:
    """``(Res[(L^m)_+, L^n] - Res[(L^n)_+, L^m]) / (m! n!)``; vanishes identically."""
    L = lax_from_fields(fields)
    Bm = bj(L, m, max_power, max_band)
    Bn = bj(L, n, max_power, max_band)
    return ev.add(
        residue(commutator(project_plus(Bm), Bn, max_band)),
        ev.mul(-1.0, residue(commutator(project_plus(Bn), Bm, max_band))),
    )


# -- wave functions ----------------------------------------------------------


@dataclass(frozen=True)
class WaveSample:
    """``psi = amplitude(x) * chi``, ``chi = z^{-1/(x eps)}``, at spectral parameter ``z > 0``."""

    z: float
    amplitude: Expr = ev.ONE

    def __post_init__(self) -> None:
        if not self.z > 0.0:
            raise DomainError(f"spectral parameter must be positive, got {self.z!r}")


def chi(z: float, x, p: ShiftParams):
    """Vacuum wave function ``z^{-1/(x eps)}``."""
    za = np.asarray(z, dtype=float)
    if np.any(~(za > 0.0)):
        raise DomainError("chi needs z > 0")
    xa = np.asarray(x, dtype=float)
    if np.any(xa == 0.0):
        raise DomainError("chi is undefined at x = 0")
    out = np.exp(-np.log(za) / (xa * p.epsilon))
    return float(out) if out.ndim == 0 else out


def apply_to_wave(op: DifferenceOperator, amplitude: Expr, z: float) -> Expr:
    """Amplitude of ``op . (amplitude * chi)`` divided by chi.

    Uses ``Lambda^k (A chi) = A(Lambda^k x) z^k chi``.
    """
    e = op.eps
    return ev.add(*(ev.mul(c, ev.shift(amplitude, k, e), z ** k) for k, c in op.terms))


def wave_eigen_residual(fields: LaxFields, w: WaveSample, x):
    """``(L psi - z psi) / chi`` evaluated at ``x``."""
    L = lax_from_fields(fields)
    r = ev.add(apply_to_wave(L, w.amplitude, w.z), ev.mul(-w.z, w.amplitude))
    return r(x)


def multitoda_residual(phi: Expr, omega1: Expr, x, t, p: ShiftParams):
    """Residuals of the first-order Sato system for ``(phi, omega_1)``.

    ``r1 = w(x) - w(Lambda^-1 x) - eps (e^phi)_t e^-phi``,
    ``r2 = eps w_t + e^{phi(x) - phi(Lambda x)}``.
    """
    e = p.epsilon
    r1 = ev.add(
        omega1,
        ev.mul(-1.0, ev.shift(omega1, -1, e)),
        ev.mul(-e, ev.exp(phi).dt(), ev.exp(ev.mul(-1.0, phi))),
    )
    r2 = ev.add(ev.mul(e, omega1.dt()), ev.exp(ev.add(phi, ev.mul(-1.0, ev.shift(phi, 1, e)))))
    return r1(x, t), r2(x, t)
