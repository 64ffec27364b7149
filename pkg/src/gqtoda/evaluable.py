"""Closed-form scalar fields of (x, t) with exact shifts and analytic t-derivatives.

Every coefficient, tau function and field in the package is an ``Expr``: an
immutable expression tree evaluated pointwise with numpy broadcasting.  Shift
nodes substitute ``x -> x / (1 - s x)`` exactly, so no interpolation ever
happens, and ``Expr.dt()`` builds the analytic time derivative by the usual
sum/product/chain rules.

Evaluation memoises every node per shift offset, which keeps the large
derivative trees produced by ``dt()`` cheap: shared subtrees are computed once.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from .errors import DomainError, PoleError

Number = Union[int, float]

POLE_GUARD = 10.0 * np.finfo(float).eps


def moebius(x, s: float):
    """Return ``x / (1 - s*x)``; ``s`` is the y-translation ``k * eps``.

    Raises PoleError inside the guard band ``|1 - s x| <= 10 macheps |s x|``.
    """
    if s == 0.0:
        return x
    den = 1.0 - s * x
    if np.any(np.abs(den) <= POLE_GUARD * np.abs(s * x)):
        raise PoleError(f"Moebius pole: 1 - ({s!r})*x vanishes inside the guard band")
    return x / den


class _Context:
    __slots__ = ("x", "t", "cache", "_xs")

    def __init__(self, x: np.ndarray, t: np.ndarray) -> None:
        self.x = x
        self.t = t
        self.cache: dict = {}
        self._xs: dict = {}

    def x_at(self, s: float):
        xs = self._xs.get(s)
        if xs is None:
            xs = moebius(self.x, s)
            self._xs[s] = xs
        return xs


class Expr:
    """Base node.  Instances are immutable once built."""

    __slots__ = ("_dt", "has_t", "has_x")

    def __init__(self, has_t: bool, has_x: bool) -> None:
        self._dt = None
        self.has_t = has_t
        self.has_x = has_x

    # -- evaluation --------------------------------------------------------
    def __call__(self, x, t=0.0):
        xa = np.asarray(x, dtype=float)
        ta = np.asarray(t, dtype=float)
        out = self._value(_Context(xa, ta), 0.0)
        shape = np.broadcast_shapes(xa.shape, ta.shape)
        if shape == ():
            return float(out)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def _value(self, ctx: _Context, s: float):
        key = (id(self), s)
        hit = ctx.cache.get(key)
        if hit is None:
            hit = self._ev(ctx, s)
            ctx.cache[key] = hit
        return hit

    def _ev(self, ctx: _Context, s: float):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- calculus ----------------------------------------------------------
    def dt(self) -> "Expr":
        """Analytic partial derivative in t (cached on the node)."""
        if self._dt is None:
            self._dt = self._deriv() if self.has_t else ZERO
        return self._dt

    def dt2(self) -> "Expr":
        return self.dt().dt()

    def _deriv(self) -> "Expr":  # pragma: no cover - abstract
        raise NotImplementedError

    # -- printing ----------------------------------------------------------
    def __str__(self) -> str:
        return self._fmt(0)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self._fmt(0)}>"

    def _fmt(self, off: int) -> str:  # pragma: no cover - abstract
        raise NotImplementedError

    # -- arithmetic sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(-1.0, other))

    def __rsub__(self, other):
        return add(other, mul(-1.0, self))

    def __neg__(self):
        return mul(-1.0, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, n: int):
        return power(self, n)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number) -> None:
        super().__init__(False, False)
        self.value = float(value)

    def _ev(self, ctx, s):
        return np.float64(self.value)

    def _fmt(self, off):
        return format(self.value, "g")


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        if name not in ("x", "t"):
            raise ValueError("Var name must be 'x' or 't'")
        super().__init__(name == "t", name == "x")
        self.name = name

    def _ev(self, ctx, s):
        if self.name == "t":
            return ctx.t
        return ctx.x_at(s)

    def _deriv(self):
        return ONE

    def _fmt(self, off):
        return _xstr(off) if self.name == "x" else "t"


class Field(Expr):
    """Named wrapper; evaluates its body but prints as ``name(x)``."""

    __slots__ = ("name", "body")

    def __init__(self, name: str, body: Expr) -> None:
        super().__init__(body.has_t, body.has_x)
        self.name = name
        self.body = body

    def _ev(self, ctx, s):
        return self.body._value(ctx, s)

    def _deriv(self):
        return Field(f"{self.name}_t", self.body.dt())

    def _fmt(self, off):
        return f"{self.name}({_xstr(off)})"


class Sum(Expr):
    __slots__ = ("terms", "const")

    def __init__(self, terms: tuple, const: float) -> None:
        super().__init__(any(e.has_t for _, e in terms), any(e.has_x for _, e in terms))
        self.terms = terms
        self.const = const

    def _ev(self, ctx, s):
        out = np.float64(self.const)
        for c, e in self.terms:
            v = e._value(ctx, s)
            out = out + (v if c == 1.0 else c * v)
        return out

    def _deriv(self):
        return add(*(mul(c, e.dt()) for c, e in self.terms if e.has_t))

    def _fmt(self, off):
        parts = []
        for c, e in self.terms:
            body = e._fmt(off)
            if isinstance(e, Sum):
                body = f"({body})"
            if c == 1.0:
                parts.append(("+", body))
            elif c == -1.0:
                parts.append(("-", body))
            else:
                parts.append(("-" if c < 0 else "+", f"{abs(c):g}*{body}"))
        if self.const:
            parts.append(("-" if self.const < 0 else "+", format(abs(self.const), "g")))
        text = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text


class Prod(Expr):
    __slots__ = ("coef", "factors", "_core")

    def __init__(self, coef: float, factors: tuple) -> None:
        super().__init__(any(f.has_t for f in factors), any(f.has_x for f in factors))
        self.coef = coef
        self.factors = factors
        self._core = None

    @property
    def core(self) -> "Prod":
        if self.coef == 1.0:
            return self
        if self._core is None:
            self._core = Prod(1.0, self.factors)
        return self._core

    def _ev(self, ctx, s):
        out = self.factors[0]._value(ctx, s)
        for f in self.factors[1:]:
            out = out * f._value(ctx, s)
        return out if self.coef == 1.0 else self.coef * out

    def _deriv(self):
        terms = []
        for i, f in enumerate(self.factors):
            if f.has_t:
                others = self.factors[:i] + self.factors[i + 1:]
                terms.append(mul(self.coef, f.dt(), *others))
        return add(*terms)

    def _fmt(self, off):
        body = "*".join(
            f"({f._fmt(off)})" if isinstance(f, (Sum, Quot)) else f._fmt(off) for f in self.factors
        )
        if self.coef == 1.0:
            return body
        if self.coef == -1.0:
            return "-" + body
        return f"{self.coef:g}*{body}"


class Quot(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num: Expr, den: Expr) -> None:
        super().__init__(num.has_t or den.has_t, num.has_x or den.has_x)
        self.num = num
        self.den = den

    def _ev(self, ctx, s):
        d = self.den._value(ctx, s)
        if np.any(d == 0.0):
            raise DomainError(f"division by zero in {self}")
        return self.num._value(ctx, s) / d

    def _deriv(self):
        n, d = self.num, self.den
        return div(add(mul(n.dt(), d), mul(-1.0, n, d.dt())), power(d, 2))

    def _fmt(self, off):
        return f"({self.num._fmt(off)})/({self.den._fmt(off)})"


class Exp(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr) -> None:
        super().__init__(arg.has_t, arg.has_x)
        self.arg = arg

    def _ev(self, ctx, s):
        return np.exp(self.arg._value(ctx, s))

    def _deriv(self):
        return mul(self, self.arg.dt())

    def _fmt(self, off):
        return f"exp({self.arg._fmt(off)})"


class Log(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr) -> None:
        super().__init__(arg.has_t, arg.has_x)
        self.arg = arg

    def _ev(self, ctx, s):
        a = self.arg._value(ctx, s)
        if np.any(~(a > 0.0)):
            raise DomainError(f"log of a non-positive value in log({self.arg})")
        return np.log(a)

    def _deriv(self):
        return div(self.arg.dt(), self.arg)

    def _fmt(self, off):
        return f"log({self.arg._fmt(off)})"


class Power(Expr):
    __slots__ = ("base", "n")

    def __init__(self, base: Expr, n: int) -> None:
        super().__init__(base.has_t, base.has_x)
        self.base = base
        self.n = n

    def _ev(self, ctx, s):
        b = self.base._value(ctx, s)
        return b * b if self.n == 2 else b ** self.n

    def _deriv(self):
        return mul(float(self.n), power(self.base, self.n - 1), self.base.dt())

    def _fmt(self, off):
        return f"({self.base._fmt(off)})^{self.n}"


class Shift(Expr):
    """``arg`` evaluated at ``x / (1 - k*eps*x)``."""

    __slots__ = ("arg", "k", "eps")

    def __init__(self, arg: Expr, k: int, eps: float) -> None:
        super().__init__(arg.has_t, arg.has_x)
        self.arg = arg
        self.k = k
        self.eps = eps

    def _ev(self, ctx, s):
        return self.arg._value(ctx, s + self.k * self.eps)

    def _deriv(self):
        return shift(self.arg.dt(), self.k, self.eps)

    def _fmt(self, off):
        return self.arg._fmt(off + self.k)


class Positive(Expr):
    """Guard node: raises DomainError where the wrapped value is not > 0."""

    __slots__ = ("arg", "what")

    def __init__(self, arg: Expr, what: str) -> None:
        super().__init__(arg.has_t, arg.has_x)
        self.arg = arg
        self.what = what

    def _ev(self, ctx, s):
        a = self.arg._value(ctx, s)
        if np.any(~(a > 0.0)):
            raise DomainError(f"{self.what} must be positive")
        return a

    def _deriv(self):
        return self.arg.dt()

    def _fmt(self, off):
        return self.arg._fmt(off)


class LogSumExpT(Expr):
    """``d^n/dt^n log sum_k exp(a_k(x) + b_k t)`` for constant rates ``b_k``.

    For ``n >= 1`` this is the n-th cumulant of the rates under the softmax
    weights, so it is evaluated without forming the (possibly huge) sum.
    """

    __slots__ = ("offsets", "rates", "order")

    def __init__(self, offsets: tuple, rates: tuple, order: int = 0) -> None:
        super().__init__(any(r != 0.0 for r in rates), any(a.has_x for a in offsets))
        self.offsets = offsets
        self.rates = rates
        self.order = order

    def _ev(self, ctx, s):
        z = np.stack(np.broadcast_arrays(*(a._value(ctx, s) + r * ctx.t for a, r in zip(self.offsets, self.rates))))
        b = np.array(self.rates).reshape((-1,) + (1,) * (z.ndim - 1))
        top = np.max(z, axis=0)
        w = np.exp(z - top)
        total = np.sum(w, axis=0)
        if self.order == 0:
            return top + np.log(total)
        w = w / total
        mean = np.sum(w * b, axis=0)
        if self.order == 1:
            return mean
        d = b - mean
        mom = [None, 0.0] + [np.sum(w * d ** j, axis=0) for j in range(2, self.order + 1)]
        kap = [None, 0.0]
        for n in range(2, self.order + 1):
            kap.append(mom[n] - sum(math.comb(n - 1, k - 1) * kap[k] * mom[n - k] for k in range(2, n - 1)))
        return kap[self.order]

    def _deriv(self):
        return LogSumExpT(self.offsets, self.rates, self.order + 1)

    def _fmt(self, off):
        head = "log(sum exp)" if self.order == 0 else f"d^{self.order}/dt^{self.order} log(sum exp)"
        return f"{head}[{', '.join(a._fmt(off) for a in self.offsets)}]"


def _xstr(off: int) -> str:
    if off == 0:
        return "x"
    sign = "-" if off > 0 else "+"
    k = abs(off)
    return f"x/(1{sign}eps*x)" if k == 1 else f"x/(1{sign}{k}*eps*x)"


ZERO = Const(0.0)
ONE = Const(1.0)
X = Var("x")
T = Var("t")
#: The rectifying coordinate y = -1/x; Moebius shifts act on it as y -> y + k*eps.
Y = Quot(Const(-1.0), X)


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def _term_key(e: Expr) -> tuple:
    """Structural identity used to merge like terms.

    Leaves compare by object identity; shifts and (commutative) products are
    unpacked so that separately built copies still merge.
    """
    if isinstance(e, Shift):
        return ("s", _term_key(e.arg), e.k, e.eps)
    if isinstance(e, Prod):
        return ("p", e.coef, tuple(sorted(_term_key(f) for f in e.factors)))
    return ("i", id(e))


def add(*items) -> Expr:
    """Sum with constant folding and merging of identical terms."""
    const = 0.0
    acc: dict = {}

    def put(c: float, e: Expr) -> None:
        if isinstance(e, Prod):
            c = c * e.coef
            e = e.factors[0] if len(e.factors) == 1 else e.core
        key = _term_key(e)
        slot = acc.get(key)
        if slot is None:
            acc[key] = [c, e]
        else:
            slot[0] += c

    for it in items:
        it = as_expr(it)
        if isinstance(it, Const):
            const += it.value
        elif isinstance(it, Sum):
            const += it.const
            for c, e in it.terms:
                put(c, e)
        else:
            put(1.0, it)
    terms = tuple((c, e) for c, e in acc.values() if c != 0.0)
    if not terms:
        return Const(const)
    if len(terms) == 1 and const == 0.0:
        c, e = terms[0]
        return e if c == 1.0 else mul(c, e)
    return Sum(terms, const)


def mul(*items) -> Expr:
    """Product with constant folding; flattens nested products."""
    coef = 1.0
    factors: list = []
    for it in items:
        it = as_expr(it)
        if isinstance(it, Const):
            coef *= it.value
        elif isinstance(it, Prod):
            coef *= it.coef
            factors.extend(it.factors)
        elif isinstance(it, Sum) and len(it.terms) == 1 and it.const == 0.0:
            coef *= it.terms[0][0]
            factors.append(it.terms[0][1])
        else:
            factors.append(it)
    if coef == 0.0:
        return ZERO
    if not factors:
        return Const(coef)
    if len(factors) == 1:
        f = factors[0]
        if coef == 1.0:
            return f
        if isinstance(f, Sum):
            return Sum(tuple((coef * c, e) for c, e in f.terms), coef * f.const)
    return Prod(coef, tuple(factors))


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if isinstance(b, Const):
        if b.value == 0.0:
            raise DomainError("division by the zero constant")
        return mul(1.0 / b.value, a)
    if isinstance(a, Const) and a.value == 0.0:
        return ZERO
    return Quot(a, b)


def exp(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        return Const(math.exp(a.value))
    return Exp(a)


def log(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        if a.value <= 0.0:
            raise DomainError("log of a non-positive constant")
        return Const(math.log(a.value))
    return Log(a)


def power(b, n: int) -> Expr:
    b = as_expr(b)
    if n < 0:
        return div(ONE, power(b, -n))
    if n == 0:
        return ONE
    if n == 1:
        return b
    if isinstance(b, Const):
        return Const(b.value ** n)
    return Power(b, n)


def shift(f, k: int, eps: float) -> Expr:
    """Exact argument substitution ``f(x) -> f(x / (1 - k*eps*x))``."""
    f = as_expr(f)
    if k == 0 or not f.has_x:
        return f
    if isinstance(f, Shift) and f.eps == eps:
        return shift(f.arg, f.k + k, eps)
    return Shift(f, int(k), eps)


def log_sum_exp_t(offsets, rates) -> Expr:
    """``log sum_k exp(offsets[k] + rates[k] * t)`` with stable t-derivatives."""
    offs = tuple(as_expr(a) for a in offsets)
    if len(offs) != len(rates) or not offs:
        raise ValueError("need matching, non-empty offsets and rates")
    return LogSumExpT(offs, tuple(float(r) for r in rates))


def positive(f, what: str = "value") -> Expr:
    return Positive(as_expr(f), what)


def field(name: str, body) -> Expr:
    return Field(name, as_expr(body))
