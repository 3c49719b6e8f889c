"""Exact scalars (rationals and cyclotomic numbers) and truncated power series."""

from __future__ import annotations

import math
import re
from fractions import Fraction
from functools import lru_cache
from itertools import product as iproduct

from .errors import (
    CompositionNotNilpotent,
    DimensionMismatch,
    DivisionByZero,
    IncompatibleCyclotomicOrders,
    NotAUnit,
    ParseError,
    PrecisionExhausted,
)

INF = math.inf

# When False, mixing two cyclotomic orders raises instead of lifting to the lcm.
LIFT_MIXED_ORDERS = True


@lru_cache(maxsize=None)
def cyclotomic_polynomial(k: int) -> tuple[int, ...]:
    """Integer coefficients of the k-th cyclotomic polynomial, lowest degree first."""
    from sympy import Poly, Symbol
    from sympy import cyclotomic_poly as _cp

    x = Symbol("x")
    return tuple(int(c) for c in reversed(Poly(_cp(k, x), x).all_coeffs()))


def _reduce(k: int, poly) -> list[Fraction]:
    """Reduce a polynomial in zeta (index = exponent) to the power basis mod Phi_k."""
    folded = [Fraction(0)] * k
    for e, c in enumerate(poly):
        if c:
            folded[e % k] += c
    phi = cyclotomic_polynomial(k)
    d = len(phi) - 1
    for e in range(k - 1, d - 1, -1):
        c = folded[e]
        if c:
            base = e - d
            for t, p in enumerate(phi):
                if p:
                    folded[base + t] -= c * p
    return folded[:d]


class Cyclotomic:
    """A non-rational element of Q(zeta_k) in the power basis modulo Phi_k.

    Instances are only created through :meth:`make`, which collapses rational
    values to :class:`fractions.Fraction`; a ``Cyclotomic`` is therefore never
    rational and never zero.
    """

    __slots__ = ("k", "coeffs")

    def __init__(self, k: int, coeffs: tuple[Fraction, ...]):
        self.k = k
        self.coeffs = coeffs

    @staticmethod
    def make(k: int, poly):
        if k <= 0:
            raise ValueError("cyclotomic order must be positive")
        red = _reduce(k, [Fraction(c) for c in poly])
        if not any(red[1:]):
            return red[0] if red else Fraction(0)
        return Cyclotomic(k, tuple(red))

    def _lift(self, order: int) -> list[Fraction]:
        step = order // self.k
        out = [Fraction(0)] * (step * (len(self.coeffs) - 1) + 1)
        for e, c in enumerate(self.coeffs):
            out[e * step] = c
        return out

    @staticmethod
    def _common(a, b):
        """Return (order, poly_a, poly_b) with both operands lifted to one field."""
        ka = a.k if isinstance(a, Cyclotomic) else 1
        kb = b.k if isinstance(b, Cyclotomic) else 1
        if ka != kb and ka > 1 and kb > 1 and not LIFT_MIXED_ORDERS:
            raise IncompatibleCyclotomicOrders(f"orders {ka} and {kb}")
        order = math.lcm(ka, kb)
        pa = a._lift(order) if isinstance(a, Cyclotomic) else [Fraction(a)]
        pb = b._lift(order) if isinstance(b, Cyclotomic) else [Fraction(b)]
        return order, pa, pb

    def __add__(self, other):
        if not isinstance(other, (Cyclotomic, Fraction, int)):
            return NotImplemented
        order, pa, pb = Cyclotomic._common(self, other)
        size = max(len(pa), len(pb))
        pa += [0] * (size - len(pa))
        for i, c in enumerate(pb):
            pa[i] += c
        return Cyclotomic.make(order, pa)

    __radd__ = __add__

    def __neg__(self):
        return Cyclotomic(self.k, tuple(-c for c in self.coeffs))

    def __pos__(self):
        return self

    def __sub__(self, other):
        if not isinstance(other, (Cyclotomic, Fraction, int)):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (Fraction, int)):
            if not other:
                return Fraction(0)
            return Cyclotomic(self.k, tuple(c * other for c in self.coeffs))
        if not isinstance(other, Cyclotomic):
            return NotImplemented
        order, pa, pb = Cyclotomic._common(self, other)
        out = [Fraction(0)] * (len(pa) + len(pb) - 1)
        for i, x in enumerate(pa):
            if x:
                for j, y in enumerate(pb):
                    if y:
                        out[i + j] += x * y
        return Cyclotomic.make(order, out)

    __rmul__ = __mul__

    def inverse(self):
        """Solve (self * y = 1) as a linear system in the power basis."""
        from .linalg import solve

        d = len(self.coeffs)
        cols = []
        for j in range(d):
            shifted = [Fraction(0)] * j + list(self.coeffs)
            red = _reduce(self.k, shifted)
            cols.append(red)
        matrix = [[cols[j][i] for j in range(d)] for i in range(d)]
        rhs = [Fraction(1)] + [Fraction(0)] * (d - 1)
        y = solve(matrix, rhs)
        return Cyclotomic.make(self.k, y)

    def __truediv__(self, other):
        if isinstance(other, (Fraction, int)):
            if not other:
                raise DivisionByZero("division by zero")
            return Cyclotomic(self.k, tuple(c / other for c in self.coeffs))
        if not isinstance(other, Cyclotomic):
            return NotImplemented
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __pow__(self, e: int):
        if e < 0:
            return self.inverse() ** (-e)
        result, base = Fraction(1), self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, Cyclotomic):
            if other.k == self.k:
                return other.coeffs == self.coeffs
            order, pa, pb = Cyclotomic._common(self, other)
            return _reduce(order, pa) == _reduce(order, pb)
        if isinstance(other, (Fraction, int)):
            return False
        return NotImplemented

    def __hash__(self):
        return hash((self.k, self.coeffs))

    def __bool__(self):
        return True

    def __repr__(self):
        return format_scalar(self)


def zeta(k: int, e: int = 1):
    """The primitive k-th root of unity raised to the power e."""
    e %= k
    poly = [0] * (e + 1)
    poly[e] = 1
    return Cyclotomic.make(k, poly)


def scalar_inverse(a):
    if isinstance(a, Cyclotomic):
        return a.inverse()
    if not a:
        raise DivisionByZero("inverse of zero")
    return 1 / Fraction(a)


def format_scalar(c) -> str:
    if isinstance(c, Cyclotomic):
        return f"cyc({c.k})[" + ",".join(_frac_str(x) for x in c.coeffs) + "]"
    return _frac_str(Fraction(c))


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


_CYC_RE = re.compile(r"^\s*cyc\((\d+)\)\[(.*)\]\s*$")


def parse_scalar(s):
    if isinstance(s, bool):
        raise ParseError(f"not a scalar: {s!r}")
    if isinstance(s, int):
        return Fraction(s)
    if not isinstance(s, str):
        raise ParseError(f"not a scalar: {s!r}")
    m = _CYC_RE.match(s)
    try:
        if m:
            k = int(m.group(1))
            body = m.group(2).strip()
            parts = [Fraction(p.strip()) for p in body.split(",")] if body else []
            if k < 1:
                raise ParseError(f"bad cyclotomic order in {s!r}")
            return Cyclotomic.make(k, parts)
        return Fraction(s.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"not a scalar: {s!r}") from exc


def scalar_field_order(c) -> int:
    return c.k if isinstance(c, Cyclotomic) else 1


# ---------------------------------------------------------------------------
# multi-index helpers


def madd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def msub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def unit_vector(n: int, i: int, value: int = 1):
    """Multi-index with ``value`` at (0-based) position i."""
    v = [0] * n
    v[i] = value
    return tuple(v)


def multi_indices(n: int, total: int):
    """All multi-indices in N^n with entry sum exactly ``total`` (lex order)."""
    if n == 0:
        if total == 0:
            yield ()
        return
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in multi_indices(n - 1, total - first):
            yield (first,) + rest


def multi_indices_upto(n: int, total: int):
    for t in range(total + 1):
        yield from multi_indices(n, t)


def anti_lex_key(k):
    """Sort key for the anti-lexicographic order: compare the last entry first."""
    return tuple(reversed(k))


@lru_cache(maxsize=None)
def factorial(m: int) -> int:
    return math.factorial(m)


def mfactorial(i) -> int:
    out = 1
    for x in i:
        out *= factorial(x)
    return out


@lru_cache(maxsize=None)
def binom(b: int, j: int) -> Fraction:
    """Generalized binomial coefficient b(b-1)...(b-j+1)/j! for any integer b."""
    if j < 0:
        return Fraction(0)
    num = 1
    for t in range(j):
        num *= b - t
    return Fraction(num, factorial(j))


def mbinom(b, j) -> Fraction:
    out = Fraction(1)
    for x, y in zip(b, j):
        out *= binom(x, y)
    return out


@lru_cache(maxsize=None)
def falling(c: int, j: int) -> int:
    out = 1
    for t in range(j):
        out *= c - t
    return out


# ---------------------------------------------------------------------------
# power series


def _clean(terms: dict, prec) -> dict:
    return {e: c for e, c in terms.items() if c and sum(e) <= prec}


class PowerSeries:
    """Truncated element of K[[x1..xn]]: every monomial of degree <= prec is exact.

    ``prec`` may be ``math.inf`` for exact polynomials.
    """

    __slots__ = ("n", "terms", "prec")

    def __init__(self, n: int, terms: dict | None = None, prec=INF, *, _trusted=False):
        if prec < 0:
            raise PrecisionExhausted(f"series precision {prec} is negative")
        self.n = n
        self.prec = prec
        if _trusted:
            self.terms = terms
        else:
            clean = {}
            for e, c in (terms or {}).items():
                e = tuple(int(x) for x in e)
                if len(e) != n or min(e, default=0) < 0:
                    raise DimensionMismatch(f"bad exponent {e} for n={n}")
                if isinstance(c, float):
                    raise TypeError("floating-point coefficients are not exact")
                if c and sum(e) <= prec:
                    clean[e] = clean.get(e, Fraction(0)) + c
            self.terms = {e: c for e, c in clean.items() if c}

    # constructors -----------------------------------------------------
    @classmethod
    def zero(cls, n, prec=INF):
        return cls(n, {}, prec, _trusted=True)

    @classmethod
    def one(cls, n, prec=INF):
        return cls.constant(n, 1, prec)

    @classmethod
    def constant(cls, n, c, prec=INF):
        return cls(n, {(0,) * n: Fraction(c) if isinstance(c, int) else c}, prec)

    @classmethod
    def var(cls, n, i, prec=INF):
        """The coordinate x_{i+1} (0-based index i)."""
        return cls(n, {unit_vector(n, i): Fraction(1)}, prec)

    @classmethod
    def monomial(cls, n, e, c=1, prec=INF):
        return cls(n, {tuple(e): Fraction(c) if isinstance(c, int) else c}, prec)

    # basic queries ----------------------------------------------------
    def valuation(self):
        """Lowest total degree of a stored term; ``math.inf`` for zero."""
        return min((sum(e) for e in self.terms), default=INF)

    def degree(self):
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self):
        return not self.terms

    def coeff(self, e):
        return self.terms.get(tuple(e), Fraction(0))

    def constant_term(self):
        return self.terms.get((0,) * self.n, Fraction(0))

    def truncate(self, prec):
        prec = min(prec, self.prec)
        return PowerSeries(self.n, _clean(self.terms, prec), prec, _trusted=True)

    def with_prec(self, prec):
        return self.truncate(prec)

    def __eq__(self, other):
        if not isinstance(other, PowerSeries):
            return NotImplemented
        return self.n == other.n and self.prec == other.prec and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, self.prec, frozenset(self.terms.items())))

    def agrees_with(self, other, prec=None) -> bool:
        """Equality of all monomials up to the common (or given) precision."""
        p = min(self.prec, other.prec) if prec is None else prec
        return (self - other).truncate(p).is_zero() if p >= 0 else True

    def _check(self, other):
        if not isinstance(other, PowerSeries):
            raise TypeError("expected PowerSeries")
        if other.n != self.n:
            raise DimensionMismatch(f"n={self.n} vs n={other.n}")

    # ring operations --------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, PowerSeries):
            other = PowerSeries.constant(self.n, other)
        self._check(other)
        prec = min(self.prec, other.prec)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return PowerSeries(self.n, _clean(out, prec), prec, _trusted=True)

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries(self.n, {e: -c for e, c in self.terms.items()}, self.prec, _trusted=True)

    def __sub__(self, other):
        if not isinstance(other, PowerSeries):
            other = PowerSeries.constant(self.n, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        if not c:
            return PowerSeries.zero(self.n, self.prec)
        return PowerSeries(self.n, {e: c * v for e, v in self.terms.items()}, self.prec, _trusted=True)

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return self.scale(other)
        self._check(other)
        va, vb = self.valuation(), other.valuation()
        prec = min(self.prec + vb, other.prec + va)
        if prec == INF and (va == INF or vb == INF):
            prec = min(self.prec, other.prec)
        return PowerSeries(self.n, mul_terms(self.terms, other.terms, prec), prec, _trusted=True)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, e: int):
        if e < 0:
            return self.invert_unit() ** (-e)
        result = PowerSeries.one(self.n)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    # calculus ---------------------------------------------------------
    def partial_derivative(self, i: int, times: int = 1):
        """d^times/dx_{i+1}^times (0-based axis); lowers precision by ``times``."""
        prec = self.prec - times
        if prec < 0:
            raise PrecisionExhausted("derivative of a series with no exact terms")
        out = {}
        for e, c in self.terms.items():
            if e[i] >= times:
                ne = list(e)
                ne[i] -= times
                out[tuple(ne)] = c * falling(e[i], times)
        return PowerSeries(self.n, _clean(out, prec), prec, _trusted=True)

    def derivative_multi(self, j):
        prec = self.prec - sum(j)
        if prec < 0:
            raise PrecisionExhausted("derivative of a series with no exact terms")
        return PowerSeries(self.n, derive_terms(self.terms, j), prec, _trusted=True)

    def antiderivative(self, i: int):
        """Primitive in x_{i+1} with zero constant of integration; raises precision by one."""
        out = {}
        for e, c in self.terms.items():
            ne = list(e)
            ne[i] += 1
            out[tuple(ne)] = c / ne[i]
        return PowerSeries(self.n, out, self.prec + 1, _trusted=True)

    def substitute_zero(self, axes):
        """Set the listed (0-based) variables to zero."""
        out = {e: c for e, c in self.terms.items() if all(e[a] == 0 for a in axes)}
        return PowerSeries(self.n, out, self.prec, _trusted=True)

    # composition and inversion -----------------------------------------
    def compose(self, gs):
        """f(g_1, ..., g_n); every g_i must have positive valuation."""
        if len(gs) != self.n:
            raise DimensionMismatch(f"compose needs {self.n} series, got {len(gs)}")
        m_out = gs[0].n if gs else self.n
        m = INF
        for g in gs:
            if g.n != m_out:
                raise DimensionMismatch("inner series have different n")
            v = g.valuation()
            if v == 0:
                raise CompositionNotNilpotent("inner series must vanish at the origin")
            m = min(m, v)
        if m == INF:
            # all inner series are zero: only the constant term survives
            prec = min([g.prec for g in gs] + [INF])
            return PowerSeries.constant(m_out, self.constant_term(), prec)
        prec = min([(self.prec + 1) * m - 1] + [g.prec for g in gs])
        return compose_terms(self.terms, gs, m_out, prec)

    def invert_unit(self, prec=None):
        """Multiplicative inverse; ``prec`` bounds the work for exact inputs."""
        c0 = self.constant_term()
        if not c0:
            raise NotAUnit("series with zero constant term is not invertible")
        target = self.prec if prec is None else min(prec, self.prec)
        if target == INF:
            if len(self.terms) == 1:
                return PowerSeries.constant(self.n, scalar_inverse(c0))
            raise ValueError("inverse of a non-constant exact series needs a precision")
        inv0 = scalar_inverse(c0)
        by_deg: dict[int, list] = {}
        for e, c in self.terms.items():
            by_deg.setdefault(sum(e), []).append((e, c))
        out = {(0,) * self.n: inv0}
        out_by_deg = {0: [((0,) * self.n, inv0)]}
        for d in range(1, int(target) + 1):
            acc = {}
            for s in range(1, d + 1):
                for e, c in by_deg.get(s, ()):
                    for e2, c2 in out_by_deg.get(d - s, ()):
                        key = madd(e, e2)
                        acc[key] = acc.get(key, 0) + c * c2
            level = []
            for key, v in acc.items():
                if v:
                    val = -v * inv0
                    out[key] = val
                    level.append((key, val))
            out_by_deg[d] = level
        return PowerSeries(self.n, out, target, _trusted=True)

    def exp(self, prec=None):
        """exp(f) for f with zero constant term."""
        if self.constant_term():
            raise NotAUnit("exp needs a series without constant term")
        target = self.prec if prec is None else min(prec, self.prec)
        if target == INF:
            if self.is_zero():
                return PowerSeries.one(self.n)
            raise ValueError("exp of a non-zero exact series needs a precision")
        result = PowerSeries.one(self.n, target)
        term = PowerSeries.one(self.n, target)
        for k in range(1, int(target) + 1):
            term = (term * self).truncate(target).scale(Fraction(1, k))
            if term.is_zero():
                break
            result = result + term
        return result.truncate(target)

    def __repr__(self):
        if not self.terms:
            body = "0"
        else:
            parts = []
            for e in sorted(self.terms, key=lambda e: (sum(e), e)):
                mono = "*".join(
                    f"x{i + 1}" + (f"^{p}" if p > 1 else "") for i, p in enumerate(e) if p
                )
                c = format_scalar(self.terms[e])
                parts.append(f"{c}*{mono}" if mono else c)
            body = " + ".join(parts)
        return f"PowerSeries({body}; prec={self.prec})"


# raw term kernels shared with the operator code --------------------------


def mul_terms(a: dict, b: dict, cap) -> dict:
    """Product of two term maps keeping total degree <= cap."""
    if not a or not b:
        return {}
    if len(b) < len(a):
        a, b = b, a
    bl = sorted(((sum(e), e, c) for e, c in b.items()), key=lambda t: t[0])
    out: dict = {}
    for ea, ca in a.items():
        da = sum(ea)
        room = cap - da
        if room < 0:
            continue
        for db, eb, cb in bl:
            if db > room:
                break
            key = tuple(x + y for x, y in zip(ea, eb))
            out[key] = out.get(key, 0) + ca * cb
    return {e: c for e, c in out.items() if c}


def derive_terms(terms: dict, j) -> dict:
    out = {}
    for e, c in terms.items():
        coef = 1
        for x, y in zip(e, j):
            if x < y:
                coef = 0
                break
            coef *= falling(x, y)
        if coef:
            out[tuple(x - y for x, y in zip(e, j))] = c * coef
    return out


def compose_terms(terms: dict, gs, n_out: int, prec) -> PowerSeries:
    powers: dict = {}

    def power(i, p):
        key = (i, p)
        if key not in powers:
            if p == 0:
                powers[key] = {(0,) * n_out: Fraction(1)}
            else:
                powers[key] = mul_terms(power(i, p - 1), gs[i].terms, prec)
        return powers[key]

    out: dict = {}
    for e, c in terms.items():
        acc = {(0,) * n_out: c}
        for i, p in enumerate(e):
            if p:
                acc = mul_terms(acc, power(i, p), prec)
                if not acc:
                    break
        for k, v in acc.items():
            out[k] = out.get(k, 0) + v
    return PowerSeries(n_out, {e: c for e, c in out.items() if c}, prec, _trusted=True)


def series_from_function(n, fn, prec):
    """Build a series from a callable on exponent tuples (used for oracles)."""
    terms = {}
    for e in iproduct(range(int(prec) + 1), repeat=n):
        if sum(e) <= prec:
            c = fn(e)
            if c:
                terms[e] = Fraction(c) if isinstance(c, int) else c
    return PowerSeries(n, terms, prec)
