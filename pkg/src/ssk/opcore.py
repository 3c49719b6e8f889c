"""Truncated (pseudo)differential operators in n variables.

An operator is a sparse map ``(i, k) -> c`` standing for ``c * x^i * d^k`` in
normal form (x-part on the left).  Only the last derivative index may be
negative, and only for the pseudodifferential kinds.

Precision is tracked by two numbers:

* ``V``: every monomial of total x-degree ``r <= V`` is exact ...
* ``H``: ... provided also its *depth* ``r + max(0, -k_n) <= H``.

For differential kinds ``V == H``; for constant-coefficient elements ``V`` is
infinite.  The reported :class:`Precision` is the largest square-ish
rectangle inside this region, ``x_deg = min(V, H)`` and ``dn_tail = H - x_deg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .coeffs import (
    INF,
    PowerSeries,
    anti_lex_key,
    binom,
    falling,
    mbinom,
    mfactorial,
    msub,
    multi_indices,
    multi_indices_upto,
    scalar_inverse,
    unit_vector,
)
from .errors import (
    DimensionMismatch,
    GammaUndefined,
    KindIncompatible,
    NotAUnit,
    PrecisionExhausted,
)
from . import linalg

NEG_INF = -math.inf

DSYM = "DSym"
DHATN = "DHatN"
DHAT = "DHat"
EHAT = "EHat"
PIHAT = "PiHat"
VELEM = "VElem"
KINDS = (DSYM, DHATN, DHAT, EHAT, PIHAT, VELEM)

_ORDER = [DHATN, DHAT, DSYM, EHAT, PIHAT]
_UP = {
    DHATN: {DHATN, DHAT, DSYM, EHAT, PIHAT},
    DHAT: {DHAT, DSYM, EHAT, PIHAT},
    DSYM: {DSYM, PIHAT},
    EHAT: {EHAT, PIHAT},
    PIHAT: {PIHAT},
}
_DIFFERENTIAL = (DSYM, DHATN, DHAT)


@dataclass(frozen=True)
class Precision:
    """Certified rectangle: all monomials with x-degree <= x_deg and
    d_n-exponent >= -dn_tail are exact (``math.inf`` means unbounded)."""

    x_deg: float
    dn_tail: float
    depth: float = INF


def join_kinds(a: str, b: str) -> str:
    if a == b:
        return a
    common = _UP[a] & _UP[b]
    for k in _ORDER:
        if k in common:
            return k
    raise KindIncompatible(f"no common kind for {a} and {b}")


def _depth(x, d):
    return sum(x) + max(0, -d[-1])


class Operator:
    __slots__ = ("n", "kind", "terms", "V", "H", "_ord")

    def __init__(self, n, kind, terms=None, V=INF, H=INF, *, _trusted=False):
        if kind not in KINDS:
            raise KindIncompatible(f"unknown kind {kind!r}")
        if kind == VELEM:
            V = INF
        elif kind in _DIFFERENTIAL:
            V = H = min(V, H)
        if V < 0 or H < 0:
            raise PrecisionExhausted(f"negative precision (V={V}, H={H})")
        self.n = n
        self.kind = kind
        self.V = V
        self.H = H
        self._ord = None
        if _trusted:
            self.terms = terms
            return
        clean = {}
        for (x, d), c in (terms or {}).items():
            x = tuple(int(v) for v in x)
            d = tuple(int(v) for v in d)
            if len(x) != n or len(d) != n:
                raise DimensionMismatch(f"monomial {(x, d)} does not have n={n} entries")
            if min(x) < 0 or min(d[:-1], default=0) < 0:
                raise KindIncompatible(f"negative exponent in {(x, d)}")
            if kind in _DIFFERENTIAL and d[-1] < 0:
                raise KindIncompatible(f"kind {kind} forbids negative d_n powers")
            if kind == DHATN and d[-1] != 0:
                raise KindIncompatible("kind DHatN forbids d_n")
            if kind == VELEM and any(x):
                raise KindIncompatible("kind VElem has constant coefficients")
            if isinstance(c, float):
                raise TypeError("floating-point coefficients are not exact")
            if not c:
                continue
            r = sum(x)
            if r > V or r + max(0, -d[-1]) > H:
                continue
            key = (x, d)
            clean[key] = clean.get(key, Fraction(0)) + c
        self.terms = {k: c for k, c in clean.items() if c}

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def zero(cls, n, kind=DSYM, V=INF, H=INF):
        return cls(n, kind, {}, V, H, _trusted=True)

    @classmethod
    def identity(cls, n, kind=DSYM):
        return cls(n, kind, {((0,) * n, (0,) * n): Fraction(1)}, _trusted=True)

    @classmethod
    def scalar(cls, n, c, kind=DSYM):
        c = Fraction(c) if isinstance(c, int) else c
        return cls(n, kind, {((0,) * n, (0,) * n): c} if c else {}, _trusted=True)

    @classmethod
    def d(cls, n, i, power=1, kind=None):
        """d_{i+1}^power (0-based axis)."""
        if kind is None:
            kind = DSYM if power >= 0 else EHAT
        return cls(n, kind, {((0,) * n, unit_vector(n, i, power)): Fraction(1)})

    @classmethod
    def dmono(cls, n, k, c=1, kind=None):
        """c * d^k with constant coefficient."""
        if kind is None:
            kind = VELEM
        c = Fraction(c) if isinstance(c, int) else c
        return cls(n, kind, {((0,) * n, tuple(k)): c})

    @classmethod
    def x(cls, n, i, kind=DSYM):
        return cls(n, kind, {(unit_vector(n, i), (0,) * n): Fraction(1)})

    @classmethod
    def mono(cls, n, xi, dk, c=1, kind=DSYM):
        c = Fraction(c) if isinstance(c, int) else c
        return cls(n, kind, {(tuple(xi), tuple(dk)): c})

    @classmethod
    def from_series(cls, f: PowerSeries, kind=DSYM):
        """Left multiplication by f."""
        zero = (0,) * f.n
        terms = {(e, zero): c for e, c in f.terms.items()}
        return cls(f.n, kind, terms, f.prec, f.prec, _trusted=True)

    @classmethod
    def from_coefficients(cls, n, coeffs: dict, kind=DSYM):
        """Sum of f_k * d^k for a map k -> PowerSeries."""
        terms = {}
        V = INF
        H = INF
        for k, f in coeffs.items():
            k = tuple(k)
            V = min(V, f.prec)
            H = min(H, f.prec + max(0, -k[-1]))
            for e, c in f.terms.items():
                terms[(e, k)] = c
        return cls(n, kind, terms, V, H)

    # ------------------------------------------------------------------
    # precision and basic queries

    @property
    def prec(self) -> Precision:
        if self.kind == VELEM:
            return Precision(INF, self.H, self.H)
        if self.kind in _DIFFERENTIAL:
            return Precision(self.V, INF, self.V)
        xd = min(self.V, self.H)
        return Precision(xd, self.H - xd, self.H)

    def is_pseudo(self) -> bool:
        if self.kind in (EHAT, PIHAT):
            return True
        if self.kind == VELEM:
            return self.H < INF or any(d[-1] < 0 for _, d in self.terms)
        return False

    def is_zero(self) -> bool:
        return not self.terms

    def is_x_free(self) -> bool:
        return self.kind == VELEM

    def effective_kind(self) -> str:
        """Kind used when joining with non-VElem operands."""
        if self.kind != VELEM:
            return self.kind
        if self.is_pseudo():
            return EHAT
        if any(d[-1] > 0 for _, d in self.terms):
            return DHAT
        return DHATN

    def with_kind(self, kind):
        """Relabel after validating the kind constraints on the stored terms."""
        return Operator(self.n, kind, dict(self.terms), self.V, self.H)

    def truncated(self, V=INF, H=INF):
        """Narrow the certified region (always sound) and drop terms outside it."""
        V = min(V, self.V)
        H = min(H, self.H)
        terms = {
            (x, d): c
            for (x, d), c in self.terms.items()
            if sum(x) <= V and _depth(x, d) <= H
        }
        return Operator(self.n, self.kind, terms, V, H, _trusted=True)

    def truncate_prec(self, x_deg, dn_tail=INF):
        """Truncate to a rectangle request (x_deg, dn_tail) expressed as depth."""
        H = x_deg + dn_tail if self.is_pseudo() else x_deg
        return self.truncated(x_deg, H)

    def covers(self, x_deg, dn_tail=0) -> bool:
        """Whether the rectangle x-degree <= x_deg, d_n-tail <= dn_tail is certified."""
        if not self.is_pseudo():
            return self.V >= x_deg and self.H >= x_deg
        return self.V >= x_deg and self.H >= x_deg + dn_tail

    def coeff(self, x, d):
        return self.terms.get((tuple(x), tuple(d)), Fraction(0))

    def ord(self):
        """max |k| - |i| over stored monomials; ``-inf`` for zero."""
        if self._ord is None:
            self._ord = max((sum(d) - sum(x) for x, d in self.terms), default=NEG_INF)
        return self._ord

    @property
    def ord_bound(self):
        return self.ord()

    def ord_n(self):
        if self.kind == DSYM:
            raise KindIncompatible("ord_n is not defined for DSym operators")
        return max((d[-1] for _, d in self.terms), default=NEG_INF)

    def ht_n(self):
        """Coefficient of the highest d_n power, as a DHatN operator."""
        top = self.ord_n()
        if top == NEG_INF:
            return Operator.zero(self.n, DHATN, self.V, self.H)
        terms = {
            (x, d[:-1] + (0,)): c for (x, d), c in self.terms.items() if d[-1] == top
        }
        V = min(self.V, self.H - max(0, -top))
        return Operator(self.n, DHATN, terms, V, V, _trusted=True).truncated(V, V)

    def dn_coefficient(self, s):
        """Operator-valued coefficient of d_n^s (kind DHatN) with its sound precision."""
        V = min(self.V, self.H - max(0, -s))
        if V < 0:
            raise PrecisionExhausted(f"coefficient of d_n^{s} has no exact terms")
        terms = {
            (x, d[:-1] + (0,)): c
            for (x, d), c in self.terms.items()
            if d[-1] == s and sum(x) <= V
        }
        return Operator(self.n, DHATN, terms, V, V, _trusted=True)

    def times_dn(self, s, kind=None):
        """self * d_n^s for a d_n-free operator."""
        kind = kind or (EHAT if s < 0 or self.kind in (EHAT, PIHAT) else self.kind)
        if kind == DHATN and s:
            kind = DHAT
        terms = {(x, d[:-1] + (d[-1] + s,)): c for (x, d), c in self.terms.items()}
        if self.kind == VELEM:
            return Operator(self.n, VELEM, terms, INF, self.H + max(0, -s), _trusted=True)
        # all monomials sit at one d_n-power, so a depth bound alone pins the x-degree
        H = min(self.V, self.H) + max(0, -s)
        V = INF if kind in (EHAT, PIHAT) else H
        return Operator(self.n, kind, terms, V, H, _trusted=True)

    def symbol(self):
        d = self.ord()
        return self.homogeneous_component(d)

    def homogeneous_component(self, m):
        terms = {(x, k): c for (x, k), c in self.terms.items() if sum(k) - sum(x) == m}
        return Operator(self.n, self.kind, terms, self.V, self.H, _trusted=True)

    def homogeneous_components(self):
        out = {}
        for (x, k), c in self.terms.items():
            out.setdefault(sum(k) - sum(x), {})[(x, k)] = c
        return {
            m: Operator(self.n, self.kind, t, self.V, self.H, _trusted=True)
            for m, t in out.items()
        }

    # ------------------------------------------------------------------
    # slices

    def slice(self, i):
        """P_(i) = i! * (coefficient block at x^i), a constant-coefficient operator."""
        i = tuple(i)
        r = sum(i)
        if r > self.V or r > self.H:
            raise PrecisionExhausted(f"slice {i} lies beyond x-precision")
        f = mfactorial(i)
        terms = {((0,) * self.n, d): c * f for (x, d), c in self.terms.items() if x == i}
        H = self.H - r if self.is_pseudo() else INF
        return Operator(self.n, VELEM, terms, INF, H, _trusted=True)

    def slices(self):
        """All slices up to the x-precision (only nonzero ones are returned)."""
        blocks = {}
        for (x, d), c in self.terms.items():
            blocks.setdefault(x, {})[((0,) * self.n, d)] = c * mfactorial(x)
        out = {}
        for x, t in blocks.items():
            H = self.H - sum(x) if self.is_pseudo() else INF
            out[x] = Operator(self.n, VELEM, t, INF, H, _trusted=True)
        return out

    def partial_slice(self, q):
        if q > self.V or q > self.H:
            raise PrecisionExhausted(f"partial slice {q} lies beyond x-precision")
        terms = {(x, d): c for (x, d), c in self.terms.items() if sum(x) == q}
        return Operator(self.n, self.kind, terms, self.V, self.H, _trusted=True)

    def project_pi(self):
        return self.slice((0,) * self.n)

    # ------------------------------------------------------------------
    # arithmetic

    def _check(self, other):
        if not isinstance(other, Operator):
            raise TypeError("expected Operator")
        if other.n != self.n:
            raise DimensionMismatch(f"n={self.n} vs n={other.n}")

    def __add__(self, other):
        if not isinstance(other, Operator):
            other = Operator.scalar(self.n, other, VELEM)
        self._check(other)
        if self.kind == VELEM and other.kind == VELEM:
            kind = VELEM
        else:
            kind = join_kinds(self.effective_kind(), other.effective_kind())
        V = min(self.V, other.V)
        H = min(self.H, other.H)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return Operator(self.n, kind, out, V, H, _trusted=False)

    __radd__ = __add__

    def __neg__(self):
        return Operator(
            self.n, self.kind, {k: -c for k, c in self.terms.items()}, self.V, self.H, _trusted=True
        )

    def __sub__(self, other):
        if not isinstance(other, Operator):
            other = Operator.scalar(self.n, other, VELEM)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        if not c:
            return Operator(self.n, self.kind, {}, self.V, self.H, _trusted=True)
        return Operator(
            self.n, self.kind, {k: c * v for k, v in self.terms.items()}, self.V, self.H, _trusted=True
        )

    def __mul__(self, other):
        if isinstance(other, Operator):
            return mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, e):
        if e < 0:
            return invert(self) ** (-e)
        result = Operator.identity(self.n, self.kind if self.kind != VELEM else VELEM)
        for _ in range(e):
            result = result * self
        return result

    def __eq__(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        return (
            self.n == other.n
            and self.kind == other.kind
            and self.V == other.V
            and self.H == other.H
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.n, self.kind, self.V, self.H, frozenset(self.terms.items())))

    def agrees(self, other, V=None, H=None) -> bool:
        """Equality of all monomials inside the common (or requested) region."""
        diff = difference_region(self, other)
        if V is not None or H is not None:
            diff = diff.truncated(INF if V is None else V, INF if H is None else H)
        return diff.is_zero()

    def __repr__(self):
        from .serialize import operator_to_text

        return f"Operator[{self.kind}; V={self.V}, H={self.H}]({operator_to_text(self)})"


def difference_region(P, Q):
    """P - Q restricted to the region where both are exact."""
    V = min(P.V, Q.V)
    H = min(P.H, Q.H)
    out = dict(P.terms)
    for k, c in Q.terms.items():
        out[k] = out.get(k, 0) - c
    terms = {
        (x, d): c for (x, d), c in out.items() if c and sum(x) <= V and _depth(x, d) <= H
    }
    return Operator(P.n, VELEM if P.kind == Q.kind == VELEM else PIHAT, terms, V, H, _trusted=True)


# ----------------------------------------------------------------------
# multiplication


def product_kind(P: Operator, Q: Operator) -> str:
    if P.kind == VELEM and Q.kind == VELEM:
        return VELEM
    if P.is_pseudo() and Q.kind in (DSYM, PIHAT):
        raise KindIncompatible(
            f"a pseudodifferential left factor ({P.kind}) cannot multiply {Q.kind} on the right"
        )
    return join_kinds(P.effective_kind(), Q.effective_kind())


def product_precision(P: Operator, Q: Operator):
    """Sound (V, H) of P*Q from the Leibniz depth bounds (see module docstring)."""
    En = max([0] + [d[-1] for _, d in Q.terms])
    q_xfree = Q.is_x_free()
    dx = NEG_INF
    dH = NEG_INF
    dneg = INF
    for x, b in P.terms:
        ra = sum(x)
        bn = b[-1]
        bp = sum(b[:-1])
        depth = ra + max(0, -bn)
        if q_xfree:
            dH = max(dH, max(bn, 0) - depth)
        elif bn >= 0:
            dx = max(dx, bp + bn - ra)
            dH = max(dH, bp + bn - depth)
        else:
            dH = max(dH, bp + En - depth)
            dneg = min(dneg, depth - bp - En)
    V = min(P.V, Q.V - dx) if dx != NEG_INF else P.V
    H = P.H - (En if P.is_pseudo() else 0)
    if dH != NEG_INF:
        H = min(H, Q.H - dH)
    if dneg != INF:
        H = min(H, Q.V + dneg)
    return V, H


def _d_left(terms: dict, m: int) -> dict:
    """d_{m+1} * R for R given as a term map (positive direction)."""
    out = {}
    for (x, d), c in terms.items():
        nd = list(d)
        nd[m] += 1
        nd = tuple(nd)
        key = (x, nd)
        out[key] = out.get(key, 0) + c
        if x[m]:
            nx = list(x)
            nx[m] -= 1
            nx = tuple(nx)
            key = (nx, d)
            out[key] = out.get(key, 0) + c * x[m]
    return {k: v for k, v in out.items() if v}


def _dn_neg_left(terms: dict, s: int) -> dict:
    """d_n^{-s} * R via sum_j C(-s, j) d_n^j(r) d_n^{-s-j}."""
    out = {}
    for (x, d), c in terms.items():
        cn = x[-1]
        for j in range(cn + 1):
            nx = x[:-1] + (cn - j,)
            nd = d[:-1] + (d[-1] - s - j,)
            coef = binom(-s, j) * falling(cn, j)
            key = (nx, nd)
            out[key] = out.get(key, 0) + c * coef
    return {k: v for k, v in out.items() if v}


def mul(P: Operator, Q: Operator, x_range=None) -> Operator:
    """Normal-form product P*Q (P applied after Q) with sound precision.

    ``x_range=(lo, hi)`` restricts the computed output to x-degrees in [lo, hi]
    (the result is then a partial product used by grade-wise recursions).
    """
    P._check(Q)
    n = P.n
    kind = product_kind(P, Q)
    V, H = product_precision(P, Q)
    if V < 0 or H < 0:
        raise PrecisionExhausted(f"product has no exact terms (V={V}, H={H})")
    lo, hi = (0, V) if x_range is None else (x_range[0], min(V, x_range[1]))
    if kind in _DIFFERENTIAL:
        V = H = min(V, H)
    # Leibniz expansions d^b * Q are cached per left d-monomial; they cannot be
    # pruned early because derivatives lower the x-degree
    cache: dict = {}
    q_terms = Q.terms

    def dpow(b):
        if b in cache:
            return cache[b]
        if not any(b):
            res = q_terms
        else:
            m = next((i for i in range(n - 1) if b[i] > 0), None)
            if m is not None:
                res = _d_left(dpow(b[:m] + (b[m] - 1,) + b[m + 1:]), m)
            elif b[-1] > 0:
                res = _d_left(dpow(b[:-1] + (b[-1] - 1,)), n - 1)
            else:
                res = _dn_neg_left(q_terms, -b[-1])
        cache[b] = res
        return res

    groups: dict = {}
    for (x, b), c in P.terms.items():
        groups.setdefault(b, []).append((x, sum(x), c))
    out: dict = {}
    for b, left in groups.items():
        left_min = min(r for _, r, _ in left)
        if left_min > hi:
            continue
        for (y, e), cq in dpow(b).items():
            ry = sum(y)
            if ry + left_min > hi:
                continue
            tail = max(0, -e[-1])
            for x, rx, cp in left:
                r = rx + ry
                if r > hi or r < lo or r + tail > H:
                    continue
                key = (tuple(a + bb for a, bb in zip(x, y)), e)
                out[key] = out.get(key, 0) + cp * cq
    terms = {k: v for k, v in out.items() if v}
    return Operator(n, kind, terms, V, H, _trusted=True)



def commutator(P, Q):
    return P * Q - Q * P


def power(P, e):
    return P ** e


# ----------------------------------------------------------------------
# action on series


def apply(P: Operator, f: PowerSeries) -> PowerSeries:
    """The differential operator P acting on the series f."""
    if P.kind not in _DIFFERENTIAL and not (P.kind == VELEM and not P.is_pseudo()):
        raise KindIncompatible(f"{P.kind} operators do not act on series")
    if P.n != f.n:
        raise DimensionMismatch("operator and series have different n")
    loss = max([0] + [sum(d) - sum(x) for x, d in P.terms])
    prec = min(P.V, f.prec - loss)
    if prec < 0:
        raise PrecisionExhausted("applying the operator leaves no exact terms")
    by_d: dict = {}
    for (x, d), c in P.terms.items():
        by_d.setdefault(d, []).append((x, c))
    out: dict = {}
    for d, left in by_d.items():
        df = {}
        for e, c in f.terms.items():
            coef = 1
            for a, b in zip(e, d):
                if a < b:
                    coef = 0
                    break
                coef *= falling(a, b)
            if coef:
                df[tuple(a - b for a, b in zip(e, d))] = c * coef
        for x, c in left:
            rx = sum(x)
            for e, v in df.items():
                if rx + sum(e) <= prec:
                    key = tuple(a + b for a, b in zip(x, e))
                    out[key] = out.get(key, 0) + c * v
    return PowerSeries(f.n, {k: v for k, v in out.items() if v}, prec)


# ----------------------------------------------------------------------
# diamond action and slices


def diamond(f: Operator, P: Operator) -> Operator:
    """f ⋄ P = pi(f o P) for a constant-coefficient polynomial f."""
    if f.kind != VELEM or any(d[-1] < 0 for _, d in f.terms) or f.H < INF:
        raise KindIncompatible("the left argument of diamond must be a polynomial in d")
    if f.n != P.n:
        raise DimensionMismatch("diamond operands have different n")
    degf = max((sum(d) for _, d in f.terms), default=0)
    if P.kind != VELEM and degf > min(P.V, P.H):
        raise PrecisionExhausted(f"diamond needs x-precision {degf}, have {min(P.V, P.H)}")
    n = P.n
    out: dict = {}
    for (_, k), fc in f.terms.items():
        for (x, e), c in P.terms.items():
            if all(a <= b for a, b in zip(x, k)):
                coef = 1
                for a, b in zip(x, k):
                    coef *= falling(b, a)
                key = ((0,) * n, tuple(b - a + ee for a, b, ee in zip(x, k, e)))
                out[key] = out.get(key, 0) + fc * c * coef
    H = P.H - degf if P.is_pseudo() else INF
    if H < 0:
        raise PrecisionExhausted("diamond result has no exact tail")
    return Operator(n, VELEM, {k: v for k, v in out.items() if v}, INF, H)


def dk(n, k, c=1):
    """The constant-coefficient monomial c * d^k as a VElem."""
    return Operator.dmono(n, k, c, VELEM)


def from_slices(n, slices: dict, x_deg, kind=PIHAT) -> Operator:
    """Sum of x^i/i! * S_(i) over |i| <= x_deg (missing slices are zero)."""
    terms = {}
    H = INF
    for i, s in slices.items():
        r = sum(i)
        if r > x_deg:
            continue
        if s.is_pseudo() or s.H < INF:
            H = min(H, r + s.H)
        inv = Fraction(1, mfactorial(i))
        for (_, d), c in s.terms.items():
            terms[(tuple(i), d)] = c * inv
    return Operator(n, kind, terms, x_deg, H)


def from_diamonds(n, w: dict, x_deg, kind=PIHAT) -> Operator:
    """The operator Y with d^k ⋄ Y = w_k for |k| <= x_deg."""
    sl: dict = {}
    for total in range(int(x_deg) + 1):
        for k in multi_indices(n, total):
            acc = w[k]
            for i, yi in sl.items():
                if i != k and all(a <= b for a, b in zip(i, k)):
                    acc = acc - dk(n, msub(k, i), mbinom(k, i)) * yi
            sl[k] = acc
    return from_slices(n, sl, x_deg, kind)


def diamond_values(P: Operator, degree):
    """{k: d^k ⋄ P} for |k| <= degree, computed through slices."""
    n = P.n
    out = {}
    for total in range(int(degree) + 1):
        for k in multi_indices(n, total):
            out[k] = diamond(dk(n, k), P)
    return out


# ----------------------------------------------------------------------
# orders and predicates


def gamma_order(P: Operator):
    """Recursive leading exponents (k_1..k_n) and the final leading coefficient."""
    if P.is_zero():
        raise GammaUndefined("Gamma-order of zero is undefined")
    n = P.n
    current = dict(P.terms)
    exps = [0] * n
    for axis in range(n - 1, -1, -1):
        top = max(d[axis] for _, d in current)
        exps[axis] = top
        current = {(x, d): c for (x, d), c in current.items() if d[axis] == top}
    lead = {x: c for (x, d), c in current.items()}
    return tuple(exps), lead


def gamma_tuple(P: Operator):
    return gamma_order(P)[0]


def is_monic_gamma(P: Operator) -> bool:
    _, lead = gamma_order(P)
    return lead == {(0,) * P.n: 1}


def satisfies_A1(P: Operator) -> bool:
    return P.ord() <= sum(gamma_tuple(P))


def gamma_key(g):
    return anti_lex_key(g)


def check_quasi_elliptic(ops) -> dict:
    """Conditions of a monic formally quasi-elliptic tuple, reported per operator."""
    n = len(ops)
    report = {"operators": [], "pass": True}
    for idx, P in enumerate(ops):
        entry = {"index": idx + 1}
        if P.n != n:
            entry.update(shape=False, error="n does not match tuple length")
            report["operators"].append(entry)
            report["pass"] = False
            continue
        try:
            g, lead = gamma_order(P)
        except GammaUndefined as exc:
            entry.update(gamma=None, shape=False, a1_equal=False, monic=False, error=str(exc))
            report["operators"].append(entry)
            report["pass"] = False
            continue
        if idx < n - 1:
            shape = all(g[j] == (1 if j == idx else 0) for j in range(n - 1)) and g[-1] >= 0
        else:
            shape = all(v == 0 for v in g[:-1]) and g[-1] > 0
        a1 = P.ord() == sum(g)
        monic = lead == {(0,) * n: 1}
        entry.update(gamma=list(g), l=g[-1], shape=shape, a1_equal=a1, monic=monic)
        entry["pass"] = shape and a1 and monic
        report["pass"] = report["pass"] and entry["pass"]
        report["operators"].append(entry)
    report["certified_x_deg"] = min((min(P.V, P.H) for P in ops), default=INF)
    return report


def _velem_vector(ops, region_H=INF):
    """Coordinates of constant-coefficient operators on their joint monomial support."""
    monos = sorted({d for op in ops for (_, d) in op.terms}, key=anti_lex_key)
    index = {m: i for i, m in enumerate(monos)}
    rows = []
    for op in ops:
        row = [Fraction(0)] * len(monos)
        for (_, d), c in op.terms.items():
            row[index[d]] = c
        rows.append(row)
    return rows, monos


def is_regular_up_to(P: Operator, p) -> bool:
    """Linear independence of {d^k ⋄ sigma(P) : |k| = m} for every m <= p."""
    if P.is_zero():
        return False
    if p > min(P.V, P.H):
        raise PrecisionExhausted(f"regularity up to {p} needs x-precision {p}")
    sigma = P.symbol()
    n = P.n
    for m in range(int(p) + 1):
        vals = [diamond(dk(n, k), sigma) for k in multi_indices(n, m)]
        rows, monos = _velem_vector(vals)
        if not monos or linalg.rank(rows) < len(vals):
            return False
    return True


def is_unit(P: Operator, p=None) -> bool:
    if P.is_zero() or P.ord() != 0:
        return False
    if p is None:
        p = min(P.V, P.H)
        if p == INF:
            p = max([sum(x) for x, _ in P.terms] + [0]) + 1
    return is_regular_up_to(P, p)


# ----------------------------------------------------------------------
# inversion


def invert(P: Operator, x_deg=None, depth=None) -> Operator:
    """Inverse of a unit: geometric series for c(1 + S_-), diamonds for DSym units."""
    if P.kind == VELEM or P.is_pseudo():
        return _invert_monic_pseudo(P, depth)
    return _invert_dsym(P, x_deg)


def _invert_monic_pseudo(P: Operator, depth=None):
    """P = p0 + S_- with p0 free of d_n: P^{-1} = (1 + p0^{-1} S_-)^{-1} p0^{-1}."""
    n = P.n
    zero = (0,) * n
    head = {(x, d): c for (x, d), c in P.terms.items() if d[-1] >= 0}
    if any(d[-1] > 0 for _, d in head):
        raise NotAUnit("operator has positive d_n powers")
    kind = P.kind
    target = P.H if depth is None else min(depth, P.H)
    if set(head) == {(zero, zero)}:
        p0_inv = Operator.scalar(n, scalar_inverse(head[(zero, zero)]), kind)
    elif kind == VELEM:
        raise NotAUnit("constant-coefficient head is not a nonzero scalar")
    else:
        p0 = Operator(n, DHATN, head, min(P.V, P.H), min(P.V, P.H), _trusted=True)
        p0_inv = _invert_dsym(p0).with_kind(kind)
    T = -(p0_inv * (P - Operator(n, kind, head, P.V, P.H, _trusted=True)))
    if target == INF:
        if T.is_zero():
            return p0_inv
        raise ValueError("inverse of an exact pseudodifferential operator needs a depth")
    T = T.truncated(INF, target)
    one = Operator.identity(n, kind)
    R = one
    for _ in range(int(target) + 1):
        R = (one + T * R).truncated(INF, target)
    return R * p0_inv


def _invert_dsym(P: Operator, x_deg=None):
    n = P.n
    if P.ord() != 0:
        raise NotAUnit(f"ord(P) = {P.ord()} != 0")
    M = min(P.V, P.H) if x_deg is None else min(x_deg, P.V, P.H)
    if M == INF:
        M = max([sum(x) for x, _ in P.terms] + [0])
        if M == 0 and all(not any(d) for _, d in P.terms):
            c = P.coeff(P.terms and next(iter(P.terms))[0] or (0,) * n, (0,) * n)
            return Operator.scalar(n, scalar_inverse(c), P.kind)
        raise ValueError("inverse of an exact non-constant unit needs an x-degree")
    M = int(M)
    basis = list(multi_indices_upto(n, M))
    index = {k: i for i, k in enumerate(basis)}
    images = [diamond(dk(n, k), P) for k in basis]
    size = len(basis)
    matrix = [[Fraction(0)] * size for _ in range(size)]
    for col, img in enumerate(images):
        for (_, d), c in img.terms.items():
            if d not in index:
                raise NotAUnit("diamond image leaves the polynomial part")
            matrix[index[d]][col] = c
    rhss = [[Fraction(int(i == j)) for i in range(size)] for j in range(size)]
    try:
        cols = linalg.solve_many(matrix, rhss)
    except Exception as exc:
        raise NotAUnit("operator is not regular") from exc
    w = {}
    for k, sol in zip(basis, cols):
        terms = {((0,) * n, basis[i]): v for i, v in enumerate(sol) if v}
        w[k] = Operator(n, VELEM, terms)
    return from_diamonds(n, w, M, kind=P.kind)


def conjugate(S, P, S_inv=None):
    """S^{-1} P S."""
    S_inv = invert(S) if S_inv is None else S_inv
    return S_inv * P * S
