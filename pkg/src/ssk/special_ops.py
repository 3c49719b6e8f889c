"""Named operators (shift, delta, integration, roots of unity, linear changes)
and the Lagrange-type inversion of polynomial maps x - H."""

from __future__ import annotations

from fractions import Fraction

from . import linalg
from .coeffs import (
    INF,
    PowerSeries,
    factorial,
    mfactorial,
    multi_indices,
    unit_vector,
    zeta,
)
from .errors import (
    DimensionMismatch,
    JacobianNotOne,
    NotNilpotentShift,
    PrecisionExhausted,
    SingularMatrix,
    ValuationTooLow,
)
from .opcore import DSYM, Operator


def shift_operator(u, x_deg) -> Operator:
    """P = sum_i u^i d^i / i!, which acts as f(x) -> f(x + u(x))."""
    n = len(u)
    for ui in u:
        if ui.n != n:
            raise DimensionMismatch("shift components must live in n variables")
        if not ui.is_zero() and ui.valuation() < 1:
            raise NotNilpotentShift("every shift component must vanish at the origin")
    V = min([x_deg] + [ui.prec for ui in u])
    coeffs = {}
    powers = {(0,) * n: PowerSeries.one(n, V)}
    for total in range(int(V) + 1):
        for i in multi_indices(n, total):
            if total:
                m = next(a for a, v in enumerate(i) if v)
                prev = powers[i[:m] + (i[m] - 1,) + i[m + 1:]]
                powers[i] = (prev * u[m]).truncate(V)
            term = powers[i]
            if not term.is_zero() or total == 0:
                coeffs[i] = term.scale(Fraction(1, mfactorial(i))).truncate(V)
    op = Operator.from_coefficients(n, coeffs, DSYM)
    return op.truncated(V, V)


def delta(n, i, x_deg) -> Operator:
    """delta_i: sets x_i to zero.  ``i`` is 0-based."""
    terms = {
        (unit_vector(n, i, k), unit_vector(n, i, k)): Fraction((-1) ** k, factorial(k))
        for k in range(int(x_deg) + 1)
    }
    return Operator(n, DSYM, terms, x_deg, x_deg)


def integrator(n, i, x_deg) -> Operator:
    """The integration operator int_0^{x_i}, as sum x^{k+1}(-d)^k/(k+1)!."""
    terms = {
        (unit_vector(n, i, k + 1), unit_vector(n, i, k)): Fraction((-1) ** k, factorial(k + 1))
        for k in range(int(x_deg))
    }
    return Operator(n, DSYM, terms, x_deg, x_deg)


def integrator_power(n, i, p, x_deg) -> Operator:
    out = Operator.identity(n)
    J = integrator(n, i, x_deg)
    for _ in range(p):
        out = (out * J).truncated(x_deg, x_deg)
    return out


def root_of_unity_op(n, k, i, q, x_deg) -> Operator:
    """A_{k;i,q} = sum_m (zeta_k^i - 1)^m x_q^m d_q^m / m!  (``q`` is 0-based)."""
    base = zeta(k, i) - 1
    terms = {}
    power = Fraction(1)
    for m in range(int(x_deg) + 1):
        if m:
            power = power * base
        if power:
            terms[(unit_vector(n, q, m), unit_vector(n, q, m))] = power * Fraction(1, factorial(m))
    return Operator(n, DSYM, terms, x_deg, x_deg)


def linear_change_conjugator(C, c0, x_deg):
    """S with S^{-1} d_i S = sum_j C[i][j] d_j, together with S^{-1}.

    S is c0 times the shift operator realising f(x) -> f(C^T x).
    """
    n = len(C)
    if any(len(row) != n for row in C):
        raise DimensionMismatch("C must be square")
    if not linalg.det(C):
        raise SingularMatrix("linear change matrix is singular")
    if not c0:
        raise SingularMatrix("c0 must be nonzero")
    Cinv = linalg.inverse(C)

    def shift_for(M, scale):
        u = []
        for i in range(n):
            terms = {}
            for j in range(n):
                c = M[j][i] - (1 if i == j else 0)
                if c:
                    terms[unit_vector(n, j)] = c
            u.append(PowerSeries(n, terms))
        return shift_operator(u, x_deg).scale(scale)

    from .coeffs import scalar_inverse

    return shift_for(C, c0), shift_for(Cinv, scalar_inverse(c0))


# ---------------------------------------------------------------------------
# inversion of maps


def jacobian_determinant(F, prec):
    n = len(F)
    rows = [[F[i].truncate(prec + 1).partial_derivative(j) for j in range(n)] for i in range(n)]
    return _det_series(rows, prec)


def _det_series(rows, prec):
    n = len(rows)
    if n == 1:
        return rows[0][0].truncate(prec)
    total = None
    for j in range(n):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = (rows[0][j] * _det_series(minor, prec)).truncate(prec)
        if j % 2:
            term = -term
        total = term if total is None else (total + term)
    return total.truncate(prec)


def _check_map(F):
    n = len(F)
    Hs = []
    for i, f in enumerate(F):
        if f.n != n:
            raise DimensionMismatch("map components must have n variables")
        h = PowerSeries.var(n, i) - f
        if not h.is_zero() and h.valuation() < 2:
            raise ValuationTooLow(f"component {i + 1}: x_i - F_i must have valuation >= 2")
        Hs.append(h)
    return Hs


def _lagrange_sum(phi: PowerSeries, Hs, J: PowerSeries, out_deg):
    """sum_p d^p/p! (phi * H^p * J) truncated to degree out_deg."""
    n = len(Hs)
    v = phi.valuation()
    if v == INF:
        return PowerSeries.zero(n, out_deg)
    max_p = int(out_deg - v)
    total = PowerSeries.zero(n, out_deg)
    base = (phi * J).truncate(out_deg + max_p)
    powers = {(0,) * n: PowerSeries.one(n)}
    for size in range(max_p + 1):
        for p in multi_indices(n, size):
            cap = out_deg + size - v
            if size:
                m = next(a for a, val in enumerate(p) if val)
                prev = powers[p[:m] + (p[m] - 1,) + p[m + 1:]]
                powers[p] = (prev * Hs[m]).truncate(cap)
            hp = powers[p]
            if hp.is_zero() and size:
                continue
            term = (base * hp).truncate(out_deg + size)
            if size:
                term = term.derivative_multi(p).scale(Fraction(1, mfactorial(p)))
            total = total + term.truncate(out_deg)
    return total.truncate(out_deg)


def _jacobian_factor(F, out_deg, weighted):
    J = jacobian_determinant(F, 2 * out_deg)
    if J.agrees_with(PowerSeries.one(len(F), J.prec)):
        return PowerSeries.one(len(F)), True
    if not weighted:
        raise JacobianNotOne(f"j(F) != 1 (certified modulo degree {J.prec + 1})")
    return J, False


def abhyankar_inverse(F, out_deg, weighted=True):
    """Inverse map G of F = x - H to degree ``out_deg``.

    With j(F) = 1 this is G_i = sum_p d^p/p! (x_i H^p).  Otherwise (and only
    when ``weighted``) the Jacobian-weighted form sum_p d^p/p!(x_i H^p j(F)),
    which reduces to the former when j(F) = 1, is used.
    """
    Hs = _check_map(F)
    n = len(F)
    J, _ = _jacobian_factor(F, out_deg, weighted)
    G = [_lagrange_sum(PowerSeries.var(n, i), Hs, J, out_deg) for i in range(n)]
    if min(g.prec for g in G) < 1:
        raise PrecisionExhausted("map precision too low for inversion")
    return G


def abhyankar_transport(UF: PowerSeries, F, out_deg, weighted=True):
    """Recover U from U(F): U = sum_p d^p/p! (U(F) H^p [j(F)])."""
    Hs = _check_map(F)
    J, _ = _jacobian_factor(F, out_deg, weighted)
    return _lagrange_sum(UF, Hs, J, out_deg)


def compose_maps(F, G):
    """(F o G)_i = F_i(G_1, ..., G_n)."""
    return [f.compose(G) for f in F]
