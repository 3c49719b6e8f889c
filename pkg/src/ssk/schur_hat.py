"""Schur theory in the ring of operators with bounded d_n-degree: roots,
normalization, the dressing operator and the embedding of centralizers
into constant coefficients."""

from __future__ import annotations

from fractions import Fraction

from .coeffs import INF, PowerSeries
from .errors import (
    GammaShapeMismatch,
    KindIncompatible,
    NotCommuting,
    NotMonic,
    NotQuasiElliptic,
    PrecisionExhausted,
    SystemInconsistent,
)
from .opcore import (
    DHAT,
    DHATN,
    EHAT,
    VELEM,
    Operator,
    check_quasi_elliptic,
    gamma_order,
    invert,
)


def _require_hat_kind(P):
    if P.kind not in (EHAT, DHAT, DHATN, VELEM):
        raise KindIncompatible(f"expected an EHat/DHat operator, got {P.kind}")


def _as_ehat(P):
    return P if P.kind == EHAT else P.with_kind(EHAT)


def commutes(P, Q) -> bool:
    """[P, Q] vanishes inside its certified region."""
    return (P * Q - Q * P).is_zero()


def _dn_power(n, s):
    return Operator.d(n, n - 1, s, kind=EHAT)


# ---------------------------------------------------------------------------
# roots


def nth_root(P: Operator, l: int, depth=None) -> Operator:
    """The unique monic L = d_n + u_0 + u_{-1} d_n^{-1} + ... with L^l = P."""
    _require_hat_kind(P)
    n = P.n
    g, lead = gamma_order(P)
    if g != (0,) * (n - 1) + (l,):
        raise GammaShapeMismatch(f"Gamma-order {g} is not (0,...,0,{l})")
    if lead != {(0,) * n: 1}:
        raise NotMonic("leading coefficient is not 1")
    P = _as_ehat(P)
    target = P.H if depth is None else min(depth, P.H)
    if target == INF:
        raise ValueError("an exact input needs an explicit depth for its root")
    L = _dn_power(n, 1)
    last = -1
    for i in range(int(target) + 1):
        R = P - L ** l
        try:
            c = R.dn_coefficient(l - 1 - i)
        except PrecisionExhausted:
            break
        u = c.scale(Fraction(1, l))
        L = L + u.times_dn(-i, kind=EHAT)
        last = i
    if last < 0:
        raise PrecisionExhausted("no root coefficient is exact")
    return L.truncated(INF, last)


def invert_monic(L: Operator, depth=None) -> Operator:
    """Inverse of a monic operator whose top d_n-term is d_n^a (coefficient 1)."""
    n = L.n
    a = L.ord_n()
    shifted = Operator(
        n,
        EHAT,
        {(x, d[:-1] + (d[-1] - a,)): c for (x, d), c in L.terms.items()},
        L.V,
        L.H,
    )
    inner = invert(shifted, depth=depth)  # (L d_n^{-a})^{-1}
    return _dn_power(n, -a) * inner if a else inner


def quotient_root(Pi: Operator, L: Operator, li: int, depth=None) -> Operator:
    """L_i = P_i L^{-l_i}."""
    _require_hat_kind(Pi)
    Linv = invert_monic(L, depth)
    Q = _as_ehat(Pi)
    for _ in range(li):
        Q = Q * Linv
    return Q


# ---------------------------------------------------------------------------
# normalization


def _check_commuting(ops):
    for a in range(len(ops)):
        for b in range(a + 1, len(ops)):
            if not commutes(ops[a], ops[b]):
                raise NotCommuting(f"operators {a + 1} and {b + 1} do not commute at precision")


def _series_of_function(op: Operator) -> PowerSeries:
    """The coefficient series of a multiplication operator (no d terms)."""
    if any(any(d) for _, d in op.terms):
        raise NotQuasiElliptic("expected a function coefficient, found derivatives")
    return PowerSeries(op.n, {x: c for (x, _), c in op.terms.items()}, op.V)


def integrate_operator(op: Operator, axis: int) -> Operator:
    """Coefficient-wise primitive in x_axis with zero constant of integration."""
    terms = {}
    for (x, d), c in op.terms.items():
        nx = list(x)
        nx[axis] += 1
        terms[(tuple(nx), d)] = c / nx[axis]
    V = op.V + 1
    H = op.H + 1
    return Operator(op.n, op.kind, terms, V, H)


def operator_exp(A: Operator, x_deg) -> Operator:
    """exp(A) for an operator A whose monomials all have positive x-degree and ord <= 0."""
    if any(sum(x) == 0 for x, _ in A.terms):
        raise ValueError("exp needs an x-nilpotent exponent")
    one = Operator.identity(A.n, A.kind)
    result = one
    term = one
    for k in range(1, int(x_deg) + 1):
        term = (term * A).scale(Fraction(1, k)).truncated(x_deg, x_deg)
        if term.is_zero():
            break
        result = result + term
    return result.truncated(x_deg, x_deg)


def normalize(ops):
    """Return (f, S, ops') with ops' = S^{-1} f^{-1} ops f S normalized."""
    n = len(ops)
    for P in ops:
        _require_hat_kind(P)
    report = check_quasi_elliptic(ops)
    if not report["pass"]:
        raise NotQuasiElliptic(f"tuple is not monic formally quasi-elliptic: {report['operators']}")
    _check_commuting(ops)
    ls = [entry["l"] for entry in report["operators"]]
    current = [_as_ehat(P) for P in ops]
    x_deg = min(min(P.V, P.H) for P in current)
    f = PowerSeries.one(n, x_deg)
    for i in range(n - 1):
        lead = current[i].dn_coefficient(ls[i])
        g_op = lead - Operator.d(n, i, 1, kind=DHATN)
        g = _series_of_function(g_op)
        if g.is_zero():
            continue
        fi = (-g.antiderivative(i)).exp(g.prec + 1)
        fi_op = Operator.from_series(fi, DHATN)
        fi_inv = Operator.from_series(fi.invert_unit(), DHATN)
        current = [fi_inv * P * fi_op for P in current]
        f = (f * fi).truncate(fi.prec)
    ln = ls[-1]
    p = current[-1].dn_coefficient(ln - 1)
    if p.is_zero():
        S = Operator.identity(n, DHATN)
        S_inv = S
    else:
        A = integrate_operator(p.scale(Fraction(-1, ln)), n - 1)
        depth = min(A.V, A.H)
        S = operator_exp(A, depth)
        S_inv = operator_exp(-A, depth)
        current = [S_inv * P * S for P in current]
    for i, P in enumerate(current):
        if i < n - 1:
            lead = P.dn_coefficient(ls[i])
            if not lead.agrees(Operator.d(n, i, 1, kind=DHATN)):
                raise NotQuasiElliptic(f"operator {i + 1} could not be normalized")
        elif not P.dn_coefficient(ln - 1).is_zero():
            raise NotQuasiElliptic("last operator could not be normalized")
    return f, S, current


# ---------------------------------------------------------------------------
# dressing


def _exact(op: Operator, kind=None) -> Operator:
    return Operator(op.n, kind or op.kind, op.terms, INF, INF, _trusted=True)


def _cut(op: Operator, D) -> Operator:
    """Keep monomials of depth <= D and declare the remainder exact."""
    terms = {(x, d): c for (x, d), c in op.terms.items() if sum(x) + max(0, -d[-1]) <= D}
    return Operator(op.n, op.kind, terms, INF, INF, _trusted=True)


def _coeff_at(op: Operator, s, xcap) -> Operator:
    terms = {
        (x, d[:-1] + (0,)): c
        for (x, d), c in op.terms.items()
        if d[-1] == s and sum(x) <= xcap
    }
    return Operator(op.n, DHATN, terms, INF, INF, _trusted=True)


def _restrict(op: Operator, axes_zero) -> Operator:
    terms = {(x, d): c for (x, d), c in op.terms.items() if all(x[a] == 0 for a in axes_zero)}
    return Operator(op.n, op.kind, terms, INF, INF, _trusted=True)


def _coefficient_derivative(op: Operator, axis: int) -> Operator:
    terms = {}
    for (x, d), c in op.terms.items():
        if x[axis]:
            nx = x[:axis] + (x[axis] - 1,) + x[axis + 1:]
            terms[(nx, d)] = c * x[axis]
    return Operator(op.n, op.kind, terms, INF, INF, _trusted=True)


def _drop_x(op: Operator, xcap) -> Operator:
    terms = {(x, d): c for (x, d), c in op.terms.items() if sum(x) <= xcap}
    return Operator(op.n, op.kind, terms, INF, INF, _trusted=True)


def _split_almost_normalized(Ls):
    """Tails L_i - d_i (i < n), L_n - d_n - v0, and v0."""
    n = len(Ls)
    tails = []
    v0 = None
    for i, L in enumerate(Ls):
        if L.ord_n() > (1 if i == n - 1 else 0):
            raise NotQuasiElliptic(f"operator {i + 1} has too high a d_n power")
        if i < n - 1:
            if not L.dn_coefficient(0).agrees(Operator.d(n, i, 1, kind=DHATN)):
                raise NotQuasiElliptic(f"operator {i + 1} is not d_{i + 1} + lower d_n terms")
            tails.append(_exact(L, EHAT) - Operator.d(n, i, 1, kind=EHAT))
        else:
            if L.dn_coefficient(1).terms != {((0,) * n, (0,) * n): 1}:
                raise NotQuasiElliptic("last operator is not monic of d_n-order 1")
            v0 = _exact(L.dn_coefficient(0))
            if any(any(x[:-1]) for x, _ in v0.terms):
                raise NotQuasiElliptic("the d_n^0 coefficient of L_n depends on x'")
            tails.append(_exact(L, EHAT) - _dn_power(n, 1) - v0.with_kind(EHAT))
    return tails, v0


def _solve_gradient(cs, v0, xcap, n):
    """sigma with d_i(sigma) = -c_i (i < n) and d_n(sigma) + [v0, sigma] = -c_n.

    sigma vanishes at x = 0; monomials above x-degree ``xcap`` are dropped.
    """
    sigma = Operator(n, DHATN, {}, INF, INF, _trusted=True)
    for i in range(n - 1):
        ci = _restrict(cs[i], range(i + 1, n))
        sigma = sigma - _exact(integrate_operator(ci, i))
    base = _drop_x(sigma, xcap)
    cn = cs[n - 1]
    sigma = _drop_x(base - _exact(integrate_operator(cn, n - 1)), xcap)
    if any(any(d) for _, d in v0.terms):
        # [v0, sigma] keeps the x-degree and raises the x_n-degree after integration
        for _ in range(int(xcap) + 2):
            bracket = _drop_x(v0 * sigma - sigma * v0, xcap)
            nxt = _drop_x(base - _exact(integrate_operator(cn + bracket, n - 1)), xcap)
            if nxt.terms == sigma.terms:
                break
            sigma = nxt
    return sigma


def dressing_operator(Ls, depth=None) -> Operator:
    """Monic S = 1 + sum_k sigma_k d_n^{-k} with S^{-1} d_i S = L_i and S^{-1}(d_n + v0)S = L_n.

    sigma_k solves a gradient system in x with zero constants at x = 0.  The
    work runs on the inputs cut to depth D = min(V, H) and treated as exact:
    a coefficient of S of depth d only involves input monomials of depth <= d,
    so the result is certified on the region of depth <= D.
    """
    n = len(Ls)
    for L in Ls:
        _require_hat_kind(L)
    D = min(min(L.V, L.H) for L in Ls)
    if depth is not None:
        D = min(D, depth)
    if D == INF:
        raise ValueError("exact inputs need an explicit depth")
    D = int(D)
    tails, v0 = _split_almost_normalized(Ls)
    tails = [_cut(t, D) for t in tails]
    v0 = _drop_x(v0, D)
    v0e = v0.with_kind(EHAT)
    R = [-t for t in tails]  # D_i S - S L_i for S = 1
    S = Operator.identity(n, EHAT)
    for k in range(1, D + 1):
        xcap = D - k
        cs = [_coeff_at(r, -k, xcap) for r in R]
        sigma = _solve_gradient(cs, v0, xcap, n)
        if sigma.is_zero():
            new_R = R
        else:
            T = _exact(sigma.times_dn(-k, kind=EHAT))
            S = S + T
            new_R = []
            for i in range(n):
                grad = _coefficient_derivative(sigma, i).times_dn(-k, kind=EHAT)
                update = _exact(grad) - T * tails[i]
                if i == n - 1:
                    update = update + v0e * T - T * v0e
                new_R.append(_cut(R[i] + update, D))
        for i, r in enumerate(new_R):
            if not _coeff_at(r, -k, xcap - 1).is_zero():
                raise SystemInconsistent(
                    f"the system for the d_n^-{k} coefficient is incompatible (equation {i + 1})"
                )
        R = new_R
    return Operator(n, EHAT, S.terms, D, D)


# ---------------------------------------------------------------------------
# centralizers


def dressing_chain(ops, depth=None):
    """(S0, S, roots) where S0 normalizes the tuple and S dresses the normalized roots."""
    n = len(ops)
    f, Sn, normalized = normalize(ops)
    report = check_quasi_elliptic(normalized)
    ls = [e["l"] for e in report["operators"]]
    Ln = nth_root(normalized[-1], ls[-1], depth)
    roots = [quotient_root(normalized[i], Ln, ls[i], depth) for i in range(n - 1)] + [Ln]
    S = dressing_operator(roots, depth)
    S0 = Operator.from_series(f, DHATN) * Sn
    return S0, S, roots


def centralizer_to_constants(Q: Operator, ops, depth=None) -> Operator:
    """Q' = (S S0^{-1}) Q (S0 S^{-1}); constant-coefficient for Q in the centralizer."""
    for i, P in enumerate(ops):
        if not commutes(Q, P):
            raise NotCommuting(f"Q does not commute with operator {i + 1}")
    S0, S, _ = dressing_chain(ops, depth)
    S0_inv = invert(S0)
    S_inv = invert(S)
    Qe = _as_ehat(Q)
    out = S * (S0_inv * Qe * S0) * S_inv
    non_constant = [x for (x, _) in out.terms if any(x)]
    if non_constant:
        raise NotCommuting("conjugated operator still has x-dependent coefficients")
    return Operator(out.n, VELEM, {((0,) * out.n, d): c for (_, d), c in out.terms.items()}, INF, out.H)

