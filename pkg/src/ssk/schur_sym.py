"""Conjugation of regular operators to constant-coefficient powers d_i^k and
the decomposition of the centralizer of d_q^k over root-of-unity operators."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as cartesian

from . import linalg
from .coeffs import INF, anti_lex_key, binom, multi_indices, unit_vector
from .errors import (
    CompatibilityFailure,
    KindIncompatible,
    NotCommuting,
    NotRegular,
    OrderMismatch,
    PrecisionExhausted,
)
from .opcore import DSYM, VELEM, Operator, dk, from_slices, is_regular_up_to, mul
from .special_ops import integrator_power, root_of_unity_op


def _zero_velem(n):
    return Operator(n, VELEM, {})


def _exact_from_slices(n, slices):
    terms = {}
    for i, s in slices.items():
        op = from_slices(n, {i: s}, sum(i), DSYM)
        terms.update(op.terms)
    return Operator(n, DSYM, terms, INF, INF, _trusted=True)


def _diamond_top(n, slices, t):
    """Homogeneous ord-|t| part of d^t ⋄ S computed from the slices of S."""
    D = sum(t)
    out = {}
    for l, s in slices.items():
        if not all(a <= b for a, b in zip(l, t)):
            continue
        c = 1
        for a, b in zip(l, t):
            c *= binom(b, a)
        shift = tuple(b - a for a, b in zip(l, t))
        for (_, d), v in s.terms.items():
            nd = tuple(x + y for x, y in zip(d, shift))
            if sum(nd) == D:
                out[nd] = out.get(nd, 0) + c * v
    return {d: v for d, v in out.items() if v}


def _rank_of(tops, monos_of_degree):
    index = {m: i for i, m in enumerate(monos_of_degree)}
    rows = []
    for top in tops:
        row = [Fraction(0)] * len(monos_of_degree)
        for d, v in top.items():
            row[index[d]] = v
        rows.append(row)
    return linalg.rank(rows) if rows else 0


def _conjugate(equations, M, n):
    """Slices of S with S P_i = d_i^{k_i} S for every (axis i, P_i, k_i) in ``equations``.

    Slices with t_i >= k_i for some constrained axis are forced by the
    recursion; the others are free and set to zero, except when the
    independence scan needs a monomial to keep S regular.
    """
    slices = {(0,) * n: Operator.identity(n, VELEM)}
    products: dict = {}

    def sp_slice(eq_index, j):
        q = sum(j)
        key = (eq_index, q)
        if key not in products:
            _, P, _ = equations[eq_index]
            partial = _exact_from_slices(n, {l: s for l, s in slices.items() if sum(l) <= q})
            T = mul(partial, P, x_range=(q, q))
            if T.V < q:
                raise PrecisionExhausted(f"product known only to x-degree {T.V}, need {q}")
            products[key] = T
        return products[key].slice(j)

    for D in range(1, int(M) + 1):
        for t in multi_indices(n, D):
            candidates = []
            for e, (axis, _, k) in enumerate(equations):
                if t[axis] < k:
                    continue
                j = t[:axis] + (t[axis] - k,) + t[axis + 1:]
                acc = sp_slice(e, j)
                for m in range(k):
                    lower = j[:axis] + (j[axis] + m,) + j[axis + 1:]
                    s = slices.get(lower)
                    if s is not None and not s.is_zero():
                        acc = acc - dk(n, unit_vector(n, axis, k - m), binom(k, m)) * s
                candidates.append(acc)
            if not candidates:
                slices[t] = _zero_velem(n)
                continue
            first = candidates[0]
            for other in candidates[1:]:
                if not (first - other).is_zero():
                    raise CompatibilityFailure(f"slice {list(t)} is forced to two different values")
            slices[t] = first
        _independence_fix(n, D, slices, equations)
    return slices


def _independence_fix(n, D, slices, equations):
    ts = sorted(multi_indices(n, D), key=anti_lex_key)
    monos = sorted(multi_indices(n, D), key=anti_lex_key)
    tops = [_diamond_top(n, slices, t) for t in ts]
    if _rank_of(tops, monos) == len(ts):
        return
    free = [t for t in ts if all(t[a] < k for a, _, k in equations)]
    for t in free:
        current = _rank_of(tops, monos)
        if current == len(ts):
            return
        idx = ts.index(t)
        for s in monos:
            trial = dict(tops[idx])
            trial[s] = trial.get(s, 0) + 1
            trial_tops = tops[:idx] + [{d: v for d, v in trial.items() if v}] + tops[idx + 1:]
            if _rank_of(trial_tops, monos) > current:
                slices[t] = slices[t] + dk(n, s)
                tops = trial_tops
                break
    if _rank_of(tops, monos) < len(ts):
        raise NotRegular(f"no choice of free slices keeps S regular in degree {D}")


def _check_input(P, k):
    if P.kind not in (DSYM, VELEM):
        raise KindIncompatible(f"expected a DSym operator, got {P.kind}")
    if P.ord() != k:
        raise OrderMismatch(f"ord(P) = {P.ord()} != {k}")


def conjugate_to_power(P: Operator, i: int, k: int, x_deg=None, cert_deg=None) -> Operator:
    """S with ord(S) = 0, S_[0] = 1 and S P S^{-1} = d_i^k (axis ``i`` 0-based)."""
    if k <= 0:
        raise OrderMismatch("k must be positive")
    _check_input(P, k)
    n = P.n
    V = min(P.V, P.H)
    cert = int(min(V, 6) if cert_deg is None else cert_deg)
    if not is_regular_up_to(P, cert):
        raise NotRegular(f"P is not regular up to degree {cert}")
    M = V + k if x_deg is None else min(x_deg, V + k)
    if M == INF:
        raise ValueError("an exact input needs x_deg")
    slices = _conjugate([(i, P, k)], M, n)
    return from_slices(n, slices, M, DSYM)


def joint_conjugate(Ps, ks, x_deg=None, cert_deg=None) -> Operator:
    """One S with S P_i S^{-1} = d_i^{k_i} for all i."""
    from .schur_hat import commutes

    n = len(Ps)
    if len(ks) != n:
        raise OrderMismatch("one power per operator is required")
    for P, k in zip(Ps, ks):
        if k <= 0:
            raise OrderMismatch("powers must be positive")
        _check_input(P, k)
    for a in range(n):
        for b in range(a + 1, n):
            if not commutes(Ps[a], Ps[b]):
                raise NotCommuting(f"operators {a + 1} and {b + 1} do not commute")
    V = min(min(P.V, P.H) for P in Ps)
    cert = int(min(V, 6) if cert_deg is None else cert_deg)
    for idx, P in enumerate(Ps):
        if not is_regular_up_to(P, cert):
            raise NotRegular(f"operator {idx + 1} is not regular up to degree {cert}")
    M = V + min(ks) if x_deg is None else min(x_deg, V + min(ks))
    if M == INF:
        raise ValueError("exact inputs need x_deg")
    slices = _conjugate([(i, P, k) for i, (P, k) in enumerate(zip(Ps, ks))], M, n)
    return from_slices(n, slices, M, DSYM)


# ---------------------------------------------------------------------------
# centralizer decomposition


@dataclass
class Coefficient:
    """sum over signed exponents e of (operator in the free variables) * prod_q D_q(e_q),
    where D_q(m) = d_q^m for m >= 0 and the m-fold integral int_q^{-m} for m < 0."""

    n: int
    axes: tuple
    parts: dict

    def is_zero(self):
        return all(op.is_zero() for op in self.parts.values())

    def to_operator(self, x_deg) -> Operator:
        total = Operator.zero(self.n, DSYM, x_deg, x_deg)
        for e, op in self.parts.items():
            term = op.truncated(x_deg, x_deg)
            for q, m in zip(self.axes, e):
                term = term * _signed_power(self.n, q, m, x_deg)
            total = total + term
        return total.truncated(x_deg, x_deg)

    def text(self):
        from .serialize import join_signed, operator_to_text

        pieces = []
        for e in sorted(self.parts, key=lambda e: tuple(-v for v in e)):
            op = self.parts[e]
            if op.is_zero():
                continue
            factor = "*".join(
                (f"d{q + 1}" + (f"^{m}" if m > 1 else "")) if m > 0 else
                (f"I{q + 1}" + (f"^{-m}" if m < -1 else ""))
                for q, m in zip(self.axes, e) if m
            )
            coef = operator_to_text(op)
            if len(op.terms) > 1 or any(any(x) or any(d) for x, d in op.terms):
                coef = f"({coef})"
            if not factor:
                pieces.append(coef)
            elif coef == "1":
                pieces.append(factor)
            elif coef == "-1":
                pieces.append(f"-{factor}")
            else:
                pieces.append(f"{coef}*{factor}")
        return join_signed(pieces)


def _signed_power(n, q, m, x_deg):
    if m >= 0:
        return Operator.d(n, q, m, kind=DSYM)
    return integrator_power(n, q, -m, x_deg)


def _split(Q: Operator, axes):
    """Group Q by monomials in the unconstrained variables."""
    groups: dict = {}
    for (x, d), c in Q.terms.items():
        key = (
            tuple(0 if a in axes else v for a, v in enumerate(x)),
            tuple(0 if a in axes else v for a, v in enumerate(d)),
        )
        inner = (
            tuple(v if a in axes else 0 for a, v in enumerate(x)),
            tuple(v if a in axes else 0 for a, v in enumerate(d)),
        )
        groups.setdefault(key, {})[inner] = c
    return groups


def _basis_operators(n, constraints, ranges, x_deg):
    """Operators prod_q D_q(e_q) * prod_q A_{k_q; j_q, q} indexed by (j, e)."""
    A = {
        (q, j): root_of_unity_op(n, k, j, q, x_deg)
        for q, k in constraints
        for j in range(k)
    }
    D = {}
    for (q, _), rng in zip(constraints, ranges):
        for m in rng:
            D[(q, m)] = _signed_power(n, q, m, x_deg)
    out = {}
    for js in cartesian(*[range(k) for _, k in constraints]):
        right = Operator.identity(n, DSYM)
        for (q, _), j in zip(constraints, js):
            right = (right * A[(q, j)]).truncated(x_deg, x_deg)
        for es in cartesian(*ranges):
            left = Operator.identity(n, DSYM)
            for (q, _), m in zip(constraints, es):
                left = left * D[(q, m)]
            out[(js, es)] = (left * right).truncated(x_deg, x_deg)
    return out


def centralizer_decompose(Q: Operator, constraints, x_deg=None) -> dict:
    """Coefficients c_j with Q = sum_j c_j prod A_{k;j_q,q} (constraints: (axis 0-based, k)).

    Returns {j: Coefficient}; every coefficient is a combination of
    d_q^m (m <= the q-order of Q) and int_q^m (m <= k - 1) with operator
    coefficients in the remaining variables.
    """
    if Q.kind not in (DSYM, VELEM):
        raise KindIncompatible(f"expected a DSym operator, got {Q.kind}")
    n = Q.n
    constraints = [(int(q), int(k)) for q, k in constraints]
    axes = tuple(q for q, _ in constraints)
    for q, k in constraints:
        dq = Operator.d(n, q, k, kind=DSYM)
        if not (dq * Q - Q * dq).is_zero():
            raise NotCommuting(f"Q does not commute with d_{q + 1}^{k}")
    V = min(Q.V, Q.H) if x_deg is None else min(x_deg, Q.V, Q.H)
    if V == INF:
        V = max([sum(x) for x, _ in Q.terms] + [0]) + 2
    V = int(V)
    ranges = []
    for q, k in constraints:
        top = max([0] + [d[q] - x[q] for x, d in Q.terms])
        ranges.append([m for m in range(int(top), 0, -1)] + [0] + [-m for m in range(1, k)])
    # basis operators are exact, so computing them to V + (d-order) certifies x-degree V
    slack = max(max(r) for r in ranges) if ranges else 0
    basis = _basis_operators(n, constraints, ranges, V + slack)
    keys = sorted(basis, key=lambda key: (key[0], tuple(-v for v in key[1])))
    mono_sets = sorted(
        {m for key in keys for m in basis[key].terms if sum(m[0]) <= V},
        key=lambda m: (sum(m[0]), m[0], anti_lex_key(m[1])),
    )
    index = {m: i for i, m in enumerate(mono_sets)}
    matrix = [[Fraction(0)] * len(keys) for _ in mono_sets]
    for col, key in enumerate(keys):
        for m, c in basis[key].terms.items():
            if m in index:
                matrix[index[m]][col] = c
    groups = _split(Q, axes)
    group_keys = sorted(groups, key=lambda g: (sum(g[0]), g[0], anti_lex_key(g[1])))
    # a group carrying x-degree |g| in the free variables is known only to
    # V - |g|; the coefficients separate once that reaches ``need``, which
    # bounds the certified free-variable degree of the result
    need = next(
        (b for b in range(V + 1)
         if linalg.rank([row for row, m in zip(matrix, mono_sets) if sum(m[0]) <= b]) == len(keys)),
        None,
    )
    if need is None:
        raise PrecisionExhausted("x-precision too low to separate the coefficients")
    cert = V - need if n > len(axes) else V
    group_keys = [g for g in group_keys if sum(g[0]) <= cert]
    by_budget: dict = {}
    for g in group_keys:
        by_budget.setdefault(V - sum(g[0]), []).append(g)
    solved = {}
    for budget, gs in by_budget.items():
        rows = [i for i, m in enumerate(mono_sets) if sum(m[0]) <= budget]
        pos = {i: r for r, i in enumerate(rows)}
        rhss = []
        for g in gs:
            rhs = [Fraction(0)] * len(rows)
            for m, c in groups[g].items():
                if sum(m[0]) > budget:
                    continue
                if m not in index:
                    raise NotCommuting(f"monomial {m} lies outside the centralizer span")
                rhs[pos[index[m]]] = c
            rhss.append(rhs)
        sols = linalg.solve_many([matrix[i] for i in rows], rhss, require_unique=True)
        solved.update(zip(gs, sols))
    sols = [solved[g] for g in group_keys]
    result = {js: {} for js in cartesian(*[range(k) for _, k in constraints])}
    for g, y in zip(group_keys, sols):
        if y is None:
            raise NotCommuting("Q is not in the span of the root-of-unity decomposition")
        for (js, es), v in zip(keys, y):
            if not v:
                continue
            op = result[js].setdefault(es, {})
            op[g] = op.get(g, 0) + v
    out = {}
    for js, parts in result.items():
        ops = {
            es: Operator(n, DSYM, terms, cert, cert)
            for es, terms in parts.items()
        }
        out[js] = Coefficient(n, axes, ops)
    return out


def reassemble(coefficients: dict, constraints, n, x_deg) -> Operator:
    """sum_j c_j prod_q A_{k_q; j_q, q} truncated to x-degree x_deg."""
    constraints = [(int(q), int(k)) for q, k in constraints]
    total = Operator.zero(n, DSYM, x_deg, x_deg)
    for js, coeff in coefficients.items():
        if coeff.is_zero():
            continue
        right = Operator.identity(n, DSYM)
        for (q, k), j in zip(constraints, js):
            right = (right * root_of_unity_op(n, k, j, q, x_deg)).truncated(x_deg, x_deg)
        total = total + (coeff.to_operator(x_deg) * right).truncated(x_deg, x_deg)
    return total.truncated(x_deg, x_deg)
