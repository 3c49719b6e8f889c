import random
from fractions import Fraction

import pytest

from oracles import (
    apply_expr,
    compose_symbols,
    depth,
    expr_to_terms,
    rand_multi,
    rand_operator,
    rand_q,
    restrict,
    series_to_expr,
    xs,
)
from ssk.coeffs import INF, PowerSeries
from ssk.errors import (
    DimensionMismatch,
    GammaUndefined,
    KindIncompatible,
    NotAUnit,
    PrecisionExhausted,
)
from ssk.opcore import (
    DHAT,
    DHATN,
    DSYM,
    EHAT,
    PIHAT,
    VELEM,
    Operator,
    apply,
    check_quasi_elliptic,
    diamond,
    dk,
    from_slices,
    gamma_order,
    invert,
    is_regular_up_to,
    is_unit,
)
from ssk.special_ops import delta


def D(n, i, p=1, kind=None):
    return Operator.d(n, i, p, kind=kind)


def X(n, i, kind=DSYM):
    return Operator.x(n, i, kind)


# ---------------------------------------------------------------------------
# addition and products


def test_sum_cancels():
    assert (D(1, 0) + (-D(1, 0))).is_zero()


def test_sum_with_scalar():
    P = X(1, 0) * D(1, 0) + Operator.identity(1)
    assert P.terms == {((1,), (1,)): 1, ((0,), (0,)): 1}
    assert P.ord() == 0


def test_random_sum_order_bound():
    rng = random.Random(1)
    for _ in range(50):
        P = rand_operator(rng, 2, DSYM)
        Q = rand_operator(rng, 2, DSYM)
        S = P + Q
        if not S.is_zero():
            assert S.ord() <= max(P.ord(), Q.ord())


def test_canonical_commutation():
    assert (D(1, 0) * X(1, 0)).terms == {((1,), (1,)): 1, ((0,), (0,)): 1}


def test_euler_square():
    E = X(1, 0) * D(1, 0)
    assert (E * E).terms == {((2,), (2,)): 1, ((1,), (1,)): 1}


def test_inverse_derivative_times_x():
    P = D(1, 0, -1, kind=EHAT)
    Q = Operator.x(1, 0, EHAT)
    R = (P * Q).truncated(INF, 4)
    # d^{-1} x = x d^{-1} - d^{-2}
    assert R.terms == {((1,), (-1,)): 1, ((0,), (-2,)): -1}


@pytest.mark.parametrize("kind", [DSYM, DHAT, DHATN])
def test_differential_products_against_action(kind):
    rng = random.Random(hash(kind) % 1000)
    for n in (1, 2):
        Xs = xs(n)
        f = sum(Xs) ** 5 + Xs[0] ** 3 * Xs[-1] + 1
        for _ in range(15):
            P = rand_operator(rng, n, kind)
            Q = rand_operator(rng, n, kind)
            lhs = expr_to_terms(apply_expr(P * Q, f), n)
            rhs = expr_to_terms(apply_expr(P, apply_expr(Q, f)), n)
            assert lhs == rhs


def test_pseudo_products_against_symbol_calculus():
    rng = random.Random(5)
    for n in (1, 2):
        for _ in range(12):
            P = rand_operator(rng, n, EHAT, dneg=2)
            Q = rand_operator(rng, n, EHAT, dneg=2)
            prod = (P * Q).truncated(INF, 6)
            ref = restrict(compose_symbols(P, Q), INF, 6)
            assert prod.terms == ref


def test_bimodule_products_against_symbol_calculus():
    rng = random.Random(15)
    for n in (1, 2):
        for _ in range(10):
            P = rand_operator(rng, n, DSYM)
            A = rand_operator(rng, n, PIHAT, dneg=2)
            Q = rand_operator(rng, n, EHAT, dneg=2)
            left = P * A
            assert left.kind == PIHAT
            assert left.truncated(INF, 6).terms == restrict(compose_symbols(P, A), INF, 6)
            right = (A * Q).truncated(INF, 6)
            assert right.terms == restrict(compose_symbols(A, Q), INF, 6)
            # (P A) Q = P (A Q)
            assert ((P * A) * Q).truncated(INF, 6).terms == (P * (A * Q)).truncated(INF, 6).terms


def _junk(rng, n, V, H, kind, max_dn=None):
    """Terms lying outside the certified region (x-degree > V or depth > H).

    ``max_dn`` caps the d_n exponent: the precision model assumes the unknown
    part of a right factor never exceeds the d_n degree of its stored terms."""
    terms = {}
    for _ in range(3):
        a = rand_multi(rng, n, 3)
        b = list(rand_multi(rng, n, 2))
        if kind == EHAT and rng.random() < 0.5:
            b[-1] = -rng.randint(1, 4)
        if max_dn is not None:
            b[-1] = min(b[-1], max_dn)
        if sum(a) > V or depth(a, tuple(b)) > H:
            terms[(a, tuple(b))] = rand_q(rng) or Fraction(1)
    return Operator(n, kind, terms)


@pytest.mark.parametrize("kind", [DSYM, EHAT])
def test_product_precision_is_sound(kind):
    """Whatever lies outside the inputs' certified regions cannot change the
    product inside its claimed region."""
    rng = random.Random(99)
    checked = 0
    for _ in range(150):
        n = rng.choice([1, 2])
        P = rand_operator(rng, n, kind, xdeg=3, dneg=2 if kind == EHAT else 0)
        Q = rand_operator(rng, n, kind, xdeg=3, dneg=2 if kind == EHAT else 0)
        V1, H1 = rng.randint(1, 4), rng.randint(1, 6)
        V2, H2 = rng.randint(1, 4), rng.randint(1, 6)
        if kind == DSYM:
            V1 = H1 = min(V1, H1)
            V2 = H2 = min(V2, H2)
        Pt = Operator(n, kind, P.terms, V1, H1)
        Qt = Operator(n, kind, Q.terms, V2, H2)
        try:
            R = Pt * Qt
        except PrecisionExhausted:
            continue
        V, H = R.V, R.H
        cap_H = min(H, 8)
        cap_V = min(V, 8)
        full_P = Operator(n, kind, {**Pt.terms, **_junk(rng, n, V1, H1, kind).terms})
        En = max([0] + [d[-1] for _, d in Qt.terms])
        full_Q = Operator(n, kind, {**Qt.terms, **_junk(rng, n, V2, H2, kind, En).terms})
        for a, b in ((Pt, Qt), (full_P, full_Q)):
            ref = restrict(compose_symbols(a, b), cap_V, cap_H)
            assert R.truncated(cap_V, cap_H).terms == ref
        checked += 1
    assert checked > 20


def test_kind_constraints():
    with pytest.raises(KindIncompatible):
        Operator(1, DSYM, {((0,), (-1,)): 1})
    with pytest.raises(KindIncompatible):
        Operator(1, VELEM, {((1,), (0,)): 1})
    with pytest.raises(DimensionMismatch):
        D(1, 0) + D(2, 0)


# ---------------------------------------------------------------------------
# action on series


def test_apply_simple():
    f = PowerSeries.monomial(1, (2,))
    assert apply(D(1, 0), f).terms == {(1,): 2}
    g = PowerSeries.monomial(1, (3,))
    assert apply(X(1, 0) * D(1, 0), g).terms == {(3,): 3}


def test_apply_against_sympy():
    rng = random.Random(3)
    from oracles import rand_series

    for _ in range(20):
        P = rand_operator(rng, 2, DSYM)
        f = rand_series(rng, 2, 4)
        ours = apply(P, f).terms
        assert ours == expr_to_terms(apply_expr(P, series_to_expr(f)), 2)


def test_apply_rejects_pseudo():
    with pytest.raises(KindIncompatible):
        apply(D(1, 0, -1, kind=EHAT), PowerSeries.one(1))


# ---------------------------------------------------------------------------
# orders, symbols, slices


def test_ord_values():
    assert (Operator.mono(1, (3,), (2,))).ord() == -1
    assert Operator.identity(1).ord() == 0
    assert delta(1, 0, 6).ord() == 0


def test_ord_n_and_ht():
    P = Operator(2, EHAT, {((0, 0), (0, 2)): 1, ((1, 0), (0, -1)): 1})
    assert P.ord_n() == 2
    assert P.ht_n().terms == {((0, 0), (0, 0)): 1}
    Q = Operator(2, EHAT, {((0, 0), (1, 0)): 1})
    assert Q.ord_n() == 0
    assert Q.ht_n().terms == {((0, 0), (1, 0)): 1}


def test_ord_n_multiplicative():
    rng = random.Random(8)
    for _ in range(40):
        P = rand_operator(rng, 2, EHAT, dneg=2)
        Q = rand_operator(rng, 2, EHAT, dneg=2)
        if P.is_zero() or Q.is_zero():
            continue
        if (P.ht_n() * Q.ht_n()).is_zero():
            continue
        R = (P * Q).truncated(INF, 8)
        assert R.ord_n() == P.ord_n() + Q.ord_n()


def test_symbol_and_components():
    P = D(1, 0, 2) + X(1, 0) * D(1, 0)
    assert P.symbol().terms == {((0,), (2,)): 1}
    Q = X(1, 0) * D(1, 0) + Operator.identity(1)
    assert Q.homogeneous_component(0).terms == Q.terms
    rng = random.Random(4)
    for _ in range(20):
        R = rand_operator(rng, 2, DSYM)
        total = Operator.zero(2)
        for comp in R.homogeneous_components().values():
            total = total + comp
        assert total.terms == R.terms


def test_slices():
    P = Operator(2, DSYM, {((1, 0), (0, 1)): 1})
    assert P.slice((1, 0)).terms == {((0, 0), (0, 1)): 1}
    rng = random.Random(6)
    for _ in range(20):
        R = rand_operator(rng, 2, DSYM, xdeg=3)
        assert R.slice((0, 0)).terms == diamond(dk(2, (0, 0)), R).terms
        assert from_slices(2, R.slices(), 3, DSYM).terms == R.terms
        total = Operator.zero(2)
        for q in range(4):
            total = total + R.partial_slice(q)
        assert total.terms == R.terms


def test_diamond_examples():
    rng = random.Random(2)
    P = rand_operator(rng, 1, DSYM)
    assert diamond(dk(1, (0,)), P).terms == P.slice((0,)).terms
    assert diamond(dk(1, (1,)), X(1, 0)).terms == {((0,), (0,)): 1}


def test_gamma_order():
    P = Operator(3, DSYM, {((0, 0, 0), (1, 0, 3)): 1})
    assert gamma_order(P)[0] == (1, 0, 3)
    Q = Operator(2, EHAT, {((1, 0), (0, 1)): 1})
    g, lead = gamma_order(Q)
    assert g == (0, 1) and lead != {(0, 0): 1}
    with pytest.raises(GammaUndefined):
        gamma_order(Operator.zero(2))


def _a1_operator(rng, n):
    """Leading c*d^g plus Gamma-lower terms of ord <= |g|, so condition A1 holds."""
    from ssk.coeffs import anti_lex_key

    g = tuple(rng.randint(0, 2) for _ in range(n - 1)) + (rng.randint(1, 2),)
    terms = {((0,) * n, g): rng.choice([1, 2, -3])}
    for _ in range(5):
        a = rand_multi(rng, n, 2)
        b = list(rand_multi(rng, n, 3))
        if rng.random() < 0.4:
            b[-1] = -rng.randint(1, 2)
        b = tuple(b)
        if anti_lex_key(b) < anti_lex_key(g) and sum(b) - sum(a) <= sum(g):
            terms[(a, b)] = rand_q(rng) or Fraction(1)
    return Operator(n, EHAT, terms)


def test_gamma_additive_under_A1():
    rng = random.Random(12)
    for _ in range(40):
        n = rng.choice([1, 2, 3])
        P = _a1_operator(rng, n)
        Q = _a1_operator(rng, n)
        gp, gq = gamma_order(P)[0], gamma_order(Q)[0]
        assert P.ord() == sum(gp) and Q.ord() == sum(gq)
        R = (P * Q).truncated(INF, 10)
        assert gamma_order(R)[0] == tuple(a + b for a, b in zip(gp, gq))
        assert R.ord() == sum(gp) + sum(gq)


def test_quasi_elliptic_reports():
    n = 3
    ops = [D(n, i) * D(n, n - 1) for i in range(n - 1)] + [D(n, n - 1, 2)]
    assert check_quasi_elliptic(ops)["pass"]
    assert check_quasi_elliptic([D(n, i) for i in range(n)])["pass"]
    bad = [Operator.x(n, 0) * D(n, 0) * D(n, n - 1)] + ops[1:]
    rep = check_quasi_elliptic(bad)
    assert not rep["pass"]
    assert not rep["operators"][0]["monic"]


# ---------------------------------------------------------------------------
# units and inversion


def test_unit_examples():
    assert is_unit(Operator.identity(2))
    assert not is_unit(X(1, 0))
    P = Operator.identity(1) + X(1, 0) * D(1, 0)
    assert is_unit(P, 4)
    sigma = P.symbol()
    for k in range(5):
        assert diamond(dk(1, (k,)), sigma).terms == {((0,), (k,)): k + 1}


def test_geometric_inverse():
    P = Operator(2, EHAT, {((0, 0), (0, 0)): 1, ((1, 0), (0, -1)): 1}, INF, 6)
    R = invert(P)
    expected = {((k, 0), (0, -k)): (-1) ** k for k in range(4)}
    assert R.truncated(3, 6).terms == expected
    assert (P * R - Operator.identity(2, EHAT)).is_zero()


def test_identity_inverse():
    assert invert(Operator.identity(1)).terms == {((0,), (0,)): 1}


def test_dsym_unit_inverse():
    P = Operator(1, DSYM, {((0,), (0,)): 1, ((1,), (1,)): 1}, 8, 8)
    R = invert(P)
    one = Operator.identity(1)
    assert (P * R - one).is_zero()
    assert (R * P - one).is_zero()
    assert R.V >= 6


def test_non_unit_rejected():
    with pytest.raises(NotAUnit):
        invert(Operator(1, DSYM, {((1,), (0,)): 1}, 6, 6))


def test_regularity_needs_precision():
    P = Operator(1, DSYM, {((0,), (0,)): 1}, 2, 2)
    with pytest.raises(PrecisionExhausted):
        is_regular_up_to(P, 5)
