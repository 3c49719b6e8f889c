import random
from fractions import Fraction

import pytest

from oracles import expr_to_terms, lagrange_oracle_1d, rand_q, series_to_expr, xs
from ssk.coeffs import PowerSeries, zeta
from ssk.errors import JacobianNotOne, NotNilpotentShift, SingularMatrix, ValuationTooLow
from ssk.opcore import Operator, apply
from ssk.special_ops import (
    abhyankar_inverse,
    abhyankar_transport,
    delta,
    integrator,
    jacobian_determinant,
    linear_change_conjugator,
    root_of_unity_op,
    shift_operator,
)

ONE1 = Operator.identity(1)


def poly(n, terms):
    return PowerSeries(n, {tuple(k): Fraction(v) for k, v in terms.items()})


# ---------------------------------------------------------------------------
# shift, delta, integration


def test_shift_by_minus_x_is_delta():
    P = shift_operator([poly(1, {(1,): -1})], 6)
    assert P.terms == delta(1, 0, 6).terms
    f = poly(1, {(0,): 3, (2,): 1, (5,): 2})
    assert apply(P, f).truncate(6).terms == {(0,): 3}


def test_zero_shift_is_identity():
    assert shift_operator([PowerSeries.zero(2), PowerSeries.zero(2)], 5).terms == Operator.identity(2).terms


def test_shift_realizes_substitution():
    P = shift_operator([poly(2, {(0, 1): 1}), PowerSeries.zero(2)], 6)
    out = apply(P, poly(2, {(2, 0): 1})).truncate(4)
    x1, x2 = xs(2)
    assert out.terms == expr_to_terms((x1 + x2) ** 2, 2)


def test_random_shift_against_taylor():
    rng = random.Random(21)
    x1, x2 = xs(2)
    for _ in range(8):
        u = [poly(2, {(1, 0): rand_q(rng), (0, 1): rand_q(rng), (1, 1): rand_q(rng)}) for _ in range(2)]
        f = poly(2, {(2, 1): 1, (0, 3): rand_q(rng), (1, 0): 2})
        P = shift_operator(u, 8)
        ours = apply(P, f).truncate(5).terms
        subs = {x1: x1 + series_to_expr(u[0]), x2: x2 + series_to_expr(u[1])}
        ref = series_to_expr(f).subs(subs, simultaneous=True)
        assert ours == {k: v for k, v in expr_to_terms(ref, 2).items() if sum(k) <= 5}


def test_shift_needs_vanishing_components():
    with pytest.raises(NotNilpotentShift):
        shift_operator([poly(1, {(0,): 1})], 4)


def test_integration_identities():
    J = integrator(1, 0, 10)
    x2 = poly(1, {(2,): 1})
    assert apply(J, x2).truncate(6).terms == {(3,): Fraction(1, 3)}
    d = Operator.d(1, 0)
    assert (d * J - ONE1).truncated(8, 8).is_zero()
    assert (J * d + delta(1, 0, 10) - ONE1).truncated(8, 8).is_zero()


# ---------------------------------------------------------------------------
# roots of unity


@pytest.mark.parametrize("k", [2, 3, 4])
def test_root_of_unity_group_law(k):
    for i in range(k):
        for j in range(k):
            lhs = (root_of_unity_op(1, k, i, 0, 8) * root_of_unity_op(1, k, j, 0, 8)).truncated(8, 8)
            rhs = root_of_unity_op(1, k, (i + j) % k, 0, 8).truncated(lhs.V, lhs.H)
            assert (lhs - rhs).truncated(lhs.V, lhs.H).is_zero()


@pytest.mark.parametrize("k,i,p", [(2, 1, 1), (3, 1, 2), (4, 3, 3), (3, 2, 1)])
def test_derivative_passes_through_scaling(k, i, p):
    A = root_of_unity_op(1, k, i, 0, 10)
    dp = Operator.d(1, 0, p)
    lhs = dp * A
    rhs = (A * dp).scale(zeta(k, p * i))
    V = min(lhs.V, rhs.V)
    assert (lhs - rhs).truncated(V, V).is_zero()


def test_parity_operator_flips_sign():
    A = root_of_unity_op(1, 2, 1, 0, 9)
    S = shift_operator([poly(1, {(1,): -2})], 9)
    assert A.terms == S.terms
    f = poly(1, {(1,): 1, (2,): 5, (3,): 2})
    assert apply(A, f).truncate(6).terms == {(1,): -1, (2,): 5, (3,): -2}


def test_scaling_acts_on_monomials():
    A = root_of_unity_op(2, 3, 1, 1, 8)
    out = apply(A, poly(2, {(1, 2): 1})).truncate(6)
    assert out.terms == {(1, 2): zeta(3, 2)}


# ---------------------------------------------------------------------------
# linear changes


def test_identity_change():
    S, Si = linear_change_conjugator([[1, 0], [0, 1]], Fraction(1), 6)
    assert S.terms == Operator.identity(2).terms
    assert Si.terms == Operator.identity(2).terms


def test_linear_change_conjugates_derivatives():
    C = [[Fraction(1), Fraction(1)], [Fraction(0), Fraction(1)]]
    S, Si = linear_change_conjugator(C, Fraction(1), 8)
    for i in range(2):
        lhs = Si * Operator.d(2, i) * S
        rhs = Operator.zero(2)
        for j in range(2):
            rhs = rhs + Operator.d(2, j).scale(C[i][j])
        V = lhs.V
        assert (lhs - rhs).truncated(V, V).is_zero()
        assert V >= 6


def test_linear_change_composition():
    C1 = [[Fraction(2), Fraction(1)], [Fraction(0), Fraction(1)]]
    C2 = [[Fraction(1), Fraction(0)], [Fraction(3), Fraction(1)]]
    S1, S1i = linear_change_conjugator(C1, Fraction(1), 8)
    S2, S2i = linear_change_conjugator(C2, Fraction(1), 8)
    # S = S1 S2 gives S^-1 d_i S = S2^-1 (sum_j C1[i][j] d_j) S2 = (C1 C2 d)_i
    prod = [[sum(C1[i][m] * C2[m][j] for m in range(2)) for j in range(2)] for i in range(2)]
    S = S1 * S2
    Si = S2i * S1i
    for i in range(2):
        lhs = Si * Operator.d(2, i) * S
        rhs = Operator.d(2, 0).scale(prod[i][0]) + Operator.d(2, 1).scale(prod[i][1])
        V = lhs.V
        assert (lhs - rhs).truncated(V, V).is_zero()


def test_singular_change_rejected():
    with pytest.raises(SingularMatrix):
        linear_change_conjugator([[1, 2], [2, 4]], Fraction(1), 4)


# ---------------------------------------------------------------------------
# inversion of maps


def test_trivial_inverse():
    X = [PowerSeries.var(2, i) for i in range(2)]
    G = abhyankar_inverse(X, 6)
    assert [g.terms for g in G] == [x.terms for x in X]


def test_catalan_inverse():
    F = [poly(1, {(1,): 1, (2,): -1})]
    G = abhyankar_inverse(F, 10)[0]
    # frozen: Catalan numbers, from the undetermined-coefficients oracle
    catalan = [1, 1, 2, 5, 14, 42, 132, 429, 1430, 4862]
    assert [G.coeff((m,)) for m in range(1, 11)] == catalan
    assert lagrange_oracle_1d([1, -1], 10) == catalan


def test_random_1d_inverse_matches_oracle():
    rng = random.Random(31)
    for _ in range(5):
        c = [1, rand_q(rng), rand_q(rng)]
        F = [poly(1, {(1,): c[0], (2,): c[1], (3,): c[2]})]
        G = abhyankar_inverse(F, 7)[0]
        assert [G.coeff((m,)) for m in range(1, 8)] == lagrange_oracle_1d(c, 7)


def test_triangular_inverse():
    F = [poly(2, {(1, 0): 1, (0, 2): 1}), PowerSeries.var(2, 1)]
    G = abhyankar_inverse(F, 6)
    assert G[0].terms == {(1, 0): 1, (0, 2): -1}
    assert G[1].terms == {(0, 1): 1}


def test_valuation_check():
    with pytest.raises(ValuationTooLow):
        abhyankar_inverse([poly(1, {(1,): 2})], 4)


def test_unweighted_requires_unit_jacobian():
    F = [poly(1, {(1,): 1, (2,): -1})]
    with pytest.raises(JacobianNotOne):
        abhyankar_inverse(F, 5, weighted=False)


def test_jacobian_of_unimodular_map():
    F = [poly(2, {(1, 0): 1, (0, 2): 1}), PowerSeries.var(2, 1)]
    assert jacobian_determinant(F, 6).terms == {(0, 0): 1}


def test_transport_examples():
    F = [PowerSeries.var(1, 0)]
    assert abhyankar_transport(PowerSeries.var(1, 0), F, 6).terms == {(1,): 1}
    F = [poly(1, {(1,): 1, (2,): -1})]
    UF = poly(1, {(2,): 1, (3,): -2, (4,): 1})
    assert abhyankar_transport(UF, F, 8).terms == {(2,): 1}


def test_random_transport_round_trip():
    rng = random.Random(41)
    for _ in range(6):
        n = rng.choice([1, 2])
        H = [poly(n, {(2,) + (0,) * (n - 1): rand_q(rng), (0,) * (n - 1) + (3,): rand_q(rng)}) for _ in range(n)]
        if n == 2:
            H[1] = PowerSeries.zero(2)
            H[0] = poly(2, {(0, 2): rand_q(rng), (0, 3): rand_q(rng)})
        F = [PowerSeries.var(n, i) - H[i] for i in range(n)]
        U = poly(n, {(1,) + (0,) * (n - 1): 1, (0,) * (n - 1) + (2,): rand_q(rng), (0,) * (n - 1) + (3,): 1})
        UF = U.compose(F).truncate(8)
        rec = abhyankar_transport(UF, F, 8)
        assert rec.truncate(8).terms == U.terms
