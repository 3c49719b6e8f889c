"""Grassmannian points, Sato operators, the transport L_S, Schur pairs,
analytical rank and truncated spectral solution spaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .coeffs import INF, PowerSeries, anti_lex_key, mbinom, msub, multi_indices, multi_indices_upto
from .errors import (
    BudgetExhausted,
    HilbertViolation,
    KindIncompatible,
    NotCommuting,
    NotQuasiElliptic,
    NotStabilizing,
    PrecisionExhausted,
    SupportNotFull,
)
from .opcore import (
    DSYM,
    EHAT,
    PIHAT,
    VELEM,
    Operator,
    apply,
    check_quasi_elliptic,
    diamond,
    dk,
    from_diamonds,
    invert,
)


# ---------------------------------------------------------------------------
# vectors of constant-coefficient operators


def _tail_ok(d, H):
    return max(0, -d[-1]) <= H


def _rows(ops, H):
    """Coordinate rows of VElem operators on monomials of d_n-tail <= H."""
    monos = sorted(
        {d for op in ops for (_, d) in op.terms if _tail_ok(d, H)},
        key=lambda d: (-sum(d), tuple(-v for v in anti_lex_key(d))),
    )
    index = {m: i for i, m in enumerate(monos)}
    rows = []
    for op in ops:
        row = [Fraction(0)] * len(monos)
        for (_, d), c in op.terms.items():
            if d in index:
                row[index[d]] = c
        rows.append(row)
    return rows, monos


def _from_row(n, row, monos, H):
    terms = {((0,) * n, m): c for m, c in zip(monos, row) if c}
    return Operator(n, VELEM, terms, INF, H)


def _combine(n, coeffs, ops, H=INF):
    """sum a_j op_j, certified on the smallest tail among the ops actually used."""
    terms = {}
    for a, op in zip(coeffs, ops):
        if not a:
            continue
        H = min(H, op.H)
        for key, c in op.terms.items():
            terms[key] = terms.get(key, 0) + a * c
    terms = {k: v for k, v in terms.items() if v and _tail_ok(k[1], H)}
    return Operator(n, VELEM, terms, INF, H, _trusted=True)


def _in_F(op: Operator) -> bool:
    return all(d[-1] >= 0 for _, d in op.terms)


def _pi_plus(op: Operator) -> Operator:
    """Projection onto F: drop negative d_n powers."""
    terms = {k: c for k, c in op.terms.items() if k[1][-1] >= 0}
    return Operator(op.n, VELEM, terms, INF, INF, _trusted=True)


def _ord(op: Operator):
    return op.ord()


def _symbol(op: Operator):
    return op.homogeneous_component(op.ord())


# ---------------------------------------------------------------------------
# subspaces


@dataclass
class SubspaceW:
    """A point of the Grassmannian given by w_k (|k| <= cutoff) with ord(w_k) = mu + |k|."""

    n: int
    mu: int
    basis: dict
    cutoff: int

    @property
    def H(self):
        return min((w.H for w in self.basis.values()), default=INF)

    @property
    def prec(self):
        from .opcore import Precision

        return Precision(INF, self.H, self.H)

    def grade(self, m):
        return [self.basis[k] for k in multi_indices(self.n, m)]

    def validate(self):
        """Check ord(w_k) = mu + |k| and independence of the symbols grade by grade."""
        for m in range(self.cutoff + 1):
            for k in multi_indices(self.n, m):
                if k not in self.basis:
                    raise HilbertViolation(f"basis element for k={list(k)} is missing")
                w = self.basis[k]
                if w.kind != VELEM:
                    raise KindIncompatible("basis elements must have constant coefficients")
                if w.is_zero() or _ord(w) != self.mu + m:
                    raise HilbertViolation(f"ord(w_{list(k)}) != mu + |k|")
            symbols = [_symbol(w) for w in self.grade(m)]
            rows, _ = _rows(symbols, self.H)
            if linalg.rank(rows) < len(symbols):
                raise HilbertViolation(f"symbols of grade {m} are dependent")
        return self

    def hilbert_function(self, k):
        """dim W_{mu+k} from the certified basis."""
        if k > self.cutoff:
            raise PrecisionExhausted(f"Hilbert function certified only up to {self.cutoff}")
        self.validate()
        return sum(len(list(multi_indices(self.n, m))) for m in range(k + 1))

    def contains(self, op: Operator, H=None) -> bool:
        """Membership of a VElem in the span of the basis (inside the common tail)."""
        H = min(self.H, op.H) if H is None else min(H, self.H, op.H)
        if op.is_zero():
            return True
        top = _ord(op) - self.mu
        if top < 0:
            return False
        if top > self.cutoff:
            raise PrecisionExhausted("element lies above the certified cutoff")
        span = [self.basis[k] for k in multi_indices_upto(self.n, int(top))]
        rows, _ = _rows(span + [op], H)
        return linalg.rank(rows[:-1]) == linalg.rank(rows)

    @classmethod
    def from_operator_values(cls, values: dict, mu, cutoff, n):
        return cls(n, mu, dict(values), cutoff)


def support(W: SubspaceW) -> SubspaceW:
    """Replace each basis element by its lowest term (largest d_n power first)."""
    basis = {}
    for k, w in W.basis.items():
        lead = max(w.terms, key=lambda key: anti_lex_key(key[1]))
        basis[k] = Operator(W.n, VELEM, {lead: w.terms[lead]})
    return SubspaceW(W.n, W.mu, basis, W.cutoff)


def hilbert_function(W: SubspaceW, k) -> int:
    return W.hilbert_function(k)


def subspace_F(n, cutoff) -> SubspaceW:
    return SubspaceW(n, 0, {k: dk(n, k) for k in multi_indices_upto(n, cutoff)}, cutoff)


def subspace_of(S: Operator, cutoff, mu=None) -> SubspaceW:
    """W = F ⋄ S with basis w_k = d^k ⋄ S."""
    n = S.n
    basis = {k: diamond(dk(n, k), S) for k in multi_indices_upto(n, cutoff)}
    if mu is None:
        mu = _ord(basis[(0,) * n])
    return SubspaceW(n, mu, basis, cutoff)


def support_is_F(W: SubspaceW) -> bool:
    return all(
        set(supp.terms) == {((0,) * W.n, k)}
        for k, supp in support(W).basis.items()
    ) and W.mu == 0


# ---------------------------------------------------------------------------
# Sato operators


def _rref_basis(W: SubspaceW) -> dict:
    """Canonical representatives of W_m modulo W_{m-1}, grade by grade."""
    n = W.n
    H = W.H
    chosen: dict = {}
    for m in range(W.cutoff + 1):
        lower = [chosen[k] for k in multi_indices_upto(n, m - 1)] if m else []
        piece = W.grade(m)
        rows, monos = _rows(lower + piece, H)
        red, piv = linalg.rref(rows)
        top = W.mu + m
        reps = [
            (monos[p], row)
            for row, p in zip(red, piv)
            if sum(monos[p]) == top
        ]
        ks = list(multi_indices(n, m))
        if len(reps) != len(ks):
            raise HilbertViolation(f"grade {m} has {len(reps)} new directions, expected {len(ks)}")
        reps.sort(key=lambda t: anti_lex_key(t[0]))
        for k, (_, row) in zip(sorted(ks, key=anti_lex_key), reps):
            chosen[k] = _from_row(n, row, monos, H)
    return chosen


def build_sato_general(W: SubspaceW, choice="rref") -> Operator:
    """S with d^k ⋄ S = w_k, for the chosen basis presentation of W."""
    W.validate()
    if choice == "rref":
        basis = _rref_basis(W)
    elif choice == "given":
        basis = W.basis
    else:
        raise ValueError(f"unknown basis choice {choice!r}")
    kind = DSYM if all(_in_F(w) for w in basis.values()) else PIHAT
    if kind == DSYM:
        basis = {k: Operator(W.n, VELEM, w.terms) for k, w in basis.items()}
    return from_diamonds(W.n, basis, W.cutoff, kind)


def _normalized_basis(W: SubspaceW) -> dict:
    """Basis with pi_+(w_k) = d^k (requires mu = 0 and full support)."""
    n = W.n
    if W.mu != 0:
        raise SupportNotFull("the monic Sato operator needs mu = 0")
    ks = list(multi_indices_upto(n, W.cutoff))
    index = {k: i for i, k in enumerate(ks)}
    size = len(ks)
    matrix = [[Fraction(0)] * size for _ in range(size)]
    for col, k in enumerate(ks):
        for (_, d), c in _pi_plus(W.basis[k]).terms.items():
            if d not in index:
                raise SupportNotFull(f"pi_+(w_{list(k)}) has a term d^{list(d)} above its grade")
            matrix[index[d]][col] = c
    try:
        inv = linalg.inverse(matrix)
    except Exception as exc:
        raise SupportNotFull("pi_+ is not bijective on the certified part of W") from exc
    vals = [W.basis[k] for k in ks]
    return {k: _combine(n, [inv[j][index[k]] for j in range(size)], vals) for k in ks}


def build_sato_monic(W: SubspaceW) -> Operator:
    """The unique S0 = 1 + S_- with F ⋄ S0 = W (certified to the cutoff)."""
    W.validate()
    n = W.n
    w = _normalized_basis(W)
    slices: dict = {}
    for total in range(W.cutoff + 1):
        for k in multi_indices(n, total):
            X = Operator(n, VELEM, {}, INF, INF)
            for l, sl in slices.items():
                if l != k and all(a <= b for a, b in zip(l, k)):
                    X = X + dk(n, msub(k, l), mbinom(k, l)) * sl
            if not total:
                slices[k] = w[k]
                continue
            plus = _pi_plus(X)
            coeffs = {d: c for (_, d), c in plus.terms.items()}
            target = _combine(n, [coeffs.get(l, 0) for l in w], list(w.values()))
            slices[k] = target - X
    from .opcore import from_slices

    S = from_slices(n, slices, W.cutoff, EHAT)
    return S


def membership_F(P: Operator) -> bool:
    """F ⋄ P ⊆ F at the certified precision."""
    return all(d[-1] >= 0 for _, d in P.terms)


def unit_factorize(S: Operator, cutoff=None):
    """S = U ∘ S0 with S0 monic; returns (U, S0)."""
    cutoff = int(min(S.V, S.H) if cutoff is None else cutoff)
    W = subspace_of(S, cutoff)
    S0 = build_sato_monic(W)
    S0_inv = invert(S0)
    U = S.with_kind(PIHAT) * S0_inv
    if not membership_F(U):
        raise KindIncompatible("unit factor has negative d_n powers")
    U = Operator(U.n, DSYM, U.terms, min(U.V, U.H), min(U.V, U.H))
    return U, S0


def sato_transport(S: Operator, f: Operator, degree=None) -> Operator:
    """L = L_S(f), the differential operator with S ∘ f = L ∘ S."""
    if f.kind != VELEM:
        raise KindIncompatible("f must have constant coefficients")
    n = S.n
    Sf = S * f
    ordf = int(f.ord())
    M = int(min(Sf.V, Sf.H, min(S.V, S.H) - max(0, ordf)))
    if degree is not None:
        M = min(M, degree)
    if M < 0:
        raise PrecisionExhausted("Sato operator precision is below ord(f)")
    rhs_ops = {k: diamond(dk(n, k), Sf) for k in multi_indices_upto(n, M)}
    span = int(M + max(0, ordf))
    basis_keys = list(multi_indices_upto(n, span))
    cols = {l: diamond(dk(n, l), S) for l in basis_keys}
    H = min([c.H for c in cols.values()] + [r.H for r in rhs_ops.values()])
    keys = list(rhs_ops)
    rows, monos = _rows([cols[l] for l in basis_keys] + [rhs_ops[k] for k in keys], H)
    ncol = len(basis_keys)
    matrix = [[rows[j][i] for j in range(ncol)] for i in range(len(monos))]
    rhss = [[rows[ncol + t][i] for i in range(len(monos))] for t in range(len(keys))]
    sols = linalg.solve_many(matrix, rhss, require_unique=False)
    w = {}
    for k, y in zip(keys, sols):
        if y is None:
            raise NotStabilizing(f"d^{list(k)} ⋄ (S f) is not in W at precision")
        terms = {((0,) * n, basis_keys[j]): v for j, v in enumerate(y) if v}
        w[k] = Operator(n, VELEM, terms)
    return from_diamonds(n, w, M, DSYM)


# ---------------------------------------------------------------------------
# Schur pairs


@dataclass
class SchurPair:
    A_generators: list
    W: SubspaceW
    rank_hint: int | None = None
    extras: dict = field(default_factory=dict)

    def stable(self) -> bool:
        """W ∘ a ⊆ W for every generator, as far as the cutoff allows."""
        for a in self.A_generators:
            shift = int(a.ord())
            for k, w in self.W.basis.items():
                if sum(k) + shift > self.W.cutoff:
                    continue
                if not self.W.contains(w * a):
                    return False
        return True


def construction1(B, cutoff=None, depth=None) -> SchurPair:
    """(A, W) from commuting operators whose first n entries form a quasi-elliptic tuple."""
    from .schur_hat import commutes, dressing_chain

    if not B:
        raise NotQuasiElliptic("no generators")
    n = B[0].n
    tuple_ops = list(B[:n])
    if len(tuple_ops) < n or not check_quasi_elliptic(tuple_ops)["pass"]:
        raise NotQuasiElliptic("the first n generators are not a monic quasi-elliptic tuple")
    for i in range(len(B)):
        for j in range(i + 1, len(B)):
            if not commutes(B[i], B[j]):
                raise NotCommuting(f"generators {i + 1} and {j + 1} do not commute")
    S0, S, _ = dressing_chain(tuple_ops, depth)
    S_inv = invert(S)
    S0_inv = invert(S0)
    A = []
    for b in B:
        inner = S0_inv * b.with_kind(EHAT) * S0
        a = S * inner * S_inv
        if any(any(x) for x, _ in a.terms):
            raise NotCommuting("a generator does not become constant-coefficient")
        A.append(Operator(n, VELEM, {((0,) * n, d): c for (_, d), c in a.terms.items()}, INF, a.H))
    T = S0.with_kind(EHAT) * S_inv
    if cutoff is None:
        cutoff = int(min(T.V, T.H) // 2)
    W = subspace_of(T, cutoff, mu=0)
    return SchurPair(A, W, extras={"T": T, "S": S, "S0": S0})


def construction2(pair: SchurPair, check=True):
    """B = S0 a S0^{-1} for the monic Sato operator S0 of W."""
    S0 = build_sato_monic(pair.W)
    S0_inv = invert(S0)
    B = []
    for a in pair.A_generators:
        b = S0 * a * S0_inv
        if not membership_F(b):
            raise KindIncompatible("S0 a S0^{-1} left the differential operators")
        B.append(b.with_kind(EHAT))
    if check:
        n = pair.W.n
        if len(B) >= n and check_quasi_elliptic(pair.A_generators[:n])["pass"]:
            rep = check_quasi_elliptic(B[:n])
            if not rep["pass"]:
                raise NotQuasiElliptic("image tuple is not quasi-elliptic")
    return B, S0


@dataclass
class RankReport:
    rank: int
    budget: int
    exact: bool
    generators: list


def _algebra_basis(gens, budget, n, H):
    """Basis of the algebra generated by ``gens`` inside ord <= budget."""
    gens = [g for g in gens if g.ord() > 0]
    products = {(): Operator.identity(n, VELEM)}
    frontier = [()]
    while frontier:
        nxt = []
        for word in frontier:
            last = word[-1] if word else 0
            for i in range(last, len(gens)):
                p = products[word] * gens[i]
                if p.ord() <= budget:
                    products[word + (i,)] = p.truncated(INF, H)
                    nxt.append(word + (i,))
        frontier = nxt
    H = min([H] + [p.H for p in products.values()])
    rows, monos = _rows(list(products.values()), H)
    red, _ = linalg.rref(rows)
    return [_from_row(n, r, monos, H) for r in red]


def _lead(op: Operator):
    """Largest monomial in the (total degree, anti-lex) order used by ``_rows``."""
    return max((d for _, d in op.terms), key=lambda d: (sum(d), anti_lex_key(d)))


def _echelon(vectors, n):
    """Integer row echelon basis of the lattice spanned by ``vectors``."""
    rows = [list(v) for v in vectors if any(v)]
    basis = []
    for col in range(n):
        live = [r for r in rows if r[col]]
        rest = [r for r in rows if not r[col]]
        while len(live) > 1:
            live.sort(key=lambda r: abs(r[col]))
            head = live[0]
            nxt = [head]
            for r in live[1:]:
                q = r[col] // head[col]
                r = [a - q * b for a, b in zip(r, head)]
                (nxt if r[col] else rest).append(r)
            live = nxt
        if live:
            head = live[0] if live[0][col] > 0 else [-a for a in live[0]]
            basis.append((col, head))
        rows = [r for r in rest if any(r)]
    return basis


def _coset(v, basis):
    v = list(v)
    for col, row in basis:
        q = v[col] // row[col]
        v = [a - q * b for a, b in zip(v, row)]
    return tuple(v)


def analytical_rank(pair: SchurPair, budget: int) -> RankReport:
    """Rank of W over Quot(A) read off from leading exponents up to ord ``budget``.

    Leading exponents of A span a lattice; elements of W whose leading
    exponents fall in different cosets are independent over Quot(A), and
    elements in one coset reduce to each other.  The rank is the number of
    cosets met by W.  ``exact`` means the lattice has full rank, every
    generator of A fits the budget and W already meets every coset.
    """
    W = pair.W
    n = W.n
    gens = pair.A_generators
    min_pos = min((g.ord() for g in gens if g.ord() > 0), default=None)
    if min_pos is None or budget < min_pos:
        raise BudgetExhausted(f"budget {budget} does not reach the positive-order generators")
    if budget - W.mu > W.cutoff:
        raise PrecisionExhausted(f"budget {budget} exceeds the certified cutoff {W.cutoff}")
    H = W.H
    algebra = _algebra_basis(gens, budget - W.mu, n, H)
    lattice = _echelon([_lead(a) for a in algebra], n)
    pieces = [w for k, w in W.basis.items() if W.mu + sum(k) <= budget]
    rows, monos = _rows(pieces, H)
    red, piv = linalg.rref(rows)
    reduced = sorted(
        ((monos[p], _from_row(n, r, monos, H)) for r, p in zip(red, piv)),
        key=lambda t: (sum(t[0]), anti_lex_key(t[0])),
    )
    chosen = {}
    for lead, w in reduced:
        chosen.setdefault(_coset(lead, lattice), w)
    index = None
    if len(lattice) == n:
        index = 1
        for col, row in lattice:
            index *= row[col]
    exact = (
        index is not None
        and len(chosen) == index
        and all(g.ord() <= budget - W.mu for g in gens)
    )
    return RankReport(len(chosen), budget, exact, list(chosen.values()))


# ---------------------------------------------------------------------------
# spectral solutions


@dataclass
class SpectralReport:
    basis: list
    dimension: int
    certified_degree: int
    stabilized: bool


def solve_spectral(B, chi, out_deg) -> SpectralReport:
    """Basis of {f : Q(f) = chi(Q) f for Q in B} truncated at degree out_deg."""
    from .schur_hat import commutes

    if len(B) != len(chi):
        raise ValueError("one character value per generator is required")
    n = B[0].n
    for i in range(len(B)):
        for j in range(i + 1, len(B)):
            if not commutes(B[i], B[j]):
                raise NotCommuting(f"generators {i + 1} and {j + 1} do not commute")
    E = int(min([out_deg] + [min(Q.V, Q.H) for Q in B]))
    loss = max(max(0, int(Q.ord())) for Q in B)
    N = E + loss
    unknowns = list(multi_indices_upto(n, N))
    eq_monos = list(multi_indices_upto(n, E))
    eq_index = {m: i for i, m in enumerate(eq_monos)}
    matrix = []
    for Q, lam in zip(B, chi):
        block = [[Fraction(0)] * len(unknowns) for _ in eq_monos]
        for col, j in enumerate(unknowns):
            f = PowerSeries.monomial(n, j, 1, prec=INF)
            img = apply(Q.with_kind(DSYM) if Q.kind != VELEM else Q, f)
            if img.prec < E:
                raise PrecisionExhausted("operator precision is below the requested degree")
            for e, c in img.terms.items():
                if e in eq_index:
                    block[eq_index[e]][col] += c
            if j in eq_index and lam:
                block[eq_index[j]][col] -= lam
        matrix.extend(block)
    null = linalg.nullspace(matrix, len(unknowns))

    def project(deg):
        keep = [i for i, j in enumerate(unknowns) if sum(j) <= deg]
        rows = [[v[i] for i in keep] for v in null]
        red, _ = linalg.rref(rows) if rows else ([], [])
        return red, [unknowns[i] for i in keep]

    red, monos = project(E)
    basis = [
        PowerSeries(n, {m: c for m, c in zip(monos, row) if c}, E) for row in red
    ]
    lower, _ = project(E - 1)
    return SpectralReport(basis, len(basis), E, len(lower) == len(basis))
