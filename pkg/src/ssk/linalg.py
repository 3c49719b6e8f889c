"""Exact dense linear algebra over the scalar field (Fraction or Cyclotomic entries)."""

from __future__ import annotations

from fractions import Fraction

from .errors import SingularMatrix


def _inv(a):
    from .coeffs import scalar_inverse

    return scalar_inverse(a)


def rref(rows, ncols=None, keep_zero_rows=False):
    """Reduced row-echelon form, pivoting only inside the first ``ncols`` columns.

    Returns (rows, pivot_columns).  Zero rows are dropped unless
    ``keep_zero_rows`` is set, in which case the rows after the pivot rows
    are returned too (useful to read off inconsistencies of augmented systems).
    """
    m = [list(r) for r in rows]
    if not m:
        return [], []
    ncols = len(m[0]) if ncols is None else ncols
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][col]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = _inv(m[r][col])
        m[r] = [x * inv if x else x for x in m[r]]
        row_r = m[r]
        for i in range(len(m)):
            if i != r and m[i][col]:
                f = m[i][col]
                m[i] = [a - f * b if b else a for a, b in zip(m[i], row_r)]
        pivots.append(col)
        r += 1
        if r == len(m):
            break
    return (m if keep_zero_rows else m[:r]), pivots


def rank(rows) -> int:
    return len(rref(rows)[1])


def solve(matrix, rhs):
    """Unique solution of a square (or overdetermined consistent) system."""
    sols = solve_many(matrix, [rhs])
    if sols is None or sols[0] is None:
        raise SingularMatrix("linear system has no unique solution")
    return sols[0]


def solve_many(matrix, rhss, require_unique=True):
    """Solve matrix * y = b for each b; an entry is None when that system is inconsistent.

    ``matrix`` is a list of rows.  With ``require_unique`` a rank-deficient
    matrix raises SingularMatrix; otherwise free variables are set to zero.
    """
    nrows = len(matrix)
    ncols = len(matrix[0]) if nrows else 0
    aug = [list(matrix[i]) + [b[i] for b in rhss] for i in range(nrows)]
    red, piv = rref(aug, ncols, keep_zero_rows=True)
    if require_unique and len(piv) < ncols:
        raise SingularMatrix(f"rank {len(piv)} < {ncols} unknowns")
    out = []
    for t in range(len(rhss)):
        col = ncols + t
        if any(row[col] for row in red[len(piv):]):
            out.append(None)
            continue
        y = [Fraction(0)] * ncols
        for row, p in zip(red, piv):
            y[p] = row[col]
        out.append(y)
    return out


def nullspace(rows, ncols):
    """Basis of {y : rows * y = 0}."""
    red, piv = rref(rows, ncols) if rows else ([], [])
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        y = [Fraction(0)] * ncols
        y[f] = Fraction(1)
        for row, p in zip(red, piv):
            if row[f]:
                y[p] = -row[f]
        basis.append(y)
    return basis


def det(matrix):
    m = [list(r) for r in matrix]
    size = len(m)
    result = Fraction(1)
    for col in range(size):
        piv = next((i for i in range(col, size) if m[i][col]), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            result = -result
        result = result * m[col][col]
        inv = _inv(m[col][col])
        for i in range(col + 1, size):
            if m[i][col]:
                f = m[i][col] * inv
                m[i] = [a - f * b for a, b in zip(m[i], m[col])]
    return result


def inverse(matrix):
    size = len(matrix)
    ident = [[Fraction(int(i == j)) for j in range(size)] for i in range(size)]
    cols = solve_many(matrix, [[ident[i][j] for i in range(size)] for j in range(size)])
    if any(c is None for c in cols):
        raise SingularMatrix("matrix is singular")
    return [[cols[j][i] for j in range(size)] for i in range(size)]


def matmul(a, b):
    return [[sum((a[i][t] * b[t][j] for t in range(len(b))), Fraction(0)) for j in range(len(b[0]))] for i in range(len(a))]
