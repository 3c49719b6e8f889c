"""JSON and text forms of scalars, series and operators with a deterministic sort."""

from __future__ import annotations

import json
import math
from fractions import Fraction

from .coeffs import INF, PowerSeries, anti_lex_key, format_scalar, parse_scalar
from .errors import ParseError
from .opcore import KINDS, VELEM, Operator

SCHEMA = "ssk/1"


def monomial_sort_key(x, d):
    """(|i|, i lexicographic, k anti-lexicographic)."""
    return (sum(x), tuple(x), anti_lex_key(d))


def _num(v):
    return None if v == INF else int(v)


def _from_num(v):
    if v is None:
        return INF
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"expected an integer or null, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# series


def series_to_json(f: PowerSeries) -> dict:
    terms = [
        {"x": list(e), "c": format_scalar(f.terms[e])}
        for e in sorted(f.terms, key=lambda e: (sum(e), e))
    ]
    return {"n": f.n, "prec": _num(f.prec), "terms": terms}


def series_from_json(obj) -> PowerSeries:
    try:
        n = int(obj["n"])
        prec = _from_num(obj.get("prec"))
        terms = {}
        for t in obj.get("terms", []):
            e = tuple(int(v) for v in t["x"])
            if len(e) != n:
                raise ParseError(f"exponent {e} does not have n={n} entries")
            terms[e] = terms.get(e, 0) + parse_scalar(t["c"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed series: {exc}") from exc
    if "num" in obj:
        raise ParseError("use 'rational' for quotient inputs")
    return PowerSeries(n, terms, prec)


def rational_series(num: PowerSeries, den: PowerSeries, prec) -> PowerSeries:
    """Expand num/den to a truncated series (den must have a nonzero constant term)."""
    return (num.truncate(prec) * den.invert_unit(prec)).truncate(prec)


def _poly_from_json(n, entries) -> PowerSeries:
    terms = {}
    for t in entries:
        e = tuple(int(v) for v in t["x"])
        terms[e] = terms.get(e, 0) + parse_scalar(t["c"])
    return PowerSeries(n, terms)


# ---------------------------------------------------------------------------
# operators


def operator_to_json(P: Operator) -> dict:
    keys = sorted(P.terms, key=lambda k: monomial_sort_key(*k))
    p = P.prec
    return {
        "n": P.n,
        "kind": P.kind,
        "prec": {"x_deg": _num(p.x_deg), "dn_tail": _num(p.dn_tail), "depth": _num(p.depth)},
        "ord_bound": None if P.is_zero() else int(P.ord()),
        "terms": [{"x": list(x), "d": list(d), "c": format_scalar(P.terms[(x, d)])} for x, d in keys],
    }


def operator_from_json(obj) -> Operator:
    """Parse an operator.

    Besides plain ``terms`` an input may list ``coeffs``: entries
    ``{"d": [...], "num": [...], "den": [...]}`` whose rational function
    coefficient is expanded to the requested x-degree.
    """
    try:
        n = int(obj["n"])
        kind = obj.get("kind", "DSym")
        if kind not in KINDS:
            raise ParseError(f"unknown kind {kind!r}")
        prec = obj.get("prec") or {}
        x_deg = _from_num(prec.get("x_deg"))
        dn_tail = _from_num(prec.get("dn_tail"))
        depth = prec.get("depth", "absent")
        terms = {}
        for t in obj.get("terms", []):
            x = tuple(int(v) for v in t.get("x", [0] * n))
            d = tuple(int(v) for v in t["d"])
            terms[(x, d)] = terms.get((x, d), 0) + parse_scalar(t["c"])
        for t in obj.get("coeffs", []):
            if x_deg == INF:
                raise ParseError("rational coefficients need a finite x_deg")
            d = tuple(int(v) for v in t["d"])
            num = _poly_from_json(n, t["num"])
            den = _poly_from_json(n, t.get("den", [{"x": [0] * n, "c": "1"}]))
            series = rational_series(num, den, x_deg)
            for e, c in series.terms.items():
                terms[(e, d)] = terms.get((e, d), 0) + c
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed operator: {exc}") from exc
    if kind == VELEM:
        V, H = INF, dn_tail
    elif kind in ("DSym", "DHat", "DHatN"):
        V = H = x_deg
    else:
        V = x_deg
        if depth == "absent":
            # a bare rectangle (x_deg, dn_tail) certifies the triangle of depth dn_tail
            H = dn_tail
        else:
            H = _from_num(depth)
    return Operator(n, kind, terms, V, H)


def _mono_text(x, d):
    parts = []
    for i, p in enumerate(x):
        if p:
            parts.append(f"x{i + 1}" + (f"^{p}" if p != 1 else ""))
    for i, p in enumerate(d):
        if p:
            parts.append(f"d{i + 1}" + (f"^{p}" if p != 1 else ""))
    return "*".join(parts)


def operator_to_text(P: Operator) -> str:
    if P.is_zero():
        return "0"
    out = []
    for x, d in sorted(P.terms, key=lambda k: monomial_sort_key(*k)):
        c = format_scalar(P.terms[(x, d)])
        m = _mono_text(x, d)
        if m and c == "1":
            out.append(m)
        elif m and c == "-1":
            out.append(f"-{m}")
        else:
            out.append(f"{c}*{m}" if m else c)
    return join_signed(out)


def join_signed(pieces) -> str:
    """Join summands with ' + ', folding a leading minus into ' - '."""
    text = ""
    for p in pieces:
        if not text:
            text = p
        elif p.startswith("-") and not p.startswith("-("):
            text += " - " + p[1:]
        else:
            text += " + " + p
    return text or "0"


# ---------------------------------------------------------------------------
# reports


def _default(o):
    if isinstance(o, Fraction):
        return format_scalar(o)
    if isinstance(o, float) and math.isinf(o):
        return None
    raise TypeError(f"not serializable: {type(o)}")


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float):
        return None if math.isinf(obj) else obj
    if isinstance(obj, Fraction):
        return format_scalar(obj)
    if isinstance(obj, Operator):
        return operator_to_json(obj)
    if isinstance(obj, PowerSeries):
        return series_to_json(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_sanitize(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
