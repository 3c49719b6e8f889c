"""Command-line front end: every subcommand reads one JSON input, runs the
kernel, re-checks the result by an independent computation and writes a
deterministic JSON report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import coeffs
from .coeffs import INF, PowerSeries, parse_scalar, scalar_field_order
from .errors import KernelError, ParseError, VerificationFailed
from .opcore import (
    DSYM,
    EHAT,
    VELEM,
    Operator,
    apply,
    check_quasi_elliptic,
    invert,
    is_unit,
)
from .serialize import (
    SCHEMA,
    dumps,
    operator_from_json,
    operator_to_json,
    series_from_json,
    series_to_json,
)

DEFAULT_GUARD = 8


@dataclass
class JobConfig:
    x_deg: int
    dn_tail: int
    guard: int
    field: int | None
    cert_deg: int

    @property
    def work_x(self):
        return self.x_deg + self.guard

    @property
    def work_tail(self):
        return self.dn_tail + self.guard

    def as_dict(self):
        return {
            "x_deg": self.x_deg,
            "dn_tail": self.dn_tail,
            "guard": self.guard,
            "field": "rational" if self.field is None else f"cyc:{self.field}",
            "certification_degree": self.cert_deg,
        }


# ---------------------------------------------------------------------------
# input helpers


def _with_default_prec(obj, cfg: JobConfig):
    if not isinstance(obj, dict):
        raise ParseError("operator must be a JSON object")
    if "prec" not in obj:
        obj = dict(obj)
        if obj.get("kind") == VELEM and not any(
            int(t.get("d", [0])[-1]) < 0 for t in obj.get("terms", [])
        ):
            # constant-coefficient differential operators are exact as given
            obj["prec"] = {"x_deg": None, "dn_tail": None}
        else:
            obj["prec"] = {"x_deg": cfg.work_x, "dn_tail": cfg.work_tail, "depth": cfg.work_x + cfg.work_tail}
    return obj


def _op(obj, cfg):
    op = operator_from_json(_with_default_prec(obj, cfg))
    _check_field(op.terms.values(), cfg)
    return op


def _ops(objs, cfg):
    if not isinstance(objs, list) or not objs:
        raise ParseError("expected a non-empty list of operators")
    return [_op(o, cfg) for o in objs]


def _series(obj, cfg):
    obj = dict(obj)
    obj.setdefault("prec", None)
    f = series_from_json(obj)
    _check_field(f.terms.values(), cfg)
    return f


def _check_field(values, cfg):
    if cfg.field is None:
        return
    for v in values:
        k = scalar_field_order(v)
        if cfg.field % k:
            raise ParseError(f"scalar {coeffs.format_scalar(v)} is not in Q(zeta_{cfg.field})")


def _need(data, key):
    if key not in data:
        raise ParseError(f"missing field {key!r}")
    return data[key]


def _int(data, key, default=None):
    v = data.get(key, default)
    if v is None or isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"field {key!r} must be an integer")
    return v


def _subspace(obj, cfg):
    from .sato import SubspaceW

    try:
        mu = int(obj.get("mu", 0))
        cutoff = int(_need(obj, "cutoff"))
        basis = {}
        n = None
        for entry in _need(obj, "basis"):
            k = tuple(int(v) for v in entry["k"])
            op_obj = dict(entry["op"])
            op_obj.setdefault("kind", VELEM)
            if "prec" not in op_obj:
                op_obj["prec"] = {"x_deg": None, "dn_tail": cfg.work_tail}
            op = operator_from_json(op_obj)
            n = op.n if n is None else n
            basis[k] = op
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed subspace: {exc}") from exc
    if n is None:
        raise ParseError("subspace basis is empty")
    return SubspaceW(n, mu, basis, cutoff)


def _subspace_json(W):
    return {
        "mu": W.mu,
        "cutoff": W.cutoff,
        "basis": [
            {"k": list(k), "op": operator_to_json(W.basis[k])}
            for k in sorted(W.basis, key=lambda k: (sum(k), k))
        ],
    }


# ---------------------------------------------------------------------------
# verification helpers


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, passed, **extra):
        entry = {"identity": name, "pass": bool(passed)}
        entry.update(extra)
        self.items.append(entry)

    @property
    def ok(self):
        return all(c["pass"] for c in self.items)


def _zero_at(op: Operator):
    return op.is_zero()


def _prec(op):
    p = op.prec
    return {
        "x_deg": None if p.x_deg == INF else int(p.x_deg),
        "dn_tail": None if p.dn_tail == INF else int(p.dn_tail),
        "depth": None if p.depth == INF else int(p.depth),
    }


def _shrink(op: Operator, cfg):
    """Trim a result to the requested rectangle (never widens the certificate)."""
    return op.truncate_prec(cfg.x_deg, cfg.dn_tail)


# ---------------------------------------------------------------------------
# commands


def cmd_invert(data, cfg):
    from .special_ops import abhyankar_inverse, compose_maps

    F = [_series(s, cfg) for s in _need(data, "map")]
    out_deg = _int(data, "out_deg", cfg.x_deg)
    G = abhyankar_inverse(F, out_deg, weighted=bool(data.get("weighted", True)))
    checks = Checks()
    n = len(F)
    X = [PowerSeries.var(n, i) for i in range(n)]
    GF = compose_maps(G, [f.truncate(out_deg) for f in F])
    FG = compose_maps([f.truncate(out_deg) for f in F], G)
    checks.add("G o F = x", all(a.truncate(out_deg).agrees_with(b.truncate(out_deg)) for a, b in zip(GF, X)), degree=out_deg)
    checks.add("F o G = x", all(a.truncate(out_deg).agrees_with(b.truncate(out_deg)) for a, b in zip(FG, X)), degree=out_deg)
    return {"G": [series_to_json(g) for g in G]}, checks, {"x_deg": out_deg, "dn_tail": None}


def cmd_transport(data, cfg):
    from .special_ops import abhyankar_transport

    F = [_series(s, cfg) for s in _need(data, "map")]
    UF = _series(_need(data, "UF"), cfg)
    out_deg = _int(data, "out_deg", cfg.x_deg)
    U = abhyankar_transport(UF, F, out_deg)
    checks = Checks()
    back = U.compose([f.truncate(out_deg) for f in F]).truncate(out_deg)
    checks.add("U o F = U(F)", back.agrees_with(UF.truncate(out_deg)), degree=out_deg)
    return {"U": series_to_json(U)}, checks, {"x_deg": out_deg, "dn_tail": None}


def cmd_root(data, cfg):
    from .schur_hat import nth_root

    P = _op(_need(data, "P"), cfg)
    l = _int(data, "l")
    L = nth_root(P, l)
    checks = Checks()
    checks.add("L^l = P", _zero_at(L ** l - P.with_kind(EHAT)))
    rep = check_quasi_elliptic([L.with_kind(EHAT)]) if L.n == 1 else None
    if rep is not None:
        checks.add("L monic of Gamma-order (1)", rep["pass"])
    return {"L": operator_to_json(_shrink(L, cfg))}, checks, _prec(L)


def cmd_normalize(data, cfg):
    from .schur_hat import normalize

    ops = _ops(_need(data, "ops"), cfg)
    f, S, out = normalize(ops)
    checks = Checks()
    f_op = Operator.from_series(f, "DHatN")
    f_inv = invert(f_op)
    S_inv = invert(S)
    for i, (P, Pn) in enumerate(zip(ops, out)):
        again = S_inv * (f_inv * P.with_kind(EHAT) * f_op) * S
        checks.add(f"S^-1 f^-1 P_{i + 1} f S = P'_{i + 1}", _zero_at(again - Pn))
    checks.add("normalized tuple is quasi-elliptic", check_quasi_elliptic(out)["pass"])
    res = {
        "f": series_to_json(f),
        "S": operator_to_json(S),
        "ops": [operator_to_json(_shrink(P, cfg)) for P in out],
    }
    return res, checks, _prec(out[-1])


def cmd_dress(data, cfg):
    from .schur_hat import dressing_operator

    Ls = _ops(_need(data, "ops"), cfg)
    S = dressing_operator(Ls)
    S_inv = invert(S)
    n = len(Ls)
    checks = Checks()
    v0 = Ls[-1].dn_coefficient(0).with_kind(EHAT)
    for i, L in enumerate(Ls):
        D = Operator.d(n, i, 1, kind=EHAT)
        if i == n - 1:
            D = D + v0
        resid = S_inv * D * S - L
        checks.add(f"S^-1 D_{i + 1} S = L_{i + 1}", _zero_at(resid), certified=_prec(resid))
    checks.add("ord(S) = 0", S.ord() == 0)
    return {"S": operator_to_json(_shrink(S, cfg))}, checks, _prec(S)


def cmd_centralize(data, cfg):
    from .schur_hat import centralizer_to_constants

    Q = _op(_need(data, "Q"), cfg)
    ops = _ops(_need(data, "ops"), cfg)
    Qc = centralizer_to_constants(Q, ops)
    checks = Checks()
    checks.add("Q' has constant coefficients", Qc.kind == VELEM)
    checks.add("ord(Q') = ord(Q)", Qc.ord() == Q.ord())
    return {"Q": operator_to_json(Qc)}, checks, _prec(Qc)


def cmd_sato(data, cfg):
    from .sato import build_sato_general, build_sato_monic, subspace_of

    W = _subspace(_need(data, "W"), cfg)
    mode = data.get("mode", "monic")
    if mode == "monic":
        S = build_sato_monic(W)
    elif mode == "general":
        S = build_sato_general(W, data.get("choice", "rref"))
    else:
        raise ParseError(f"unknown mode {mode!r}")
    checks = Checks()
    image = subspace_of(S, W.cutoff, mu=W.mu)
    checks.add("d^k ⋄ S lies in W", all(W.contains(w) for w in image.basis.values()), cutoff=W.cutoff)
    return {"S": operator_to_json(S)}, checks, _prec(S)


def cmd_pair_from_ring(data, cfg):
    from .sato import construction1, support_is_F

    B = _ops(_need(data, "B"), cfg)
    pair = construction1(B, cutoff=data.get("cutoff"))
    checks = Checks()
    checks.add("Supp(W) = F", support_is_F(pair.W))
    checks.add("W a ⊆ W", pair.stable(), cutoff=pair.W.cutoff)
    res = {"A": [operator_to_json(a) for a in pair.A_generators], "W": _subspace_json(pair.W)}
    return res, checks, {"x_deg": None, "dn_tail": None if pair.W.H == INF else int(pair.W.H)}


def cmd_ring_from_pair(data, cfg):
    from .sato import SchurPair, construction2, membership_F

    A = _ops(_need(data, "A"), cfg)
    W = _subspace(_need(data, "W"), cfg)
    B, S0 = construction2(SchurPair(A, W))
    checks = Checks()
    for i, (a, b) in enumerate(zip(A, B)):
        checks.add(f"B_{i + 1} is differential", membership_F(b))
        checks.add(f"S0 A_{i + 1} = B_{i + 1} S0", _zero_at(S0 * a - b * S0))
    return {"B": [operator_to_json(_shrink(b, cfg)) for b in B], "S0": operator_to_json(S0)}, checks, _prec(S0)


def cmd_rank(data, cfg):
    from .sato import SchurPair, analytical_rank

    A = _ops(_need(data, "A"), cfg)
    W = _subspace(_need(data, "W"), cfg)
    rep = analytical_rank(SchurPair(A, W), _int(data, "budget"))
    checks = Checks()
    checks.add("rank <= number of scanned basis elements", rep.rank <= len(W.basis))
    res = {"rank": rep.rank, "budget": rep.budget, "exact": rep.exact}
    return res, checks, {"x_deg": None, "dn_tail": None if W.H == INF else int(W.H)}


def cmd_spectral(data, cfg):
    from .sato import solve_spectral

    B = _ops(_need(data, "B"), cfg)
    chi = [parse_scalar(c) for c in _need(data, "chi")]
    out_deg = _int(data, "out_deg", cfg.x_deg)
    rep = solve_spectral(B, chi, out_deg)
    checks = Checks()
    for idx, f in enumerate(rep.basis):
        for j, (Q, lam) in enumerate(zip(B, chi)):
            img = apply(Q.with_kind(DSYM), f.with_prec(INF)).truncate(
                rep.certified_degree - max(0, int(Q.ord()))
            )
            target = f.scale(lam).truncate(img.prec)
            checks.add(f"Q_{j + 1}(f_{idx + 1}) = chi f_{idx + 1}", img.agrees_with(target), degree=int(img.prec))
    res = {
        "basis": [series_to_json(f) for f in rep.basis],
        "dimension": rep.dimension,
        "stabilized": rep.stabilized,
    }
    return res, checks, {"x_deg": rep.certified_degree, "dn_tail": None}


def _conjugation_checks(checks, S, pairs):
    S_inv = invert(S)
    for name, P, target in pairs:
        C = S * P * S_inv
        resid = C - target
        checks.add(f"S {name} S^-1 = {_text(target)}", _zero_at(resid), certified=_prec(resid))
    checks.add("S is a unit", is_unit(S, min(S.V, 4)))
    return S_inv


def _text(op):
    from .serialize import operator_to_text

    return operator_to_text(op)


def cmd_conjugate(data, cfg):
    from .schur_sym import conjugate_to_power

    P = _op(_need(data, "P"), cfg)
    axis = _int(data, "axis", 1) - 1
    k = _int(data, "k", int(P.ord()) if P.ord() > 0 else 1)
    S = conjugate_to_power(P, axis, k, cert_deg=min(cfg.cert_deg, int(min(P.V, P.H))))
    checks = Checks()
    _conjugation_checks(checks, S, [("P", P, Operator.d(P.n, axis, k))])
    return {"S": operator_to_json(_shrink(S, cfg))}, checks, _prec(S)


def cmd_joint_conjugate(data, cfg):
    from .schur_sym import joint_conjugate

    Ps = _ops(_need(data, "ops"), cfg)
    ks = [int(k) for k in _need(data, "ks")]
    cert = min([cfg.cert_deg] + [int(min(P.V, P.H)) for P in Ps])
    S = joint_conjugate(Ps, ks, cert_deg=cert)
    checks = Checks()
    n = len(Ps)
    _conjugation_checks(
        checks, S, [(f"P_{i + 1}", P, Operator.d(n, i, k)) for i, (P, k) in enumerate(zip(Ps, ks))]
    )
    return {"S": operator_to_json(_shrink(S, cfg))}, checks, _prec(S)


def _decomposition_json(dec, constraints):
    out = []
    for js in sorted(dec):
        c = dec[js]
        out.append(
            {
                "index": list(js),
                "text": c.text(),
                "parts": [
                    {"e": list(e), "op": operator_to_json(c.parts[e])}
                    for e in sorted(c.parts, key=lambda e: tuple(-v for v in e))
                    if not c.parts[e].is_zero()
                ],
            }
        )
    return out


def cmd_centralizer_decompose(data, cfg):
    from .schur_sym import centralizer_decompose, conjugate_to_power, reassemble

    raw = _need(data, "constraints")
    constraints = [(int(c["axis"]) - 1, int(c["k"])) for c in raw]
    checks = Checks()
    extra = {}
    if "Q" in data:
        Q = _op(data["Q"], cfg)
    else:
        # conjugate L to d^k first, then decompose S P S^{-1}
        L = _op(_need(data, "L"), cfg)
        P = _op(_need(data, "P"), cfg)
        axis, k = constraints[0]
        S = conjugate_to_power(L, axis, k, cert_deg=min(cfg.cert_deg, int(min(L.V, L.H))))
        S_inv = _conjugation_checks(checks, S, [("L", L, Operator.d(L.n, axis, k))])
        Q = S * P * S_inv
        extra["S"] = operator_to_json(_shrink(S, cfg))
    if cfg.field is not None:
        for _, k in constraints:
            if cfg.field % k:
                raise ParseError(f"zeta_{k} is not in Q(zeta_{cfg.field})")
    dec = centralizer_decompose(Q, constraints)
    V = int(min([Q.V, Q.H] + [op.V for c in dec.values() for op in c.parts.values()]))
    R = reassemble(dec, constraints, Q.n, V)
    checks.add("sum c_j A_j = Q", _zero_at(R - Q.truncated(V, V)), x_deg=V)
    res = {"coefficients": _decomposition_json(dec, constraints), **extra}
    return res, checks, {"x_deg": V, "dn_tail": None}


COMMANDS = {
    "invert": cmd_invert,
    "transport": cmd_transport,
    "root": cmd_root,
    "normalize": cmd_normalize,
    "dress": cmd_dress,
    "centralize": cmd_centralize,
    "sato": cmd_sato,
    "pair-from-ring": cmd_pair_from_ring,
    "ring-from-pair": cmd_ring_from_pair,
    "rank": cmd_rank,
    "spectral": cmd_spectral,
    "conjugate": cmd_conjugate,
    "joint-conjugate": cmd_joint_conjugate,
    "centralizer-decompose": cmd_centralizer_decompose,
}


# ---------------------------------------------------------------------------
# driver


def run(command, data, cfg: JobConfig) -> dict:
    """Run one command and return the report (raises kernel errors)."""
    if command not in COMMANDS:
        raise ParseError(f"unknown command {command!r}")
    if not isinstance(data, dict):
        raise ParseError("input must be a JSON object")
    result, checks, certified = COMMANDS[command](data, cfg)
    return {
        "schema": SCHEMA,
        "command": command,
        "config": cfg.as_dict(),
        "input": data,
        "result": result,
        "certified": certified,
        "verified": checks.items,
        "requested_met": _requested_met(certified, cfg),
        "status": "pass" if checks.ok else "fail",
    }


def _requested_met(certified, cfg):
    """Whether the certified rectangle covers the requested --prec-x/--prec-tail."""
    x = certified.get("x_deg")
    if x is not None and x < cfg.x_deg:
        return False
    if "depth" in certified:
        # a depth-H triangle contains every rectangle (a, H - a)
        depth = certified["depth"]
        return depth is None or depth >= cfg.x_deg + cfg.dn_tail
    tail = certified.get("dn_tail")
    return tail is None or tail >= cfg.dn_tail


def _load(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _parse_field(text):
    if text is None or text == "rational":
        return None
    if not text.startswith("cyc:"):
        raise ParseError(f"field must be 'rational' or 'cyc:k', got {text!r}")
    try:
        k = int(text[4:])
    except ValueError as exc:
        raise ParseError(f"bad cyclotomic order in {text!r}") from exc
    if k < 1:
        raise ParseError("cyclotomic order must be positive")
    return k


def _config(args) -> JobConfig:
    guard = args.guard
    env = os.environ.get("SSK_GUARD")
    if env is not None:
        try:
            guard = int(env)
        except ValueError as exc:
            raise ParseError(f"SSK_GUARD must be an integer, got {env!r}") from exc
    if guard < 0:
        raise ParseError("guard must be non-negative")
    cert = args.cert_deg if args.cert_deg is not None else args.prec_x
    if cert > args.prec_x:
        raise ParseError("certification degree cannot exceed --prec-x")
    return JobConfig(args.prec_x, args.prec_tail, guard, _parse_field(args.field), cert)


def _config_from_dict(d) -> JobConfig:
    field = d.get("field", "rational")
    return JobConfig(
        int(d["x_deg"]),
        int(d["dn_tail"]),
        int(d["guard"]),
        _parse_field(field),
        int(d.get("certification_degree", d["x_deg"])),
    )


def _emit(report, out):
    text = dumps(report)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="ssk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["verify"]:
        p = sub.add_parser(name)
        p.add_argument("input", help="JSON input file ('-' for stdin)")
        p.add_argument("--prec-x", type=int, default=8, help="requested x-degree")
        p.add_argument("--prec-tail", type=int, default=8, help="requested d_n-tail")
        p.add_argument("--guard", type=int, default=DEFAULT_GUARD, help="extra working degrees")
        p.add_argument("--cert-deg", type=int, default=None, help="degree for regularity checks")
        p.add_argument("--field", default=None, help="'rational' or 'cyc:k'")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        data = _load(args.input)
        if args.command == "verify":
            report = _verify(data)
        else:
            report = run(args.command, data, _config(args))
    except KernelError as exc:
        _emit({"schema": SCHEMA, "command": args.command, "error": type(exc).__name__, "message": str(exc)}, args.out)
        return exc.exit_code
    _emit(report, args.out)
    return 0 if report.get("status") == "pass" else VerificationFailed.exit_code


def _verify(report) -> dict:
    """Re-run the embedded command and compare results."""
    try:
        command = report["command"]
        cfg = _config_from_dict(report["config"])
        data = report["input"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"not a report: {exc}") from exc
    fresh = run(command, data, cfg)
    same = json.loads(dumps(fresh["result"])) == json.loads(dumps(report.get("result")))
    checks = fresh["verified"] + [{"identity": "recomputed result equals the stored one", "pass": same}]
    ok = same and fresh["status"] == "pass"
    return {
        "schema": SCHEMA,
        "command": "verify",
        "config": report["config"],
        "input": {"command": command},
        "result": {"matches": same},
        "certified": fresh["certified"],
        "verified": checks,
        "status": "pass" if ok else "fail",
    }


if __name__ == "__main__":
    sys.exit(main())
