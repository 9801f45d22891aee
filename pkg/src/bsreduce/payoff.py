"""Payoff expression trees: parsing, evaluation, and structure probes.

The grammar covers terminal payoffs over asset symbols ``S0`` .. ``S15``:
infix ``+ - * /`` with the usual precedence, ``^`` with a numeric-literal
exponent, ``max(...)`` / ``min(...)`` of two or more arguments, decimal
literals, and parentheses.  Whitespace is ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

from .errors import (
    DomainError,
    NonDifferentiableKink,
    NotReducible,
    PayoffSyntaxError,
    UnknownSymbol,
)

MAX_SYMBOLS = 16

__all__ = [
    "Const",
    "Symbol",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "PowConst",
    "Max",
    "Min",
    "PayoffExpr",
    "GroupStructure",
    "parse_payoff",
    "payoff_to_string",
    "eval_payoff",
    "max_symbol_index",
    "payoff_constants",
    "check_homogeneity",
    "detect_group_structure",
    "rewrite_payoff",
    "substitute_symbols",
]


# ---------------------------------------------------------------------------
# expression tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Symbol:
    index: int


@dataclass(frozen=True)
class Add:
    left: "PayoffExpr"
    right: "PayoffExpr"


@dataclass(frozen=True)
class Sub:
    left: "PayoffExpr"
    right: "PayoffExpr"


@dataclass(frozen=True)
class Mul:
    left: "PayoffExpr"
    right: "PayoffExpr"


@dataclass(frozen=True)
class Div:
    left: "PayoffExpr"
    right: "PayoffExpr"


@dataclass(frozen=True)
class Neg:
    operand: "PayoffExpr"


@dataclass(frozen=True)
class PowConst:
    base: "PayoffExpr"
    exponent: float


@dataclass(frozen=True)
class Max:
    args: tuple


@dataclass(frozen=True)
class Min:
    args: tuple


PayoffExpr = Union[Const, Symbol, Add, Sub, Mul, Div, Neg, PowConst, Max, Min]


def max_symbol_index(expr: PayoffExpr) -> int:
    """Largest asset index referenced, or -1 for a constant expression."""
    if isinstance(expr, Symbol):
        return expr.index
    if isinstance(expr, Const):
        return -1
    if isinstance(expr, (Add, Sub, Mul, Div)):
        return max(max_symbol_index(expr.left), max_symbol_index(expr.right))
    if isinstance(expr, Neg):
        return max_symbol_index(expr.operand)
    if isinstance(expr, PowConst):
        return max_symbol_index(expr.base)
    if isinstance(expr, (Max, Min)):
        return max(max_symbol_index(a) for a in expr.args)
    raise TypeError(f"not a payoff node: {expr!r}")


def payoff_constants(expr: PayoffExpr) -> set:
    """All numeric literals appearing in the tree (used for grid sizing)."""
    out = set()

    def walk(e):
        if isinstance(e, Const):
            out.add(e.value)
        elif isinstance(e, Symbol):
            pass
        elif isinstance(e, (Add, Sub, Mul, Div)):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Neg):
            walk(e.operand)
        elif isinstance(e, PowConst):
            walk(e.base)
        elif isinstance(e, (Max, Min)):
            for a in e.args:
                walk(a)

    walk(expr)
    return out


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^(),])"
)
_WS_RE = re.compile(r"\s*")


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        pos = _WS_RE.match(text, pos).end()
        if pos >= n:
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PayoffSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise PayoffSyntaxError(f"expected {op!r}", tok.pos)
        return self.advance()

    def parse(self) -> PayoffExpr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise PayoffSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return e

    def expr(self) -> PayoffExpr:
        e = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.advance()
                rhs = self.term()
                e = Add(e, rhs) if tok.text == "+" else Sub(e, rhs)
            else:
                return e

    def term(self) -> PayoffExpr:
        e = self.unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.advance()
                rhs = self.unary()
                e = Mul(e, rhs) if tok.text == "*" else Div(e, rhs)
            else:
                return e

    def unary(self) -> PayoffExpr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if tok.kind == "op" and tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> PayoffExpr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            return PowConst(base, self.exponent_literal())
        return base

    def exponent_literal(self) -> float:
        # exponents are numeric literals only, optionally signed/parenthesized
        tok = self.peek()
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            val = self.exponent_literal()
            self.expect_op(")")
            return val
        sign = 1.0
        if tok.kind == "op" and tok.text in "+-":
            self.advance()
            sign = -1.0 if tok.text == "-" else 1.0
            tok = self.peek()
        if tok.kind != "num":
            raise PayoffSyntaxError("exponent must be a numeric literal", tok.pos)
        self.advance()
        return sign * float(tok.text)

    def atom(self) -> PayoffExpr:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in ("max", "min"):
                self.expect_op("(")
                args = [self.expr()]
                while True:
                    nxt = self.peek()
                    if nxt.kind == "op" and nxt.text == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) < 2:
                    raise PayoffSyntaxError(f"{name}() needs at least 2 arguments", tok.pos)
                return Max(tuple(args)) if name == "max" else Min(tuple(args))
            m = re.fullmatch(r"S(\d+)", name)
            if m is None:
                raise UnknownSymbol(f"unknown identifier {name!r}", tok.pos)
            idx = int(m.group(1))
            if idx >= MAX_SYMBOLS:
                raise UnknownSymbol(f"symbol index {idx} out of range (max S15)", tok.pos)
            return Symbol(idx)
        raise PayoffSyntaxError("expected expression", tok.pos)


def parse_payoff(text: str) -> PayoffExpr:
    """Parse payoff text into an expression tree.

    Raises PayoffSyntaxError (with a byte offset) on malformed input and
    UnknownSymbol for identifiers other than max/min/S0..S15.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printer

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, PowConst: 4, Const: 5, Symbol: 5, Max: 5, Min: 5}


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def payoff_to_string(expr: PayoffExpr) -> str:
    """Render the tree back to grammar text; parse round-trips evaluation-exactly."""

    def render(e, parent_prec):
        prec = _PREC[type(e)]
        if isinstance(e, Const):
            s = _fmt_num(e.value)
            if e.value < 0:
                prec = 3
        elif isinstance(e, Symbol):
            s = f"S{e.index}"
        elif isinstance(e, Add):
            s = f"{render(e.left, 1)} + {render(e.right, 2)}"
        elif isinstance(e, Sub):
            s = f"{render(e.left, 1)} - {render(e.right, 2)}"
        elif isinstance(e, Mul):
            s = f"{render(e.left, 2)}*{render(e.right, 3)}"
        elif isinstance(e, Div):
            s = f"{render(e.left, 2)}/{render(e.right, 3)}"
        elif isinstance(e, Neg):
            s = f"-{render(e.operand, 4)}"
        elif isinstance(e, PowConst):
            s = f"{render(e.base, 5)}^{_fmt_num(e.exponent)}"
        elif isinstance(e, (Max, Min)):
            name = "max" if isinstance(e, Max) else "min"
            s = f"{name}({', '.join(render(a, 0) for a in e.args)})"
        else:
            raise TypeError(f"not a payoff node: {e!r}")
        if prec < parent_prec:
            return f"({s})"
        return s

    return render(expr, 0)


# ---------------------------------------------------------------------------
# evaluation


def eval_payoff(expr: PayoffExpr, s) -> Union[float, np.ndarray]:
    """Evaluate at strictly positive asset values.

    ``s`` is indexed by symbol: shape (dim,) for one point or (dim, n) for a
    batch.  Raises DomainError on division by zero or invalid power bases.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim not in (1, 2):
        raise ValueError("asset values must have shape (dim,) or (dim, n)")
    need = max_symbol_index(expr)
    if need >= s.shape[0]:
        raise ValueError(f"payoff references S{need} but only {s.shape[0]} values given")
    if not np.all(s > 0.0):
        raise ValueError("asset values must be strictly positive")
    out = _eval(expr, s)
    if s.ndim == 1:
        return float(out)
    return np.broadcast_to(out, s.shape[1:]).astype(float) if np.ndim(out) == 0 else out


def _eval(e: PayoffExpr, s: np.ndarray):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Symbol):
        return s[e.index]
    if isinstance(e, Add):
        return _eval(e.left, s) + _eval(e.right, s)
    if isinstance(e, Sub):
        return _eval(e.left, s) - _eval(e.right, s)
    if isinstance(e, Mul):
        return _eval(e.left, s) * _eval(e.right, s)
    if isinstance(e, Div):
        den = _eval(e.right, s)
        if np.any(den == 0.0):
            raise DomainError("division by zero in payoff")
        return _eval(e.left, s) / den
    if isinstance(e, Neg):
        return -_eval(e.operand, s)
    if isinstance(e, PowConst):
        base = _eval(e.base, s)
        p = e.exponent
        if p != int(p) and np.any(base < 0.0):
            raise DomainError("fractional power of a negative base")
        if p < 0 and np.any(base == 0.0):
            raise DomainError("negative power of zero")
        return np.power(base, p) if np.ndim(base) else math.pow(base, p)
    if isinstance(e, Max):
        vals = [_eval(a, s) for a in e.args]
        out = vals[0]
        for v in vals[1:]:
            out = np.maximum(out, v)
        return out
    if isinstance(e, Min):
        vals = [_eval(a, s) for a in e.args]
        out = vals[0]
        for v in vals[1:]:
            out = np.minimum(out, v)
        return out
    raise TypeError(f"not a payoff node: {e!r}")


def _eval_signature(e: PayoffExpr, s: np.ndarray, sig: list) -> float:
    """Scalar evaluation that records which branch each max/min selects."""
    if isinstance(e, (Max, Min)):
        vals = [_eval_signature(a, s, sig) for a in e.args]
        pick = int(np.argmax(vals)) if isinstance(e, Max) else int(np.argmin(vals))
        sig.append(pick)
        return vals[pick]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Symbol):
        return float(s[e.index])
    if isinstance(e, Add):
        return _eval_signature(e.left, s, sig) + _eval_signature(e.right, s, sig)
    if isinstance(e, Sub):
        return _eval_signature(e.left, s, sig) - _eval_signature(e.right, s, sig)
    if isinstance(e, Mul):
        return _eval_signature(e.left, s, sig) * _eval_signature(e.right, s, sig)
    if isinstance(e, Div):
        den = _eval_signature(e.right, s, sig)
        if den == 0.0:
            raise DomainError("division by zero in payoff")
        return _eval_signature(e.left, s, sig) / den
    if isinstance(e, Neg):
        return -_eval_signature(e.operand, s, sig)
    if isinstance(e, PowConst):
        return math.pow(_eval_signature(e.base, s, sig), e.exponent)
    raise TypeError(f"not a payoff node: {e!r}")


# ---------------------------------------------------------------------------
# probes

_PROBE_LO = 0.5
_PROBE_HI = 2.0
_FD_STEP = 1e-5
_JITTER_TRIES = 8


def _halton_block(n: int, dim: int) -> np.ndarray:
    """Deterministic quasi-random points in (0,1)^dim (unscrambled Halton)."""
    sampler = qmc.Halton(d=dim, scramble=False)
    pts = sampler.random(n + 1)
    # drop the degenerate first element of the sequence (the origin)
    pts = pts[~np.all(pts == 0.0, axis=1)][:n]
    return pts


def _log_probe_points(
    n: int, dim: int, lo: float, hi: float, center=None
) -> np.ndarray:
    """Quasi-random log-coordinates in [ln lo, ln hi]^dim, shifted so the box
    is centered at ``center`` (defaults to s = 1) in asset space."""
    u = _halton_block(n, dim)
    pts = math.log(lo) + u * (math.log(hi) - math.log(lo))
    if center is not None:
        c = np.asarray(center, dtype=float)
        if c.shape != (dim,) or np.any(c <= 0):
            raise ValueError("probe center must be a positive vector of length dim")
        pts = pts + np.log(c)[None, :]
    return pts


def _probe_points_with_corners(
    n: int, dim: int, lo: float, hi: float, center=None
) -> np.ndarray:
    """Halton points plus box corners; payoffs that are flat over the bulk of
    the box (distant strikes) usually respond at its extremes."""
    pts = _log_probe_points(n, dim, lo, hi, center)
    if dim <= 6:
        grids = np.meshgrid(*([np.array([math.log(lo), math.log(hi)])] * dim),
                            indexing="ij")
        corners = np.column_stack([g.ravel() for g in grids])
    else:
        # too many corners to enumerate: alternate extreme patterns
        base = np.array([math.log(lo), math.log(hi)])
        idx = np.arange(64)[:, None] >> np.arange(dim)[None, :]
        corners = base[(idx & 1).astype(int)]
    if center is not None:
        corners = corners + np.log(np.asarray(center, dtype=float))[None, :]
    return np.vstack([pts, corners])


def check_homogeneity(
    expr: PayoffExpr, dim: Optional[int] = None, tol: float = 1e-9, center=None
) -> bool:
    """Numeric probe for positive homogeneity of degree one.

    Tests P(a*s) == a*P(s) for a in {0.5, 2, 3.7} at 64 quasi-random points.
    ``center`` recenters the probe box (default s = 1) for payoffs whose
    structure lives far from unity.
    """
    if dim is None:
        dim = max(max_symbol_index(expr) + 1, 1)
    pts = np.exp(_probe_points_with_corners(64, dim, _PROBE_LO, _PROBE_HI, center)).T
    base = np.asarray(eval_payoff(expr, pts), dtype=float)
    scale = float(np.max(np.abs(base))) if base.size else 0.0
    for a in (0.5, 2.0, 3.7):
        scaled = np.asarray(eval_payoff(expr, a * pts), dtype=float)
        diff = np.abs(scaled - a * base)
        denom = np.maximum(np.abs(scaled), np.abs(a * base))
        ok = (diff <= tol * denom) | (diff <= 1e-14 * max(scale, 1e-300))
        if not np.all(ok):
            return False
    return True


@dataclass(frozen=True)
class GroupStructure:
    """A detected multiplicative group: payoff depends on the group only
    through z = prod_i S_i^alpha_i."""

    group: tuple
    alphas: tuple
    residual: PayoffExpr
    probe_residual: float


def _gradient_at(expr, x_log: np.ndarray, candidate, h: float):
    """Central-difference gradient of P(exp(x)) on the candidate coordinates.

    Returns None if any probe pair straddles a max/min kink.
    """
    grad = np.zeros(len(candidate))
    ref_sig: list = []
    _eval_signature(expr, np.exp(x_log), ref_sig)
    for m, c in enumerate(candidate):
        sig_p: list = []
        sig_m: list = []
        xp = x_log.copy()
        xp[c] += h
        xm = x_log.copy()
        xm[c] -= h
        fp = _eval_signature(expr, np.exp(xp), sig_p)
        fm = _eval_signature(expr, np.exp(xm), sig_m)
        if sig_p != sig_m:
            return None
        grad[m] = (fp - fm) / (2.0 * h)
    return grad


def _snap_exponent(x: float) -> float:
    frac = Fraction(x).limit_denominator(12)
    if abs(x - float(frac)) <= 1e-5:
        return float(frac)
    return x


def _orthogonal_basis(alpha: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of alpha, shape (k, k-1)."""
    from scipy.linalg import null_space

    return null_space(alpha[None, :])


def _invariance_deviation(expr, group, alphas, pts_log: np.ndarray, dim: int) -> float:
    """Max relative change of P along directions orthogonal to alpha in log space."""
    alpha = np.asarray(alphas, dtype=float)
    basis = _orthogonal_basis(alpha)
    base_s = np.exp(pts_log).T  # (dim, n)
    f0 = np.asarray(eval_payoff(expr, base_s), dtype=float)
    fscale = max(float(np.max(np.abs(f0))), 1e-300) if f0.size else 1e-300
    worst = 0.0
    for j in range(basis.shape[1]):
        v = basis[:, j]
        for delta in (0.37, -0.37):
            shifted = pts_log.copy()
            shifted[:, list(group)] += delta * v
            f1 = np.asarray(eval_payoff(expr, np.exp(shifted).T), dtype=float)
            diff = np.abs(f1 - f0)
            denom = np.maximum(np.maximum(np.abs(f0), np.abs(f1)), 1e-14 * fscale)
            worst = max(worst, float(np.max(diff / denom)))
    return worst


def detect_group_structure(
    expr: PayoffExpr,
    candidate: Sequence[int],
    tol: float = 1e-9,
    probe_lo: float = _PROBE_LO,
    probe_hi: float = _PROBE_HI,
    center=None,
) -> Optional[GroupStructure]:
    """Probe whether the payoff depends on the candidate assets only through
    z = prod S_i^alpha_i, estimating alpha from the log-space gradient.

    The gradient is taken at the first probe point with usable slope
    (jittered away from max/min kinks, up to 8 tries); alpha is validated by
    checking invariance along alpha-orthogonal log directions at 64
    quasi-random points.  ``center`` recenters the probe box at given asset
    levels.  Returns None when validation fails or when the payoff is flat
    over the whole probe box (structure cannot be certified from a flat
    sample); raises NonDifferentiableKink when every usable reference point
    straddles a kink.
    """
    group = tuple(sorted(int(c) for c in candidate))
    if len(group) < 2:
        raise ValueError("candidate group needs at least 2 indices")
    if len(set(group)) != len(group):
        raise ValueError("candidate indices must be distinct")
    dim = max(max_symbol_index(expr) + 1, group[-1] + 1)
    pts_log = _probe_points_with_corners(64, dim, probe_lo, probe_hi, center)

    grad = None
    kink_tries = 0
    for idx in range(pts_log.shape[0]):
        try:
            g = _gradient_at(expr, pts_log[idx].copy(), group, _FD_STEP)
        except DomainError:
            continue
        if g is None:
            kink_tries += 1
            continue
        if np.max(np.abs(g)) > 1e-12:
            grad = g
            break
    if grad is None:
        if kink_tries >= _JITTER_TRIES:
            raise NonDifferentiableKink(
                "gradient probes straddle a max/min kink at every retried "
                "reference point"
            )
        # flat over the sampled box: cannot certify any exponent direction
        return None

    raw = grad / float(np.max(np.abs(grad)))
    raw[np.abs(raw) < 1e-6] = 0.0
    j0 = int(np.flatnonzero(raw)[0])
    alphas = raw / raw[j0]
    alphas = np.array([_snap_exponent(a) for a in alphas])

    deviation = _invariance_deviation(expr, group, alphas, pts_log, dim)
    if deviation > tol:
        return None
    residual = _substitute_group(expr, group, tuple(alphas))
    res_dev = _rewrite_deviation(expr, residual, group, tuple(alphas), pts_log)
    if res_dev > max(tol, 1e-9):
        return None
    return GroupStructure(group, tuple(float(a) for a in alphas),
                          residual, max(deviation, res_dev))


def _rewrite_deviation(expr, residual, group, alphas, pts_log) -> float:
    """Max relative error of F(z(s), s_rest) against P(s) on the probe points."""
    dim = pts_log.shape[1]
    s = np.exp(pts_log).T  # (dim, n)
    z = np.prod(s[list(group)] ** np.asarray(alphas)[:, None], axis=0)
    rest = [i for i in range(dim) if i not in group]
    reduced = np.vstack([z[None, :]] + [s[i][None, :] for i in rest])
    f_orig = np.asarray(eval_payoff(expr, s), dtype=float)
    if max_symbol_index(residual) >= reduced.shape[0]:
        return math.inf
    f_red = np.asarray(eval_payoff(residual, reduced), dtype=float)
    diff = np.abs(f_red - f_orig)
    scale = max(float(np.max(np.abs(f_orig))), 1e-300)
    denom = np.maximum(np.maximum(np.abs(f_orig), np.abs(f_red)), 1e-14 * scale)
    return float(np.max(diff / denom))


# ---------------------------------------------------------------------------
# rewriting


def _simplify(e: PayoffExpr) -> PayoffExpr:
    if isinstance(e, (Const, Symbol)):
        return e
    if isinstance(e, Add):
        l, r = _simplify(e.left), _simplify(e.right)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(l.value + r.value)
        if isinstance(l, Const) and l.value == 0.0:
            return r
        if isinstance(r, Const) and r.value == 0.0:
            return l
        return Add(l, r)
    if isinstance(e, Sub):
        l, r = _simplify(e.left), _simplify(e.right)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(l.value - r.value)
        if isinstance(r, Const) and r.value == 0.0:
            return l
        return Sub(l, r)
    if isinstance(e, Mul):
        l, r = _simplify(e.left), _simplify(e.right)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(l.value * r.value)
        if isinstance(l, Const) and l.value == 1.0:
            return r
        if isinstance(r, Const) and r.value == 1.0:
            return l
        return Mul(l, r)
    if isinstance(e, Div):
        l, r = _simplify(e.left), _simplify(e.right)
        if isinstance(r, Const) and r.value == 1.0:
            return l
        if isinstance(l, Const) and isinstance(r, Const) and r.value != 0.0:
            return Const(l.value / r.value)
        return Div(l, r)
    if isinstance(e, Neg):
        o = _simplify(e.operand)
        if isinstance(o, Const):
            return Const(-o.value)
        if isinstance(o, Neg):
            return o.operand
        return Neg(o)
    if isinstance(e, PowConst):
        b = _simplify(e.base)
        if e.exponent == 1.0:
            return b
        if e.exponent == 0.0:
            return Const(1.0)
        if isinstance(b, Const) and (b.value > 0 or e.exponent == int(e.exponent)):
            return Const(math.pow(b.value, e.exponent))
        if isinstance(b, PowConst) and isinstance(b.base, Symbol):
            # symbols are positive, so (S^a)^b == S^(a b)
            merged = b.exponent * e.exponent
            return b.base if merged == 1.0 else PowConst(b.base, merged)
        return PowConst(b, e.exponent)
    if isinstance(e, Max):
        return Max(tuple(_simplify(a) for a in e.args))
    if isinstance(e, Min):
        return Min(tuple(_simplify(a) for a in e.args))
    raise TypeError(f"not a payoff node: {e!r}")


def substitute_symbols(expr: PayoffExpr, mapping: dict) -> PayoffExpr:
    """Replace every Symbol(i) by mapping[i] (a PayoffExpr) and simplify."""

    def sub(e):
        if isinstance(e, Symbol):
            try:
                return mapping[e.index]
            except KeyError:
                raise KeyError(f"no substitution for S{e.index}") from None
        if isinstance(e, Const):
            return e
        if isinstance(e, Add):
            return Add(sub(e.left), sub(e.right))
        if isinstance(e, Sub):
            return Sub(sub(e.left), sub(e.right))
        if isinstance(e, Mul):
            return Mul(sub(e.left), sub(e.right))
        if isinstance(e, Div):
            return Div(sub(e.left), sub(e.right))
        if isinstance(e, Neg):
            return Neg(sub(e.operand))
        if isinstance(e, PowConst):
            return PowConst(sub(e.base), e.exponent)
        if isinstance(e, Max):
            return Max(tuple(sub(a) for a in e.args))
        if isinstance(e, Min):
            return Min(tuple(sub(a) for a in e.args))
        raise TypeError(f"not a payoff node: {e!r}")

    return _simplify(sub(expr))


def _substitute_group(expr: PayoffExpr, group, alphas) -> PayoffExpr:
    """Build F with the group collapsed into the new first symbol.

    The section S_{j0} = z^{1/alpha_{j0}}, S_i = 1 (other group members) picks
    a representative of each level set of z; remaining symbols are renumbered
    to follow the new variable.
    """
    group = tuple(group)
    alphas = tuple(alphas)
    nz = [j for j, a in zip(group, alphas) if a != 0.0]
    if not nz:
        raise ValueError("alphas must not be all zero")
    j0 = nz[0]
    inv = 1.0 / alphas[group.index(j0)]
    dim = max(max_symbol_index(expr) + 1, group[-1] + 1)
    rest = [i for i in range(dim) if i not in group]
    mapping = {i: Symbol(k + 1) for k, i in enumerate(rest)}
    for i in group:
        mapping[i] = Const(1.0)
    mapping[j0] = Symbol(0) if inv == 1.0 else PowConst(Symbol(0), inv)
    return substitute_symbols(expr, mapping)


def rewrite_payoff(expr: PayoffExpr, transform, tol: float = 1e-9, center=None) -> PayoffExpr:
    """Rewrite the payoff in terms of the transform's product variable.

    ``transform`` needs ``group`` and ``alphas`` attributes.  Raises
    NotReducible when the payoff is not a function of the group variable.
    """
    group = tuple(transform.group)
    alphas = tuple(transform.alphas)
    dim = max(max_symbol_index(expr) + 1, group[-1] + 1)
    pts_log = _probe_points_with_corners(64, dim, _PROBE_LO, _PROBE_HI, center)
    deviation = _invariance_deviation(expr, group, alphas, pts_log, dim)
    if deviation > tol:
        raise NotReducible(
            f"payoff is not a function of the product variable (deviation {deviation:.3e})"
        )
    residual = _substitute_group(expr, group, alphas)
    res_dev = _rewrite_deviation(expr, residual, group, alphas, pts_log)
    if res_dev > max(tol, 1e-9):
        raise NotReducible(
            f"rewritten payoff fails the evaluation identity (deviation {res_dev:.3e})"
        )
    return residual
