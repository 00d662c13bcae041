"""Formal manipulation of three- and four-limit integrals of the form alpha.

A three-limit term  int^{x} int_{y}^{z}  has an outer point x in the first
upper half plane and inner cusps y, z in P^1(F0).  Outer points are exact
Moebius images of a base point (an imaginary quadratic point given by its
minimal polynomial over F0), so equality of limits is decided exactly.

Four rules act on a sum of signed terms:

    R1  int^{x} int_{g y}^{g z}            ->  int^{g^-1 x} int_y^z      (g in Gamma)
    R2  int^{x} int_y^z                    ->  int^{x} int_y^t + int^{x} int_t^z
    R3  int^{y} int_t^z - int^{x} int_t^z  ->  int_x^y int_t^z
    R4  int^{x} int_y^z                    ->  int^{Wx} int_{Wy}^{Wz},  W z = -1/(5z)

Every step checks its precondition symbolically and, optionally, that the
terms it produced match an expected list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import mpmath

from .nfq import F0Elem, format_f0, parse_f0

Mat = tuple  # (a, b, c, d) of F0Elem


class ReductionError(ValueError):
    """A script step failed; `step` is its 0-based index (None for setup)."""

    def __init__(self, msg: str, step: Optional[int] = None):
        super().__init__(msg if step is None else f"step {step}: {msg}")
        self.step = step


# ---------------------------------------------------------------------------
# matrices over F0
# ---------------------------------------------------------------------------

def mat(a, b, c, d) -> Mat:
    return tuple(F0Elem.coerce(x) for x in (a, b, c, d))


def mat_mul(m: Mat, n: Mat) -> Mat:
    a, b, c, d = m
    e, f, g, h = n
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def mat_det(m: Mat) -> F0Elem:
    return m[0] * m[3] - m[1] * m[2]


def mat_inv(m: Mat) -> Mat:
    """Inverse up to the scalar det, which Moebius action ignores."""
    a, b, c, d = m
    return (d, -b, -c, a)


IDENTITY = mat(1, 0, 0, 1)
W5 = mat(0, -1, 5, 0)


def translation(t) -> Mat:
    return mat(1, t, 0, 1)


def mat_to_json(m: Mat) -> list:
    return [[format_f0(m[0]), format_f0(m[1])], [format_f0(m[2]), format_f0(m[3])]]


def mat_from_json(rows) -> Mat:
    (a, b), (c, d) = rows
    return mat(parse_f0(a), parse_f0(b), parse_f0(c), parse_f0(d))


def mobius_num(m: Mat, z, place: str = "v1", prec: int = 113):
    """Numeric action of m on z in the upper half plane at a real place."""
    with mpmath.workprec(prec):
        a, b, c, d = (x.embed(place, prec) for x in m)
        return (a * z + b) / (c * z + d)


# ---------------------------------------------------------------------------
# Z[sqrt2] arithmetic and the character on (O/5)^*
# ---------------------------------------------------------------------------

def _round(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def o_divmod(x: F0Elem, y: F0Elem):
    q = x / y
    q = F0Elem(_round(q.a), _round(q.b))
    return q, x - q * y


def o_gcdext(x: F0Elem, y: F0Elem):
    """(g, u, v) with u x + v y = g, a gcd in Z[sqrt2]."""
    r0, r1 = x, y
    s0, s1 = F0Elem(1), F0Elem(0)
    t0, t1 = F0Elem(0), F0Elem(1)
    while not r1.is_zero():
        q, r = o_divmod(r0, r1)
        r0, r1 = r1, r
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    return r0, s0, t0


def _divisible_by_5(x: F0Elem) -> bool:
    return (x / 5).is_integral()


def psi_mod5(x: F0Elem) -> int:
    """Quadratic character of (O/5)^* = F_25^*: +1 on squares, -1 otherwise."""
    if not x.is_integral():
        raise ValueError("psi_mod5 needs an integral argument")
    a, b = int(x.a) % 5, int(x.b) % 5
    if a == 0 and b == 0:
        return 0
    # (a + b s)^12 in F_5[s]/(s^2 - 2)
    ra, rb = 1, 0
    pa, pb = a, b
    k = 12
    while k:
        if k & 1:
            ra, rb = (ra * pa + 2 * rb * pb) % 5, (ra * pb + rb * pa) % 5
        pa, pb = (pa * pa + 2 * pb * pb) % 5, (2 * pa * pb) % 5
        k >>= 1
    return 1 if (ra, rb) == (1, 0) else -1


def is_unit(x: F0Elem) -> bool:
    return x.is_integral() and abs(x.norm()) == 1


@dataclass(frozen=True)
class Membership:
    ok: bool
    reasons: tuple

    def __bool__(self):
        return self.ok


def check_gamma_membership(g: Mat, level: int = 5) -> Membership:
    """Is g in the group fixing alpha: integral, det a totally positive unit,
    lower left entry divisible by the level, psi(upper left) = 1."""
    reasons = []
    if not all(x.is_integral() for x in g):
        reasons.append("entries not integral")
    det = mat_det(g)
    if not is_unit(det):
        reasons.append(f"det {format_f0(det)} is not a unit")
    elif not det.is_totally_positive():
        reasons.append(f"det {format_f0(det)} is not totally positive")
    if g[2].is_integral() and not (g[2] / level).is_integral():
        reasons.append(f"lower left {format_f0(g[2])} not divisible by {level}")
    if g[0].is_integral() and psi_mod5(g[0]) != 1:
        reasons.append("psi of the upper left entry is not 1")
    return Membership(not reasons, tuple(reasons))


# ---------------------------------------------------------------------------
# cusps and formal limits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cusp:
    """A point of P^1(F0); value None is infinity."""
    value: Optional[F0Elem]

    @staticmethod
    def parse(s) -> "Cusp":
        if isinstance(s, Cusp):
            return s
        if s is None or (isinstance(s, str) and s.strip() in ("oo", "inf", "infinity")):
            return INF
        return Cusp(F0Elem.coerce(s))

    def is_inf(self) -> bool:
        return self.value is None

    def act(self, m: Mat) -> "Cusp":
        a, b, c, d = m
        if self.value is None:
            num, den = a, c
        else:
            num, den = a * self.value + b, c * self.value + d
        if den.is_zero():
            return INF
        return Cusp(num / den)

    def key(self):
        if self.value is None:
            return (1, 0, 0)
        return (0, self.value.a, self.value.b)

    def embed(self, place: str = "v2", prec: int = 113):
        return None if self.value is None else self.value.embed(place, prec)

    def __str__(self):
        return "oo" if self.value is None else format_f0(self.value)


INF = Cusp(None)
ZERO_CUSP = Cusp(F0Elem(0))


@dataclass(frozen=True)
class BasePoint:
    """Root with positive imaginary part (at v1) of poly[0] z^2 + poly[1] z + poly[2]."""
    name: str
    poly: tuple

    def __post_init__(self):
        A, B, C = (F0Elem.coerce(x) for x in self.poly)
        object.__setattr__(self, "poly", (A, B, C))
        disc = B * B - 4 * A * C
        if disc.sign("v1") >= 0:
            raise ValueError("base point polynomial has no complex root at v1")

    def value(self, prec: int = 113):
        with mpmath.workprec(prec):
            A, B, C = (x.embed("v1", prec) for x in self.poly)
            r = (-B + mpmath.sqrt(mpmath.mpc(B * B - 4 * A * C))) / (2 * A)
            return r if r.imag > 0 else mpmath.conj(r)

    def fixed_by(self, m: Mat) -> bool:
        a, b, c, d = m
        A, B, C = self.poly
        u, v, w = c, d - a, -b
        return (u * B - v * A).is_zero() and (u * C - w * A).is_zero() and (v * C - w * B).is_zero()

    def to_json(self):
        return {"name": self.name, "poly": [format_f0(x) for x in self.poly]}

    @staticmethod
    def from_json(o) -> "BasePoint":
        return BasePoint(o["name"], tuple(parse_f0(x) for x in o["poly"]))


@dataclass(frozen=True)
class FormalLimit:
    """matrix . base, where base is a BasePoint or a Cusp."""
    matrix: Mat
    base: Union[BasePoint, Cusp]

    def __post_init__(self):
        if isinstance(self.base, Cusp):
            object.__setattr__(self, "base", self.base.act(self.matrix))
            object.__setattr__(self, "matrix", IDENTITY)

    def apply(self, g: Mat) -> "FormalLimit":
        return FormalLimit(mat_mul(g, self.matrix), self.base)

    def same(self, o: "FormalLimit") -> bool:
        if isinstance(self.base, Cusp) or isinstance(o.base, Cusp):
            return self.base == o.base
        if self.base != o.base:
            return False
        return self.base.fixed_by(mat_mul(mat_inv(o.matrix), self.matrix))

    def value(self, prec: int = 113, base_value=None):
        if isinstance(self.base, Cusp):
            raise ReductionError("an outer limit at a cusp has no finite value")
        z = self.base.value(prec) if base_value is None else base_value
        return mobius_num(self.matrix, z, "v1", prec)

    def __str__(self):
        if isinstance(self.base, Cusp):
            return str(self.base)
        if self.matrix == IDENTITY:
            return self.base.name
        return f"{mat_to_json(self.matrix)}.{self.base.name}"

    def to_json(self):
        if isinstance(self.base, Cusp):
            return {"cusp": str(self.base)}
        return {"matrix": mat_to_json(self.matrix), "base": self.base.name}

    @staticmethod
    def from_json(o, base: BasePoint) -> "FormalLimit":
        if "cusp" in o:
            return FormalLimit(IDENTITY, Cusp.parse(o["cusp"]))
        if o.get("base", base.name) != base.name:
            raise ReductionError(f"unknown base point {o['base']!r}")
        return FormalLimit(mat_from_json(o["matrix"]), base)


# ---------------------------------------------------------------------------
# terms and sums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThreeLimit:
    outer: FormalLimit
    lo: Cusp
    hi: Cusp

    def transform(self, g: Mat) -> "ThreeLimit":
        return ThreeLimit(self.outer.apply(g), self.lo.act(g), self.hi.act(g))

    def with_inner(self, lo, hi):
        return ThreeLimit(self.outer, lo, hi)

    def same(self, o) -> bool:
        return isinstance(o, ThreeLimit) and self.lo == o.lo and self.hi == o.hi and self.outer.same(o.outer)

    def is_zero(self) -> bool:
        return self.lo == self.hi

    def __str__(self):
        return f"int^{{{self.outer}}} int_{{{self.lo}}}^{{{self.hi}}}"

    def to_json(self):
        return {"outer": self.outer.to_json(), "inner": [str(self.lo), str(self.hi)]}


@dataclass(frozen=True)
class FourLimit:
    outer_from: FormalLimit
    outer_to: FormalLimit
    lo: Cusp
    hi: Cusp

    def transform(self, g: Mat) -> "FourLimit":
        return FourLimit(self.outer_from.apply(g), self.outer_to.apply(g), self.lo.act(g), self.hi.act(g))

    def with_inner(self, lo, hi):
        return FourLimit(self.outer_from, self.outer_to, lo, hi)

    def same(self, o) -> bool:
        return (isinstance(o, FourLimit) and self.lo == o.lo and self.hi == o.hi
                and self.outer_from.same(o.outer_from) and self.outer_to.same(o.outer_to))

    def is_zero(self) -> bool:
        return self.lo == self.hi or self.outer_from.same(self.outer_to)

    def __str__(self):
        return f"int_{{{self.outer_from}}}^{{{self.outer_to}}} int_{{{self.lo}}}^{{{self.hi}}}"

    def to_json(self):
        return {"outer": [self.outer_from.to_json(), self.outer_to.to_json()],
                "inner": [str(self.lo), str(self.hi)]}


Term = Union[ThreeLimit, FourLimit]


def term_from_json(o, base: BasePoint) -> Term:
    lo, hi = (Cusp.parse(s) for s in o["inner"])
    if isinstance(o["outer"], list):
        a, b = (FormalLimit.from_json(x, base) for x in o["outer"])
        return FourLimit(a, b, lo, hi)
    return ThreeLimit(FormalLimit.from_json(o["outer"], base), lo, hi)


def normalize(terms: Sequence[tuple]) -> list:
    """Orient inner limits so the smaller cusp comes first (infinity last) and drop zero terms."""
    out = []
    for s, t in terms:
        if t.lo.key() > t.hi.key():
            s, t = -s, t.with_inner(t.hi, t.lo)
        if not t.is_zero():
            out.append((s, t))
    return out


def sums_equal(a: Sequence[tuple], b: Sequence[tuple]) -> bool:
    """Equality as multisets of signed terms."""
    a, b = normalize(a), normalize(b)
    if len(a) != len(b):
        return False
    used = [False] * len(b)
    for s, t in a:
        for k, (s2, t2) in enumerate(b):
            if not used[k] and s == s2 and t.same(t2):
                used[k] = True
                break
        else:
            return False
    return True


def format_sum(terms: Sequence[tuple]) -> str:
    if not terms:
        return "0"
    return " ".join(("+ " if s > 0 else "- ") + str(t) for s, t in terms)


# ---------------------------------------------------------------------------
# steps and scripts
# ---------------------------------------------------------------------------

@dataclass
class Step:
    rule: str                       # R1 | R2 | R3 | R4
    term: int
    term2: Optional[int] = None     # R3 partner
    matrix: Optional[Mat] = None    # R1
    split: Optional[Cusp] = None    # R2
    expect: Optional[list] = None   # signed terms produced by the step
    note: str = ""

    def to_json(self):
        o = {"rule": self.rule, "term": self.term}
        if self.term2 is not None:
            o["term2"] = self.term2
        if self.matrix is not None:
            o["matrix"] = mat_to_json(self.matrix)
        if self.split is not None:
            o["split"] = str(self.split)
        if self.expect is not None:
            o["expect"] = [{"sign": s, **t.to_json()} for s, t in self.expect]
        if self.note:
            o["note"] = self.note
        return o

    @staticmethod
    def from_json(o, base: BasePoint) -> "Step":
        split = o.get("split")
        if isinstance(split, dict):
            raise ReductionError("inner split points must be cusps")
        return Step(
            rule=o["rule"], term=int(o["term"]),
            term2=o.get("term2"),
            matrix=mat_from_json(o["matrix"]) if "matrix" in o else None,
            split=Cusp.parse(split) if split is not None else None,
            expect=[(int(e["sign"]), term_from_json(e, base)) for e in o["expect"]] if "expect" in o else None,
            note=o.get("note", ""),
        )


def _get(terms, i, k):
    if not 0 <= i < len(terms):
        raise ReductionError(f"term index {i} out of range (sum has {len(terms)} terms)", k)
    return terms[i]


def apply_step(terms: Sequence[tuple], step: Step, k: Optional[int] = None):
    """Apply one rule; returns (new sum, indices of produced terms, applied map or None)."""
    terms = list(terms)
    i = step.term
    s, t = _get(terms, i, k)
    g = None
    if step.rule == "R1":
        if step.matrix is None:
            raise ReductionError("R1 needs a matrix", k)
        mem = check_gamma_membership(step.matrix)
        if not mem:
            raise ReductionError(f"R1 matrix not in Gamma: {'; '.join(mem.reasons)}", k)
        g = mat_inv(step.matrix)
        new = [(s, t.transform(g))]
        terms[i:i + 1] = new
        produced = [i]
    elif step.rule == "R4":
        g = W5
        terms[i] = (s, t.transform(W5))
        produced = [i]
    elif step.rule == "R2":
        if step.split is None:
            raise ReductionError("R2 needs a split cusp", k)
        terms[i:i + 1] = [(s, t.with_inner(t.lo, step.split)), (s, t.with_inner(step.split, t.hi))]
        produced = [i, i + 1]
    elif step.rule == "R3":
        if step.term2 is None:
            raise ReductionError("R3 needs two terms", k)
        j = step.term2
        s2, t2 = _get(terms, j, k)
        if i == j:
            raise ReductionError("R3 needs two distinct terms", k)
        if not (isinstance(t, ThreeLimit) and isinstance(t2, ThreeLimit)):
            raise ReductionError("R3 applies to two three-limit terms", k)
        if not (t.lo == t2.lo and t.hi == t2.hi):
            raise ReductionError(f"R3 inner limits differ: {t} vs {t2}", k)
        if s != -s2:
            raise ReductionError("R3 needs terms of opposite sign", k)
        merged = (s, FourLimit(t2.outer, t.outer, t.lo, t.hi))
        lo_i, hi_i = min(i, j), max(i, j)
        del terms[hi_i]
        terms[lo_i] = merged
        produced = [lo_i]
    else:
        raise ReductionError(f"unknown rule {step.rule!r}", k)
    # orientation and zero terms; keep track of where produced terms land
    kept, remap = [], {}
    for idx, (sg, tm) in enumerate(terms):
        (res,) = normalize([(sg, tm)]) or [None]
        if res is not None:
            remap[idx] = len(kept)
            kept.append(res)
    produced = [remap[p] for p in produced if p in remap]
    if step.expect is not None:
        got = [kept[p] for p in produced]
        if not sums_equal(got, step.expect):
            raise ReductionError(
                f"{step.rule} produced {format_sum(got)}, expected {format_sum(normalize(step.expect))}", k)
    return kept, produced, g


@dataclass
class Script:
    base: BasePoint
    start: list                  # signed terms
    steps: list
    target: Optional[list] = None

    def run(self, record: bool = True):
        """Apply all steps; returns the list of states (start, after step 0, ...)."""
        state = normalize(self.start)
        states = [state]
        for k, st in enumerate(self.steps):
            state, _, _ = apply_step(state, st, k)
            if record:
                states.append(state)
        if not record:
            states.append(state)
        if self.target is not None and not sums_equal(state, self.target):
            raise ReductionError(f"final sum {format_sum(state)} differs from target {format_sum(self.target)}")
        return states

    def final(self) -> list:
        return self.run(record=False)[-1]

    def to_json(self) -> dict:
        o = {"base_point": self.base.to_json(),
             "start": [{"sign": s, **t.to_json()} for s, t in self.start],
             "steps": [st.to_json() for st in self.steps]}
        if self.target is not None:
            o["target"] = [{"sign": s, **t.to_json()} for s, t in self.target]
        return o

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @staticmethod
    def from_json(o) -> "Script":
        base = BasePoint.from_json(o["base_point"])
        signed = lambda xs: [(int(e["sign"]), term_from_json(e, base)) for e in xs]
        return Script(base, signed(o["start"]), [Step.from_json(s, base) for s in o["steps"]],
                      signed(o["target"]) if "target" in o else None)


# ---------------------------------------------------------------------------
# the worked example
# ---------------------------------------------------------------------------

EX_G = mat("4*sqrt2+11", "-3*sqrt2+5", "10", "-6*sqrt2+9")
EX_H = mat("-15*sqrt2+21", "-sqrt2-1", "-35*sqrt2+50", "1")
EX_GAMMA_PHI = mat("-27*sqrt2+37", "20*sqrt2-28", "-50*sqrt2+70", "37*sqrt2-53")
EX_Z1 = BasePoint("z1", (F0Elem(5), parse_f0("sqrt2-5"), F0Elem(2)))


def builtin_example_script() -> Script:
    """Reduce int^{z1} int_oo^{gamma_phi oo} to two four-limit terms with inner limits 0, oo."""
    z1 = FormalLimit(IDENTITY, EX_Z1)
    c = Cusp.parse
    gphi_inf = INF.act(EX_GAMMA_PHI)
    g0 = ZERO_CUSP.act(EX_G)                       # 1 + sqrt2/3
    w = z1.apply(translation(-1)).apply(W5)        # -1/(5(z1 - 1))
    h_w = w.apply(mat_inv(EX_H))
    t_w = w.apply(translation(parse_f0("sqrt2+1")))
    wg = z1.apply(mat_inv(EX_G)).apply(W5)
    s3 = lambda x, lo, hi, s=1: (s, ThreeLimit(x, c(lo), c(hi)))
    # indices refer to the normalised sums, where inner limits run from the smaller cusp
    steps = [
        Step("R2", 0, split=g0, note="split at G.0"),
        Step("R1", 0, matrix=EX_G, expect=[s3(z1.apply(mat_inv(EX_G)), "0", "oo")]),
        Step("R1", 1, matrix=translation(1),
             expect=[s3(z1.apply(translation(-1)), "oo", g0.value - 1)]),
        Step("R4", 1, expect=[s3(w, "0", parse_f0("-3/10*sqrt2"))]),
        Step("R2", 1, split=ZERO_CUSP.act(EX_H), note="split at H.0"),
        Step("R1", 1, matrix=EX_H, expect=[s3(h_w, "0", "oo")]),
        Step("R2", 2, split=INF),
        Step("R1", 2, matrix=translation(parse_f0("-sqrt2-1")), expect=[s3(t_w, "0", "oo", -1)]),
        Step("R3", 3, term2=2, expect=[(1, FourLimit(t_w, w, ZERO_CUSP, INF))]),
        Step("R4", 0, expect=[s3(wg, "0", "oo", -1)]),
        Step("R3", 1, term2=0, expect=[(1, FourLimit(wg, h_w, ZERO_CUSP, INF))]),
    ]
    target = [(1, FourLimit(t_w, w, ZERO_CUSP, INF)), (1, FourLimit(wg, h_w, ZERO_CUSP, INF))]
    start = [(1, ThreeLimit(z1, INF, gphi_inf))]
    return Script(EX_Z1, start, steps, target)


# ---------------------------------------------------------------------------
# numerical evaluation
# ---------------------------------------------------------------------------

class NotEvaluable(ReductionError):
    pass


def _outer(x: FormalLimit, prec: int):
    return x.value(prec)


def term_jobs(sign: int, term: Term, prec: int = 113, base_point=None) -> list:
    """Signed integration jobs for one term.

    Four-limit terms with inner limits {0, oo} use the cusp split.  Other
    inner cusps go through cusp_route.  A three-limit term needs base_point,
    a numeric point b of the upper half plane, and is read as int_b^x.
    """
    from .hmfexp import cusp_split
    if isinstance(term, ThreeLimit):
        if base_point is None:
            raise NotEvaluable(f"three-limit term {term} needs a base point")
        x1, x2 = mpmath.mpc(base_point), _outer(term.outer, prec)
    else:
        x1, x2 = _outer(term.outer_from, prec), _outer(term.outer_to, prec)
    if (term.lo, term.hi) == (ZERO_CUSP, INF):
        return [(sign * s, a, b, c, d) for s, a, b, c, d in cusp_split(x1, x2)]
    return [(sign * s, a, b, c, d) for s, a, b, c, d in cusp_route(x1, x2, term.lo, term.hi, prec)]


def cusp_to_infinity(q: Cusp):
    """(g, chi) with g . oo = q and alpha o g = chi * alpha.

    g is in Gamma_0(5) when the denominator of q is divisible by 5, and
    W composed with such a matrix otherwise.
    """
    if q.is_inf():
        return IDENTITY, 1
    x = q.value
    d = math.lcm(x.a.denominator, x.b.denominator)
    P, R = x * d, F0Elem(d)
    gg, _, _ = o_gcdext(P, R)
    p, r = P / gg, R / gg

    def lift(num, den):
        # [[num, u], [den, v]] with num v - u den = 1
        g, s, t = o_gcdext(num, den)
        # s num + t den = g, a unit
        ginv = g.inverse()
        return mat(num, -t * ginv, den, s * ginv)

    if _divisible_by_5(r):
        m = lift(p, r)
        return m, psi_mod5(m[3])
    m = lift(-r, 5 * p)
    return mat_mul(W5, m), psi_mod5(m[3])


def _anchor_height(g: Mat, prec: int):
    """Y for which tau = g(iY) and iY both sit as high as possible (at v2)."""
    a, b, c, d = (x.embed("v2", prec) for x in g)
    det = a * d - b * c
    if det - d * d > 0:
        return mpmath.sqrt(det - d * d) / abs(c)
    return abs(d / c)


def cusp_route(x1, x2, q1: Cusp, q2: Cusp, prec: int = 113) -> list:
    """int_{x1}^{x2} int_{q1}^{q2} as signed jobs with every finite limit in H.

    int_{q1}^{q2} = -int_{tau1}^{q1} + int_{tau1}^{tau2} + int_{tau2}^{q2}, and
    int^{x} int_{tau}^{q} = chi int^{g^-1 x} int_{iY}^{oo} for g . oo = q,
    g . iY = tau (inner variable acted on at v2, outer at v1).
    """
    jobs = []
    anchors = []
    with mpmath.workprec(prec):
        for q, sgn in ((q1, -1), (q2, 1)):
            if q.is_inf():
                anchors.append(None)
                continue
            g, chi = cusp_to_infinity(q)
            Y = _anchor_height(g, prec)
            iy = mpmath.mpc(0, Y)
            tau = mobius_num(g, iy, "v2", prec)
            gi = mat_inv(g)
            jobs.append((sgn * chi, mobius_num(gi, x1, "v1", prec), mobius_num(gi, x2, "v1", prec), iy, None))
            anchors.append(tau)
        if anchors[0] is not None or anchors[1] is not None:
            jobs.append((1, x1, x2, anchors[0], anchors[1]))
    return jobs


def sum_jobs(terms: Sequence[tuple], prec: int = 113, base_point=None) -> list:
    jobs = []
    with mpmath.workprec(prec):
        for s, t in terms:
            jobs.extend(term_jobs(s, t, prec, base_point))
    return jobs


def evaluate_sum(terms, eigen, norm_bound: int, forms, prec: int = 113, base_point=None, **kw):
    """Numerical value of a signed sum of terms (an IntegralResult)."""
    from .hmfexp import integrate_jobs
    total, _ = integrate_jobs(eigen, sum_jobs(terms, prec, base_point), norm_bound, forms, prec=prec, **kw)
    return total


# ---------------------------------------------------------------------------
# prefix evaluation
# ---------------------------------------------------------------------------

def descendant_atoms(script: Script, k: int) -> list:
    """Signed terms whose sum represents the state after k steps.

    Each term of that state is carried through the remaining steps by
    itself; an R3 merge keeps the two three-limit pieces apart, so the
    state becomes a sum of terms each of which is either a four-limit term
    or a three-limit term with inner limits {0, oo}.
    """
    states = script.run()
    bundles = [[(s, t)] for s, t in states[k]]
    state = states[k]
    for idx in range(k, len(script.steps)):
        st = script.steps[idx]
        new_state, produced, g = apply_step(state, st, idx)
        # rebuild bundles by position: the rule touched `term` (and `term2`)
        i = st.term
        if st.rule in ("R1", "R4"):
            nb = [(s, t.transform(g)) for s, t in bundles[i]]
            bundles = bundles[:i] + [normalize(nb)] + bundles[i + 1:]
        elif st.rule == "R2":
            left = [(s, t.with_inner(t.lo, st.split)) for s, t in bundles[i]]
            right = [(s, t.with_inner(st.split, t.hi)) for s, t in bundles[i]]
            bundles = bundles[:i] + [normalize(left), normalize(right)] + bundles[i + 1:]
        elif st.rule == "R3":
            j = st.term2
            lo, hi = min(i, j), max(i, j)
            merged = bundles[i] + bundles[j]
            bundles = [b for n, b in enumerate(bundles) if n != hi]
            bundles[lo] = merged
        # drop the bundles of terms that normalisation removed
        before = _positions_after(state, st)
        bundles = [bundles[p] for p in before]
        state = new_state
    return [a for b in bundles for a in b]


def _positions_after(state, st: Step) -> list:
    """Indices of the pre-normalisation term list that survive normalisation."""
    terms = list(state)
    i = st.term
    s, t = terms[i]
    if st.rule == "R1":
        terms[i] = (s, t.transform(mat_inv(st.matrix)))
    elif st.rule == "R4":
        terms[i] = (s, t.transform(W5))
    elif st.rule == "R2":
        terms[i:i + 1] = [(s, t.with_inner(t.lo, st.split)), (s, t.with_inner(st.split, t.hi))]
    elif st.rule == "R3":
        j = st.term2
        s2, t2 = terms[j]
        lo, hi = min(i, j), max(i, j)
        del terms[hi]
        terms[lo] = (s, FourLimit(t2.outer, t.outer, t.lo, t.hi))
    return [n for n, (sg, tm) in enumerate(terms) if normalize([(sg, tm)])]


@dataclass
class PrefixReport:
    values: list                  # mpc per prefix (state after k steps)
    bounds: list                  # truncation bounds
    spread: float

    def ok(self, tol: float) -> bool:
        return self.spread <= tol


def evaluate_prefixes(script: Script, eigen, norm_bound: int, forms, prec: int = 64,
                      base_point=1j, **kw) -> PrefixReport:
    """Value of every intermediate state, with three-limit terms read through their descendants."""
    from .hmfexp import integrate_jobs
    per_prefix = []
    for k in range(len(script.steps) + 1):
        atoms = descendant_atoms(script, k)
        for s, t in atoms:
            if isinstance(t, ThreeLimit) and (t.lo, t.hi) != (ZERO_CUSP, INF):
                raise NotEvaluable(f"prefix {k}: descendant {t} still has inner cusps {t.lo}, {t.hi}")
        per_prefix.append(sum_jobs(atoms, prec, base_point))
    allj = [j for js in per_prefix for j in js]
    _, parts = integrate_jobs(eigen, allj, norm_bound, forms, prec=prec, **kw)
    values, bounds, pos = [], [], 0
    for js in per_prefix:
        chunk = parts[pos:pos + len(js)]
        pos += len(js)
        v = mpmath.mpc(0)
        b = 0.0
        for r in chunk:
            v += r.value
            b += r.error_bound
        values.append(v)
        bounds.append(b)
    spread = max(float(abs(v - values[-1])) for v in values)
    return PrefixReport(values, bounds, spread)


@dataclass
class TransportReport:
    """V_b(state_{k+1}) - V_b(state_k) against the defect each step predicts."""
    residuals: list
    max_residual: float


def transport_check(script: Script, eigen, norm_bound: int, forms, prec: int = 64,
                    base_point=1j, **kw) -> TransportReport:
    """Numerical test of each step with V_b(int^x int_y^z) = int_b^x int_y^z.

    R2 and R3 leave V_b unchanged.  R1 and R4 with applied map g change it by
    int_b^{g b} int_{y'}^{z'} on a three-limit term (y', z' the new inner
    limits) and leave four-limit terms unchanged.  Every state is evaluated
    with cusp_route, so general cusps are exercised.
    """
    from .hmfexp import integrate_jobs
    states = script.run()
    b = mpmath.mpc(base_point)
    groups = []
    for k, st in enumerate(script.steps):
        before = sum_jobs(states[k], prec, b)
        after = sum_jobs(states[k + 1], prec, b)
        defect = []
        if st.rule in ("R1", "R4"):
            s, t = states[k][st.term]
            if isinstance(t, ThreeLimit):
                g = mat_inv(st.matrix) if st.rule == "R1" else W5
                nt = t.transform(g)
                sg = s
                if nt.lo.key() > nt.hi.key():
                    sg, nt = -s, nt.with_inner(nt.hi, nt.lo)
                gb = mobius_num(g, b, "v1", prec)
                defect = [(sg * s2, a, bb, c, d) for s2, a, bb, c, d in
                          cusp_route(b, gb, nt.lo, nt.hi, prec)]
        groups.append((after, before, defect))
    allj = []
    for after, before, defect in groups:
        allj += after + [(-s, a, bb, c, d) for s, a, bb, c, d in before] + [(-s, a, bb, c, d) for s, a, bb, c, d in defect]
    _, parts = integrate_jobs(eigen, allj, norm_bound, forms, prec=prec, **kw)
    res, pos = [], 0
    for after, before, defect in groups:
        n = len(after) + len(before) + len(defect)
        v = mpmath.fsum([r.value for r in parts[pos:pos + n]])
        pos += n
        res.append(float(abs(v)))
    return TransportReport(res, max(res) if res else 0.0)


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def gamma_words(generators: Sequence[Mat], depth: int) -> list:
    """All products of at most `depth` generators (and inverses), deduplicated projectively."""
    gens = list(generators) + [mat_inv(g) for g in generators]
    seen = [IDENTITY]
    frontier = [IDENTITY]
    for _ in range(depth):
        nxt = []
        for m in frontier:
            for g in gens:
                p = mat_mul(m, g)
                if not any(projectively_equal(p, q) for q in seen):
                    seen.append(p)
                    nxt.append(p)
        frontier = nxt
    return seen


def projectively_equal(m: Mat, n: Mat) -> bool:
    k = next(i for i in range(4) if not n[i].is_zero())
    if m[k].is_zero():
        return False
    r = m[k] / n[k]
    return all((m[i] - r * n[i]).is_zero() for i in range(4))


def find_gamma_to(cusp_from: Cusp, cusp_to: Cusp, generators: Sequence[Mat], depth: int = 4) -> Optional[Mat]:
    """Bounded breadth-first search for g in the span of generators with g . cusp_from = cusp_to."""
    for m in gamma_words(generators, depth):
        if cusp_from.act(m) == cusp_to and check_gamma_membership(m):
            return m
    return None
