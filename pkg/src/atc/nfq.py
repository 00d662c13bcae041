"""Exact arithmetic in Q(sqrt2), its ring of integers, and two biquadratic fields.

F0Elem covers Q(sqrt2).  BiquadElem covers Q(sqrt d1, sqrt d2); the two
instances used here are the coefficient field Q(sqrt2, sqrt-3) (CoefElem) and
the curve field Q(sqrt2, sqrt5) (FElem).  SimpleFieldElem is a power-basis
element of Q[x]/(f), used for exact point checks over degree 8 fields.

Ideals of Z[sqrt2] are principal, so an IdealF0 is stored through a
generator and exposed with its Hermite normal form.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, total_ordering
from typing import Iterable

import mpmath
import sympy
from gmpy2 import mpq

Q = Fraction


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, type(mpq(0))):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


def _sign_a_plus_b_sqrt(a: Fraction, b: Fraction, d: int) -> int:
    """Exact sign of a + b*sqrt(d) for d > 0 squarefree."""
    sa = (a > 0) - (a < 0)
    sb = (b > 0) - (b < 0)
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    # opposite signs: compare a^2 with d*b^2
    c = a * a - d * b * b
    if c == 0:
        return 0
    return sa if c > 0 else sb


# ---------------------------------------------------------------------------
# Q(sqrt2)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class F0Elem:
    """a + b*sqrt2 with rational a, b."""

    a: Fraction
    b: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "a", _q(self.a))
        object.__setattr__(self, "b", _q(self.b))

    @staticmethod
    def coerce(x) -> "F0Elem":
        if isinstance(x, F0Elem):
            return x
        if isinstance(x, str):
            return parse_f0(x)
        return F0Elem(_q(x), 0)

    def __add__(self, o):
        o = F0Elem.coerce(o)
        return F0Elem(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return F0Elem(-self.a, -self.b)

    def __sub__(self, o):
        return self + (-F0Elem.coerce(o))

    def __rsub__(self, o):
        return F0Elem.coerce(o) - self

    def __mul__(self, o):
        o = F0Elem.coerce(o)
        return F0Elem(self.a * o.a + 2 * self.b * o.b, self.a * o.b + self.b * o.a)

    __rmul__ = __mul__

    def conjugate(self) -> "F0Elem":
        return F0Elem(self.a, -self.b)

    def norm(self) -> Fraction:
        return self.a * self.a - 2 * self.b * self.b

    def trace(self) -> Fraction:
        return 2 * self.a

    def inverse(self) -> "F0Elem":
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("inverse of zero in Q(sqrt2)")
        return F0Elem(self.a / n, -self.b / n)

    def __truediv__(self, o):
        return self * F0Elem.coerce(o).inverse()

    def __rtruediv__(self, o):
        return F0Elem.coerce(o) * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        r, b = F0Elem(1), self
        while k:
            if k & 1:
                r = r * b
            b = b * b
            k >>= 1
        return r

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def is_integral(self) -> bool:
        return self.a.denominator == 1 and self.b.denominator == 1

    def sign(self, place: str = "v1") -> int:
        """Exact sign of the real embedding at v1 (sqrt2 > 0) or v2 (sqrt2 < 0)."""
        b = self.b if place == "v1" else -self.b
        return _sign_a_plus_b_sqrt(self.a, b, 2)

    def is_totally_positive(self) -> bool:
        return self.sign("v1") > 0 and self.sign("v2") > 0

    def embed(self, place: str = "v1", prec: int = 53):
        return embed(self, place, prec)

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(2)

    def __str__(self):
        return format_f0(self)

    def __repr__(self):
        return f"F0Elem({format_f0(self)})"


ZERO = F0Elem(0)
ONE = F0Elem(1)
SQRT2 = F0Elem(0, 1)
FUND_UNIT = F0Elem(-1, 1)        # e = sqrt2 - 1, norm -1
EPS_TP = F0Elem(3, -2)           # e^2 = 3 - 2 sqrt2, totally positive
D0 = F0Elem(4, -2)               # totally positive generator of the different

_F0_TOKEN = re.compile(r"\s*([+-]?)\s*([0-9/]*)\s*(\*?\s*sqrt\(?2\)?)?")


def parse_f0(s: str) -> F0Elem:
    """Parse strings such as "4*sqrt2+11", "-sqrt2-1", "3/2-1/2*sqrt2"."""
    s = s.replace(" ", "").replace("√", "sqrt")
    if not s:
        raise ValueError("empty Q(sqrt2) literal")
    a, b = Fraction(0), Fraction(0)
    pos = 0
    while pos < len(s):
        m = _F0_TOKEN.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse Q(sqrt2) literal {s!r}")
        sign, num, rad = m.groups()
        if not num and not rad:
            raise ValueError(f"cannot parse Q(sqrt2) literal {s!r}")
        c = Fraction(num) if num else Fraction(1)
        if sign == "-":
            c = -c
        if rad:
            b += c
        else:
            a += c
        pos = m.end()
    return F0Elem(a, b)


def format_f0(x: F0Elem) -> str:
    parts = []
    if x.a != 0 or x.b == 0:
        parts.append(str(x.a))
    if x.b != 0:
        c = "" if abs(x.b) == 1 else f"{abs(x.b)}*"
        sgn = "-" if x.b < 0 else ("+" if parts else "")
        parts.append(f"{sgn}{c}sqrt2")
    return "".join(parts)


# ---------------------------------------------------------------------------
# biquadratic fields
# ---------------------------------------------------------------------------

_Z = mpq(0)


def _mpq(x):
    if isinstance(x, type(_Z)):
        return x
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, str):
        return mpq(x.strip())
    return mpq(x)


def _bq_table(d1: int, d2: int):
    # basis index bits: bit0 = sqrt(d1), bit1 = sqrt(d2); product of basis
    # elements i and j is scale * basis[i ^ j]
    t = [[1] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(4):
            s = 1
            if i & 1 and j & 1:
                s *= d1
            if i & 2 and j & 2:
                s *= d2
            t[i][j] = s
    return t


class _ScaleTables(dict):
    def __missing__(self, key):
        v = _bq_table(*key)
        self[key] = v
        return v


_BQ_SCALE = _ScaleTables()


class BiquadElem:
    """c0 + c1*sqrt(d1) + c2*sqrt(d2) + c3*sqrt(d1*d2) with rational coordinates.

    Subclasses fix (d1, d2).  sqrt(d1*d2) is the product of the two chosen
    roots, so for negative d2 its embedding follows the principal branch of
    sqrt(d2) times the signed sqrt(d1).
    """

    D1 = 2
    D2 = -3
    __slots__ = ("c",)

    def __init__(self, c0=0, c1=0, c2=0, c3=0):
        self.c = (_mpq(c0), _mpq(c1), _mpq(c2), _mpq(c3))

    @classmethod
    def _raw(cls, c):
        obj = cls.__new__(cls)
        obj.c = c
        return obj

    @classmethod
    def from_list(cls, xs: Iterable):
        xs = list(xs)
        if len(xs) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(xs)}")
        return cls(*xs)

    def _coerce(self, o):
        if isinstance(o, type(self)):
            return o
        if isinstance(o, F0Elem) and self.D1 == 2:
            return type(self)(o.a, o.b, 0, 0)
        if isinstance(o, (int, Fraction)):
            return type(self)(o)
        return NotImplemented

    def __add__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return o
        a, b = self.c, o.c
        return self._raw((a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]))

    __radd__ = __add__

    def __neg__(self):
        return self._raw(tuple(-x for x in self.c))

    def __sub__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return o
        d1, d2 = self.D1, self.D2
        # sparse product: many coefficients have a single nonzero coordinate
        out = [_Z, _Z, _Z, _Z]
        for i, x in enumerate(self.c):
            if not x:
                continue
            for j, y in enumerate(o.c):
                if not y:
                    continue
                out[i ^ j] += _BQ_SCALE[(d1, d2)][i][j] * x * y
        return self._raw(tuple(out))

    __rmul__ = __mul__

    def flip(self, s1: int, s2: int):
        """Automorphism sqrt(d1) -> s1 sqrt(d1), sqrt(d2) -> s2 sqrt(d2)."""
        c0, c1, c2, c3 = self.c
        return type(self)(c0, s1 * c1, s2 * c2, s1 * s2 * c3)

    def norm_to_base1(self):
        """x * x^(sqrt(d2) -> -sqrt(d2)), an element of Q(sqrt d1)."""
        return self * self.flip(1, -1)

    def inverse(self):
        # x^-1 = conj1(x)conj2(x)conj12(x) / N(x)
        x1, x2, x3 = self.flip(-1, 1), self.flip(1, -1), self.flip(-1, -1)
        num = x1 * x2 * x3
        n = (self * num).c
        if n[0] == 0:
            raise ZeroDivisionError("inverse of zero")
        return type(self)(*(x / n[0] for x in num.c))

    def __truediv__(self, o):
        o = self._coerce(o)
        return self * o.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        r, b = type(self)(1), self
        while k:
            if k & 1:
                r = r * b
            b = b * b
            k >>= 1
        return r

    def __eq__(self, o):
        o = self._coerce(o)
        if o is NotImplemented:
            return False
        return self.c == o.c

    def __hash__(self):
        return hash((type(self).__name__, self.c))

    def is_zero(self):
        return all(x == 0 for x in self.c)

    def embed(self, s1: int = 1, s2: int = 1, prec: int = 53):
        """Numerical value with sqrt(d1) -> s1*|.|, sqrt(d2) -> s2*principal."""
        with mpmath.workprec(prec + 10):
            r1 = s1 * mpmath.sqrt(self.D1)
            r2 = s2 * mpmath.sqrt(mpmath.mpf(self.D2)) if self.D2 > 0 else s2 * mpmath.sqrt(mpmath.mpc(self.D2))
            c0, c1, c2, c3 = (mpmath.mpf(x.numerator) / x.denominator for x in self.c)
            v = c0 + c1 * r1 + c2 * r2 + c3 * r1 * r2
        with mpmath.workprec(prec):
            return +v

    def to_strings(self):
        return [str(x) for x in self.c]

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(str(x) for x in self.c)})"


class CoefElem(BiquadElem):
    """Element of Q(sqrt2, sqrt-3) in the basis {1, sqrt2, sqrt-3, sqrt-6}."""

    D1, D2 = 2, -3
    __slots__ = ()

    def conj(self) -> "CoefElem":
        """Complex conjugation: negates the sqrt-3 and sqrt-6 parts."""
        return self.flip(1, -1)

    def sigma_tau(self) -> "CoefElem":
        """The involution fixing Q(sqrt-6): negates the sqrt2 and sqrt-3 parts."""
        return self.flip(-1, -1)

    def embed_place(self, place: str = "v1", prec: int = 53):
        return self.embed(1 if place == "v1" else -1, 1, prec)

    def abs2(self) -> Fraction:
        """|x|^2 at v1 is x*conj(x), which lies in Q(sqrt2); returns it as F0Elem."""
        p = self * self.conj()
        return F0Elem(p.c[0], p.c[1])


class FElem(BiquadElem):
    """Element of F = Q(sqrt2, sqrt5) in the basis {1, sqrt2, sqrt5, sqrt10}."""

    D1, D2 = 2, 5
    __slots__ = ()

    def tau(self) -> "FElem":
        """Generator of Gal(F/F0): sqrt5 -> -sqrt5."""
        return self.flip(1, -1)

    def sign_at(self, s1: int, s2: int) -> int:
        """Exact sign at the real embedding (sqrt2 -> s1 sqrt2, sqrt5 -> s2 sqrt5)."""
        x = self.flip(s1, s2)
        # x = u + v sqrt5 with u, v in Q(sqrt2) at v1
        u = F0Elem(x.c[0], x.c[1])
        v = F0Elem(x.c[2], x.c[3])
        su, sv = u.sign("v1"), v.sign("v1")
        if sv == 0:
            return su
        if su == 0 or su == sv:
            return sv
        d = u * u - 5 * v * v
        sd = d.sign("v1")
        if sd == 0:
            return 0
        return su if sd > 0 else sv

    def in_f0(self) -> bool:
        return self.c[2] == 0 and self.c[3] == 0

    def as_f0(self) -> F0Elem:
        if not self.in_f0():
            raise ValueError(f"{self!r} is not in Q(sqrt2)")
        return F0Elem(self.c[0], self.c[1])


def parse_biquad(cls, s: str):
    """Parse "a+b*sqrt2+c*sqrt5+d*sqrt10" style literals into cls."""
    names = {1: "", cls.D1: f"sqrt{cls.D1}", cls.D2: f"sqrt{cls.D2}", cls.D1 * cls.D2: f"sqrt{cls.D1 * cls.D2}"}
    order = [1, cls.D1, cls.D2, cls.D1 * cls.D2]
    s = s.replace(" ", "")
    tok = re.compile(r"([+-]?)([0-9/]*)\*?(sqrt\(?-?[0-9]+\)?)?")
    coords = [Fraction(0)] * 4
    pos = 0
    while pos < len(s):
        m = tok.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse {s!r}")
        sign, num, rad = m.groups()
        c = Fraction(num) if num else Fraction(1)
        if sign == "-":
            c = -c
        key = 1
        if rad:
            d = int(rad.replace("sqrt", "").strip("()"))
            if d not in names:
                raise ValueError(f"radical sqrt{d} not in the field")
            key = d
        coords[order.index(key)] += c
        pos = m.end()
    return cls(*coords)


# ---------------------------------------------------------------------------
# Q[x]/(f) in power basis
# ---------------------------------------------------------------------------

class SimpleFieldElem:
    """Element of Q[x]/(f) for monic f; coefficients low degree first."""

    __slots__ = ("f", "c")

    def __init__(self, f: tuple, c):
        self.f = f
        n = len(f) - 1
        c = [_q(x) for x in c] + [Fraction(0)] * (n - len(c))
        self.c = tuple(c[:n]) if len(c) <= n else tuple(self._reduce(c))

    def _reduce(self, c):
        f = self.f
        n = len(f) - 1
        c = list(c)
        for k in range(len(c) - 1, n - 1, -1):
            t = c[k]
            if t:
                for j in range(n):
                    c[k - n + j] -= t * f[j]
            c[k] = Fraction(0)
        return c[:n]

    def _co(self, o):
        if isinstance(o, SimpleFieldElem):
            return o
        return SimpleFieldElem(self.f, [o])

    def __add__(self, o):
        o = self._co(o)
        return SimpleFieldElem(self.f, [x + y for x, y in zip(self.c, o.c)])

    __radd__ = __add__

    def __neg__(self):
        return SimpleFieldElem(self.f, [-x for x in self.c])

    def __sub__(self, o):
        return self + (-self._co(o))

    def __mul__(self, o):
        o = self._co(o)
        n = len(self.c)
        prod = [Fraction(0)] * (2 * n - 1)
        for i, x in enumerate(self.c):
            if x:
                for j, y in enumerate(o.c):
                    if y:
                        prod[i + j] += x * y
        return SimpleFieldElem(self.f, prod)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        r, b = SimpleFieldElem(self.f, [1]), self
        while k:
            if k & 1:
                r = r * b
            b = b * b
            k >>= 1
        return r

    def is_zero(self):
        return all(x == 0 for x in self.c)

    def evaluate(self, root):
        acc = 0
        for x in reversed(self.c):
            acc = acc * root + mpmath.mpf(x.numerator) / x.denominator
        return acc


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def embed(x, place: str = "v1", prec: int = 53):
    """Embed an element of Q(sqrt2) or Q(sqrt2, sqrt-3) at v1 or v2.

    v1 sends sqrt2 to the positive root, v2 to the negative one; sqrt-3 goes to
    +i*sqrt3 at both places.
    """
    if prec < 16:
        raise ValueError("precision must be at least 16 bits")
    if place not in ("v1", "v2"):
        raise ValueError(f"unknown place {place!r}")
    s = 1 if place == "v1" else -1
    if isinstance(x, CoefElem):
        return x.embed(s, 1, prec)
    if isinstance(x, FElem):
        return x.embed(s, 1, prec)
    x = F0Elem.coerce(x)
    with mpmath.workprec(prec + 10):
        v = mpmath.mpf(x.a.numerator) / x.a.denominator + s * (mpmath.mpf(x.b.numerator) / x.b.denominator) * mpmath.sqrt(2)
    with mpmath.workprec(prec):
        return +v


# ---------------------------------------------------------------------------
# ideals of Z[sqrt2]
# ---------------------------------------------------------------------------

def _int_gen(g: F0Elem) -> tuple[int, int]:
    if not g.is_integral():
        raise ValueError(f"{g} is not an algebraic integer")
    return int(g.a), int(g.b)


@total_ordering
class IdealF0:
    """Nonzero ideal of Z[sqrt2], kept with a totally positive generator.

    Equality and hashing go through the Hermite normal form.
    """

    __slots__ = ("gen", "norm", "_hnf")

    @classmethod
    def _fast(cls, a: int, b: int, norm: int) -> "IdealF0":
        obj = cls.__new__(cls)
        obj.gen = F0Elem(Fraction(a), Fraction(b))
        obj.norm = norm
        obj._hnf = None
        return obj

    def __init__(self, gen: F0Elem):
        gen = F0Elem.coerce(gen)
        if gen.is_zero():
            raise ValueError("zero ideal")
        _int_gen(gen)
        self.gen = gen
        self.norm = abs(int(gen.norm()))
        self._hnf = None

    @property
    def hnf_basis(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Rows [[n1, 0], [t, n2]] w.r.t. {1, sqrt2}: the ideal is Z*n1 + Z*(t + n2 sqrt2)."""
        if self._hnf is None:
            a, b = _int_gen(self.gen)
            self._hnf = hnf_from_generators([(a, b), (2 * b, a)])
        return self._hnf

    def __eq__(self, o):
        return isinstance(o, IdealF0) and self.hnf_basis == o.hnf_basis

    def __lt__(self, o):
        return (self.norm, self.hnf_basis) < (o.norm, o.hnf_basis)

    def __hash__(self):
        return hash(self.hnf_basis)

    def __mul__(self, o: "IdealF0") -> "IdealF0":
        return IdealF0(self.gen * o.gen)

    def contains(self, x: F0Elem) -> bool:
        x = F0Elem.coerce(x)
        if not x.is_integral():
            return False
        q = x / self.gen
        return q.is_integral()

    def divides(self, o: "IdealF0") -> bool:
        return self.contains(o.gen)

    def generator(self) -> F0Elem:
        return self.gen

    def __repr__(self):
        return f"IdealF0(({self.gen}), norm={self.norm})"


def hnf_from_generators(vecs) -> tuple[tuple[int, int], tuple[int, int]]:
    """Hermite normal form of the Z-span of integer 2-vectors (full rank)."""
    # column-2 elimination by repeated gcd steps
    rows = [list(v) for v in vecs]
    pivot = None
    others = []
    for v in rows:
        if pivot is None:
            pivot = v
            continue
        a, b = pivot, v
        while b[1] != 0:
            t = a[1] // b[1]
            a = [a[0] - t * b[0], a[1] - t * b[1]]
            a, b = b, a
        pivot = a
        others.append(b)
    if pivot[1] < 0:
        pivot = [-pivot[0], -pivot[1]]
    n1 = 0
    for v in others:
        n1 = math.gcd(n1, v[0])
    if n1 == 0:
        raise ValueError("generators do not span a lattice")
    t = pivot[0] % n1
    return ((n1, 0), (t, pivot[1]))


def ideal(x) -> IdealF0:
    return IdealF0(totally_positive_generator_of(F0Elem.coerce(x)))


@dataclass(frozen=True)
class SplittingRecord:
    p: int
    kind: str                      # "split" | "inert" | "ramified"
    ideals: tuple                  # prime ideals above p


def _find_element_of_norm(p: int) -> F0Elem:
    """Some a + b sqrt2 with |a^2 - 2 b^2| = p (exists for p = 2 or p = +-1 mod 8)."""
    if p == 2:
        return SQRT2
    # sqrt(2) mod p, then a lattice reduction (Cornacchia style) for x^2 - 2y^2 = +-p
    r = sympy.sqrt_mod(2, p)
    if r is None:
        raise ValueError(f"{p} does not split in Q(sqrt2)")
    # reduce the lattice {(x, y): x = r*y mod p} with the indefinite form via gcd steps
    a0, b0 = p, 0
    a1, b1 = r, 1
    # Euclid on (p, r) keeps x - r*y = 0 mod p; stop when x^2 < p-ish
    limit = math.isqrt(2 * p)
    while a1 > limit:
        t = a0 // a1
        a0, a1 = a1, a0 - t * a1
        b0, b1 = b1, b0 - t * b1
    for x, y in ((a1, b1), (a0, b0)):
        if abs(x * x - 2 * y * y) == p:
            return F0Elem(x, y)
    # fallback: bounded search along the unit orbit
    for y in range(0, math.isqrt(p) + 2):
        x2 = p + 2 * y * y
        x = math.isqrt(x2)
        if x * x == x2:
            return F0Elem(x, y)
        x2 = 2 * y * y - p
        if x2 >= 0:
            x = math.isqrt(x2)
            if x * x == x2:
                return F0Elem(x, y)
    raise ArithmeticError(f"no element of norm +-{p} found")


@lru_cache(maxsize=None)
def factor_rational_prime(p: int) -> SplittingRecord:
    """Decomposition of the rational prime p in Z[sqrt2]."""
    p = int(p)
    if p < 2 or not sympy.isprime(p):
        raise ValueError(f"{p} is not prime")
    if p == 2:
        return SplittingRecord(2, "ramified", (ideal(SQRT2),))
    if p % 8 in (1, 7):
        g = _find_element_of_norm(p)
        return SplittingRecord(p, "split", tuple(sorted((ideal(g), ideal(g.conjugate())))))
    return SplittingRecord(p, "inert", (ideal(F0Elem(p)),))


def totally_positive_generator_of(g: F0Elem) -> F0Elem:
    """Canonical totally positive generator of (g).

    Among g*(3-2sqrt2)^k pick the one with |log(v1/v2)| minimal, ties going to
    the smaller v1 value.
    """
    g = F0Elem.coerce(g)
    if g.is_zero():
        raise ValueError("zero has no generator")
    den = math.lcm(g.a.denominator, g.b.denominator)
    a, b = _tp_balance_int(int(g.a * den), int(g.b * den))
    return F0Elem(Fraction(a, den), Fraction(b, den))


_S2 = math.sqrt(2.0)
_LOG_STEP = 2 * math.log(3 + 2 * _S2)      # change of log(v1/v2) per unit power


def _tp_balance_int(a: int, b: int) -> tuple[int, int]:
    """Balanced totally positive associate of a + b sqrt2 (integer coordinates)."""
    if a * a - 2 * b * b < 0:
        a, b = 2 * b - a, a - b              # times (sqrt2 - 1)
    if _sign_a_plus_b_sqrt(Fraction(a), Fraction(b), 2) < 0:
        a, b = -a, -b
    k = round(math.log((a + b * _S2) / (a - b * _S2)) / _LOG_STEP)
    # multiply by (3 - 2 sqrt2)^k exactly
    for _ in range(abs(k)):
        if k > 0:
            a, b = 3 * a - 4 * b, 3 * b - 2 * a
        else:
            a, b = 3 * a + 4 * b, 3 * b + 2 * a
    best = (a, b)
    for nb in ((3 * a - 4 * b, 3 * b - 2 * a), (3 * a + 4 * b, 3 * b + 2 * a)):
        if _balance_less(nb, best):
            best = nb
    return best


def _balance_less(g: tuple[int, int], h: tuple[int, int]) -> bool:
    """Is g strictly better balanced than h, ties going to the smaller v1?"""
    (a, b), (c, d) = g, h
    # |log r_g| = |log r_h| exactly iff g*h or g*conj(h) is rational
    if a * d + b * c == 0 or b * c - a * d == 0:
        return _sign_a_plus_b_sqrt(Fraction(a - c), Fraction(b - d), 2) < 0
    lg = abs(math.log((a + b * _S2) / (a - b * _S2)))
    lh = abs(math.log((c + d * _S2) / (c - d * _S2)))
    return lg < lh


def totally_positive_generator(I: IdealF0) -> F0Elem:
    return totally_positive_generator_of(I.gen)


def enumerate_ideals(bound: int) -> list[tuple[IdealF0, int]]:
    """All ideals of norm <= bound, sorted by (norm, HNF), built from prime factorizations."""
    return [(I, I.norm) for I, _ in enumerate_ideals_factored(bound)]


def enumerate_ideals_factored(bound: int):
    """Like enumerate_ideals but also returns each ideal's factorization.

    Factorizations are tuples of (prime IdealF0, exponent) sorted by prime.
    """
    if bound < 1:
        raise ValueError("bound must be positive")
    primes = []
    for p in sympy.primerange(2, bound + 1):
        rec = factor_rational_prime(p)
        for P in rec.ideals:
            if P.norm <= bound:
                primes.append(P)
    primes.sort()
    pg = [(P.norm, int(P.gen.a), int(P.gen.b)) for P in primes]
    out = []
    # depth-first over primes in increasing order, generators as integer pairs
    stack = [(0, 1, 1, 0, ())]
    while stack:
        start, norm, ga, gb, fac = stack.pop()
        out.append((norm, ga, gb, fac))
        for i in range(start, len(primes)):
            pn, pa, pb = pg[i]
            if norm * pn > bound:
                break
            n, a, b, e = norm, ga, gb, 0
            while n * pn <= bound:
                n *= pn
                a, b = a * pa + 2 * b * pb, a * pb + b * pa
                e += 1
                stack.append((i + 1, n, a, b, fac + ((primes[i], e),)))
    res = []
    for norm, a, b, fac in out:
        ta, tb = _tp_balance_int(a, b)
        res.append((IdealF0._fast(ta, tb, norm), fac))
    res.sort(key=lambda t: (t[0].norm, t[0].hnf_basis))
    return res


def count_ideals_zeta(bound: int) -> int:
    """Number of ideals of norm <= bound, from the Dedekind zeta coefficients.

    The zeta function of Q(sqrt2) is zeta(s) L(s, chi8), so the number of
    ideals of norm n is sum_{d | n} chi8(d).
    """
    chi = {1: 1, 7: 1, 3: -1, 5: -1}
    total = 0
    for d in range(1, bound + 1):
        c = chi.get(d % 8, 0)
        if c:
            total += c * (bound // d)
    return total


# ---------------------------------------------------------------------------
# characters
# ---------------------------------------------------------------------------

def kronecker(a: int, n: int) -> int:
    """Kronecker symbol (a/n)."""
    return int(sympy.jacobi_symbol(a, n)) if n % 2 == 1 and n > 0 else _kronecker_general(a, n)


def _kronecker_general(a: int, n: int) -> int:
    if n == 0:
        return 1 if abs(a) == 1 else 0
    res = 1
    if n < 0:
        n = -n
        if a < 0:
            res = -res
    v = 0
    while n % 2 == 0:
        n //= 2
        v += 1
    if v:
        if a % 2 == 0:
            return 0
        if v % 2 == 1 and a % 8 in (3, 5):
            res = -res
    if n == 1:
        return res
    return res * int(sympy.jacobi_symbol(a, n))


def _residue_field_has_root_golden(P: IdealF0) -> bool:
    """Does x^2 - x - 1 have a root in the residue field of P?"""
    rec = factor_rational_prime(_rational_prime_below(P))
    p = rec.p
    if rec.kind == "inert":
        return True                       # residue field F_{p^2} contains the roots
    if p == 2:
        return False                      # x^2 + x + 1 is irreducible over F_2
    return pow(5, (p - 1) // 2, p) == 1


def _rational_prime_below(P: IdealF0) -> int:
    n = P.norm
    for p in sympy.primefactors(n):
        return p
    raise ValueError("unit ideal has no prime below")


def is_prime_ideal(P: IdealF0) -> bool:
    n = P.norm
    if sympy.isprime(n):
        return True
    r = math.isqrt(n)
    return r * r == n and sympy.isprime(r) and factor_rational_prime(r).kind == "inert" and P == ideal(F0Elem(r))


def nebentypus_psi(P: IdealF0) -> int:
    """The character of F0(sqrt5)/F0 on a prime ideal: +1 split, -1 inert, 0 above 5.

    Uses the root test for x^2 - x - 1 in the residue field, which also works
    at the prime above 2 where x^2 = 5 always has a solution.
    """
    if not is_prime_ideal(P):
        raise ValueError(f"{P!r} is not prime")
    if P.norm % 5 == 0:
        return 0
    return 1 if _residue_field_has_root_golden(P) else -1


def psi_via_kronecker(P: IdealF0) -> int:
    """Cross-check of nebentypus_psi: the Legendre symbol (N(P)/5)."""
    return kronecker(P.norm, 5)


def psi_of_factorization(fac) -> int:
    s = 1
    for P, e in fac:
        s *= nebentypus_psi(P) ** e
    return s
