"""The ATC point construction for one instance: field tower checks, optimal
embedding data, and assembly of J and P = eta(J + conj J).

An instance is a JSON file (see data/instance_example.json) holding every
exact datum as a string.  Numbers computed here are embedded at the place v1
(sqrt2 > 0) unless stated otherwise.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import mpmath
import sympy

from . import elliptic, hmfexp, reduction
from .eigendata import extend_table, load_fixture, pseudo_eigenvalue
from .nfq import (F0Elem, FElem, IdealF0, SimpleFieldElem, factor_rational_prime, format_f0, ideal,
                  parse_biquad, parse_f0)
from .reduction import BasePoint, Mat, check_gamma_membership, mat, mat_det

DATA_DIR = Path(__file__).resolve().parent / "data"


class InstanceError(ValueError):
    """Malformed or inconsistent instance data."""


class VerificationError(RuntimeError):
    """A mathematical check on the instance failed."""


# ---------------------------------------------------------------------------
# exact helpers
# ---------------------------------------------------------------------------

def _rational_sqrt(q: Fraction) -> Optional[Fraction]:
    if q < 0:
        return None
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def sqrt_f0(x: F0Elem) -> Optional[F0Elem]:
    """A square root of x inside Q(sqrt2), or None."""
    if x.is_zero():
        return F0Elem(0)
    q = _rational_sqrt(x.norm())
    if q is None:
        return None
    for s in (q, -q):
        u2, v2 = (x.a + s) / 2, (x.a - s) / 4
        u, v = _rational_sqrt(u2), _rational_sqrt(v2)
        if u is None or v is None:
            continue
        for cand in (F0Elem(u, v), F0Elem(u, -v)):
            if cand * cand == x:
                return cand
    return None


def _sign_over_f0_sqrt(a: F0Elem, b: F0Elem, d: F0Elem, place: str, branch: int) -> int:
    """Exact sign of a + branch * b * sqrt(d) at a real place of F0 where d > 0."""
    sa = a.sign(place)
    sb = b.sign(place) * branch
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    c = (a * a - b * b * d).sign(place)
    if c == 0:
        return 0
    return sa if c > 0 else sb


# ---------------------------------------------------------------------------
# classification of quadratic extensions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    label: str            # TR, CM, ATR, ATC, TI or other
    real_places: tuple    # base places that stay real (each gives two)
    complex_places: tuple
    r1: int
    r2: int

    def __str__(self):
        return f"{self.label} (r1={self.r1}, r2={self.r2}, real over {list(self.real_places)})"


def _label(n_base_real: int, n_pos: int, base_totally_real: bool, r1: int) -> str:
    if base_totally_real:
        neg = n_base_real - n_pos
        if neg == 0:
            return "TR"
        if n_pos == 0:
            return "CM"
        if neg == 1:
            return "ATR"
        if n_pos == 1:
            return "ATC"
        return "other"
    return "TI" if r1 == 0 else "other"


def classify_over_f0(gen: F0Elem) -> Signature:
    """Signature of F0(sqrt gen) / F0."""
    if sqrt_f0(gen) is not None:
        raise InstanceError(f"{format_f0(gen)} is a square in Q(sqrt2)")
    pos = tuple(p for p in ("v1", "v2") if gen.sign(p) > 0)
    neg = tuple(p for p in ("v1", "v2") if gen.sign(p) < 0)
    r1 = 2 * len(pos)
    return Signature(_label(2, len(pos), True, r1), pos, neg, r1, len(neg))


F_PLACES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _square_in_f_by_factoring(expr) -> bool:
    t = sympy.Symbol("t")
    fac = sympy.factor_list(t ** 2 - expr, t, extension=[sympy.sqrt(2), sympy.sqrt(5)])
    return any(sympy.degree(f, t) == 1 for f, _ in fac[1])


def classify_over_f(gen: FElem) -> Signature:
    """Signature of F(sqrt gen) / F, F = Q(sqrt2, sqrt5) with places (sign sqrt2, sign sqrt5)."""
    signs = {p: gen.sign_at(*p) for p in F_PLACES}
    if any(v == 0 for v in signs.values()):
        raise InstanceError("generator vanishes")
    if all(v > 0 for v in signs.values()) and _square_in_f_by_factoring(
            sympy.nsimplify(gen.c[0] + gen.c[1] * sympy.sqrt(2) + gen.c[2] * sympy.sqrt(5)
                            + gen.c[3] * sympy.sqrt(10))):
        raise InstanceError("generator is a square in F")
    pos = tuple(p for p in F_PLACES if signs[p] > 0)
    neg = tuple(p for p in F_PLACES if signs[p] < 0)
    r1 = 2 * len(pos)
    return Signature(_label(4, len(pos), True, r1), pos, neg, r1, len(neg))


@dataclass(frozen=True)
class QuadOverF0:
    """K = F0(sqrt d); elements a + b sqrt d with a, b in F0."""
    d: F0Elem

    def real_places(self):
        return tuple((v, s) for v in ("v1", "v2") if self.d.sign(v) > 0 for s in (1, -1))

    def complex_places(self):
        return tuple(v for v in ("v1", "v2") if self.d.sign(v) < 0)


def classify_over_quadratic(K: QuadOverF0, a: F0Elem, b: F0Elem) -> Signature:
    """Signature of K(sqrt(a + b sqrt d)) / K."""
    pos, neg = [], []
    for v, s in K.real_places():
        sg = _sign_over_f0_sqrt(a, b, K.d, v, s)
        if sg == 0:
            raise InstanceError("generator vanishes at a real place")
        (pos if sg > 0 else neg).append((v, s))
    cplx = K.complex_places()
    r1 = 2 * len(pos)
    r2 = len(neg) + 2 * len(cplx)
    totally_real = not cplx
    return Signature(_label(len(pos) + len(neg), len(pos), totally_real, r1), tuple(pos), tuple(neg) + cplx, r1, r2)


def classify_extension(base: str, generator) -> Signature:
    """Dispatch: base 'F0' with an F0Elem, 'F' with an FElem, or a QuadOverF0 with (a, b)."""
    if base == "F0":
        return classify_over_f0(F0Elem.coerce(generator))
    if base == "F":
        return classify_over_f(generator)
    if isinstance(base, QuadOverF0):
        a, b = generator
        return classify_over_quadratic(base, a, b)
    raise ValueError(f"unknown base {base!r}")


# ---------------------------------------------------------------------------
# tower
# ---------------------------------------------------------------------------

@dataclass
class TowerSpec:
    N0: F0Elem                 # F = F0(sqrt N0)
    alpha: FElem               # M = F(sqrt alpha)
    K_poly: tuple              # omega^2 + t omega + n, as (1, t, n)

    @property
    def K_disc(self) -> F0Elem:
        one, t, n = self.K_poly
        return t * t - 4 * one * n

    def norm_alpha(self) -> F0Elem:
        x = self.alpha * self.alpha.tau()
        if not x.in_f0():
            raise VerificationError("alpha * alpha^tau is not in F0")
        return x.as_f0()

    def trace_alpha(self) -> F0Elem:
        x = self.alpha + self.alpha.tau()
        return x.as_f0()

    def closure_ratio(self) -> F0Elem:
        """s with K_disc = norm_alpha * s^2; raises when the square classes differ."""
        r = self.K_disc / self.norm_alpha()
        s = sqrt_f0(r)
        if s is None:
            raise VerificationError("K is not F0(sqrt(alpha alpha^tau)): square classes differ")
        return s

    def check_f(self):
        if sqrt_f0(self.N0) is not None:
            raise VerificationError("N0 is a square")
        # alpha must lie in F0(sqrt N0) = Q(sqrt2, sqrt5): only N0 = 5 * square is supported
        if sqrt_f0(self.N0 / 5) is None:
            raise InstanceError("F must be Q(sqrt2, sqrt5)")

    def signatures(self) -> dict:
        self.check_f()
        K = QuadOverF0(self.K_disc)
        # sqrt(alpha alpha^tau) = sqrt(K_disc) / s inside K
        s = self.closure_ratio()
        tr = self.trace_alpha()
        two_over_s = F0Elem(2) / s
        out = {
            "F/F0": classify_over_f0(self.N0),
            "M/F": classify_over_f(self.alpha),
            "M'/F": classify_over_f(self.alpha.tau()),
            "K/F0": classify_over_f0(self.K_disc),
            "L/K": classify_over_quadratic(K, tr, two_over_s),
            "L'/K": classify_over_quadratic(K, tr, -two_over_s),
        }
        return out


# ---------------------------------------------------------------------------
# functional equation sign
# ---------------------------------------------------------------------------

def _prime_factors(I: IdealF0) -> list:
    out = []
    for p in sympy.primefactors(I.norm):
        for P in factor_rational_prime(p).ideals:
            J, e = I, 0
            while P.divides(J):
                J = IdealF0(J.generator() / P.generator())
                e += 1
            if e:
                out.append((P, e))
    return out


def is_square_mod(x: F0Elem, P: IdealF0) -> Optional[bool]:
    """Is x a nonzero square in O/P? None when x is 0 mod P. P must be odd."""
    p = next(iter(sympy.primefactors(P.norm)))
    if p == 2:
        raise ValueError("residue test at the prime above 2 is not supported")
    if not x.is_integral():
        raise ValueError("integral argument required")
    rec = factor_rational_prime(p)
    a, b = int(x.a), int(x.b)
    if rec.kind == "inert":
        if a % p == 0 and b % p == 0:
            return None
        # x^((p^2-1)/2) in F_p[s]/(s^2-2)
        ra, rb, pa, pb, k = 1, 0, a % p, b % p, (p * p - 1) // 2
        while k:
            if k & 1:
                ra, rb = (ra * pa + 2 * rb * pb) % p, (ra * pb + rb * pa) % p
            pa, pb = (pa * pa + 2 * pb * pb) % p, (2 * pa * pb) % p
            k >>= 1
        return (ra, rb) == (1, 0)
    # split: sqrt2 maps to the root r with P | (r - sqrt2)
    for r in sympy.sqrt_mod(2, p, all_roots=True):
        if P.contains(F0Elem(r, -1)):
            v = (a + b * r) % p
            if v == 0:
                return None
            return pow(v, (p - 1) // 2, p) == 1
    raise ValueError("could not locate the residue map")


def functional_equation_sign(level: IdealF0, K_disc: F0Elem, r2: int) -> int:
    """(-1)^(r2 + number of primes dividing the level that are inert in F0(sqrt K_disc))."""
    inert = 0
    for P, _ in _prime_factors(level):
        sq = is_square_mod(K_disc, P)
        if sq is None:
            raise VerificationError("level not coprime to the discriminant")
        if not sq:
            inert += 1
    return -1 if (r2 + inert) % 2 else 1


# ---------------------------------------------------------------------------
# embedding data
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingData:
    phi_omega: Mat
    K_poly: tuple
    level: F0Elem
    conductor: F0Elem = F0Elem(1)

    def check(self):
        one, t, n = self.K_poly
        m = self.phi_omega
        m2 = reduction.mat_mul(m, m)
        z = [m2[i] + t * m[i] + (n if i in (0, 3) else F0Elem(0)) for i in range(4)]
        if not all(x.is_zero() for x in z):
            raise VerificationError("phi(omega) does not satisfy the minimal polynomial of omega")
        if not all(x.is_integral() for x in m):
            raise VerificationError("phi(omega) is not integral")
        if not (m[2] / self.level).is_integral():
            raise VerificationError("phi(omega) is not in the Eichler order of the level")

    def phi(self, x: F0Elem, y: F0Elem) -> Mat:
        """phi(x + y omega)."""
        a, b, c, d = self.phi_omega
        return (x + y * a, y * b, y * c, x + y * d)


def fixed_point(data: EmbeddingData, prec: int = 113):
    """(z1, BasePoint): the fixed point of phi(K^*) in the upper half plane under v1."""
    a, b, c, d = data.phi_omega
    if c.is_zero():
        raise VerificationError("phi(omega) has zero lower left entry")
    poly = (c, d - a, -b)
    try:
        bp = BasePoint("z1", poly)
    except ValueError as e:
        raise VerificationError("fixed points are real at v1: the embedding is split there") from e
    return bp.value(prec), bp


def k_norm(K_poly, x: F0Elem, y: F0Elem) -> F0Elem:
    _, t, n = K_poly
    return x * x - t * x * y + n * y * y


def embedding_unit(data: EmbeddingData, override: Optional[tuple] = None, box: int = 30):
    """(e_K as (x, y) meaning x + y omega, gamma_phi = phi(e_K)).

    Searches y in a coefficient box and solves the norm equation for x
    exactly; the generator has the smallest nonzero log size at a real place
    above v2.  An override must be a generator as well.
    """
    _, t, n = data.K_poly
    disc = t * t - 4 * n
    sq = mpmath.sqrt(disc.embed("v2", 80))
    om = (-t.embed("v2", 80) + sq) / 2

    def size(x, y):
        return abs(mpmath.log(abs(x.embed("v2", 80) + y.embed("v2", 80) * om)))

    found = []
    for y1 in range(-box, box + 1):
        for y2 in range(-box, box + 1):
            y = F0Elem(y1, y2)
            if y.is_zero():
                continue
            D = t * t * y * y - 4 * (n * y * y - 1)
            r = sqrt_f0(D)
            if r is None:
                continue
            for sgn in (1, -1):
                x = (t * y + sgn * r) / 2
                if x.is_integral():
                    found.append((x, y))
    if not found and override is None:
        raise VerificationError("no relative norm one unit in the search box")
    best = None
    if found:
        best = min(found, key=lambda e: (float(size(*e)), str(e)))
        best_size = size(*best)
    if override is not None:
        x, y = override
        if k_norm(data.K_poly, x, y) != F0Elem(1):
            raise VerificationError("supplied e_K does not have norm 1")
        if best is not None and abs(size(x, y) - best_size) > 1e-20:
            raise VerificationError("supplied e_K is not a generator of the norm one units")
        e = (x, y)
    else:
        e = best
        if e[0].embed("v2", 80) + e[1].embed("v2", 80) * om < 0:
            e = (-e[0], -e[1])
    g = data.phi(*e)
    if mat_det(g) != F0Elem(1):
        raise VerificationError("phi(e_K) does not have determinant 1")
    return e, g


# ---------------------------------------------------------------------------
# instance
# ---------------------------------------------------------------------------

@dataclass
class TorsionPointData:
    field_poly: tuple
    sqrt2: SimpleFieldElem
    sqrt5: SimpleFieldElem
    x: SimpleFieldElem
    y: SimpleFieldElem
    y_other: Optional[SimpleFieldElem]
    printed_x: Optional[list]

    def to_field(self, a: FElem) -> SimpleFieldElem:
        c0, c1, c2, c3 = a.c
        f = self.field_poly
        return (SimpleFieldElem(f, [c0]) + self.sqrt2 * SimpleFieldElem(f, [c1])
                + self.sqrt5 * SimpleFieldElem(f, [c2]) + self.sqrt2 * self.sqrt5 * SimpleFieldElem(f, [c3]))


@dataclass
class Instance:
    name: str
    eigendata_path: Path
    level: F0Elem
    tower: TowerSpec
    curve: elliptic.WeierstrassModel
    period_scale: FElem
    omega_place: tuple
    embedding: EmbeddingData
    e_K: Optional[tuple]
    script: reduction.Script
    torsion: Optional[TorsionPointData]
    norm_bound: int
    prec: int                   # decimal digits
    coeff_bound: int
    torsion_order: int
    expected_relation: Optional[tuple]
    source: Optional[Path] = None

    @staticmethod
    def load(path) -> "Instance":
        path = Path(path)
        try:
            o = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InstanceError(f"cannot read instance {path}: {e}") from e
        return Instance.from_json(o, path.parent)

    @staticmethod
    def from_json(o: dict, root: Path = DATA_DIR) -> "Instance":
        try:
            lvl = parse_f0(o["level"])
            K_poly = tuple(parse_f0(s) for s in o["K_poly"])
            if K_poly[0] != F0Elem(1):
                raise InstanceError("K_poly must be monic")
            tower = TowerSpec(parse_f0(o["F"]["N0"]), parse_biquad(FElem, o["alpha"]), K_poly)
            curve = elliptic.WeierstrassModel.from_strings(o["curve"])
            (a, b), (c, d) = o["phi_omega"]
            emb = EmbeddingData(mat(parse_f0(a), parse_f0(b), parse_f0(c), parse_f0(d)), K_poly, lvl,
                                parse_f0(o.get("conductor", "1")))
            e_K = tuple(parse_f0(s) for s in o["e_K"]) if o.get("e_K") else None
            scr = o.get("script", "builtin")
            if scr == "builtin":
                script = reduction.builtin_example_script()
            elif isinstance(scr, dict):
                script = reduction.Script.from_json(scr)
            else:
                script = reduction.Script.from_json(json.loads((root / scr).read_text()))
            tp = o.get("torsion_point")
            torsion = None
            if tp:
                f = tuple(Fraction(s) for s in tp["field_poly"])
                el = lambda xs: SimpleFieldElem(f, [Fraction(s) for s in xs])
                torsion = TorsionPointData(f, el(tp["sqrt2"]), el(tp["sqrt5"]), el(tp["x"]), el(tp["y"]),
                                           el(tp["y_other"]) if tp.get("y_other") else None,
                                           [Fraction(s) for s in tp["printed_x"]] if tp.get("printed_x") else None)
            eig = Path(o["eigendata"])
            if not eig.is_absolute():
                eig = (root / eig) if (root / eig).exists() else DATA_DIR / eig
            rel = o.get("expected_relation")
            return Instance(
                name=o.get("name", "instance"), eigendata_path=eig, level=lvl, tower=tower, curve=curve,
                period_scale=parse_biquad(FElem, o.get("period_scale", "1")),
                omega_place=tuple(o.get("omega_place", (-1, 1))), embedding=emb, e_K=e_K, script=script,
                torsion=torsion, norm_bound=int(o.get("norm_bound", 160000)), prec=int(o.get("prec", 35)),
                coeff_bound=int(o.get("coeff_bound", 16)), torsion_order=int(o.get("torsion_order", 1)),
                expected_relation=tuple(rel) if rel else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, (InstanceError, VerificationError)):
                raise
            raise InstanceError(f"malformed instance: {e}") from e


def example_instance() -> Instance:
    return Instance.load(DATA_DIR / "instance_example.json")


# ---------------------------------------------------------------------------
# curve side
# ---------------------------------------------------------------------------

def bits(digits: int) -> int:
    return int(math.ceil(digits * math.log2(10))) + 16


@dataclass
class CurveData:
    model_v1: elliptic.EmbeddedModel      # printed model at v1
    lattice_v1: elliptic.PeriodLattice    # its periods
    scale_v1: object                      # v1(period_scale)
    lattice_E: elliptic.PeriodLattice     # scale * lattice_v1
    omega_minus_2: object                 # purely imaginary period at omega_place, over scale_v1

    def to_E(self, z):
        return z * self.scale_v1

    def from_E(self, z):
        return z / self.scale_v1


def curve_data(inst: Instance, prec_bits: int) -> CurveData:
    E1 = inst.curve.embed((1, 1), prec_bits)
    L1 = elliptic.period_lattice(E1)
    c1 = inst.period_scale.embed(1, 1, prec_bits)
    if c1 <= 0:
        raise InstanceError("period scale must be positive at v1")
    E2 = inst.curve.embed(inst.omega_place, prec_bits)
    L2 = elliptic.period_lattice(E2)
    if L2.connected:
        raise VerificationError("the second place has connected real locus: no purely imaginary period")
    with mpmath.workprec(prec_bits):
        w2 = mpmath.mpc(0, abs(mpmath.im(L2.omega_second))) / c1
    return CurveData(E1, L1, c1, L1.scaled(c1), w2)


def torsion_point_log(inst: Instance, cd: CurveData, prec_bits: int, which: str = "y"):
    """J_nt: elliptic log of the pinned torsion point, in the lattice_E normalization.

    The point is checked to lie on the model exactly over M = Q(r), r^2 = alpha.
    """
    tp = inst.torsion
    if tp is None:
        raise InstanceError("instance has no torsion point")
    X = tp.x
    Y = tp.y if which == "y" else tp.y_other
    a1, a2, a3, a4, a6 = (tp.to_field(a) for a in inst.curve.ainvs)
    d = Y * Y + a1 * X * Y + a3 * Y - (X * X * X + a2 * X * X + a4 * X + a6)
    if not d.is_zero():
        raise VerificationError("torsion point is not on the curve over M")
    with mpmath.workprec(prec_bits + 20):
        r = mpmath.sqrt(inst.tower.alpha.embed(1, 1, prec_bits + 20))
        P = (X.evaluate(r), Y.evaluate(r))
    z = elliptic.elliptic_log(P, cd.lattice_v1, cd.model_v1)
    with mpmath.workprec(prec_bits):
        return cd.lattice_E.reduce(cd.to_E(z))


def printed_x_value(inst: Instance, prec_bits: int, root_sign: int = 1):
    tp = inst.torsion
    with mpmath.workprec(prec_bits + 20):
        r = root_sign * mpmath.sqrt(inst.tower.alpha.embed(1, 1, prec_bits + 20))
        return mpmath.fsum(mpmath.mpf(c.numerator) / c.denominator * r ** k for k, c in enumerate(tp.printed_x))


# ---------------------------------------------------------------------------
# J and P
# ---------------------------------------------------------------------------

@dataclass
class JResult:
    J: object
    error_bound: float
    raw: object                 # the integral before division by the period
    integral: hmfexp.IntegralResult
    omega_minus_2: object
    jobs: int
    seconds: float


def verify_script(inst: Instance, bp: BasePoint) -> list:
    """Run the reduction script symbolically; its base point must be the fixed point of phi."""
    A, B, C = inst.script.base.poly
    a, b, c = bp.poly
    if not ((A * b - B * a).is_zero() and (A * c - C * a).is_zero() and (B * c - C * b).is_zero()):
        raise VerificationError("script base point differs from the fixed point of phi")
    return inst.script.final()


def start_matches_embedding(inst: Instance, gamma: Mat) -> bool:
    """The script starts from int^{z1} int_y^{gamma_phi y} for some cusp y."""
    st = inst.script.start
    if len(st) != 1 or not isinstance(st[0][1], reduction.ThreeLimit):
        return False
    t = st[0][1]
    return t.lo.act(gamma) == t.hi or t.hi.act(gamma) == t.lo


def compute_J(inst: Instance, norm_bound: Optional[int] = None, prec_digits: Optional[int] = None,
              threads: int = 1, backend: Optional[str] = None, eigen=None, cd: Optional[CurveData] = None) -> JResult:
    """J = (Omega_2^-)^{-1} * (integral of alpha over the reduced script output)."""
    t0 = time.time()
    B = norm_bound or inst.norm_bound
    pb = bits(prec_digits or inst.prec)
    if eigen is None:
        eigen = extend_table(load_fixture(inst.eigendata_path), B)
    with mpmath.workprec(pb):
        _, bp = fixed_point(inst.embedding, pb)
        final = verify_script(inst, bp)
        forms = hmfexp.alpha_form(pseudo_eigenvalue(eigen))
        jobs = reduction.sum_jobs(final, pb)
        total, _ = hmfexp.integrate_jobs(eigen, jobs, B, forms, prec=pb, threads=threads, backend=backend)
        cd = cd or curve_data(inst, pb)
        J = total.value / cd.omega_minus_2
        err = total.error_bound / float(abs(cd.omega_minus_2)) + float(abs(J)) * 2.0 ** (-pb + 16)
    return JResult(J, err, total.value, total, cd.omega_minus_2, len(jobs), time.time() - t0)


@dataclass
class PointResult:
    z: object                   # J + conj J reduced mod lattice_E
    identity: bool
    x: object = None
    y: object = None
    defect: float = 0.0


def compute_P(J, cd: CurveData, tol: float = 1e-20) -> PointResult:
    """P = eta(J + conj J) on the printed model at v1 (coordinates via lattice_v1)."""
    with mpmath.workprec(cd.lattice_v1.prec):
        z = cd.lattice_E.reduce(mpmath.mpc(J) + mpmath.conj(mpmath.mpc(J)))
        if cd.lattice_E.distance(z) < tol:
            return PointResult(z, True)
        P = elliptic.weierstrass_map(cd.from_E(z), cd.lattice_v1, cd.model_v1)
        if P is None:
            return PointResult(z, True)
        return PointResult(z, False, P[0], P[1], cd.model_v1.defect(P))
