"""Elliptic curve numerics at real places: periods, elliptic logs, the Weierstrass map
and torsion-aware recognition of lattice relations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import mpmath

from .nfq import FElem, parse_biquad


class EllipticError(ValueError):
    pass


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeierstrassModel:
    """y^2 + a1 xy + a3 y = x^3 + a2 x^2 + a4 x + a6 over Q(sqrt2, sqrt5)."""

    a1: FElem
    a2: FElem
    a3: FElem
    a4: FElem
    a6: FElem

    @classmethod
    def from_strings(cls, coeffs: Sequence[str]) -> "WeierstrassModel":
        return cls(*(parse_biquad(FElem, s) for s in coeffs))

    @property
    def ainvs(self):
        return (self.a1, self.a2, self.a3, self.a4, self.a6)

    @property
    def b2(self):
        return self.a1 * self.a1 + self.a2 * 4

    @property
    def b4(self):
        return self.a1 * self.a3 + self.a4 * 2

    @property
    def b6(self):
        return self.a3 * self.a3 + self.a6 * 4

    @property
    def b8(self):
        a1, a2, a3, a4, a6 = self.ainvs
        return a1 * a1 * a6 + a2 * a6 * 4 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4

    @property
    def c4(self):
        return self.b2 * self.b2 - self.b4 * 24

    @property
    def c6(self):
        return -(self.b2 * self.b2 * self.b2) + self.b2 * self.b4 * 36 - self.b6 * 216

    @property
    def discriminant(self):
        b2, b4, b6, b8 = self.b2, self.b4, self.b6, self.b8
        return -(b2 * b2 * b8) - b4 * b4 * b4 * 8 - b6 * b6 * 27 + b2 * b4 * b6 * 9

    def rescale(self, c: FElem) -> "WeierstrassModel":
        """Model with x' = c^2 x, y' = c^3 y; its period lattices are the old ones divided by c."""
        c2 = c * c
        c3 = c2 * c
        return WeierstrassModel(self.a1 * c, self.a2 * c2, self.a3 * c3, self.a4 * c2 * c2, self.a6 * c3 * c3)

    def embed(self, place: tuple = (1, 1), prec: int = 128) -> "EmbeddedModel":
        s1, s2 = place
        if self.discriminant.is_zero():
            raise EllipticError("singular model")
        return EmbeddedModel(tuple(a.embed(s1, s2, prec) for a in self.ainvs), prec, place)


@dataclass(frozen=True)
class EmbeddedModel:
    a: tuple
    prec: int
    place: tuple = (1, 1)

    @classmethod
    def from_numbers(cls, a, prec: int = 128):
        with mpmath.workprec(prec):
            return cls(tuple(mpmath.mpmathify(x) for x in a), prec)

    @property
    def b(self):
        a1, a2, a3, a4, a6 = self.a
        with mpmath.workprec(self.prec):
            b2 = a1 * a1 + 4 * a2
            b4 = a1 * a3 + 2 * a4
            b6 = a3 * a3 + 4 * a6
            return b2, b4, b6

    def g2g3(self):
        b2, b4, b6 = self.b
        with mpmath.workprec(self.prec):
            c4 = b2 * b2 - 24 * b4
            c6 = -b2 ** 3 + 36 * b2 * b4 - 216 * b6
            return c4 / 12, c6 / 216

    def defect(self, P) -> float:
        x, y = P
        a1, a2, a3, a4, a6 = self.a
        with mpmath.workprec(self.prec):
            lhs = y * y + a1 * x * y + a3 * y
            rhs = x ** 3 + a2 * x * x + a4 * x + a6
            scale = max(abs(lhs), abs(rhs), mpmath.mpf(1))
            return float(abs(lhs - rhs) / scale)

    def y_values(self, x):
        """Both y with (x, y) on the curve."""
        a1, a2, a3, a4, a6 = self.a
        with mpmath.workprec(self.prec):
            p = a1 * x + a3
            q = -(x ** 3 + a2 * x * x + a4 * x + a6)
            d = mpmath.sqrt(p * p - 4 * q)
            return (-p + d) / 2, (-p - d) / 2


# ---------------------------------------------------------------------------
# lattices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodLattice:
    """Lattice Z omega_plus + Z omega_second at a real place.

    omega_plus generates the real sublattice; Im(omega_second / omega_plus) > 0.
    `connected` records whether E(R) has one component (negative discriminant).
    """

    omega_plus: object
    omega_second: object
    connected: bool
    prec: int
    place: tuple = (1, 1)

    @property
    def omega_minus(self):
        """Generator of the purely imaginary sublattice, with positive imaginary part."""
        if self.connected:
            return 2 * self.omega_second - self.omega_plus
        return self.omega_second

    @property
    def tau(self):
        return self.omega_second / self.omega_plus

    def coords(self, z):
        """Real (s, t) with z = s omega_plus + t omega_second."""
        w1, w2 = self.omega_plus, self.omega_second
        with mpmath.workprec(self.prec + 20):
            z = mpmath.mpc(z)
            det = (mpmath.conj(w1) * w2).imag
            t = (mpmath.conj(w1) * z).imag / det
            s = (z * mpmath.conj(w2)).imag / (-det)
            return s, t

    def reduce(self, z):
        """Normal form: the representative with coordinates in [0, 1)^2."""
        s, t = self.coords(z)
        with mpmath.workprec(self.prec + 20):
            s -= mpmath.floor(s)
            t -= mpmath.floor(t)
            return s * self.omega_plus + t * self.omega_second

    def reduce_centered(self, z):
        """Representative with coordinates in [-1/2, 1/2)."""
        s, t = self.coords(z)
        with mpmath.workprec(self.prec + 20):
            s -= mpmath.floor(s + mpmath.mpf(1) / 2)
            t -= mpmath.floor(t + mpmath.mpf(1) / 2)
            return s * self.omega_plus + t * self.omega_second

    def distance(self, z) -> float:
        """Distance from z to the nearest lattice point (up to fundamental-domain effects)."""
        best = None
        r = self.reduce_centered(z)
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                d = abs(r + i * self.omega_plus + j * self.omega_second)
                best = d if best is None or d < best else best
        return float(best)

    def scaled(self, c) -> "PeriodLattice":
        """The lattice c * L for real c != 0."""
        with mpmath.workprec(self.prec):
            c = abs(mpmath.mpf(c))
            return PeriodLattice(self.omega_plus * c, self.omega_second * c, self.connected, self.prec, self.place)


def _cubic_roots(E: EmbeddedModel):
    """Roots of 4X^3 - g2 X - g3 (X = x + b2/12)."""
    g2, g3 = E.g2g3()
    roots = mpmath.polyroots([4, 0, -g2, -g3], maxsteps=200, extraprec=2 * E.prec)
    return roots


def period_lattice(E: EmbeddedModel) -> PeriodLattice:
    """Periods of the invariant differential dx / (2y + a1 x + a3) via the AGM."""
    for a in E.a:
        if abs(mpmath.mpc(a).imag) > mpmath.mpf(2) ** (-E.prec // 2):
            raise EllipticError("period_lattice needs a model with real coefficients")
    with mpmath.workprec(E.prec + 30):
        a = tuple(mpmath.mpf(mpmath.mpc(x).real) for x in E.a)
        E = EmbeddedModel(a, E.prec + 30, E.place)
        g2, g3 = E.g2g3()
        disc = g2 ** 3 - 27 * g3 ** 2
        if disc == 0:
            raise EllipticError("singular curve")
        roots = _cubic_roots(E)
        pi = mpmath.pi
        if disc > 0:
            e1, e2, e3 = sorted((mpmath.re(r) for r in roots), reverse=True)
            w1 = pi / mpmath.agm(mpmath.sqrt(e1 - e3), mpmath.sqrt(e1 - e2))
            w2 = mpmath.mpc(0, 1) * pi / mpmath.agm(mpmath.sqrt(e1 - e3), mpmath.sqrt(e2 - e3))
            L = PeriodLattice(+w1, +w2, False, E.prec - 30, E.place)
        else:
            e1 = max((r for r in roots), key=lambda r: -abs(mpmath.im(r)))
            e1 = mpmath.re(e1)
            # with X = x + b2/12 the cubic is 4X^3 - g2 X - g3
            A = 3 * e1
            B = mpmath.sqrt(3 * e1 * e1 - g2 / 4)
            w1 = 2 * pi / mpmath.agm(2 * mpmath.sqrt(B), mpmath.sqrt(2 * B + A))
            wi = pi / mpmath.agm(2 * mpmath.sqrt(B), mpmath.sqrt(2 * B - A))
            w2 = w1 / 2 + mpmath.mpc(0, 1) * wi
            L = PeriodLattice(+w1, +w2, True, E.prec - 30, E.place)
        return L


# ---------------------------------------------------------------------------
# Weierstrass functions
# ---------------------------------------------------------------------------

def _wp_series(z, L: PeriodLattice, prec: int):
    """(wp(z), wp'(z)) for the lattice L, by the q-expansion."""
    with mpmath.workprec(prec + 30):
        w1 = mpmath.mpc(L.omega_plus)
        s, t = L.coords(z)
        z = z - mpmath.nint(s) * L.omega_plus - mpmath.nint(t) * L.omega_second
        tau = L.omega_second / w1
        k = 2j * mpmath.pi / w1
        q = mpmath.expj(2 * mpmath.pi * tau)
        u = mpmath.expj(2 * mpmath.pi * z / w1)
        ui = 1 / u
        aq = abs(q)
        p = u / (1 - u) ** 2 + mpmath.mpf(1) / 12
        dp = u * (1 + u) / (1 - u) ** 3
        qn = q
        eps = mpmath.mpf(2) ** (-prec - 20)
        n = 1
        while True:
            x, y = qn * u, qn * ui
            p += x / (1 - x) ** 2 + y / (1 - y) ** 2 - 2 * qn / (1 - qn) ** 2
            dp += x * (1 + x) / (1 - x) ** 3 - y * (1 + y) / (1 - y) ** 3
            if abs(qn) * max(abs(u), abs(ui)) < eps:
                break
            qn *= q
            n += 1
            if n > 100000:
                raise EllipticError("q-series did not converge")
        return k * k * p, k ** 3 * dp


def weierstrass_map(z, L: PeriodLattice, E: EmbeddedModel) -> Optional[tuple]:
    """eta(z) = (x, y) on the long model, or None for z in the lattice."""
    prec = E.prec
    if L.distance(z) < 2.0 ** (-prec / 2):
        return None
    b2 = E.b[0]
    a1, _, a3, _, _ = E.a
    with mpmath.workprec(prec + 20):
        wp, dwp = _wp_series(z, L, prec)
        x = wp - b2 / 12
        y = (dwp - a1 * x - a3) / 2
    with mpmath.workprec(prec):
        return +x, +y


def elliptic_log(P, L: PeriodLattice, E: EmbeddedModel, check: bool = True):
    """z in the fundamental domain [0,1)^2 with eta(z) = P; P = None is the identity."""
    if P is None:
        return mpmath.mpc(0)
    prec = E.prec
    x, y = P
    if check and E.defect(P) > 2.0 ** (-prec + 40):
        raise EllipticError(f"point not on the curve (defect {E.defect(P):.2e})")
    b2 = E.b[0]
    a1, _, a3, _, _ = E.a
    with mpmath.workprec(prec + 30):
        X = mpmath.mpc(x) + b2 / 12
        Y = 2 * mpmath.mpc(y) + a1 * x + a3
        roots = _cubic_roots(E)
        z = mpmath.elliprf(X - roots[0], X - roots[1], X - roots[2])
        g2 = E.g2g3()[0]
        # fix the sign with wp', then polish with Gauss-Newton on (wp - X, wp' - Y);
        # x alone is ill-conditioned near the half periods where wp' vanishes
        for _ in range(60):
            wp, dwp = _wp_series(z, L, prec + 10)
            if abs(dwp + Y) < abs(dwp - Y):
                z = -z
                wp, dwp = _wp_series(z, L, prec + 10)
            r1, r2 = wp - X, dwp - Y
            if abs(r1) <= 2.0 ** (-prec - 10) * max(1, abs(X)) and abs(r2) <= 2.0 ** (-prec - 10) * max(1, abs(Y)):
                break
            ddwp = 6 * wp * wp - g2 / 2
            den = abs(dwp) ** 2 + abs(ddwp) ** 2
            if den == 0:
                break
            step = (mpmath.conj(dwp) * r1 + mpmath.conj(ddwp) * r2) / den
            z -= step
            if abs(step) <= 2.0 ** (-prec - 20) * max(1, abs(z)):
                break
        else:
            raise EllipticError("elliptic log did not converge")
        wp, dwp = _wp_series(z, L, prec + 10)
        tol = 2.0 ** (-prec / 2) * max(1, float(abs(Y)))
        if abs(dwp - Y) > tol:
            raise EllipticError("elliptic log: derivative mismatch")
        return L.reduce(z)


# ---------------------------------------------------------------------------
# relation recognition
# ---------------------------------------------------------------------------

@dataclass
class LatticeRelation:
    """m J - n J_nt + a omega_plus + b omega_second ~ 0."""

    coefficients: Optional[tuple]
    residual: float
    found: bool
    gcd: int = 1
    lll_coefficients: Optional[tuple] = None

    @property
    def lll_agrees(self) -> Optional[bool]:
        if self.lll_coefficients is None or self.coefficients is None:
            return None
        return tuple(self.lll_coefficients) == tuple(self.coefficients)


def relation_residual(J, Jnt, L: PeriodLattice, m: int, n: int):
    """(residual, a, b) for the best lattice correction of m J - n J_nt."""
    with mpmath.workprec(L.prec + 20):
        w = m * mpmath.mpc(J) - n * mpmath.mpc(Jnt)
        s, t = L.coords(w)
        a, b = -int(mpmath.nint(s)), -int(mpmath.nint(t))
        r = w + a * L.omega_plus + b * L.omega_second
        return abs(r), a, b


def find_relation(values: Sequence, L: PeriodLattice, coeff_bound: int = 16, torsion_order: int = 1,
                  tol: float = 1e-20, lll: bool = True) -> LatticeRelation:
    """Smallest m (then smallest |n|) with m J - n J_nt in the lattice up to tol."""
    if coeff_bound < 1:
        raise ValueError("coeff_bound must be positive")
    J, Jnt = values
    nb = 2 * coeff_bound * max(1, torsion_order)
    # lattice coordinates are linear in (m, n): scan them as fixed-point integers
    # and only go back to mpmath for the candidates
    P = L.prec + 20
    with mpmath.workprec(P + 10):
        one = 1 << P
        (sJ, tJ), (sN, tN) = L.coords(J), L.coords(Jnt)
        SJ, TJ, SN, TN = (int(mpmath.nint(x * one)) for x in (sJ, tJ, sN, tN))
        w1, w2 = complex(L.omega_plus), complex(L.omega_second)

    def frac(x):
        return ((x + one // 2) % one - one // 2) / one

    scan = []
    for m in range(1, coeff_bound + 1):
        for n in sorted(range(-nb, nb + 1), key=lambda v: (abs(v), -v)):
            ds, dt = frac(m * SJ - n * SN), frac(m * TJ - n * TN)
            scan.append((abs(ds * w1 + dt * w2), m, n))
    best = min(scan, key=lambda h: h[0])
    # float estimates are good to ~1e-15 relative, widen the cut before the exact check
    cands = [(m, n) for r, m, n in scan if r < 2 * tol] or [best[1:]]
    hits = []
    for m, n in cands:
        r, a, b = relation_residual(J, Jnt, L, m, n)
        if r < tol:
            hits.append((m, abs(n), r, (m, n, a, b)))
    if not hits:
        r, _, _ = relation_residual(J, Jnt, L, *best[1:])
        return LatticeRelation(None, float(r), False)
    hits.sort(key=lambda h: (h[0], h[1]))
    m, _, r, coeffs = hits[0]
    g = math.gcd(*[c for c in coeffs if c])
    rel = LatticeRelation(coeffs, float(r), True, g)
    if lll:
        rel.lll_coefficients = lll_relation(J, Jnt, L, digits=max(10, int(-math.log10(tol)) - 2))
    return rel


def lll_relation(J, Jnt, L: PeriodLattice, digits: int = 20) -> Optional[tuple]:
    """Integer relation c0 J + c1 J_nt + c2 omega_plus + c3 omega_second ~ 0 via LLL.

    Returned in the (m, n, a, b) convention with m > 0.
    """
    import flint

    K = mpmath.mpf(10) ** digits
    vals = [mpmath.mpc(J), mpmath.mpc(Jnt), mpmath.mpc(L.omega_plus), mpmath.mpc(L.omega_second)]
    with mpmath.workprec(L.prec + 20):
        rows = []
        for i, v in enumerate(vals):
            row = [0] * 4
            row[i] = 1
            row += [int(mpmath.nint(K * v.real)), int(mpmath.nint(K * v.imag))]
            rows.append(row)
    red = flint.fmpz_mat(rows).lll()
    for i in range(red.nrows()):
        c = [int(red[i, j]) for j in range(4)]
        if c[0] == 0:
            continue
        if c[0] < 0:
            c = [-x for x in c]
        m, n, a, b = c[0], -c[1], c[2], c[3]
        return (m, n, a, b)
    return None
