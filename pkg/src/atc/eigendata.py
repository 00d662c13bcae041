"""Classical eigenvalues, their base change to Q(sqrt2), and the Hecke table.

The seed form is a weight 2 newform of level 40 with quadratic character
(10/.).  Its prime coefficients c_p live in Q(sqrt2, sqrt-3) and are ingested
as data.  From them we build a_P for primes P of Z[sqrt2] and extend to all
ideals through the Euler factor (1 - a_P X + psi(P) N(P) X^2)^-1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import mpmath
import sympy

from .nfq import (
    CoefElem,
    IdealF0,
    enumerate_ideals_factored,
    factor_rational_prime,
    kronecker,
    nebentypus_psi,
)


class EigenDataError(ValueError):
    """Invalid or insufficient eigenvalue data."""


# The pinned Galois conjugate: c_5^2 = -1 + 2 sqrt-6.
PINNED_C5_SQUARED = CoefElem(-1, 0, 0, 2)


def epsilon(p: int) -> int:
    """The nebentypus (10/p) of the classical form."""
    return kronecker(10, p)


def chi_sqrt2(p: int) -> int:
    """Quadratic character of Q(sqrt2): +1 split, -1 inert, 0 at 2."""
    return kronecker(8, p)


@dataclass(frozen=True)
class ClassicalEigenData:
    level: int
    nebentypus: str
    coeffs: Mapping[int, CoefElem]
    provenance: str = ""

    @property
    def prime_bound(self) -> int:
        """Largest B such that c_p is known for every prime p <= B."""
        b = 1
        for p in sympy.primerange(2, max(self.coeffs) + 2):
            if p not in self.coeffs:
                return b
            b = p
        return max(self.coeffs)

    def c(self, p: int) -> CoefElem:
        try:
            return self.coeffs[p]
        except KeyError:
            raise EigenDataError(f"insufficient eigenvalue data: c_{p} missing") from None

    def to_fixture(self) -> dict:
        return {
            "level": self.level,
            "nebentypus": self.nebentypus,
            "basis": ["1", "sqrt2", "sqrt-3", "sqrt-6"],
            "coeffs": {str(p): self.coeffs[p].to_strings() for p in sorted(self.coeffs)},
        }


def _parse_fixture(obj: dict) -> ClassicalEigenData:
    try:
        level = int(obj["level"])
        neb = str(obj["nebentypus"])
        basis = obj.get("basis", ["1", "sqrt2", "sqrt-3", "sqrt-6"])
        raw = obj["coeffs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise EigenDataError(f"parse error: {exc}") from exc
    if list(basis) != ["1", "sqrt2", "sqrt-3", "sqrt-6"]:
        raise EigenDataError(f"basis mismatch: {basis}")
    coeffs = {}
    for k, v in raw.items():
        if not isinstance(v, (list, tuple)) or len(v) != 4:
            raise EigenDataError(f"basis-dimension mismatch at p={k}")
        try:
            coeffs[int(k)] = CoefElem(*(Fraction(str(x)) for x in v))
        except (ValueError, ZeroDivisionError) as exc:
            raise EigenDataError(f"parse error at p={k}: {exc}") from exc
    return ClassicalEigenData(level, neb, coeffs, obj.get("provenance", "fixture"))


def validate(data: ClassicalEigenData, pinned_c5_squared: CoefElem | None = PINNED_C5_SQUARED) -> None:
    """Ramanujan bound, inner twist, dyadic product and conjugate pinning checks."""
    bad = {p for p in sympy.primefactors(data.level)}
    bound = data.prime_bound
    for p in sympy.primerange(2, bound + 1):
        c = data.coeffs[p]
        if p in bad:
            continue
        with mpmath.workdps(30):
            if abs(c.embed(1, 1, 80)) > 2 * mpmath.sqrt(p) * (1 + mpmath.mpf(10) ** -20):
                raise EigenDataError(f"Ramanujan bound violated at p={p}")
        if c.sigma_tau() != chi_sqrt2(p) * c:
            raise EigenDataError(f"inner-twist violation at p={p}")
    if 2 in data.coeffs:
        c2 = data.coeffs[2]
        if c2 * c2.sigma_tau() != CoefElem(-2):
            raise EigenDataError("inner-twist violation at p=2: c_2 c_2^st != -2")
    if pinned_c5_squared is not None and 5 in data.coeffs:
        if data.coeffs[5] * data.coeffs[5] != pinned_c5_squared:
            sq = data.coeffs[5] * data.coeffs[5]
            raise EigenDataError(f"wrong Galois conjugate: c_5^2 = {sq!r}")


def import_eigendata(source, fmt: str = "fixture-json", validate_data: bool = True) -> ClassicalEigenData:
    """Read eigenvalue data from bytes/str/dict in fixture or LMFDB format."""
    if isinstance(source, (bytes, bytearray)):
        source = source.decode()
    if isinstance(source, str):
        try:
            obj = json.loads(source)
        except json.JSONDecodeError as exc:
            raise EigenDataError(f"parse error: {exc}") from exc
    else:
        obj = source
    if fmt == "fixture-json":
        data = _parse_fixture(obj)
    elif fmt == "lmfdb-json":
        data = _parse_fixture(lmfdb_to_fixture(obj))
    else:
        raise EigenDataError(f"unknown format {fmt!r}")
    if validate_data:
        validate(data)
    return data


def load_fixture(path) -> ClassicalEigenData:
    with open(path, "rb") as fh:
        return import_eigendata(fh.read())


# ---------------------------------------------------------------------------
# base change
# ---------------------------------------------------------------------------

def base_change_prime(P: IdealF0, data: ClassicalEigenData) -> CoefElem:
    """a_P for a prime P of Z[sqrt2] in terms of c_p, p below P."""
    p = sympy.primefactors(P.norm)[0]
    c = data.c(p)
    if p == 2:
        return c + c.sigma_tau()
    if p == 5:
        return c * c
    kind = factor_rational_prime(p).kind
    if kind == "split":
        return c
    return c * c - CoefElem(2 * epsilon(p) * p)


@dataclass
class EigenTable:
    """a_m for every ideal m of norm <= bound."""

    by_ideal: dict
    level_ideal: IdealF0
    bound: int
    factorizations: dict = field(default_factory=dict, repr=False)
    prime_values: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, I: IdealF0) -> CoefElem:
        return self.by_ideal[I]

    def __len__(self):
        return len(self.by_ideal)

    def items(self):
        return self.by_ideal.items()

    def psi(self, P: IdealF0) -> int:
        return nebentypus_psi(P)


def _prime_power_values(aP: CoefElem, psiP: int, NP: int, kmax: int) -> list[CoefElem]:
    vals = [CoefElem(1), aP]
    for _ in range(2, kmax + 1):
        vals.append(aP * vals[-1] - CoefElem(psiP * NP) * vals[-2])
    return vals


def extend_table(data: ClassicalEigenData, bound: int) -> EigenTable:
    """Hecke table up to norm `bound` from the classical data."""
    if data.prime_bound < bound:
        # split primes up to `bound` are needed, inert ones up to sqrt(bound)
        for p in sympy.primerange(data.prime_bound + 1, bound + 1):
            if factor_rational_prime(p).kind != "inert" or p * p <= bound:
                raise EigenDataError(
                    f"insufficient eigenvalue data: c_{p} needed for norm bound {bound}"
                )
    ideals = enumerate_ideals_factored(bound)
    level = IdealF0(5)
    prime_vals: dict = {}
    by_ideal = {}
    facs = {}
    for I, fac in ideals:
        v = CoefElem(1)
        for P, e in fac:
            pv = prime_vals.get(P)
            if pv is None or len(pv) <= e:
                aP = base_change_prime(P, data)
                kmax = max(e, int(math.log(bound, P.norm)) if P.norm > 1 else e)
                psiP = nebentypus_psi(P)
                pv = _prime_power_values(aP, psiP, P.norm, kmax)
                prime_vals[P] = pv
            v = v * pv[e]
        by_ideal[I] = v
        facs[I] = fac
    return EigenTable(by_ideal, level, bound, facs, prime_vals)


def pseudo_eigenvalue(table: EigenTable) -> CoefElem:
    """lambda_N = a_(5) / 5."""
    a5 = table.by_ideal[table.level_ideal]
    return a5 * CoefElem(Fraction(1, 5))


def conjugate_table(table: EigenTable) -> EigenTable:
    return EigenTable(
        {I: a.conj() for I, a in table.by_ideal.items()},
        table.level_ideal,
        table.bound,
        table.factorizations,
        {P: [x.conj() for x in v] for P, v in table.prime_values.items()},
    )


# ---------------------------------------------------------------------------
# LMFDB payload mapping
# ---------------------------------------------------------------------------

def _roots_in_field(poly_coeffs: list, target: int, prec: int = 60) -> list[list[Fraction]]:
    """Elements s of Q[y]/(g) with s^2 = target, in power-basis coordinates.

    g is given low degree first.  Found numerically from the conjugates of y
    and confirmed exactly.
    """
    g = [Fraction(x) for x in poly_coeffs]
    n = len(g) - 1
    with mpmath.workdps(prec):
        roots = mpmath.polyroots([mpmath.mpf(x.numerator) / x.denominator for x in reversed(g)], maxsteps=200, extraprec=200)
        V = mpmath.matrix([[r ** j for j in range(n)] for r in roots])
        tval = mpmath.sqrt(mpmath.mpc(target))
        out = []
        for signs in range(2 ** n):
            rhs = mpmath.matrix([tval * (1 if (signs >> i) & 1 else -1) for i in range(n)])
            try:
                sol = mpmath.lu_solve(V, rhs)
            except ZeroDivisionError:
                continue
            if any(abs(mpmath.im(x)) > mpmath.mpf(10) ** (-prec // 2) for x in sol):
                continue
            cand = [Fraction(str(mpmath.nstr(mpmath.re(x), prec // 2))).limit_denominator(10 ** 12) for x in sol]
            if _poly_square_equals(cand, g, target):
                if cand not in out:
                    out.append(cand)
    return out


def _polymulmod(a, b, g):
    n = len(g) - 1
    prod = [Fraction(0)] * (2 * n - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            prod[i + j] += x * y
    for k in range(len(prod) - 1, n - 1, -1):
        t = prod[k] / g[n]
        if t:
            for j in range(n + 1):
                prod[k - n + j] -= t * g[j]
    return prod[:n]


def _poly_square_equals(s, g, target) -> bool:
    sq = _polymulmod(s, s, g)
    return sq[0] == target and all(x == 0 for x in sq[1:])


def _canonical_twist(data: ClassicalEigenData) -> ClassicalEigenData:
    """Choose between f and its conjugate under sigma*tau, which share c_5^2, the inner
    twist and the base change (away from 2 the conjugate is the twist by (2/.)).

    The first c_p with (2/p) = -1 and c_p != 0 must have a positive leading coordinate.
    """
    for p in sorted(data.coeffs):
        c = data.coeffs[p]
        if p % 2 == 0 or chi_sqrt2(p) != -1 or c.is_zero():
            continue
        lead = next(x for x in c.to_strings() if Fraction(x) != 0)
        if Fraction(lead) > 0:
            return data
        twisted = {q: v.sigma_tau() for q, v in data.coeffs.items()}
        return ClassicalEigenData(data.level, data.nebentypus, twisted, data.provenance)
    return data


def lmfdb_to_fixture(payload: dict, pinned_c5_squared: CoefElem = PINNED_C5_SQUARED) -> dict:
    """Map an LMFDB mf_hecke_nf style record to the fixture schema.

    Expected keys: field_poly (low degree first), hecke_ring_numerators,
    hecke_ring_denominators, ap (coordinates in the Hecke ring basis, one per
    prime in increasing order), and optionally level / char label.  The
    identification of sqrt2 and sqrt-3 inside the field is fixed by requiring
    c_5^2 = -1 + 2 sqrt-6 and the inner-twist relations; if no identification
    passes, the payload is rejected.
    """
    try:
        g = [Fraction(x) for x in payload["field_poly"]]
        nums = payload["hecke_ring_numerators"]
        dens = payload["hecke_ring_denominators"]
        aps = payload["ap"]
    except KeyError as exc:
        raise EigenDataError(f"LMFDB payload missing field {exc}") from None
    n = len(g) - 1
    if n != 4:
        raise EigenDataError(f"basis mismatch: coefficient field has degree {n}, expected 4")
    # Hecke ring basis element i = nums[i] / dens[i] in the power basis
    basis = [[Fraction(x) / Fraction(dens[i]) for x in nums[i]] + [Fraction(0)] * (n - len(nums[i])) for i in range(n)]
    primes = list(sympy.primerange(2, sympy.prime(len(aps)) + 1))
    power = []
    for ap in aps:
        v = [Fraction(0)] * n
        for i, x in enumerate(ap):
            for j in range(n):
                v[j] += Fraction(x) * basis[i][j]
        power.append(v)
    s2s = _roots_in_field(payload["field_poly"], 2)
    s3s = _roots_in_field(payload["field_poly"], -3)
    if not s2s or not s3s:
        raise EigenDataError("basis mismatch: field does not contain sqrt2 and sqrt-3")
    for s2 in s2s:
        for s3 in s3s:
            s6 = _polymulmod(s2, s3, g)
            # solve v = c0 + c1 s2 + c2 s3 + c3 s6 over Q
            M = sympy.Matrix([[1 if j == 0 else 0 for j in range(n)], s2, s3, s6]).T
            try:
                Minv = M.inv()
            except ValueError:
                continue
            coeffs = {}
            for p, v in zip(primes, power):
                c = Minv * sympy.Matrix(v)
                coeffs[p] = CoefElem(*(Fraction(int(x.p), int(x.q)) for x in c))
            data = ClassicalEigenData(int(payload.get("level", 40)), "kronecker:10", coeffs, "lmfdb")
            try:
                validate(data, pinned_c5_squared)
            except EigenDataError:
                continue
            data = _canonical_twist(data)
            fx = data.to_fixture()
            fx["provenance"] = payload.get("label", "lmfdb")
            return fx
    raise EigenDataError("inner-twist violation: no identification of sqrt2, sqrt-3 matches the pinned conjugate")
