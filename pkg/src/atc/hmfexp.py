"""Fourier expansion of the base-changed form over Q(sqrt2) and termwise integration.

f0(z1, z2) = sum over totally positive nu in d^-1 of a_{(nu)d} e(v1(nu) z1 + v2(nu) z2),
with d = (d0), d0 = 4 - 2 sqrt2.  Terms are grouped in unit orbits nu0 * eps^k,
eps = 3 - 2 sqrt2; an orbit is stored once and its translates are walked by the
summation kernel.

The differential forms are handled as weighted sums of four pieces
(f0 or its conjugate, plain or epsilon-twisted), see FormSpec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .eigendata import EigenTable
from .nfq import D0, EPS_TP, CoefElem, F0Elem

try:
    from . import _kernel as _ext
except ImportError:  # pragma: no cover - exercised when the extension is not built
    _ext = None
from . import _kernel_py

BACKEND = "mpfr" if _ext is not None else "python"

LN2 = math.log(2.0)
_S2 = math.sqrt(2.0)
_EPS1 = 3 - 2 * _S2
_RHO = 3 + 2 * _S2


def kernel_class(backend: str | None = None):
    backend = backend or BACKEND
    if backend == "mpfr":
        if _ext is None:
            raise RuntimeError("compiled kernel not available")
        return _ext.Kernel
    if backend == "python":
        return _kernel_py.Kernel
    raise ValueError(f"unknown backend {backend!r}")


class EvaluationRangeError(ValueError):
    """A point or limit lies below the height the table was built for."""


# ---------------------------------------------------------------------------
# term tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Orbit:
    nu: F0Elem          # canonical representative: tp generator of m divided by d0
    norm: int           # N(m) = N(nu d)
    a: CoefElem
    kmin: int           # translates nu * eps^k with kmin <= k <= kmax are kept
    kmax: int


@dataclass
class TermTable:
    orbits: list
    norm_bound: int
    min_y: tuple
    prec: int
    unit_depth: int

    def terms(self) -> Iterator[tuple]:
        """All kept (nu, a) pairs, orbit by orbit."""
        for o in self.orbits:
            for k in range(o.kmin, o.kmax + 1):
                yield o.nu * EPS_TP ** k, o.a

    def __len__(self):
        return sum(o.kmax - o.kmin + 1 for o in self.orbits)

    @property
    def max_norm(self) -> int:
        return max((o.norm for o in self.orbits), default=0)


def _orbit_range(n1: float, n2: float, loga: float, y1: float, y2: float, log_thr: float):
    """k-range where log|a| - 2 pi (n1 eps^k y1 + n2 eps^-k y2) >= log_thr."""
    if loga == -math.inf:
        return 0, -1
    ln_e = math.log(_EPS1)

    def ok(k):
        return loga - 2 * math.pi * (n1 * math.exp(k * ln_e) * y1 + n2 * math.exp(-k * ln_e) * y2) >= log_thr

    kc = round(math.log(n2 * y2 / (n1 * y1)) / (2 * ln_e))
    if not ok(kc):
        return 0, -1
    lo = hi = kc
    while ok(hi + 1):
        hi += 1
    while ok(lo - 1):
        lo -= 1
    return lo, hi


def build_expansion(table: EigenTable, norm_bound: int, min_y: Sequence[float], prec: int = 113) -> TermTable:
    """Truncated expansion valid at every point with Im z1 >= min_y[0], Im z2 >= min_y[1].

    Each kept term has |a| exp(-2 pi (v1(nu) y1 + v2(nu) y2)) >= 2^-prec at the
    corner (min_y[0], min_y[1]); orbits with no such term are dropped.
    Orbits come out sorted by decreasing size of their largest term.
    """
    if norm_bound > table.bound:
        raise ValueError(f"norm bound {norm_bound} exceeds table coverage {table.bound}")
    y1, y2 = (float(v) for v in min_y)
    if y1 <= 0 or y2 <= 0:
        raise ValueError("min_y must be positive")
    log_thr = -prec * LN2
    d0inv = D0.inverse()
    rows = []
    for I, a in table.items():
        if I.norm > norm_bound:
            continue
        nu = I.gen * d0inv
        n1, n2 = float(nu.embed("v1")), float(nu.embed("v2"))
        absa = math.sqrt(float(a.abs2()))
        loga = math.log(absa) if absa > 0 else -math.inf
        lo, hi = _orbit_range(n1, n2, loga, y1, y2, log_thr)
        if hi < lo:
            continue
        # largest term sits at the balancing point
        best = loga - 4 * math.pi * math.sqrt(n1 * n2 * y1 * y2)
        rows.append((-best, I.norm, Orbit(nu, I.norm, a, lo, hi)))
    rows.sort(key=lambda r: (r[0], r[1]))
    orbits = [r[2] for r in rows]
    depth = 0
    for o in orbits:
        # depth measured from the balanced representative of each orbit
        n1, n2 = float(o.nu.embed("v1")), float(o.nu.embed("v2"))
        kb = round(math.log(n2 / n1) / (2 * math.log(_EPS1)))
        depth = max(depth, abs(o.kmin - kb), abs(o.kmax - kb))
    return TermTable(orbits, norm_bound, (y1, y2), prec, depth)


# ---------------------------------------------------------------------------
# forms
# ---------------------------------------------------------------------------



def c1_prefactor(ctx=mpmath.mp):
    return -4 * ctx.pi ** 2 / ctx.sqrt(8)


@dataclass(frozen=True)
class FormSpec:
    """One piece scale * g(z1, z2) dz1 dz2 of a differential form.

    g is f0 or its coefficientwise conjugate; the epsilon-twisted piece is
    g(e1 z1, e2 conj(z2)) with e = sqrt2 - 1.  scale = weight * (-4 pi^2 / sqrt8).
    """

    variant: str                  # "f0" | "f0_bar"
    twist: str                    # "plain" | "eps"
    weight: CoefElem = field(default_factory=lambda: CoefElem(1))

    def __post_init__(self):
        if self.variant not in ("f0", "f0_bar"):
            raise ValueError(f"bad variant {self.variant!r}")
        if self.twist not in ("plain", "eps"):
            raise ValueError(f"bad twist {self.twist!r}")

    def scale(self, prec: int = 113):
        with mpmath.workprec(prec):
            return self.weight.embed_place("v1", prec) * c1_prefactor()


def omega_form(weight: CoefElem = CoefElem(1), variant: str = "f0") -> list:
    """omega = scale (g(z1,z2) - g(e1 z1, e2 conj z2))."""
    return [FormSpec(variant, "plain", weight), FormSpec(variant, "eps", -weight)]


def alpha_form(lam: CoefElem, normalized: bool = True) -> list:
    """The W_N-symmetrised form alpha = omega_f0 + W_N(omega_f0).

    W_N acts on f0 by f0 -> conj(lam) f0_bar in the v1 embedding used here.
    With `normalized` the sum is divided by 1 + conj(lam), which makes every
    coefficient real and the leading one equal to 1.
    """
    lb = lam.conj()
    w0, w1 = CoefElem(1), lb
    if normalized:
        inv = (CoefElem(1) + lb).inverse()
        w0, w1 = w0 * inv, w1 * inv
    return omega_form(w0, "f0") + omega_form(w1, "f0_bar")


def combined_coefficient(forms: Sequence[FormSpec], twist: str):
    """(w_f0, w_f0bar) summed over the pieces with the given twist."""
    w0, w1 = CoefElem(0), CoefElem(0)
    for f in forms:
        if f.twist != twist:
            continue
        if f.variant == "f0":
            w0 = w0 + f.weight
        else:
            w1 = w1 + f.weight
    return w0, w1


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------

def _check_height(z, ymin, what):
    if z.imag < ymin * (1 - 1e-12):
        raise EvaluationRangeError(f"{what} has Im = {float(z.imag):.3g} below table height {ymin:.3g}")


def evaluate(form: FormSpec, table: TermTable, z1, z2, prec: int = 113):
    """scale * g at the point (z1, z2) (twist substitution applied internally)."""
    with mpmath.workprec(prec + 20):
        z1, z2 = mpmath.mpc(z1), mpmath.mpc(z2)
        if form.twist == "eps":
            e1 = mpmath.sqrt(2) - 1
            e2 = -mpmath.sqrt(2) - 1
            z1, z2 = e1 * z1, e2 * mpmath.conj(z2)
        _check_height(z1, table.min_y[0], "z1")
        _check_height(z2, table.min_y[1], "z2")
        tot = mpmath.mpc(0)
        s2 = mpmath.sqrt(2)
        for nu, a in table.terms():
            c = a.conj() if form.variant == "f0_bar" else a
            na = mpmath.mpf(nu.a.numerator) / nu.a.denominator
            nb = mpmath.mpf(nu.b.numerator) / nu.b.denominator
            v1 = na + nb * s2
            v2 = na - nb * s2
            tot += c.embed_place("v1", prec + 20) * mpmath.expj(2 * mpmath.pi * (v1 * z1 + v2 * z2))
        v = form.scale(prec + 20) * tot
    with mpmath.workprec(prec):
        return +v


# ---------------------------------------------------------------------------
# tail bounds
# ---------------------------------------------------------------------------

def _orbit_sum_bound(u: float) -> float:
    """Upper bound for sum_k exp(-u (t_k + 1/t_k)) over a geometric t_k of ratio rho."""
    if u <= 0:
        return math.inf
    s = 2 * math.exp(-2 * u)
    j = 1
    while True:
        term = 2 * math.exp(-u * _RHO ** j)
        s += term
        if term < 1e-300 or term < s * 1e-17:
            break
        j += 1
    return s


_SIEVE = (np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))


def _norm_counts(n: int):
    """(d(N), r(N)) for N <= n: divisor counts and ideal counts sum_{d|N} chi8(d)."""
    global _SIEVE
    if len(_SIEVE[0]) <= n:
        d = np.zeros(n + 1, dtype=np.int64)
        r = np.zeros(n + 1, dtype=np.int64)
        chi = {1: 1, 7: 1, 3: -1, 5: -1}
        for i in range(1, n + 1):
            d[i::i] += 1
            c = chi.get(i % 8, 0)
            if c:
                r[i::i] += c
        _SIEVE = (d, r)
    return _SIEVE


def truncation_tail_bound(norm_bound: int, Y1: float, Y2: float, coef_factor: float = 1.0) -> float:
    """Bound on sum over orbits of norm > norm_bound of |b D1 D2 / (m1 m2)|.

    Ingredients: r(N) ideals of norm N, |a_m| <= d(N) sqrt(N)
    (Ramanujan bound at each prime, d(N) bounding the ideal divisor count),
    |D| <= 2 exp(-2 pi m Y), m1 m2 = N/8 and the unit-orbit sum bound.
    coef_factor bounds |b_m| / |a_m|.  Norms up to a cutoff are summed
    exactly; beyond it d(N) <= 2 sqrt(N) and an integral finish the job.
    """
    if not (math.isfinite(Y1) and math.isfinite(Y2)):
        return 0.0
    c = 4 * math.pi * math.sqrt(Y1 * Y2 / 8)       # 2u = c sqrt(N)
    s0 = math.sqrt(norm_bound + 1)
    nmax = int((s0 + 80.0 / c) ** 2) + 1
    nmax = min(nmax, 64 * norm_bound + 10**6)
    d, r = _norm_counts(nmax)
    Ns = np.arange(norm_bound + 1, nmax + 1, dtype=np.float64)
    dd = d[norm_bound + 1:nmax + 1].astype(np.float64) * r[norm_bound + 1:nmax + 1]
    u = c * np.sqrt(Ns) / 2
    step = max(1, len(u) // 4096)
    # the orbit bound decreases in u, so chunk-start values overestimate
    ob = np.repeat(np.array([_orbit_sum_bound(x) for x in u[::step]]), step)[: len(u)]
    tail = float(np.sum(dd * np.sqrt(Ns) * 32.0 / Ns * ob))
    # N > nmax: summand <= 4N * sqrt(N) * 32/N * 2 exp(-c sqrt N) * (orbit factor <= 2)
    S = math.sqrt(nmax)
    tail += 512 * 2 * math.exp(-c * S) * (S * S / c + 2 * S / c ** 2 + 2 / c ** 3)
    return 2.0 * coef_factor * tail


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

@dataclass
class IntegralResult:
    value: complex            # mpc
    tail_bound: float         # truncation in the norm bound
    dropped_bound: float      # unit translates skipped by the kernel
    terms: int
    depth: int

    def __add__(self, o: "IntegralResult"):
        return IntegralResult(self.value + o.value, self.tail_bound + o.tail_bound,
                              self.dropped_bound + o.dropped_bound, self.terms + o.terms,
                              max(self.depth, o.depth))

    def __neg__(self):
        return IntegralResult(-self.value, self.tail_bound, self.dropped_bound, self.terms, self.depth)

    def scaled(self, s):
        a = abs(complex(s))
        return IntegralResult(self.value * s, self.tail_bound * a, self.dropped_bound * a, self.terms, self.depth)

    @property
    def error_bound(self) -> float:
        return self.tail_bound + self.dropped_bound


ZERO_RESULT = IntegralResult(mpmath.mpc(0), 0.0, 0.0, 0, 0)


def _limit(z):
    if z is None:
        return None
    if isinstance(z, str) and z in ("oo", "i*oo", "inf"):
        return None
    return mpmath.mpc(z)


class Integrator:
    """Termwise double integrals of a fixed form over a fixed term table.

    One compiled kernel per distinct combined coefficient; the plain and
    twisted pieces of omega share a kernel when their weights are opposite.
    """

    def __init__(self, table: TermTable, forms: Sequence[FormSpec], prec: int = 113,
                 threads: int = 1, backend: str | None = None, block_size: int = 512):
        self.table = table
        self.forms = list(forms)
        self.prec = prec
        self.threads = threads
        self.backend = backend or BACKEND
        n = max(1, len(table.orbits))
        self.work_prec = prec + 30 + int(math.log2(n)) + 1
        self.log_thr = -(prec + 20) * LN2 - math.log(n)
        Kcls = kernel_class(self.backend)
        nus = [(str(o.nu.a), str(o.nu.b)) for o in table.orbits]
        self.groups = []          # (twist, kernel, sign, coef_factor)
        kernels: dict = {}
        for twist in ("plain", "eps"):
            w0, w1 = combined_coefficient(self.forms, twist)
            if w0.is_zero() and w1.is_zero():
                continue
            key, sign = (w0, w1), 1
            if key not in kernels and (-w0, -w1) in kernels:
                key, sign = (-w0, -w1), -1
            if key not in kernels:
                coefs = []
                for o in table.orbits:
                    b = key[0] * o.a + key[1] * o.a.conj()
                    coefs.append(tuple(str(c) for c in b.to_strings()))
                kernels[key] = Kcls(self.work_prec, nus, coefs, block_size)
            fac = math.sqrt(float(w0.abs2())) + math.sqrt(float(w1.abs2()))
            self.groups.append((twist, kernels[key], sign, fac))

    def _limits_for(self, twist, x1, x2, y1, y2):
        if twist == "plain":
            return x1, x2, y1, y2
        e1 = mpmath.sqrt(2) - 1
        e2 = -mpmath.sqrt(2) - 1
        f = lambda z: None if z is None else e1 * z
        g = lambda z: None if z is None else e2 * mpmath.conj(z)
        return f(x1), f(x2), g(y1), g(y2)

    def double_integral(self, x1, x2, y1, y2) -> IntegralResult:
        """int_{x1}^{x2} int_{y1}^{y2} of the form; None (or "oo") stands for i*oo."""
        with mpmath.workprec(self.work_prec):
            x1, x2, y1, y2 = (_limit(z) for z in (x1, x2, y1, y2))
            for z in (x1, x2, y1, y2):
                if z is not None and z.imag <= 0:
                    raise ValueError("finite integration limits must lie in the upper half plane")
            total = ZERO_RESULT
            for twist, kern, sign, fac in self.groups:
                lims = self._limits_for(twist, x1, x2, y1, y2)
                finite = [z for z in lims if z is not None]
                Y1 = min((float(z.imag) for z in lims[:2] if z is not None), default=math.inf)
                Y2 = min((float(z.imag) for z in lims[2:] if z is not None), default=math.inf)
                if Y1 < self.table.min_y[0] * (1 - 1e-12) or Y2 < self.table.min_y[1] * (1 - 1e-12):
                    raise EvaluationRangeError(
                        f"limits reach Im = ({Y1:.3g}, {Y2:.3g}) below table height {self.table.min_y}")
                if not finite:
                    continue
                dps = int(self.work_prec * 0.30103) + 5
                strs = [None if z is None else (mpmath.nstr(z.real, dps), mpmath.nstr(z.imag, dps))
                        for z in lims]
                re, im, terms, depth = kern.run(strs, self.log_thr, self.threads)
                s = mpmath.mpc(mpmath.mpf(re), mpmath.mpf(im)) * sign
                # C1 * (-1 / (4 pi^2)) = 1 / sqrt8
                v = s / mpmath.sqrt(8)
                tail = truncation_tail_bound(self.table.norm_bound, Y1, Y2, fac) / math.sqrt(8)
                # skipped translates: each below exp(log_thr), geometric in k
                dropped = 2 * len(self.table.orbits) * math.exp(self.log_thr) * 2.0 / math.sqrt(8)
                total = total + IntegralResult(v, tail, dropped, terms, depth)
            return total


def double_integral(forms, table: TermTable, x1, x2, y1, y2, prec: int = 113, **kw) -> IntegralResult:
    return Integrator(table, forms if isinstance(forms, (list, tuple)) else [forms], prec, **kw).double_integral(
        x1, x2, y1, y2)


def cusp_split(x1, x2, inner: tuple = (0, None)) -> list:
    """Rewrite int_{x1}^{x2} int_0^{i oo} with all finite limits in H.

    Returns signed jobs (sign, x1, x2, y1, y2) with None standing for i*oo:
    int_{-1/5x1}^{-1/5x2} int_{oo}^{i/sqrt5}  +  int_{x1}^{x2} int_{i/sqrt5}^{oo}.
    Uses that alpha is fixed by z -> -1/(5z) in both variables.
    """
    lo, hi = inner
    norm = lambda c: None if c is None or (isinstance(c, str) and c in ("oo", "inf")) else c
    lo, hi = norm(lo), norm(hi)
    if (lo, hi) == (0, None):
        sign = 1
    elif (lo, hi) == (None, 0):
        sign = -1
    else:
        raise ValueError("cusp_split needs inner limits {0, oo}")
    x1, x2 = mpmath.mpc(x1), mpmath.mpc(x2)
    r = mpmath.mpc(0, 1) / mpmath.sqrt(5)
    return [
        (sign, -1 / (5 * x1), -1 / (5 * x2), None, r),
        (sign, x1, x2, r, None),
    ]


def job_heights(jobs) -> tuple[float, float]:
    """Smallest imaginary parts the kernel will see for signed jobs, both twists included."""
    e1 = math.sqrt(2) - 1
    e2 = math.sqrt(2) + 1
    y1 = min((float(mpmath.mpc(z).imag) for j in jobs for z in j[1:3] if z is not None), default=1.0)
    y2 = min((float(mpmath.mpc(z).imag) for j in jobs for z in j[3:5] if z is not None), default=1.0)
    return min(y1, e1 * y1), min(y2, e2 * y2)


def integrate_jobs(eigen: EigenTable, jobs, norm_bound: int, forms, prec: int = 113,
                   threads: int = 1, backend: str | None = None, slack: float = 0.999):
    """Sum of signed jobs (sign, x1, x2, y1, y2) over one shared term table.

    Returns the total and the per-job results.
    """
    if not jobs:
        return ZERO_RESULT, []
    y1, y2 = job_heights(jobs)
    table = build_expansion(eigen, norm_bound, (y1 * slack, y2 * slack), prec=prec)
    integ = Integrator(table, forms, prec=prec, threads=threads, backend=backend)
    parts = []
    total = ZERO_RESULT
    for s, a, b, c, d in jobs:
        r = integ.double_integral(a, b, c, d).scaled(s)
        parts.append(r)
        total = total + r
    return total, parts
