"""Pure-Python (mpmath) twin of the compiled term-summation kernel.

Same inputs, same traversal order and block reduction, so results agree with
the MPFR kernel to working precision.  Used when the extension is absent.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import mpmath


def _q(s, ctx):
    f = Fraction(s)
    return ctx.mpf(f.numerator) / f.denominator


class Kernel:
    def __init__(self, prec, nus, coefs, block_size=512):
        self.prec = prec
        self.block_size = block_size
        self.ctx = ctx = mpmath.MPContext()
        ctx.prec = prec
        s2, s3, s6 = ctx.sqrt(2), ctx.sqrt(3), ctx.sqrt(6)
        self.eps1 = 3 - 2 * s2
        self.eps2 = 3 + 2 * s2
        self.twopi = 2 * ctx.pi
        self.orbits = []
        for i, ((p, q), (c0, c1, c2, c3)) in enumerate(zip(nus, coefs)):
            p, q = _q(p, ctx), _q(q, ctx)
            n1, n2 = p + q * s2, p - q * s2
            if n1 <= 0 or n2 <= 0:
                raise ValueError(f"orbit {i} is not totally positive")
            coef = ctx.mpc(_q(c0, ctx) + _q(c1, ctx) * s2, _q(c2, ctx) * s3 + _q(c3, ctx) * s6)
            logc = math.log(float(abs(coef))) if coef != 0 else -math.inf
            self.orbits.append((n1, n2, float(n1), float(n2), coef, logc))

    @property
    def size(self):
        return len(self.orbits)

    @property
    def nblocks(self):
        return (len(self.orbits) + self.block_size - 1) // self.block_size

    def run(self, limits, log_thr, threads=1):
        ctx = self.ctx
        lims = []
        Y1 = Y2 = math.inf
        for i, lim in enumerate(limits):
            if lim is None:
                lims.append(None)
                continue
            z = ctx.mpc(ctx.mpf(lim[0]), ctx.mpf(lim[1]))
            if z.imag <= 0:
                raise ValueError("integration limit not in the upper half plane")
            lims.append(z)
            if i < 2:
                Y1 = min(Y1, float(z.imag))
            else:
                Y2 = min(Y2, float(z.imag))
        if (lims[0] is None and lims[1] is None) or (lims[2] is None and lims[3] is None):
            return "0", "0", 0, 0
        job = (lims, Y1, Y2, log_thr)
        nb = self.nblocks
        if threads > 1 and nb > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(lambda b: self._block(b, job), range(nb)))
        else:
            parts = [self._block(b, job) for b in range(nb)]
        with ctx.workprec(self.prec + 64):
            tot = ctx.mpc(0)
            for p, _, _ in parts:
                tot += p
        terms = sum(p[1] for p in parts)
        depth = max((p[2] for p in parts), default=0)
        dps = int((self.prec + 64) * 0.30103) + 2
        return ctx.nstr(tot.real, dps), ctx.nstr(tot.imag, dps), terms, depth

    def _delta(self, tm, a, b):
        ctx = self.ctx
        out = ctx.mpc(0)
        if b is not None:
            out += ctx.expj(tm * b)
        if a is not None:
            out -= ctx.expj(tm * a)
        return out

    def _block(self, b, job):
        ctx = self.ctx
        lims, Y1, Y2, log_thr = job
        ln_eps = math.log(3 - 2 * math.sqrt(2))
        terms = depth = 0
        acc = ctx.mpc(0)
        for n1, n2, n1d, n2d, coef, logc in self.orbits[b * self.block_size:(b + 1) * self.block_size]:
            kc = math.floor(math.log(n2d * Y2 / (n1d * Y1)) / (2 * ln_eps) + 0.5)
            logm = math.log(n1d) + math.log(n2d)
            for direction in (0, 1):
                k = kc if direction == 0 else kc - 1
                m1, m2 = n1, n2
                if k >= 0:
                    for _ in range(k):
                        m1, m2 = m1 * self.eps1, m2 * self.eps2
                else:
                    for _ in range(-k):
                        m1, m2 = m1 * self.eps2, m2 * self.eps1
                while True:
                    lb = logc + 1.3862943611198906 - 2 * math.pi * (float(m1) * Y1 + float(m2) * Y2) - logm
                    if lb < log_thr:
                        break
                    terms += 1
                    depth = max(depth, abs(k - kc))
                    d1 = self._delta(self.twopi * m1, lims[0], lims[1])
                    d2 = self._delta(self.twopi * m2, lims[2], lims[3])
                    with ctx.workprec(self.prec + 64):
                        acc += coef * (d1 * d2 / (m1 * m2))
                    if direction == 0:
                        k += 1
                        m1, m2 = m1 * self.eps1, m2 * self.eps2
                    else:
                        k -= 1
                        m1, m2 = m1 * self.eps2, m2 * self.eps1
        return acc, terms, depth
