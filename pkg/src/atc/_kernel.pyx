# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""MPFR term-summation kernel for the termwise double integrals.

Orbits are given by exact rationals: nu = p + q sqrt2 (balanced base of a
unit orbit) and a coefficient c0 + c1 sqrt2 + c2 sqrt-3 + c3 sqrt-6.  For a
job (x1, x2 | y1, y2) the kernel returns

    sum_orbits coef * sum_k D(m1; x1, x2) D(m2; y1, y2) / (m1 m2)

with m1 = v1(nu) eps^k, m2 = v2(nu) eps^-k, eps = 3 - 2 sqrt2 and
D(m; a, b) = e(m b) - e(m a), e(w) = exp(2 pi i w), e(i oo) = 0.  Terms whose
magnitude bound falls below exp(log_thr) are skipped; the unit exponent k
runs outward from the balancing point until that happens.

Blocks of orbits are summed independently (GIL released) and reduced in
block order, so the result does not depend on the number of threads.
"""

from libc.stdlib cimport malloc, free
from libc.math cimport log, floor, fabs, INFINITY

cdef extern from "gmp.h":
    ctypedef struct __mpq_struct:
        pass
    ctypedef __mpq_struct mpq_t[1]
    void mpq_init(mpq_t)
    void mpq_clear(mpq_t)
    int mpq_set_str(mpq_t, const char*, int)
    void mpq_canonicalize(mpq_t)

cdef extern from "mpfr.h":
    ctypedef struct __mpfr_struct:
        pass
    ctypedef __mpfr_struct mpfr_t[1]
    ctypedef __mpfr_struct* mpfr_ptr
    ctypedef long mpfr_prec_t
    ctypedef long mpfr_exp_t
    ctypedef int mpfr_rnd_t
    mpfr_rnd_t MPFR_RNDN
    void mpfr_init2(mpfr_ptr, mpfr_prec_t) nogil
    void mpfr_clear(mpfr_ptr) nogil
    int mpfr_set(mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_set_ui(mpfr_ptr, unsigned long, mpfr_rnd_t) nogil
    int mpfr_set_si(mpfr_ptr, long, mpfr_rnd_t) nogil
    int mpfr_set_q(mpfr_ptr, mpq_t, mpfr_rnd_t)
    int mpfr_set_str(mpfr_ptr, const char*, int, mpfr_rnd_t)
    int mpfr_add(mpfr_ptr, mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_sub(mpfr_ptr, mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_mul(mpfr_ptr, mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_div(mpfr_ptr, mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_neg(mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_sqrt_ui(mpfr_ptr, unsigned long, mpfr_rnd_t)
    int mpfr_mul_ui(mpfr_ptr, mpfr_ptr, unsigned long, mpfr_rnd_t) nogil
    int mpfr_exp(mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_sin_cos(mpfr_ptr, mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil
    int mpfr_const_pi(mpfr_ptr, mpfr_rnd_t)
    double mpfr_get_d(mpfr_ptr, mpfr_rnd_t) nogil
    double mpfr_get_d_2exp(long*, mpfr_ptr, mpfr_rnd_t) nogil
    char* mpfr_get_str(char*, mpfr_exp_t*, int, size_t, mpfr_ptr, mpfr_rnd_t)
    void mpfr_free_str(char*)
    int mpfr_zero_p(mpfr_ptr) nogil
    int mpfr_sgn(mpfr_ptr) nogil
    int mpfr_abs(mpfr_ptr, mpfr_ptr, mpfr_rnd_t) nogil


cdef inline double _logabs(mpfr_ptr x) nogil:
    cdef long e
    cdef double m
    if mpfr_zero_p(x):
        return -INFINITY
    m = mpfr_get_d_2exp(&e, x, MPFR_RNDN)
    return log(fabs(m)) + e * 0.6931471805599453


cdef void _set_rational(mpfr_ptr out, str s):
    cdef mpq_t q
    mpq_init(q)
    b = s.encode()
    if mpq_set_str(q, b, 10) != 0:
        mpq_clear(q)
        raise ValueError(f"bad rational {s!r}")
    mpq_canonicalize(q)
    mpfr_set_q(out, q, MPFR_RNDN)
    mpq_clear(q)


cdef str _to_str(mpfr_ptr x):
    cdef mpfr_exp_t e
    cdef char* s = mpfr_get_str(NULL, &e, 10, 0, x, MPFR_RNDN)
    py = (<bytes>s).decode()
    mpfr_free_str(s)
    if mpfr_zero_p(x):
        return "0"
    neg = py.startswith("-")
    digits = py[1:] if neg else py
    return ("-" if neg else "") + "0." + digits + "e" + str(e)


cdef struct Job:
    int has[4]              # x1, x2, y1, y2 finite?
    double Y1, Y2           # minimal imaginary parts (outer, inner)
    double log_thr


cdef class Kernel:
    """Orbit data at a fixed binary precision."""

    cdef int n
    cdef long prec
    cdef mpfr_t* n1
    cdef mpfr_t* n2
    cdef mpfr_t* cre
    cdef mpfr_t* cim
    cdef double* n1d
    cdef double* n2d
    cdef double* logc
    cdef mpfr_t eps1, eps2, twopi
    cdef mpfr_t lim[8]      # re/im of x1, x2, y1, y2
    cdef mpfr_t* block_re
    cdef mpfr_t* block_im
    cdef long* block_terms
    cdef long* block_depth
    cdef int nblocks_alloc
    cdef Job job
    cdef readonly int block_size

    def __cinit__(self, long prec, list nus, list coefs, int block_size=512):
        cdef int i, bad = -1
        cdef mpfr_t s2, s3, s6, t, a, b
        self.n = len(nus)
        self.prec = prec
        self.block_size = block_size
        self.n1 = <mpfr_t*> malloc(self.n * sizeof(mpfr_t))
        self.n2 = <mpfr_t*> malloc(self.n * sizeof(mpfr_t))
        self.cre = <mpfr_t*> malloc(self.n * sizeof(mpfr_t))
        self.cim = <mpfr_t*> malloc(self.n * sizeof(mpfr_t))
        self.n1d = <double*> malloc(self.n * sizeof(double))
        self.n2d = <double*> malloc(self.n * sizeof(double))
        self.logc = <double*> malloc(self.n * sizeof(double))
        self.nblocks_alloc = (self.n + block_size - 1) // block_size
        self.block_re = <mpfr_t*> malloc(max(1, self.nblocks_alloc) * sizeof(mpfr_t))
        self.block_im = <mpfr_t*> malloc(max(1, self.nblocks_alloc) * sizeof(mpfr_t))
        self.block_terms = <long*> malloc(max(1, self.nblocks_alloc) * sizeof(long))
        self.block_depth = <long*> malloc(max(1, self.nblocks_alloc) * sizeof(long))
        for i in range(self.nblocks_alloc):
            mpfr_init2(self.block_re[i], prec + 64)
            mpfr_init2(self.block_im[i], prec + 64)
        for i in range(8):
            mpfr_init2(self.lim[i], prec)
        mpfr_init2(s2, prec); mpfr_init2(s3, prec); mpfr_init2(s6, prec)
        mpfr_init2(t, prec); mpfr_init2(a, prec); mpfr_init2(b, prec)
        mpfr_sqrt_ui(s2, 2, MPFR_RNDN)
        mpfr_sqrt_ui(s3, 3, MPFR_RNDN)
        mpfr_sqrt_ui(s6, 6, MPFR_RNDN)
        mpfr_init2(self.eps1, prec); mpfr_init2(self.eps2, prec); mpfr_init2(self.twopi, prec)
        mpfr_mul_ui(t, s2, 2, MPFR_RNDN)
        mpfr_set_ui(a, 3, MPFR_RNDN)
        mpfr_sub(self.eps1, a, t, MPFR_RNDN)
        mpfr_add(self.eps2, a, t, MPFR_RNDN)
        mpfr_const_pi(self.twopi, MPFR_RNDN)
        mpfr_mul_ui(self.twopi, self.twopi, 2, MPFR_RNDN)
        for i in range(self.n):
            p, q = nus[i]
            mpfr_init2(self.n1[i], prec); mpfr_init2(self.n2[i], prec)
            mpfr_init2(self.cre[i], prec); mpfr_init2(self.cim[i], prec)
            _set_rational(a, p)
            _set_rational(b, q)
            mpfr_mul(t, b, s2, MPFR_RNDN)
            mpfr_add(self.n1[i], a, t, MPFR_RNDN)
            mpfr_sub(self.n2[i], a, t, MPFR_RNDN)
            c0, c1, c2, c3 = coefs[i]
            _set_rational(a, c0)
            _set_rational(b, c1)
            mpfr_mul(t, b, s2, MPFR_RNDN)
            mpfr_add(self.cre[i], a, t, MPFR_RNDN)
            _set_rational(a, c2)
            _set_rational(b, c3)
            mpfr_mul(a, a, s3, MPFR_RNDN)
            mpfr_mul(b, b, s6, MPFR_RNDN)
            mpfr_add(self.cim[i], a, b, MPFR_RNDN)
            self.n1d[i] = mpfr_get_d(self.n1[i], MPFR_RNDN)
            self.n2d[i] = mpfr_get_d(self.n2[i], MPFR_RNDN)
            if bad < 0 and (self.n1d[i] <= 0 or self.n2d[i] <= 0):
                bad = i
            mpfr_mul(a, self.cre[i], self.cre[i], MPFR_RNDN)
            mpfr_mul(b, self.cim[i], self.cim[i], MPFR_RNDN)
            mpfr_add(a, a, b, MPFR_RNDN)
            self.logc[i] = 0.5 * _logabs(a)
        mpfr_clear(s2); mpfr_clear(s3); mpfr_clear(s6)
        mpfr_clear(t); mpfr_clear(a); mpfr_clear(b)
        if bad >= 0:
            raise ValueError(f"orbit {bad} is not totally positive")

    def __dealloc__(self):
        cdef int i
        if self.n1 != NULL:
            for i in range(self.n):
                mpfr_clear(self.n1[i]); mpfr_clear(self.n2[i])
                mpfr_clear(self.cre[i]); mpfr_clear(self.cim[i])
            free(self.n1); free(self.n2); free(self.cre); free(self.cim)
            free(self.n1d); free(self.n2d); free(self.logc)
            for i in range(self.nblocks_alloc):
                mpfr_clear(self.block_re[i]); mpfr_clear(self.block_im[i])
            free(self.block_re); free(self.block_im)
            free(self.block_terms); free(self.block_depth)
            for i in range(8):
                mpfr_clear(self.lim[i])
            mpfr_clear(self.eps1); mpfr_clear(self.eps2); mpfr_clear(self.twopi)

    @property
    def size(self):
        return self.n

    @property
    def nblocks(self):
        return self.nblocks_alloc

    def run(self, limits, double log_thr, int threads=1):
        """Sum the job; limits is a 4-tuple of (re, im) decimal strings or None."""
        cdef Job job
        cdef int i
        cdef double Y1 = INFINITY, Y2 = INFINITY
        for i in range(4):
            if limits[i] is None:
                job.has[i] = 0
                continue
            job.has[i] = 1
            re, im = limits[i]
            mpfr_set_str(self.lim[2 * i], re.encode(), 10, MPFR_RNDN)
            mpfr_set_str(self.lim[2 * i + 1], im.encode(), 10, MPFR_RNDN)
            y = float(im)
            if y <= 0:
                raise ValueError("integration limit not in the upper half plane")
            if i < 2:
                Y1 = min(Y1, y)
            else:
                Y2 = min(Y2, y)
        job.Y1 = Y1
        job.Y2 = Y2
        job.log_thr = log_thr
        self.job = job
        if not (job.has[0] or job.has[1]) or not (job.has[2] or job.has[3]):
            return "0", "0", 0, 0
        nb = self.nblocks_alloc
        if threads <= 1 or nb <= 1:
            for i in range(nb):
                self._block(i)
        else:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=threads) as ex:
                list(ex.map(self._block_py, range(nb)))
        # deterministic reduction in block order
        cdef mpfr_t sre, sim
        mpfr_init2(sre, self.prec + 64)
        mpfr_init2(sim, self.prec + 64)
        mpfr_set_ui(sre, 0, MPFR_RNDN)
        mpfr_set_ui(sim, 0, MPFR_RNDN)
        cdef long terms = 0, depth = 0
        for i in range(nb):
            mpfr_add(sre, sre, self.block_re[i], MPFR_RNDN)
            mpfr_add(sim, sim, self.block_im[i], MPFR_RNDN)
            terms += self.block_terms[i]
            depth = max(depth, self.block_depth[i])
        out = (_to_str(sre), _to_str(sim), terms, depth)
        mpfr_clear(sre)
        mpfr_clear(sim)
        return out

    def _block_py(self, int b):
        self._block(b)

    cdef void _block(self, int b):
        with nogil:
            self._block_nogil(b, self.job)

    cdef void _block_nogil(self, int b, Job job) noexcept nogil:
        cdef long prec = self.prec
        cdef int j, j0 = b * self.block_size
        cdef int j1 = min(self.n, j0 + self.block_size)
        cdef int k, kc, direction, i
        cdef double k0f, logm, lb, ln_eps = log(3.0 - 2.0 * 1.4142135623730951)
        cdef long terms = 0, depth = 0
        cdef mpfr_t m1, m2, m1s, m2s, t, arg, dec, s, c, d1r, d1i, d2r, d2i, pr, pi_, accr, acci, tmp
        mpfr_init2(m1, prec); mpfr_init2(m2, prec); mpfr_init2(m1s, prec); mpfr_init2(m2s, prec)
        mpfr_init2(t, prec); mpfr_init2(arg, prec); mpfr_init2(dec, prec)
        mpfr_init2(s, prec); mpfr_init2(c, prec)
        mpfr_init2(d1r, prec); mpfr_init2(d1i, prec); mpfr_init2(d2r, prec); mpfr_init2(d2i, prec)
        mpfr_init2(pr, prec); mpfr_init2(pi_, prec); mpfr_init2(tmp, prec)
        mpfr_init2(accr, prec + 64); mpfr_init2(acci, prec + 64)
        mpfr_set_ui(accr, 0, MPFR_RNDN)
        mpfr_set_ui(acci, 0, MPFR_RNDN)
        for j in range(j0, j1):
            # balancing exponent: minimise n1 eps^k Y1 + n2 eps^-k Y2
            k0f = log((self.n2d[j] * job.Y2) / (self.n1d[j] * job.Y1)) / (2.0 * ln_eps)
            kc = <int> floor(k0f + 0.5)
            logm = log(self.n1d[j]) + log(self.n2d[j])
            for direction in range(2):
                # direction 0: k = kc, kc+1, ...; direction 1: k = kc-1, kc-2, ...
                k = kc if direction == 0 else kc - 1
                # m1 = n1 eps1^k, m2 = n2 eps2^k with eps2 = 1/eps1
                mpfr_set(m1, self.n1[j], MPFR_RNDN)
                mpfr_set(m2, self.n2[j], MPFR_RNDN)
                if k >= 0:
                    for i in range(k):
                        mpfr_mul(m1, m1, self.eps1, MPFR_RNDN)
                        mpfr_mul(m2, m2, self.eps2, MPFR_RNDN)
                else:
                    for i in range(-k):
                        mpfr_mul(m1, m1, self.eps2, MPFR_RNDN)
                        mpfr_mul(m2, m2, self.eps1, MPFR_RNDN)
                while True:
                    lb = (self.logc[j] + 1.3862943611198906
                          - 6.283185307179586 * (mpfr_get_d(m1, MPFR_RNDN) * job.Y1
                                                 + mpfr_get_d(m2, MPFR_RNDN) * job.Y2)
                          - logm)
                    if lb < job.log_thr:
                        break
                    terms += 1
                    if k - kc > depth:
                        depth = k - kc
                    if kc - k > depth:
                        depth = kc - k
                    mpfr_mul(m1s, m1, self.twopi, MPFR_RNDN)
                    mpfr_mul(m2s, m2, self.twopi, MPFR_RNDN)
                    self._delta(d1r, d1i, m1s, 0, job, arg, dec, s, c, t)
                    self._delta(d2r, d2i, m2s, 2, job, arg, dec, s, c, t)
                    # (d1 * d2)
                    mpfr_mul(pr, d1r, d2r, MPFR_RNDN)
                    mpfr_mul(t, d1i, d2i, MPFR_RNDN)
                    mpfr_sub(pr, pr, t, MPFR_RNDN)
                    mpfr_mul(pi_, d1r, d2i, MPFR_RNDN)
                    mpfr_mul(t, d1i, d2r, MPFR_RNDN)
                    mpfr_add(pi_, pi_, t, MPFR_RNDN)
                    # / (m1 m2)
                    mpfr_mul(t, m1, m2, MPFR_RNDN)
                    mpfr_div(pr, pr, t, MPFR_RNDN)
                    mpfr_div(pi_, pi_, t, MPFR_RNDN)
                    # * coef
                    mpfr_mul(tmp, pr, self.cre[j], MPFR_RNDN)
                    mpfr_mul(t, pi_, self.cim[j], MPFR_RNDN)
                    mpfr_sub(tmp, tmp, t, MPFR_RNDN)
                    mpfr_add(accr, accr, tmp, MPFR_RNDN)
                    mpfr_mul(tmp, pr, self.cim[j], MPFR_RNDN)
                    mpfr_mul(t, pi_, self.cre[j], MPFR_RNDN)
                    mpfr_add(tmp, tmp, t, MPFR_RNDN)
                    mpfr_add(acci, acci, tmp, MPFR_RNDN)
                    if direction == 0:
                        k += 1
                        mpfr_mul(m1, m1, self.eps1, MPFR_RNDN)
                        mpfr_mul(m2, m2, self.eps2, MPFR_RNDN)
                    else:
                        k -= 1
                        mpfr_mul(m1, m1, self.eps2, MPFR_RNDN)
                        mpfr_mul(m2, m2, self.eps1, MPFR_RNDN)
        mpfr_set(self.block_re[b], accr, MPFR_RNDN)
        mpfr_set(self.block_im[b], acci, MPFR_RNDN)
        self.block_terms[b] = terms
        self.block_depth[b] = depth
        mpfr_clear(m1); mpfr_clear(m2); mpfr_clear(m1s); mpfr_clear(m2s)
        mpfr_clear(t); mpfr_clear(arg); mpfr_clear(dec); mpfr_clear(s); mpfr_clear(c)
        mpfr_clear(d1r); mpfr_clear(d1i); mpfr_clear(d2r); mpfr_clear(d2i)
        mpfr_clear(pr); mpfr_clear(pi_); mpfr_clear(tmp)
        mpfr_clear(accr); mpfr_clear(acci)

    cdef void _delta(self, mpfr_ptr outr, mpfr_ptr outi, mpfr_ptr tm, int off, Job job,
                     mpfr_ptr arg, mpfr_ptr dec, mpfr_ptr s, mpfr_ptr c, mpfr_ptr t) noexcept nogil:
        """out = e(m * lim[off+1]) - e(m * lim[off]) where tm = 2 pi m."""
        cdef int which, idx
        mpfr_set_ui(outr, 0, MPFR_RNDN)
        mpfr_set_ui(outi, 0, MPFR_RNDN)
        for which in range(2):
            idx = off + which
            if not job.has[idx]:
                continue
            mpfr_mul(arg, tm, self.lim[2 * idx], MPFR_RNDN)
            mpfr_mul(dec, tm, self.lim[2 * idx + 1], MPFR_RNDN)
            mpfr_neg(dec, dec, MPFR_RNDN)
            mpfr_exp(dec, dec, MPFR_RNDN)
            mpfr_sin_cos(s, c, arg, MPFR_RNDN)
            mpfr_mul(c, c, dec, MPFR_RNDN)
            mpfr_mul(s, s, dec, MPFR_RNDN)
            if which == 1:
                mpfr_add(outr, outr, c, MPFR_RNDN)
                mpfr_add(outi, outi, s, MPFR_RNDN)
            else:
                mpfr_sub(outr, outr, c, MPFR_RNDN)
                mpfr_sub(outi, outi, s, MPFR_RNDN)
