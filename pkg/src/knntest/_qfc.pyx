# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled distribution function of a linear combination of chi-squares.

Same algorithm and control flow as ``_qf_py`` (Davies' AS 155), with the
bound evaluations and integration sums as typed C loops.
"""
import numpy as np

from libc.math cimport atan, exp, fabs, floor, log, pow, sin, sqrt

cdef double LOG28 = 0.0866
cdef double PI = 3.141592653589793


class _Fault(Exception):
    pass


cdef inline double exp1(double x) nogil:
    return 0.0 if x < -50.0 else exp(x)


cdef double log1(double x, bint first) nogil:
    cdef double s, s1, term, y, k
    if fabs(x) > 0.1:
        return log(1.0 + x) if first else log(1.0 + x) - x
    y = x / (2.0 + x)
    term = 2.0 * y * y * y
    k = 3.0
    s = (2.0 if first else -x) * y
    y = y * y
    s1 = s + term / k
    while s1 != s:
        k = k + 2.0
        term = term * y
        s = s1
        s1 = s + term / k
    return s


cdef class _State:
    cdef double[::1] lb
    cdef double[::1] nc
    cdef long[::1] n
    cdef long[::1] th
    cdef int r
    cdef int lim
    cdef int count
    cdef double c, sigsq, lmax, lmin, mean, intl, ersm
    cdef bint ndtsrt, fail

    def __init__(self, lb, nc, n, double sigma, double c, int lim):
        self.lb = np.ascontiguousarray(lb, dtype=np.float64)
        self.nc = np.ascontiguousarray(nc, dtype=np.float64)
        self.n = np.ascontiguousarray(n, dtype=np.int64).astype(np.int_)
        self.r = self.lb.shape[0]
        self.th = np.zeros(self.r, dtype=np.int_)
        self.c = c
        self.lim = lim
        self.sigsq = sigma * sigma
        self.count = 0
        self.intl = 0.0
        self.ersm = 0.0
        self.lmax = 0.0
        self.lmin = 0.0
        self.mean = 0.0
        self.ndtsrt = True
        self.fail = False

    cdef int counter(self) except -1:
        self.count += 1
        if self.count > self.lim:
            raise _Fault(4)
        return 0

    cdef void order(self):
        cdef int j, k
        cdef double lj
        for j in range(self.r):
            lj = fabs(self.lb[j])
            k = j - 1
            while k >= 0:
                if lj > fabs(self.lb[self.th[k]]):
                    self.th[k + 1] = self.th[k]
                    k -= 1
                else:
                    break
            self.th[k + 1] = j
        self.ndtsrt = False

    cdef double errbd(self, double u, double* cx) except? -1.0:
        cdef double sum1, lj, ncj, x, y, xconst
        cdef long nj
        cdef int j
        self.counter()
        xconst = u * self.sigsq
        sum1 = u * xconst
        u = 2.0 * u
        for j in range(self.r - 1, -1, -1):
            nj = self.n[j]
            lj = self.lb[j]
            ncj = self.nc[j]
            x = u * lj
            y = 1.0 - x
            xconst = xconst + lj * (ncj / y + nj) / y
            sum1 = sum1 + ncj * (x / y) * (x / y) + nj * (x * x / y + log1(-x, False))
        cx[0] = xconst
        return exp1(-0.5 * sum1)

    cdef double ctff(self, double accx, double* upn) except? -1.0:
        cdef double u1, u2, u, rb, xconst, c1, c2
        u2 = upn[0]
        u1 = 0.0
        c1 = self.mean
        rb = 2.0 * (self.lmax if u2 > 0.0 else self.lmin)
        u = u2 / (1.0 + u2 * rb)
        while self.errbd(u, &c2) > accx:
            u1 = u2
            c1 = c2
            u2 = 2.0 * u2
            u = u2 / (1.0 + u2 * rb)
        u = (c1 - self.mean) / (c2 - self.mean)
        while u < 0.9:
            u = (u1 + u2) / 2.0
            if self.errbd(u / (1.0 + u * rb), &xconst) > accx:
                u1 = u
                c1 = xconst
            else:
                u2 = u
                c2 = xconst
            u = (c1 - self.mean) / (c2 - self.mean)
        upn[0] = u2
        return c2

    cdef double truncation(self, double u, double tausq) except? -1.0:
        cdef double sum1, sum2, prod1, prod2, prod3, lj, ncj, x, y, err1, err2
        cdef long nj, s
        cdef int j
        self.counter()
        sum1 = 0.0
        prod2 = 0.0
        prod3 = 0.0
        s = 0
        sum2 = (self.sigsq + tausq) * u * u
        prod1 = 2.0 * sum2
        u = 2.0 * u
        for j in range(self.r):
            lj = self.lb[j]
            ncj = self.nc[j]
            nj = self.n[j]
            x = (u * lj) * (u * lj)
            sum1 = sum1 + ncj * x / (1.0 + x)
            if x > 1.0:
                prod2 = prod2 + nj * log(x)
                prod3 = prod3 + nj * log1(x, True)
                s = s + nj
            else:
                prod1 = prod1 + nj * log1(x, True)
        sum1 = 0.5 * sum1
        prod2 = prod1 + prod2
        prod3 = prod1 + prod3
        x = exp1(-sum1 - 0.25 * prod2) / PI
        y = exp1(-sum1 - 0.25 * prod3) / PI
        err1 = 1.0 if s == 0 else x * 2.0 / s
        err2 = 2.5 * y if prod3 > 1.0 else 1.0
        if err2 < err1:
            err1 = err2
        x = 0.5 * sum2
        err2 = 1.0 if x <= y else y / x
        return err1 if err1 < err2 else err2

    cdef double findu(self, double ut, double accx) except? -1.0:
        cdef double u
        cdef int i
        cdef double divis[4]
        divis[0] = 2.0
        divis[1] = 1.4
        divis[2] = 1.2
        divis[3] = 1.1
        u = ut / 4.0
        if self.truncation(u, 0.0) > accx:
            u = ut
            while self.truncation(u, 0.0) > accx:
                ut = ut * 4.0
                u = ut
        else:
            ut = u
            u = u / 4.0
            while self.truncation(u, 0.0) <= accx:
                ut = u
                u = u / 4.0
        for i in range(4):
            u = ut / divis[i]
            if self.truncation(u, 0.0) <= accx:
                ut = u
        return ut

    cdef void integrate(self, long nterm, double interv, double tausq, bint mainx) nogil:
        cdef double inpi, u, sum1, sum2, sum3, x, y, z
        cdef long k, nj
        cdef int j
        inpi = interv / PI
        for k in range(nterm, -1, -1):
            u = (k + 0.5) * interv
            sum1 = -2.0 * u * self.c
            sum2 = fabs(sum1)
            sum3 = -0.5 * self.sigsq * u * u
            for j in range(self.r - 1, -1, -1):
                nj = self.n[j]
                x = 2.0 * self.lb[j] * u
                y = x * x
                sum3 = sum3 - 0.25 * nj * log1(y, True)
                y = self.nc[j] * x / (1.0 + y)
                z = nj * atan(x) + y
                sum1 = sum1 + z
                sum2 = sum2 + fabs(z)
                sum3 = sum3 - 0.5 * x * y
            x = inpi * exp1(sum3) / u
            if not mainx:
                x = x * (1.0 - exp1(-0.5 * tausq * u * u))
            sum1 = sin(0.5 * sum1) * x
            sum2 = 0.5 * sum2 * x
            self.intl = self.intl + sum1
            self.ersm = self.ersm + sum2

    cdef double cfe(self, double x) except? -1.0:
        cdef double axl, axl1, axl2, sxl, sum1, lj
        cdef int j, k
        cdef long t
        self.counter()
        if self.ndtsrt:
            self.order()
        axl = fabs(x)
        sxl = 1.0 if x > 0.0 else -1.0
        sum1 = 0.0
        for j in range(self.r - 1, -1, -1):
            t = self.th[j]
            if self.lb[t] * sxl > 0.0:
                lj = fabs(self.lb[t])
                axl1 = axl - lj * (self.n[t] + self.nc[t])
                axl2 = lj / LOG28
                if axl1 > axl2:
                    axl = axl1
                else:
                    if axl > axl2:
                        axl = axl2
                    sum1 = (axl - axl1) / lj
                    for k in range(j - 1, -1, -1):
                        sum1 = sum1 + (self.n[self.th[k]] + self.nc[self.th[k]])
                    break
        if sum1 > 100.0:
            self.fail = True
            return 1.0
        return pow(2.0, sum1 / 4.0) / (PI * axl * axl)

    cdef tuple run(self, double acc):
        cdef int j, ifault = 0
        cdef long nj, nt, ntm
        cdef double acc1, almx, xlim, xnt, xntm, utx, tausq, sd, intv = 0.0, intv1
        cdef double x, up, un, d1, d2, lj, ncj, qfval
        cdef double rats[4]
        trace = [0.0] * 7
        rats[0] = 1.0
        rats[1] = 2.0
        rats[2] = 4.0
        rats[3] = 8.0
        acc1 = acc
        xlim = <double>self.lim
        sd = self.sigsq
        for j in range(self.r):
            nj = self.n[j]
            lj = self.lb[j]
            ncj = self.nc[j]
            if nj < 0 or ncj < 0.0:
                return -1.0, 3, trace
            sd = sd + lj * lj * (2 * nj + 4.0 * ncj)
            self.mean = self.mean + lj * (nj + ncj)
            if self.lmax < lj:
                self.lmax = lj
            elif self.lmin > lj:
                self.lmin = lj
        if sd == 0.0:
            return (1.0 if self.c > 0.0 else 0.0), 0, trace
        if self.lmin == 0.0 and self.lmax == 0.0 and self.sigsq == 0.0:
            return -1.0, 3, trace
        sd = sqrt(sd)
        almx = -self.lmin if self.lmax < -self.lmin else self.lmax

        utx = 16.0 / sd
        up = 4.5 / sd
        un = -up
        utx = self.findu(utx, 0.5 * acc1)
        if self.c != 0.0 and almx > 0.07 * sd:
            tausq = 0.25 * acc1 / self.cfe(self.c)
            if self.fail:
                self.fail = False
            elif self.truncation(utx, tausq) < 0.2 * acc1:
                self.sigsq = self.sigsq + tausq
                utx = self.findu(utx, 0.25 * acc1)
                trace[5] = sqrt(tausq)
        trace[4] = utx
        acc1 = 0.5 * acc1

        while True:
            d1 = self.ctff(acc1, &up) - self.c
            if d1 < 0.0:
                return 1.0, 0, trace
            d2 = self.c - self.ctff(acc1, &un)
            if d2 < 0.0:
                return 0.0, 0, trace
            intv = 2.0 * PI / (d1 if d1 > d2 else d2)
            xnt = utx / intv
            xntm = 3.0 / sqrt(acc1)
            if xnt > xntm * 1.5:
                if xntm > xlim:
                    return -1.0, 1, trace
                ntm = <long>floor(xntm + 0.5)
                intv1 = utx / ntm
                x = 2.0 * PI / intv1
                if x <= fabs(self.c):
                    break
                tausq = 0.33 * acc1 / (1.1 * (self.cfe(self.c - x) + self.cfe(self.c + x)))
                if self.fail:
                    break
                acc1 = 0.67 * acc1
                self.integrate(ntm, intv1, tausq, False)
                xlim = xlim - xntm
                self.sigsq = self.sigsq + tausq
                trace[2] += 1
                trace[1] += ntm + 1
                utx = self.findu(utx, 0.25 * acc1)
                acc1 = 0.75 * acc1
                continue
            break

        trace[3] = intv
        if xnt > xlim:
            return -1.0, 1, trace
        nt = <long>floor(xnt + 0.5)
        self.integrate(nt, intv, 0.0, True)
        trace[2] += 1
        trace[1] += nt + 1
        qfval = 0.5 - self.intl
        trace[0] = self.ersm

        up = self.ersm
        x = up + acc / 10.0
        for j in range(4):
            if rats[j] * x == rats[j] * up:
                ifault = 2
        return qfval, ifault, trace


def qf(lb, nc, n, double sigma, double c, int lim=10000, double acc=1e-6):
    """Return ``(P(Q < c), ifault, trace)``; ``qfval`` is -1 on hard faults."""
    cdef _State state = _State(lb, nc, n, sigma, c, lim)
    try:
        qfval, ifault, trace = state.run(acc)
    except _Fault as f:
        return -1.0, f.args[0], [0.0] * 6 + [float(state.count)]
    trace[6] = float(state.count)
    return qfval, ifault, trace
