"""Pure-Python distribution function of a linear combination of chi-squares.

Computes ``P(Q < c)`` for

    Q = sum_j lb_j * chi2(n_j, nc_j) + sigma * N(0, 1)

by numerical inversion of the characteristic function (Davies, 1980,
Applied Statistics algorithm AS 155). The integration sums are vectorised
with numpy; everything else follows the reference control flow so that
the compiled twin in ``_qfc.pyx`` returns the same numbers.

Fault codes: 1 required accuracy not obtained within ``lim`` terms,
2 round-off may be significant, 3 invalid parameters, 4 unable to locate
integration parameters (too many bound evaluations).
"""
from __future__ import annotations

import math

import numpy as np

LOG28 = 0.0866  # log(2) / 8
PI = math.pi


class _Fault(Exception):
    pass


def _exp1(x):
    return 0.0 if x < -50.0 else math.exp(x)


def _log1(x, first):
    """``log(1 + x)`` if ``first`` else ``log(1 + x) - x``, accurate near 0."""
    if abs(x) > 0.1:
        return math.log(1.0 + x) if first else math.log(1.0 + x) - x
    y = x / (2.0 + x)
    term = 2.0 * y ** 3
    k = 3.0
    s = (2.0 if first else -x) * y
    y = y * y
    s1 = s + term / k
    while s1 != s:
        k += 2.0
        term *= y
        s = s1
        s1 = s + term / k
    return s


def _log1_vec(x):
    # log(1 + x) for x >= 0 only
    return np.log1p(x)


class _QF:
    def __init__(self, lb, nc, n, sigma, c, lim):
        self.lb = np.asarray(lb, dtype=float)
        self.nc = np.asarray(nc, dtype=float)
        self.n = np.asarray(n, dtype=np.int64)
        self.r = self.lb.size
        self.c = float(c)
        self.lim = lim
        self.sigsq = float(sigma) ** 2
        self.count = 0
        self.intl = 0.0
        self.ersm = 0.0
        self.th = None
        self.fail = False
        self.lmax = self.lmin = self.mean = 0.0

    def counter(self):
        self.count += 1
        if self.count > self.lim:
            raise _Fault(4)

    def order(self):
        # stable descending order of |lb|
        self.th = np.argsort(-np.abs(self.lb), kind="stable")

    def errbd(self, u):
        """Chernoff bound on the tail beyond the returned cut-off."""
        self.counter()
        xconst = u * self.sigsq
        sum1 = u * xconst
        u = 2.0 * u
        for j in range(self.r - 1, -1, -1):
            nj, lj, ncj = self.n[j], self.lb[j], self.nc[j]
            x = u * lj
            y = 1.0 - x
            xconst += lj * (ncj / y + nj) / y
            sum1 += ncj * (x / y) ** 2 + nj * (x * x / y + _log1(-x, False))
        return _exp1(-0.5 * sum1), xconst

    def ctff(self, accx, upn):
        u2 = upn
        u1 = 0.0
        c1 = self.mean
        rb = 2.0 * (self.lmax if u2 > 0.0 else self.lmin)
        u = u2 / (1.0 + u2 * rb)
        bound, c2 = self.errbd(u)
        while bound > accx:
            u1 = u2
            c1 = c2
            u2 = 2.0 * u2
            u = u2 / (1.0 + u2 * rb)
            bound, c2 = self.errbd(u)
        u = (c1 - self.mean) / (c2 - self.mean)
        while u < 0.9:
            u = (u1 + u2) / 2.0
            bound, xconst = self.errbd(u / (1.0 + u * rb))
            if bound > accx:
                u1 = u
                c1 = xconst
            else:
                u2 = u
                c2 = xconst
            u = (c1 - self.mean) / (c2 - self.mean)
        return c2, u2

    def truncation(self, u, tausq):
        """Bound on the integration error from truncating at ``u``."""
        self.counter()
        sum1 = 0.0
        prod2 = 0.0
        prod3 = 0.0
        s = 0
        sum2 = (self.sigsq + tausq) * u * u
        prod1 = 2.0 * sum2
        u = 2.0 * u
        for j in range(self.r):
            lj, ncj, nj = self.lb[j], self.nc[j], self.n[j]
            x = (u * lj) ** 2
            sum1 += ncj * x / (1.0 + x)
            if x > 1.0:
                prod2 += nj * math.log(x)
                prod3 += nj * _log1(x, True)
                s += nj
            else:
                prod1 += nj * _log1(x, True)
        sum1 *= 0.5
        prod2 += prod1
        prod3 += prod1
        x = _exp1(-sum1 - 0.25 * prod2) / PI
        y = _exp1(-sum1 - 0.25 * prod3) / PI
        err1 = 1.0 if s == 0 else x * 2.0 / s
        err2 = 2.5 * y if prod3 > 1.0 else 1.0
        if err2 < err1:
            err1 = err2
        x = 0.5 * sum2
        err2 = 1.0 if x <= y else y / x
        return err1 if err1 < err2 else err2

    def findu(self, ut, accx):
        u = ut / 4.0
        if self.truncation(u, 0.0) > accx:
            u = ut
            while self.truncation(u, 0.0) > accx:
                ut *= 4.0
                u = ut
        else:
            ut = u
            u = u / 4.0
            while self.truncation(u, 0.0) <= accx:
                ut = u
                u = u / 4.0
        for divis in (2.0, 1.4, 1.2, 1.1):
            u = ut / divis
            if self.truncation(u, 0.0) <= accx:
                ut = u
        return ut

    def integrate(self, nterm, interv, tausq, mainx):
        u = (np.arange(nterm, -1, -1) + 0.5) * interv
        x = 2.0 * np.outer(u, self.lb)
        y = x * x
        sum3 = -0.5 * self.sigsq * u * u - 0.25 * (self.n * _log1_vec(y)).sum(axis=1)
        y = self.nc * x / (1.0 + y)
        z = self.n * np.arctan(x) + y
        sum1 = -2.0 * u * self.c + z.sum(axis=1)
        sum2 = np.abs(-2.0 * u * self.c) + np.abs(z).sum(axis=1)
        sum3 = sum3 - 0.5 * (x * y).sum(axis=1)
        w = (interv / PI) * np.where(sum3 < -50.0, 0.0, np.exp(np.maximum(sum3, -50.0))) / u
        if not mainx:
            arg = -0.5 * tausq * u * u
            w = w * (1.0 - np.where(arg < -50.0, 0.0, np.exp(np.maximum(arg, -50.0))))
        # accumulate in the reference order (largest u first)
        self.intl += float(np.sum(np.sin(0.5 * sum1) * w))
        self.ersm += float(np.sum(0.5 * sum2 * w))

    def cfe(self, x):
        self.counter()
        if self.th is None:
            self.order()
        axl = abs(x)
        sxl = 1.0 if x > 0.0 else -1.0
        sum1 = 0.0
        th = self.th
        for j in range(self.r - 1, -1, -1):
            t = th[j]
            if self.lb[t] * sxl > 0.0:
                lj = abs(self.lb[t])
                axl1 = axl - lj * (self.n[t] + self.nc[t])
                axl2 = lj / LOG28
                if axl1 > axl2:
                    axl = axl1
                else:
                    if axl > axl2:
                        axl = axl2
                    sum1 = (axl - axl1) / lj
                    for k in range(j - 1, -1, -1):
                        sum1 += self.n[th[k]] + self.nc[th[k]]
                    break
        if sum1 > 100.0:
            self.fail = True
            return 1.0
        return 2.0 ** (sum1 / 4.0) / (PI * axl * axl)

    def run(self, acc):
        trace = [0.0] * 7
        acc1 = acc
        xlim = float(self.lim)
        sd = self.sigsq
        for j in range(self.r):
            nj, lj, ncj = self.n[j], self.lb[j], self.nc[j]
            if nj < 0 or ncj < 0.0:
                return -1.0, 3, trace
            sd += lj * lj * (2 * nj + 4.0 * ncj)
            self.mean += lj * (nj + ncj)
            if self.lmax < lj:
                self.lmax = lj
            elif self.lmin > lj:
                self.lmin = lj
        if sd == 0.0:
            return (1.0 if self.c > 0.0 else 0.0), 0, trace
        if self.lmin == 0.0 and self.lmax == 0.0 and self.sigsq == 0.0:
            return -1.0, 3, trace
        sd = math.sqrt(sd)
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
                self.sigsq += tausq
                utx = self.findu(utx, 0.25 * acc1)
                trace[5] = math.sqrt(tausq)
        trace[4] = utx
        acc1 = 0.5 * acc1

        while True:
            cut, up = self.ctff(acc1, up)
            d1 = cut - self.c
            if d1 < 0.0:
                return 1.0, 0, trace
            cut, un = self.ctff(acc1, un)
            d2 = self.c - cut
            if d2 < 0.0:
                return 0.0, 0, trace
            intv = 2.0 * PI / max(d1, d2)
            xnt = utx / intv
            xntm = 3.0 / math.sqrt(acc1)
            if xnt > xntm * 1.5:
                if xntm > xlim:
                    return -1.0, 1, trace
                ntm = int(math.floor(xntm + 0.5))
                intv1 = utx / ntm
                x = 2.0 * PI / intv1
                if x <= abs(self.c):
                    break
                tausq = 0.33 * acc1 / (1.1 * (self.cfe(self.c - x) + self.cfe(self.c + x)))
                if self.fail:
                    break
                acc1 = 0.67 * acc1
                self.integrate(ntm, intv1, tausq, False)
                xlim -= xntm
                self.sigsq += tausq
                trace[2] += 1
                trace[1] += ntm + 1
                utx = self.findu(utx, 0.25 * acc1)
                acc1 = 0.75 * acc1
                continue
            break

        trace[3] = intv
        if xnt > xlim:
            return -1.0, 1, trace
        nt = int(math.floor(xnt + 0.5))
        self.integrate(nt, intv, 0.0, True)
        trace[2] += 1
        trace[1] += nt + 1
        qfval = 0.5 - self.intl
        trace[0] = self.ersm

        ifault = 0
        up = self.ersm
        x = up + acc / 10.0
        for rat in (1.0, 2.0, 4.0, 8.0):
            if rat * x == rat * up:
                ifault = 2
        return qfval, ifault, trace


def qf(lb, nc, n, sigma, c, lim=10000, acc=1e-6):
    """Return ``(P(Q < c), ifault, trace)``; ``qfval`` is -1 on hard faults."""
    state = _QF(lb, nc, n, sigma, c, lim)
    try:
        qfval, ifault, trace = state.run(acc)
    except _Fault as f:
        return -1.0, f.args[0], [0.0] * 6 + [float(state.count)]
    trace[6] = float(state.count)
    return qfval, ifault, trace
