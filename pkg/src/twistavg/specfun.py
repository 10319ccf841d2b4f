"""Extended-precision special functions with explicit error bounds.

mpmath supplies the multiprecision arithmetic.  The functions themselves
(Stirling gamma, incomplete gamma, the Kummer function, real zeta) are
summed here so that every truncation error is bounded by us and carried
in the ``err`` field of the returned :class:`Approx`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
from mpmath import mp, mpc, mpf
from mpmath.calculus.quadrature import GaussLegendre

__all__ = [
    "Approx",
    "Precision",
    "DEFAULT_PRECISION",
    "cgamma",
    "beta",
    "upper_incomplete_gamma",
    "one_f_one",
    "one_f_one_series",
    "one_f_one_quad",
    "zeta_real",
]

_LOG2E = 1.4426950408889634


@dataclass(frozen=True)
class Precision:
    """Working precision in significand bits plus a relative series cutoff."""

    bits: int = 128
    series_tol: float | None = None

    def __post_init__(self):
        if self.bits < 53:
            raise ValueError(f"precision must be at least 53 bits, got {self.bits}")

    @property
    def tol(self) -> mpf:
        if self.series_tol is None:
            return mpf(2) ** (-self.bits)
        return mpf(self.series_tol)

    def raised(self, extra: int) -> "Precision":
        return Precision(self.bits + int(extra), self.series_tol)


DEFAULT_PRECISION = Precision()


def _prec(prec: Precision | int | None) -> Precision:
    if prec is None:
        return DEFAULT_PRECISION
    if isinstance(prec, int):
        return Precision(prec)
    return prec


def _ulp(x) -> mpf:
    return abs(x) * mpf(2) ** (2 - mp.prec)


@dataclass(frozen=True, init=False)
class Approx:
    """A complex value with a nonnegative absolute error bound.

    Arithmetic propagates the bound to first order and adds one rounding
    unit of the current mpmath precision per operation.
    """

    value: mpc
    err: mpf

    def __init__(self, value, err=0):
        err = mpf(err)
        if err < 0 or mpmath.isnan(err):
            raise ValueError(f"error bound must be nonnegative, got {err}")
        object.__setattr__(self, "value", mpc(value))
        object.__setattr__(self, "err", err)

    @classmethod
    def exact(cls, value) -> "Approx":
        return cls(value, 0)

    @staticmethod
    def _lift(other) -> "Approx":
        if isinstance(other, Approx):
            return other
        return Approx(other, 0)

    def __add__(self, other):
        o = self._lift(other)
        v = self.value + o.value
        return Approx(v, self.err + o.err + _ulp(v))

    __radd__ = __add__

    def __neg__(self):
        return Approx(-self.value, self.err)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        v = self.value * o.value
        err = abs(self.value) * o.err + abs(o.value) * self.err + self.err * o.err
        return Approx(v, err + _ulp(v))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        den = abs(o.value)
        if den <= o.err:
            raise ZeroDivisionError("divisor interval contains zero")
        q = self.value / o.value
        err = (self.err + abs(q) * o.err) / (den - o.err)
        return Approx(q, err + _ulp(q))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def conjugate(self) -> "Approx":
        return Approx(mpmath.conj(self.value), self.err)

    def __abs__(self) -> "Approx":
        return Approx(abs(self.value), self.err)

    @property
    def real(self) -> mpf:
        return self.value.real

    @property
    def imag(self) -> mpf:
        return self.value.imag

    def __complex__(self):
        return complex(self.value)

    def rel_err(self) -> mpf:
        a = abs(self.value)
        return self.err / a if a else mpf("inf")

    def contains(self, x, slack=0) -> bool:
        return abs(mpc(x) - self.value) <= self.err + mpf(slack)

    def overlaps(self, other: "Approx", slack=0) -> bool:
        return abs(self.value - other.value) <= self.err + other.err + mpf(slack)

    def __repr__(self):
        v = self.value
        txt = mpmath.nstr(v.real, 20) if v.imag == 0 else mpmath.nstr(v, 20)
        return f"Approx({txt} ± {mpmath.nstr(self.err, 3)})"


def _is_pole(s: mpc) -> bool:
    return s.imag == 0 and s.real <= 0 and s.real == mpmath.floor(s.real)


# --- Gamma -----------------------------------------------------------------


def _stirling_loggamma(z: mpc, target: mpf):
    """log Gamma(z) for Re z >= |Im z| > 0; returns (value, remainder bound)."""
    lg = (z - mpf("0.5")) * mpmath.log(z) - z + mpmath.log(2 * mpmath.pi) / 2
    sec = 1 / mpmath.cos(mpmath.pi / 8)
    absz = abs(z)
    zinv2 = 1 / (z * z)
    zpow = 1 / z
    j = 1
    while True:
        b = mpmath.bernoulli(2 * j)
        # DLMF 5.11.ii remainder bound with |ph z| <= pi/4
        bound = abs(b) / (2 * j * (2 * j - 1) * absz ** (2 * j - 1)) * sec ** (2 * j)
        if bound < target:
            return lg, bound, j
        lg += b / (2 * j * (2 * j - 1)) * zpow
        zpow *= zinv2
        j += 1


def cgamma(s, prec: Precision | int | None = None) -> Approx:
    """Complex Gamma by argument shift and the Stirling series."""
    prec = _prec(prec)
    s = mpc(s)
    if _is_pole(s):
        raise ValueError(f"Gamma has a pole at {s}")
    wp = prec.bits + 30
    with mp.workprec(wp):
        if s.real < 0.5:
            g = cgamma(1 - s, prec.raised(10))
            sn = mpmath.sin(mpmath.pi * s)
            val = mpmath.pi / (sn * g.value)
            return Approx(val, abs(val) * (g.rel_err() * mpf("1.01") + mpf(2) ** (10 - wp)))
        radius = max(20.0, 0.12 * prec.bits + 8.0, abs(float(s.imag)))
        shift = max(0, int(math.ceil(radius - float(s.real))))
        z = s + shift
        lg, rem, nterms = _stirling_loggamma(z, mpf(2) ** (-prec.bits - 12))
        val = mpmath.exp(lg)
        den = mpc(1)
        for j in range(shift):
            den *= s + j
        val /= den
        rel = rem * mpf("1.01") + (shift + nterms + 40) * mpf(2) ** (1 - wp)
        return Approx(val, abs(val) * rel)


def beta(x, y, prec: Precision | int | None = None) -> Approx:
    """Euler Beta function Gamma(x)Gamma(y)/Gamma(x+y)."""
    prec = _prec(prec)
    x, y = mpc(x), mpc(y)
    for arg in (x, y, x + y):
        if _is_pole(arg):
            raise ValueError(f"Beta({x}, {y}) hits a Gamma pole at {arg}")
    with mp.workprec(prec.bits + 20):
        return cgamma(x, prec) * cgamma(y, prec) / cgamma(x + y, prec)


# --- incomplete Gamma ------------------------------------------------------


def _gammainc_asymptotic(s: mpc, x: mpf, target: mpf):
    """Gamma(s,x) = x^(s-1)e^(-x) sum_j (s-1)...(s-j)/x^j with exact remainder bound.

    After J >= Re(s)-1 terms the remainder is (s-1)...(s-J) Gamma(s-J, x), and
    |Gamma(s-J,x)| <= x^(Re s-J-1) e^(-x), i.e. bounded by the next term.
    """
    sigma = s.real
    total = mpc(1)
    term = mpc(1)
    j = 0
    limit = int(4 * float(x)) + 60
    while j < limit:
        nxt = term * (s - 1 - j) / x
        j += 1
        if j >= sigma - 1 and abs(nxt) <= target * abs(total):
            pref = mpmath.power(x, s - 1) * mpmath.exp(-x)
            val = pref * total
            err = abs(pref) * (abs(nxt) + (j + 10) * _ulp(total))
            return Approx(val, err)
        if j > sigma + 1 and abs(nxt) > abs(term):
            return None
        total += nxt
        term = nxt
    return None


@lru_cache(maxsize=256)
def _gamma_cached(re: mpf, im: mpf, wp: int) -> Approx:
    return cgamma(mpc(re, im), Precision(wp))


def _gammainc_series(s: mpc, x: mpf, prec: Precision) -> Approx:
    sigma = float(s.real)
    # digits lost to cancellation between Gamma(s) and gamma(s,x)
    log2_gamma = float(mpmath.log(abs(mpmath.gamma(mpc(sigma, float(s.imag)))), 2))
    log2_est = (sigma - 1) * math.log2(float(x)) - float(x) * _LOG2E
    extra = max(0, int(log2_gamma - log2_est)) + max(0, int(float(x) * _LOG2E))
    wp = prec.bits + 40 + extra
    with mp.workprec(wp):
        g = _gamma_cached(s.real, s.imag, wp)
        u = 1 / s
        total = u
        # |re| + |im| bounds the modulus; cheaper than hypot per term
        abs_sum = abs(u.real) + abs(u.imag)
        j = 0
        tiny = mpf(2) ** (-wp)
        while True:
            j += 1
            u = u * x / (s + j)
            total += u
            mag = abs(u.real) + abs(u.imag)
            abs_sum += mag
            rho = x / (s.real + j + 1) if s.real + j + 1 > 0 else mpf(2)
            if rho < 0.5 and mag < tiny * abs(total.real):
                break
            if rho < 0.5 and mag < tiny * abs(total):
                break
        tail = 4 * mag
        pref = mpmath.power(x, s) * mpmath.exp(-x)
        lower = pref * total
        val = g.value - lower
        err = g.err + abs(pref) * (tail + (j + 10) * abs_sum * mpf(2) ** (1 - wp))
        return Approx(val, err + _ulp(val))


def upper_incomplete_gamma(s, x, prec: Precision | int | None = None) -> Approx:
    """Upper incomplete Gamma(s, x) for real x > 0."""
    prec = _prec(prec)
    x = mpf(x)
    if not x > 0:
        raise ValueError(f"incomplete gamma requires x > 0, got {x}")
    s = mpc(s)
    with mp.workprec(prec.bits + 30):
        res = _gammainc_asymptotic(s, x, mpf(2) ** (-prec.bits - 8))
    if res is not None:
        return res
    if _is_pole(s):
        raise ValueError(f"series route needs Gamma(s); pole at {s}")
    return _gammainc_series(s, x, prec)


# --- regularized Kummer function ---------------------------------------------


def _check_1f1_domain(s: mpc, k) -> None:
    if not (0 < s.real < k):
        raise ValueError(f"1f1 needs 0 < Re(s) < k, got s={s}, k={k}")


def one_f_one_series(s, k, w, prec: Precision | int | None = None) -> Approx:
    """B(s, k-s) * 1F1(s; k; w) by the Kummer power series.

    The tail after term j is bounded geometrically with ratio
    max(1, (|s|+j)/(k+j)) |w| / (j+1).  Working precision is raised until
    the cancellation inside the partial sums is covered.
    """
    prec = _prec(prec)
    s, w = mpc(s), mpc(w)
    _check_1f1_domain(s, k)
    absw = float(abs(w))
    abss = float(abs(s))
    extra = int(absw * _LOG2E) + 24
    while True:
        wp = prec.bits + extra
        with mp.workprec(wp):
            target = mpf(2) ** (-prec.bits - 10)
            term = mpc(1)
            total = mpc(1)
            abs_sum = mpf(1)
            j = 0
            while True:
                term = term * (s + j) / (k + j) * w / (j + 1)
                j += 1
                total += term
                abs_sum += abs(term)
                rho = max(1.0, (abss + j) / (k + j)) * absw / (j + 1)
                if rho < 0.5:
                    tail = abs(term) * rho / (1 - rho)
                    if tail <= target * abs(total) or term == 0:
                        break
            lost = float(mpmath.log(abs_sum / abs(total), 2)) if total != 0 else wp
            if lost > extra - 12:
                extra = int(lost) + 32
                continue
            b = beta(s, k - s, Precision(wp))
            val = b.value * total
            f_err = tail + (j + 10) * abs_sum * mpf(2) ** (2 - wp)
            err = abs(b.value) * f_err + b.err * abs(total)
        return Approx(val, err + _ulp(val))


@lru_cache(maxsize=64)
def _gl_nodes(degree: int, bits: int):
    with mp.workprec(bits):
        return tuple(GaussLegendre(mp).calc_nodes(degree, bits))


def _panels(absw: float, levels: int):
    """Breakpoints graded toward both endpoints, width also capped by |w|."""
    cuts = [mpf(0)] + [mpf(2) ** (-j) for j in range(levels, 1, -1)]
    left = cuts + [mpf("0.5")]
    pts = left + [1 - c for c in reversed(cuts)]
    width = min(0.25, 4.0 / max(absw, 1.0))
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(float(b - a) / width)))
        for i in range(1, n + 1):
            out.append(a + (b - a) * i / n)
    return out


def one_f_one_quad(s, k, w, prec: Precision | int | None = None) -> Approx:
    """Integral form of 1f1 by composite Gauss-Legendre with degree doubling.

    The error reported is the difference between the last two refinements
    (an a posteriori estimate, used only as a cross-check of the series).
    """
    prec = _prec(prec)
    s, w = mpc(s), mpc(w)
    _check_1f1_domain(s, k)
    extra = 20 + int(abs(float(w.real)) * _LOG2E)
    # the innermost panel carries O(h^min(sigma, k-sigma)) of the mass
    edge = min(float(s.real), float(k - s.real))
    brk = _panels(float(abs(w)), levels=int(math.ceil((prec.bits + 8) / edge)) + 1)
    while True:
        wp = prec.bits + extra
        with mp.workprec(wp):
            a1, a2 = s - 1, k - s - 1

            def integrate(degree):
                total = mpc(0)
                mass = mpf(0)
                for lo, hi in zip(brk[:-1], brk[1:]):
                    half = (hi - lo) / 2
                    mid = (hi + lo) / 2
                    for t, wt in _gl_nodes(degree, wp):
                        x = mid + half * t
                        f = wt * half * mpmath.exp(w * x) * x**a1 * (1 - x) ** a2
                        total += f
                        mass += abs(f)
                return total, mass

            prev, mass = integrate(3)
            lost = float(mpmath.log(mass / abs(prev), 2)) if prev != 0 else wp
            if lost > extra - 12:
                extra = int(lost) + 24
                continue
            target = mpf(2) ** (-prec.bits - 4)
            for degree in range(4, 10):
                cur, mass = integrate(degree)
                diff = abs(cur - prev)
                if diff <= target * abs(cur):
                    break
                prev = cur
            return Approx(cur, diff + mass * mpf(2) ** (4 - wp))


def one_f_one(s, k, w, prec: Precision | int | None = None, verify: bool = True) -> Approx:
    """Regularized Kummer function 1f1(s; k; w) = B(s, k-s) 1F1(s; k; w).

    With ``verify`` the integral form is evaluated as well and the two
    routes must agree within their combined error; the series value is
    returned.
    """
    prec = _prec(prec)
    ser = one_f_one_series(s, k, w, prec)
    if verify:
        quad = one_f_one_quad(s, k, w, prec)
        slack = mpf(2) ** (-prec.bits + 16) * abs(ser.value)
        if not ser.overlaps(quad, slack):
            raise ArithmeticError(
                f"1f1 series/quadrature mismatch at s={s}, k={k}, w={w}: "
                f"{ser} vs {quad}"
            )
    return ser


# --- Riemann zeta on the real axis --------------------------------------------


def zeta_real(sigma, prec: Precision | int | None = None) -> Approx:
    """zeta(sigma) for real sigma > 1 by Euler-Maclaurin summation.

    For real sigma the remainder is bounded by the first omitted
    correction term.
    """
    prec = _prec(prec)
    sigma = mpf(sigma)
    if not sigma > 1:
        raise ValueError(f"zeta_real needs sigma > 1, got {sigma}")
    wp = prec.bits + 20
    with mp.workprec(wp):
        n_cut = 16 + prec.bits // 8
        head = mpmath.fsum(mpf(n) ** (-sigma) for n in range(1, n_cut))
        big_n = mpf(n_cut)
        total = head + big_n ** (1 - sigma) / (sigma - 1) + big_n ** (-sigma) / 2
        target = mpf(2) ** (-prec.bits - 8)
        rising = sigma  # sigma (sigma+1) ... (sigma+2j-2)
        j = 1
        while True:
            term = (
                mpmath.bernoulli(2 * j)
                / mpmath.factorial(2 * j)
                * rising
                * big_n ** (-sigma - 2 * j + 1)
            )
            if abs(term) < target * total:
                rem = abs(term)
                break
            total += term
            rising *= (sigma + 2 * j - 1) * (sigma + 2 * j)
            j += 1
        return Approx(total, rem + (n_cut + j) * _ulp(total))
