"""Geometric side of the first-moment identity.

The right-hand side has three pieces: a closed-form identity term, a
closed-form Weyl term (present only at level one), and the error series

    E = P * sum_{a != 0, d > 0 conforming} a^(s-k) gcd(a, N d') / (d^s psi(a) e(r ell / (a d_D)))
                                             * J_chi(a, d) * 1f1(s; k; -2 pi i r n D / (N a d))

where d = d' d_D splits d into its prime-to-D and D-supported parts.  The
constant P is applied once after summation.

Terms with |w| = 2 pi r n D / (N |a| d) > ``NEAR_W`` are evaluated one by one
at mpmath precision.  The remaining terms, which are the overwhelming
majority, are evaluated per d in numpy complex128 with a precomputed
Taylor polynomial for 1f1, and a rounding bound is carried alongside.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from mpmath import mp, mpc, mpf

from .chars import (
    DirichletCharacter,
    RootOfUnity,
    euler_phi,
    divisors,
    factorize,
    gauss_sum,
    is_primitive,
    local_char,
    local_gauss_sum,
    trivial_character,
    valuation,
)
from .specfun import Approx, Precision, _prec, beta, cgamma, one_f_one_series, zeta_real

__all__ = [
    "GeomConfig",
    "ETermIndex",
    "GeomResult",
    "ESumDetail",
    "identity_term",
    "weyl_term",
    "local_orbital_factor",
    "identity_local_product",
    "weyl_local_product",
    "identity_closed_form",
    "weyl_closed_form",
    "conforming",
    "make_index",
    "solve_c_ell",
    "j_chi",
    "j_local",
    "e_prefactor",
    "e_term",
    "e_sum",
    "e_sum_detail",
    "e_sum_over",
    "e_sum_by_b",
    "e_tail_bound",
    "e_bound",
    "q_ratio",
    "geometric_side",
]

NEAR_W = 0.5
TAYLOR_TERMS = 28
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class GeomConfig:
    k: int
    N: int
    chi: DirichletCharacter
    r: int
    n: int
    s: complex
    psi: DirichletCharacter | None = None

    def __post_init__(self):
        psi = self.psi if self.psi is not None else trivial_character(self.N)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "s", complex(self.s))
        D = self.chi.modulus
        if self.k <= 2:
            raise ValueError(f"need k > 2, got {self.k}")
        if psi.modulus != self.N:
            raise ValueError(f"psi must have modulus N = {self.N}, got {psi.modulus}")
        if self.r < 1 or self.n < 1:
            raise ValueError("r and n must be positive")
        if math.gcd(self.r * self.n, D) != 1:
            raise ValueError(f"need gcd(rn, D) = 1 (r={self.r}, n={self.n}, D={D})")
        if math.gcd(self.n, self.N) != 1:
            raise ValueError(f"need gcd(n, N) = 1 (n={self.n}, N={self.N})")
        if math.gcd(D, self.N) != 1:
            raise ValueError(f"need gcd(D, N) = 1 (D={D}, N={self.N})")
        if psi.parity != (-1) ** self.k:
            raise ValueError("psi(-1) must equal (-1)^k")
        if not is_primitive(self.chi):
            raise ValueError(f"chi = {self.chi} is not primitive")

    @property
    def D(self) -> int:
        return self.chi.modulus

    @property
    def sigma(self) -> float:
        return self.s.real

    @property
    def tau(self) -> float:
        return self.s.imag

    def require_strip(self, lo: float, hi: float, what: str) -> None:
        if not lo < self.sigma < hi:
            raise ValueError(f"{what} needs {lo} < Re(s) < {hi}, got s = {self.s}")


@dataclass(frozen=True)
class ETermIndex:
    a: int
    d: int
    d_prime: int  # prime-to-D part d^(D)
    d_D: int
    c: int | None
    ell: int | None
    conforming: bool

    @property
    def b(self) -> int:
        return self.a * self.d


@dataclass(frozen=True)
class GeomResult:
    identity: Approx
    weyl: Approx
    e_value: Approx
    e_tail: float
    e_bound: float

    @property
    def total(self) -> Approx:
        return self.identity + self.weyl + self.e_value


def _wp(pr: Precision) -> int:
    return pr.bits + 20


def _rv(x) -> mpc:
    """complex value of a character value (RootOfUnity or 0)."""
    return x.to_complex() if isinstance(x, RootOfUnity) else mpc(0)


# --- identity and Weyl terms --------------------------------------------------------


def identity_term(c: GeomConfig, prec: Precision | int | None = None) -> Approx:
    """2^(k-1) (2 pi r n)^(k-s-1) Gamma(s) / (k-2)! * sum_{d | (n,r)} d^(2s-k+1) psi(n/d) chi(rn/d^2)."""
    pr = _prec(prec)
    c.require_strip(0, c.k - 1, "identity_term")
    k, r, n = c.k, c.r, c.n
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        tot = mpc(0)
        for d in divisors(math.gcd(n, r)):
            tot += mpmath.power(d, 2 * s - k + 1) * _rv(c.psi(n // d)) * _rv(c.chi(r * n // (d * d)))
        pref = mpf(2) ** (k - 1) * mpmath.power(2 * mpmath.pi * r * n, k - s - 1) / mpmath.factorial(k - 2)
        return cgamma(s, pr) * (pref * tot)


def weyl_term(c: GeomConfig, prec: Precision | int | None = None) -> Approx:
    """Zero unless N = 1; then the mirror of the identity term through the functional equation."""
    pr = _prec(prec)
    c.require_strip(1, c.k, "weyl_term")
    if c.N != 1:
        return Approx.exact(0)
    k, r, n, D = c.k, c.r, c.n, c.D
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        chib = c.chi.conjugate()
        tot = mpc(0)
        for d in divisors(math.gcd(n, r)):
            tot += mpmath.power(d, k - 2 * s + 1) * _rv(chib(r * n // (d * d)))
        pref = mpf(2) ** (k - 1) * mpmath.power(2 * mpmath.pi * r * n, s - 1) / mpmath.factorial(k - 2)
        ik = mpc([1, 1j, -1, -1j][k % 4])
        dpow = mpmath.power(D, k - 2 * s) if D > 1 else mpc(1)
        tau = gauss_sum(c.chi, pr)
        return cgamma(k - s, pr) * tau * tau * (pref * ik * dpow * tot / D)


# --- local orbital factors ------------------------------------------------------------


def _fr(x: Fraction) -> mpf:
    return mpf(x.numerator) / x.denominator


def _nu(N: int) -> Fraction:
    out = Fraction(N)
    for p, _ in factorize(N).factors:
        out *= Fraction(p + 1, p)
    return out


def local_orbital_factor(p: int, kind: str, c: GeomConfig, prec: Precision | int | None = None) -> Approx:
    """Value of the local orbital integral at p for the identity or Weyl cell."""
    pr = _prec(prec)
    if kind not in ("identity", "weyl"):
        raise ValueError(f"kind must be 'identity' or 'weyl', got {kind!r}")
    if len(factorize(p).factors) != 1 or factorize(p).factors[0][1] != 1:
        raise ValueError(f"{p} is not prime")
    k, r, n, N, D = c.k, c.r, c.n, c.N, c.D
    chi, psi = c.chi, c.psi
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        if kind == "identity":
            if D % p == 0:
                return Approx(local_char(chi, p, r).to_complex(pr))
            if N % p == 0:
                return Approx(_fr(_nu(p ** valuation(p, N))))
            if n % p == 0:
                np_, rp = valuation(p, n), valuation(p, r)
                tot = mpc(0)
                for j in range(min(rp, np_) + 1):
                    tot += (
                        mpmath.power(p, j * (2 * s - k + 1))
                        * local_char(psi, p, Fraction(p) ** (j - np_)).to_complex(pr)
                        * local_char(chi, p, Fraction(p) ** (2 * j - np_)).to_complex(pr)
                    )
                return Approx(mpmath.power(p**np_, k / mpf(2) - s) * tot)
            return Approx.exact(1)
        # Weyl cell
        if D % p == 0:
            Dp = p ** valuation(p, D)
            val = (
                mpmath.power(Dp, k - 2 * s)
                * local_char(psi, p, D).conjugate().to_complex(pr)
                * local_char(chi, p, D * D).conjugate().to_complex(pr)
                * local_char(chi, p, -r).conjugate().to_complex(pr)
            )
            ratio = local_gauss_sum(chi, p, pr) / local_gauss_sum(chi.conjugate(), p, pr)
            return ratio * val
        if N % p == 0:
            return Approx.exact(0)
        if n % p == 0:
            np_, rp = valuation(p, n), valuation(p, r)
            tot = mpc(0)
            for j in range(min(rp, np_) + 1):
                tot += (
                    mpmath.power(p, j * (k - 2 * s + 1))
                    * local_char(psi, p, p**j).conjugate().to_complex(pr)
                    * local_char(chi, p, Fraction(p) ** (np_ - 2 * j)).to_complex(pr)
                )
            return Approx(mpmath.power(p**np_, s - k / mpf(2)) * tot)
        return Approx.exact(1)


def _relevant_primes(c: GeomConfig) -> list[int]:
    return sorted(set(factorize(c.n * c.N * c.D).primes))


def identity_local_product(c: GeomConfig, prec=None) -> Approx:
    out = Approx.exact(1)
    for p in _relevant_primes(c):
        out = out * local_orbital_factor(p, "identity", c, prec)
    return out


def weyl_local_product(c: GeomConfig, prec=None) -> Approx:
    out = Approx.exact(1)
    for p in _relevant_primes(c):
        out = out * local_orbital_factor(p, "weyl", c, prec)
    return out


def identity_closed_form(c: GeomConfig, prec=None) -> Approx:
    """nu(N) n^(k/2-s) sum_{d | (n,r)} d^(2s-k+1) psi(n/d) chi(rn/d^2)."""
    pr = _prec(prec)
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        tot = mpc(0)
        for d in divisors(math.gcd(c.n, c.r)):
            tot += mpmath.power(d, 2 * s - c.k + 1) * _rv(c.psi(c.n // d)) * _rv(c.chi(c.r * c.n // (d * d)))
        return Approx(_fr(_nu(c.N)) * mpmath.power(c.n, c.k / mpf(2) - s) * tot)


def weyl_closed_form(c: GeomConfig, prec=None) -> Approx:
    """n^(s-k/2) / D^(2s-k) * tau(chi) / (chi(-1) tau(conj chi)) * sum d^(k-2s+1) conj chi(rn/d^2)."""
    pr = _prec(prec)
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        chib = c.chi.conjugate()
        tot = mpc(0)
        for d in divisors(math.gcd(c.n, c.r)):
            tot += mpmath.power(d, c.k - 2 * s + 1) * _rv(chib(c.r * c.n // (d * d)))
        front = mpmath.power(c.n, s - c.k / mpf(2)) / mpmath.power(c.D, 2 * s - c.k)
        ratio = gauss_sum(c.chi, pr) / (gauss_sum(chib, pr) * c.chi.parity)
        return ratio * (front * tot)


# --- indices, congruences, J_chi --------------------------------------------------------


def _split_d(d: int, D: int) -> tuple[int, int]:
    rest = d
    for p in factorize(D).primes:
        while rest % p == 0:
            rest //= p
    return rest, d // rest


def _conforming_ad(a: int, d: int, c: GeomConfig, d_prime: int) -> bool:
    for p, Dp in factorize(c.D).factors:
        dp = valuation(p, d)
        ap = valuation(p, a)
        if dp > Dp and ap != Dp:
            return False
        if dp == Dp and ap < Dp:
            return False
        if dp < Dp and ap != dp:
            return False
    g = math.gcd(a, c.N * d_prime)
    return math.gcd(c.r, c.n) % g == 0


def conforming(a: int, d: int, c: GeomConfig) -> bool:
    if a == 0 or d < 1:
        return False
    return _conforming_ad(a, d, c, _split_d(d, c.D)[0])


def _crt_c(a: int, mod: int, dD: int, rhs: int) -> int | None:
    """c with a c = rhs mod ``mod`` and c = 0 mod dD (gcd(mod, dD) = 1), or None."""
    g = math.gcd(a, mod)
    if rhs % g:
        return None
    m = mod // g
    c0 = (rhs // g) * pow(a // g, -1, m) % m if m > 1 else 0
    # c = c0 mod m, c = 0 mod dD
    if dD == 1:
        return c0
    t = (c0 * pow(dD, -1, m)) % m if m > 1 else 0
    return dD * t


def solve_c_ell(a: int, d: int, c: GeomConfig) -> tuple[int, int]:
    """(c, ell) with (a) c = D n mod N d', c = 0 mod d_D and ell = (a c - n D) / (N d')."""
    if not conforming(a, d, c):
        raise ValueError(f"unsatisfiable congruence: (a, d) = ({a}, {d}) is not conforming")
    d_prime, dD = _split_d(d, c.D)
    mod = c.N * d_prime
    cc = _crt_c(a, mod, dD, c.D * c.n)
    if cc is None:
        raise ValueError(f"unsatisfiable congruence for (a, d) = ({a}, {d})")
    num = a * cc - c.n * c.D
    if num % mod:
        raise ArithmeticError("c does not solve its congruence")
    ell = num // mod
    assert (mod * ell + c.n * c.D) % (a * dD) == 0
    return cc, ell


def make_index(a: int, d: int, c: GeomConfig) -> ETermIndex:
    d_prime, dD = _split_d(d, c.D)
    if a == 0 or d < 1 or not _conforming_ad(a, d, c, d_prime):
        return ETermIndex(a, d, d_prime, dD, None, None, False)
    cc, ell = solve_c_ell(a, d, c)
    return ETermIndex(a, d, d_prime, dD, cc, ell, True)


def _principal_part(x: Fraction, p: int) -> Fraction:
    den = x.denominator
    e = 0
    while den % p == 0:
        den //= p
        e += 1
    if e == 0:
        return Fraction(0)
    pe = p**e
    return Fraction(x.numerator * pow(den, -1, pe) % pe, pe)


@lru_cache(maxsize=None)
def _jp_dist(
    p: int, Dp: int, comp: DirichletCharacter, n_mod: int, unit: int, dp: int, b: int, d2: int, M: int
) -> tuple[tuple[Fraction, Fraction], ...]:
    """Exponent distribution of J_p at modulus p^M, as sorted (t, weight) pairs.

    Averages chi_p(N u) conj(theta_p(p^Dp unit u / (u b + d^2))) over units u
    mod p^M with v_p(u b + d^2) = dp + Dp; ``n_mod`` is N mod p^Dp and
    ``unit`` is r n (D/p^Dp) / N reduced mod a high power of p.
    """
    pM = p**M
    q = p**Dp
    weight = Fraction(1, pM // p * (p - 1))
    dist: dict[Fraction, Fraction] = {}
    target = dp + Dp
    for u in range(1, pM):
        if u % p == 0:
            continue
        big = u * b + d2
        if big == 0 or valuation(p, big) != target:
            continue
        x = Fraction(q * unit * u, big)
        t = comp._unit_exponent(n_mod * u % q) - _principal_part(x, p)
        t -= math.floor(t)
        dist[t] = dist.get(t, 0) + weight
    return tuple(sorted(dist.items()))


_J_MAX_M_EXTRA = 6


@lru_cache(maxsize=None)
def _jp_value(
    p: int, Dp: int, comp: DirichletCharacter, N: int, unit: int, dp: int, a_res: int, d_res: int, bits: int
) -> tuple[tuple[tuple[Fraction, Fraction], ...], complex]:
    if dp == 0:
        q = p**Dp
        x = (-N * d_res * pow(a_res, -1, q)) % q
        t = comp._unit_exponent(x)
        dist = ((t, Fraction(1, euler_phi(q))),)
    else:
        b = a_res * d_res
        d2 = d_res * d_res
        n_mod = N % p**Dp
        prev = _jp_dist(p, Dp, comp, n_mod, unit, dp, b, d2, Dp)
        for M in range(Dp + 1, Dp + _J_MAX_M_EXTRA + 1):
            cur = _jp_dist(p, Dp, comp, n_mod, unit, dp, b, d2, M)
            if cur == prev:
                break
            prev = cur
        else:
            raise ArithmeticError(f"J_p at p={p} did not stabilize by modulus p^{Dp + _J_MAX_M_EXTRA}")
        dist = cur
    with mp.workprec(bits):
        val = mpmath.fsum(
            [mpf(w.numerator) / w.denominator * RootOfUnity(t).to_complex(bits) for t, w in dist]
        ) if dist else mpc(0)
    return dist, val


def _j_moduli(p: int, Dp: int, dp: int) -> tuple[int, int]:
    """Moduli for a and d that determine J_p(a, d).

    For d_p > 0 only u b + d^2 modulo p^(2 d_p + D_p) matters, and b = a d
    is fixed modulo that power by a mod p^(d_p + D_p); one extra power of p
    is kept as margin.  For d_p = 0 only a, d mod p^(D_p) matter.
    """
    if dp == 0:
        return p**Dp, p**Dp
    return p ** (dp + Dp + 1), p ** (2 * dp + Dp + 2)


def _j_unit(p: int, Dp: int, dp: int, c: GeomConfig) -> int:
    pK = p ** (2 * dp + Dp + 2)
    return c.r * c.n * (c.D // p**Dp) * pow(c.N, -1, pK) % pK


def j_local(p: int, a: int, d: int, c: GeomConfig, prec: Precision | int | None = None) -> mpc:
    pr = _prec(prec)
    Dp = valuation(p, c.D)
    dp = valuation(p, d)
    am, dm = _j_moduli(p, Dp, dp)
    comp = c.chi.local_components[p]
    return _jp_value(p, Dp, comp, c.N, _j_unit(p, Dp, dp, c), dp, a % am, d % dm, _wp(pr))[1]


def j_chi(a: int, d: int, c: GeomConfig, prec: Precision | int | None = None) -> Approx:
    """prod_{p | D} J_p(a, d); an empty product (D = 1) is 1."""
    pr = _prec(prec)
    if not conforming(a, d, c):
        raise ValueError(f"(a, d) = ({a}, {d}) is not conforming")
    with mp.workprec(_wp(pr)):
        val = mpc(1)
        for p in c.chi.primes:
            val *= j_local(p, a, d, c, pr)
        return Approx(val, abs(val) * mpf(2) ** (4 - _wp(pr)))


# --- single terms -------------------------------------------------------------------------


def e_prefactor(c: GeomConfig, prec: Precision | int | None = None) -> Approx:
    """(4 pi r n)^(k-1) phi(D) psi(nD) e^(i pi s/2) / (N^s D^(s-k) (k-2)! tau(conj chi))."""
    pr = _prec(prec)
    k = c.k
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        num = mpmath.power(4 * mpmath.pi * c.r * c.n, k - 1) * euler_phi(c.D) * _rv(c.psi(c.n * c.D))
        num *= mpmath.expjpi(s / 2)
        den = mpmath.power(c.N, s) * mpmath.power(c.D, s - k) * mpmath.factorial(k - 2)
        return Approx(num / den) / gauss_sum(c.chi.conjugate(), pr)


def _apow(a: int, e: mpc) -> mpc:
    """a^e with a^e = e^(-i pi e) |a|^e for a < 0."""
    v = mpmath.power(abs(a), e)
    return v * mpmath.expjpi(-e) if a < 0 else v


def _phase(c: GeomConfig, idx: ETermIndex) -> RootOfUnity:
    return RootOfUnity(Fraction(c.r * idx.ell, idx.a * idx.d_D))


def _w(c: GeomConfig, a: int, d: int) -> mpc:
    return mpc(0, -2 * mpmath.pi * c.r * c.n * c.D / (mpf(c.N) * a * d))


def e_term(idx: ETermIndex, c: GeomConfig, prec: Precision | int | None = None, f11: Approx | None = None) -> Approx:
    """One summand of E (without the global prefactor)."""
    pr = _prec(prec)
    if not idx.conforming:
        raise ValueError(f"index (a, d) = ({idx.a}, {idx.d}) is not conforming")
    k, a, d = c.k, idx.a, idx.d
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        if f11 is None:
            f11 = one_f_one_series(s, k, _w(c, a, d), pr)
        g = math.gcd(a, c.N * idx.d_prime)
        front = _apow(a, s - k) * g / mpmath.power(d, s)
        front /= _rv(c.psi(a)) * _phase(c, idx).to_complex(pr)
        return f11 * (j_chi(a, d, c, pr) * front)


# --- summation -----------------------------------------------------------------------------


def _zeta_tail(alpha: float, cutoff: int) -> float:
    """Upper bound for sum_{m > cutoff} m^(-alpha), alpha > 1."""
    if cutoff <= 0:
        return float(zeta_real(alpha, 64).value.real) * (1 + 1e-15)
    return cutoff ** (1 - alpha) / (alpha - 1)


def e_tail_bound(c: GeomConfig, cutoff_a: int, cutoff_d: int, prec=None) -> float:
    """Envelope bound on the terms of E outside |a| <= cutoff_a, d <= cutoff_d (prefactor included)."""
    pr = _prec(prec)
    sig, tau, k = c.sigma, c.tau, c.k
    with mp.workprec(_wp(pr)):
        P = abs(e_prefactor(c, pr).value)
        B = abs(beta(sig, k - sig, pr).value)
        g = math.gcd(c.r, c.n)
        za = float(zeta_real(k - sig, 64).value.real) * (1 + 1e-15)
        zd = float(zeta_real(sig, 64).value.real) * (1 + 1e-15)
        env = float(P * B) * g * (1 + math.exp(math.pi * tau))
    if cutoff_a <= 0 or cutoff_d <= 0:
        return env * za * zd
    return env * (_zeta_tail(k - sig, cutoff_a) * zd + za * _zeta_tail(sig, cutoff_d))


@dataclass
class ESumDetail:
    value: Approx  # prefactored, tail folded into err
    tail: float
    raw: Approx  # sum before the prefactor, without tail
    n_terms: int = 0
    n_near: int = 0
    max_abs_j: float = 0.0
    rounding: float = 0.0


def _taylor_coeffs(s: mpc, k: int, pr: Precision) -> tuple[np.ndarray, float]:
    """Taylor coefficients of 1f1(s; k; w) in w, and a bound on the remainder at |w| = NEAR_W."""
    with mp.workprec(_wp(pr)):
        B = beta(s, k - s, pr).value
        cs = []
        cj = B
        for j in range(TAYLOR_TERMS):
            cs.append(complex(cj))
            cj = cj * (s + j) / ((k + j) * (j + 1))
        J = TAYLOR_TERMS
        rho = max(1.0, (float(abs(s)) + J) / (k + J)) * NEAR_W / (J + 1)
        rem = float(abs(cj)) * NEAR_W**J / (1 - rho)
    return np.array(cs), rem


@dataclass(frozen=True)
class _FarCtx:
    """Pickleable data for evaluating far-field chunks."""

    cfg: GeomConfig
    cutoff_a: int
    coeffs: tuple
    bits: int


def _j_array(c: GeomConfig, d: int, avals: np.ndarray, bits: int) -> np.ndarray:
    out = np.ones(len(avals), dtype=complex)
    comps = c.chi.local_components
    for p, Dp in factorize(c.D).factors:
        dp = valuation(p, d)
        am, dm = _j_moduli(p, Dp, dp)
        unit = _j_unit(p, Dp, dp, c)
        uniq, inv = np.unique(np.mod(avals, am), return_inverse=True)
        vals = np.array(
            [complex(_jp_value(p, Dp, comps[p], c.N, unit, dp, int(x), d % dm, bits)[1]) for x in uniq]
        )
        out *= vals[inv]
    return out


def _far_chunk(ctx: _FarCtx, d_lo: int, d_hi: int):
    """Far-field partial sums for d in [d_lo, d_hi): list of (d, sum, abs_sum, n, max|J|)."""
    c = ctx.cfg
    s = c.s
    k = c.k
    coeffs = np.array(ctx.coeffs)
    A = ctx.cutoff_a
    wscale = 2 * math.pi * c.r * c.n * c.D / c.N
    g_rn = math.gcd(c.r, c.n)
    a_all = np.arange(1, A + 1, dtype=np.int64)
    log_a = np.log(a_all.astype(float))
    neg_branch = complex(mpmath.expjpi(-(mpc(s) - k)))
    psi_tab = np.array([complex(_rv(c.psi(m))) for m in range(c.N)])
    psi_m1 = complex(_rv(c.psi(-1)))
    Dfac = factorize(c.D).factors
    out = []
    for d in range(d_lo, d_hi):
        d_prime, dD = _split_d(d, c.D)
        mod = c.N * d_prime
        mask = np.ones(A, dtype=bool)
        for p, Dp in Dfac:
            dp = valuation(p, d)
            pp = p**Dp
            if dp > Dp:
                mask &= (a_all % pp == 0) & (a_all % (pp * p) != 0)
            elif dp == Dp:
                mask &= a_all % pp == 0
            else:
                mask &= (a_all % p**dp == 0) & (a_all % p ** (dp + 1) != 0)
        g = np.gcd(a_all, mod)
        mask &= (g_rn % g) == 0
        # far field only: |w| <= NEAR_W
        mask &= a_all * d * NEAR_W >= wscale
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            out.append((d, 0j, 0.0, 0, 0.0, 0.0))
            continue
        av = a_all[idx]
        gv = g[idx].astype(float)
        # c(a) depends on a mod N d' only
        res = av % mod
        uniq, inv = np.unique(res, return_inverse=True)
        ctab = np.array([_crt_c(int(x) if x else mod, mod, dD, c.D * c.n) for x in uniq], dtype=np.int64)
        cv = ctab[inv]
        ell = (av * cv - c.n * c.D) // mod
        den = av * dD
        frac = np.mod(c.r * ell, den) / den
        phase_pos = np.exp(-2j * np.pi * frac)  # 1 / e(r ell / (a d_D))
        phase_neg = np.conj(phase_pos)  # ell(-a) = ell(a)
        y = wscale / (av.astype(float) * d)  # w = -i y for a > 0, +i y for a < 0
        wpos = -1j * y
        fpos = np.zeros(len(av), dtype=complex)
        fneg = np.zeros(len(av), dtype=complex)
        for cj in coeffs[::-1]:
            fpos = fpos * wpos + cj
            fneg = fneg * (-wpos) + cj
        apow = np.exp((s - k) * log_a[idx])
        dpow = complex(np.exp(-s * math.log(d)))
        jpos = _j_array(c, d, av, ctx.bits)
        jneg = _j_array(c, d, -av, ctx.bits)
        psi_pos = psi_tab[av % c.N] if c.N > 1 else 1.0
        psi_neg = psi_pos * psi_m1
        tpos = apow * gv * phase_pos * jpos * fpos / psi_pos
        tneg = neg_branch * apow * gv * phase_neg * jneg * fneg / psi_neg
        terms = (tpos + tneg) * dpow
        tot = complex(np.sum(terms))
        abs_tot = float(np.sum(np.abs(tpos) + np.abs(tneg)) * abs(dpow))
        # |J| <= 1 and |psi| = |phase| = 1: weights bounding each term by |1f1|
        wsum = float(np.sum(np.abs(apow) * gv) * (1 + abs(neg_branch)) * abs(dpow))
        jmax = float(max(np.max(np.abs(jpos)), np.max(np.abs(jneg))))
        out.append((d, tot, abs_tot, 2 * len(av), jmax, wsum))
    return out


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("TWISTAVG_WORKERS", "1")))
    except ValueError:
        return 1


def _near_indices(c: GeomConfig, cutoff_a: int, cutoff_d: int):
    wscale = 2 * math.pi * c.r * c.n * c.D / c.N
    for d in range(1, cutoff_d + 1):
        amax = min(cutoff_a, math.ceil(wscale / (NEAR_W * d)))
        for aa in range(1, amax + 1):
            if aa * d * NEAR_W >= wscale:
                continue
            for a in (aa, -aa):
                idx = make_index(a, d, c)
                if idx.conforming:
                    yield idx


def e_sum_detail(c: GeomConfig, cutoff_a: int, cutoff_d: int, prec: Precision | int | None = None) -> ESumDetail:
    """Truncated E over |a| <= cutoff_a, d <= cutoff_d, with the envelope tail in err."""
    pr = _prec(prec)
    c.require_strip(1, c.k - 1, "e_sum")
    tail = e_tail_bound(c, cutoff_a, cutoff_d, pr)
    if cutoff_a <= 0 or cutoff_d <= 0:
        zero = Approx(0, mpf(tail))
        return ESumDetail(zero, tail, Approx.exact(0))
    wp = _wp(pr)
    with mp.workprec(wp):
        s = mpc(c.s)
        # near field at full precision, 1f1 shared by equal b = a d
        f11_cache: dict[int, Approx] = {}
        near = Approx.exact(0)
        n_near = 0
        jmax = 0.0
        for idx in _near_indices(c, cutoff_a, cutoff_d):
            b = idx.a * idx.d
            if b not in f11_cache:
                f11_cache[b] = one_f_one_series(s, c.k, _w(c, idx.a, idx.d), pr)
            near = near + e_term(idx, c, pr, f11_cache[b])
            jmax = max(jmax, float(abs(j_chi(idx.a, idx.d, c, pr).value)))
            n_near += 1
        # far field in float64
        coeffs, trunc = _taylor_coeffs(s, c.k, pr)
        ctx = _FarCtx(c, cutoff_a, tuple(coeffs), wp)
        nw = _workers()
        step = max(1, cutoff_d // (8 * nw) + 1)
        chunks = [(lo, min(lo + step, cutoff_d + 1)) for lo in range(1, cutoff_d + 1, step)]
        if nw > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=nw) as ex:
                parts = list(ex.map(_far_chunk, [ctx] * len(chunks), *zip(*chunks)))
        else:
            parts = [_far_chunk(ctx, lo, hi) for lo, hi in chunks]
        far = mpc(0)
        abs_far = 0.0
        n_far = 0
        wsum = 0.0
        for part in parts:
            for d, tot, abs_tot, cnt, jm, ws in part:
                far += mpc(tot)
                abs_far += abs_tot
                n_far += cnt
                wsum += ws
                jmax = max(jmax, jm)
        # float64 error: Horner + products (~TAYLOR_TERMS + 40 roundings per term) and summation
        rounding = (TAYLOR_TERMS + 40 + math.log2(max(n_far, 2))) * _EPS * abs_far
        # Taylor remainder of 1f1 for |w| <= NEAR_W, times the term weights
        trunc_abs = trunc * wsum
        raw = near + Approx(far, mpf(rounding + trunc_abs))
        P = e_prefactor(c, pr)
        val = P * raw
        val = Approx(val.value, val.err + mpf(tail))
        return ESumDetail(val, tail, raw, n_near + n_far, n_near, jmax, rounding * float(abs(P.value)))


def e_sum(c: GeomConfig, cutoff_a: int, cutoff_d: int, prec: Precision | int | None = None) -> tuple[Approx, float]:
    det = e_sum_detail(c, cutoff_a, cutoff_d, prec)
    return det.value, det.tail


def e_sum_over(c: GeomConfig, pairs, prec: Precision | int | None = None) -> Approx:
    """Prefactored sum of e_term over an explicit collection of (a, d); non-conforming pairs skipped."""
    pr = _prec(prec)
    with mp.workprec(_wp(pr)):
        tot = Approx.exact(0)
        for a, d in pairs:
            idx = make_index(a, d, c)
            if idx.conforming:
                tot = tot + e_term(idx, c, pr)
        return e_prefactor(c, pr) * tot


def e_sum_by_b(c: GeomConfig, b_max: int, prec: Precision | int | None = None) -> Approx:
    """E restricted to 0 < |b| <= b_max, summed per t = N b / (n D) with d | b.

    Built from the per-t factorization: an archimedean factor carrying
    b^(s-k) and 1f1 at w = -2 pi i r n D / (N b), and a finite part summing
    over d | b with weight gcd(b/d, N d') psi(nD) / (psi(b/d) d^(2s-k) e(r ell / ((b/d) d_D))).
    """
    pr = _prec(prec)
    k, r, n, N, D = c.k, c.r, c.n, c.N, c.D
    with mp.workprec(_wp(pr)):
        s = mpc(c.s)
        pi = mpmath.pi
        nu = _fr(_nu(N))
        tau_bar = gauss_sum(c.chi.conjugate(), pr)
        # archimedean constant without e^(2 pi r), which cancels against the normalization
        arch = mpmath.power(4 * pi * r, k - 1) * mpmath.power(N, s - k) * mpmath.expjpi(s / 2)
        arch /= mpmath.factorial(k - 2) * mpmath.power(n, s - k) * mpmath.power(D, s - k)
        fin = mpmath.power(n, s - k / mpf(2)) * euler_phi(D) * nu / mpmath.power(N, 2 * s - k)
        norm = 1 / (nu * mpmath.power(n, 1 - k / mpf(2)))
        psi_nD = _rv(c.psi(n * D))
        total = Approx.exact(0)
        for bb in range(1, b_max + 1):
            for b in (bb, -bb):
                inner = Approx.exact(0)
                for d in divisors(bb):
                    idx = make_index(b // d, d, c)
                    if not idx.conforming:
                        continue
                    a = idx.a
                    g = math.gcd(a, N * idx.d_prime)
                    wgt = psi_nD * g / (_rv(c.psi(a)) * mpmath.power(d, 2 * s - k) * _phase(c, idx).to_complex(pr))
                    inner = inner + j_chi(a, d, c, pr) * wgt
                if inner.value == 0 and inner.err == 0:
                    continue
                f11 = one_f_one_series(s, k, mpc(0, -2 * pi * r * n * D / (mpf(N) * b)), pr)
                total = total + f11 * inner * _apow(b, s - k)
        return (total * (arch * fin * norm)) / tau_bar


# --- bounds -----------------------------------------------------------------------------


def e_bound(c: GeomConfig, prec: Precision | int | None = None) -> float:
    """2 gcd(r,n) (4 pi r n)^(k-1) D^(k-sigma-1/2) phi(D) B(sigma, k-sigma) cosh(pi tau/2) zeta(k-sigma) zeta(sigma) / (N^sigma (k-2)!)."""
    pr = _prec(prec)
    c.require_strip(1, c.k - 1, "e_bound")
    k, sig, tau = c.k, c.sigma, c.tau
    with mp.workprec(_wp(pr)):
        val = (
            2
            * math.gcd(c.r, c.n)
            * mpmath.power(4 * mpmath.pi * c.r * c.n, k - 1)
            * mpmath.power(c.D, k - sig - mpf(1) / 2)
            * euler_phi(c.D)
            * beta(sig, k - sig, pr).value.real
            * mpmath.cosh(mpmath.pi * tau / 2)
            * zeta_real(k - sig, pr).value.real
            * zeta_real(sig, pr).value.real
            / (mpmath.power(c.N, sig) * mpmath.factorial(k - 2))
        )
        return float(val)


def q_ratio(c: GeomConfig, cutoff_a: int = 2000, cutoff_d: int = 200, prec=None) -> float:
    """(|E truncated| + tail) / |identity term|."""
    ident = identity_term(c, prec)
    if ident.value == 0:
        raise ValueError("identity term vanishes; ratio undefined")
    val, tail = e_sum(c, cutoff_a, cutoff_d, prec)
    return float((abs(val.value) + tail) / abs(ident.value))


def geometric_side(
    c: GeomConfig, cutoff_a: int, cutoff_d: int, prec: Precision | int | None = None
) -> tuple[GeomResult, ESumDetail]:
    ident = identity_term(c, prec)
    weyl = weyl_term(c, prec)
    det = e_sum_detail(c, cutoff_a, cutoff_d, prec)
    bound = e_bound(c, prec)
    return GeomResult(ident, weyl, det.value, det.tail, bound), det
