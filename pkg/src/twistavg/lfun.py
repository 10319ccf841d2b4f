"""Completed twisted L-functions and the spectral side of the first moment.

Two evaluators are provided.  ``lambda_direct`` sums the Dirichlet series
where it converges absolutely.  ``lambda_strip`` splits the Mellin
integral of the twisted form at y = 1/D and folds the lower half back with
the functional equation, giving incomplete-gamma sums that converge
exponentially anywhere in 0 < Re(s) < k.  Agreement of the two in their
common range is the standing check on the second one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
from mpmath import mp, mpc, mpf

from .chars import DirichletCharacter, gauss_sum, is_primitive, trivial_character
from .forms import Eigenform, eigenforms
from .specfun import Approx, Precision, _prec, cgamma, upper_incomplete_gamma

__all__ = [
    "LParams",
    "SpectralConfig",
    "lambda_direct",
    "lambda_strip",
    "fe_root",
    "fe_residual",
    "spectral_side",
    "eigenforms_cached",
]


@dataclass(frozen=True)
class LParams:
    form: Eigenform
    chi: DirichletCharacter
    s: complex

    def __post_init__(self):
        k = self.form.weight
        if k <= 2:
            raise ValueError(f"weight must exceed 2, got {k}")
        if math.gcd(self.chi.modulus, self.form.form.level) != 1:
            raise ValueError("character modulus must be coprime to the level")

    @property
    def k(self) -> int:
        return self.form.weight


@dataclass(frozen=True)
class SpectralConfig:
    k: int
    chi: DirichletCharacter
    r: int
    n: int
    s: complex
    N: int = 1
    psi: DirichletCharacter = field(default_factory=trivial_character)

    def __post_init__(self):
        D = self.chi.modulus
        if self.N != 1:
            raise ValueError("the spectral side is only available at level N = 1")
        if self.r < 1 or self.n < 1:
            raise ValueError("r and n must be positive integers")
        if math.gcd(self.r * self.n, D) != 1:
            raise ValueError(f"need gcd(rn, D) = 1, got r={self.r}, n={self.n}, D={D}")
        sig = complex(self.s).real
        if not 1 < sig < self.k - 1:
            raise ValueError(f"need 1 < Re(s) < k-1, got s={self.s}")


def _char_table(chi: DirichletCharacter, bits: int) -> list[mpc]:
    return [chi.value(m, bits) for m in range(chi.modulus)]


def _is_exact(c) -> bool:
    return isinstance(c, int)


def _dirichlet_tail(alpha: float, M: int) -> float:
    """Bound on sum_{n > M} d(n) n^(-alpha), alpha > 1, from sum_{n<=x} d(n) <= x(log x + 1)."""
    a1 = alpha - 1
    return alpha * M ** (-a1) * ((math.log(M) + 1) / a1 + 1 / a1**2)


def lambda_direct(p: LParams, tol: float = 1e-12, prec: Precision | int | None = None) -> Approx:
    """(2 pi)^(-s) Gamma(s) sum_{n <= M} chi(n) a_n n^(-s), tail bound folded into err.

    ``tol`` is relative to the computed Dirichlet-series value; the length M
    is chosen with a factor-two margin on the tail bound.
    """
    pr = _prec(prec)
    k = p.k
    s = mpc(p.s)
    sigma = float(s.real)
    if sigma < k / 2 + 1:
        raise ValueError(
            f"Re(s) = {sigma} is outside the absolute-convergence margin Re(s) >= {k / 2 + 1}; "
            "use lambda_strip"
        )
    alpha = sigma - (k - 1) / 2
    M = 16
    while 2 * _dirichlet_tail(alpha, M) > tol / 2:
        M = int(M * 1.25) + 1
    f = p.form.form
    if M > f.prec:
        raise ValueError(f"lambda_direct needs {M} coefficients, form has {f.prec}")
    wp = pr.bits + 20 + M.bit_length()
    with mp.workprec(wp):
        table = _char_table(p.chi, wp)
        D = p.chi.modulus
        terms = []
        for n in range(1, M + 1):
            c = table[n % D]
            if c == 0:
                continue
            a = f.coeffs[n - 1]
            if a == 0:
                continue
            terms.append(c * a * mpmath.exp(-s * mpmath.log(n)))
        L = mpmath.fsum(terms)
        tail = _dirichlet_tail(alpha, M)
        if tail > tol * abs(L):
            raise ArithmeticError(f"tail {tail:.3g} above tol relative to |L| = {float(abs(L)):.3g}")
        g = cgamma(s, pr)
        pref = Approx(mpmath.power(2 * mpmath.pi, -s)) * g
        Lx = Approx(L, mpf(tail) + len(terms) * abs(L) * mpf(2) ** (1 - wp) * 4)
        return pref * Lx


def fe_root(chi: DirichletCharacter, k: int, prec: Precision | int | None = None) -> Approx:
    """i^k tau(chi)^2 / D."""
    pr = _prec(prec)
    with mp.workprec(pr.bits + 20):
        t = gauss_sum(chi, pr)
        ik = [1, 1j, -1, -1j][k % 4]
        return t * t * mpc(ik) / chi.modulus


def _strip_length(k: int, sigma: float, D: int, target: float) -> tuple[int, float]:
    """Smallest M with the Deligne-based tail of both incomplete-gamma sums below target."""
    M = 1
    while True:
        x = 2 * math.pi * (M + 1) / D
        total = 0.0
        ok = True
        for sg, scale in ((sigma, D ** (1 - sigma)), (k - sigma, D ** (1 - (k - sigma)) * D ** (k - 2 * sigma))):
            if x <= 2 * (sg - 1):
                ok = False
                break
            rho = ((M + 2) / (M + 1)) ** (k / 2 - 1) * math.exp(-2 * math.pi / D)
            if rho >= 1:
                ok = False
                break
            # |a_n (2 pi n)^(-sg) Gamma(sg, x_n)| <= 2 n^(k/2) (2 pi n)^(-1) D^(1-sg) e^(-x_n) / (1 - (sg-1)/x_n)
            first = 2 * (M + 1) ** (k / 2) / (2 * math.pi * (M + 1)) * scale * math.exp(-x) / (1 - (sg - 1) / x)
            total += first / (1 - rho)
        if ok and total < target:
            return M, total
        M += 1


def lambda_strip(p: LParams, tol: float = 1e-30, prec: Precision | int | None = None) -> Approx:
    """Lambda(s, h, chi) for 0 < Re(s) < k at level one.

    Lambda(s) = sum chi(n) a_n (2 pi n)^(-s) Gamma(s, 2 pi n/D)
              + eps D^(k-2s) sum conj(chi)(n) a_n (2 pi n)^(s-k) Gamma(k-s, 2 pi n/D),
    eps = i^k tau(chi)^2 / D.  ``tol`` is an absolute truncation target.
    """
    pr = _prec(prec)
    k = p.k
    s = mpc(p.s)
    sigma = float(s.real)
    if not 0 < sigma < k:
        raise ValueError(f"need 0 < Re(s) < k, got {s}")
    if p.form.form.level != 1:
        raise ValueError("lambda_strip is implemented at level 1 only")
    if not is_primitive(p.chi):
        raise ValueError(f"character {p.chi} is not primitive")
    D = p.chi.modulus
    M, tail = _strip_length(k, sigma, D, tol)
    f = p.form.form
    if M > f.prec:
        raise ValueError(f"lambda_strip needs {M} coefficients, form has {f.prec}")
    wp = pr.bits + 20
    with mp.workprec(wp):
        chi_t = _char_table(p.chi, wp)
        chib_t = _char_table(p.chi.conjugate(), wp)
        eps = fe_root(p.chi, k, pr)
        sk = k - s
        two_pi = 2 * mpmath.pi
        front = Approx.exact(0)
        back = Approx.exact(0)
        for n in range(1, M + 1):
            a = f.coeffs[n - 1]
            c1, c2 = chi_t[n % D], chib_t[n % D]
            if a == 0 or c1 == 0:
                continue
            x = two_pi * n / D
            g1 = upper_incomplete_gamma(s, x, pr)
            g2 = upper_incomplete_gamma(sk, x, pr)
            lg = mpmath.log(two_pi * n)
            front = front + g1 * (c1 * a * mpmath.exp(-s * lg))
            back = back + g2 * (c2 * a * mpmath.exp(-sk * lg))
        dpow = Approx(mpmath.power(D, k - 2 * s)) if D > 1 else Approx.exact(1)
        out = front + eps * dpow * back
        return Approx(out.value, out.err + mpf(tail))


def fe_residual(p: LParams, prec: Precision | int | None = None, with_err: bool = False, tol: float = 1e-30):
    """|Lambda(s, chi) - i^k D^(k-2s) tau(chi)^2/D Lambda(k-s, conj chi)|, both by lambda_strip.

    With ``with_err`` the propagated error of that difference is returned too.
    """
    pr = _prec(prec)
    k = p.k
    with mp.workprec(pr.bits + 20):
        s = mpc(p.s)
        lhs = lambda_strip(p, tol, pr)
        rhs = lambda_strip(LParams(p.form, p.chi.conjugate(), k - s), tol, pr)
        dpow = Approx(mpmath.power(p.chi.modulus, k - 2 * s))
        diff = lhs - fe_root(p.chi, k, pr) * dpow * rhs
        if with_err:
            return abs(diff.value), diff.err
        return abs(diff.value)


_EIGEN_CACHE: dict[int, list[Eigenform]] = {}


def eigenforms_cached(k: int, prec: int) -> list[Eigenform]:
    """Eigenforms with at least ``prec`` coefficients; Petersson norms are kept across calls."""
    have = _EIGEN_CACHE.get(k)
    if have is None or (have and have[0].form.prec < prec):
        fresh = eigenforms(k, max(prec, 64))
        if have:
            for new, old in zip(fresh, have):
                new.petersson_sq = old.petersson_sq
        _EIGEN_CACHE[k] = fresh
    return _EIGEN_CACHE[k]


def spectral_side(c: SpectralConfig, tol: float = 1e-30, prec: Precision | int | None = None) -> Approx:
    """sum_h lambda_n(h) conj(a_r(h)) Lambda(s, h, chi) / ||h||^2 over level-one eigenforms."""
    pr = _prec(prec)
    k = c.k
    sigma = complex(c.s).real
    M, _ = _strip_length(k, sigma, c.chi.modulus, tol)
    forms = eigenforms_cached(k, max(M, c.r, c.n) + 1)
    with mp.workprec(pr.bits + 20):
        total = Approx.exact(0)
        for h in forms:
            lam = h.eigenvalue(c.n)
            ar = h.form.a(c.r)
            lam_err = 0 if _is_exact(lam) else abs(lam) * h.residual * 1e3
            ar_err = 0 if _is_exact(ar) else abs(ar) * h.residual * 1e3
            weight = Approx(lam, lam_err) * Approx(mpmath.conj(ar), ar_err)
            lam_s = lambda_strip(LParams(h, c.chi, c.s), tol, pr)
            total = total + weight * lam_s / h.norm_sq()
        return total
