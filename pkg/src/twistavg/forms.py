"""Level-one cusp forms as exact q-expansions.

Bases come from Miller-style monomials Delta^j E4^a E6^b in exact integer
arithmetic.  Long products use Kronecker substitution: a coefficient list
is packed into one big integer, multiplied by gmpy2, and unpacked.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import gmpy2
import mpmath
import numpy as np
from mpmath import mp, mpc, mpf

from .chars import DirichletCharacter, divisors, gauss_sum
from .specfun import Approx, Precision, _prec

__all__ = [
    "QExpansion",
    "Eigenform",
    "series_mul",
    "eisenstein",
    "delta_eta",
    "cusp_dimension",
    "cusp_basis",
    "hecke_apply",
    "hecke_slash_eval",
    "eigenforms",
    "t2_trace",
    "twist_coeffs",
    "twist_eval_hchi",
    "eval_form",
    "petersson_norm_sq",
]

CACHE_VERSION = 1


# --- exact power series ----------------------------------------------------------


def _pack(coeffs, nbytes: int) -> int:
    pos = b"".join((c if c > 0 else 0).to_bytes(nbytes, "little") for c in coeffs)
    neg = b"".join((-c if c < 0 else 0).to_bytes(nbytes, "little") for c in coeffs)
    return int.from_bytes(pos, "little") - int.from_bytes(neg, "little")


def series_mul(a: list[int], b: list[int], n: int | None = None) -> list[int]:
    """Product of two integer power series (index = exponent), truncated to n terms."""
    if not a or not b:
        return []
    if n is None:
        n = len(a) + len(b) - 1
    a, b = a[:n], b[:n]
    if min(len(a), len(b)) <= 32:
        out = [0] * min(n, len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b[: n - i]):
                    out[i + j] += x * y
        return out
    amax = max(abs(x) for x in a)
    bmax = max(abs(x) for x in b)
    bits = amax.bit_length() + bmax.bit_length() + min(len(a), len(b)).bit_length() + 2
    nbytes = (bits + 7) // 8
    width = 8 * nbytes
    prod_ = gmpy2.mpz(_pack(a, nbytes)) * gmpy2.mpz(_pack(b, nbytes))
    m = min(n, len(a) + len(b) - 1)
    # offsetting every slot by 2^(width-1) keeps slots nonnegative, so no borrows
    half = 1 << (width - 1)
    offset = int.from_bytes(half.to_bytes(nbytes, "little") * m, "little")
    raw = (int(prod_) + offset) & ((1 << (width * m)) - 1)
    buf = raw.to_bytes(nbytes * m, "little")
    return [
        int.from_bytes(buf[i * nbytes : (i + 1) * nbytes], "little") - half for i in range(m)
    ]


def _divisor_power_sums(power: int, n: int) -> list[int]:
    s = [0] * (n + 1)
    for d in range(1, n + 1):
        dk = d**power
        for m in range(d, n + 1, d):
            s[m] += dk
    return s


def eisenstein(weight: int, prec: int) -> list[int]:
    """E4 or E6 as [1, c_1, ..., c_prec] (constant term first)."""
    if weight == 4:
        c, pw = 240, 3
    elif weight == 6:
        c, pw = -504, 5
    else:
        raise ValueError(f"only E4 and E6 are provided, not weight {weight}")
    sig = _divisor_power_sums(pw, prec)
    return [1] + [c * sig[m] for m in range(1, prec + 1)]


def _pow_series(f: list[int], e: int, n: int) -> list[int]:
    out = [1]
    base = f[:n]
    while e:
        if e & 1:
            out = series_mul(out, base, n)
        e >>= 1
        if e:
            base = series_mul(base, base, n)
    return out


def delta_eta(prec: int) -> list[int]:
    """tau(1..prec) from q * prod (1 - q^m)^24, via the pentagonal series."""
    n = prec
    eta = [0] * n
    j = 0
    while True:
        hit = False
        for g, sign in ((j * (3 * j - 1) // 2, (-1) ** j), (j * (3 * j + 1) // 2, (-1) ** j)):
            if g < n:
                eta[g] = sign
                hit = True
        if not hit:
            break
        j += 1
    e24 = _pow_series(eta, 24, n)
    return e24[:prec]


# --- q-expansions --------------------------------------------------------------------


@dataclass(frozen=True)
class QExpansion:
    """sum_{n >= 1} a_n q^n, stored as coeffs[n-1] = a_n for n <= prec.

    Coefficients are Python ints for constructed bases; eigenforms in
    dimension >= 2 and twisted forms carry mpf/mpc coefficients.
    """

    weight: int
    coeffs: tuple
    level: int = 1

    @property
    def prec(self) -> int:
        return len(self.coeffs)

    def a(self, n: int):
        if not 1 <= n <= self.prec:
            raise IndexError(f"coefficient a_{n} beyond precision {self.prec}")
        return self.coeffs[n - 1]

    @property
    def exact(self) -> bool:
        return all(isinstance(c, (int, Fraction)) for c in self.coeffs)

    def truncate(self, prec: int) -> "QExpansion":
        if prec > self.prec:
            raise ValueError(f"cannot extend precision {self.prec} to {prec}")
        return QExpansion(self.weight, self.coeffs[:prec], self.level)

    def scale(self, c) -> "QExpansion":
        return QExpansion(self.weight, tuple(c * x for x in self.coeffs), self.level)

    def __add__(self, other: "QExpansion") -> "QExpansion":
        n = min(self.prec, other.prec)
        return QExpansion(
            self.weight, tuple(x + y for x, y in zip(self.coeffs[:n], other.coeffs[:n])), self.level
        )


@dataclass
class Eigenform:
    form: QExpansion
    petersson_sq: Approx | None = None
    residual: float = 0.0
    _lam: dict = field(default_factory=dict, repr=False)

    @property
    def weight(self) -> int:
        return self.form.weight

    def eigenvalue(self, n: int):
        if n not in self._lam:
            self._lam[n] = self.form.a(n)
        return self._lam[n]

    def norm_sq(self, tol: float = 1e-12) -> Approx:
        if self.petersson_sq is None:
            self.petersson_sq = petersson_norm_sq(self.form, tol)
        return self.petersson_sq


def cusp_dimension(k: int) -> int:
    if k % 2 or k < 0:
        return 0
    if k == 2:
        return 0
    return k // 12 - 1 if k % 12 == 2 else k // 12


_BASIS_MEM: dict[int, tuple[QExpansion, ...]] = {}


def _cache_path(k: int) -> Path | None:
    root = os.environ.get("TWISTAVG_CACHE_DIR")
    if not root:
        return None
    return Path(root) / f"cusp_basis_k{k}_v{CACHE_VERSION}.json"


def _load_cache(k: int, prec: int):
    path = _cache_path(k)
    if path is None or not path.exists():
        return None
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError):
        return None
    if data.get("version") != CACHE_VERSION or data.get("k") != k or data.get("prec", 0) < prec:
        return None
    return [[int(x) for x in row[:prec]] for row in data["basis"]]


def _store_cache(k: int, prec: int, basis: list[list[int]]) -> None:
    path = _cache_path(k)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {"version": CACHE_VERSION, "k": k, "prec": prec, "basis": [[str(x) for x in r] for r in basis]}
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(data))
    tmp.replace(path)


def _miller_basis(k: int, prec: int) -> list[list[int]]:
    d = cusp_dimension(k)
    if d == 0:
        return []
    n = prec + 1  # series index 0..prec
    e4 = eisenstein(4, prec)
    e6 = eisenstein(6, prec)
    delta = [0] + [c for c in _delta_from_eisenstein(e4, e6, n)[1:]]
    rows = []
    delta_pow = [1]
    for j in range(1, d + 1):
        delta_pow = series_mul(delta_pow, delta, n)
        rest = k - 12 * j
        b = 1 if rest % 4 else 0
        a = (rest - 6 * b) // 4
        f = series_mul(delta_pow, _pow_series(e4, a, n), n)
        if b:
            f = series_mul(f, e6, n)
        f = f + [0] * (n - len(f))
        rows.append(f[1:])
    # unitriangular integer elimination: row i becomes q^i + O(q^(d+1))
    for i in range(d - 1, -1, -1):
        for j in range(i + 1, d):
            c = rows[i][j]
            if c:
                rows[i] = [x - c * y for x, y in zip(rows[i], rows[j])]
    return rows


def _delta_from_eisenstein(e4, e6, n):
    num = [x - y for x, y in zip(_pow_series(e4, 3, n), series_mul(e6, e6, n))]
    out = []
    for x in num:
        q, r = divmod(x, 1728)
        if r:
            raise ArithmeticError("E4^3 - E6^2 not divisible by 1728")
        out.append(q)
    return out


def cusp_basis(k: int, prec: int) -> list[QExpansion]:
    """Echelonized integral basis f_i = q^i + O(q^(d+1)) of S_k(SL2(Z))."""
    if k % 2:
        raise ValueError(f"weight must be even, got {k}")
    if cusp_dimension(k) == 0:
        return []
    have = _BASIS_MEM.get(k)
    if have and have[0].prec >= prec:
        return [f.truncate(prec) for f in have]
    rows = _load_cache(k, prec)
    if rows is None:
        rows = _miller_basis(k, prec)
        _store_cache(k, prec, rows)
    basis = tuple(QExpansion(k, tuple(r)) for r in rows)
    _BASIS_MEM[k] = basis
    return list(basis)


# --- Hecke operators ---------------------------------------------------------------


def hecke_apply(n: int, f: QExpansion) -> QExpansion:
    """a_m(T_n f) = sum_{d | (m, n)} d^(k-1) a_{mn/d^2}(f), for m <= prec // n."""
    if n < 1:
        raise ValueError("Hecke index must be positive")
    if math.gcd(n, f.level) != 1:
        raise ValueError(f"T_{n} needs gcd(n, N) = 1")
    out_prec = f.prec // n
    if out_prec < 1:
        raise ValueError(f"T_{n} needs input precision at least {n}, have {f.prec}")
    k = f.weight
    coeffs = []
    for m in range(1, out_prec + 1):
        tot = 0
        for d in divisors(math.gcd(m, n)):
            tot += d ** (k - 1) * f.coeffs[m * n // (d * d) - 1]
        coeffs.append(tot)
    return QExpansion(k, tuple(coeffs), f.level)


def _qpowers_bound(k: int, absq: float, prec: int) -> float:
    """Bound on sum_{n > prec} d(n) n^((k-1)/2) |q|^n with d(n) <= 2 sqrt(n)."""
    n0 = prec + 1
    rho = (1 + 1 / n0) ** (k / 2) * absq
    if rho >= 1:
        return math.inf
    return 2 * n0 ** (k / 2) * absq**n0 / (1 - rho)


def _coeff_envelope(f: QExpansion) -> float:
    """Constant C with |a_n| <= C d(n) n^((k-1)/2) on the stored range.

    Exact for normalized eigenforms (C = 1 by Deligne); for other forms it
    is read off the stored coefficients and then assumed on the tail.
    """
    k = f.weight
    c = 0.0
    for n in range(1, min(f.prec, 200) + 1):
        a = abs(complex(f.coeffs[n - 1]))
        env = len(divisors(n)) * n ** ((k - 1) / 2)
        c = max(c, a / env)
    return max(c, 1.0)


def eval_form(
    f: QExpansion,
    z,
    tol: float | None = None,
    prec: Precision | int | None = None,
    envelope: float | None = None,
) -> Approx:
    """sum_{n <= prec} a_n e^(2 pi i n z) with a Deligne-type tail bound."""
    pr = _prec(prec)
    z = mpc(z)
    if not z.imag > 0:
        raise ValueError(f"evaluation point must lie in the upper half plane, got {z}")
    with mp.workprec(pr.bits + 20):
        q = mpmath.expjpi(2 * z)
        absq = float(abs(q))
        if envelope is None:
            envelope = _coeff_envelope(f)
        tail = envelope * _qpowers_bound(f.weight, absq, f.prec)
        acc = mpc(0)
        for c in reversed(f.coeffs):
            acc = (acc + c) * q
        if tol is not None and tail > tol:
            need = int(math.log(tol / max(envelope, 1)) / math.log(absq)) + f.weight + 10
            raise ValueError(f"tail bound {tail:.3g} exceeds tol {tol:.3g}; use prec >= {need}")
        rnd = abs(acc) * f.prec * mpf(2) ** (-pr.bits - 10)
        return Approx(acc, mpf(tail) + rnd)


def hecke_slash_eval(f: QExpansion, n: int, z, prec: Precision | int | None = None) -> Approx:
    """T_n f(z) = n^(k-1) sum_{ad = n} sum_{b < d} d^(-k) f((az + b)/d), trivial nebentypus."""
    z = mpc(z)
    if not z.imag > 0:
        raise ValueError(f"evaluation point must lie in the upper half plane, got {z}")
    pr = _prec(prec)
    k = f.weight
    with mp.workprec(pr.bits + 20):
        total = Approx.exact(0)
        for d in divisors(n):
            a = n // d
            inner = Approx.exact(0)
            for b in range(d):
                inner = inner + eval_form(f, (a * z + b) / d, prec=pr)
            total = total + inner * (mpf(d) ** (-k))
        return total * (mpf(n) ** (k - 1))


# --- eigenforms ----------------------------------------------------------------------


def eigenforms(k: int, prec: int, bits: int = 128) -> list[Eigenform]:
    """Normalized Hecke eigenforms of weight k and level 1.

    Dimension one is exact.  Otherwise T_2 is diagonalized on the echelon
    basis in floating point and each eigenvector carries its residual.
    """
    if k % 2:
        raise ValueError(f"weight must be even, got {k}")
    basis = cusp_basis(k, max(prec, 2 * cusp_dimension(k) + 2))
    d = len(basis)
    if d == 0:
        return []
    if d == 1:
        return [Eigenform(basis[0].truncate(prec))]
    t2 = [hecke_apply(2, f) for f in basis]
    mat = [[t2[i].a(j + 1) for j in range(d)] for i in range(d)]
    out = []
    with mp.workprec(bits + 40):
        mt = mpmath.matrix(d, d)
        for i in range(d):
            for j in range(d):
                mt[j, i] = mat[i][j]
        evals, evecs = mpmath.eig(mt)
        for idx in range(d):
            v = [evecs[i, idx] for i in range(d)]
            v = [x / v[0] for x in v]
            lam = evals[idx]
            res = max(abs(sum(mt[i, j] * v[j] for j in range(d)) - lam * v[i]) for i in range(d))
            vnorm = max(abs(x) for x in v)
            v = [mpf(x.real) if abs(x.imag) <= 1e-30 * vnorm else x for x in v]
            coeffs = [mpmath.fsum(v[i] * basis[i].coeffs[m] for i in range(d)) for m in range(prec)]
            out.append(Eigenform(QExpansion(k, tuple(coeffs)), residual=float(res / vnorm)))
    out.sort(key=lambda h: float(mpmath.re(h.form.a(2))))
    return out


def t2_trace(k: int) -> int:
    basis = cusp_basis(k, 2 * cusp_dimension(k) + 2)
    return sum(hecke_apply(2, f).a(i + 1) for i, f in enumerate(basis))


# --- twisting ------------------------------------------------------------------------


def twist_coeffs(f: QExpansion, chi: DirichletCharacter) -> QExpansion:
    """The q-expansion sum chi(n) a_n q^n (complex coefficients unless chi is trivial)."""
    if chi.modulus == 1:
        return f
    coeffs = []
    for n in range(1, f.prec + 1):
        v = chi(n)
        if v == 0:
            coeffs.append(0)
        elif chi.is_real:
            coeffs.append(f.coeffs[n - 1] * (1 if v == 1 else -1))
        else:
            coeffs.append(f.coeffs[n - 1] * v.to_complex())
    return QExpansion(f.weight, tuple(coeffs), f.level)


def twist_eval_hchi(f: QExpansion, chi: DirichletCharacter, z, prec: Precision | int | None = None) -> Approx:
    """(1 / tau(conj chi)) sum_{m mod D} conj(chi)(m) f(z + m/D)."""
    pr = _prec(prec)
    z = mpc(z)
    D = chi.modulus
    cb = chi.conjugate()
    with mp.workprec(pr.bits + 20):
        total = Approx.exact(0)
        for m in range(D):
            v = cb(m)
            if v == 0:
                continue
            total = total + eval_form(f, z + mpf(m) / D, prec=pr) * v.to_complex(pr)
        return total / gauss_sum(cb, pr)


# --- Petersson norm ------------------------------------------------------------------


def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _abs_f_sq(coeffs: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|sum a_n q^n|^2 at points x + iy (float64, Horner in q)."""
    q = np.exp(-2 * np.pi * y) * np.exp(2j * np.pi * x)
    acc = np.zeros_like(q)
    for c in coeffs[::-1]:
        acc = (acc + c) * q
    return np.abs(acc) ** 2


def _petersson_once(coeffs: np.ndarray, k: int, m: int, y_top: float) -> float:
    """One quadrature pass with m Gauss nodes per direction and panel."""
    t, w = _gl(m)
    # wedge between the arc |z| = 1 and y = 1, for |x| <= 1/2
    xs = 0.5 * (t + 1) * 0.5  # [0, 1/2]
    wx = w * 0.25
    total = 0.0
    for xi, wxi in zip(xs, wx):
        lo = math.sqrt(1 - xi * xi)
        ys = lo + (1 - lo) * 0.5 * (t + 1)
        wy = w * (1 - lo) * 0.5
        vals = _abs_f_sq(coeffs, np.full_like(ys, xi), ys) * ys ** (k - 2)
        total += 2 * wxi * float(np.dot(wy, vals))
    # strip 1 <= y <= 2: trapezoid in x is spectral for periodic integrands
    npx = 2 * m
    xg = (np.arange(npx) + 0.5) / npx - 0.5
    for a, b in ((1.0, 1.5), (1.5, 2.0)):
        ys = a + (b - a) * 0.5 * (t + 1)
        wy = w * (b - a) * 0.5
        X, Y = np.meshgrid(xg, ys)
        vals = _abs_f_sq(coeffs, X, Y).mean(axis=1) * ys ** (k - 2)
        total += float(np.dot(wy, vals))
    # y >= 2: integrate over x by orthogonality of e(nx), then Gauss in y
    a2 = np.abs(coeffs) ** 2
    nn = np.arange(1, len(coeffs) + 1)
    edges = np.linspace(2.0, y_top, 9)
    for a, b in zip(edges[:-1], edges[1:]):
        ys = a + (b - a) * 0.5 * (t + 1)
        wy = w * (b - a) * 0.5
        vals = (a2[None, :] * np.exp(-4 * np.pi * np.outer(ys, nn))).sum(axis=1) * ys ** (k - 2)
        total += float(np.dot(wy, vals))
    return total


def petersson_norm_sq(f: QExpansion | Eigenform, tol: float = 1e-12) -> Approx:
    """Petersson norm over the standard fundamental domain (level 1, nu(1) = 1).

    The integrand |f|^2 y^(k-2) is integrated in float64: Gauss-Legendre on
    the wedge under y = 1, periodic trapezoid in x on 1 <= y <= 2, and the
    Fourier expansion above y = 2 up to a cutoff Y whose remainder is
    bounded analytically.  The node count is doubled until successive
    values agree; the reported err is that difference plus the tail bound
    and a float64 rounding allowance (an a posteriori estimate).
    """
    if isinstance(f, Eigenform):
        f = f.form
    if f.level != 1:
        raise ValueError("Petersson quadrature is implemented for level 1 only")
    k = f.weight
    # |q| <= e^(-pi sqrt 3) on the domain; keep terms until negligible
    absq = math.exp(-math.pi * math.sqrt(3))
    env = _coeff_envelope(f)
    nterm = 1
    while env * _qpowers_bound(k, absq, nterm) > 1e-20 * abs(complex(f.coeffs[0]) or 1):
        nterm += 1
    if nterm > f.prec:
        raise ValueError(f"Petersson quadrature needs precision {nterm}, have {f.prec}")
    coeffs = np.array([complex(c) for c in f.coeffs[:nterm]])
    # rigorous lower bound for the norm from the first nonzero Fourier mode on 1 <= y <= 2
    n0 = next(i for i, c in enumerate(coeffs, 1) if c != 0)
    lower = abs(coeffs[n0 - 1]) ** 2 * (math.exp(-4 * math.pi * n0) - math.exp(-8 * math.pi * n0)) / (4 * math.pi * n0)
    # remainder above Y: sum |a_n|^2 int_Y^oo e^(-4 pi n y) y^(k-2) dy <= S e^(-4 pi Y) Y^(k-2) / decay
    s2 = float(np.sum(np.abs(coeffs) ** 2))
    y_top = 2.0
    while True:
        decay = 4 * math.pi - (k - 2) / y_top
        if decay > 1:
            tail = s2 * math.exp(-4 * math.pi * y_top) * y_top ** (k - 2) / decay
            if tail < 1e-3 * tol * lower:
                break
        y_top += 0.5
    m = 12
    prev = _petersson_once(coeffs, k, m, y_top)
    while True:
        m *= 2
        cur = _petersson_once(coeffs, k, m, y_top)
        diff = abs(cur - prev)
        if diff <= tol * abs(cur) * 1e-2 or m >= 768:
            break
        prev = cur
    rnd = abs(cur) * 64 * m * np.finfo(float).eps
    err = diff + tail + rnd
    if err > tol * abs(cur):
        raise ValueError(f"Petersson quadrature reached {err / abs(cur):.3g} relative, above tol {tol:.3g}")
    return Approx(mpf(cur), mpf(err))
