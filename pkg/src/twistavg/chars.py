"""Dirichlet characters with exact root-of-unity values.

A character mod D is stored as one exponent per generator of the local
unit groups (Z/p^e)^*, taken in increasing order of p.  Values are
:class:`RootOfUnity` objects holding the exponent t of e^{2 pi i t} as a
Fraction, so products and sums of exponents never round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import mpmath
from mpmath import mp, mpc

from .specfun import Approx, Precision, _prec

__all__ = [
    "Factorization",
    "IntInfo",
    "RootOfUnity",
    "DirichletCharacter",
    "int_utils",
    "factorize",
    "divisors",
    "euler_phi",
    "valuation",
    "unit_group",
    "char_from_label",
    "parse_label",
    "trivial_character",
    "enumerate_characters",
    "enumerate_primitive",
    "char_eval",
    "conductor",
    "is_primitive",
    "gauss_sum",
    "local_gauss_sum",
    "local_char",
]


# --- integers ----------------------------------------------------------------


@dataclass(frozen=True)
class Factorization:
    value: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prod_ = 1
        last = 1
        for p, e in self.factors:
            if p <= last or e < 1:
                raise ValueError(f"malformed factorization {self.factors}")
            prod_ *= p**e
            last = p
        if prod_ != self.value:
            raise ValueError(f"factors {self.factors} do not multiply to {self.value}")

    @property
    def primes(self) -> list[int]:
        return [p for p, _ in self.factors]

    def exponent(self, p: int) -> int:
        return dict(self.factors).get(p, 0)

    def split(self, primes) -> tuple[int, int]:
        """(part supported on ``primes``, complementary part)."""
        primes = set(primes)
        inside = 1
        for p, e in self.factors:
            if p in primes:
                inside *= p**e
        return inside, self.value // inside


@lru_cache(maxsize=4096)
def factorize(n: int) -> Factorization:
    if n < 1:
        raise ValueError(f"factorize needs n >= 1, got {n}")
    m = n
    out = []
    p = 2
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if m > 1:
        out.append((m, 1))
    return Factorization(n, tuple(out))


def divisors(n: int) -> list[int]:
    divs = [1]
    for p, e in factorize(n).factors:
        divs = [d * p**j for d in divs for j in range(e + 1)]
    return sorted(divs)


def euler_phi(n: int) -> int:
    phi = n
    for p, _ in factorize(n).factors:
        phi = phi // p * (p - 1)
    return phi


def valuation(p: int, n: int) -> int:
    """ord_p(n) for nonzero integer n."""
    if n == 0:
        raise ValueError("valuation of 0 is infinite")
    n = abs(n)
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


@dataclass(frozen=True)
class IntInfo:
    factorization: Factorization
    divisors: list[int]
    phi: int


def int_utils(n: int) -> IntInfo:
    return IntInfo(factorize(n), divisors(n), euler_phi(n))


def _prime_power(q: int) -> tuple[int, int]:
    fac = factorize(q)
    if len(fac.factors) != 1:
        raise ValueError(f"{q} is not a prime power")
    return fac.factors[0]


def _mult_order(g: int, q: int) -> int:
    x, o = g % q, 1
    while x != 1:
        x = x * g % q
        o += 1
    return o


@lru_cache(maxsize=None)
def unit_group(q: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Generators of (Z/q)^* and their orders, for a prime power q."""
    p, e = _prime_power(q)
    if p == 2:
        if e == 1:
            return (), ()
        if e == 2:
            return (3,), (2,)
        return (q - 1, 5), (2, 2 ** (e - 2))
    phi = q // p * (p - 1)
    g = 2
    while _mult_order(g, q) != phi:
        g += 1
        while math.gcd(g, p) != 1:
            g += 1
    return (g,), (phi,)


@lru_cache(maxsize=None)
def _dlog_table(q: int) -> dict[int, tuple[int, ...]]:
    """residue -> exponent vector w.r.t. unit_group(q)."""
    gens, orders = unit_group(q)
    table = {}
    for exps in product(*(range(o) for o in orders)):
        x = 1
        for g, j in zip(gens, exps):
            x = x * pow(g, j, q) % q
        table[x] = exps
    if q == 2:
        table[1] = ()
    return table


# --- roots of unity ------------------------------------------------------------


@dataclass(frozen=True, order=True)
class RootOfUnity:
    """e^{2 pi i t} with t an exact rational in [0, 1)."""

    t: Fraction

    def __init__(self, t=0):
        t = Fraction(t)
        object.__setattr__(self, "t", t - math.floor(t))

    @property
    def numerator(self) -> int:
        return self.t.numerator

    @property
    def denominator(self) -> int:
        return self.t.denominator

    def __mul__(self, other):
        if isinstance(other, RootOfUnity):
            return RootOfUnity(self.t + other.t)
        if other == 0:
            return 0
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other: "RootOfUnity") -> "RootOfUnity":
        return RootOfUnity(self.t - other.t)

    def __pow__(self, m: int) -> "RootOfUnity":
        return RootOfUnity(self.t * m)

    def conjugate(self) -> "RootOfUnity":
        return RootOfUnity(-self.t)

    @property
    def order(self) -> int:
        return self.t.denominator

    def to_complex(self, prec: Precision | int | None = None) -> mpc:
        """Exact on the eight axis/diagonal points, else e^{2 pi i t} at prec."""
        t = self.t
        if t.denominator <= 2 or t.denominator == 4:
            return mpc(*[(1, 0), (0, 1), (-1, 0), (0, -1)][int(t * 4)])
        with mp.workprec(_prec(prec).bits + 10):
            return mpmath.expjpi(2 * mpmath.mpf(t.numerator) / t.denominator)

    def __complex__(self):
        return complex(self.to_complex(53))

    def __eq__(self, other):
        if isinstance(other, RootOfUnity):
            return self.t == other.t
        if other == 1:
            return self.t == 0
        if other == -1:
            return self.t == Fraction(1, 2)
        return False

    def __hash__(self):
        return hash(self.t)

    def __repr__(self):
        return f"e(2πi·{self.t})"


def _value(x) -> mpc:
    """complex realization of a character value (RootOfUnity or 0)."""
    if isinstance(x, RootOfUnity):
        return x.to_complex()
    return mpc(0)


# --- characters ----------------------------------------------------------------


@dataclass(frozen=True)
class DirichletCharacter:
    """A character mod ``modulus`` given by exponents on the CRT generators.

    ``label[j]`` is the exponent for the j-th generator; the generator with
    multiplicative order m is sent to e^{2 pi i label[j]/m}.
    """

    modulus: int
    label: tuple[int, ...]
    _layout: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError(f"modulus must be positive, got {self.modulus}")
        layout = []
        pos = 0
        for p, e in factorize(self.modulus).factors:
            q = p**e
            gens, orders = unit_group(q)
            layout.append((p, e, q, gens, orders, pos))
            pos += len(gens)
        label = tuple(int(x) for x in self.label)
        if len(label) != pos:
            raise ValueError(
                f"label for modulus {self.modulus} needs {pos} entries, got {len(label)}"
            )
        for p, e, q, gens, orders, start in layout:
            for j, o in enumerate(orders):
                if not 0 <= label[start + j] < o:
                    raise ValueError(
                        f"label entry {label[start + j]} out of range [0, {o}) at p={p}"
                    )
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "_layout", tuple(layout))

    # local data

    @property
    def primes(self) -> list[int]:
        return [row[0] for row in self._layout]

    @property
    def local_components(self) -> dict[int, "DirichletCharacter"]:
        out = {}
        for p, e, q, gens, orders, start in self._layout:
            out[p] = DirichletCharacter(q, self.label[start : start + len(gens)])
        return out

    def local_exponent(self, p: int) -> int:
        return factorize(self.modulus).exponent(p)

    def _unit_exponent(self, m: int) -> Fraction:
        t = Fraction(0)
        for p, e, q, gens, orders, start in self._layout:
            exps = _dlog_table(q)[m % q]
            for j, o in enumerate(orders):
                t += Fraction(self.label[start + j] * exps[j], o)
        return t

    def __call__(self, m: int):
        if math.gcd(m, self.modulus) != 1:
            return 0
        return RootOfUnity(self._unit_exponent(m))

    def value(self, m: int, prec: Precision | int | None = None) -> mpc:
        v = self(m)
        return v.to_complex(prec) if v != 0 else mpc(0)

    # global invariants

    @property
    def order(self) -> int:
        o = 1
        for p, e, q, gens, orders, start in self._layout:
            for j, m in enumerate(orders):
                o = math.lcm(o, m // math.gcd(m, self.label[start + j]))
        return o

    @property
    def parity(self) -> int:
        if self.modulus <= 2:
            return 1
        return 1 if self(-1) == 1 else -1

    def conjugate(self) -> "DirichletCharacter":
        new = []
        for p, e, q, gens, orders, start in self._layout:
            for j, o in enumerate(orders):
                new.append((-self.label[start + j]) % o)
        return DirichletCharacter(self.modulus, tuple(new))

    @property
    def is_trivial(self) -> bool:
        return all(x == 0 for x in self.label)

    @property
    def is_real(self) -> bool:
        return self.order <= 2

    def serialize(self) -> str:
        return f"{self.modulus}:" + ",".join(str(x) for x in self.label)

    def __str__(self):
        return self.serialize()


def char_from_label(D: int, label) -> DirichletCharacter:
    return DirichletCharacter(D, tuple(label))


def parse_label(text: str) -> DirichletCharacter:
    """Parse "D:e1,e2,..." (an empty exponent list is allowed for D in {1, 2})."""
    try:
        mod, _, rest = text.partition(":")
        D = int(mod)
        label = tuple(int(x) for x in rest.split(",") if x.strip())
    except ValueError as exc:
        raise ValueError(f"bad character label {text!r}") from exc
    return DirichletCharacter(D, label)


def trivial_character(D: int = 1) -> DirichletCharacter:
    n = sum(len(unit_group(p**e)[0]) for p, e in factorize(D).factors)
    return DirichletCharacter(D, (0,) * n)


def enumerate_characters(D: int) -> list[DirichletCharacter]:
    ranges = []
    for p, e in factorize(D).factors:
        ranges.extend(range(o) for o in unit_group(p**e)[1])
    return [DirichletCharacter(D, lab) for lab in product(*ranges)]


def _local_conductor(chi: DirichletCharacter) -> int:
    """Conductor of a character of prime-power modulus."""
    q = chi.modulus
    if q == 1:
        return 1
    p, e = _prime_power(q)
    for f in range(0, e + 1):
        pf = p**f
        # trivial on units that are 1 mod p^f
        if all(chi(u) == 1 for u in range(1, q, pf) if u % p):
            return pf
    return q


def conductor(chi: DirichletCharacter) -> int:
    out = 1
    for comp in chi.local_components.values():
        out *= _local_conductor(comp)
    return out


def is_primitive(chi: DirichletCharacter) -> bool:
    return conductor(chi) == chi.modulus


def enumerate_primitive(D: int) -> list[DirichletCharacter]:
    return [c for c in enumerate_characters(D) if is_primitive(c)]


def char_eval(chi: DirichletCharacter, m: int):
    """chi(m) as a RootOfUnity, or the integer 0 when gcd(m, D) > 1."""
    return chi(m)


# --- Gauss sums ----------------------------------------------------------------


def _exp_sum(chi: DirichletCharacter, shift: int, prec: Precision) -> Approx:
    """sum over units m mod D of chi(m) e^{2 pi i shift m / D}, exponents combined exactly."""
    D = chi.modulus
    wp = prec.bits + 20 + D.bit_length()
    with mp.workprec(wp):
        terms = []
        for m in range(D):
            if math.gcd(m, D) != 1:
                continue
            t = chi._unit_exponent(m) + Fraction(shift * m, D)
            terms.append(RootOfUnity(t).to_complex(wp))
        val = mpmath.fsum(terms) if terms else mpc(0)
        return Approx(val, len(terms) * mpmath.mpf(2) ** (2 - wp))


def gauss_sum(chi: DirichletCharacter, prec: Precision | int | None = None) -> Approx:
    """tau(chi) = sum_{m in (Z/D)^*} chi(m) e^{2 pi i m/D}; tau = 1 for D = 1."""
    prec = _prec(prec)
    if chi.modulus == 1:
        return Approx.exact(1)
    return _exp_sum(chi, 1, prec)


def twisted_exp_sum(chi: DirichletCharacter, n: int, prec: Precision | int | None = None) -> Approx:
    """sum over all m mod D of chi(m) e^{2 pi i n m / D}."""
    prec = _prec(prec)
    if chi.modulus == 1:
        return Approx.exact(1)
    return _exp_sum(chi, n, prec)


def local_gauss_sum(chi: DirichletCharacter, p: int, prec: Precision | int | None = None) -> Approx:
    """tau(chi)_p = chi_p(D / p^{D_p}) tau(chi_p)."""
    prec = _prec(prec)
    comps = chi.local_components
    if p not in comps:
        raise ValueError(f"prime {p} does not divide the modulus {chi.modulus}")
    comp = comps[p]
    rest = chi.modulus // comp.modulus
    tau_p = gauss_sum(comp, prec)
    return tau_p * comp.value(rest, prec.bits + 10)


def local_char(chi: DirichletCharacter, p: int, x) -> RootOfUnity:
    """The local component chi_p on Q_p^*, evaluated at a nonzero rational x.

    On p-adic units chi_p(u) = chi_(p)(u mod p^{D_p}) for p | D (and 1 for
    p not dividing D).  The uniformizer is sent to the value forcing the
    product formula on Q^*: chi_p(p) = prod_{q | D, q != p} conj(chi_(q)(p)).
    """
    x = Fraction(x)
    if x == 0:
        raise ValueError("local character at 0")
    num, den = x.numerator, x.denominator
    v = 0
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    comps = chi.local_components
    t = Fraction(0)
    if p in comps:
        comp = comps[p]
        q = comp.modulus
        u = num * pow(den, -1, q) % q
        t += comp._unit_exponent(u)
        for ell, other in comps.items():
            if ell != p:
                t -= other._unit_exponent(p % other.modulus) * v
    elif v:
        t -= chi._unit_exponent(p % chi.modulus) * v if chi.modulus > 1 else 0
    return RootOfUnity(t)
