import dataclasses
import math
from fractions import Fraction
import random

import mpmath
import pytest
from mpmath import mp, mpc, mpf

from twistavg.chars import enumerate_primitive, euler_phi, gauss_sum, trivial_character
from twistavg.geometry import (
    GeomConfig,
    conforming,
    e_bound,
    e_prefactor,
    e_sum,
    e_sum_by_b,
    e_sum_detail,
    e_sum_over,
    e_tail_bound,
    e_term,
    identity_closed_form,
    identity_local_product,
    identity_term,
    j_chi,
    local_orbital_factor,
    make_index,
    q_ratio,
    solve_c_ell,
    weyl_closed_form,
    weyl_local_product,
    weyl_term,
)
import twistavg.geometry as geo
from twistavg.specfun import beta, one_f_one_series

CHI4 = enumerate_primitive(4)[0]
CHI3 = enumerate_primitive(3)[0]
TRIV = trivial_character(1)


@pytest.fixture(autouse=True)
def _prec():
    with mp.workprec(160):
        yield


def cfg(k=12, N=1, chi=TRIV, r=1, n=1, s=9, psi=None):
    return GeomConfig(k, N, chi, r, n, s, psi)


def random_config(rng, N_choices=(1, 2, 3, 5, 7)):
    while True:
        D = rng.choice([1, 3, 4, 5])
        chi = rng.choice(enumerate_primitive(D)) if D > 1 else TRIV
        N = rng.choice(N_choices)
        r, n = rng.randint(1, 6), rng.randint(1, 6)
        k = rng.choice([12, 14, 16])
        s = mpc(rng.uniform(1.5, k - 1.5), rng.uniform(-3, 3))
        try:
            return cfg(k, N, chi, r, n, s)
        except ValueError:
            continue


# --- configuration ---


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(k=2)
    with pytest.raises(ValueError):
        cfg(chi=CHI4, r=2)
    with pytest.raises(ValueError):
        cfg(N=2, n=2)
    with pytest.raises(ValueError):
        cfg(chi=trivial_character(4))
    with pytest.raises(ValueError):
        cfg(N=4, chi=CHI4)
    odd_psi = enumerate_primitive(3)[0]
    with pytest.raises(ValueError):
        cfg(N=3, psi=odd_psi)


# --- identity and Weyl terms ---


def test_identity_term_single_divisor():
    c = cfg(chi=CHI4)
    k, s = 12, 9
    want = mpf(2) ** (k - 1) * (2 * mpmath.pi) ** (k - s - 1) * mpmath.gamma(s) / mpmath.factorial(k - 2)
    assert identity_term(c).contains(want, slack=mpf(10) ** -30 * want)


def test_weyl_vanishes_off_level_one():
    w = weyl_term(cfg(N=2))
    assert w.value == 0 and w.err == 0


def test_local_factor_branches():
    c = cfg(N=3, chi=CHI4, n=5, r=1)
    assert local_orbital_factor(7, "identity", c).value == 1
    assert local_orbital_factor(3, "weyl", c).value == 0
    with pytest.raises(ValueError):
        local_orbital_factor(4, "identity", c)
    with pytest.raises(ValueError):
        local_orbital_factor(3, "other", c)


def test_local_global_identity_products():
    rng = random.Random(101)
    for _ in range(10):
        c = random_config(rng)
        a = identity_local_product(c).value
        b = identity_closed_form(c).value
        assert abs(a - b) <= 1e-12 * max(abs(b), 1)


def test_local_global_weyl_products():
    rng = random.Random(202)
    for _ in range(10):
        c = random_config(rng, N_choices=(1,))
        a = weyl_local_product(c).value
        b = weyl_closed_form(c).value
        assert abs(a - b) <= 1e-12 * max(abs(b), 1)


def test_mirror_identity():
    rng = random.Random(303)
    chars = [TRIV, CHI3, CHI4] + enumerate_primitive(5) + enumerate_primitive(7)
    for _ in range(5):
        chi = rng.choice(chars)
        k = rng.choice([12, 16])
        s = mpc(rng.uniform(1.5, k - 1.5), rng.uniform(-3, 3))
        D = chi.modulus
        lhs = identity_term(cfg(k, 1, chi.conjugate(), 1, 1, k - s)).value
        tau = gauss_sum(chi).value
        lhs *= mpc([1, 1j, -1, -1j][k % 4]) / mpmath.power(D, 2 * s - k) * tau**2 / D
        rhs = weyl_term(cfg(k, 1, chi, 1, 1, s)).value
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


# --- indices, ell and J ---


def test_solve_c_ell_examples():
    # D = 1, d = 1, a = 1: every integer satisfies the congruence, so the phase is trivial
    c = cfg()
    cc, ell = solve_c_ell(1, 1, c)
    assert geo._phase(c, make_index(1, 1, c)) == 1
    # D = 4, a = d = 1: c = 0 mod 1 and ell = (c - 4) / 1; any such ell gives phase 1
    c4 = cfg(chi=CHI4)
    cc, ell = solve_c_ell(1, 1, c4)
    assert ell == cc - 4
    assert geo._phase(c4, make_index(1, 1, c4)) == 1
    with pytest.raises(ValueError, match="unsatisfiable"):
        solve_c_ell(1, 2, c4)


def test_ell_congruence_and_sign_symmetry():
    rng = random.Random(5)
    for _ in range(6):
        c = random_config(rng)
        for a in range(1, 25):
            for d in range(1, 25):
                if not conforming(a, d, c):
                    continue
                idx = make_index(a, d, c)
                mod = c.N * idx.d_prime
                assert (a * idx.c - c.D * c.n) % mod == 0
                assert idx.c % idx.d_D == 0
                assert (mod * idx.ell + c.n * c.D) % (a * idx.d_D) == 0
                # ell(-a) solves the same congruence; the phase it induces must agree
                ell_neg = make_index(-a, d, c).ell
                assert geo.RootOfUnity(Fraction(c.r * (ell_neg - idx.ell), a * idx.d_D)) == 1


def test_ell_choice_invariance():
    rng = random.Random(9)
    for _ in range(5):
        c = random_config(rng)
        for a in (1, -2, 3, 5, -7):
            for d in (1, 2, 3, 4, 8, 9):
                idx = make_index(a, d, c)
                if not idx.conforming:
                    continue
                shifted = dataclasses.replace(idx, ell=idx.ell + idx.a * idx.d_D)
                assert geo._phase(c, idx) == geo._phase(c, shifted)
                assert e_term(idx, c).value == e_term(shifted, c).value


def test_j_trivial_for_D_one():
    c = cfg()
    assert j_chi(3, 7, c).value == 1


def test_j_bounded_by_one():
    for D in (3, 4, 5):
        for chi in enumerate_primitive(D):
            c = cfg(chi=chi, r=1, n=1, s=8.5)
            for a in range(-50, 51):
                for d in range(1, 51):
                    if a and conforming(a, d, c):
                        v = j_chi(a, d, c, 64)
                        assert abs(v.value) <= 1 + 1e-15


def test_j_unit_branch_closed_form():
    # d prime to D: J = chi(-N d) conj chi(a) / phi(D), up to the per-prime split
    for D in (3, 5, 7):
        for chi in enumerate_primitive(D):
            c = cfg(N=2, chi=chi)
            for a in range(1, 30):
                for d in range(1, 30):
                    if math.gcd(d, D) != 1 or not conforming(a, d, c):
                        continue
                    want = (chi(-c.N * d) * chi(a).conjugate()).to_complex() / euler_phi(D)
                    assert abs(j_chi(a, d, c).value - want) < mpf(10) ** -30


def test_j_stabilization_cap(monkeypatch):
    geo._jp_value.cache_clear()
    geo._jp_dist.cache_clear()
    monkeypatch.setattr(geo, "_J_MAX_M_EXTRA", 0)
    c = cfg(chi=CHI4, s=8.5)
    with pytest.raises(ArithmeticError, match="stabilize"):
        j_chi(4, 4, c)
    geo._jp_value.cache_clear()
    geo._jp_dist.cache_clear()


# --- single terms ---


def test_sign_grouping_reconciles_branch():
    # term(-a) written through a: e^(-i pi s) (-1)^k a^(s-k) / (psi(-1) psi(a) e(-r ell / (a d_D))) J(-a, d) 1f1(+w)
    for chi in (TRIV, CHI4, CHI3):
        c = cfg(chi=chi, s=8.5, r=1, n=1)
        s, k = mpc(c.s), c.k
        for a in range(1, 12):
            for d in range(1, 10):
                if not conforming(a, d, c):
                    continue
                idx = make_index(a, d, c)
                neg = e_term(make_index(-a, d, c), c).value
                w = mpc(0, 2 * mpmath.pi * c.r * c.n * c.D / (c.N * a * d))
                g = math.gcd(a, c.N * idx.d_prime)
                grouped = (
                    mpmath.expjpi(-s) * (-1) ** k * mpmath.power(a, s - k)
                    / mpmath.expjpi(-2 * mpf(c.r * idx.ell) / (a * idx.d_D))
                    * j_chi(-a, d, c).value
                    * one_f_one_series(s, k, w).value
                    * g / mpmath.power(d, s)
                )
                assert abs(neg - grouped) <= mpf(10) ** -30 * abs(grouped)


def test_term_far_limit_is_beta():
    c = cfg(s=mpc(8.5, 1))
    a, d = 10**9, 1
    idx = make_index(a, d, c)
    t = e_term(idx, c).value
    s, k = mpc(c.s), c.k
    base = mpmath.power(a, s - k) / mpmath.power(d, s)
    assert abs(t / base - beta(s, k - s).value) < mpf(10) ** -6


def test_termwise_envelope():
    rng = random.Random(4)
    for _ in range(4):
        c = random_config(rng)
        sig, tau = c.sigma, c.tau
        env0 = math.gcd(c.r, c.n) * float(beta(sig, c.k - sig).value.real) * math.exp(math.pi * abs(tau))
        for a in (-9, -4, -1, 1, 2, 5, 12):
            for d in (1, 2, 3, 6, 10):
                if not conforming(a, d, c):
                    continue
                t = abs(e_term(make_index(a, d, c), c).value)
                assert t <= env0 * abs(a) ** (sig - c.k) * d ** (-sig) * (1 + 1e-12)


# --- sums ---


def test_empty_sum_gives_full_bound():
    c = cfg(chi=CHI4)
    val, tail = e_sum(c, 0, 100)
    assert val.value == 0
    assert math.isclose(tail, e_bound(c), rel_tol=1e-12)


def test_reindexing_by_b():
    for c in (
        cfg(chi=CHI4, s=8.5),
        cfg(chi=enumerate_primitive(5)[0], s=mpc(8, 1)),
        cfg(N=3, chi=CHI4, r=3, n=1, s=mpc(7, 1)),
        cfg(N=2, chi=enumerate_primitive(5)[1], r=2, n=3, s=8.5),
    ):
        bmax = 30
        pairs = [(a, d) for d in range(1, bmax + 1) for aa in range(1, bmax // d + 1) for a in (aa, -aa)]
        x = e_sum_over(c, pairs).value
        y = e_sum_by_b(c, bmax).value
        assert abs(x - y) <= 1e-12 * abs(x)


def test_far_field_matches_exact_terms():
    # the float64 Taylor route against one-by-one evaluation on a small box
    c = cfg(chi=CHI3, r=2, n=2, s=mpc(8.5, 1))
    det = e_sum_detail(c, 60, 40)
    pairs = [(a, d) for d in range(1, 41) for aa in range(1, 61) for a in (aa, -aa)]
    exact = e_sum_over(c, pairs)
    assert abs(det.value.value - exact.value) <= det.value.err - det.tail + exact.err + mpf(10) ** -20


def test_tail_honesty_under_doubling():
    c = cfg(s=9)
    v1, t1 = e_sum(c, 500, 50)
    v2, _ = e_sum(c, 1000, 100)
    assert abs(v2.value - v1.value) <= t1


def test_tail_bound_decreases():
    c = cfg(chi=CHI4)
    assert e_tail_bound(c, 2000, 200) < e_tail_bound(c, 1000, 100) < e_tail_bound(c, 0, 0)


def test_e_bound_closed_form():
    c = cfg()
    want = 2 * (4 * mpmath.pi) ** 11 * mpmath.beta(9, 3) * mpmath.zeta(3) * mpmath.zeta(9) / mpmath.factorial(10)
    assert math.isclose(e_bound(c), float(want), rel_tol=1e-14)
    assert math.isclose(e_bound(cfg(N=2)), 2**-9 * e_bound(c), rel_tol=1e-14)


def test_bound_dominates_truncated_sum():
    c = cfg(chi=CHI4)
    det = e_sum_detail(c, 3000, 300)
    assert abs(det.value.value) + det.tail <= e_bound(c)


def test_q_ratio_decays_in_level():
    vals = [q_ratio(cfg(N=N), 2000, 200) for N in (2, 4, 8, 16)]
    assert all(v >= 0 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_q_ratio_grows_with_D():
    assert q_ratio(cfg(N=3, chi=CHI4), 1000, 100) > q_ratio(cfg(N=3), 1000, 100)


def test_prefactor_trivial_character():
    c = cfg()
    P = e_prefactor(c).value
    want = (4 * mpmath.pi) ** 11 * mpmath.expjpi(mpf(9) / 2) / mpmath.factorial(10)
    assert abs(P - want) < mpf(10) ** -30 * abs(want)
