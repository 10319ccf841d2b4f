"""Acceptance criteria AC1-AC12.

Each test records one PASS/FAIL line, printed in the terminal summary (see
conftest.py), and then asserts.  Identity runs are judged strictly: the
residual plus the full error budget (truncation tail included) must lie
below the tolerance times |identity term|.
"""

import contextlib
import math
import random

import mpmath
import pytest
from mpmath import mp, mpc, mpf

from twistavg.chars import enumerate_primitive, gauss_sum, trivial_character
from twistavg.geometry import (
    GeomConfig,
    e_prefactor,
    identity_closed_form,
    identity_local_product,
    identity_term,
    q_ratio,
    weyl_closed_form,
    weyl_local_product,
    weyl_term,
)
from twistavg.harness import RunConfig, verify_identity
from twistavg.lfun import LParams, eigenforms_cached, fe_residual, lambda_direct, spectral_side, SpectralConfig
from twistavg.specfun import beta, one_f_one_quad, one_f_one_series

pytestmark = pytest.mark.slow

CHI4 = enumerate_primitive(4)[0]
CHI5_QUARTIC = enumerate_primitive(5)[0]
assert CHI5_QUARTIC.order == 4

AC1_CFG = dict(k=12, D=4, r=1, n=1, s=9, cutoff_a=10_000, cutoff_d=1_000, bits=128, tol=1e-6)
AC2_CFG = dict(AC1_CFG, s=6)
AC3_CFG = dict(k=16, D=5, chi_label=CHI5_QUARTIC.serialize(), r=2, n=3, s="8.5+2i", cutoff_a=10_000, cutoff_d=1_000, tol=1e-5)
# the D = 3 envelope decays like a^(sigma-k) = a^-3; a <= 2e5 brings the tail under 1e-5 |identity|
AC4_CFG = dict(k=12, D=3, r=2, n=2, s=9, cutoff_a=200_000, cutoff_d=100, tol=1e-5)

_REPORTS: dict[str, object] = {}


def _report(name, cfg):
    if name not in _REPORTS:
        _REPORTS[name] = verify_identity(RunConfig(**cfg))
    return _REPORTS[name]


@contextlib.contextmanager
def criterion(record, name):
    """Record FAIL with the exception text if the body raises."""
    try:
        yield
    except AssertionError:
        raise
    except Exception as exc:
        record(name, False, f"{type(exc).__name__}: {exc}")
        raise


def _identity_check(record, name, cfg):
    with criterion(record, name):
        rep = _report(name, cfg)
        rel = rep.residual / abs(rep.identity.value)
        bud = rep.budget / abs(rep.identity.value)
        ok = rep.certified and rep.j_ok
        record(name, ok, f"residual {mpmath.nstr(rel, 3)} rel, budget {mpmath.nstr(bud, 3)} rel, tol {cfg['tol']}")
    assert ok


def test_ac1_real_s(record):
    _identity_check(record, "AC1", AC1_CFG)


def test_ac2_central_point(record):
    _identity_check(record, "AC2", AC2_CFG)


def test_ac3_complex_s(record):
    _identity_check(record, "AC3", AC3_CFG)


def test_ac4_gcd_structure(record):
    g = RunConfig(**AC4_CFG).geom()
    # two divisors of gcd(r, n) = 2 contribute to the identity and Weyl sums
    assert len([d for d in (1, 2) if math.gcd(g.r, g.n) % d == 0]) == 2
    _identity_check(record, "AC4", AC4_CFG)


def test_ac5_null_weight(record):
    with criterion(record, "AC5"):
        scale = abs(_report("AC1", AC1_CFG).identity.value)
        details, ok = [], True
        for s in (5, 7):
            rep = verify_identity(RunConfig(k=10, D=4, s=s, cutoff_a=10_000, cutoff_d=1_000))
            rhs = rep.identity + rep.weyl + rep.e_value
            bound = abs(rhs.value) + rhs.err
            ok &= rep.spectral.value == 0 and rep.spectral.err == 0 and bound <= mpf("1e-6") * scale
            details.append(f"s={s}: |RHS|+err {mpmath.nstr(bound, 3)}")
        record("AC5", ok, "; ".join(details) + f" vs {mpmath.nstr(mpf('1e-6') * scale, 3)}")
    assert ok


def test_ac6_functional_equation(record):
    with criterion(record, "AC6"):
        with mp.workprec(160):
            h = eigenforms_cached(12, 4000)[0]
            worst = mpf(0)
            for s in (6, mpf("7.3"), 9):
                worst = max(worst, fe_residual(LParams(h, CHI4, s)))
        ok = worst <= 1e-8
        record("AC6", ok, f"max fe_residual {mpmath.nstr(worst, 3)}")
    assert ok


def test_ac7_error_bound(record):
    with criterion(record, "AC7"):
        parts, ok = [], True
        for name, cfg in (("AC1", AC1_CFG), ("AC2", AC2_CFG), ("AC3", AC3_CFG), ("AC4", AC4_CFG)):
            rep = _report(name, cfg)
            lhs = float(abs(rep.e_value.value)) + rep.e_tail
            ok &= rep.bound_ok and lhs <= rep.e_bound
            parts.append(f"{name} {lhs / rep.e_bound:.3g}")
        record("AC7", ok, "(|E|+tail)/bound: " + ", ".join(parts))
    assert ok


def test_ac8_local_global(record):
    with criterion(record, "AC8"):
        rng = random.Random(2024)
        worst = 0.0
        done = 0
        with mp.workprec(160):
            while done < 10:
                D = rng.choice([1, 3, 4, 5])
                chi = rng.choice(enumerate_primitive(D)) if D > 1 else trivial_character(1)
                N = rng.choice([1, 1, 2, 3, 7])
                r, n = rng.randint(1, 6), rng.randint(1, 6)
                k = rng.choice([12, 16])
                s = mpc(rng.uniform(1.5, k - 1.5), rng.uniform(-4, 4))
                try:
                    c = GeomConfig(k, N, chi, r, n, s)
                except ValueError:
                    continue
                a, b = identity_local_product(c).value, identity_closed_form(c).value
                worst = max(worst, float(abs(a - b) / max(abs(b), 1)))
                c1 = GeomConfig(k, 1, chi, r, n, s)
                a, b = weyl_local_product(c1).value, weyl_closed_form(c1).value
                worst = max(worst, float(abs(a - b) / max(abs(b), 1)))
                done += 1
        ok = worst <= 1e-12
        record("AC8", ok, f"10 configs, worst relative gap {worst:.3g}")
    assert ok


def test_ac9_mirror(record):
    with criterion(record, "AC9"):
        rng = random.Random(99)
        chars = [trivial_character(1)] + [c for D in (3, 4, 5, 7, 8) for c in enumerate_primitive(D)]
        worst = 0.0
        with mp.workprec(160):
            for _ in range(5):
                chi = rng.choice(chars)
                k = 12
                s = mpc(rng.uniform(1.2, k - 1.2), rng.uniform(-5, 5))
                D = chi.modulus
                lhs = identity_term(GeomConfig(k, 1, chi.conjugate(), 1, 1, k - s)).value
                lhs *= mpc([1, 1j, -1, -1j][k % 4]) / mpmath.power(D, 2 * s - k) * gauss_sum(chi).value ** 2 / D
                rhs = weyl_term(GeomConfig(k, 1, chi, 1, 1, s)).value
                worst = max(worst, float(abs(lhs - rhs) / abs(rhs)))
        ok = worst <= 1e-10
        record("AC9", ok, f"5 random (s, chi), worst relative gap {worst:.3g}")
    assert ok


def test_ac10_special_functions(record):
    with criterion(record, "AC10"):
        worst = 0.0
        ws = [mpc(0), mpc(1), mpc(-7.5), mpc(0, 20), mpc(0, -35), mpc(0, 50), mpc(30, 40), mpc(-25, -25)]
        with mp.workprec(160):
            for k in (12, 16, 20):
                for s in (2, k // 2, k - 2):
                    for w in ws:
                        a = one_f_one_series(s, k, w, 128).value
                        b = one_f_one_quad(s, k, w, 128).value
                        worst = max(worst, float(abs(a - b) / abs(b)))
            rng = random.Random(10)
            violations = 0
            for _ in range(300):
                k = rng.choice([12, 16, 20])
                sigma = rng.uniform(1, k - 1)
                s = mpc(sigma, rng.uniform(-10, 10))
                val = one_f_one_series(s, k, mpc(0, 2 * mpmath.pi * rng.uniform(-50, 50)), 96)
                if abs(val.value) - val.err > beta(sigma, k - sigma).value.real:
                    violations += 1
        ok = worst <= 1e-10 and violations == 0
        record("AC10", ok, f"72-point grid worst gap {worst:.3g}; bound violations {violations}/300")
    assert ok


def test_ac11_decay_in_level(record):
    with criterion(record, "AC11"):
        q = [q_ratio(GeomConfig(12, N, trivial_character(1), 1, 1, 9), 2000, 200) for N in (2, 4, 8, 16)]
        ok = all(b < a for a, b in zip(q, q[1:]))
        record("AC11", ok, "q_ratio " + ", ".join(f"{x:.4g}" for x in q))
    assert ok


def test_ac12_untwisted_regression(record):
    with criterion(record, "AC12"):
        cfg = dict(AC1_CFG, D=1)
        rep = verify_identity(RunConfig(**cfg))
        triv = trivial_character(1)
        g = gauss_sum(triv)
        collapse = g.value == 1 and g.err == 0
        # prefactor with tau = 1 and D = 1 is (4 pi)^(k-1) e^(i pi s / 2) / (k-2)!
        with mp.workprec(160):
            P = e_prefactor(GeomConfig(12, 1, triv, 1, 1, 9)).value
            want = (4 * mpmath.pi) ** 11 * mpmath.expjpi(mpf(9) / 2) / mpmath.factorial(10)
            pref_ok = abs(P - want) <= mpf(10) ** -30 * abs(want)
            # classical route: Lambda(9, Delta) / ||Delta||^2 from the Dirichlet series
            h = eigenforms_cached(12, 60_000)[0]
            classical = lambda_direct(LParams(h, triv, 9), tol=1e-10) / h.norm_sq()
            twisted = spectral_side(SpectralConfig(12, triv, 1, 1, 9))
            spec_ok = abs(classical.value - twisted.value) <= 1e-10 * abs(twisted.value)
        ok = rep.certified and collapse and pref_ok and spec_ok
        record(
            "AC12",
            ok,
            f"D=1 residual {mpmath.nstr(rep.residual / abs(rep.identity.value), 3)} rel; tau = 1 exactly: {collapse}; "
            f"classical vs twisted spectral agree: {spec_ok}",
        )
    assert ok
