"""Orchestration: full verification runs, parameter sweeps and single-formula probes.

A verification report is the identity written out term by term: the
spectral side, the three geometric pieces, their residual and the combined
error budget.  Numbers are serialized as decimal strings tagged with the
working precision so no consumer ever sees a rounded float.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import mpmath
from mpmath import mp, mpc, mpf

from .chars import DirichletCharacter, enumerate_primitive, gauss_sum, parse_label, trivial_character
from .forms import petersson_norm_sq
from .geometry import (
    GeomConfig,
    e_bound,
    e_prefactor,
    e_sum_detail,
    identity_term,
    j_chi,
    local_orbital_factor,
    make_index,
    weyl_term,
)
from .lfun import LParams, SpectralConfig, eigenforms_cached, fe_root, lambda_strip, spectral_side
from .specfun import Approx, Precision, beta, cgamma, one_f_one, upper_incomplete_gamma, zeta_real

__all__ = [
    "RunConfig",
    "VerificationReport",
    "ComponentError",
    "verify_identity",
    "sweep",
    "SWEEP_COLUMNS",
    "probe",
    "PROBES",
    "parse_complex",
    "approx_to_json",
]


class ComponentError(RuntimeError):
    """A sub-computation failed; ``component`` names the piece of the identity."""

    def __init__(self, component: str, cause: Exception):
        super().__init__(f"{component}: {type(cause).__name__}: {cause}")
        self.component = component
        self.cause = cause


def parse_complex(text) -> complex:
    """Accept 9, "8.5+2i", "8.5+2j" or a complex."""
    if isinstance(text, (int, float, complex)):
        return complex(text)
    t = str(text).strip().replace(" ", "").replace("i", "j")
    try:
        return complex(t)
    except ValueError as exc:
        raise ValueError(f"cannot parse complex number {text!r}") from exc


def _default_chi(D: int) -> DirichletCharacter:
    if D == 1:
        return trivial_character(1)
    prim = enumerate_primitive(D)
    if not prim:
        raise ValueError(f"no primitive character modulo {D}")
    return prim[0]


def _resolve_chi(D: int, label: str | None) -> DirichletCharacter:
    if label is None or label == "":
        return _default_chi(D)
    text = label if ":" in label else f"{D}:{label}"
    chi = parse_label(text)
    if chi.modulus != D:
        raise ValueError(f"character label {label!r} has modulus {chi.modulus}, expected D = {D}")
    return chi


def _resolve_psi(N: int, label: str | None) -> DirichletCharacter:
    if label is None or label == "":
        return trivial_character(N)
    text = label if ":" in label else f"{N}:{label}"
    psi = parse_label(text)
    if psi.modulus != N:
        raise ValueError(f"nebentypus label {label!r} has modulus {psi.modulus}, expected N = {N}")
    return psi


@dataclass(frozen=True)
class RunConfig:
    mode: str = "verify"
    k: int = 12
    N: int = 1
    D: int = 1
    chi_label: str | None = None
    psi_label: str | None = None
    r: int = 1
    n: int = 1
    s: complex = 9
    cutoff_a: int = 10_000
    cutoff_d: int = 1_000
    bits: int = 128
    tol: float = 1e-6
    out: str | None = None

    def __post_init__(self):
        if self.mode not in ("verify", "sweep", "probe"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "s", parse_complex(self.s))
        if self.cutoff_a < 0 or self.cutoff_d < 0:
            raise ValueError("cutoffs must be nonnegative")
        if self.tol < 0:
            raise ValueError("tolerance must be nonnegative")
        Precision(self.bits)
        # canonical labels so that reports echo exactly what was run
        object.__setattr__(self, "chi_label", _resolve_chi(self.D, self.chi_label).serialize())
        object.__setattr__(self, "psi_label", _resolve_psi(self.N, self.psi_label).serialize())
        self.geom()
        if self.N == 1:
            self.spectral()

    @property
    def chi(self) -> DirichletCharacter:
        return parse_label(self.chi_label)

    @property
    def psi(self) -> DirichletCharacter:
        return parse_label(self.psi_label)

    @property
    def precision(self) -> Precision:
        return Precision(self.bits)

    def geom(self) -> GeomConfig:
        return GeomConfig(self.k, self.N, self.chi, self.r, self.n, self.s, self.psi)

    def spectral(self) -> SpectralConfig:
        return SpectralConfig(self.k, self.chi, self.r, self.n, self.s, self.N, self.psi)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "N": self.N,
            "D": self.D,
            "chi": self.chi_label,
            "psi": self.psi_label,
            "r": self.r,
            "n": self.n,
            "s": _complex_str(self.s),
            "cutoff_a": self.cutoff_a,
            "cutoff_d": self.cutoff_d,
            "bits": self.bits,
            "tol": repr(self.tol),
            "out": self.out,
        }


def _complex_str(z: complex) -> str:
    if z.imag == 0:
        return repr(z.real)
    return f"{z.real!r}{z.imag:+}i"


def _digits(bits: int) -> int:
    return int(bits * math.log10(2)) + 1


def _num(x, bits: int) -> str:
    return mpmath.nstr(mpf(x), _digits(bits))


def approx_to_json(a: Approx | None, bits: int) -> dict | None:
    if a is None:
        return None
    with mp.workprec(bits + 20):
        return {
            "re": _num(a.value.real, bits),
            "im": _num(a.value.imag, bits),
            "err": mpmath.nstr(a.err, 6),
            "bits": bits,
        }


def _real_to_json(x, bits: int, err=0) -> dict:
    return {"value": _num(x, bits), "err": mpmath.nstr(mpf(err), 6), "bits": bits}


@dataclass
class VerificationReport:
    config: RunConfig
    mode: str  # "full" or "geometry-only"
    spectral: Approx | None
    identity: Approx
    weyl: Approx
    e_value: Approx  # prefactored E, truncation tail included in err
    e_tail: float
    e_bound: float
    bound_ok: bool
    j_ok: bool
    max_abs_j: float
    n_terms: int
    residual: mpf | None
    budget: mpf
    tolerance: mpf  # absolute: tol * |identity|
    pass_: bool
    certified: bool
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """Every check requested by a verify run."""
        return self.pass_ and self.bound_ok and self.j_ok

    def to_dict(self, include_timings: bool = False) -> dict:
        b = self.config.bits
        out = {
            "config": self.config.as_dict(),
            "mode": self.mode,
            "spectral": approx_to_json(self.spectral, b),
            "identity": approx_to_json(self.identity, b),
            "weyl": approx_to_json(self.weyl, b),
            "e_value": approx_to_json(self.e_value, b),
            "e_tail": repr(self.e_tail),
            "e_bound": repr(self.e_bound),
            "bound_ok": self.bound_ok,
            "j_ok": self.j_ok,
            "max_abs_j": repr(self.max_abs_j),
            "n_terms": self.n_terms,
            "residual": None if self.residual is None else _real_to_json(self.residual, b),
            "budget": mpmath.nstr(self.budget, 6),
            "tolerance": mpmath.nstr(self.tolerance, 6),
            "pass": self.pass_,
            "certified": self.certified,
        }
        if include_timings:
            out["timings"] = {key: round(v, 3) for key, v in self.timings.items()}
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=False) + "\n"


def _run(component: str, fn: Callable, timings: dict):
    t0 = time.perf_counter()
    try:
        return fn()
    except Exception as exc:  # re-raised with the failing piece named
        raise ComponentError(component, exc) from exc
    finally:
        timings[component] = time.perf_counter() - t0


def verify_identity(cfg: RunConfig) -> VerificationReport:
    """Evaluate both sides of the first-moment identity for one configuration.

    At level N > 1 no spectral side is available and the report is marked
    geometry-only; its pass flag then reflects the E bound alone.
    """
    pr = cfg.precision
    g = cfg.geom()
    timings: dict[str, float] = {}
    spec = None
    if cfg.N == 1:
        sc = cfg.spectral()
        spec = _run("spectral_side", lambda: spectral_side(sc, prec=pr), timings)
    ident = _run("identity_term", lambda: identity_term(g, pr), timings)
    weyl = _run("weyl_term", lambda: weyl_term(g, pr), timings)
    det = _run("e_sum", lambda: e_sum_detail(g, cfg.cutoff_a, cfg.cutoff_d, pr), timings)
    bound = _run("e_bound", lambda: e_bound(g, pr), timings)
    with mp.workprec(pr.bits + 20):
        e_abs = abs(det.value.value) + det.tail
        bound_ok = bool(e_abs <= bound)
        j_ok = det.max_abs_j <= 1 + 1e-12
        tol_abs = mpf(cfg.tol) * abs(ident.value)
        geo = ident + weyl + det.value
        if spec is None:
            residual = None
            budget = geo.err
            passed = bound_ok
            certified = bound_ok
        else:
            residual = abs(spec.value - geo.value)
            budget = spec.err + geo.err
            passed = bool(residual <= max(budget, tol_abs))
            certified = bool(residual + budget <= tol_abs)
    return VerificationReport(
        config=cfg,
        mode="full" if spec is not None else "geometry-only",
        spectral=spec,
        identity=ident,
        weyl=weyl,
        e_value=det.value,
        e_tail=det.tail,
        e_bound=bound,
        bound_ok=bound_ok,
        j_ok=j_ok,
        max_abs_j=det.max_abs_j,
        n_terms=det.n_terms,
        residual=residual,
        budget=budget,
        tolerance=tol_abs,
        pass_=passed,
        certified=certified,
        timings=timings,
    )


# --- sweeps ----------------------------------------------------------------------------

SWEEP_COLUMNS = [
    "k",
    "N",
    "D",
    "chi",
    "r",
    "n",
    "s",
    "cutoff_a",
    "cutoff_d",
    "identity_abs",
    "weyl_abs",
    "e_abs",
    "e_tail",
    "q_ratio",
    "e_bound",
    "l_central_sum",
    "runtime_s",
    "error",
]

_ROW_KEYS = {"k", "N", "D", "chi", "psi", "r", "n", "s", "cutoff_a", "cutoff_d", "bits", "central"}
_ROW_DEFAULTS = {"k": 12, "N": 1, "D": 1, "r": 1, "n": 1, "cutoff_a": 2000, "cutoff_d": 200, "bits": 128}


def _grid_rows(grid: dict) -> list[dict]:
    unknown = set(grid) - {"defaults", "product", "rows"}
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    base = dict(_ROW_DEFAULTS)
    base.update(grid.get("defaults", {}))
    rows: list[dict] = []
    prod = grid.get("product")
    if prod:
        keys = list(prod)
        for vals in itertools.product(*(prod[key] for key in keys)):
            rows.append({**base, **dict(zip(keys, vals))})
    for row in grid.get("rows", []):
        rows.append({**base, **row})
    for row in rows:
        bad = set(row) - _ROW_KEYS
        if bad:
            raise ValueError(f"unknown row keys {sorted(bad)}")
    return rows


def _central_l_sum(k: int, chi: DirichletCharacter, pr: Precision) -> Approx:
    """sum over level-one eigenforms h of L(k/2, h, chi)."""
    s = mpf(k) / 2
    out = Approx.exact(0)
    with mp.workprec(pr.bits + 20):
        scale = mpmath.power(2 * mpmath.pi, s) / cgamma(s, pr)
        for h in eigenforms_cached(k, 1024):
            out = out + lambda_strip(LParams(h, chi, s), prec=pr) * scale
    return out


def _sweep_row(row: dict) -> dict:
    t0 = time.perf_counter()
    rec = {key: row.get(key, "") for key in ("k", "N", "D", "r", "n", "cutoff_a", "cutoff_d")}
    rec["chi"] = row.get("chi", "")
    rec["s"] = row.get("s", "")
    try:
        k = int(row["k"])
        s = row.get("s", k / 2 + 3)
        cfg = RunConfig(
            mode="sweep",
            k=k,
            N=int(row["N"]),
            D=int(row["D"]),
            chi_label=row.get("chi"),
            psi_label=row.get("psi"),
            r=int(row["r"]),
            n=int(row["n"]),
            s=s,
            cutoff_a=int(row["cutoff_a"]),
            cutoff_d=int(row["cutoff_d"]),
            bits=int(row["bits"]),
        )
        rec["chi"] = cfg.chi_label
        rec["s"] = _complex_str(cfg.s)
        g = cfg.geom()
        pr = cfg.precision
        ident = identity_term(g, pr)
        weyl = weyl_term(g, pr)
        det = e_sum_detail(g, cfg.cutoff_a, cfg.cutoff_d, pr)
        e_abs = abs(det.value.value)
        rec["identity_abs"] = mpmath.nstr(abs(ident.value), 15)
        rec["weyl_abs"] = mpmath.nstr(abs(weyl.value), 15)
        rec["e_abs"] = mpmath.nstr(e_abs, 15)
        rec["e_tail"] = f"{det.tail:.6e}"
        rec["q_ratio"] = mpmath.nstr((e_abs + det.tail) / abs(ident.value), 15)
        rec["e_bound"] = f"{e_bound(g, pr):.15e}"
        central = row.get("central", cfg.N == 1)
        if central and cfg.N == 1:
            lsum = _central_l_sum(k, cfg.chi, pr)
            real = abs(lsum.value.imag) <= lsum.err
            rec["l_central_sum"] = mpmath.nstr(lsum.value.real if real else lsum.value, 15)
        rec["error"] = ""
    except Exception as exc:  # recorded per row; the sweep goes on
        rec["error"] = f"{type(exc).__name__}: {exc}"
    rec["runtime_s"] = f"{time.perf_counter() - t0:.3f}"
    return rec


def sweep(grid: dict) -> str:
    """Run every row of ``grid`` and return the CSV text (header always present).

    ``grid`` holds optional ``defaults``, a ``product`` of value lists and/or
    explicit ``rows``.
    """
    rows = _grid_rows(grid)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        rec = _sweep_row(row)
        writer.writerow({key: rec.get(key, "") for key in SWEEP_COLUMNS})
    return buf.getvalue()


# --- probes -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Probe:
    params: tuple[str, ...]
    tag: str
    fn: Callable[[dict], Approx]


def _geom_from(args: dict) -> GeomConfig:
    k = int(args.get("k", 12))
    N = int(args.get("N", 1))
    D = int(args.get("D", 1))
    s = parse_complex(args.get("s", k / 2 + 3))
    return GeomConfig(
        k, N, _resolve_chi(D, args.get("chi")), int(args.get("r", 1)), int(args.get("n", 1)), s, _resolve_psi(N, args.get("psi"))
    )


def _bits(args: dict) -> Precision:
    return Precision(int(args.get("bits", 128)))


def _p_gauss(a):
    return gauss_sum(_resolve_chi(int(a.get("D", 4)), a.get("chi")), _bits(a))


def _p_one_f_one(a):
    return one_f_one(parse_complex(a.get("s", 9)), int(a.get("k", 12)), parse_complex(a.get("w", 0)), _bits(a))


def _p_beta(a):
    return beta(parse_complex(a.get("x", 9)), parse_complex(a.get("y", 3)), _bits(a))


def _p_gamma(a):
    return cgamma(parse_complex(a.get("s", 9)), _bits(a))


def _p_gammainc(a):
    return upper_incomplete_gamma(parse_complex(a.get("s", 9)), mpf(str(a.get("x", 1))), _bits(a))


def _p_zeta(a):
    return zeta_real(mpf(str(a.get("sigma", 2))), _bits(a))


def _p_j(a):
    c = _geom_from(a)
    return j_chi(int(a.get("a", 1)), int(a.get("d", 1)), c, _bits(a))


def _p_ell(a):
    c = _geom_from(a)
    idx = make_index(int(a.get("a", 1)), int(a.get("d", 1)), c)
    if not idx.conforming:
        raise ValueError(f"(a, d) = ({idx.a}, {idx.d}) is not a conforming index")
    return Approx.exact(idx.ell)


def _p_local(a):
    c = _geom_from(a)
    return local_orbital_factor(int(a.get("p", 2)), str(a.get("kind", "identity")), c, _bits(a))


def _p_fe_root(a):
    return fe_root(_resolve_chi(int(a.get("D", 4)), a.get("chi")), int(a.get("k", 12)), _bits(a))


def _p_lambda(a):
    k = int(a.get("k", 12))
    forms = eigenforms_cached(k, 1024)
    h = forms[int(a.get("index", 0))]
    chi = _resolve_chi(int(a.get("D", 1)), a.get("chi"))
    return lambda_strip(LParams(h, chi, parse_complex(a.get("s", k / 2))), prec=_bits(a))


def _p_petersson(a):
    k = int(a.get("k", 12))
    h = eigenforms_cached(k, 1024)[int(a.get("index", 0))]
    return petersson_norm_sq(h.form)


PROBES: dict[str, Probe] = {
    "gauss_sum": Probe(("D", "chi"), "Gauss sum tau(chi) = sum chi(m) e(m/D)", _p_gauss),
    "one_f_one": Probe(("s", "k", "w"), "regularized Kummer function B(s,k-s) 1F1(s;k;w), Euler integral", _p_one_f_one),
    "beta": Probe(("x", "y"), "Euler beta function", _p_beta),
    "gamma": Probe(("s",), "complex gamma function, Stirling with reflection", _p_gamma),
    "gammainc": Probe(("s", "x"), "upper incomplete gamma Gamma(s, x)", _p_gammainc),
    "zeta": Probe(("sigma",), "Riemann zeta at real sigma > 1", _p_zeta),
    "j_chi": Probe(("a", "d"), "local character average J_chi(a, d) over primes dividing D", _p_j),
    "ell": Probe(("a", "d"), "integer ell of a conforming E-term index", _p_ell),
    "identity_term": Probe(("k", "N", "D"), "identity contribution of the geometric side", lambda a: identity_term(_geom_from(a), _bits(a))),
    "weyl_term": Probe(("k", "N", "D"), "Weyl-element contribution, zero unless N = 1", lambda a: weyl_term(_geom_from(a), _bits(a))),
    "e_prefactor": Probe(("k", "N", "D"), "constant in front of the E series", lambda a: e_prefactor(_geom_from(a), _bits(a))),
    "e_bound": Probe(("k", "N", "D"), "absolute-convergence envelope for |E|", lambda a: Approx.exact(e_bound(_geom_from(a), _bits(a)))),
    "local_factor": Probe(("p", "kind"), "local orbital factor at p (kind = identity or weyl)", _p_local),
    "fe_root": Probe(("D", "k"), "root number i^k tau(chi)^2 / D", _p_fe_root),
    "lambda": Probe(("k", "D", "s"), "completed twisted L-function Lambda(s, h, chi)", _p_lambda),
    "petersson": Probe(("k",), "Petersson norm ||h||^2 of a level-one eigenform", _p_petersson),
}


def _parse_probe_args(name: str, tokens: list[str]) -> dict:
    params = PROBES[name].params
    out: dict = {}
    pos: list[str] = []
    for tok in tokens:
        if "=" in tok:
            key, _, val = tok.partition("=")
            out[key.strip()] = val.strip()
        else:
            pos.extend(x for x in tok.strip("()[] ").split(",") if x.strip())
    if len(pos) > len(params):
        raise ValueError(f"probe {name} takes at most {len(params)} positional arguments {params}")
    for key, val in zip(params, pos):
        out.setdefault(key, val.strip())
    return out


def probe(name: str, tokens: list[str] | None = None) -> tuple[Approx, str]:
    """Evaluate one named sub-formula; returns the value and its description tag."""
    if name not in PROBES:
        raise KeyError(f"unknown probe {name!r}; available: {', '.join(sorted(PROBES))}")
    args = _parse_probe_args(name, list(tokens or []))
    pr = _bits(args)
    with mp.workprec(pr.bits + 20):
        return PROBES[name].fn(args), PROBES[name].tag
