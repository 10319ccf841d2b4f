"""Numerical verification of a first-moment identity for twisted modular L-functions."""

from .chars import DirichletCharacter, enumerate_primitive, gauss_sum, parse_label, trivial_character
from .forms import Eigenform, QExpansion, eigenforms, petersson_norm_sq
from .geometry import GeomConfig, e_bound, e_sum, geometric_side, identity_term, j_chi, q_ratio, weyl_term
from .harness import RunConfig, VerificationReport, probe, sweep, verify_identity
from .lfun import LParams, SpectralConfig, fe_residual, lambda_direct, lambda_strip, spectral_side
from .specfun import Approx, Precision, cgamma, one_f_one, upper_incomplete_gamma, zeta_real

__version__ = "0.1.0"

__all__ = [
    "Approx",
    "Precision",
    "cgamma",
    "one_f_one",
    "upper_incomplete_gamma",
    "zeta_real",
    "DirichletCharacter",
    "parse_label",
    "trivial_character",
    "enumerate_primitive",
    "gauss_sum",
    "QExpansion",
    "Eigenform",
    "eigenforms",
    "petersson_norm_sq",
    "LParams",
    "SpectralConfig",
    "lambda_direct",
    "lambda_strip",
    "fe_residual",
    "spectral_side",
    "GeomConfig",
    "identity_term",
    "weyl_term",
    "j_chi",
    "e_sum",
    "e_bound",
    "q_ratio",
    "geometric_side",
    "RunConfig",
    "VerificationReport",
    "verify_identity",
    "sweep",
    "probe",
]
