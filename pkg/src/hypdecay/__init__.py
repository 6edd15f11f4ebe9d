"""Characteristic-root classification and L^p-L^q decay verification for
constant-coefficient hyperbolic operators P(D_t, D_x)."""

from .classify import Classification, DecayPrediction, StabilityVerdict, classify_symbol, predict_decay
from .decay import DataProfile, DecayFit, NormSeries, fit_decay, l2_exact, l2_operator_norm, linf_upper, norm_series
from .models import WaveFamilyParams, grad_symbol, grad_system, wave_family_case, wave_family_symbol
from .multiplier import expm, propagator_at, propagator_batch, vandermonde_at
from .roots import discriminant_at, multiplicity_clusters, roots_at, track_branches
from .symbolcore import FrequencyGrid, OperatorSymbol, SparsePoly, tau_poly_at

__version__ = "0.1.0"

__all__ = [
    "Classification", "DataProfile", "DecayFit", "DecayPrediction", "FrequencyGrid", "NormSeries",
    "OperatorSymbol", "SparsePoly", "StabilityVerdict", "WaveFamilyParams", "classify_symbol",
    "discriminant_at", "expm", "fit_decay", "grad_symbol", "grad_system", "l2_exact", "l2_operator_norm",
    "linf_upper", "multiplicity_clusters", "norm_series", "predict_decay", "propagator_at",
    "propagator_batch", "roots_at", "tau_poly_at", "track_branches", "vandermonde_at",
    "wave_family_case", "wave_family_symbol",
]
