"""Imaging functionals: time reversal, migration and coherent interferometry."""
from .cint import (CINTResult, DepthEstimate, cint_data, cint_depth_estimate,
                   cint_expected_values, cint_functional, cint_mean_profiles,
                   cint_model_weights, cint_resolution)
from .common import (ArraySpec, CINTParams, ImagingProfile, ImagingSetup,
                     depth_coupling, depth_coupling_diagonal, recording_window)
from .rtm import (RTMStability, gaussian_aperture_integral, rtm_empirical, rtm_mean,
                  rtm_range_profile, rtm_stability)
from .tr import (TREmpirical, critical_aperture, lambda_alpha, lambda_first_zero,
                 mode_weights, tr_depth_continuum, tr_depth_profile, tr_empirical,
                 tr_mean_psf, tr_resolution)

__all__ = [
    "ArraySpec", "ImagingSetup", "ImagingProfile", "CINTParams", "recording_window",
    "depth_coupling", "depth_coupling_diagonal",
    "tr_mean_psf", "tr_resolution", "critical_aperture", "tr_depth_profile",
    "tr_depth_continuum", "lambda_alpha", "lambda_first_zero", "TREmpirical",
    "tr_empirical", "mode_weights",
    "rtm_mean", "rtm_range_profile", "RTMStability", "rtm_stability",
    "gaussian_aperture_integral", "rtm_empirical",
    "cint_data", "CINTResult", "cint_functional", "cint_mean_profiles",
    "cint_resolution", "cint_model_weights", "cint_expected_values",
    "DepthEstimate", "cint_depth_estimate",
]
