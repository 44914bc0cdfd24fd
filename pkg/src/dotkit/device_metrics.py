"""Scalar device figures of merit with propagated uncertainties.

Calibrated photon extraction efficiency, Purcell factor from lifetime
ratios, cavity-mode quality factor from a Lorentzian fit, thermally
activated quenching energies from an Arrhenius fit, and the expected yield
of randomly placed cavities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fitting import FitResult, model_fit

BOLTZMANN_MEV_PER_K = 0.0861733


@dataclass
class TransmissionChain:
    """Ordered optical elements as (name, transmission, uncertainty)."""

    elements: Sequence[tuple[str, float, float]]

    def __post_init__(self):
        if not self.elements:
            raise ValueError("chain must contain at least one element")
        for name, t, dt in self.elements:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"{name}: transmission must lie in (0, 1]")
            if dt < 0:
                raise ValueError(f"{name}: uncertainty must be nonnegative")

    @property
    def transmissions(self) -> np.ndarray:
        return np.array([t for _, t, _ in self.elements])

    @property
    def uncertainties(self) -> np.ndarray:
        return np.array([dt for _, _, dt in self.elements])


def chain_efficiency(chain: TransmissionChain) -> tuple[float, float]:
    """Product of element transmissions and its quadrature error.

    Returns ``(efficiency, sigma)`` with
    ``sigma = efficiency * sqrt(sum((dT_i/T_i)^2))``. Permutation invariant.
    """
    t = chain.transmissions
    dt = chain.uncertainties
    eta = float(np.prod(t))
    rel = float(np.sqrt(np.sum((dt / t) ** 2)))
    return eta, eta * rel


@dataclass
class EfficiencyResult:
    efficiency: float
    sigma: float
    count_rate_cps: float
    count_rate_sigma_cps: float
    repetition_rate_hz: float
    setup_efficiency: float
    setup_sigma: float
    g2_correction: float = 1.0


def extraction_efficiency(count_rate_cps: float, repetition_rate_hz: float,
                          setup: tuple[float, float],
                          g2_zero: Optional[float] = None,
                          count_rate_sigma_cps: float = 1000.0
                          ) -> EfficiencyResult:
    """Photon extraction efficiency into the first lens.

    ``eta = n / (f * eta_setup)``, optionally multiplied by
    ``sqrt(1 - g2(0))`` to discount secondary photons from state refilling.
    Unity internal quantum efficiency is assumed throughout, so the result
    is a lower limit. The uncertainty combines the count-rate error with the
    setup-calibration error in quadrature.
    """
    eta_setup, d_setup = setup
    if repetition_rate_hz <= 0:
        raise ValueError("repetition rate must be positive")
    if eta_setup <= 0:
        raise ValueError("setup efficiency must be positive")
    correction = 1.0
    if g2_zero is not None:
        if not 0.0 <= g2_zero < 1.0:
            raise ValueError("g2(0) must lie in [0, 1)")
        correction = float(np.sqrt(1.0 - g2_zero))
    eta = count_rate_cps / (repetition_rate_hz * eta_setup)
    sigma = np.hypot(
        count_rate_sigma_cps / (repetition_rate_hz * eta_setup),
        count_rate_cps * d_setup / (repetition_rate_hz * eta_setup**2),
    )
    return EfficiencyResult(
        efficiency=float(eta * correction),
        sigma=float(sigma * correction),
        count_rate_cps=count_rate_cps,
        count_rate_sigma_cps=count_rate_sigma_cps,
        repetition_rate_hz=repetition_rate_hz,
        setup_efficiency=eta_setup,
        setup_sigma=d_setup,
        g2_correction=correction,
    )


def purcell_from_lifetimes(tau_cavity: tuple[float, float],
                           tau_reference: tuple[float, float]
                           ) -> tuple[float, float]:
    """Emission-rate enhancement ``tau_reference / tau_cavity`` with
    quadrature relative-error propagation."""
    tc, dtc = tau_cavity
    tr, dtr = tau_reference
    if tc <= 0 or tr <= 0:
        raise ValueError("lifetimes must be positive")
    fp = tr / tc
    sigma = fp * np.hypot(dtr / tr, dtc / tc)
    return float(fp), float(sigma)


@dataclass
class LorentzianFit:
    center_nm: float
    center_err_nm: float
    fwhm_nm: float
    fwhm_err_nm: float
    quality: float
    quality_err: float
    fit: FitResult = field(repr=False, default=None)


def _lorentzian(x, background, amplitude, center, fwhm):
    half = fwhm / 2.0
    return background + amplitude * half**2 / ((x - center) ** 2 + half**2)


def fit_lorentzian(wavelength_nm: np.ndarray, intensity: np.ndarray
                   ) -> LorentzianFit:
    """Single-peak Lorentzian fit; Q = center / FWHM with propagated error."""
    x = np.asarray(wavelength_nm, dtype=float)
    y = np.asarray(intensity, dtype=float)
    b0 = float(np.percentile(y, 10))
    i_peak = int(np.argmax(y))
    a0 = float(y[i_peak] - b0)
    if a0 <= 0:
        raise ValueError("no peak above background")
    half_level = b0 + a0 / 2
    above = np.nonzero(y >= half_level)[0]
    fwhm0 = max(float(x[above[-1]] - x[above[0]]), 2 * float(np.mean(np.diff(x))))
    res = model_fit(_lorentzian, x, y, [b0, a0, float(x[i_peak]), fwhm0])
    if not res.converged:
        raise RuntimeError(f"Lorentzian fit did not converge: {res.message}")
    _, _, center, fwhm = res.params
    dc, dw = res.std_errors[2], res.std_errors[3]
    cov_cw = res.covariance[2, 3]
    q = center / fwhm
    q_var = (dc / fwhm) ** 2 + (center * dw / fwhm**2) ** 2 \
        - 2.0 * center * cov_cw / fwhm**3
    return LorentzianFit(float(center), float(dc), float(fwhm), float(dw),
                         float(q), float(np.sqrt(max(q_var, 0.0))), res)


@dataclass
class ArrheniusFit:
    intensity_zero: float
    rate_1: float
    rate_2: float
    activation_1_mev: float
    activation_2_mev: float
    intensity_zero_err: float
    rate_1_err: float
    rate_2_err: float
    activation_1_err_mev: float
    activation_2_err_mev: float
    single_process: bool
    fit: FitResult = field(repr=False, default=None)


def _arrhenius(t, i0, b1, b2, ea1, ea2):
    kt = BOLTZMANN_MEV_PER_K * t
    return i0 / (1.0 + b1 * np.exp(-ea1 / kt) + b2 * np.exp(-ea2 / kt))


def fit_arrhenius(temperature_k: np.ndarray, intensity: np.ndarray,
                  p0: Optional[Sequence[float]] = None) -> ArrheniusFit:
    """Two-process thermally activated quenching of the integrated intensity.

    Fitted in log-intensity space (the data spans decades). The two
    activation energies are ordered so the smaller one comes first; a run
    where one rate collapses to zero is flagged as single-process.
    """
    t = np.asarray(temperature_k, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if t.size < 6:
        raise ValueError("need at least six temperature points")
    if np.any(y <= 0):
        raise ValueError("intensities must be positive")
    if y.max() / y.min() < 10.0:
        warnings.warn("intensity drop below one decade: activation energies "
                      "will be poorly constrained", RuntimeWarning, stacklevel=2)
    if p0 is None:
        i0 = float(y.max())
        # crude slopes from the warm end for starting activation energies
        kt_hot = BOLTZMANN_MEV_PER_K * t.max()
        p0 = [i0, 5.0, 200.0, 0.3 * kt_hot, 1.5 * kt_hot]

    def log_model(tt, i0, b1, b2, ea1, ea2):
        return np.log(_arrhenius(tt, i0, b1, b2, ea1, ea2))

    res = model_fit(log_model, t, np.log(y), p0,
                    lower=[1e-12, 0.0, 0.0, 0.0, 0.0],
                    upper=[np.inf] * 5)
    if not res.converged:
        raise RuntimeError(f"Arrhenius fit did not converge: {res.message}")
    i0, b1, b2, ea1, ea2 = res.params
    errs = res.std_errors
    if ea1 > ea2:  # enforce ordering of the reported processes
        b1, b2 = b2, b1
        ea1, ea2 = ea2, ea1
        errs = errs[[0, 2, 1, 4, 3]]
    single = bool(b2 < 1e-6 * max(b1, 1.0) or b1 < 1e-6 * max(b2, 1.0))
    if single:
        warnings.warn("one activation channel is degenerate: treating as a "
                      "single-process quench", RuntimeWarning, stacklevel=2)
    return ArrheniusFit(float(i0), float(b1), float(b2), float(ea1),
                        float(ea2), float(errs[0]), float(errs[1]),
                        float(errs[2]), float(errs[3]), float(errs[4]),
                        single, res)


def random_yield(emitters_per_field: float, mesa_diameter_um: float,
                 field_um: float) -> float:
    """Probability that a blindly placed central mesa covers an emitter:
    ``N * (d/F)^2``."""
    if mesa_diameter_um >= field_um:
        raise ValueError("mesa diameter must be smaller than the field")
    if emitters_per_field < 0:
        raise ValueError("emitter count must be nonnegative")
    y = emitters_per_field * (mesa_diameter_um / field_um) ** 2
    if y > 1.0:
        warnings.warn("estimated yield exceeds one: the point-coverage "
                      "approximation no longer holds", RuntimeWarning,
                      stacklevel=2)
    return float(y)
