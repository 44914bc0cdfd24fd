"""Models, generators and fitters for pulsed coincidence histograms.

Covers the second-order autocorrelation of a triggered single-photon source
(recapture model for above-band excitation, background-free model for
quasi-resonant excitation), two-photon-interference histograms recorded with
a 4 ns excitation-delay interferometer (co- and cross-polarized), the raw
integrated antibunching estimate, a blinking check on the side-peak train,
and single-exponential lifetime fits of time-resolved decay traces.

All model evaluations run on the comb kernels in :mod:`dotkit._kernels`;
all fits go through :mod:`dotkit.fitting`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .fitting import FitProblem, FitResult, least_squares

DEFAULT_DELAYS_NS = (-8.0, -4.0, 0.0, 4.0, 8.0)
DEFAULT_N_SIDE = 10
# relative tau_cap/tau_dec separation below which the recapture term switches
# to its degenerate limit to keep values and Jacobians finite
DEGENERACY_THRESHOLD = 0.01


# ---------------------------------------------------------------------------
# data containers


@dataclass
class CoincidenceHistogram:
    """Uniformly binned coincidence counts, symmetric about zero delay."""

    bin_width_ps: float
    bin_centers_ps: np.ndarray
    counts: np.ndarray
    period_ns: float
    excitation: str = "off-resonant"  # or "quasi-resonant"
    polarization: str = "none"  # "co" | "cross" | "none"

    def __post_init__(self):
        self.bin_centers_ps = np.asarray(self.bin_centers_ps, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.bin_centers_ps.ndim != 1 or self.bin_centers_ps.size < 2:
            raise ValueError("need a 1-D grid of at least two bins")
        steps = np.diff(self.bin_centers_ps)
        if not np.allclose(steps, self.bin_width_ps, rtol=1e-6, atol=1e-6):
            raise ValueError("bins must be uniform with the stated width")
        if self.counts.shape != self.bin_centers_ps.shape:
            raise ValueError("counts and bin centers must align")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        span = min(-self.bin_centers_ps[0], self.bin_centers_ps[-1])
        if span < 5.0 * self.period_ns * 1e3 - 0.5 * self.bin_width_ps:
            raise ValueError("histogram must span at least five pulse periods")

    @property
    def period_ps(self) -> float:
        return self.period_ns * 1e3


@dataclass
class G2FitParams:
    """Parameters of the pulsed autocorrelation models.

    The recapture (off-resonant) model is::

        C(tau) = background
               + center_amplitude * (exp(-|tau|/decay) - exp(-|tau|/capture))
               + side_height * sum_{n != 0} exp(-|tau - n*period|/decay)

    The quasi-resonant model has no background or recapture
    (``capture_ps is None``)::

        C(tau) = scale * (g2_zero * exp(-|tau|/decay)
                          + sum_{n != 0} exp(-|tau - n*period|/decay))
    """

    background: float = 0.0  # counts
    center_amplitude: float = 0.0  # counts
    side_height: float = 0.0  # counts
    decay_ps: float = 1.0
    capture_ps: Optional[float] = None
    period_ns: float = 12.5
    scale: float = 1.0
    g2_zero: Optional[float] = None

    def __post_init__(self):
        if self.decay_ps <= 0:
            raise ValueError("decay time must be positive")
        if self.capture_ps is not None and self.capture_ps <= 0:
            raise ValueError("capture time must be positive")
        if min(self.background, self.center_amplitude, self.side_height) < 0:
            raise ValueError("count-scale parameters must be nonnegative")

    @property
    def period_ps(self) -> float:
        return self.period_ns * 1e3


@dataclass
class HomFitParams:
    """Parameters of the two-photon-interference histogram models.

    ``center_areas`` and ``outer_areas`` are the five peak weights of the
    central cluster and of the repeated outer clusters; the co-polarized
    model multiplies the middle center peak by
    ``(1 - postselected_visibility * exp(-|tau|/coherence_ps))``.
    """

    center_areas: Sequence[float]  # A1..A5
    outer_areas: Sequence[float]  # B1..B5
    lifetime_ps: float
    coherence_ps: float = 100.0
    postselected_visibility: float = 0.0
    delays_ns: Sequence[float] = DEFAULT_DELAYS_NS
    period_ns: float = 12.5
    cross_center_area: Optional[float] = None
    center_area_errs: Optional[np.ndarray] = None
    outer_area_errs: Optional[np.ndarray] = None
    lifetime_err_ps: Optional[float] = None
    coherence_err_ps: Optional[float] = None
    postselected_visibility_err: Optional[float] = None
    cross_center_area_err: Optional[float] = None

    def __post_init__(self):
        self.center_areas = np.asarray(self.center_areas, dtype=float)
        self.outer_areas = np.asarray(self.outer_areas, dtype=float)
        if self.center_areas.size != 5 or self.outer_areas.size != 5:
            raise ValueError("need exactly five center and five outer areas")
        if self.lifetime_ps <= 0 or self.coherence_ps <= 0:
            raise ValueError("lifetime and coherence time must be positive")
        if not 0.0 <= self.postselected_visibility <= 1.0:
            raise ValueError("postselected visibility must lie in [0, 1]")
        if np.any(self.center_areas < 0) or np.any(self.outer_areas < 0):
            raise ValueError("areas must be nonnegative")


# ---------------------------------------------------------------------------
# autocorrelation models


def _side_centers(period_ps: float, n_side: int) -> np.ndarray:
    n = np.concatenate([np.arange(-n_side, 0), np.arange(1, n_side + 1)])
    return n * period_ps


def _recapture_term(abs_tau: np.ndarray, amplitude: float, decay: float,
                    capture: float) -> np.ndarray:
    if abs(decay - capture) < DEGENERACY_THRESHOLD * decay:
        # degenerate limit of the difference of exponentials
        return amplitude * abs_tau / decay * np.exp(-abs_tau / decay)
    return amplitude * (np.exp(-abs_tau / decay) - np.exp(-abs_tau / capture))


def _comb_tail(abs_tau: np.ndarray, period_ps: float, decay: float,
               n_side: int) -> np.ndarray:
    # analytic geometric-series bound for the peaks beyond |n| = n_side,
    # evaluated in log space so distant peaks underflow instead of
    # overflowing
    r = np.exp(-period_ps / decay)
    if r >= 1.0:
        return np.zeros_like(abs_tau)
    edge = (n_side + 1) * period_ps
    return (np.exp((abs_tau - edge) / decay)
            + np.exp((-abs_tau - edge) / decay)) / (1.0 - r)


def g2_model_offres(tau_ps, params: G2FitParams, n_side: int = DEFAULT_N_SIDE,
                    tail_correction: bool = True) -> np.ndarray:
    """Recapture autocorrelation model evaluated at delays ``tau_ps``.

    Every term depends on the delay through absolute distances only, so the
    model is evaluated at ``|tau|``: evenness is exact to the last bit."""
    if params.capture_ps is None:
        raise ValueError("recapture model needs a capture time")
    abs_tau = np.abs(np.atleast_1d(np.asarray(tau_ps, dtype=float)))
    comb, _ = _kernels.exp_comb(abs_tau,
                                _side_centers(params.period_ps, n_side),
                                params.decay_ps)
    if tail_correction:
        comb = comb + _comb_tail(abs_tau, params.period_ps, params.decay_ps,
                                 n_side)
    out = (params.background
           + _recapture_term(abs_tau, params.center_amplitude,
                             params.decay_ps, params.capture_ps)
           + params.side_height * comb)
    return out if np.ndim(tau_ps) else float(out[0])


def g2_model_quasires(tau_ps, params: G2FitParams,
                      n_side: int = DEFAULT_N_SIDE,
                      tail_correction: bool = True) -> np.ndarray:
    """Background-free autocorrelation model for quasi-resonant excitation."""
    if params.g2_zero is None:
        raise ValueError("quasi-resonant model needs its g2_zero parameter")
    if params.background != 0.0:
        raise ValueError("quasi-resonant model assumes zero background")
    abs_tau = np.abs(np.atleast_1d(np.asarray(tau_ps, dtype=float)))
    comb, _ = _kernels.exp_comb(abs_tau,
                                _side_centers(params.period_ps, n_side),
                                params.decay_ps)
    if tail_correction:
        comb = comb + _comb_tail(abs_tau, params.period_ps, params.decay_ps,
                                 n_side)
    out = params.scale * (params.g2_zero * np.exp(-abs_tau / params.decay_ps)
                          + comb)
    return out if np.ndim(tau_ps) else float(out[0])


def g2_zero_fit(params: G2FitParams) -> float:
    """Closed-form center/side integral ratio of the recapture model.

    Both integrals run over one period centered on the respective peak;
    background is excluded. Equals
    ``A*(decay - capture)/(H*decay)`` in the long-period limit.
    """
    if params.capture_ps is None:
        raise ValueError("the closed form applies to the recapture model only")
    if params.side_height == 0:
        raise ValueError("side peaks vanish: center integral cannot be normalized")
    half = 0.5 * params.period_ps
    if half < 5.0 * params.decay_ps:
        warnings.warn(
            "half period is not large against the decay time; "
            "peak integrals overlap noticeably",
            RuntimeWarning,
            stacklevel=2,
        )
    td, tc = params.decay_ps, params.capture_ps
    ed = td * (1.0 - np.exp(-half / td))
    ec = tc * (1.0 - np.exp(-half / tc))
    return params.center_amplitude * (ed - ec) / (params.side_height * ed)


def g2_normalized(tau_ps, params: G2FitParams, **kw) -> np.ndarray:
    """g2(tau): the recapture model normalized by (side height + background)."""
    return g2_model_offres(tau_ps, params, **kw) / (params.side_height
                                                    + params.background)


# ---------------------------------------------------------------------------
# raw integrated antibunching


def g2_zero_raw(hist: CoincidenceHistogram, window_ns: float = 6.0
                ) -> tuple[float, float]:
    """Integrated center-window coincidences over the mean side window.

    The uncertainty combines the Poisson error of the center sum (scaled by
    the empirical variance/mean ratio of the side sums) with the standard
    error of the side mean.
    """
    w = window_ns * 1e3
    period = hist.period_ps
    if period < 2.0 * w:
        raise ValueError("window overlaps adjacent peaks: need period >= 2*window")
    tau = hist.bin_centers_ps
    n_max = int(np.floor((tau[-1] - w) / period))
    if 2 * n_max < 10:
        raise ValueError("need at least ten side peaks inside the span")
    sums = []
    for n in range(-n_max, n_max + 1):
        sel = np.abs(tau - n * period) <= w
        sums.append(hist.counts[sel].sum())
    sums = np.asarray(sums)
    center = sums[n_max]
    side = np.delete(sums, n_max)
    side_mean = side.mean()
    if side_mean <= 0:
        raise ValueError("side windows are empty")
    value = center / side_mean
    fano = side.var(ddof=1) / side_mean if side.size > 1 else 1.0
    sigma_center = np.sqrt(max(fano, 1e-12) * max(center, 1.0))
    sigma_side_mean = side.std(ddof=1) / np.sqrt(side.size)
    sigma = np.hypot(sigma_center / side_mean,
                     center * sigma_side_mean / side_mean**2)
    return float(value), float(sigma)


# ---------------------------------------------------------------------------
# blinking check


@dataclass
class BlinkingResult:
    peak_order: np.ndarray
    normalized_heights: np.ndarray
    slope: float
    slope_err: float
    confidence_interval: tuple[float, float]
    blinking: bool


def blinking_check(hist: CoincidenceHistogram, min_peaks: int = 100,
                   height_window_ps: Optional[float] = None) -> BlinkingResult:
    """Trend of the normalized side-peak maxima against peak order.

    A source that intermittently goes dark shows decaying peak heights with
    increasing delay; a flat train rules that out. Flags blinking when the
    95 % confidence interval of the linear slope excludes zero and the
    implied relative decay exceeds 1 % per 100 peaks.
    """
    period = hist.period_ps
    tau = hist.bin_centers_ps
    w = height_window_ps if height_window_ps is not None else 0.25 * period
    n_max = int(np.floor((tau[-1] - w) / period))
    orders = [n for n in range(-n_max, n_max + 1) if n != 0]
    if len(orders) < min_peaks:
        raise ValueError(
            f"only {len(orders)} side peaks in span, need {min_peaks}")
    heights = np.empty(len(orders))
    for i, n in enumerate(orders):
        sel = np.abs(tau - n * period) <= w
        heights[i] = hist.counts[sel].max()
    heights /= heights.mean()
    x = np.abs(np.asarray(orders, dtype=float))
    design = np.column_stack([np.ones_like(x), x])
    coef, rss_arr, *_ = np.linalg.lstsq(design, heights, rcond=None)
    resid = heights - design @ coef
    dof = max(heights.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    slope = float(coef[1])
    slope_err = float(np.sqrt(cov[1, 1]))
    ci = (slope - 1.96 * slope_err, slope + 1.96 * slope_err)
    excludes_zero = ci[0] > 0 or ci[1] < 0
    blinking = excludes_zero and abs(slope) * 100.0 > 0.01
    return BlinkingResult(np.asarray(orders), heights, slope, slope_err, ci,
                          bool(blinking))


# ---------------------------------------------------------------------------
# two-photon-interference models


def _hom_layout(delays_ns: Sequence[float], period_ns: float, n_side: int
                ) -> tuple[np.ndarray, np.ndarray]:
    """Peak centers (ps) and group ids: groups 0-4 center cluster, 5-9 outer."""
    delays = np.asarray(delays_ns, dtype=float) * 1e3
    period = period_ns * 1e3
    centers = [-delays]
    groups = [np.arange(5)]
    for n in range(-n_side, n_side + 1):
        if n == 0:
            continue
        centers.append(-delays - n * period)
        groups.append(np.arange(5, 10))
    return np.concatenate(centers), np.concatenate(groups).astype(np.int32)


def _hom_design(tau: np.ndarray, params: HomFitParams, n_side: int
                ) -> tuple[np.ndarray, np.ndarray]:
    centers, groups = _hom_layout(params.delays_ns, params.period_ns, n_side)
    return _kernels.group_exp_comb(tau, centers, groups, 10, params.lifetime_ps)


def hom_model(tau_ps, params: HomFitParams, polarization: str,
              n_side: int = DEFAULT_N_SIDE) -> np.ndarray:
    """Coincidence pattern of the delayed-pulse interference histogram.

    ``polarization`` selects the co-polarized model (interference dip in the
    central peak) or the cross-polarized one (no dip). The two coincide when
    the postselected visibility is zero.

    Evaluation runs on ``|tau|`` with the peak weights mirrored for the
    negative-delay samples; this is the same function of tau, but makes the
    model exactly even whenever the weight vectors are mirror-symmetric.
    """
    if polarization not in ("co", "cross"):
        raise ValueError("polarization must be 'co' or 'cross'")
    tau = np.atleast_1d(np.asarray(tau_ps, dtype=float))
    abs_tau = np.abs(tau)
    g0, _ = _hom_design(abs_tau, params, n_side)
    forward = np.concatenate([params.center_areas, params.outer_areas])
    mirrored = np.concatenate([params.center_areas[::-1],
                               params.outer_areas[::-1]])
    out = np.where(tau >= 0, g0 @ forward, g0 @ mirrored)
    if polarization == "co" and params.postselected_visibility > 0:
        dip = params.postselected_visibility * np.exp(
            -abs_tau / params.coherence_ps)
        out = out - params.center_areas[2] * g0[:, 2] * dip
    return out if np.ndim(tau_ps) else float(out[0])


def hom_sidepeak_visibility(params: HomFitParams) -> float:
    """Interference visibility from the central cluster alone:
    ``1 - 2*A3 / (A2 + A4)``. May be negative and is reported as-is."""
    a = params.center_areas
    if a[1] + a[3] <= 0:
        raise ValueError("neighboring peak areas must not both vanish")
    return float(1.0 - 2.0 * a[2] / (a[1] + a[3]))


# ---------------------------------------------------------------------------
# synthetic histograms


_MODEL_TAGS = {
    "g2-offres": ("off-resonant", "none"),
    "g2-quasires": ("quasi-resonant", "none"),
    "hom-co": ("quasi-resonant", "co"),
    "hom-cross": ("quasi-resonant", "cross"),
}


def synth_histogram(model: str, params, total_counts: float,
                    bin_width_ps: float, seed: int,
                    span_ns: Optional[float] = None,
                    n_side: int = DEFAULT_N_SIDE) -> CoincidenceHistogram:
    """Poisson-sampled histogram around the named model, scaled to
    ``total_counts`` expected counts. Deterministic for a fixed seed."""
    if model not in _MODEL_TAGS:
        raise ValueError(f"unknown model '{model}'")
    if total_counts <= 0:
        raise ValueError("total counts must be positive")
    period_ns = params.period_ns
    if span_ns is None:
        span_ns = 5.5 * period_ns
    k = int(np.ceil(span_ns * 1e3 / bin_width_ps))
    tau = np.arange(-k, k + 1, dtype=float) * bin_width_ps
    if model == "g2-offres":
        lam = g2_model_offres(tau, params, n_side)
    elif model == "g2-quasires":
        lam = g2_model_quasires(tau, params, n_side)
    else:
        lam = hom_model(tau, params, model.split("-")[1], n_side)
    lam = np.clip(lam, 0.0, None)
    lam *= total_counts / lam.sum()
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam).astype(float)
    excitation, polarization = _MODEL_TAGS[model]
    return CoincidenceHistogram(bin_width_ps, tau, counts, period_ns,
                                excitation, polarization)


# ---------------------------------------------------------------------------
# fitting: autocorrelation


def _estimate_decay(tau: np.ndarray, counts: np.ndarray, center_ps: float,
                    fit_range_ps: float) -> float:
    """Log-slope of a peak flank; crude but good enough as a starting point."""
    sel = (tau > center_ps + fit_range_ps * 0.05) & (tau < center_ps + fit_range_ps)
    y = counts[sel]
    x = tau[sel]
    good = y > 0
    if good.sum() < 3:
        return fit_range_ps / 3.0
    slope = np.polyfit(x[good], np.log(y[good]), 1)[0]
    if slope >= 0:
        return fit_range_ps / 3.0
    return float(np.clip(-1.0 / slope, 10.0, 1e5))


def _peak_height(tau, counts, center_ps, window_ps):
    sel = np.abs(tau - center_ps) <= window_ps
    return counts[sel].max() if sel.any() else 0.0


def _poisson_sigma(model: np.ndarray, floor: float = 1.0) -> np.ndarray:
    """Per-bin count noise from the model prediction (model-based weights
    avoid the bias of weighting by the observed values)."""
    return np.sqrt(np.clip(model, floor, None))


@dataclass
class G2FitReport:
    params: G2FitParams
    errors: G2FitParams
    g2_zero: float
    g2_zero_err: float
    mean_fit_residual: float
    fit: FitResult = field(repr=False, default=None)


def _bump_shape(abs_tau: np.ndarray, decay: float, f: float) -> np.ndarray:
    """Normalized recapture bump ``(exp(-t/decay) - exp(-t/(f*decay)))/(1-f)``.

    This is the center term with the amplitude degeneracy divided out: it
    stays smooth and finite through f -> 1 (capture approaching decay), so
    the fit parametrization has no ridge."""
    e_dec = np.exp(-abs_tau / decay)
    if abs(1.0 - f) < 1e-7:
        return e_dec * abs_tau / (f * f * decay)
    return (e_dec - np.exp(-abs_tau / (f * decay))) / (1.0 - f)


def fit_g2_offres(hist: CoincidenceHistogram, n_side: int = DEFAULT_N_SIDE
                  ) -> G2FitReport:
    """Fit the recapture model and propagate the center/side integral ratio.

    Internally the center term is parametrized as
    ``u * bump(tau; decay, f)`` with ``u = A*(1-f)`` and
    ``f = capture/decay``, which removes the amplitude/capture-time
    degeneracy near equal time constants; results are reported in the
    physical parametrization."""
    tau, counts = hist.bin_centers_ps, hist.counts
    period = hist.period_ps
    abs_tau = np.abs(tau)
    mid = np.abs(np.mod(tau + period / 2, period) - period / 2)
    background0 = float(np.median(counts[mid > period / 4]))
    h0 = max(_peak_height(tau, counts, period, period / 4) - background0, 1.0)
    dec0 = _estimate_decay(tau, counts - background0, period, period / 3)
    side_centers_pos = _side_centers(period, n_side)

    def model(x):
        b, u, h, dec, f, per = x
        comb, _ = _kernels.exp_comb(abs_tau, side_centers_pos * (per / period),
                                    dec)
        comb = comb + _comb_tail(abs_tau, per, dec, n_side)
        return b + u * _bump_shape(abs_tau, dec, f) + h * comb

    x0 = np.array([background0, h0 / 6, h0, dec0, 0.5, period])
    lo = np.array([0.0, 0.0, 0.0, 10.0, 0.02, period * 0.98])
    hi = np.array([np.inf, np.inf, np.inf, 1e5, 0.999, period * 1.02])
    # first pass unweighted, then refit with model-based Poisson weights
    first = least_squares(FitProblem(lambda x: model(x) - counts, x0,
                                     lower=lo, upper=hi))
    sigma = _poisson_sigma(model(first.params))
    res = least_squares(FitProblem(lambda x: (model(x) - counts) / sigma,
                                   first.params, lower=lo, upper=hi))
    b, u, h, dec, f, per = res.params
    err = res.std_errors
    cov = res.covariance

    # physical parametrization for reporting: A = u/(1-f), capture = f*decay
    amp = u / (1.0 - f)
    grad_amp = np.zeros(6)
    grad_amp[1] = 1.0 / (1.0 - f)
    grad_amp[4] = u / (1.0 - f) ** 2
    amp_err = float(np.sqrt(max(grad_amp @ cov @ grad_amp, 0.0)))
    cap = f * dec
    grad_cap = np.zeros(6)
    grad_cap[3] = f
    grad_cap[4] = dec
    cap_err = float(np.sqrt(max(grad_cap @ cov @ grad_cap, 0.0)))

    params = G2FitParams(background=b, center_amplitude=amp, side_height=h,
                         decay_ps=dec, capture_ps=cap, period_ns=per / 1e3)
    errors = G2FitParams(background=err[0], center_amplitude=max(amp_err, 1e-12),
                         side_height=err[2], decay_ps=max(err[3], 1e-12),
                         capture_ps=max(cap_err, 1e-12), period_ns=err[5] / 1e3)
    g2v, g2e = _propagate_g2_zero(res.params, cov)
    raw = model(res.params) - counts
    mfr = float(np.mean(np.abs(raw))) / max(params.side_height, 1e-12)
    return G2FitReport(params, errors, g2v, g2e, mfr, res)


def _g2_zero_from_fit_space(x: np.ndarray) -> float:
    """Center/side integral ratio in the ridge-free fit parametrization."""
    _, u, h, dec, f, per = x
    half = 0.5 * per
    e_dec = np.exp(-half / dec)
    e_cap = np.exp(-half / (f * dec))
    # integral of the normalized bump over one period:
    # [dec(1-e_dec) - f*dec(1-e_cap)] / (1-f)
    if abs(1.0 - f) < 1e-7:
        num = dec * (1.0 - e_dec * (1.0 + half / dec))
    else:
        num = dec * ((1.0 - e_dec) - f * (1.0 - e_cap)) / (1.0 - f)
    return u * num / (h * dec * (1.0 - e_dec))


def _propagate_g2_zero(x: np.ndarray, cov: np.ndarray) -> tuple[float, float]:
    """Delta-method error of the integral ratio over the fit covariance."""
    value = _g2_zero_from_fit_space(x)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.sqrt(np.finfo(float).eps) * max(abs(x[i]), 1e-3)
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (_g2_zero_from_fit_space(xp)
                   - _g2_zero_from_fit_space(xm)) / (2 * step)
    var = float(grad @ cov @ grad)
    return float(value), float(np.sqrt(max(var, 0.0)))


def fit_g2_quasires(hist: CoincidenceHistogram, n_side: int = DEFAULT_N_SIDE
                    ) -> G2FitReport:
    """Fit the background-free model; g2(0) is a direct fit parameter.

    Only bins within a few decay times of a peak enter the fit: the empty
    stretches between peaks carry no information but would dilute the
    residual-variance estimate behind the parameter errors."""
    tau, counts = hist.bin_centers_ps, hist.counts
    period = hist.period_ps
    h0 = max(_peak_height(tau, counts, period, period / 4), 1.0)
    c0 = _peak_height(tau, counts, 0.0, period / 8)
    dec0 = _estimate_decay(tau, counts, period, period / 3)
    n_max = int(np.floor(tau[-1] / period))
    offsets = np.abs(np.mod(tau + period / 2.0, period) - period / 2.0)
    keep = (offsets <= 3.5 * dec0) & (np.abs(tau) <= (n_max + 0.4) * period)
    tau, counts = tau[keep], counts[keep]

    def unpack(x):
        c, g, dec, per = x
        return G2FitParams(center_amplitude=0.0, side_height=0.0, scale=c,
                           g2_zero=g, decay_ps=dec, period_ns=per / 1e3)

    x0 = np.array([h0, min(max(c0 / h0, 1e-4), 0.5), dec0, period])
    lo = np.array([0.0, 0.0, 10.0, period * 0.98])
    hi = np.array([np.inf, 2.0, 1e5, period * 1.02])
    first = least_squares(FitProblem(
        lambda x: g2_model_quasires(tau, unpack(x), n_side) - counts,
        x0, lower=lo, upper=hi))
    sigma = _poisson_sigma(g2_model_quasires(tau, unpack(first.params),
                                             n_side))

    def residual(x):
        return (g2_model_quasires(tau, unpack(x), n_side) - counts) / sigma

    res = least_squares(FitProblem(residual, first.params, lower=lo, upper=hi))
    params = unpack(res.params)
    err = res.std_errors
    errors = G2FitParams(center_amplitude=0.0, side_height=0.0, scale=err[0],
                         g2_zero=err[1], decay_ps=max(err[2], 1e-12),
                         period_ns=err[3] / 1e3)
    raw = g2_model_quasires(tau, params, n_side) - counts
    mfr = float(np.mean(np.abs(raw))) / max(params.scale, 1e-12)
    return G2FitReport(params, errors, float(params.g2_zero),
                       float(err[1]), mfr, res)


# ---------------------------------------------------------------------------
# fitting: two-photon interference


def _hom_pack(params: HomFitParams, co: bool) -> np.ndarray:
    head = [params.lifetime_ps]
    if co:
        head += [params.coherence_ps, params.postselected_visibility]
    return np.concatenate([head, params.center_areas, params.outer_areas])


def _hom_unpack(x: np.ndarray, co: bool, template: HomFitParams) -> HomFitParams:
    k = 3 if co else 1
    return replace(
        template,
        lifetime_ps=x[0],
        coherence_ps=x[1] if co else template.coherence_ps,
        postselected_visibility=x[2] if co else 0.0,
        center_areas=x[k:k + 5],
        outer_areas=x[k + 5:k + 10],
        center_area_errs=None,
        outer_area_errs=None,
    )


def _fit_hom_single(hist: CoincidenceHistogram, template: HomFitParams,
                    co: bool, n_side: int) -> tuple[HomFitParams, FitResult]:
    tau, counts = hist.bin_centers_ps, hist.counts
    centers, groups = _hom_layout(template.delays_ns, template.period_ns, n_side)

    def model_and_design(x):
        p = _hom_unpack(x, co, template)
        g0, g1 = _kernels.group_exp_comb(tau, centers, groups, 10, p.lifetime_ps)
        w = np.concatenate([p.center_areas, p.outer_areas])
        m = g0 @ w
        if co:
            dip = p.postselected_visibility * np.exp(-np.abs(tau) / p.coherence_ps)
            m = m - p.center_areas[2] * g0[:, 2] * dip
        return p, g0, g1, m

    def make_problem(x0, sigma):
        def residual(x):
            r = model_and_design(x)[3] - counts
            return r / sigma if sigma is not None else r

        def jacobian(x):
            p, g0, g1, _ = model_and_design(x)
            w = np.concatenate([p.center_areas, p.outer_areas])
            # d/d lifetime: every term carries |tau - c|/tau1^2
            dtau1 = (g1 @ w) / p.lifetime_ps**2
            if co:
                edip = np.exp(-np.abs(tau) / p.coherence_ps)
                v = p.postselected_visibility
                a3 = p.center_areas[2]
                dtau1 = dtau1 - a3 * v * edip * g1[:, 2] / p.lifetime_ps**2
                dT2 = -a3 * v * g0[:, 2] * edip * np.abs(tau) / p.coherence_ps**2
                dV = -a3 * g0[:, 2] * edip
                cols = [dtau1, dT2, dV]
            else:
                cols = [dtau1]
            for i in range(5):
                col = g0[:, i].copy()
                if co and i == 2:
                    col = col * (1.0 - p.postselected_visibility * np.exp(
                        -np.abs(tau) / p.coherence_ps))
                cols.append(col)
            for i in range(5, 10):
                cols.append(g0[:, i])
            jac = np.column_stack(cols)
            return jac / sigma[:, None] if sigma is not None else jac

        n_amp = 10
        if co:
            lo = np.concatenate([[20.0, 5.0, 0.0], np.zeros(n_amp)])
            hi = np.concatenate([[1e4, 1e4, 1.0], np.full(n_amp, np.inf)])
        else:
            lo = np.concatenate([[20.0], np.zeros(n_amp)])
            hi = np.concatenate([[1e4], np.full(n_amp, np.inf)])
        return FitProblem(residual, x0, lower=lo, upper=hi, jacobian=jacobian)

    first = least_squares(make_problem(_hom_pack(template, co), None))
    sigma = _poisson_sigma(model_and_design(first.params)[3])
    res = least_squares(make_problem(first.params, sigma))
    fitted = _hom_unpack(res.params, co, template)
    err = res.std_errors
    k = 3 if co else 1
    fitted = replace(
        fitted,
        center_area_errs=err[k:k + 5],
        outer_area_errs=err[k + 5:k + 10],
        lifetime_err_ps=float(err[0]),
        coherence_err_ps=float(err[1]) if co else None,
        postselected_visibility_err=float(err[2]) if co else None,
    )
    return fitted, res


def _initial_hom_guess(hist: CoincidenceHistogram, delays_ns, n_side
                       ) -> HomFitParams:
    tau, counts = hist.bin_centers_ps, hist.counts
    period = hist.period_ps
    delays = np.asarray(delays_ns, dtype=float) * 1e3
    tau1 = _estimate_decay(tau, counts, -delays[0], 0.4 * abs(delays[1] - delays[0]))
    window = 0.3e3
    a = np.array([_peak_height(tau, counts, -d, window) for d in delays])
    b_reps = []
    for n in (-2, -1, 1, 2):
        b_reps.append([_peak_height(tau, counts, -d - n * period, window)
                       for d in delays])
    b = np.asarray(b_reps).mean(axis=0)
    a = np.clip(a, 1.0, None)
    b = np.clip(b, 1.0, None)
    center0 = _peak_height(tau, counts, 0.0, 0.1e3)
    vis0 = float(np.clip(1.0 - center0 / a[2], 0.05, 0.95))
    return HomFitParams(center_areas=a, outer_areas=b, lifetime_ps=tau1,
                        coherence_ps=100.0, postselected_visibility=vis0,
                        delays_ns=delays_ns, period_ns=hist.period_ns)


def fit_hom_pair(co: CoincidenceHistogram, cross: CoincidenceHistogram,
                 delays_ns: Sequence[float] = DEFAULT_DELAYS_NS,
                 n_side: int = DEFAULT_N_SIDE
                 ) -> tuple[HomFitParams, float, float]:
    """Joint analysis of a co/cross-polarized interference pair.

    The cross histogram is fitted first; its lifetime seeds the co fit. The
    visibility is one minus the ratio of the central peak weights, each
    normalized to its own first-peak weight so that co and cross runs with
    different integration times remain comparable. Errors are propagated
    from both fit covariances.
    """
    if abs(co.bin_width_ps - cross.bin_width_ps) > 1e-9 or \
            abs(co.period_ns - cross.period_ns) > 1e-9:
        raise ValueError("co and cross histograms must share binning and period")
    guess_cross = _initial_hom_guess(cross, delays_ns, n_side)
    cross_fit, cross_res = _fit_hom_single(cross, guess_cross, co=False,
                                           n_side=n_side)
    if not cross_res.converged:
        raise RuntimeError(f"cross-polarized fit did not converge: "
                           f"{cross_res.message}")
    guess_co = _initial_hom_guess(co, delays_ns, n_side)
    guess_co = replace(guess_co, lifetime_ps=cross_fit.lifetime_ps)
    co_fit, co_res = _fit_hom_single(co, guess_co, co=True, n_side=n_side)
    if not co_res.converged:
        raise RuntimeError(f"co-polarized fit did not converge: {co_res.message}")
    a_cross = cross_fit.center_areas
    if a_cross[2] <= 0 or a_cross[2] < 1e-9 * max(a_cross.max(), 1.0):
        raise ValueError("cross-polarized central peak is consistent with zero")

    visibility, sigma = _visibility_from_fits(co_fit, co_res, cross_fit,
                                              cross_res)
    combined = replace(
        co_fit,
        cross_center_area=float(a_cross[2] / a_cross[0]),
        cross_center_area_err=_normalized_area_err(cross_fit, cross_res,
                                                   co=False),
    )
    return combined, visibility, sigma


def _area_indices(co: bool) -> tuple[int, int]:
    k = 3 if co else 1
    return k, k + 2  # positions of A1 and A3 in the packed vector


def _normalized_area_err(fit: HomFitParams, res: FitResult, co: bool) -> float:
    i1, i3 = _area_indices(co)
    x = res.params
    ratio = x[i3] / x[i1]
    grad = np.zeros_like(x)
    grad[i3] = 1.0 / x[i1]
    grad[i1] = -x[i3] / x[i1]**2
    var = float(grad @ res.covariance @ grad)
    return float(np.sqrt(max(var, 0.0))) if ratio == ratio else np.nan


def _visibility_from_fits(co_fit, co_res, cross_fit, cross_res
                          ) -> tuple[float, float]:
    i1c, i3c = _area_indices(co=True)
    i1x, i3x = _area_indices(co=False)
    rc = co_res.params[i3c] / co_res.params[i1c]
    rx = cross_res.params[i3x] / cross_res.params[i1x]
    value = 1.0 - rc / rx
    src = _normalized_area_err(co_fit, co_res, co=True)
    srx = _normalized_area_err(cross_fit, cross_res, co=False)
    sigma = abs(rc / rx) * np.hypot(src / rc, srx / rx)
    return float(value), float(sigma)


def hom_mean_fit_residual(hist: CoincidenceHistogram, params: HomFitParams,
                          polarization: str,
                          n_side: int = DEFAULT_N_SIDE) -> float:
    """Mean absolute residual normalized by the first center-peak weight."""
    model = hom_model(hist.bin_centers_ps, params, polarization, n_side)
    scale = max(params.center_areas[0], 1e-12)
    return float(np.mean(np.abs(model - hist.counts))) / scale


# ---------------------------------------------------------------------------
# lifetime fit


@dataclass
class LifetimeFit:
    tau_ps: float
    tau_err_ps: float
    amplitude: float
    background: float
    fit: FitResult = field(repr=False, default=None)


def fit_lifetime(time_ps: np.ndarray, counts: np.ndarray,
                 start_offset_ps: float = 0.0) -> LifetimeFit:
    """Single-exponential decay plus flat background after the rise.

    The fit starts at the trace maximum plus ``start_offset_ps``; the trace
    must extend at least three fitted lifetimes beyond that point.
    """
    t = np.asarray(time_ps, dtype=float)
    y = np.asarray(counts, dtype=float)
    i0 = int(np.argmax(y))
    t0 = t[i0] + start_offset_ps
    sel = t >= t0
    ts, ys = t[sel], y[sel]
    if ts.size < 8:
        raise ValueError("too few samples after the rise")
    b0 = float(np.percentile(ys, 5))
    a0 = max(float(ys[0] - b0), 1e-9)
    tau0 = _estimate_decay(ts, np.clip(ys - b0, 0, None), ts[0],
                           0.5 * (ts[-1] - ts[0]))

    def residual(x):
        a, tau, b = x
        return a * np.exp(-(ts - ts[0]) / tau) + b - ys

    res = least_squares(FitProblem(residual, np.array([a0, tau0, b0]),
                                   lower=[0.0, 1e-3, 0.0],
                                   upper=[np.inf, np.inf, np.inf]))
    a, tau, b = res.params
    if ts[-1] - ts[0] < 3.0 * tau:
        raise ValueError("trace is shorter than three lifetimes")
    if not res.converged:
        raise RuntimeError(f"lifetime fit did not converge: {res.message}")
    return LifetimeFit(float(tau), float(res.std_errors[1]), float(a),
                       float(b), res)


# ---------------------------------------------------------------------------
# file formats


def write_histogram(path, hist: CoincidenceHistogram) -> None:
    """Two-column CSV (tau_ps, counts) plus a JSON header sidecar."""
    path = Path(path)
    data = np.column_stack([hist.bin_centers_ps, hist.counts])
    np.savetxt(path, data, delimiter=",", header="tau_ps,counts", comments="")
    sidecar = {
        "bin_ps": hist.bin_width_ps,
        "period_ns": hist.period_ns,
        "excitation": hist.excitation,
        "polarization": hist.polarization,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def read_histogram(path) -> CoincidenceHistogram:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"missing JSON header sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (tau_ps, counts)")
    return CoincidenceHistogram(
        bin_width_ps=float(meta["bin_ps"]),
        bin_centers_ps=data[:, 0],
        counts=data[:, 1],
        period_ns=float(meta["period_ns"]),
        excitation=meta.get("excitation", "off-resonant"),
        polarization=meta.get("polarization", "none"),
    )
