"""Emitter localization in wide-field maps with a full uncertainty budget.

The pipeline mirrors how a structured sample is analyzed: each detected
emitter is cut by one horizontal and one vertical cross-section; Gaussian
fits give the two field-edge positions (the alignment marks) and the spot
position in pixels; the known field size converts pixels to micrometers via
a per-map scaling factor. Every fitted center carries its standard error,
and the errors propagate through the position formula down to the final
placement uncertainty of a cavity written around the emitter.

Conventions: pixel quantities are floats in pixel units; positions are
micrometers relative to the lower/left field edge. The scaling factor P is
in px/um; its uncertainty is the standard error of the per-section mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .fitting import FitResult, model_fit
from .imaging import PGM_MAXVAL, PixelImage

DEFAULT_AVERAGING_WIDTH = 10  # px; best cross-section SNR for this width
DEFAULT_ALIGNMENT_SIGMA_UM = 0.04  # lithography alignment uncertainty
DEFAULT_OVERETCH_UM = 0.04  # one-sided etch allowance of the field edge


class NoSpotError(ValueError):
    """The profile does not show two edge peaks and an interior spot."""


class OutlineError(ValueError):
    """The field outline could not be found in the image."""


@dataclass
class CrossSection:
    axis: str  # "horizontal": profile along x; "vertical": along y
    averaging_width: int
    profile: np.ndarray
    origin_px: int = 0

    def __post_init__(self):
        if self.axis not in ("horizontal", "vertical"):
            raise ValueError("axis must be 'horizontal' or 'vertical'")
        if self.averaging_width < 1:
            raise ValueError("averaging width must be at least one pixel")
        self.profile = np.asarray(self.profile, dtype=float)


@dataclass
class SectionFit:
    """Fitted centers (px) with standard errors for both edges and the spot."""

    m_lower_px: float
    m_lower_err_px: float
    m_upper_px: float
    m_upper_err_px: float
    spot_px: float
    spot_err_px: float
    fwhm_px: float
    fwhm_err_px: float
    amplitude: float
    background: float
    snr: float
    converged: bool = True

    def __post_init__(self):
        if not self.m_lower_px < self.spot_px < self.m_upper_px:
            raise ValueError("spot must lie between the two edge marks")
        if min(self.m_lower_err_px, self.m_upper_err_px, self.spot_err_px) <= 0:
            raise ValueError("fit standard errors must be positive")


@dataclass
class ScaleFactor:
    value: float  # px / um
    err: float
    n_sections: int
    per_section: np.ndarray

    @property
    def relative_err(self) -> float:
        return self.err / self.value


@dataclass
class LocalizationRecord:
    field_id: str
    q_h_um: float
    q_v_um: float
    dq_h_um: float
    dq_v_um: float
    dq_um: float
    dr_um: float
    snr_h: float
    snr_v: float
    fwhm_h_um: float
    fwhm_v_um: float
    section_h: SectionFit = field(repr=False, default=None)
    section_v: SectionFit = field(repr=False, default=None)
    scale: ScaleFactor = field(repr=False, default=None)


@dataclass
class LocalizeConfig:
    averaging_width: int = DEFAULT_AVERAGING_WIDTH
    detection_sigma: float = 5.0  # threshold above background in noise sigmas
    smoothing_px: int = 3
    min_separation_um: float = 2.0  # suppress secondary maxima closer than this
    edge_window_px: int = 16
    spot_window_px: int = 22
    edge_exclusion_um: float = 2.5  # keep spot search this far from the edges
    saturation_fraction: float = 0.95  # of the 16-bit dynamic range
    alignment_sigma_um: float = DEFAULT_ALIGNMENT_SIGMA_UM
    overetch_um: float = DEFAULT_OVERETCH_UM


# ---------------------------------------------------------------------------
# cross-sections


def extract_cross_section(image: PixelImage, spot_px: tuple[float, float],
                          axis: str, width: int = DEFAULT_AVERAGING_WIDTH
                          ) -> CrossSection:
    """Average ``width`` rows (or columns) centered on the spot into a 1-D
    profile along the requested axis."""
    x, y = spot_px
    if not (0 <= x < image.width and 0 <= y < image.height):
        raise ValueError("spot must lie inside the image")
    half = width // 2
    if axis == "horizontal":
        center = int(round(y))
        if center - half < 0 or center - half + width > image.height:
            raise ValueError("spot too close to the image edge for this width")
        band = image.intensity[center - half:center - half + width, :]
    elif axis == "vertical":
        center = int(round(x))
        if center - half < 0 or center - half + width > image.width:
            raise ValueError("spot too close to the image edge for this width")
        band = image.intensity[:, center - half:center - half + width].T
    else:
        raise ValueError("axis must be 'horizontal' or 'vertical'")
    return CrossSection(axis, width, band.mean(axis=0))


def _gauss_offset(x, background, amplitude, center, sigma):
    return background + amplitude * np.exp(-((x - center) ** 2)
                                           / (2.0 * sigma**2))


def _gauss_jac(x, background, amplitude, center, sigma):
    u = (x - center) / sigma
    e = np.exp(-0.5 * u**2)
    return np.column_stack([
        np.ones_like(x),
        e,
        amplitude * e * u / sigma,
        amplitude * e * u**2 / sigma,
    ])


def _fit_peak(xs: np.ndarray, ys: np.ndarray, center0: float, sigma0: float,
              baseline_var: float = 0.0, width: int = 1) -> FitResult:
    """Gaussian-plus-offset peak fit.

    When a noise baseline is given, a first unweighted pass supplies a model
    prediction from which per-point shot-noise variances are built
    (model-based weights avoid the low-count bias of weighting by the
    observed values), then the weighted fit runs once more."""
    b0 = float(np.percentile(ys, 20))
    a0 = max(float(ys.max() - b0), 1e-6)
    first = model_fit(_gauss_offset, xs, ys, [b0, a0, center0, sigma0],
                      jacobian=_gauss_jac)
    if baseline_var <= 0:
        return first
    model = _gauss_offset(xs, *first.params)
    var = np.clip(baseline_var
                  + np.clip(model - first.params[0], 0.0, None) / width,
                  1e-12, None)
    return model_fit(_gauss_offset, xs, ys, first.params, sigma=np.sqrt(var),
                     jacobian=_gauss_jac)


def _local_maxima_1d(profile: np.ndarray, threshold: float) -> np.ndarray:
    p = profile
    idx = np.nonzero((p[1:-1] >= p[:-2]) & (p[1:-1] > p[2:])
                     & (p[1:-1] > threshold))[0] + 1
    return idx


def fit_section(cs: CrossSection, spot_px: Optional[float] = None,
                config: LocalizeConfig = LocalizeConfig()) -> SectionFit:
    """Fit the two edge peaks and the interior spot of one cross-section.

    Each peak is fitted as a Gaussian with constant offset over a local
    window. Saturated edge ridges are fitted on their inner slope only. The
    SNR is the fitted spot amplitude over the standard deviation of the
    detrended profile in spot-free, edge-free margins.
    """
    profile = cs.profile
    n = profile.size
    smooth = uniform_filter(profile, 5, mode="nearest")
    background = float(np.median(smooth))
    noise = _robust_sigma(profile - smooth)
    threshold = background + 3.0 * max(noise, 1e-12)

    peaks = _local_maxima_1d(smooth, threshold)
    if peaks.size < 3 and spot_px is None:
        raise NoSpotError("need two edge peaks and a spot above the noise")
    # outer two maxima near the profile ends are the edge candidates
    lower0, upper0 = None, None
    if peaks.size:
        lower_candidates = peaks[peaks < 0.35 * n]
        upper_candidates = peaks[peaks > 0.65 * n]
        if lower_candidates.size:
            lower0 = int(lower_candidates[np.argmax(smooth[lower_candidates])])
        if upper_candidates.size:
            upper0 = int(upper_candidates[np.argmax(smooth[upper_candidates])])
    if lower0 is None or upper0 is None:
        raise NoSpotError("edge peaks not found near the profile ends")

    sigma0 = max(3.0, 0.01 * n)
    if spot_px is None:
        interior = peaks[(peaks > lower0 + 3 * config.edge_window_px // 2)
                         & (peaks < upper0 - 3 * config.edge_window_px // 2)]
        if interior.size == 0:
            raise NoSpotError("no interior spot between the edge peaks")
        spot0 = int(interior[np.argmax(smooth[interior])])
    else:
        spot0 = int(round(spot_px))

    baseline = _margin_noise(profile, float(lower0), float(upper0),
                             float(spot0), 4.0 * sigma0,
                             cs.averaging_width)
    baseline_var = max(baseline, 1e-6) ** 2
    lower_fit = _fit_edge(profile, lower0, config, sigma0, side="lower",
                          baseline_var=baseline_var)
    upper_fit = _fit_edge(profile, upper0, config, sigma0, side="upper",
                          baseline_var=baseline_var)
    w = config.spot_window_px
    lo, hi = max(spot0 - w, 0), min(spot0 + w + 1, n)
    xs = np.arange(lo, hi, dtype=float)
    spot_fit = _fit_peak(xs, profile[lo:hi], float(spot0), sigma0 * 1.3,
                         baseline_var, cs.averaging_width)

    converged = lower_fit.converged and upper_fit.converged and \
        spot_fit.converged
    if not converged:
        warnings.warn("one or more section sub-fits did not converge",
                      RuntimeWarning, stacklevel=2)

    _, amp, center, sig = spot_fit.params
    sig = abs(sig)
    snr = amp / max(_margin_noise(profile, lower_fit.params[2],
                                  upper_fit.params[2], center, sig,
                                  cs.averaging_width), 1e-12)
    fwhm = 2.0 * np.sqrt(2.0 * np.log(2.0)) * sig
    fwhm_err = 2.0 * np.sqrt(2.0 * np.log(2.0)) * spot_fit.std_errors[3]
    return SectionFit(
        m_lower_px=float(lower_fit.params[2]),
        m_lower_err_px=float(max(lower_fit.std_errors[2], 1e-12)),
        m_upper_px=float(upper_fit.params[2]),
        m_upper_err_px=float(max(upper_fit.std_errors[2], 1e-12)),
        spot_px=float(center),
        spot_err_px=float(max(spot_fit.std_errors[2], 1e-12)),
        fwhm_px=float(fwhm),
        fwhm_err_px=float(fwhm_err),
        amplitude=float(amp),
        background=float(spot_fit.params[0]),
        snr=float(snr),
        converged=converged,
    )


def _fit_edge(profile: np.ndarray, peak0: int, config: LocalizeConfig,
              sigma0: float, side: str, baseline_var: float = 0.0
              ) -> FitResult:
    n = profile.size
    w = config.edge_window_px
    lo, hi = max(peak0 - w, 0), min(peak0 + w + 1, n)
    xs = np.arange(lo, hi, dtype=float)
    ys = profile[lo:hi]
    saturation = config.saturation_fraction * PGM_MAXVAL
    if ys.max() >= saturation:
        # keep only the unsaturated inner slope: the side facing the field
        keep = ys < saturation
        inner = xs > peak0 if side == "lower" else xs < peak0
        keep &= inner | (np.abs(xs - peak0) <= 1)
        xs, ys = xs[keep], ys[keep]
    return _fit_peak(xs, ys, float(peak0), sigma0, baseline_var,
                     config.averaging_width)


def _robust_sigma(values: np.ndarray) -> float:
    mad = np.median(np.abs(values - np.median(values)))
    return float(1.4826 * mad)


def _margin_noise(profile: np.ndarray, m_lower: float, m_upper: float,
                  spot: float, spot_sigma: float, width: int = 1) -> float:
    """Residual noise in margins away from the spot and both edges.

    Estimated from first differences of the margin samples, which cancels
    smooth structure (edge tails, neighbor spots) and keeps the white
    component; floored by the analytic shot noise of the margin level,
    which survives the quantization of photon-starved profiles."""
    x = np.arange(profile.size, dtype=float)
    sel = (x > m_lower + 4 * spot_sigma) & (x < m_upper - 4 * spot_sigma) \
        & (np.abs(x - spot) > 4 * spot_sigma)
    if sel.sum() < 10:
        return _robust_sigma(profile)
    seg = profile[sel]
    d = np.diff(seg)
    # robust MAD overshoots on quantized low-count data, the plain std
    # overshoots when a neighbor spot crosses the margin; the smaller of the
    # two tracks the white level in both regimes
    diff_sigma = min(_robust_sigma(d), float(np.std(d, ddof=1))) / np.sqrt(2.0)
    floor = np.sqrt(max(float(np.median(seg)), 0.0) / width)
    return max(diff_sigma, floor)


# ---------------------------------------------------------------------------
# scaling factor and positions


def scale_factor(fits: Sequence[SectionFit], field_size_um: float
                 ) -> ScaleFactor:
    """Pixels-per-micrometer from the edge separations of all sections.

    The value is the mean of the per-section factors |M_u - M_l| / F; its
    uncertainty is the standard error of that mean (sample standard
    deviation over sqrt(number of sections))."""
    if field_size_um <= 0:
        raise ValueError("field size must be positive")
    if len(fits) < 2:
        raise ValueError("need at least two sections to estimate the "
                         "scale uncertainty")
    per = np.array([abs(f.m_upper_px - f.m_lower_px) / field_size_um
                    for f in fits])
    value = float(per.mean())
    err = float(per.std(ddof=1) / np.sqrt(per.size))
    return ScaleFactor(value, err, per.size, per)


def section_scale_uncertainty(fit: SectionFit, field_size_um: float,
                              alignment_sigma_um: float = DEFAULT_ALIGNMENT_SIGMA_UM,
                              overetch_um: float = DEFAULT_OVERETCH_UM) -> float:
    """Single-section scale uncertainty diagnostic (px/um).

    Propagates both edge-fit errors and the field-size uncertainty
    ``dF = sqrt(dC^2 + (2*dx)^2)`` (alignment plus double-sided over-etch)
    through P_i = |M_u - M_l| / F."""
    df_um = float(np.hypot(alignment_sigma_um, 2.0 * overetch_um))
    sep = abs(fit.m_upper_px - fit.m_lower_px)
    return float(np.sqrt(
        (fit.m_upper_err_px / field_size_um) ** 2
        + (fit.m_lower_err_px / field_size_um) ** 2
        + (sep * df_um / field_size_um**2) ** 2
    ))


def position_1d(fit: SectionFit, scale: ScaleFactor) -> tuple[float, float]:
    """Spot position (um) relative to the lower/left edge, with its
    uncertainty from the spot fit, the edge fit and the scale factor."""
    p = scale.value
    q = (fit.spot_px - fit.m_lower_px) / p
    dq = np.sqrt(
        (fit.spot_err_px / p) ** 2
        + (fit.m_lower_err_px / p) ** 2
        + ((fit.spot_px - fit.m_lower_px) * scale.err / p**2) ** 2
    )
    return float(q), float(dq)


def combine_2d(dq_h_um: float, dq_v_um: float, dc_um: float
               ) -> tuple[float, float]:
    """Quadrature combination of the axis uncertainties and, including the
    lithography alignment term, the total placement uncertainty."""
    if min(dq_h_um, dq_v_um, dc_um) < 0:
        raise ValueError("uncertainties must be nonnegative")
    dq = float(np.hypot(dq_h_um, dq_v_um))
    dr = float(np.hypot(dq, dc_um))
    return dq, dr


# ---------------------------------------------------------------------------
# whole-field pipeline


def _detect_outline(smooth: np.ndarray) -> tuple[int, int, int, int]:
    """Approximate (left, right, bottom, top) edge pixel positions from the
    row/column mean profiles."""
    edges = []
    for axis in (0, 1):
        prof = smooth.mean(axis=axis)
        base = np.median(prof)
        sigma = _robust_sigma(prof - base)
        idx = _local_maxima_1d(prof, base + 4.0 * max(sigma, 1e-12))
        if idx.size < 2:
            raise OutlineError("field outline not found")
        edges.append((int(idx[0]), int(idx[-1])))
    (left, right), (bottom, top) = edges
    if right - left < 16 or top - bottom < 16:
        raise OutlineError("field outline not found")
    return left, right, bottom, top


def detect_spots(image: PixelImage, config: LocalizeConfig = LocalizeConfig()
                 ) -> list[tuple[int, int]]:
    """Local maxima above background + k*sigma after mean smoothing, inside
    the field and away from its edges; brightest first, raster order on
    ties."""
    smooth = uniform_filter(image.intensity, config.smoothing_px,
                            mode="nearest")
    left, right, bottom, top = _detect_outline(smooth)
    guard = int(round(config.edge_exclusion_um / image.pixel_pitch_um))
    interior = smooth[bottom + guard:top - guard, left + guard:right - guard]
    if interior.size == 0:
        return []
    background = float(np.median(interior))
    # robust estimate with an analytic shot-noise floor: at photon-starved
    # levels the MAD of a quantized Poisson field collapses
    k2 = config.smoothing_px**2
    floor = np.sqrt(max(background, 0.0) / k2)
    sigma = max(_robust_sigma(interior - background), floor, 1e-12)
    threshold = background + config.detection_sigma * sigma
    c = interior
    is_max = np.ones_like(c, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = np.roll(np.roll(c, dy, axis=0), dx, axis=1)
            is_max &= (c > shifted) | ((c == shifted) & ((dy, dx) < (0, 0)))
    is_max &= c > threshold
    is_max[0, :] = is_max[-1, :] = False
    is_max[:, 0] = is_max[:, -1] = False
    ii, jj = np.nonzero(is_max)
    amps = c[ii, jj]
    order = np.lexsort((jj, ii, -amps))  # amplitude desc, then raster
    # greedy suppression: a spot is at least one PSF wide, so secondary
    # maxima riding on a brighter spot are shot noise, not emitters
    min_sep = config.min_separation_um / image.pixel_pitch_um
    kept: list[tuple[int, int]] = []
    for k in order:
        x, y = int(jj[k] + left + guard), int(ii[k] + bottom + guard)
        if all((x - kx) ** 2 + (y - ky) ** 2 >= min_sep**2 for kx, ky in kept):
            kept.append((x, y))
    return kept


def localize_field(image: PixelImage, field_size_um: float = 50.0,
                   alignment_sigma_um: float = DEFAULT_ALIGNMENT_SIGMA_UM,
                   config: LocalizeConfig = LocalizeConfig(),
                   field_id: str = "field-0"
                   ) -> list[LocalizationRecord]:
    """Full pipeline for one map: detect spots, cut two cross-sections per
    spot, fit, build the per-map scale factor from all sections, and emit
    one record per spot with the complete uncertainty budget. Records are
    sorted by descending mean SNR; an empty list means no spots."""
    spots = detect_spots(image, config)
    sections: list[tuple[SectionFit, SectionFit]] = []
    for (sx, sy) in spots:
        try:
            cs_h = extract_cross_section(image, (sx, sy), "horizontal",
                                         config.averaging_width)
            cs_v = extract_cross_section(image, (sx, sy), "vertical",
                                         config.averaging_width)
            fit_h = fit_section(cs_h, spot_px=sx, config=config)
            fit_v = fit_section(cs_v, spot_px=sy, config=config)
        except (NoSpotError, ValueError):
            continue
        if not _accept_sections(fit_h, fit_v, field_size_um):
            continue
        sections.append((fit_h, fit_v))
    if not sections:
        return []
    all_fits = [f for pair in sections for f in pair]
    scale = scale_factor(all_fits, field_size_um)
    records = []
    for (fit_h, fit_v) in sections:
        q_h, dq_h = position_1d(fit_h, scale)
        q_v, dq_v = position_1d(fit_v, scale)
        dq, dr = combine_2d(dq_h, dq_v, alignment_sigma_um)
        records.append(LocalizationRecord(
            field_id=field_id,
            q_h_um=q_h, q_v_um=q_v,
            dq_h_um=dq_h, dq_v_um=dq_v,
            dq_um=dq, dr_um=dr,
            snr_h=fit_h.snr, snr_v=fit_v.snr,
            fwhm_h_um=fit_h.fwhm_px / scale.value,
            fwhm_v_um=fit_v.fwhm_px / scale.value,
            section_h=fit_h, section_v=fit_v, scale=scale,
        ))
    records.sort(key=lambda r: -(r.snr_h + r.snr_v) / 2.0)
    return records


def _accept_sections(fit_h: SectionFit, fit_v: SectionFit,
                     field_size_um: float) -> bool:
    """Reject detections whose fits are unphysical: shot-noise clumps fit
    far narrower than the instrument response, and runaway fits far wider."""
    scale_rough = 0.5 * (abs(fit_h.m_upper_px - fit_h.m_lower_px)
                         + abs(fit_v.m_upper_px - fit_v.m_lower_px)) \
        / field_size_um
    for f in (fit_h, fit_v):
        fwhm_um = f.fwhm_px / scale_rough
        if not 0.8 <= fwhm_um <= 3.2:
            return False
        if f.snr < 4.0 or not f.converged:
            return False
    return True


# ---------------------------------------------------------------------------
# campaign summaries


def summarize_records(records: Sequence[LocalizationRecord]) -> dict:
    """Campaign statistics: medians and percentiles of the per-axis fit
    uncertainties, alignment-mark uncertainties, widths and totals."""
    if not records:
        return {"n_records": 0}

    def nm(values):
        return [v * 1e3 for v in values]

    dq_spot_h = nm([r.section_h.spot_err_px / r.scale.value for r in records])
    dq_spot_v = nm([r.section_v.spot_err_px / r.scale.value for r in records])
    dm_h = nm([r.section_h.m_lower_err_px / r.scale.value for r in records])
    dm_v = nm([r.section_v.m_lower_err_px / r.scale.value for r in records])
    dq = nm([r.dq_um for r in records])
    dr = nm([r.dr_um for r in records])
    fwhm_h = [r.fwhm_h_um for r in records]
    fwhm_v = [r.fwhm_v_um for r in records]
    snr = [(r.snr_h + r.snr_v) / 2.0 for r in records]
    rel_scale = [r.scale.relative_err for r in records]

    def stats(v):
        arr = np.asarray(v, dtype=float)
        return {
            "median": float(np.median(arr)),
            "p10": float(np.percentile(arr, 10)),
            "p90": float(np.percentile(arr, 90)),
            "mean": float(arr.mean()),
        }

    return {
        "n_records": len(records),
        "spot_fit_err_nm": {"horizontal": stats(dq_spot_h),
                            "vertical": stats(dq_spot_v)},
        "mark_fit_err_nm": {"horizontal": stats(dm_h),
                            "vertical": stats(dm_v)},
        "position_err_2d_nm": stats(dq),
        "placement_err_2d_nm": stats(dr),
        "fwhm_um": {"horizontal": stats(fwhm_h), "vertical": stats(fwhm_v)},
        "snr": stats(snr),
        "scale_relative_err": stats(rel_scale),
    }
