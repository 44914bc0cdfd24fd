"""Lens-collection integrals over tabulated dipole far fields.

The radiation patterns and total emitted powers are produced upstream by an
electromagnetic solver and ingested here as tabulated grids; this module
only integrates them: power collected within a numerical aperture, the
circular-dipole (trion) combination of the two in-plane orientations, and
displacement sweeps of Purcell factor and extraction efficiency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass
class FarFieldGrid:
    """Tabulated power per unit solid angle on a (theta, phi) grid.

    ``theta_rad`` spans [0, pi/2] (emission hemisphere), ``phi_rad`` lives in
    [0, 2*pi); the grid closes periodically in phi during integration.
    """

    theta_rad: np.ndarray
    phi_rad: np.ndarray
    power_density: np.ndarray  # shape (n_theta, n_phi)
    total_power: float
    dipole: str = "r"  # "r" | "phi"
    displacement_um: float = 0.0

    def __post_init__(self):
        self.theta_rad = np.asarray(self.theta_rad, dtype=float)
        self.phi_rad = np.asarray(self.phi_rad, dtype=float)
        self.power_density = np.asarray(self.power_density, dtype=float)
        for grid, name in ((self.theta_rad, "theta"), (self.phi_rad, "phi")):
            if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} grid must be strictly increasing")
        if self.theta_rad[0] < 0 or self.theta_rad[-1] > np.pi / 2 + 1e-9:
            raise ValueError("theta must lie in [0, pi/2]")
        if self.phi_rad[0] < 0 or self.phi_rad[-1] >= 2 * np.pi:
            pass  # phi endpoints are free within one turn
        if self.power_density.shape != (self.theta_rad.size, self.phi_rad.size):
            raise ValueError("power density must be shaped (n_theta, n_phi)")
        if np.any(self.power_density < 0):
            raise ValueError("power density must be nonnegative")
        if self.total_power <= 0:
            raise ValueError("total power must be positive")


def _phi_closed(grid: FarFieldGrid) -> tuple[np.ndarray, np.ndarray]:
    """Close the phi direction periodically for full-turn integration."""
    phi = np.append(grid.phi_rad, grid.phi_rad[0] + 2 * np.pi)
    pff = np.concatenate([grid.power_density,
                          grid.power_density[:, :1]], axis=1)
    return phi, pff


def lens_power(grid: FarFieldGrid, numerical_aperture: float) -> float:
    """Power collected by a lens: the solid-angle integral of the far field
    over the cone ``theta < asin(NA)``, by trapezoidal quadrature with the
    ``sin(theta)`` weight. Value never exceeds the hemisphere integral."""
    if not 0.0 < numerical_aperture < 1.0:
        raise ValueError("numerical aperture must lie in (0, 1)")
    theta_na = float(np.arcsin(numerical_aperture))
    if theta_na > grid.theta_rad[-1] + 1e-12:
        raise ValueError("aperture cone extends beyond the tabulated grid")
    inside = grid.theta_rad < theta_na
    if inside.sum() < 8:
        raise ValueError("fewer than eight theta samples inside the aperture "
                         "cone: grid too coarse")
    phi, pff = _phi_closed(grid)
    ring = np.trapezoid(pff, phi, axis=1)  # per-theta azimuthal integral
    theta = grid.theta_rad
    # cut the grid exactly at theta_NA, interpolating the boundary ring
    t_in = np.append(theta[inside], theta_na)
    ring_na = np.interp(theta_na, theta, ring)
    f_in = np.append(ring[inside], ring_na)
    return float(np.trapezoid(f_in * np.sin(t_in), t_in))


def hemisphere_power(grid: FarFieldGrid) -> float:
    phi, pff = _phi_closed(grid)
    ring = np.trapezoid(pff, phi, axis=1)
    return float(np.trapezoid(ring * np.sin(grid.theta_rad), grid.theta_rad))


def trion_power(power_r: float, power_phi: float) -> float:
    """Emitted power of the circular trion dipole: the mean of the two
    in-plane linear-dipole powers."""
    if power_r < 0 or power_phi < 0:
        raise ValueError("powers must be nonnegative")
    return 0.5 * (power_r + power_phi)


def _check_matching(g_r: FarFieldGrid, g_phi: FarFieldGrid) -> None:
    if g_r.theta_rad.shape != g_phi.theta_rad.shape or \
            not np.allclose(g_r.theta_rad, g_phi.theta_rad) or \
            g_r.phi_rad.shape != g_phi.phi_rad.shape or \
            not np.allclose(g_r.phi_rad, g_phi.phi_rad):
        raise ValueError("far-field grids do not match")
    if abs(g_r.displacement_um - g_phi.displacement_um) > 1e-9:
        raise ValueError("far fields belong to different displacements")


def trion_extraction(g_r: FarFieldGrid, g_phi: FarFieldGrid,
                     numerical_aperture: float) -> float:
    """Trion extraction efficiency into the aperture:
    lens power summed over both dipole orientations divided by the summed
    total powers. Bounded by the two single-dipole efficiencies."""
    _check_matching(g_r, g_phi)
    p_lens = lens_power(g_r, numerical_aperture) \
        + lens_power(g_phi, numerical_aperture)
    return float(p_lens / (g_r.total_power + g_phi.total_power))


@dataclass
class SweepRow:
    displacement_um: float
    purcell: float
    extraction: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    half_displacement_um: Optional[float]


def displacement_sweep(rows: Sequence[tuple[float, FarFieldGrid, FarFieldGrid]],
                       numerical_aperture: float,
                       bulk_power: float) -> SweepResult:
    """Purcell factor and trion extraction versus emitter displacement.

    ``rows`` holds (displacement, r-dipole grid, phi-dipole grid) sorted with
    the on-axis point first. The Purcell factor is the trion power relative
    to the bulk emitted power. Also reports the displacement where the
    Purcell factor falls to half its on-axis value (linear interpolation),
    absent if it never does.
    """
    if bulk_power <= 0:
        raise ValueError("bulk power must be positive")
    disp = [r[0] for r in rows]
    if len(rows) < 1 or disp[0] != 0.0 or np.any(np.diff(disp) <= 0):
        raise ValueError("displacements must increase strictly from zero")
    out = []
    for rho, g_r, g_phi in rows:
        fp = trion_power(g_r.total_power, g_phi.total_power) / bulk_power
        eta = trion_extraction(g_r, g_phi, numerical_aperture)
        out.append(SweepRow(rho, float(fp), float(eta)))
    half = out[0].purcell / 2.0
    rho_half = None
    for prev, cur in zip(out, out[1:]):
        if prev.purcell >= half >= cur.purcell:
            frac = (prev.purcell - half) / (prev.purcell - cur.purcell)
            rho_half = prev.displacement_um + frac * (
                cur.displacement_um - prev.displacement_um)
            break
    return SweepResult(out, rho_half)


# ---------------------------------------------------------------------------
# file format: CSV matrix (rows theta_deg, columns phi_deg) + JSON sidecar


def write_farfield(path, grid: FarFieldGrid) -> None:
    path = Path(path)
    header = "theta_deg," + ",".join(f"{np.degrees(p):.6f}" for p in grid.phi_rad)
    body = np.column_stack([np.degrees(grid.theta_rad), grid.power_density])
    np.savetxt(path, body, delimiter=",", header=header, comments="")
    sidecar = {
        "dipole": grid.dipole,
        "total_power": grid.total_power,
        "rho_um": grid.displacement_um,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def read_farfield(path) -> FarFieldGrid:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise FileNotFoundError(f"missing JSON sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[0] != "theta_deg":
        raise ValueError(f"{path}: first header cell must be 'theta_deg'")
    phi_deg = np.array([float(v) for v in header[1:]])
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FarFieldGrid(
        theta_rad=np.radians(body[:, 0]),
        phi_rad=np.radians(phi_deg),
        power_density=body[:, 1:],
        total_power=float(meta["total_power"]),
        dipole=meta.get("dipole", "r"),
        displacement_um=float(meta.get("rho_um", 0.0)),
    )
