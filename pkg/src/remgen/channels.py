"""Path-loss models, EIRP estimation, and the RSRP link budget.

The empirical models follow their published parameterizations: the
urban-macro dual-slope model from 3GPP TR 38.901 (variant B) and the
WINNER II C2 NLOS curve from deliverable D1.1.2. Out-of-range geometry
is clamped to the validity bounds with a logged warning (vehicular
traces routinely dip below the 10 m floor).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .raypath import PathProfile, is_los, trace

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
N_SC = 12  # subcarriers per PRB in conventional LTE

_PRB_TABLE = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}

# breakpoint-distance propagation constant pinned by TR 38.901
_UMA_C = 3.0e8
_UMA_H_ENV_M = 1.0  # effective environment height for the breakpoint

DEFAULT_SHADOW_BETA_DB_PER_WALL = 9.0
DEFAULT_SHADOW_GAMMA_DB_PER_M = 0.4


@dataclass(frozen=True)
class LinkBudget:
    eirp_dbm: float
    path_loss_db: float
    correction_db: float
    n_prb: int
    n_sc: int = N_SC

    def __post_init__(self):
        if self.n_sc != N_SC:
            raise ValueError(f"n_sc is fixed to {N_SC} for LTE")
        if self.n_prb not in _PRB_TABLE.values():
            raise ValueError(f"n_prb {self.n_prb} not a supported LTE PRB count")


@dataclass(frozen=True)
class ChannelParams:
    freq_mhz: float
    h_bs_m: float
    h_ut_m: float
    los_mode: str = "geometric"  # geometric | probabilistic_expected
    shadowing_beta_db_per_wall: float = DEFAULT_SHADOW_BETA_DB_PER_WALL
    shadowing_gamma_db_per_m: float = DEFAULT_SHADOW_GAMMA_DB_PER_M
    nakagami_m: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.freq_mhz <= 0:
            raise ValueError("freq_mhz must be > 0")
        if not self.h_bs_m > self.h_ut_m > 0:
            raise ValueError("need h_bs_m > h_ut_m > 0")
        if self.shadowing_beta_db_per_wall < 0 or self.shadowing_gamma_db_per_m < 0:
            raise ValueError("shadowing coefficients must be >= 0")
        if self.los_mode not in ("geometric", "probabilistic_expected"):
            raise ValueError(f"unknown los_mode {self.los_mode!r}")


def n_prb_from_bandwidth(bandwidth_mhz) -> int:
    for bw, n in _PRB_TABLE.items():
        if abs(bandwidth_mhz - bw) < 1e-9:
            return n
    raise ValueError(f"unsupported LTE bandwidth {bandwidth_mhz} MHz")


def rsrp(budget: LinkBudget) -> float:
    """Per-resource-element received power from the link budget."""
    return (budget.eirp_dbm - 10.0 * math.log10(budget.n_prb * budget.n_sc)
            - budget.path_loss_db + budget.correction_db)


def friis(d_m, freq_mhz) -> float:
    if d_m <= 0:
        raise ValueError("friis: distance must be > 0")
    f_hz = freq_mhz * 1e6
    return 20.0 * math.log10(4.0 * math.pi * d_m * f_hz / SPEED_OF_LIGHT)


def two_ray_ground(d_m, freq_mhz, h_tx_m, h_rx_m) -> float:
    if d_m <= 0 or h_tx_m <= 0 or h_rx_m <= 0:
        raise ValueError("two_ray_ground: inputs must be > 0")
    lam = SPEED_OF_LIGHT / (freq_mhz * 1e6)
    d_cross = 4.0 * math.pi * h_tx_m * h_rx_m / lam
    if d_m <= d_cross:
        return friis(d_m, freq_mhz)
    return 40.0 * math.log10(d_m) - 20.0 * math.log10(h_tx_m * h_rx_m)


def nakagami(base_loss_db, m=2.0, rng=None) -> float:
    """Nakagami-m fading on top of a base loss.

    Deterministic (rng=None): the base loss itself, since the fading power
    gain has unit mean. Stochastic: subtracts 10*log10(g) with
    g ~ Gamma(m, 1/m) drawn from the caller's generator.
    """
    if m < 0.5:
        raise ValueError("nakagami: m must be >= 0.5")
    if rng is None:
        return base_loss_db
    g = rng.gamma(shape=m, scale=1.0 / m)
    return base_loss_db - 10.0 * math.log10(g)


def uma_b(d_2d_m, d_3d_m, freq_ghz, h_bs_m, h_ut_m, los: bool) -> float:
    """Urban-macro dual-slope path loss (3GPP variant B)."""
    if d_2d_m <= 0 or d_3d_m <= 0:
        raise ValueError("uma_b: distances must be > 0")
    if freq_ghz <= 0 or h_bs_m <= 0 or h_ut_m <= 0:
        raise ValueError("uma_b: freq and heights must be > 0")
    d2d = d_2d_m
    if d2d < 10.0 or d2d > 5000.0:
        log.warning("uma_b: d_2d=%.2f m outside [10, 5000], clamping", d2d)
        d2d = min(max(d2d, 10.0), 5000.0)
    hut = h_ut_m
    if hut < 1.5 or hut > 22.5:
        log.warning("uma_b: h_ut=%.2f m outside [1.5, 22.5], clamping", hut)
        hut = min(max(hut, 1.5), 22.5)
    d3d = max(d_3d_m, d2d)

    pl_los = _uma_los(d2d, d3d, freq_ghz, h_bs_m, hut)
    if los:
        return pl_los
    pl_nlos = (13.54 + 39.08 * math.log10(d3d) + 20.0 * math.log10(freq_ghz)
               - 0.6 * (hut - 1.5))
    return max(pl_los, pl_nlos)


def _uma_los(d2d, d3d, freq_ghz, h_bs, h_ut) -> float:
    f_hz = freq_ghz * 1e9
    d_bp = 4.0 * (h_bs - _UMA_H_ENV_M) * (h_ut - _UMA_H_ENV_M) * f_hz / _UMA_C
    if d2d <= d_bp:
        return 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(freq_ghz)
    return (28.0 + 40.0 * math.log10(d3d) + 20.0 * math.log10(freq_ghz)
            - 9.0 * math.log10(d_bp ** 2 + (h_bs - h_ut) ** 2))


def uma_los_probability(d_2d_m, h_ut_m) -> float:
    """Distance-dependent LOS probability for the urban-macro prototype."""
    if d_2d_m < 0:
        raise ValueError("uma_los_probability: d_2d must be >= 0")
    if d_2d_m <= 18.0:
        return 1.0
    p = 18.0 / d_2d_m + math.exp(-d_2d_m / 63.0) * (1.0 - 18.0 / d_2d_m)
    if h_ut_m > 13.0:
        c = ((min(h_ut_m, 23.0) - 13.0) / 10.0) ** 1.5
        p *= 1.0 + c * 1.25 * (d_2d_m / 100.0) ** 3 * math.exp(-d_2d_m / 150.0)
    return min(p, 1.0)


def winner_c2_nlos(d_m, freq_ghz, h_bs_m, h_ut_m=1.5) -> float:
    """WINNER II urban-macro NLOS curve (C2)."""
    if d_m <= 0 or h_bs_m <= 0:
        raise ValueError("winner_c2_nlos: d and h_bs must be > 0")
    if freq_ghz <= 0:
        raise ValueError("winner_c2_nlos: freq must be > 0")
    lh = math.log10(h_bs_m)
    return ((44.9 - 6.55 * lh) * math.log10(d_m) + 34.46 + 5.83 * lh
            + 23.0 * math.log10(freq_ghz / 5.0))


def obstacle_shadowing(base_loss_db, profile: PathProfile,
                       beta_db_per_wall=DEFAULT_SHADOW_BETA_DB_PER_WALL,
                       gamma_db_per_m=DEFAULT_SHADOW_GAMMA_DB_PER_M) -> float:
    """Deterministic excess loss: per-wall plus per-meter building penetration.

    Each merged penetration run contributes an entry and an exit wall.
    """
    n_walls = 2 * profile.n_obs
    return base_loss_db + beta_db_per_wall * n_walls + gamma_db_per_m * profile.d_obs


# ---------------------------------------------------------------------------
# scenario-aware helpers


def heights_above_ground(s, cell, rx) -> tuple:
    """(h_bs, h_ut) above local ground, floored at small positive values."""
    h_bs = cell.position.z - s.ground_z(cell.position.x, cell.position.y)
    h_ut = rx.z - s.ground_z(rx.x, rx.y)
    return max(h_bs, 1.0), max(h_ut, 0.5)


def baseline_path_loss(s, cell, rx, profile: PathProfile = None,
                       los_mode: str = "geometric") -> float:
    """Urban-macro baseline loss L for a concrete link in a scenario."""
    if profile is None and los_mode == "geometric":
        profile = trace(s, cell.position, rx)
    dx = rx.x - cell.position.x
    dy = rx.y - cell.position.y
    dz = rx.z - cell.position.z
    d2d = math.hypot(dx, dy)
    d3d = math.sqrt(dx * dx + dy * dy + dz * dz)
    h_bs, h_ut = heights_above_ground(s, cell, rx)
    f_ghz = cell.freq_mhz / 1000.0
    if los_mode == "geometric":
        return uma_b(d2d, d3d, f_ghz, h_bs, h_ut, los=is_los(profile))
    if los_mode == "probabilistic_expected":
        p = uma_los_probability(d2d, h_ut)
        pl_los = uma_b(d2d, d3d, f_ghz, h_bs, h_ut, los=True)
        pl_nlos = uma_b(d2d, d3d, f_ghz, h_bs, h_ut, los=False)
        return p * pl_los + (1.0 - p) * pl_nlos
    raise ValueError(f"unknown los_mode {los_mode!r}")


def fit_eirp_closed_form(p_rx_dbm, losses_db) -> float:
    """Minimizer of the mean squared residual (P_RX - P_TX + L): the mean."""
    p_rx = np.asarray(p_rx_dbm, dtype=np.float64)
    losses = np.asarray(losses_db, dtype=np.float64)
    if p_rx.size == 0:
        raise InsufficientDataError("fit_eirp: no measurements")
    return float(np.mean(p_rx + losses))


def fit_eirp(s, cell, measurements, los_mode: str = "geometric") -> float:
    """Estimate the cell EIRP from measured RSRP against the baseline model.

    Measured RSRP rows are converted to received signal strength via the
    PRB/subcarrier term before fitting.
    """
    rows = [m for m in measurements if m.cell_id == cell.id]
    if not rows:
        raise InsufficientDataError(f"fit_eirp: no measurements for cell {cell.id!r}")
    prb_term = 10.0 * math.log10(n_prb_from_bandwidth(cell.bandwidth_mhz) * N_SC)
    p_rx = [m.rsrp_dbm + prb_term for m in rows]
    losses = [baseline_path_loss(s, cell, m.position, los_mode=los_mode) for m in rows]
    return fit_eirp_closed_form(p_rx, losses)


def fit_all_eirp(s, measurements, los_mode: str = "geometric"):
    """Fit every cell with data; cells without measurements keep eirp unset."""
    fitted = []
    for cell in s.cells:
        try:
            eirp = fit_eirp(s, cell, measurements, los_mode=los_mode)
        except InsufficientDataError:
            log.warning("cell %s: no measurements, EIRP left unset", cell.id)
            fitted.append(cell)
            continue
        fitted.append(type(cell)(cell.id, cell.mno, cell.position, cell.freq_mhz,
                                 cell.bandwidth_mhz, eirp))
    return s.with_cells(fitted)
