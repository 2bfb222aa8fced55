"""RSRP predictors: analytical channel models and the learned corrector.

Every predictor shares one contract: predict(scenario, cell, rx) gives
the RSRP in dBm at a receiver position via the link budget
eirp - 10*log10(n_prb * n_sc) - L (+ correction for the learned model).
The cell's EIRP must be fitted first.
"""

from __future__ import annotations

import math

import numpy as np

from . import channels, features, raypath
from .errors import MissingPrerequisiteError
from .neural import load_checkpoint
from .imaging import concat_vertical

ANALYTICAL_KINDS = ("friis", "two-ray", "nakagami", "uma-b", "winner-c2", "obstacle")


def _budget_terms(cell):
    if cell.eirp_dbm is None:
        raise MissingPrerequisiteError(
            f"cell {cell.id!r} has no fitted EIRP; run the EIRP fit first")
    n_prb = channels.n_prb_from_bandwidth(cell.bandwidth_mhz)
    return cell.eirp_dbm - 10.0 * math.log10(n_prb * channels.N_SC)


class AnalyticalPredictor:
    """Closed-form path-loss models behind the shared predictor contract.

    Deterministic throughout; `nakagami` uses the unit-mean-power fading
    convention unless a seeded generator is supplied.
    """

    def __init__(self, kind, rng=None, nakagami_m=2.0,
                 beta_db_per_wall=channels.DEFAULT_SHADOW_BETA_DB_PER_WALL,
                 gamma_db_per_m=channels.DEFAULT_SHADOW_GAMMA_DB_PER_M):
        if kind not in ANALYTICAL_KINDS:
            raise ValueError(f"unknown analytical predictor {kind!r}")
        self.kind = kind
        self.rng = rng
        self.nakagami_m = nakagami_m
        self.beta = beta_db_per_wall
        self.gamma = gamma_db_per_m

    def path_loss(self, s, cell, rx):
        dx = rx.x - cell.position.x
        dy = rx.y - cell.position.y
        dz = rx.z - cell.position.z
        d3d = math.sqrt(dx * dx + dy * dy + dz * dz)
        f_mhz = cell.freq_mhz
        if self.kind == "friis":
            return channels.friis(d3d, f_mhz)
        if self.kind == "nakagami":
            return channels.nakagami(channels.friis(d3d, f_mhz),
                                     m=self.nakagami_m, rng=self.rng)
        if self.kind == "two-ray":
            h_bs, h_ut = channels.heights_above_ground(s, cell, rx)
            return channels.two_ray_ground(d3d, f_mhz, h_bs, h_ut)
        if self.kind == "winner-c2":
            h_bs, h_ut = channels.heights_above_ground(s, cell, rx)
            return channels.winner_c2_nlos(d3d, f_mhz / 1000.0, h_bs, h_ut)
        if self.kind == "uma-b":
            return channels.baseline_path_loss(s, cell, rx)
        # obstacle: urban-macro baseline plus per-wall/per-meter excess
        profile = raypath.trace(s, cell.position, rx)
        base = channels.baseline_path_loss(s, cell, rx, profile=profile)
        return channels.obstacle_shadowing(base, profile, self.beta, self.gamma)

    def predict(self, s, cell, rx):
        return _budget_terms(cell) - self.path_loss(s, cell, rx)

    def predict_batch(self, s, cell, rx_list):
        return np.array([self.predict(s, cell, rx) for rx in rx_list], dtype=np.float64)


class DragonPredictor:
    """Learned correction on top of the urban-macro baseline."""

    def __init__(self, checkpoint):
        self.checkpoint = checkpoint
        self.norm_stats = checkpoint.norm_stats

    @classmethod
    def from_checkpoint(cls, path):
        return cls(load_checkpoint(path))

    def predict_batch(self, s, cell, rx_list, batch_size=128):
        samples = [features.extract_sample(s, cell, rx) for rx in rx_list]
        return self.predict_samples(cell, samples, batch_size=batch_size)

    def predict_samples(self, cell, samples, batch_size=128):
        """RSRP for pre-extracted samples (skips re-tracing/rendering)."""
        base = _budget_terms(cell)
        out = np.empty(len(samples), dtype=np.float64)
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            imgs = np.stack([concat_vertical(x.images) for x in chunk])[:, None, :, :]
            feats = np.stack([features.apply_normalization(x.features, self.norm_stats)
                              for x in chunk])
            delta = self.checkpoint.predict_delta(imgs, feats)
            for k, x in enumerate(chunk):
                out[i + k] = base - x.baseline_loss_db + float(delta[k])
        return out

    def predict(self, s, cell, rx):
        return float(self.predict_batch(s, cell, [rx])[0])


def make_predictor(kind, checkpoint=None, **kwargs):
    if kind == "dragon":
        if checkpoint is None:
            raise MissingPrerequisiteError("the dragon predictor needs a checkpoint")
        return DragonPredictor.from_checkpoint(checkpoint)
    return AnalyticalPredictor(kind, **kwargs)
