"""Training/inference sample assembly, normalization, and dataset splits.

Feature vector layout (fixed order, 10 entries):
  0 delta_lon_m   |rx.x - tx.x| east-west separation
  1 delta_lat_m   |rx.y - tx.y| north-south separation
  2 d_3d_m        slant distance
  3 n_obs         building penetration runs on the direct path
  4 d_obs_m       meters inside buildings
  5 n_ter         terrain penetration runs
  6 d_ter_m       meters below terrain
  7 bandwidth_mhz
  8 freq_mhz
  9 eirp_dbm      fitted transmit power estimate
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

from . import channels, imaging, raypath
from .errors import InsufficientDataError, MissingPrerequisiteError, ValidationError
from .geo import Cell, LocalPoint, Measurement, Scenario

N_FEATURES = 10

FEATURE_NAMES = (
    "delta_lon_m", "delta_lat_m", "d_3d_m", "n_obs", "d_obs_m",
    "n_ter", "d_ter_m", "bandwidth_mhz", "freq_mhz", "eirp_dbm",
)


@dataclass
class Sample:
    features: np.ndarray          # (10,) float64
    images: imaging.ImagePair
    baseline_loss_db: float
    cell_id: str
    position: LocalPoint
    target_delta_db: float | None = None


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray              # (10,)
    std: np.ndarray               # (10,) > 0 everywhere
    degenerate: np.ndarray        # (10,) bool, True where raw std was 0


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    test: list
    val: list
    seed: int


def extract_sample(s: Scenario, cell: Cell, rx: LocalPoint,
                   los_mode: str = "geometric") -> Sample:
    """Assemble one inference-ready sample (no target attached)."""
    if cell.eirp_dbm is None:
        raise MissingPrerequisiteError(
            f"cell {cell.id!r} has no fitted EIRP; run the EIRP fit first")
    profile = raypath.trace(s, cell.position, rx)
    baseline = channels.baseline_path_loss(s, cell, rx, profile=profile,
                                           los_mode=los_mode)
    feats = np.array([
        abs(rx.x - cell.position.x),
        abs(rx.y - cell.position.y),
        profile.d_3d,
        float(profile.n_obs),
        profile.d_obs,
        float(profile.n_ter),
        profile.d_ter,
        cell.bandwidth_mhz,
        cell.freq_mhz,
        cell.eirp_dbm,
    ], dtype=np.float64)
    if not np.isfinite(feats).all():
        bad = [FEATURE_NAMES[i] for i in np.where(~np.isfinite(feats))[0]]
        raise ValidationError(f"non-finite feature(s) {bad} at ({rx.x:.1f}, {rx.y:.1f})")
    images = imaging.render_pair(s, rx, cell.position)
    return Sample(features=feats, images=images, baseline_loss_db=baseline,
                  cell_id=cell.id, position=rx)


def compute_target(sample: Sample, measurement: Measurement, cell: Cell) -> float:
    """Correction offset that makes the link budget reproduce the measurement."""
    if measurement.cell_id != cell.id:
        raise ValidationError(
            f"measurement cell {measurement.cell_id!r} != cell {cell.id!r}")
    if cell.eirp_dbm is None:
        raise MissingPrerequisiteError(f"cell {cell.id!r} has no fitted EIRP")
    n_prb = channels.n_prb_from_bandwidth(cell.bandwidth_mhz)
    predicted = (cell.eirp_dbm - 10.0 * math.log10(n_prb * channels.N_SC)
                 - sample.baseline_loss_db)
    return measurement.rsrp_dbm - predicted


def build_dataset(s: Scenario, measurements, los_mode="geometric", jobs=1):
    """Extract one labelled sample per measurement (order preserved)."""
    if jobs and jobs > 1:
        return _build_dataset_parallel(s, measurements, los_mode, jobs)
    out = []
    for m in measurements:
        cell = s.cell_by_id(m.cell_id)
        sample = extract_sample(s, cell, m.position, los_mode=los_mode)
        sample.target_delta_db = compute_target(sample, m, cell)
        out.append(sample)
    return out


def _build_dataset_parallel(s, measurements, los_mode, jobs):
    from concurrent.futures import ProcessPoolExecutor

    chunks = [measurements[i::jobs] for i in range(jobs)]
    order = [list(range(len(measurements)))[i::jobs] for i in range(jobs)]
    results = [None] * len(measurements)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(build_dataset, s, chunk, los_mode, 1) for chunk in chunks]
        for idxs, fut in zip(order, futures):
            for i, sample in zip(idxs, fut.result()):
                results[i] = sample
    return results


def fit_normalization(train_samples) -> NormStats:
    """Per-feature z-score statistics (population std) from the train set only."""
    if len(train_samples) < 2:
        raise InsufficientDataError("normalization needs >= 2 training samples")
    mat = np.stack([s.features for s in train_samples])
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    degenerate = std == 0.0
    std = np.where(degenerate, 1.0, std)
    return NormStats(mean=mean, std=std, degenerate=degenerate)


def apply_normalization(features: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - stats.mean) / stats.std


def split_dataset(samples, seed: int) -> DatasetSplit:
    """Deterministic seeded shuffle, partitioned 80/10/10 (train/test/val)."""
    n = len(samples)
    if n < 10:
        raise InsufficientDataError(f"split needs >= 10 samples, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(math.floor(0.8 * n))
    n_test = int(math.floor(0.1 * n))
    train_idx = perm[:n_train]
    test_idx = perm[n_train:n_train + n_test]
    val_idx = perm[n_train + n_test:]
    return DatasetSplit(
        train=[samples[i] for i in train_idx],
        test=[samples[i] for i in test_idx],
        val=[samples[i] for i in val_idx],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# dataset cache (JSON lines, one sample per line)


def _encode_image(img: imaging.GrayImage) -> str:
    return base64.b64encode(np.ascontiguousarray(img.pixels, dtype="<f4").tobytes()).decode("ascii")


def _decode_image(s: str) -> imaging.GrayImage:
    arr = np.frombuffer(base64.b64decode(s), dtype="<f4").astype(np.float32)
    return imaging.GrayImage(arr.reshape(imaging.IMAGE_SIZE, imaging.IMAGE_SIZE))


def save_dataset(samples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({
                "features": s.features.tolist(),
                "top": _encode_image(s.images.top),
                "side": _encode_image(s.images.side),
                "baseline_loss_db": s.baseline_loss_db,
                "target_delta_db": s.target_delta_db,
                "cell_id": s.cell_id,
                "position": [s.position.x, s.position.y, s.position.z],
            }, sort_keys=True))
            fh.write("\n")


def load_dataset(path):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                feats = np.asarray(doc["features"], dtype=np.float64)
                if feats.shape != (N_FEATURES,):
                    raise ValueError(f"expected {N_FEATURES} features")
                sample = Sample(
                    features=feats,
                    images=imaging.ImagePair(_decode_image(doc["top"]),
                                             _decode_image(doc["side"])),
                    baseline_loss_db=float(doc["baseline_loss_db"]),
                    cell_id=doc["cell_id"],
                    position=LocalPoint(*doc["position"]),
                    target_delta_db=(None if doc["target_delta_db"] is None
                                     else float(doc["target_delta_db"])),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad dataset record ({exc})") from exc
            out.append(sample)
    return out
