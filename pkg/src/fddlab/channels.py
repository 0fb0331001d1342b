"""Synthetic URA channel generation, normalization, and dataset persistence.

A seeded cluster model stands in for measured channels: each sample is a
small sum of steering vectors with complex Gaussian path gains, cluster
centers drawn from angular priors, and per-path angular spread. Datasets are
normalized so the empirical mean of ||h||^2 equals the antenna count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .pilots import UraGeometry

_DATASET_MAGIC = b"FDCH"
_DATASET_VERSION = 1

# antenna spacings in carrier wavelengths
_VERTICAL_SPACING = 1.0
_HORIZONTAL_SPACING = 0.5

SPLITS = ("train", "validation", "evaluation")


class DatasetFormatError(ValueError):
    """Malformed dataset file; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(message)


@dataclass(frozen=True)
class ChannelDataset:
    geometry: UraGeometry
    samples: np.ndarray  # complex (count, n)
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.samples.ndim != 2 or self.samples.shape[1] != self.geometry.n:
            raise ValueError("samples must have shape (count, n)")

    @property
    def count(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class ClusterModelConfig:
    """Cluster-model parameters; angles in degrees."""

    path_count_range: tuple = (1, 5)
    angle_spread_deg: float = 2.0
    azimuth_range_deg: tuple = (-60.0, 60.0)
    elevation_range_deg: tuple = (-15.0, 15.0)
    power_decay: float = 0.7
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.path_count_range
        if not (1 <= lo <= hi <= 128):
            raise ValueError("path_count_range must lie within [1, 128]")
        if self.angle_spread_deg < 0:
            raise ValueError("angle spread must be nonnegative")
        if self.power_decay <= 0:
            raise ValueError("power decay must be positive")


def steering_vector(geom: UraGeometry, azimuth: float,
                    elevation: float) -> np.ndarray:
    """URA steering vector Kron(a_v, a_h) for angles in radians.

    a_v[k] = exp(i 2π d_v k sin(el)), a_h[m] = exp(i 2π d_h m cos(el) sin(az))
    with d_v = 1.0 and d_h = 0.5 wavelengths. Entries are unit modulus.
    """
    kv = np.arange(geom.n_v)
    kh = np.arange(geom.n_h)
    a_v = np.exp(2j * np.pi * _VERTICAL_SPACING * kv * np.sin(elevation))
    a_h = np.exp(2j * np.pi * _HORIZONTAL_SPACING * kh
                 * np.cos(elevation) * np.sin(azimuth))
    return np.kron(a_v, a_h)


def _sample_channel(cfg: ClusterModelConfig, geom: UraGeometry,
                    rng) -> np.ndarray:
    lo, hi = cfg.path_count_range
    n_paths = int(rng.integers(lo, hi + 1))
    az0 = rng.uniform(*cfg.azimuth_range_deg)
    el0 = rng.uniform(*cfg.elevation_range_deg)
    jitter = rng.standard_normal((n_paths, 2)) * cfg.angle_spread_deg
    parts = rng.standard_normal((n_paths, 2))
    gains = (parts[:, 0] + 1j * parts[:, 1]) / np.sqrt(2.0)
    h = np.zeros(geom.n, dtype=np.complex128)
    for p in range(n_paths):
        az = np.deg2rad(az0 + jitter[p, 0])
        el = np.deg2rad(el0 + jitter[p, 1])
        # geometric per-path power decay; overall scale is fixed later by
        # dataset normalization
        amp = np.sqrt(cfg.power_decay ** p)
        h += amp * gains[p] * steering_vector(geom, az, el)
    return h


def generate_channels(cfg: ClusterModelConfig, geom: UraGeometry, count: int,
                      split: str = "train") -> ChannelDataset:
    """Draw count channel samples; per-sample streams derive from
    (cfg.seed, sample index), so generation order never matters."""
    if count < 1:
        raise ValueError("count must be at least 1")
    samples = np.empty((count, geom.n), dtype=np.complex128)
    for i in range(count):
        rng = np.random.default_rng([cfg.seed, i])
        samples[i] = _sample_channel(cfg, geom, rng)
    return ChannelDataset(geometry=geom, samples=samples, split=split)


def normalize_dataset(ds: ChannelDataset) -> ChannelDataset:
    """Scale all samples by one scalar so mean ||h||^2 equals the antenna
    count."""
    mean_power = np.mean(np.sum(np.abs(ds.samples) ** 2, axis=1))
    if mean_power == 0:
        raise ValueError("cannot normalize an all-zero dataset")
    scale = np.sqrt(ds.geometry.n / mean_power)
    return replace(ds, samples=ds.samples * scale)


def save_dataset(path, ds: ChannelDataset) -> None:
    """Write the versioned little-endian binary dataset format."""
    with open(path, "wb") as fh:
        fh.write(_DATASET_MAGIC)
        fh.write(struct.pack("<IIIQ", _DATASET_VERSION, ds.geometry.n_v,
                             ds.geometry.n_h, ds.count))
        fh.write(np.ascontiguousarray(ds.samples, dtype="<c16").tobytes())


def load_dataset(path, split: str = "evaluation") -> ChannelDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic, not a channel dataset",
                                 offset=0)
    if len(data) < 24:
        raise DatasetFormatError(
            f"{path}: truncated header, expected 24 bytes, got {len(data)}",
            offset=len(data))
    version, n_v, n_h, count = struct.unpack("<IIIQ", data[4:24])
    if version != _DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}",
                                 offset=4)
    geom = UraGeometry(n_v=n_v, n_h=n_h)
    expected = 24 + 16 * count * geom.n
    if len(data) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes, got {len(data)}",
            offset=min(expected, len(data)))
    samples = np.frombuffer(data[24:], dtype="<c16").reshape(count, geom.n)
    return ChannelDataset(geometry=geom, samples=samples.copy(), split=split)


def load_dataset_csv(path, geom: UraGeometry,
                     split: str = "evaluation") -> ChannelDataset:
    """Ingest externally supplied channels: one sample per line,
    "re0,im0,re1,im1,..." with 2n columns."""
    try:
        table = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: unparseable CSV: {exc}") from exc
    if table.shape[1] != 2 * geom.n:
        raise DatasetFormatError(
            f"{path}: expected {2 * geom.n} columns, got {table.shape[1]}")
    samples = table[:, 0::2] + 1j * table[:, 1::2]
    return ChannelDataset(geometry=geom, samples=samples, split=split)
