"""Synthetic multi-channel tissue datasets with planted tumors.

Each simulated sample is a square field of cells placed uniformly at random.
Melanoma samples carry one planted disk: cells inside it get label 1 and a
mean shift on a dataset-wide random subset of channels.  On top of the class
means every channel receives a per-sample smooth random intensity field
(so near-by cells share nuisance structure) plus iid Gaussian noise.

Everything is deterministic given the seed: the dataset-level draws and each
sample's draws come from independent children of one ``SeedSequence``, so a
sample's content does not depend on how many samples precede it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import CellTable, FormatError, SampleInfo, SampleManifest
from .ingest import write_descriptor, write_pgm

MASK_DISK_RADIUS_PX = 3
PIXEL_SIZE_UM = 0.45
BASELINE_MEAN_RANGE = (400.0, 800.0)
FIELD_SD_RATIO = 0.3  # smooth-field amplitude as a multiple of noise_sd
RFF_TERMS = 32  # cosine terms approximating the smooth field


@dataclass(frozen=True)
class SimConfig:
    n_samples: int = 12
    fraction_melanoma: float = 0.75
    cells_per_sample: int = 500
    n_channels: int = 40
    field_size_px: int = 512
    tumor_radius_px: float = 170.0
    class_mean_shift: float = 10.0
    noise_sd: float = 20.0
    spatial_smoothing: float = 100.0

    def __post_init__(self):
        for name in ("n_samples", "cells_per_sample", "n_channels", "field_size_px"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not 0.0 <= self.fraction_melanoma <= 1.0:
            raise ValueError(f"fraction_melanoma must lie in [0, 1], got {self.fraction_melanoma}")
        if not 0.0 <= self.tumor_radius_px <= self.field_size_px / 2:
            raise ValueError("tumor_radius_px must lie in [0, field_size_px / 2]")
        if self.class_mean_shift < 0 or self.noise_sd < 0 or self.spatial_smoothing < 0:
            raise ValueError("class_mean_shift, noise_sd and spatial_smoothing must be >= 0")


def load_sim_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise FormatError(path, "config must be a JSON object")
    known = {f.name for f in fields(SimConfig)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise FormatError(path, f"unknown config fields: {unknown}")
    try:
        return SimConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise FormatError(path, str(exc)) from None


def save_sim_config(config: SimConfig, path) -> None:
    payload = {f.name: getattr(config, f.name) for f in fields(SimConfig)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _sample_ids(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"S{i:0{width}d}" for i in range(n)]


def _smooth_field(rng, positions, n_channels, length, sd):
    """Per-channel smooth Gaussian fields via random cosine features.

    Each channel's field is ``sd * sqrt(2/M) * sum_m cos(w_m . p + b_m)`` with
    frequencies ``w ~ Normal(0, 1/length^2)``, which approximates a stationary
    Gaussian field with unit variance and correlation length ``length``.
    """
    omega = rng.normal(0.0, 1.0 / length, size=(n_channels, RFF_TERMS, 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_channels, RFF_TERMS))
    args = np.einsum("nk,cmk->ncm", positions, omega) + phase[None, :, :]
    return sd * np.sqrt(2.0 / RFF_TERMS) * np.cos(args).sum(axis=2)


def generate_dataset(config: SimConfig, seed: int) -> tuple:
    """Simulate cells for every sample; returns (CellTable, SampleManifest)."""
    n = config.n_samples
    children = np.random.SeedSequence(seed).spawn(n + 1)
    dataset_rng = np.random.default_rng(children[0])

    n_melanoma = int(round(config.fraction_melanoma * n))
    melanoma = np.zeros(n, dtype=bool)
    melanoma[dataset_rng.choice(n, size=n_melanoma, replace=False)] = True
    baseline = dataset_rng.uniform(*BASELINE_MEAN_RANGE, size=config.n_channels)
    n_shifted = max(1, config.n_channels // 2)
    shifted = np.sort(dataset_rng.choice(config.n_channels, size=n_shifted, replace=False))

    ids = _sample_ids(n)
    field_sd = FIELD_SD_RATIO * config.noise_sd
    tables = {k: [] for k in ("cell_id", "sample_id", "x", "y", "label", "features")}
    next_id = 1
    for i in range(n):
        rng = np.random.default_rng(children[i + 1])
        m = config.cells_per_sample
        pos = rng.uniform(0.0, config.field_size_px, size=(m, 2))
        label = np.zeros(m, dtype=np.int64)
        if melanoma[i] and config.tumor_radius_px > 0:
            r = config.tumor_radius_px
            center = rng.uniform(r, config.field_size_px - r, size=2)
            label[((pos - center) ** 2).sum(axis=1) <= r * r] = 1
        features = np.tile(baseline, (m, 1))
        features[np.ix_(label == 1, shifted)] += config.class_mean_shift
        if config.spatial_smoothing > 0 and field_sd > 0:
            features += _smooth_field(
                rng, pos, config.n_channels, config.spatial_smoothing, field_sd
            )
        if config.noise_sd > 0:
            features += rng.normal(0.0, config.noise_sd, size=(m, config.n_channels))
        tables["cell_id"].append(np.arange(next_id, next_id + m, dtype=np.int64))
        next_id += m
        tables["sample_id"].append(np.full(m, ids[i], dtype=object))
        tables["x"].append(pos[:, 0])
        tables["y"].append(pos[:, 1])
        tables["label"].append(label)
        tables["features"].append(features)

    table = CellTable(
        cell_id=np.concatenate(tables["cell_id"]),
        sample_id=np.concatenate(tables["sample_id"]),
        x=np.concatenate(tables["x"]),
        y=np.concatenate(tables["y"]),
        features=np.concatenate(tables["features"], axis=0),
        label=np.concatenate(tables["label"]),
    )
    manifest = SampleManifest(
        tuple(
            SampleInfo(
                sample_id=ids[i],
                diagnosis="melanoma" if melanoma[i] else "healthy",
                n_channels=config.n_channels,
                pixel_size_um=PIXEL_SIZE_UM,
            )
            for i in range(n)
        )
    )
    return table, manifest


def emit_images(config: SimConfig, table: CellTable, out_dir) -> None:
    """Write per-sample mask and channel PGMs plus descriptors under out_dir.

    Cell disks (radius 3 px) are painted in table row order, so on overlap the
    later cell id wins.  Every pixel of a cell's final mask region carries the
    rounded feature value in the channel images, which lets profile extraction
    reproduce the table features to within rounding (+-0.5 intensity units).
    """
    out_dir = Path(out_dir)
    size = config.field_size_px
    max_id = int(table.cell_id.max(initial=0))
    if max_id > 65535:
        raise ValueError(f"cell id {max_id} exceeds the 16-bit mask range")
    if table.n_features != config.n_channels:
        raise ValueError("table feature width does not match config n_channels")
    ch_width = max(2, len(str(config.n_channels - 1)))
    ch_names = [f"ch{j:0{ch_width}d}" for j in range(config.n_channels)]
    r2 = MASK_DISK_RADIUS_PX * MASK_DISK_RADIUS_PX
    for sid in table.unique_samples():
        part = table.subset(table.sample_id == sid)
        mask = np.zeros((size, size), dtype=np.int64)
        for i in range(part.n_cells):
            cx, cy = part.x[i], part.y[i]
            lo_c = max(0, int(np.floor(cx - MASK_DISK_RADIUS_PX)))
            hi_c = min(size - 1, int(np.ceil(cx + MASK_DISK_RADIUS_PX)))
            lo_r = max(0, int(np.floor(cy - MASK_DISK_RADIUS_PX)))
            hi_r = min(size - 1, int(np.ceil(cy + MASK_DISK_RADIUS_PX)))
            cols = np.arange(lo_c, hi_c + 1)
            rows = np.arange(lo_r, hi_r + 1)
            inside = (cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2 <= r2
            block = mask[lo_r : hi_r + 1, lo_c : hi_c + 1]
            block[inside] = int(part.cell_id[i])
        sample_dir = out_dir / sid
        sample_dir.mkdir(parents=True, exist_ok=True)
        write_pgm(mask.astype(np.uint16), sample_dir / "mask.pgm")
        lut = np.zeros(max_id + 1, dtype=np.uint16)
        for j, name in enumerate(ch_names):
            lut[part.cell_id] = np.clip(np.rint(part.features[:, j]), 0, 65535).astype(np.uint16)
            write_pgm(lut[mask], sample_dir / f"{name}.pgm")
        write_descriptor(
            sample_dir / "descriptor.txt",
            sid,
            "mask.pgm",
            [(name, f"{name}.pgm") for name in ch_names],
        )
