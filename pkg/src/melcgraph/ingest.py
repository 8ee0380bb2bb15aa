"""Per-cell stain profiles from an instance mask plus stain-channel images.

A sample on disk is a descriptor text file next to its images:

    sample S00
    mask mask.pgm
    channel CD45 ch00.pgm
    channel HLA-DR ch01.pgm

Image paths are resolved relative to the descriptor's directory.  Images are
binary PGM (``P5``) with maxval 65535 and big-endian 16-bit samples; the mask
grid stores cell instance ids (0 is background), the channel grids stain
intensities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CellTable, FormatError

MAXVAL = 65535


@dataclass(frozen=True)
class LabelMask:
    """Row-major instance-id grid; 0 marks background pixels."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.labels.ndim != 2:
            raise ValueError("mask must be a 2-D grid")
        if (self.labels < 0).any():
            raise ValueError("mask ids must be nonnegative")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def instance_ids(self) -> np.ndarray:
        ids = np.unique(self.labels)
        return ids[ids > 0]


@dataclass(frozen=True)
class ChannelStack:
    """One 16-bit intensity grid per named stain channel."""

    channel_names: tuple
    images: tuple

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(
            self, "images", tuple(np.asarray(im, dtype=np.float64) for im in self.images)
        )
        if len(self.channel_names) != len(self.images):
            raise ValueError("one image per channel name required")
        if len(self.images) < 1:
            raise ValueError("at least one channel required")
        shapes = {im.shape for im in self.images}
        if len(shapes) > 1:
            raise ValueError(f"channel images disagree in shape: {sorted(shapes)}")

    @property
    def n_channels(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple:
        return self.images[0].shape


def extract_profiles(mask: LabelMask, stack: ChannelStack, sample_id: str) -> CellTable:
    """Mean reactivity and centroid per cell instance.

    One output row per distinct positive mask id, in ascending id order.
    Feature j is the arithmetic mean of channel j over the instance's pixels;
    x and y are the means of the pixel column and row indices.  Labels are a
    placeholder 0; ground truth is attached separately.
    """
    if stack.shape != (mask.height, mask.width):
        raise ValueError(
            f"channel shape {stack.shape} does not match mask {(mask.height, mask.width)}"
        )
    flat = mask.labels.ravel()
    ids = mask.instance_ids()
    n = ids.shape[0]
    # Bincount over a compacted id range: one pass per channel, no python loop
    # over instances.
    index = np.searchsorted(ids, flat)
    fg = flat > 0
    index = index[fg]
    counts = np.bincount(index, minlength=n).astype(np.float64)
    rows, cols = np.divmod(np.nonzero(fg)[0], mask.width)
    x = np.bincount(index, weights=cols, minlength=n) / counts
    y = np.bincount(index, weights=rows, minlength=n) / counts
    features = np.empty((n, stack.n_channels), dtype=np.float64)
    for j, image in enumerate(stack.images):
        features[:, j] = np.bincount(index, weights=image.ravel()[fg], minlength=n) / counts
    return CellTable(
        cell_id=ids,
        sample_id=np.full(n, sample_id, dtype=object),
        x=x,
        y=y,
        features=features.reshape(n, stack.n_channels),
        label=np.zeros(n, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# PGM I/O

def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (``P5``) image into a uint16 array.

    Only maxval 65535 with big-endian two-byte samples is accepted; plain-text
    (``P2``) PGM and 8-bit payloads are rejected.
    """
    path = Path(path)
    data = path.read_bytes()
    # Header tokens may be separated by arbitrary whitespace and '#' comments.
    pos, tokens = 0, []
    while len(tokens) < 4:
        m = re.compile(rb"[ \t\r\n]*(#[^\n]*\n)*[ \t\r\n]*").match(data, pos)
        pos = m.end()
        m = re.compile(rb"[^ \t\r\n#]+").match(data, pos)
        if m is None:
            raise FormatError(path, "truncated header")
        tokens.append(m.group())
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(path, f"expected magic P5, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(path, "non-integer header field") from None
    if maxval != MAXVAL:
        raise FormatError(path, f"expected maxval {MAXVAL}, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos : pos + 2 * width * height]
    if len(payload) != 2 * width * height:
        raise FormatError(path, f"expected {2 * width * height} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)


def write_pgm(image: np.ndarray, path) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if image.min() < 0 or image.max() > MAXVAL:
        raise ValueError(f"pixel values must lie in [0, {MAXVAL}]")
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii"))
        fh.write(image.astype(">u2").tobytes())


# ---------------------------------------------------------------------------
# sample descriptors

def read_descriptor(path):
    """Parse a sample descriptor; returns (sample_id, mask_path, names, paths)."""
    path = Path(path)
    sample_id, mask_path, names, paths = None, None, [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "sample" and len(parts) == 2:
                if sample_id is not None:
                    raise FormatError(path, "repeated sample line", line=lineno)
                sample_id = parts[1]
            elif parts[0] == "mask" and len(parts) == 2:
                if mask_path is not None:
                    raise FormatError(path, "repeated mask line", line=lineno)
                mask_path = path.parent / parts[1]
            elif parts[0] == "channel" and len(parts) == 3:
                names.append(parts[1])
                paths.append(path.parent / parts[2])
            else:
                raise FormatError(path, f"unrecognized line {line!r}", line=lineno)
    if sample_id is None:
        raise FormatError(path, "missing sample line")
    if mask_path is None:
        raise FormatError(path, "missing mask line")
    if not names:
        raise FormatError(path, "descriptor lists no channels")
    if len(set(names)) != len(names):
        raise FormatError(path, "duplicate channel names")
    return sample_id, mask_path, names, paths


def write_descriptor(path, sample_id: str, mask_name: str, channels) -> None:
    """Write a descriptor; ``channels`` is a list of (name, file_name) pairs."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"sample {sample_id}\n")
        fh.write(f"mask {mask_name}\n")
        for name, file_name in channels:
            fh.write(f"channel {name} {file_name}\n")


def load_sample(descriptor_path) -> CellTable:
    """Read one sample's descriptor, mask, and channels; extract profiles."""
    sample_id, mask_path, names, paths = read_descriptor(descriptor_path)
    mask = LabelMask(read_pgm(mask_path).astype(np.int64))
    stack = ChannelStack(tuple(names), tuple(read_pgm(p) for p in paths))
    return extract_profiles(mask, stack, sample_id)
