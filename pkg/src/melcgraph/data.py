"""Cell tables, sample manifests, and sample-level train/val/test splits.

File formats
------------
Cell table: UTF-8 CSV, header ``cell_id,sample_id,x,y,label,f0,...,f{d-1}``,
one cell per line, LF line endings.  Floats are written with 9 significant
digits so a save/load round trip preserves values to better than 1e-9
relative.

Manifest: UTF-8 JSON with a top-level ``samples`` list whose entries carry
``sample_id``, ``diagnosis`` ("healthy" or "melanoma"), ``n_channels`` and
``pixel_size_um``.

Splits are made at sample granularity (all cells of one tissue sample land in
one bucket) so that no classifier can leak information between the buckets
through shared-sample cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

BUCKETS = ("train", "val", "test")
DIAGNOSES = ("healthy", "melanoma")


class FormatError(ValueError):
    """A file does not follow its documented on-disk format."""

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class CellTable:
    """Per-cell records: id, sample membership, centroid, stain profile, label.

    ``x`` is the centroid column coordinate and ``y`` the row coordinate, both
    in pixels.  ``features`` holds one mean stain reactivity per channel and
    has the same length for every cell.  Labels are binary: 0 healthy,
    1 melanoma.
    """

    cell_id: np.ndarray
    sample_id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    features: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cell_id", np.asarray(self.cell_id, dtype=np.int64))
        object.__setattr__(self, "sample_id", np.asarray(self.sample_id, dtype=str))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64))
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "label", np.asarray(self.label, dtype=np.int64))
        n = self.cell_id.shape[0]
        for name in ("sample_id", "x", "y", "label"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must be a 2-D array with {n} rows")
        if self.features.shape[1] < 1:
            raise ValueError("cells must carry at least one feature channel")
        if np.unique(self.cell_id).size != n:
            raise ValueError("cell_id values must be unique")
        bad = ~np.isin(self.label, (0, 1))
        if bad.any():
            raise ValueError(f"labels must be 0 or 1, got {self.label[bad][0]}")

    @property
    def n_cells(self) -> int:
        return self.cell_id.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def unique_samples(self) -> list[str]:
        """Sample ids in order of first appearance."""
        seen, out = set(), []
        for s in self.sample_id:
            if s not in seen:
                seen.add(s)
                out.append(str(s))
        return out

    def subset(self, mask: np.ndarray) -> "CellTable":
        mask = np.asarray(mask)
        return CellTable(
            self.cell_id[mask],
            self.sample_id[mask],
            self.x[mask],
            self.y[mask],
            self.features[mask],
            self.label[mask],
        )


def concat_tables(tables) -> CellTable:
    tables = list(tables)
    if not tables:
        raise ValueError("need at least one table")
    widths = {t.n_features for t in tables}
    if len(widths) != 1:
        raise ValueError(f"feature widths differ across tables: {sorted(widths)}")
    return CellTable(
        np.concatenate([t.cell_id for t in tables]),
        np.concatenate([t.sample_id for t in tables]),
        np.concatenate([t.x for t in tables]),
        np.concatenate([t.y for t in tables]),
        np.concatenate([t.features for t in tables]),
        np.concatenate([t.label for t in tables]),
    )


@dataclass(frozen=True)
class SampleInfo:
    sample_id: str
    diagnosis: str
    n_channels: int
    pixel_size_um: float

    def __post_init__(self):
        if self.diagnosis not in DIAGNOSES:
            raise ValueError(f"diagnosis must be one of {DIAGNOSES}, got {self.diagnosis!r}")
        if self.n_channels < 1:
            raise ValueError("n_channels must be positive")
        if self.pixel_size_um <= 0:
            raise ValueError("pixel_size_um must be positive")


@dataclass(frozen=True)
class SampleManifest:
    samples: tuple

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample_ids must be unique")
        channels = {s.n_channels for s in self.samples}
        if len(channels) > 1:
            raise ValueError(f"n_channels must agree across samples, got {sorted(channels)}")

    def __len__(self) -> int:
        return len(self.samples)

    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def diagnosis_of(self, sample_id: str) -> str:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s.diagnosis
        raise KeyError(sample_id)


@dataclass(frozen=True)
class Split:
    """Assignment of whole samples to the train/val/test buckets."""

    assignment: dict
    ratios: tuple

    def __post_init__(self):
        bad = {b for b in self.assignment.values() if b not in BUCKETS}
        if bad:
            raise ValueError(f"unknown bucket names: {sorted(bad)}")
        if len(self.ratios) != 3:
            raise ValueError("ratios must have three entries")

    def bucket_of(self, sample_id: str) -> str:
        return self.assignment[sample_id]

    def samples_in(self, bucket: str) -> list[str]:
        return [s for s, b in self.assignment.items() if b == bucket]

    def masks(self, table: CellTable) -> dict:
        """Boolean cell masks per bucket, aligned with the table's row order."""
        unknown = [s for s in table.unique_samples() if s not in self.assignment]
        if unknown:
            raise ValueError(f"samples missing from split assignment: {unknown}")
        cell_bucket = np.array([self.assignment[s] for s in table.sample_id])
        return {b: cell_bucket == b for b in BUCKETS}


def largest_remainder_sizes(n: int, ratios) -> tuple:
    """Apportion ``n`` into three bucket sizes by largest-remainder rounding.

    Remainder ties are broken in bucket order (train, val, test), which makes
    the result independent of sample ordering.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    quotas = [r * n for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, sizes)]
    for _ in range(n - sum(sizes)):
        # Remainders within 1e-9 count as tied so float noise in the quotas
        # cannot override the bucket-order preference.
        top = max(remainders)
        j = next(i for i in range(3) if remainders[i] > top - 1e-9)
        sizes[j] += 1
        remainders[j] = -1.0
    return tuple(sizes)


def _coverage_requirements(sizes, diag_counts) -> dict:
    """Per-diagnosis number of buckets that must contain it.

    A bucket with two or more samples must hold at least one sample of each
    diagnosis present in the dataset; a single-sample bucket cannot hold both
    and is exempt.
    """
    need = {d: 0 for d in DIAGNOSES}
    for size in sizes:
        if size >= 2:
            for d in DIAGNOSES:
                need[d] += 1
    return need


def validate_split(split: Split, manifest: SampleManifest) -> None:
    """Raise if the split violates the partition or diagnosis-coverage rules."""
    ids = manifest.ids()
    if sorted(split.assignment) != sorted(ids):
        raise ValueError("split assignment must cover exactly the manifest samples")
    buckets = {b: split.samples_in(b) for b in BUCKETS}
    sizes = [len(buckets[b]) for b in BUCKETS]
    expect = largest_remainder_sizes(len(ids), split.ratios)
    if tuple(sizes) != expect:
        raise ValueError(f"bucket sizes {tuple(sizes)} do not match largest-remainder {expect}")
    if min(sizes) == 0:
        raise ValueError("every bucket must hold at least one sample")
    for b in BUCKETS:
        if len(buckets[b]) >= 2:
            have = {manifest.diagnosis_of(s) for s in buckets[b]}
            if have != set(DIAGNOSES):
                raise ValueError(f"bucket {b!r} lacks a {set(DIAGNOSES) - have} sample")


def make_split(manifest: SampleManifest, ratios, seed: int) -> Split:
    """Randomly assign samples to buckets, then repair diagnosis coverage.

    Bucket sizes follow largest-remainder rounding of ``ratio * n_samples``.
    After the seeded random assignment, deterministic swaps (always the
    lowest-index eligible samples) move one sample of the missing diagnosis
    into any multi-sample bucket that lacks it.  When spare melanoma samples
    remain, single-sample buckets are additionally swapped to melanoma tissue
    so that every bucket contains both cell classes (a melanoma sample holds
    healthy cells around the tumour).
    """
    n = len(manifest)
    sizes = largest_remainder_sizes(n, ratios)
    if min(sizes) == 0:
        raise ValueError(
            f"ratios {tuple(ratios)} leave an empty bucket for {n} samples; every bucket needs a sample"
        )
    diag = [s.diagnosis for s in manifest.samples]
    counts = {d: diag.count(d) for d in DIAGNOSES}
    need = _coverage_requirements(sizes, counts)
    for d, k in need.items():
        if counts.get(d, 0) < k:
            raise ValueError(
                f"infeasible coverage: {k} buckets need a {d} sample but only {counts[d]} exist"
            )

    rng = np.random.default_rng(seed)
    order = list(rng.permutation(n))
    buckets = []
    start = 0
    for size in sizes:
        buckets.append(sorted(order[start : start + size]))
        start += size

    def bucket_count(b, d):
        return sum(1 for i in buckets[b] if diag[i] == d)

    def swap_in(b, want):
        """Pull the lowest-index ``want`` sample from a donor bucket into b."""
        other = DIAGNOSES[0] if want == DIAGNOSES[1] else DIAGNOSES[1]
        for src in range(3):
            if src == b:
                continue
            spare = bucket_count(src, want) - (1 if need[want] and len(buckets[src]) >= 2 else 0)
            if spare >= 1:
                give = min(i for i in buckets[src] if diag[i] == want)
                take = min(i for i in buckets[b] if diag[i] == other)
                buckets[src].remove(give)
                buckets[src].append(take)
                buckets[src].sort()
                buckets[b].remove(take)
                buckets[b].append(give)
                buckets[b].sort()
                return True
        return False

    if all(counts[d] > 0 for d in DIAGNOSES):
        for b in range(3):
            if len(buckets[b]) >= 2:
                for d in DIAGNOSES:
                    while bucket_count(b, d) == 0:
                        if not swap_in(b, d):
                            raise ValueError(f"infeasible coverage: cannot place a {d} sample in bucket {BUCKETS[b]}")
        # Preference only: give lone-sample buckets melanoma tissue when spare.
        for b in range(3):
            if len(buckets[b]) == 1 and bucket_count(b, "melanoma") == 0:
                swap_in(b, "melanoma")

    ids = manifest.ids()
    assignment = {}
    for b, members in enumerate(buckets):
        for i in members:
            assignment[ids[i]] = BUCKETS[b]
    split = Split(assignment=assignment, ratios=tuple(float(r) for r in ratios))
    validate_split(split, manifest)
    return split


# ---------------------------------------------------------------------------
# file I/O

_FIXED_COLUMNS = ("cell_id", "sample_id", "x", "y", "label")


def _g9(v: float) -> str:
    return format(float(v), ".9g")


def _check_header(header, path, prefix):
    if header is None:
        raise FormatError(path, "empty file: missing header line", line=1)
    seen = set()
    for name in header:
        if name in seen:
            raise FormatError(path, f"duplicate column {name!r}", line=1)
        seen.add(name)
    for i, name in enumerate(_FIXED_COLUMNS):
        if i >= len(header) or header[i] != name:
            raise FormatError(path, f"missing or misplaced column {name!r}", line=1)
    feats = header[len(_FIXED_COLUMNS) :]
    if not feats:
        raise FormatError(path, f"missing column {prefix + '0'!r}", line=1)
    for j, name in enumerate(feats):
        if name != f"{prefix}{j}":
            raise FormatError(path, f"expected column {prefix}{j!r}, got {name!r}", line=1)
    return len(feats)


def _load_table(path, prefix) -> CellTable:
    cell_id, sample_id, xs, ys, labels, feats = [], [], [], [], [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        d = _check_header(next(reader, None), path, prefix)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_FIXED_COLUMNS) + d:
                raise FormatError(
                    path, f"expected {len(_FIXED_COLUMNS) + d} fields, got {len(row)}", line=lineno
                )
            try:
                cell_id.append(int(row[0]))
            except ValueError:
                raise FormatError(path, f"non-integer cell_id {row[0]!r}", line=lineno) from None
            sample_id.append(row[1])
            try:
                xs.append(float(row[2]))
                ys.append(float(row[3]))
            except ValueError:
                raise FormatError(path, "non-numeric coordinate", line=lineno) from None
            if row[4] not in ("0", "1"):
                raise FormatError(path, f"unknown label value {row[4]!r}", line=lineno)
            labels.append(int(row[4]))
            try:
                feats.append([float(v) for v in row[5:]])
            except ValueError:
                raise FormatError(path, "non-numeric feature field", line=lineno) from None
    ids = np.asarray(cell_id, dtype=np.int64)
    if np.unique(ids).size != ids.size:
        vals, cnt = np.unique(ids, return_counts=True)
        raise FormatError(path, f"duplicate cell_id {vals[cnt > 1][0]}")
    features = np.asarray(feats, dtype=np.float64).reshape(len(cell_id), d)
    return CellTable(ids, np.asarray(sample_id, dtype=str), xs, ys, features, labels)


def _save_table(table: CellTable, path, prefix) -> None:
    for s in table.unique_samples():
        if "," in s or "\n" in s or '"' in s:
            raise ValueError(f"sample_id {s!r} contains characters the format forbids")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = list(_FIXED_COLUMNS) + [f"{prefix}{j}" for j in range(table.n_features)]
        fh.write(",".join(header) + "\n")
        for i in range(table.n_cells):
            row = [
                str(int(table.cell_id[i])),
                str(table.sample_id[i]),
                _g9(table.x[i]),
                _g9(table.y[i]),
                str(int(table.label[i])),
            ] + [_g9(v) for v in table.features[i]]
            fh.write(",".join(row) + "\n")


def load_cell_table(path) -> CellTable:
    """Read a cell-table CSV; raises :class:`FormatError` naming the bad line."""
    return _load_table(path, "f")


def save_cell_table(table: CellTable, path) -> None:
    _save_table(table, path, "f")


def load_manifest(path) -> SampleManifest:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict) or "samples" not in payload:
        raise FormatError(path, "manifest must be an object with a 'samples' list")
    samples = []
    for entry in payload["samples"]:
        try:
            samples.append(
                SampleInfo(
                    sample_id=str(entry["sample_id"]),
                    diagnosis=str(entry["diagnosis"]),
                    n_channels=int(entry["n_channels"]),
                    pixel_size_um=float(entry["pixel_size_um"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, f"bad manifest entry {entry!r}: {exc}") from None
    try:
        return SampleManifest(samples)
    except ValueError as exc:
        raise FormatError(path, str(exc)) from None


def save_manifest(manifest: SampleManifest, path) -> None:
    payload = {
        "samples": [
            {
                "sample_id": s.sample_id,
                "diagnosis": s.diagnosis,
                "n_channels": s.n_channels,
                "pixel_size_um": s.pixel_size_um,
            }
            for s in manifest.samples
        ]
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_split(path) -> Split:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(path, f"invalid JSON: {exc}") from None
    try:
        return Split(assignment=dict(payload["assignment"]), ratios=tuple(payload["ratios"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, f"bad split file: {exc}") from None


def save_split(split: Split, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"ratios": list(split.ratios), "assignment": split.assignment}, fh, indent=2)
        fh.write("\n")
