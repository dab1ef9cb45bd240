"""Loading, validation, normalization, upsampling and windowing of region time series.

Scans are stored as headerless CSV files, one row per region, one column per
time point. A JSON manifest lists the scan files together with their subject,
task and session labels and the shared region count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

DEGENERATE_STD = 1e-12


class ManifestError(ValueError):
    """Raised when a manifest file cannot be parsed or is inconsistent."""


class ScanFormatError(ValueError):
    """Raised when a scan CSV does not match the expected layout."""


@dataclass
class RegionSeries:
    """One region's BOLD samples within a scan."""

    region_index: int
    samples: np.ndarray
    region_label: str | None = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("region samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"non-finite sample in region {self.region_index}")


@dataclass
class ScanRecord:
    """One recording session: M regions sampled over a common time axis."""

    subject_id: str
    task_label: str
    session_id: str
    series: list[RegionSeries]

    def __post_init__(self) -> None:
        if len(self.series) < 2:
            raise ValueError("a scan needs at least 2 regions")
        lengths = {s.samples.size for s in self.series}
        if len(lengths) != 1:
            raise ValueError(f"regions have unequal lengths: {sorted(lengths)}")
        indices = [s.region_index for s in self.series]
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate region_index within scan")

    @property
    def n_regions(self) -> int:
        return len(self.series)

    @property
    def n_samples(self) -> int:
        return self.series[0].samples.size

    @property
    def data(self) -> np.ndarray:
        """Region-by-time matrix view of the scan (M x N)."""
        return np.vstack([s.samples for s in self.series])


@dataclass
class Chunk:
    """A contiguous M x L window of one scan; the unit a network is fit from."""

    subject_id: str
    task_label: str
    session_id: str
    chunk_index: int
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("chunk data must be 2-D (regions x samples)")
        if self.data.shape[1] < 2:
            raise ValueError("chunk window length must be >= 2")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite value in chunk data")

    @property
    def n_regions(self) -> int:
        return self.data.shape[0]

    @property
    def window_length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    task_label: str
    session_id: str


@dataclass
class DatasetManifest:
    """Index of scan files sharing one region parcellation."""

    region_count: int
    entries: list[ManifestEntry] = field(default_factory=list)
    region_labels: list[str] | None = None


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a JSON manifest and resolve entry paths relative to its directory.

    Schema: an object with integer ``region_count``, optional ``region_labels``
    (list of strings, one per region) and ``entries``, a list of objects with
    ``path``, ``subject``, ``task`` and ``session`` fields. An entry may repeat
    ``region_count``; if present it must agree with the top-level value.

    Referenced scan files are recorded but not opened; existence is checked
    when the scan is actually loaded.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest root must be an object")
    try:
        region_count = int(raw["region_count"])
    except KeyError:
        raise ManifestError(f"{path}: missing required field 'region_count'") from None
    if region_count < 2:
        raise ManifestError(f"{path}: region_count must be >= 2, got {region_count}")

    labels = raw.get("region_labels")
    if labels is not None:
        labels = [str(x) for x in labels]
        if len(labels) != region_count:
            raise ManifestError(
                f"{path}: {len(labels)} region_labels for region_count={region_count}"
            )

    entries: list[ManifestEntry] = []
    for i, ent in enumerate(raw.get("entries", [])):
        for key in ("path", "subject", "task", "session"):
            if key not in ent:
                raise ManifestError(f"{path}: entry {i} missing field '{key}'")
        if "region_count" in ent and int(ent["region_count"]) != region_count:
            raise ManifestError(
                f"{path}: entry {i} declares inconsistent region count "
                f"{ent['region_count']} (manifest says {region_count})"
            )
        entries.append(
            ManifestEntry(
                path=str(path.parent / ent["path"]),
                subject_id=str(ent["subject"]),
                task_label=str(ent["task"]),
                session_id=str(ent["session"]),
            )
        )
    return DatasetManifest(region_count=region_count, entries=entries, region_labels=labels)


def load_scan(entry: ManifestEntry, expected_regions: int) -> ScanRecord:
    """Read one scan CSV (no header, regions as rows) into a ScanRecord.

    Rows must all have the same length, every cell must parse as a finite
    float, and the row count must equal ``expected_regions``.
    """
    path = Path(entry.path)
    rows: list[np.ndarray] = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cells = line.split(",")
            try:
                values = np.array([float(c) for c in cells], dtype=np.float64)
            except ValueError as e:
                raise ScanFormatError(f"{path}:{lineno}: non-numeric cell ({e})") from None
            if not np.all(np.isfinite(values)):
                raise ScanFormatError(f"{path}:{lineno}: non-finite sample")
            if rows and values.size != rows[0].size:
                raise ScanFormatError(
                    f"{path}:{lineno}: ragged row ({values.size} columns, expected {rows[0].size})"
                )
            rows.append(values)
    if len(rows) != expected_regions:
        raise ScanFormatError(
            f"{path}: region count mismatch ({len(rows)} rows, expected {expected_regions})"
        )
    series = [RegionSeries(region_index=i, samples=r) for i, r in enumerate(rows)]
    return ScanRecord(
        subject_id=entry.subject_id,
        task_label=entry.task_label,
        session_id=entry.session_id,
        series=series,
    )


def partition_into_chunks(scan: ScanRecord, window_length: int) -> list[Chunk]:
    """Cut a scan into floor(N / L) consecutive non-overlapping windows.

    Chunk c covers samples [c*L, (c+1)*L); trailing samples that do not fill a
    whole window are discarded. A window longer than the scan yields an empty
    list.
    """
    if window_length < 2:
        raise ValueError(f"window length must be >= 2, got {window_length}")
    data = scan.data
    n_chunks = data.shape[1] // window_length
    return [
        Chunk(
            subject_id=scan.subject_id,
            task_label=scan.task_label,
            session_id=scan.session_id,
            chunk_index=c,
            data=data[:, c * window_length : (c + 1) * window_length].copy(),
        )
        for c in range(n_chunks)
    ]


def zscore_chunk(chunk: Chunk) -> tuple[Chunk, list[int]]:
    """Standardize each region row to mean 0 and population std 1.

    Rows whose std falls below ``DEGENERATE_STD`` are replaced by zeros rather
    than divided; their indices are returned so callers can log them.
    """
    data = chunk.data
    mean = data.mean(axis=1, keepdims=True)
    std = data.std(axis=1, keepdims=True)
    degenerate = np.flatnonzero(std[:, 0] < DEGENERATE_STD)
    safe_std = np.where(std < DEGENERATE_STD, 1.0, std)
    out = (data - mean) / safe_std
    if degenerate.size:
        out[degenerate, :] = 0.0
    normalized = replace(chunk, data=out)
    return normalized, [int(i) for i in degenerate]


def interpolate_temporal(scan: ScanRecord, n_insert: int) -> ScanRecord:
    """Upsample each region with a natural cubic spline over integer knots.

    ``n_insert`` new samples are placed between every pair of consecutive
    originals, so the output has (N - 1) * (n_insert + 1) + 1 samples and
    passes through every original sample. ``n_insert = 0`` returns an
    identical copy.
    """
    if n_insert < 0:
        raise ValueError(f"n_insert must be >= 0, got {n_insert}")
    n = scan.n_samples
    if n < 4:
        raise ValueError(f"cubic spline interpolation needs at least 4 samples, got {n}")
    if n_insert == 0:
        series = [
            RegionSeries(s.region_index, s.samples.copy(), s.region_label) for s in scan.series
        ]
        return replace(scan, series=series)

    step = n_insert + 1
    out_len = (n - 1) * step + 1
    knots = np.arange(n, dtype=np.float64)
    grid = np.arange(out_len, dtype=np.float64) / step
    out_series = []
    for s in scan.series:
        spline = CubicSpline(knots, s.samples, bc_type="natural")
        values = spline(grid)
        # knot positions must reproduce the originals exactly, not just closely
        values[::step] = s.samples
        out_series.append(RegionSeries(s.region_index, values, s.region_label))
    return replace(scan, series=out_series)


def expected_chunk_count(n_samples: int, window_length: int) -> int:
    """Number of full windows of length L in a scan of N samples."""
    return math.floor(n_samples / window_length)
