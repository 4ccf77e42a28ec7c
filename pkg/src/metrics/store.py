"""Embedded in-memory time-series store with an optional snapshot file.

Snapshot file layout (big-endian, one record per accepted sample, append-only)::

    uint32  key_length
    bytes   key          canonical SeriesKey, UTF-8 (``name{a="x"}``)
    int64   timestamp    milliseconds since epoch
    float64 value

Readers work on :class:`StoreSnapshot` objects. Per-series sample lists are
only ever appended to under the write lock, and pruning swaps in new lists, so
a snapshot (which records each list's length) never sees a half-ingested batch.
"""
import bisect
import logging
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, Optional, Tuple

from src.config import Config
from src.errors import InvalidRange
from src.metrics.exposition import parse_series_key
from src.metrics.types import MetricFamily, MetricKind, MetricSample, SeriesKey, SeriesMatcher
from src.utils.durations import parse_duration_ms

logger = logging.getLogger(__name__)

_RECORD_TAIL = struct.Struct(">qd")
_KEY_LENGTH = struct.Struct(">I")


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: List[Tuple[MetricSample, str]] = field(default_factory=list)

    def merge(self, other: "IngestReport") -> "IngestReport":
        return IngestReport(self.accepted + other.accepted, self.rejected + other.rejected)


class _Series:
    __slots__ = ("timestamps", "values")

    def __init__(self):
        self.timestamps: List[int] = []
        self.values: List[float] = []


class StoreSnapshot:
    """Consistent read view of the store."""

    def __init__(
        self,
        series: Dict[SeriesKey, Tuple[List[int], List[float], int]],
        families: Dict[str, MetricFamily],
        min_visible_ms: Optional[int],
        lookback_ms: int,
    ):
        self._series = series
        self.families = families
        self.min_visible_ms = min_visible_ms
        self.lookback_ms = lookback_ms

    def keys(self) -> List[SeriesKey]:
        return sorted(self._series)

    def matching(self, matcher: SeriesMatcher) -> List[SeriesKey]:
        return [key for key in sorted(self._series) if matcher.matches(key)]

    def points(self, key: SeriesKey, start: int, end: int) -> Tuple[List[int], List[float]]:
        """Timestamps and values with start <= ts <= end, clipped to retention."""
        timestamps, values, length = self._series[key]
        if self.min_visible_ms is not None:
            start = max(start, self.min_visible_ms)
        if start > end:
            return [], []
        lo = bisect.bisect_left(timestamps, start, 0, length)
        hi = bisect.bisect_right(timestamps, end, 0, length)
        return timestamps[lo:hi], values[lo:hi]

    def latest(self, key: SeriesKey, t: int, lookback_ms: Optional[int] = None) -> Optional[Tuple[int, float]]:
        """Newest sample with t - lookback < ts <= t, or None when stale."""
        lookback = self.lookback_ms if lookback_ms is None else lookback_ms
        timestamps, values, length = self._series[key]
        idx = bisect.bisect_right(timestamps, t, 0, length) - 1
        if idx < 0:
            return None
        ts = timestamps[idx]
        if ts <= t - lookback:
            return None
        if self.min_visible_ms is not None and ts < self.min_visible_ms:
            return None
        return ts, values[idx]

    def sample_count(self) -> int:
        return sum(length for _, _, length in self._series.values())

    def select_range(self, matcher: SeriesMatcher, start: int, end: int) -> Dict[SeriesKey, List[MetricSample]]:
        if start > end:
            raise InvalidRange(f"start {start} > end {end}")
        out: Dict[SeriesKey, List[MetricSample]] = {}
        for key in self.matching(matcher):
            timestamps, values = self.points(key, start, end)
            if timestamps:
                out[key] = [MetricSample(key, ts, v) for ts, v in zip(timestamps, values)]
        return out


class TimeSeriesStore:
    """Series index SeriesKey -> samples sorted by timestamp."""

    def __init__(
        self,
        retention: str = Config.RETENTION,
        lookback: str = Config.LOOKBACK,
        snapshot_path: Optional[Path] = None,
    ):
        self.retention_ms = parse_duration_ms(retention)
        self.lookback_ms = parse_duration_ms(lookback)
        self._lock = threading.Lock()
        self._series: Dict[SeriesKey, _Series] = {}
        self._families: Dict[str, MetricFamily] = {}
        self._head_ms: Optional[int] = None
        self._pruned_before: Optional[int] = None
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._snapshot_file: Optional[BinaryIO] = None

    # write side

    def ingest(self, samples: Iterable[MetricSample]) -> IngestReport:
        """
        Append samples; out-of-order and duplicate timestamps are rejected.

        Args:
            samples (Iterable[MetricSample]): Samples in arrival order

        Returns:
            IngestReport: Accepted count and itemized rejections
        """
        report = IngestReport()
        written: List[MetricSample] = []
        with self._lock:
            for sample in samples:
                reason = self._check(sample)
                if reason:
                    report.rejected.append((sample, reason))
                    continue
                series = self._series.get(sample.series)
                if series is None:
                    series = self._series[sample.series] = _Series()
                series.timestamps.append(sample.timestamp)
                series.values.append(float(sample.value))
                if self._head_ms is None or sample.timestamp > self._head_ms:
                    self._head_ms = sample.timestamp
                report.accepted += 1
                written.append(sample)
            if written and self.snapshot_path is not None:
                self._append_snapshot(written)

        if report.rejected:
            logger.debug(f"Rejected {len(report.rejected)} samples during ingest")
        return report

    def _check(self, sample: MetricSample) -> Optional[str]:
        if sample.timestamp < 0:
            return "negative timestamp"
        cutoff = self._visible_from()
        if cutoff is not None and sample.timestamp < cutoff:
            return "outside retention"
        series = self._series.get(sample.series)
        if series is not None and series.timestamps:
            last = series.timestamps[-1]
            if sample.timestamp == last:
                return "duplicate timestamp"
            if sample.timestamp < last:
                return "out of order"
        return None

    def register_families(self, families: Iterable[MetricFamily]) -> None:
        with self._lock:
            for family in families:
                self._families[family.name] = family

    def prune(self, now_ms: int) -> int:
        """Drop samples older than ``now_ms - retention``; returns how many were removed."""
        cutoff = now_ms - self.retention_ms
        removed = 0
        with self._lock:
            for key in list(self._series):
                series = self._series[key]
                idx = bisect.bisect_left(series.timestamps, cutoff)
                if idx == 0:
                    continue
                fresh = _Series()
                fresh.timestamps = series.timestamps[idx:]
                fresh.values = series.values[idx:]
                removed += idx
                if fresh.timestamps:
                    self._series[key] = fresh
                else:
                    del self._series[key]
            if self._pruned_before is None or cutoff > self._pruned_before:
                self._pruned_before = cutoff
        if removed:
            logger.info(f"Pruned {removed} samples older than {cutoff}")
        return removed

    # read side

    def _visible_from(self) -> Optional[int]:
        bounds = []
        if self._head_ms is not None:
            bounds.append(self._head_ms - self.retention_ms)
        if self._pruned_before is not None:
            bounds.append(self._pruned_before)
        return max(bounds) if bounds else None

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            view = {key: (s.timestamps, s.values, len(s.timestamps)) for key, s in self._series.items()}
            return StoreSnapshot(view, dict(self._families), self._visible_from(), self.lookback_ms)

    def select_range(self, matcher: SeriesMatcher, start: int, end: int) -> Dict[SeriesKey, List[MetricSample]]:
        return self.snapshot().select_range(matcher, start, end)

    def sample_count(self) -> int:
        return self.snapshot().sample_count()

    def series_keys(self) -> List[SeriesKey]:
        return self.snapshot().keys()

    def families(self) -> Dict[str, MetricKind]:
        with self._lock:
            return {name: family.kind for name, family in self._families.items()}

    # persistence

    def _append_snapshot(self, samples: List[MetricSample]) -> None:
        if self._snapshot_file is None:
            self.snapshot_path.parent.mkdir(parents=True, exist_ok=True)
            self._snapshot_file = open(self.snapshot_path, "ab")
        chunks = []
        for sample in samples:
            key = sample.series.canonical().encode("utf-8")
            chunks.append(_KEY_LENGTH.pack(len(key)) + key + _RECORD_TAIL.pack(sample.timestamp, float(sample.value)))
        self._snapshot_file.write(b"".join(chunks))
        self._snapshot_file.flush()

    def close(self) -> None:
        with self._lock:
            if self._snapshot_file is not None:
                self._snapshot_file.close()
                self._snapshot_file = None

    @classmethod
    def load(cls, path: Path, **kwargs) -> "TimeSeriesStore":
        """Rebuild a store by replaying a snapshot file; new samples keep appending to it."""
        path = Path(path)
        samples: List[MetricSample] = []
        keys: Dict[bytes, SeriesKey] = {}
        try:
            data = path.read_bytes() if path.exists() else b""
            pos = 0
            while pos < len(data):
                (length,) = _KEY_LENGTH.unpack_from(data, pos)
                pos += _KEY_LENGTH.size
                raw_key = data[pos:pos + length]
                pos += length
                timestamp, value = _RECORD_TAIL.unpack_from(data, pos)
                pos += _RECORD_TAIL.size
                key = keys.get(raw_key)
                if key is None:
                    key = keys[raw_key] = parse_series_key(raw_key.decode("utf-8"))
                samples.append(MetricSample(key, timestamp, value))
        except struct.error as e:
            logger.error(f"Truncated snapshot file {path}: {str(e)}")
            raise

        store = cls(**kwargs)
        report = store.ingest(samples)
        store.snapshot_path = path
        logger.info(f"Loaded {report.accepted} samples from {path}")
        return store
