import pytest

from src.metrics.store import TimeSeriesStore
from src.metrics.types import MetricSample, SeriesKey
from src.utils.clock import SimulatedClock


def series(name, **labels):
    return SeriesKey.of(name, labels)


def add_points(store, key, points):
    """Ingest (seconds, value) pairs for one series."""
    return store.ingest([MetricSample(key, int(t * 1000), float(v)) for t, v in points])


@pytest.fixture
def store():
    return TimeSeriesStore()


@pytest.fixture
def clock():
    return SimulatedClock(0)


@pytest.fixture
def counter_store(store):
    """requests_total for codes 200/201/404, one sample per minute for ten minutes."""
    for code, per_minute in (("200", 60), ("201", 30), ("404", 6)):
        key = series("requests_total", code=code)
        add_points(store, key, [(60 * i, per_minute * i) for i in range(11)])
    return store
