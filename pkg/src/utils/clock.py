"""Clocks shared by the simulator, the ledger network and the monitor."""
import threading
import time


class WallClock:
    """Real time, used in service mode."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)

    def advance_to(self, ms: int) -> None:
        delay = (ms - self.now_ms()) / 1000.0
        if delay > 0:
            time.sleep(delay)


class SimulatedClock:
    """Manually advanced millisecond clock; time never goes backwards."""

    def __init__(self, start_ms: int = 0):
        if start_ms < 0:
            raise ValueError("start_ms must be >= 0")
        self._now = int(start_ms)
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise ValueError("cannot advance by a negative amount")
        with self._lock:
            self._now += int(ms)
            return self._now

    def advance_to(self, ms: int) -> None:
        with self._lock:
            if ms > self._now:
                self._now = int(ms)

    def sleep(self, seconds: float) -> None:
        self.advance(int(round(seconds * 1000)))
