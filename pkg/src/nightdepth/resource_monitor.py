"""Process CPU, memory and step-rate sampling for training runs.

The trainer polls :class:`ResourceMonitor` once per optimizer step; the monitor
decides whether enough wall time has passed to take another psutil reading.
"""

from collections.abc import Callable
from dataclasses import asdict, dataclass
from statistics import fmean
from time import monotonic
from typing import Any, NamedTuple

try:  # pragma: no cover
    import psutil as _psutil  # type: ignore
except ImportError as exc:  # pragma: no cover
    _psutil = None  # type: ignore
    _PSUTIL_MISSING: ImportError | None = exc
else:  # pragma: no cover
    _PSUTIL_MISSING = None


class _Reading(NamedTuple):
    time: float
    step: int
    process_cpu: float
    rss: float
    system_cpu: float


@dataclass(frozen=True)
class ResourceUsage:
    """What a training run cost, merged into ``summary.json`` under ``resources``.

    ``steps_per_second`` spans the first and last reading and is ``None`` until
    two readings at different times exist.
    """

    process_cpu_percent_avg: float
    process_rss_avg_bytes: float
    process_rss_peak_bytes: float
    system_cpu_percent_avg: float | None
    steps_per_second: float | None

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready mapping."""
        return asdict(self)


class ResourceMonitor:
    """Throttled psutil sampler keyed by training step.

    Args:
        interval: Minimum wall-clock seconds between two readings.
        psutil: Module exposing ``Process()`` and ``cpu_percent``; the real
            psutil when omitted.
        clock: Monotonic time source.

    Raises:
        ValueError: If ``interval`` is not positive.
        RuntimeError: If psutil is not installed and none was passed in.
    """

    def __init__(
        self,
        *,
        interval: float = 1.0,
        psutil: Any | None = None,
        clock: Callable[[], float] = monotonic,
    ) -> None:
        if interval <= 0:
            raise ValueError(f"interval must be positive, got {interval}")
        if psutil is None:
            if _psutil is None:
                raise RuntimeError("psutil is not installed") from _PSUTIL_MISSING
            psutil = _psutil
        self.interval = interval
        self._psutil = psutil
        self._clock = clock
        self._process = psutil.Process()
        self._readings: list[_Reading] = []
        self._last = clock()
        # psutil reports CPU since the previous call; the first call is a baseline.
        self._process.cpu_percent(interval=None)
        psutil.cpu_percent(interval=None)

    @property
    def readings(self) -> int:
        """Number of readings taken so far."""
        return len(self._readings)

    def maybe_sample(self, *, step: int, now: float | None = None) -> bool:
        """Take a reading at ``step`` if ``interval`` seconds have passed.

        Returns:
            Whether a reading was taken.
        """
        now = self._clock() if now is None else now
        if now - self._last < self.interval:
            return False
        self._read(now, step)
        return True

    def finalize(self, *, step: int) -> None:
        """Take a closing reading regardless of the interval."""
        self._read(self._clock(), step)

    def snapshot(self) -> ResourceUsage | None:
        """Aggregate the readings, or ``None`` before the first one."""
        if not self._readings:
            return None
        rss = [reading.rss for reading in self._readings]
        first, last = self._readings[0], self._readings[-1]
        elapsed = last.time - first.time
        rate = (last.step - first.step) / elapsed if elapsed > 0 else None
        return ResourceUsage(
            process_cpu_percent_avg=fmean(r.process_cpu for r in self._readings),
            process_rss_avg_bytes=fmean(rss),
            process_rss_peak_bytes=max(rss),
            system_cpu_percent_avg=fmean(r.system_cpu for r in self._readings),
            steps_per_second=rate,
        )

    def _read(self, now: float, step: int) -> None:
        self._last = now
        self._readings.append(
            _Reading(
                time=now,
                step=step,
                process_cpu=float(self._process.cpu_percent(interval=None)),
                rss=float(self._process.memory_info().rss),
                system_cpu=float(self._psutil.cpu_percent(interval=None)),
            )
        )
