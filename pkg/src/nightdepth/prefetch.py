"""Background batch assembly for the training loop.

Training runs on a single thread. Rendering and collating the next batches
happens on a daemon worker that feeds a bounded :class:`Ring`. The worker
produces batches strictly in step order and the consumer drains in FIFO order,
so the batch sequence is the same as a single-threaded run.
"""

import collections
import threading
import time
import warnings
from collections.abc import Callable
from typing import Any


class Ring:
    """Bounded, locked FIFO shared by the batch producer and the training loop.

    By default a push into a full ring is refused, so no batch is ever lost.
    With ``drop_oldest`` it evicts the head instead. Either way ``drops`` goes
    up by one.

    Raises:
        ValueError: If ``capacity`` is not positive.
    """

    def __init__(self, capacity: int, drop_oldest: bool = False) -> None:
        if capacity < 1:
            raise ValueError(f"Ring capacity must be positive, got {capacity}")
        maxlen = capacity if drop_oldest else None
        self._items: collections.deque[Any] = collections.deque(maxlen=maxlen)
        self.capacity = capacity
        self.drop_oldest = drop_oldest
        self._guard = threading.Lock()
        self.drops = 0

    def __len__(self) -> int:
        with self._guard:
            return len(self._items)

    def push(self, item: object) -> bool:
        """Add an item, applying the full-ring policy.

        Returns:
            bool: True if the item was queued, False if it was rejected.
        """
        with self._guard:
            if len(self._items) >= self.capacity:
                self.drops += 1
                if not self.drop_oldest:
                    return False
            self._items.append(item)
            return True

    def drain_upto(self, max_items: int) -> list:
        """Remove and return up to ``max_items`` items, oldest first."""
        with self._guard:
            count = min(max_items, len(self._items))
            return [self._items.popleft() for _ in range(count)]


class BatchWorker:
    """Produce ``make_batch(step)`` for ``step = 0 .. steps-1`` on a background thread.

    Batches go into a reject-newest :class:`Ring`; a rejected push is a stall
    and is retried after ``retry_interval`` seconds. Errors raised by
    ``make_batch`` resurface in :meth:`next_batch`.

    Attributes:
        ring (Ring): Queue of ``(step, batch)`` pairs.
        steps (int): Number of batches to produce.
    """

    def __init__(
        self,
        make_batch: Callable[[int], Any],
        steps: int,
        ring_capacity: int = 4,
        retry_interval: float = 0.005,
    ) -> None:
        """Initialize the worker.

        Args:
            make_batch: Deterministic function of the step index.
            steps: Number of batches to produce.
            ring_capacity: Batches that may wait in the queue.
            retry_interval: Seconds between retries on a full queue.
        """
        self.ring = Ring(ring_capacity)
        self.steps = steps
        self._make_batch = make_batch
        self._retry_interval = retry_interval
        self._next_step = 0
        self._error: BaseException | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._JOIN_TIMEOUT = 5.0

    @property
    def stalls(self) -> int:
        """Pushes rejected because the consumer fell behind."""
        return self.ring.drops

    def start(self) -> "BatchWorker":
        """Start the producer thread."""
        self._thread = threading.Thread(
            target=self._run, name="nightdepth-batches", daemon=True
        )
        self._thread.start()
        return self

    def _run(self) -> None:
        try:
            for step in range(self.steps):
                batch = self._make_batch(step)
                while not self.ring.push((step, batch)):
                    if self._stop.wait(self._retry_interval):
                        return
                if self._stop.is_set():
                    return
        except BaseException as exc:  # handed to the consumer thread
            self._error = exc

    def next_batch(self, timeout: float = 60.0) -> Any:
        """Return the next batch in step order.

        Raises:
            RuntimeError: If the producer failed, has already produced every
                batch, or nothing arrives within ``timeout`` seconds.
        """
        if self._next_step >= self.steps:
            raise RuntimeError(f"All {self.steps} batches were already consumed")
        deadline = time.monotonic() + timeout
        while True:
            items = self.ring.drain_upto(1)
            if items:
                step, batch = items[0]
                self._next_step = step + 1
                return batch
            if self._error is not None:
                raise RuntimeError("Batch producer failed") from self._error
            if self._thread is None or not self._thread.is_alive():
                if not len(self.ring):
                    raise RuntimeError("Batch producer is not running")
            if time.monotonic() > deadline:
                raise RuntimeError(f"No batch arrived within {timeout} seconds")
            time.sleep(0.001)

    def stop(self) -> None:
        """Signal the producer to stop and wait for it to exit."""
        if self._stop.is_set():
            return
        self._stop.set()
        if self._thread:
            self._thread.join(self._JOIN_TIMEOUT)
            if self._thread.is_alive():
                warnings.warn(
                    (
                        "BatchWorker thread did not stop within "
                        f"{self._JOIN_TIMEOUT} seconds; it is a daemon thread and "
                        "exits with the process."
                    ),
                    stacklevel=2,
                )
            self._thread = None

    def __enter__(self) -> "BatchWorker":
        return self.start()

    def __exit__(self, *exc_info: object) -> None:
        self.stop()
