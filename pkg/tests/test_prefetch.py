"""Tests for the `Ring` buffer and the background `BatchWorker`."""

import threading
import time

import pytest

from nightdepth.prefetch import BatchWorker, Ring


def _pairs(*steps):
    return [(step, f"batch-{step}") for step in steps]


def test_new_ring_is_empty_and_validates_capacity():
    ring = Ring(capacity=4, drop_oldest=False)
    assert (ring.capacity, ring.drop_oldest, ring.drops, len(ring)) == (4, False, 0, 0)
    assert not Ring(capacity=1).drop_oldest
    for bad in (0, -3):
        with pytest.raises(ValueError, match="capacity"):
            Ring(capacity=bad)


def test_drain_respects_limit_and_order():
    ring = Ring(capacity=8)
    for pair in _pairs(0, 1, 2):
        ring.push(pair)
    head = ring.drain_upto(2)
    assert head == _pairs(0, 1)
    assert len(ring) == 1
    assert ring.drain_upto(100) + ring.drain_upto(100) == _pairs(2)


@pytest.mark.parametrize(
    "drop_oldest, accepted, survivors",
    [(True, True, (3, 4, 5)), (False, False, (1, 2, 3))],
)
def test_full_ring_policies(drop_oldest, accepted, survivors):
    """A full ring evicts its head or refuses the push; both count as drops."""
    ring = Ring(capacity=3, drop_oldest=drop_oldest)
    assert all(ring.push(pair) for pair in _pairs(1, 2, 3))
    assert [ring.push(pair) for pair in _pairs(4, 5)] == [accepted, accepted]
    assert ring.drops == 2
    assert ring.drain_upto(10) == _pairs(*survivors)
    assert ring.push((6, "batch-6")) and ring.drops == 2


def test_concurrent_push_and_drain_keep_every_step():
    total = 1500
    ring = Ring(capacity=64, drop_oldest=False)
    received = []

    def feed():
        for step in range(total):
            while not ring.push(step):
                time.sleep(0.0001)

    def collect():
        deadline = time.monotonic() + 5
        while len(received) < total and time.monotonic() < deadline:
            chunk = ring.drain_upto(16)
            received.extend(chunk)
            if not chunk:
                time.sleep(0.0001)

    threads = [threading.Thread(target=feed), threading.Thread(target=collect)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(5)
    assert not any(thread.is_alive() for thread in threads)
    assert received == list(range(total))


def test_worker_delivers_batches_in_step_order():
    """Batches come out exactly as a single-threaded loop would produce them."""
    with BatchWorker(lambda step: step * 10, steps=20, ring_capacity=3) as worker:
        batches = [worker.next_batch(timeout=5) for _ in range(20)]
    assert batches == [step * 10 for step in range(20)]


def test_worker_reports_exhaustion():
    """Asking past the last step is an error."""
    with BatchWorker(lambda step: step, steps=2) as worker:
        worker.next_batch(timeout=5)
        worker.next_batch(timeout=5)
        with pytest.raises(RuntimeError, match="already consumed"):
            worker.next_batch(timeout=5)


def test_worker_surfaces_producer_errors():
    """An exception in make_batch resurfaces on the consumer with its cause."""

    def make_batch(step):
        if step == 2:
            raise ValueError("render failed")
        return step

    with BatchWorker(make_batch, steps=5) as worker:
        assert worker.next_batch(timeout=5) == 0
        assert worker.next_batch(timeout=5) == 1
        with pytest.raises(RuntimeError, match="producer failed") as excinfo:
            worker.next_batch(timeout=5)
    assert isinstance(excinfo.value.__cause__, ValueError)


def test_worker_that_was_never_started():
    """Without a producer thread nothing can arrive."""
    worker = BatchWorker(lambda step: step, steps=1)
    with pytest.raises(RuntimeError, match="not running"):
        worker.next_batch(timeout=1)


def test_slow_consumer_causes_stalls():
    """A full queue rejects pushes, which count as stalls, and loses nothing."""
    worker = BatchWorker(
        lambda step: step, steps=4, ring_capacity=1, retry_interval=0.001
    )
    with worker:
        deadline = time.monotonic() + 5
        while worker.stalls == 0 and time.monotonic() < deadline:
            time.sleep(0.001)
        assert worker.stalls >= 1
        assert [worker.next_batch(timeout=5) for _ in range(4)] == [0, 1, 2, 3]


def test_stop_warns_when_producer_hangs():
    """A producer stuck in make_batch triggers a warning instead of a hang."""
    release = threading.Event()

    def make_batch(step):
        release.wait(5)
        return step

    worker = BatchWorker(make_batch, steps=3).start()
    worker._JOIN_TIMEOUT = 0.01
    try:
        with pytest.warns(UserWarning, match="did not stop"):
            worker.stop()
    finally:
        release.set()
    worker.stop()
