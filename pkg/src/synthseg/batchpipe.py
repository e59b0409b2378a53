"""Bounded prefetching of training batches (training data stacking).

A producer thread runs the FillQueue loop::

    while running:
        if len(Buffer) < BufferLimit:
            Buffer.append(GetBatch())          # load a frame from disk, sample it
        for P in Buffer:
            if len(Queue) >= QueueLimit: break
            Queue.put(P); Buffer.remove(P)
        sleep(poll_interval)

so at most ``queue_limit + buffer_limit`` batches (plus the one under
construction) live in memory however slow the consumer is. Only the manifest
index stays resident; frames are read on demand.

``wait_mode="sleep"`` sleeps every cycle exactly as above. The default
``"event"`` mode skips the sleep while the buffer has room and otherwise waits
on a condition that the consumer signals, with ``poll_interval`` as the
timeout. Bounds and FIFO order are the same in both modes.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from synthseg.io import read_ply
from synthseg.manifest import DatasetManifest
from synthseg.pcdcore import PointCloud
from synthseg.sampler import DEFAULT_SAMPLE_SIZE, Batch, check_modality, sample_batch

log = logging.getLogger(__name__)


class PipeError(RuntimeError):
    pass


class PipeStartupError(PipeError):
    def __init__(self, message: str, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class PipeTimeout(PipeError, TimeoutError):
    pass


class PipeClosed(PipeError):
    pass


@dataclass(frozen=True)
class PipeConfig:
    queue_limit: int = 4
    buffer_limit: int = 2
    poll_interval: float = 0.01
    sample_size: int = DEFAULT_SAMPLE_SIZE
    modality: str = "RGB-D"
    rng_seed: int = 0
    producers: int = 1
    wait_mode: str = "event"
    load_latency: float = 0.0

    def __post_init__(self):
        if self.queue_limit < 1 or self.buffer_limit < 1:
            raise ValueError("queue_limit and buffer_limit must be >= 1")
        if not self.poll_interval > 0:
            raise ValueError("poll_interval must be > 0")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if self.producers < 1:
            raise ValueError("producers must be >= 1")
        if self.wait_mode not in ("event", "sleep"):
            raise ValueError("wait_mode must be 'event' or 'sleep'")
        if self.load_latency < 0:
            raise ValueError("load_latency must be >= 0")
        object.__setattr__(self, "modality", check_modality(self.modality))

    @property
    def resident_bound(self) -> int:
        return self.queue_limit + self.buffer_limit + 1


@dataclass(frozen=True)
class PipeStats:
    batches_produced: int
    batches_consumed: int
    batches_discarded: int
    queue_depth: int
    buffer_depth: int
    peak_resident_batches: int

    def as_dict(self) -> dict:
        return asdict(self)


class FrameDataset:
    """Manifest-backed batch source: cycles a seeded shuffle of the frames.

    Batch ``k`` always comes from the same frame with the same sampling seed,
    whatever the thread timing.
    """

    def __init__(self, manifest: DatasetManifest, config: PipeConfig,
                 loader: Optional[Callable[[str], PointCloud]] = None):
        if len(manifest) == 0:
            raise PipeStartupError("manifest is empty")
        self.manifest = manifest
        self.config = config
        self._loader = loader or (lambda path: read_ply(path))
        self._orders: dict[int, np.ndarray] = {}

    def frame_for(self, k: int) -> int:
        n = len(self.manifest)
        cycle, pos = divmod(k, n)
        order = self._orders.get(cycle)
        if order is None:
            order = np.random.default_rng([self.config.rng_seed, cycle]).permutation(n)
            self._orders = {cycle: order}
        return int(order[pos])

    def load(self, index: int) -> PointCloud:
        entry = self.manifest[index]
        if self.config.load_latency:
            time.sleep(self.config.load_latency)
        return self._loader(str(self.manifest.resolve(entry.ply)))

    def sample(self, k: int) -> Batch:
        i = self.frame_for(k)
        cloud = self.load(i)
        return sample_batch(cloud, self.config.sample_size, [self.config.rng_seed, k],
                            self.config.modality, self.manifest[i].frame_id)


class BatchPipe:
    """Handle over the producer thread(s), Queue and Buffer."""

    def __init__(self, manifest: DatasetManifest, config: PipeConfig = PipeConfig(),
                 loader: Optional[Callable[[str], PointCloud]] = None, check_files: bool = True):
        if len(manifest) == 0:
            raise PipeStartupError("manifest is empty")
        if check_files:
            missing = manifest.missing_files()
            if missing:
                listing = ", ".join(str(p) for p in missing)
                raise PipeStartupError(f"manifest references missing files: {listing}", missing)
        self.config = config
        self.dataset = FrameDataset(manifest, config, loader)
        self._queue: deque = deque()
        self._buffer: list = []
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._space = threading.Condition(self._lock)
        self._stop = threading.Event()
        self._resume = threading.Event()
        self._resume.set()
        self._threads: list[threading.Thread] = []
        self._next_index = 0
        self._constructing = 0
        self._produced = 0
        self._consumed = 0
        self._discarded = 0
        self._peak = 0
        self._error: Optional[BaseException] = None
        self._closed = False

    # -- lifecycle

    def start(self) -> "BatchPipe":
        if self._threads:
            return self
        for i in range(self.config.producers):
            t = threading.Thread(target=self._fill_queue, name=f"fill-queue-{i}", daemon=True)
            self._threads.append(t)
            t.start()
        return self

    def shutdown(self, timeout: Optional[float] = None) -> None:
        """Stop producers, drop whatever is queued or buffered. Idempotent."""
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._stop.set()
            self._resume.set()
            self._not_empty.notify_all()
            self._space.notify_all()
        for t in self._threads:
            t.join(timeout)
        with self._lock:
            self._discarded += len(self._queue) + len(self._buffer)
            self._queue.clear()
            self._buffer.clear()

    def pause(self) -> None:
        """Hold the producer before its next batch (testing aid)."""
        self._resume.clear()

    def resume(self) -> None:
        self._resume.set()

    def __enter__(self) -> "BatchPipe":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()

    @property
    def closed(self) -> bool:
        return self._closed

    # -- producer

    def _resident(self) -> int:
        return len(self._queue) + len(self._buffer) + self._constructing

    def _note_peak(self) -> None:
        r = self._resident()
        if r > self._peak:
            self._peak = r

    def _fill_queue(self) -> None:
        cfg = self.config
        try:
            while not self._stop.is_set():
                self._resume.wait()
                if self._stop.is_set():
                    break
                with self._lock:
                    room = len(self._buffer) + self._constructing < cfg.buffer_limit
                    if room:
                        k = self._next_index
                        self._next_index += 1
                        self._constructing += 1
                        self._note_peak()
                if room:
                    try:
                        batch = self.dataset.sample(k)
                    finally:
                        with self._lock:
                            self._constructing -= 1
                    with self._lock:
                        if self._stop.is_set():
                            break
                        self._buffer.append(batch)
                        self._produced += 1
                        self._note_peak()
                with self._lock:
                    moved = False
                    while self._buffer and len(self._queue) < cfg.queue_limit:
                        self._queue.append(self._buffer.pop(0))
                        moved = True
                    if moved:
                        self._not_empty.notify_all()
                    stalled = (len(self._buffer) + self._constructing >= cfg.buffer_limit)
                    if cfg.wait_mode == "event":
                        if stalled and not self._stop.is_set():
                            self._space.wait(cfg.poll_interval)
                        continue
                self._stop.wait(cfg.poll_interval)
        except BaseException as e:  # surfaced to consumers
            log.exception("batch producer failed")
            with self._lock:
                self._error = e
                self._not_empty.notify_all()

    # -- consumer

    def get_batch(self, timeout: Optional[float] = None) -> Batch:
        """Remove and return the oldest queued batch, waiting up to ``timeout`` seconds."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            while True:
                if self._closed:
                    raise PipeClosed("pipe has been shut down")
                if self._queue:
                    batch = self._queue.popleft()
                    self._consumed += 1
                    self._space.notify_all()
                    return batch
                if self._error is not None:
                    raise PipeError(f"producer failed: {self._error}") from self._error
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise PipeTimeout(f"no batch within {timeout} s")
                self._not_empty.wait(remaining)

    def stats(self) -> PipeStats:
        with self._lock:
            return PipeStats(self._produced, self._consumed, self._discarded,
                             len(self._queue), len(self._buffer), self._peak)


def start(manifest: DatasetManifest, config: PipeConfig = PipeConfig(),
          loader: Optional[Callable[[str], PointCloud]] = None) -> BatchPipe:
    """Start a pipe; a custom ``loader`` replaces the on-disk file check."""
    return BatchPipe(manifest, config, loader, check_files=loader is None).start()


def get_batch(handle: BatchPipe, timeout: Optional[float] = None) -> Batch:
    return handle.get_batch(timeout)


def stats(handle: BatchPipe) -> PipeStats:
    return handle.stats()


def shutdown(handle: BatchPipe) -> None:
    handle.shutdown()


@dataclass(frozen=True)
class BenchResult:
    batches: int
    sync_seconds: float
    prefetch_seconds: float

    @property
    def sync_throughput(self) -> float:
        return self.batches / self.sync_seconds

    @property
    def prefetch_throughput(self) -> float:
        return self.batches / self.prefetch_seconds

    @property
    def speedup(self) -> float:
        return self.prefetch_throughput / self.sync_throughput


def benchmark(manifest: DatasetManifest, config: PipeConfig, batches: int = 200,
              consume: Optional[Callable[[Batch], object]] = None,
              consume_seconds: Optional[float] = None,
              loader: Optional[Callable[[str], PointCloud]] = None) -> BenchResult:
    """Compare a synchronous load-then-sample loop against the prefetching pipe.

    The consumer stands in for a training step: ``consume`` if given, else a
    sleep of ``consume_seconds`` (default: the configured load latency).
    """
    if consume is None:
        delay = config.load_latency if consume_seconds is None else consume_seconds

        def consume(_batch):
            time.sleep(delay)

    ds = FrameDataset(manifest, config, loader)
    t0 = time.perf_counter()
    for k in range(batches):
        consume(ds.sample(k))
    sync = time.perf_counter() - t0

    pipe = BatchPipe(manifest, config, loader, check_files=loader is None).start()
    try:
        t0 = time.perf_counter()
        for _ in range(batches):
            consume(pipe.get_batch(timeout=60.0))
        pre = time.perf_counter() - t0
    finally:
        pipe.shutdown()
    return BenchResult(batches, sync, pre)
