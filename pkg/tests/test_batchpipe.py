import threading
import time
from collections import Counter

import numpy as np
import pytest

from synthseg.batchpipe import (BatchPipe, FrameDataset, PipeClosed, PipeConfig, PipeError,
                                PipeStartupError, PipeTimeout, benchmark, get_batch, shutdown,
                                start, stats)
from synthseg.manifest import DatasetManifest, ManifestEntry

from conftest import memory_loader, memory_manifest


def make_pipe(n=10, latency=0.0, **cfg):
    cfg.setdefault("sample_size", 16)
    config = PipeConfig(**cfg)
    return BatchPipe(memory_manifest(n), config, memory_loader(n, latency=latency),
                     check_files=False)


def wait_for(pred, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(0.005)
    return pred()


def reconciles(s):
    return s.batches_produced - s.batches_consumed - s.batches_discarded == s.queue_depth + s.buffer_depth


def test_config_validation():
    for bad in (dict(queue_limit=0), dict(buffer_limit=0), dict(poll_interval=0),
                dict(sample_size=0), dict(wait_mode="spin"), dict(modality="XYZ")):
        with pytest.raises(ValueError):
            PipeConfig(**bad)
    assert PipeConfig(queue_limit=4, buffer_limit=2).resident_bound == 7


@pytest.mark.parametrize("mode", ["event", "sleep"])
def test_steady_state_with_stalled_consumer(mode):
    # Stepping the loop by hand: the buffer fills (1), drains to the queue, refills,
    # until the queue holds 2; the next batch then stays in the buffer for good.
    with make_pipe(queue_limit=2, buffer_limit=1, wait_mode=mode) as pipe:
        assert wait_for(lambda: pipe.stats().queue_depth == 2 and pipe.stats().buffer_depth == 1)
        time.sleep(0.1)
        s = pipe.stats()
        assert (s.queue_depth, s.buffer_depth, s.batches_produced) == (2, 1, 3)
        assert s.peak_resident_batches <= 2 + 1 + 1


def test_stats_before_production():
    pipe = make_pipe()
    s = stats(pipe)
    assert s.batches_produced == 0 and s.batches_consumed == 0
    pipe.shutdown()


def test_fifo_order_matches_production_order():
    with make_pipe(n=10) as pipe:
        got = [get_batch(pipe, timeout=5) for _ in range(25)]
        assert pipe.stats().batches_consumed == 25
    ref = FrameDataset(memory_manifest(10), pipe.config, memory_loader(10))
    for k, b in enumerate(got):
        expect = ref.sample(k)
        assert b.source_frame == expect.source_frame
        assert np.array_equal(b.positions, expect.positions)
        assert len(b) == 16 and b.colors.shape == (16, 3)


def test_frames_cycle_over_manifest():
    with make_pipe(n=100) as pipe:
        got = [pipe.get_batch(timeout=5).source_frame for _ in range(1000)]
    ids = {e.frame_id for e in memory_manifest(100)}
    counts = Counter(got)
    assert set(counts) == ids and set(counts.values()) == {10}
    # each cycle of 100 covers every frame once
    for c in range(10):
        assert set(got[100 * c:100 * (c + 1)]) == ids


def test_labels_come_from_source_frame():
    with make_pipe(n=14) as pipe:
        for _ in range(30):
            b = pipe.get_batch(timeout=5)
            assert np.all(b.labels == int(b.source_frame[1:]) % 7)


def test_timeout_when_paused():
    pipe = make_pipe()
    pipe.pause()
    pipe.start()
    t0 = time.monotonic()
    with pytest.raises(PipeTimeout):
        pipe.get_batch(timeout=0.05)
    assert time.monotonic() - t0 < 1.0
    pipe.resume()
    assert len(pipe.get_batch(timeout=5)) == 16
    pipe.shutdown()


def test_shutdown_closes_and_is_idempotent():
    pipe = start(memory_manifest(5), PipeConfig(sample_size=8), memory_loader(5))
    pipe.get_batch(timeout=5)
    shutdown(pipe)
    shutdown(pipe)
    assert pipe.closed
    with pytest.raises(PipeClosed):
        pipe.get_batch(timeout=0.1)
    s = pipe.stats()
    assert s.queue_depth == 0 and s.buffer_depth == 0 and reconciles(s)


def test_shutdown_mid_production_delivers_nothing_partial():
    pipe = make_pipe(latency=0.2).start()
    assert wait_for(lambda: pipe.dataset is not None)
    time.sleep(0.05)  # producer is inside a 0.2 s load
    t0 = time.monotonic()
    pipe.shutdown()
    assert time.monotonic() - t0 < 0.2 + 0.5
    assert all(not t.is_alive() for t in pipe._threads)
    s = pipe.stats()
    assert s.batches_produced == 0 and reconciles(s)


def test_shutdown_wakes_blocked_consumer():
    pipe = make_pipe()
    pipe.pause()
    pipe.start()
    errors = []

    def consumer():
        try:
            pipe.get_batch(timeout=10)
        except PipeClosed as e:
            errors.append(e)

    t = threading.Thread(target=consumer)
    t.start()
    time.sleep(0.05)
    pipe.shutdown()
    t.join(2)
    assert not t.is_alive() and len(errors) == 1


def test_concurrent_consumers_no_loss_no_duplicates():
    got, lock = [], threading.Lock()
    with make_pipe(n=30, queue_limit=3, buffer_limit=2) as pipe:
        def consumer():
            for _ in range(100):
                b = pipe.get_batch(timeout=5)
                with lock:
                    got.append(b)

        threads = [threading.Thread(target=consumer) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        s = pipe.stats()
        assert s.batches_consumed == 400
    assert len({id(b) for b in got}) == 400
    s = pipe.stats()
    assert reconciles(s) and s.batches_consumed == 400
    assert s.peak_resident_batches <= 3 + 2 + 1


def test_producer_failure_surfaces():
    def broken(path):
        raise OSError("disk on fire")
    pipe = BatchPipe(memory_manifest(3), PipeConfig(sample_size=4), broken, check_files=False)
    with pipe:
        with pytest.raises(PipeError, match="disk on fire"):
            pipe.get_batch(timeout=5)


def test_startup_errors(tmp_path):
    with pytest.raises(PipeStartupError):
        BatchPipe(DatasetManifest((), tmp_path))
    (tmp_path / "a.ply").write_bytes(b"")
    m = DatasetManifest((ManifestEntry("a", "a.ply"), ManifestEntry("b", "b.ply"),
                         ManifestEntry("c", "sub/c.ply")), tmp_path)
    with pytest.raises(PipeStartupError) as info:
        BatchPipe(m)
    assert [p.name for p in info.value.missing] == ["b.ply", "c.ply"]
    assert "b.ply" in str(info.value) and "c.ply" in str(info.value)


def test_reads_real_ply_frames(tiny_dataset):
    _, manifest = tiny_dataset
    with BatchPipe(manifest, PipeConfig(sample_size=256, modality="D")) as pipe:
        b = pipe.get_batch(timeout=30)
    assert len(b) == 256 and not b.colors.any()
    assert b.source_frame in {e.frame_id for e in manifest}


def test_benchmark_reports_positive_throughput():
    cfg = PipeConfig(sample_size=8, load_latency=0.002)
    r = benchmark(memory_manifest(5), cfg, batches=20, loader=memory_loader(5))
    assert r.batches == 20 and r.sync_throughput > 0 and r.prefetch_throughput > 0
