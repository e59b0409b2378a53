import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chisquare

from synthseg.manifest import DatasetManifest, ManifestEntry
from synthseg.pcdcore import PointCloud
from synthseg.sampler import (SamplingError, SplitSpec, ball_query, ball_query_all,
                              farthest_point_sample, sample_batch, split_manifest)

from oracles import greedy_fps_oracle


def test_fps_spec_example():
    assert farthest_point_sample([(0, 0, 0), (1, 0, 0), (0.5, 0, 0)], 2, 0).tolist() == [0, 1]


def test_fps_full_and_single():
    pts = np.random.default_rng(0).normal(size=(20, 3))
    assert sorted(farthest_point_sample(pts, 20, 3).tolist()) == list(range(20))
    assert farthest_point_sample(pts, 1, 7).tolist() == [7]


def test_fps_errors():
    with pytest.raises(SamplingError):
        farthest_point_sample(np.zeros((3, 3)), 4)
    with pytest.raises(SamplingError):
        farthest_point_sample(np.zeros((3, 3)), 0)
    with pytest.raises(SamplingError):
        farthest_point_sample(np.zeros((3, 3)), 2, start_index=3)


grid_points = st.integers(1, 40).flatmap(
    lambda n: arrays(np.int64, (n, 3), elements=st.integers(-3, 3)))


@given(grid_points, st.data())
def test_fps_matches_oracle_on_grid_ties(pts, data):
    # Integer coordinates: exact squared distances, many ties and duplicates.
    k = data.draw(st.integers(1, len(pts)))
    start = data.draw(st.integers(0, len(pts) - 1))
    got = farthest_point_sample(pts.astype(float), k, start).tolist()
    assert got == greedy_fps_oracle(pts.tolist(), k, start)
    assert len(set(got)) == k


@given(st.integers(0, 2**32 - 1))
def test_fps_matches_oracle_on_random_floats(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 65))
    pts = rng.uniform(-10, 10, (n, 3))
    k = int(rng.integers(1, n + 1))
    start = int(rng.integers(0, n))
    assert farthest_point_sample(pts, k, start).tolist() == greedy_fps_oracle(pts.tolist(), k, start)


def test_ball_query_examples():
    pts = [(0, 0, 0), (2, 0, 0)]
    assert ball_query(pts, (0, 0, 0), 1.0, 8).tolist() == [0]
    assert ball_query(pts, (100, 100, 100), 1.0, 8).tolist() == []
    many = np.random.default_rng(1).normal(size=(50, 3))
    assert ball_query(many, (0, 0, 0), 1e9, 7).tolist() == list(range(7))
    with pytest.raises(SamplingError):
        ball_query(pts, (0, 0, 0), 0.0, 1)
    with pytest.raises(SamplingError):
        ball_query(pts, (0, 0, 0), 1.0, 0)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0), st.integers(1, 30))
def test_ball_query_predicate_and_prefix(seed, radius, cap):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2, 2, (60, 3))
    c = rng.uniform(-2, 2, 3)
    got = ball_query(pts, c, radius, cap)
    within = [i for i in range(60) if math.dist(pts[i], c) <= radius]
    assert got.tolist() == within[:cap]


def test_ball_query_all_matches_single_queries():
    pts = np.random.default_rng(2).uniform(0, 3, (200, 3))
    nb, counts = ball_query_all(pts, 0.7, 16)
    for i in range(0, 200, 13):
        ref = ball_query(pts, pts[i], 0.7, 16)
        assert counts[i] == len(ref)
        assert nb[i, :counts[i]].tolist() == ref.tolist()
        assert np.all(nb[i, counts[i]:] == -1)


def labeled(n, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(size=(n, 3)) + 5.0, rng.integers(0, 256, (n, 3)),
                      rng.integers(0, 4, n))


def test_sample_batch_exact_size_is_permutation():
    cloud = labeled(8192)
    b = sample_batch(cloud, 8192, rng_seed=4)
    shifted = cloud.positions - cloud.positions.mean(axis=0)
    assert np.allclose(np.sort(b.positions, axis=0), np.sort(shifted, axis=0), atol=1e-9)
    assert np.array_equal(np.sort(b.labels), np.sort(cloud.labels))


def test_sample_batch_small_cloud_uses_replacement():
    cloud = labeled(10)
    b = sample_batch(cloud, 8192, rng_seed=1)
    assert len(b) == 8192 and b.colors.shape == (8192, 3) and b.labels.shape == (8192,)

    def matches_originals(shift):
        d = np.abs((b.positions + shift)[:, None, :] - cloud.positions[None]).max(-1)
        return bool(np.all(d.min(axis=1) < 1e-9))

    # Some original point minus the first sampled row undoes the recentering shift.
    assert any(matches_originals(p - b.positions[0]) for p in cloud.positions)


def test_sample_batch_recentered_and_deterministic():
    cloud = labeled(20000)
    a = sample_batch(cloud, 4096, rng_seed=9)
    b = sample_batch(cloud, 4096, rng_seed=9)
    c = sample_batch(cloud, 4096, rng_seed=10)
    assert np.abs(a.positions.mean(axis=0)).max() <= 1e-9
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, c.labels)


def test_sample_batch_depth_only_zeroes_colors():
    b = sample_batch(labeled(100), 64, rng_seed=0, modality="D")
    assert b.modality == "D" and not b.colors.any()


def test_sample_batch_errors():
    with pytest.raises(SamplingError):
        sample_batch(PointCloud(np.zeros((0, 3)), labels=np.zeros(0)), 8)
    with pytest.raises(SamplingError):
        sample_batch(PointCloud(np.zeros((3, 3))), 8)
    with pytest.raises(SamplingError):
        sample_batch(labeled(5), 8, modality="RGB")


def test_sample_label_distribution_chi_square():
    cloud = PointCloud(np.random.default_rng(0).normal(size=(5000, 3)),
                       labels=np.repeat([1, 2, 3, 4], [2500, 1500, 750, 250]))
    counts = np.zeros(5)
    for seed in range(40):
        counts += np.bincount(sample_batch(cloud, 500, rng_seed=seed).labels, minlength=5)
    expected = counts.sum() * np.array([2500, 1500, 750, 250]) / 5000
    assert chisquare(counts[1:], expected).pvalue > 1e-3


def manifest_of(n):
    return DatasetManifest(tuple(ManifestEntry(f"f{i:03d}", f"f{i:03d}.ply") for i in range(n)),
                           Path("."))


def test_split_examples():
    tr, va = split_manifest(manifest_of(10), SplitSpec(0.8, seed=5))
    assert len(tr) == 8 and len(va) == 2
    ids_tr = {e.frame_id for e in tr}
    ids_va = {e.frame_id for e in va}
    assert not ids_tr & ids_va and len(ids_tr | ids_va) == 10
    again = split_manifest(manifest_of(10), SplitSpec(0.8, seed=5))
    assert [e.frame_id for e in again[0]] == [e.frame_id for e in tr]
    tr1, va1 = split_manifest(manifest_of(1))
    assert len(tr1) == 1 and len(va1) == 0


@given(st.integers(1, 200), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_split_partition_property(n, frac, seed):
    tr, va = split_manifest(manifest_of(n), SplitSpec(frac, seed))
    assert len(tr) == min(n, math.ceil(round(frac * n, 9)))
    ids = [e.frame_id for e in tr] + [e.frame_id for e in va]
    assert sorted(ids) == sorted(e.frame_id for e in manifest_of(n))


def test_split_errors():
    with pytest.raises(SamplingError):
        split_manifest(manifest_of(0))
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(SamplingError):
            SplitSpec(bad)
