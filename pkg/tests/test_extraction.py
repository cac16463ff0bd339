import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_rotation
from oracles import pinhole_point, union_find_blobs
from semloc.errors import InputError, InvalidDepthError
from semloc.extraction import (
    Blob,
    LabeledFrame,
    backproject,
    extract_vertices,
    load_frame,
    merge_vertices,
    read_manifest,
    read_semantic,
    reproject,
    segment,
    write_frame_meta,
    write_grid_csv,
    write_pgm,
)
from semloc.graph import RigidTransform, SemanticVertex

INTR = (500.0, 500.0, 320.0, 240.0)


def frame(sem, depth=None, intr=INTR, pose=None):
    sem = np.asarray(sem)
    depth = np.full(sem.shape, 5.0) if depth is None else depth
    return LabeledFrame(sem, depth, intr, pose or RigidTransform.identity())


def as_records(blobs):
    return [(b.label, b.pixel_count, b.centroid_px, b.depth_m) for b in blobs]


def test_uniform_image_single_blob():
    blobs = segment(frame(np.ones((10, 10), dtype=int)), min_blob_size=1)
    assert len(blobs) == 1
    assert blobs[0].centroid_px == (4.5, 4.5)
    assert blobs[0].pixel_count == 100


def test_diagonal_squares_are_separate():
    sem = np.zeros((4, 4), dtype=int)
    sem[:2, :2] = 1
    sem[2:, 2:] = 1
    blobs = [b for b in segment(frame(sem), min_blob_size=1) if b.label == 1]
    assert len(blobs) == 2


def test_min_size_and_ignored_labels():
    sem = np.zeros((6, 6), dtype=int)
    sem[0, 0] = 2
    blobs = segment(frame(sem), min_blob_size=2)
    assert [b.label for b in blobs] == [0]
    assert segment(frame(sem), min_blob_size=1, ignored_labels=[0])[0].label == 2


def test_blob_without_valid_depth_dropped():
    sem = np.zeros((3, 3), dtype=int)
    sem[1, 1] = 1
    depth = np.full((3, 3), 4.0)
    depth[1, 1] = np.nan
    labels = [b.label for b in segment(frame(sem, depth), min_blob_size=1)]
    assert labels == [0]


def test_depth_is_median_of_valid_pixels():
    sem = np.zeros((1, 5), dtype=int)
    depth = np.array([[1.0, 0.0, 3.0, np.inf, 10.0]])
    assert segment(frame(sem, depth), min_blob_size=1)[0].depth_m == 3.0


def test_segmentation_matches_union_find(rng):
    for _ in range(20):
        h, w = rng.integers(1, 25, 2)
        sem = rng.integers(0, 4, (h, w))
        depth = rng.uniform(0.5, 20, (h, w))
        depth[rng.random((h, w)) < 0.1] = 0.0
        got = as_records(segment(frame(sem, depth), min_blob_size=2, ignored_labels=[3]))
        want = union_find_blobs(sem, depth, min_size=2, ignored=(3,))
        assert len(got) == len(want)
        for g, e in zip(got, want):
            assert g[:2] == e[:2]
            assert g[2] == pytest.approx(e[2], abs=1e-9)
            assert g[3] == e[3]


def test_components_backend_agree(backend, rng):
    sem = rng.integers(0, 3, (30, 40)).astype(np.int64)
    keep = (sem != 2).astype(np.uint8)
    comp, n = backend.label_components(sem, keep)
    assert comp.max() == n - 1
    assert np.all(comp[sem == 2] == -1)
    # pixels share a component iff the union-find oracle joins them
    recs = union_find_blobs(sem, np.ones(sem.shape), ignored=(2,))
    assert n == len(recs)


def test_backproject_principal_ray():
    blob = Blob(1, 10, (320.0, 240.0), 5.0)
    assert backproject(blob, frame(np.zeros((2, 2)))).position == (0.0, 0.0, 5.0)
    moved = frame(np.zeros((2, 2)), pose=RigidTransform(np.eye(3), [1, 0, 0]))
    assert backproject(blob, moved).position == (1.0, 0.0, 5.0)


def test_backproject_matches_hand_pinhole(rng):
    for _ in range(20):
        R, T = random_rotation(rng), rng.normal(size=3) * 10
        intr = tuple(rng.uniform([200, 200, 100, 100], [800, 800, 400, 300]))
        f = frame(np.zeros((2, 2)), intr=intr, pose=RigidTransform(R, T))
        blob = Blob(0, 1, tuple(rng.uniform(0, 600, 2)), float(rng.uniform(0.5, 50)))
        want = pinhole_point(*blob.centroid_px, blob.depth_m, intr, R.tolist(), T.tolist())
        np.testing.assert_allclose(backproject(blob, f).position, want, rtol=0, atol=1e-9)


def test_backproject_invalid_depth():
    f = frame(np.zeros((2, 2)))
    for d in (0.0, -1.0, np.nan, np.inf):
        with pytest.raises(InvalidDepthError):
            backproject(Blob(0, 1, (0.0, 0.0), d), f)


def test_reproject_round_trip(rng):
    R, T = random_rotation(rng), rng.normal(size=3)
    f = frame(np.zeros((2, 2)), pose=RigidTransform(R, T))
    blob = Blob(0, 1, (101.25, 37.5), 12.0)
    u, v, d = reproject(backproject(blob, f).position, f)
    assert (u, v, d) == pytest.approx((101.25, 37.5, 12.0), abs=1e-6)


def test_merge_midpoint_and_label_gate():
    a = SemanticVertex(0, 1, (0.0, 0.0, 0.0))
    b = SemanticVertex(1, 1, (0.1, 0.0, 0.0))
    merged = merge_vertices([a, b], 1.5)
    assert len(merged) == 1
    assert merged[0].position == pytest.approx((0.05, 0.0, 0.0))
    c = SemanticVertex(1, 2, (0.1, 0.0, 0.0))
    assert len(merge_vertices([a, c], 1.5)) == 2
    with pytest.raises(InputError):
        merge_vertices([a], 0)


def test_merge_planted_objects(rng):
    objects = rng.uniform(0, 100, (40, 3))
    # keep planted objects well separated so each cluster is unambiguous
    while True:
        d = np.linalg.norm(objects[:, None] - objects[None], axis=2) + np.eye(40) * 1e9
        if d.min() > 5:
            break
        objects = rng.uniform(0, 100, (40, 3))
    labels = rng.integers(0, 3, 40)
    obs = []
    for k in rng.permutation(np.repeat(np.arange(40), 5)):
        obs.append(SemanticVertex(0, int(labels[k]), tuple(objects[k] + rng.normal(0, 0.2, 3))))
    merged = merge_vertices(obs, 1.5)
    assert len(merged) == 40
    for v in merged:
        err = np.linalg.norm(objects - v.position, axis=1)
        k = int(np.argmin(err))
        assert labels[k] == v.label and err[k] < 0.2 * 3


def test_frame_validation():
    with pytest.raises(InputError):
        LabeledFrame(np.zeros((2, 2)), np.zeros((3, 2)), INTR, RigidTransform.identity())
    with pytest.raises(InputError):
        LabeledFrame(np.zeros((2, 2)), np.zeros((2, 2)), (0, 1, 0, 0), RigidTransform.identity())
    with pytest.raises(InputError):
        LabeledFrame(np.full((2, 2), 0.5), np.zeros((2, 2)), INTR, RigidTransform.identity())


def test_frame_files_and_manifest(tmp_path, rng):
    sem = np.zeros((20, 30), dtype=int)
    sem[5:10, 5:15] = 300
    depth = np.full(sem.shape, 4.0)
    pose = RigidTransform(random_rotation(rng), [1, 2, 3])
    write_pgm(tmp_path / "a.pgm", sem)
    write_grid_csv(tmp_path / "a_sem.csv", sem)
    write_grid_csv(tmp_path / "a_depth.csv", depth)
    write_frame_meta(tmp_path / "a.meta", INTR, pose)
    np.testing.assert_array_equal(read_semantic(tmp_path / "a.pgm"), sem)
    np.testing.assert_array_equal(read_semantic(tmp_path / "a_sem.csv"), sem)
    (tmp_path / "frames.txt").write_text("# frames\na.pgm a_depth.csv a.meta\n")
    triples = read_manifest(tmp_path / "frames.txt")
    f = load_frame(*triples[0])
    assert f.pose == pose and f.intrinsics == INTR
    verts = extract_vertices([f, f], min_blob_size=10)
    assert sorted(v.label for v in verts) == [0, 300]


def test_manifest_errors(tmp_path):
    (tmp_path / "m.txt").write_text("a b\n")
    with pytest.raises(InputError):
        read_manifest(tmp_path / "m.txt")
    (tmp_path / "x.csv").write_text("0.5,1\n")
    with pytest.raises(InputError):
        read_semantic(tmp_path / "x.csv")


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 2)))
def test_segments_partition_pixels(sem):
    blobs = segment(frame(sem), min_blob_size=1)
    assert sum(b.pixel_count for b in blobs) == sem.size
    for b in blobs:
        u, v = b.centroid_px
        assert 0 <= u <= sem.shape[1] - 1 and 0 <= v <= sem.shape[0] - 1
