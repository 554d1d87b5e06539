import numpy as np
import pytest

from trajvrnn.data import (
    Dataset, DynamicsParams, MaskingSpec, TrajectorySequence,
    apply_camera_mask, apply_circle_mask, apply_mask, build_dataset,
    generate_sequences, read_dataset, split_dataset, validate_dataset,
    write_dataset,
)
from trajvrnn.errors import ConfigError, DataError


def make_seq(coords, ref, t_past=None):
    coords = np.asarray(coords, dtype=float)
    t = coords.shape[0]
    return TrajectorySequence(id="s0", coords=coords,
                              reference_track=np.asarray(ref, dtype=float),
                              t_past=t_past if t_past is not None else t,
                              t_future=0 if t_past is None else t - t_past)


# ---------------------------------------------------------------------------
# generator


def test_generator_deterministic():
    a = generate_sequences(3, 4, 8, 2, seed=99)
    b = generate_sequences(3, 4, 8, 2, seed=99)
    for sa, sb in zip(a, b):
        assert sa.id == sb.id
        assert np.array_equal(sa.coords, sb.coords)
        assert np.array_equal(sa.reference_track, sb.reference_track)


def test_generator_degenerate_dynamics_stationary():
    params = DynamicsParams(attraction=0.0, repulsion=0.0, noise_accel=0.0)
    seqs = generate_sequences(2, 3, 6, 2, seed=1, dynamics=params)
    for seq in seqs:
        np.testing.assert_array_equal(seq.coords, np.broadcast_to(
            seq.coords[0], seq.coords.shape))


def test_generator_velocity_bound_sweep():
    params = DynamicsParams()
    seqs = generate_sequences(1000, 5, 10, 2, seed=7, dynamics=params)
    worst = 0.0
    for seq in seqs:
        step = np.linalg.norm(np.diff(seq.coords, axis=0), axis=-1)
        worst = max(worst, step.max())
    assert worst <= params.v_max + 1e-12


def test_generator_count_validation():
    with pytest.raises(ConfigError):
        generate_sequences(0, 3, 4, 2, seed=0)


# ---------------------------------------------------------------------------
# circle mask


def test_circle_boundary_inclusive():
    coords = np.array([[[3.0, 4.0]]])
    ref = np.array([[0.0, 0.0]])
    seq = make_seq(coords, ref)
    np.testing.assert_array_equal(apply_circle_mask(seq, 5.0), [[1.0]])
    np.testing.assert_array_equal(apply_circle_mask(seq, 3.0), [[0.0]])


def test_circle_field_diameter_all_visible():
    seqs = generate_sequences(5, 4, 8, 2, seed=3)
    for seq in seqs:
        mask = apply_circle_mask(seq, 1000.0)
        assert mask.all()


def test_circle_monotone_in_radius():
    seqs = generate_sequences(50, 5, 12, 3, seed=11)
    for seq in seqs:
        m3 = apply_circle_mask(seq, 3.0)
        m5 = apply_circle_mask(seq, 5.0)
        m7 = apply_circle_mask(seq, 7.0)
        assert (m3 <= m5).all() and (m5 <= m7).all()


# ---------------------------------------------------------------------------
# camera mask


def test_camera_on_axis_visible():
    seq = make_seq([[[5.0, 0.0]]], [[1.0, 0.0]])
    mask = apply_camera_mask(seq, 10.0, camera=(0.0, 0.0))
    np.testing.assert_array_equal(mask, [[1.0]])


def test_camera_perpendicular_invisible():
    seq = make_seq([[[0.0, 5.0]]], [[1.0, 0.0]])
    mask = apply_camera_mask(seq, 10.0, camera=(0.0, 0.0))
    np.testing.assert_array_equal(mask, [[0.0]])


def test_camera_agent_at_camera_visible():
    seq = make_seq([[[0.0, 0.0]]], [[1.0, 0.0]])
    mask = apply_camera_mask(seq, 10.0, camera=(0.0, 0.0))
    np.testing.assert_array_equal(mask, [[1.0]])


def test_camera_wide_aperture_only_hides_behind():
    # at 179.9 degrees, only agents almost exactly behind the camera drop out
    seqs = generate_sequences(20, 6, 10, 2, seed=13)
    hidden = total = 0
    for seq in seqs:
        mask = apply_camera_mask(seq, 179.9)
        hidden += (mask == 0).sum()
        total += mask.size
    assert hidden / total < 0.001


def test_camera_monotone_in_angle():
    seqs = generate_sequences(50, 5, 12, 3, seed=17)
    for seq in seqs:
        m10 = apply_camera_mask(seq, 10.0)
        m20 = apply_camera_mask(seq, 20.0)
        m30 = apply_camera_mask(seq, 30.0)
        assert (m10 <= m20).all() and (m20 <= m30).all()


def test_camera_ref_at_camera_rejected():
    seq = make_seq([[[1.0, 1.0]]], [[0.0, 0.0]])
    with pytest.raises(DataError):
        apply_camera_mask(seq, 10.0, camera=(0.0, 0.0))


def test_masking_never_alters_coordinates():
    seqs = generate_sequences(5, 4, 10, 2, seed=19)
    for seq in seqs:
        before = seq.coords.copy()
        apply_circle_mask(seq, 5.0)
        apply_camera_mask(seq, 20.0)
        np.testing.assert_array_equal(seq.coords, before)


def test_masking_spec_validation():
    with pytest.raises(ConfigError):
        MaskingSpec(mode="circle", radius=-1.0)
    with pytest.raises(ConfigError):
        MaskingSpec(mode="camera", angle=200.0)
    with pytest.raises(ConfigError):
        MaskingSpec(mode="square", radius=1.0)


# ---------------------------------------------------------------------------
# splitting


def test_split_sizes_and_partition():
    seqs = generate_sequences(10, 3, 6, 2, seed=23)
    train, test = split_dataset(seqs, 0.8, seed=5)
    assert len(train) == 8 and len(test) == 2
    ids = {s.id for s in train} | {s.id for s in test}
    assert ids == {s.id for s in seqs}
    assert not ({s.id for s in train} & {s.id for s in test})


def test_split_deterministic():
    seqs = generate_sequences(10, 3, 6, 2, seed=23)
    a = split_dataset(seqs, 0.7, seed=9)
    b = split_dataset(seqs, 0.7, seed=9)
    assert [s.id for s in a[0]] == [s.id for s in b[0]]


def test_split_rejects_empty_side():
    seqs = generate_sequences(3, 3, 6, 2, seed=23)
    with pytest.raises(ConfigError):
        split_dataset(seqs, 0.01, seed=0)
    with pytest.raises(ConfigError):
        split_dataset(seqs, 1.5, seed=0)


# ---------------------------------------------------------------------------
# file round-trips


def test_write_read_roundtrip(tmp_path):
    seqs = generate_sequences(4, 3, 6, 2, seed=29)
    ds = build_dataset(seqs, MaskingSpec(mode="circle", radius=5.0),
                       split="train", seed=29)
    path = tmp_path / "round.trajset"
    write_dataset(path, ds)
    back = read_dataset(path)
    assert back.split == "train" and back.spec.radius == 5.0
    for s1, s2, m1, m2 in zip(ds.sequences, back.sequences, ds.masks, back.masks):
        assert s1.id == s2.id
        assert np.array_equal(s1.coords, s2.coords)
        assert np.array_equal(s1.reference_track, s2.reference_track)
        assert np.array_equal(m1, m2)
    validate_dataset(back)


def test_write_read_roundtrip_with_results(tmp_path):
    seqs = generate_sequences(2, 3, 6, 2, seed=31)
    ds = build_dataset(seqs, MaskingSpec(mode="camera", angle=20.0),
                       split="test", seed=31)
    rng = np.random.default_rng(0)
    ds.results = [(rng.normal(size=(6, 3, 2)), rng.normal(size=(2, 3, 2)))
                  for _ in seqs]
    path = tmp_path / "results.trajset"
    write_dataset(path, ds)
    back = read_dataset(path)
    for (i1, p1), (i2, p2) in zip(ds.results, back.results):
        assert np.array_equal(i1, i2) and np.array_equal(p1, p2)


def test_same_seed_identical_bytes(tmp_path):
    def build(path):
        seqs = generate_sequences(3, 3, 6, 2, seed=37)
        ds = build_dataset(seqs, MaskingSpec(mode="circle", radius=4.0),
                           split="train", seed=37)
        write_dataset(path, ds)
        return path.read_bytes()

    assert build(tmp_path / "a.trajset") == build(tmp_path / "b.trajset")


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.trajset"
    path.write_bytes(b"not a dataset\n")
    with pytest.raises(DataError) as err:
        read_dataset(path)
    assert "line 1" in str(err.value)


def test_read_rejects_truncated_payload(tmp_path):
    seqs = generate_sequences(2, 3, 6, 2, seed=41)
    ds = build_dataset(seqs, MaskingSpec(mode="circle", radius=4.0),
                       split="train", seed=41)
    path = tmp_path / "trunc.trajset"
    write_dataset(path, ds)
    blob = path.read_bytes()
    path.write_bytes(blob[:-20])
    with pytest.raises(DataError) as err:
        read_dataset(path)
    assert "truncated" in str(err.value)


def test_read_rejects_corrupted_count(tmp_path):
    seqs = generate_sequences(2, 3, 6, 2, seed=43)
    ds = build_dataset(seqs, MaskingSpec(mode="circle", radius=4.0),
                       split="train", seed=43)
    path = tmp_path / "count.trajset"
    write_dataset(path, ds)
    text = path.read_bytes()
    path.write_bytes(text.replace(b"count=2", b"count=9", 1))
    with pytest.raises(DataError):
        read_dataset(path)


def test_validate_detects_scenario_mismatch(tmp_path):
    seqs = generate_sequences(2, 3, 6, 2, seed=47)
    ds = build_dataset(seqs, MaskingSpec(mode="circle", radius=4.0),
                       split="train", seed=47)
    ds.masks[0] = 1.0 - ds.masks[0]
    with pytest.raises(DataError):
        validate_dataset(ds)


def test_dataset_shape_consistency_enforced():
    seqs = generate_sequences(1, 3, 6, 2, seed=53)
    with pytest.raises(DataError):
        Dataset(spec=MaskingSpec(mode="circle", radius=1.0), split="train",
                seed=0, sequences=seqs, masks=[np.zeros((5, 3))])
