"""Snapshot assembly, scaling, derivative estimation, and the text format."""

import numpy as np
import pytest

from morcal.errors import DataError
from morcal.fom import fom_integrate
from morcal.snapshots import (
    SCALE_FLOOR,
    ScalingSpec,
    SnapshotSet,
    apply_scaling,
    assemble_snapshots,
    concat_snapshot_sets,
    estimate_derivatives,
    fit_scaling,
    invert_scaling,
    load_snapshots,
    save_snapshots,
    split_trajectories,
    to_trajectories,
)

FIELDS = [("T_c", 0, 3), ("T_s", 3, 6)]


def _toy_set(m=5, l=1, with_derivatives=True, seed=7):
    rng = np.random.default_rng(seed)
    data = 500.0 + 40.0 * rng.standard_normal((6, m * l))
    offsets = np.arange(l + 1) * m
    times = [np.arange(m) * 2.0 for _ in range(l)]
    controls = np.column_stack([np.ones(m * l), np.zeros(m * l)])
    derivatives = rng.standard_normal((6, m * l)) if with_derivatives else None
    return SnapshotSet(
        data=data,
        trajectory_offsets=offsets,
        times=times,
        controls=controls,
        fields=list(FIELDS),
        derivatives=derivatives,
    )


def test_assemble_from_fom_trajectories(small_cfg, step_signal):
    traj = fom_integrate(small_cfg, step_signal, save_every=40)
    combined = assemble_snapshots([traj, traj])
    assert combined.l == 2
    assert combined.m == 2 * traj.times.size
    assert np.array_equal(combined.data[:, : traj.times.size], traj.states)
    assert combined.derivatives is not None
    back = to_trajectories(combined)
    assert len(back) == 2
    assert np.array_equal(back[1].states, traj.states)
    assert np.array_equal(back[1].controls, traj.controls)


def test_assemble_rejects_mixed_derivative_presence(small_cfg, step_signal):
    traj = fom_integrate(small_cfg, step_signal, save_every=40)
    bare = to_trajectories(assemble_snapshots([traj]))[0]
    bare.derivatives = None
    with pytest.raises(DataError):
        assemble_snapshots([traj, bare])


def test_split_and_concat_round_trip():
    s = _toy_set(m=4, l=3)
    parts = split_trajectories(s)
    assert len(parts) == 3
    rebuilt = concat_snapshot_sets(parts)
    assert np.array_equal(rebuilt.data, s.data)
    assert np.array_equal(rebuilt.trajectory_offsets, s.trajectory_offsets)
    assert np.array_equal(rebuilt.controls, s.controls)


def test_fit_scaling_matches_block_statistics():
    s = _toy_set(m=50)
    spec = fit_scaling(s)
    for i, (_, start, end) in enumerate(FIELDS):
        block = s.data[start:end, :]
        assert np.isclose(spec.shift[i], block.mean())
        assert np.isclose(spec.scale[i], block.std())


def test_fit_scaling_floors_constant_blocks():
    s = _toy_set(m=6)
    s.data[3:6, :] = 7.0
    spec = fit_scaling(s)
    assert spec.scale[1] == SCALE_FLOOR


def test_apply_and_invert_scaling_round_trip():
    s = _toy_set(m=12)
    spec = fit_scaling(s)
    scaled = apply_scaling(s, spec)
    assert scaled.scaling is spec
    # scaled blocks are standardized
    for _, start, end in FIELDS:
        block = scaled.data[start:end, :]
        assert abs(block.mean()) < 1e-12
        assert np.isclose(block.std(), 1.0)
    # derivatives are divided by the scale only, never shifted
    assert np.allclose(
        scaled.derivatives, s.derivatives / spec.row_scale[:, None], rtol=1e-14
    )
    back = invert_scaling(scaled)
    assert np.allclose(back.data, s.data, rtol=1e-13)
    assert np.allclose(back.derivatives, s.derivatives, rtol=1e-13)
    assert back.scaling is None


def test_apply_scaling_twice_is_rejected():
    s = _toy_set()
    spec = fit_scaling(s)
    scaled = apply_scaling(s, spec)
    with pytest.raises(DataError):
        apply_scaling(scaled, spec)


def test_estimate_derivatives_exact_on_quadratics():
    """Second-order stencils reproduce polynomials of degree two exactly."""
    m = 9
    t = np.arange(m) * 0.5
    row = 3.0 + 2.0 * t - 0.7 * t**2
    want = 2.0 - 1.4 * t
    s = SnapshotSet(
        data=np.vstack([row, row, np.ones(m), 2.0 * np.ones(m), row, row]),
        trajectory_offsets=np.array([0, m]),
        times=[t],
        controls=np.zeros((m, 2)),
        fields=list(FIELDS),
    )
    out = estimate_derivatives(s)
    assert out.shape == s.data.shape
    assert np.allclose(out[0, :], want, rtol=1e-11, atol=1e-11)
    assert np.allclose(out[2, :], 0.0, atol=1e-12)


def test_estimate_derivatives_is_per_trajectory():
    m = 5
    t = np.arange(m) * 1.0
    row_a = t**2
    row_b = 10.0 - t**2
    s = SnapshotSet(
        data=np.hstack([np.tile(row_a, (6, 1)), np.tile(row_b, (6, 1))]),
        trajectory_offsets=np.array([0, m, 2 * m]),
        times=[t, t],
        controls=np.zeros((2 * m, 2)),
        fields=list(FIELDS),
    )
    out = estimate_derivatives(s)
    assert np.allclose(out[0, :m], 2.0 * t, atol=1e-11)
    assert np.allclose(out[0, m:], -2.0 * t, atol=1e-11)


def test_estimate_derivatives_requires_uniform_spacing():
    s = _toy_set(m=5)
    s.times[0][-1] += 0.5
    with pytest.raises(DataError):
        estimate_derivatives(s)


def test_save_load_round_trip(tmp_path):
    s = _toy_set(m=7, l=2)
    path = tmp_path / "snaps.txt"
    save_snapshots(s, path)
    loaded = load_snapshots(path)
    assert loaded.n == s.n and loaded.m == s.m and loaded.l == s.l
    assert np.array_equal(loaded.data, s.data)
    assert np.array_equal(loaded.derivatives, s.derivatives)
    assert np.array_equal(loaded.controls, s.controls)
    assert loaded.fields == s.fields
    for a, b in zip(loaded.times, s.times):
        assert np.allclose(a, b, rtol=1e-15)
    # a second save of the loaded set reproduces the file byte for byte
    path2 = tmp_path / "snaps2.txt"
    save_snapshots(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_save_load_without_derivatives(tmp_path):
    s = _toy_set(m=4, with_derivatives=False)
    path = tmp_path / "bare.txt"
    save_snapshots(s, path)
    loaded = load_snapshots(path)
    assert loaded.derivatives is None


def test_load_rejects_truncated_file(tmp_path):
    s = _toy_set(m=4)
    path = tmp_path / "snaps.txt"
    save_snapshots(s, path)
    text = path.read_text().splitlines()
    (tmp_path / "bad.txt").write_text("\n".join(text[:-2]) + "\n")
    with pytest.raises(DataError):
        load_snapshots(tmp_path / "bad.txt")


def test_scaling_spec_validation():
    with pytest.raises(DataError):
        ScalingSpec(fields=list(FIELDS), shift=np.zeros(2), scale=np.array([1.0, 0.0]))
    with pytest.raises(DataError):
        ScalingSpec(fields=list(FIELDS), shift=np.zeros(3), scale=np.ones(2))
