import numpy as np
import pytest

from cncforge.fields import BoxField, Rotation
from cncforge.ops import DrillOp, MachiningStep, WorkpieceField
from cncforge.voxels import (
    TargetOccupancy,
    VoxelGrid,
    center_axis,
    dump_grid,
    init_labels,
    load_grid,
    negative_centers,
    positive_centers,
    relabel,
)

BLANK = BoxField(0.5, 0.5, 0.5)
BOX = (0.5, 0.5, 0.5)


def full_target(n):
    return TargetOccupancy(np.ones((n, n, n), dtype=bool), BOX)


def upper_half_target(n):
    inside = np.zeros((n, n, n), dtype=bool)
    inside[:, :, n // 2:] = True
    return TargetOccupancy(inside, BOX)


def test_centers_strictly_inside():
    ax = center_axis(0.5, 16)
    assert ax[0] > -0.5 and ax[-1] < 0.5
    assert np.allclose(np.diff(ax), 1.0 / 16)


def test_target_must_be_nonempty():
    with pytest.raises(ValueError):
        TargetOccupancy(np.zeros((8, 8, 8), dtype=bool), BOX)


def test_init_whole_blank_all_negative():
    g = init_labels(full_target(8), BLANK, 8)
    assert np.all(g.labels == -1)


def test_init_upper_half():
    g = init_labels(upper_half_target(8), BLANK, 8)
    assert np.all(g.labels[:, :, 4:] == -1)
    assert np.all(g.labels[:, :, :4] == 1)


def test_labels_partition():
    g = init_labels(upper_half_target(8), BLANK, 8)
    assert np.count_nonzero(g.labels == -1) + np.count_nonzero(g.labels == 1) == 8 ** 3


def test_relabel_of_blank_matches_init():
    target = upper_half_target(16)
    g0 = init_labels(target, BLANK, 16)
    g1 = relabel(g0, WorkpieceField(BLANK), target)
    np.testing.assert_array_equal(g0.labels, g1.labels)


def test_relabel_finished_state_all_negative():
    target = upper_half_target(16)
    g0 = init_labels(target, BLANK, 16)
    # remove everything below z=0 with one huge flat drill
    step = MachiningStep(1, Rotation(), DrillOp(0.0, 0.0, -0.7, 5.0))
    carved = WorkpieceField(BLANK, (step,))
    vals = carved.values(*np.meshgrid(center_axis(0.5, 16),
                                      center_axis(0.5, 16),
                                      center_axis(0.5, 16), indexing="ij"))
    # the drill keeps nothing below its cut ... actually removes everything
    g1 = relabel(g0, carved, target)
    assert np.all(g1.labels == -1)


def test_relabel_matches_per_voxel_bruteforce():
    target = upper_half_target(8)
    g0 = init_labels(target, BLANK, 8)
    drill = DrillOp(0.1, -0.1, -0.6, 0.2)
    wp = WorkpieceField(BLANK, (MachiningStep(1, Rotation(), drill),))
    g1 = relabel(g0, wp, target)
    ax = center_axis(0.5, 8)
    flipped = 0
    for ix in range(8):
        for iy in range(8):
            for iz in range(8):
                p = (ax[ix], ax[iy], ax[iz])
                present = wp.values(*p) < 0
                want = 1 if (present and not target.inside[ix, iy, iz]) else -1
                assert g1.labels[ix, iy, iz] == want
                if g1.labels[ix, iy, iz] != g0.labels[ix, iy, iz]:
                    flipped += 1
    assert flipped > 0  # the drill really removed a +1 column


def test_positive_negative_centers_partition():
    g = init_labels(upper_half_target(8), BLANK, 8)
    pos = positive_centers(g)
    neg = negative_centers(g)
    assert len(pos) + len(neg) == 8 ** 3
    pos_set = {tuple(p) for p in pos}
    neg_set = {tuple(p) for p in neg}
    assert not pos_set & neg_set


def test_single_positive_voxel_center():
    inside = np.ones((8, 8, 8), dtype=bool)
    inside[2, 3, 4] = False
    g = init_labels(TargetOccupancy(inside, BOX), BLANK, 8)
    pos = positive_centers(g)
    ax = center_axis(0.5, 8)
    assert pos.shape == (1, 3)
    np.testing.assert_allclose(pos[0], [ax[2], ax[3], ax[4]])


def test_all_negative_grid_empty_positive_list():
    g = init_labels(full_target(8), BLANK, 8)
    assert positive_centers(g).shape == (0, 3)


def test_negative_centers_all_positive_grid():
    inside = np.zeros((8, 8, 8), dtype=bool)
    inside[0, 0, 0] = True  # occupancy must be nonempty
    g = init_labels(TargetOccupancy(inside, BOX), BLANK, 8)
    assert negative_centers(g).shape == (1, 3)


def test_centers_z_major_order():
    inside = np.ones((8, 8, 8), dtype=bool)
    inside[1, 0, 0] = False
    inside[0, 0, 1] = False   # higher z: must come second? no -- z-major
    g = init_labels(TargetOccupancy(inside, BOX), BLANK, 8)
    pos = positive_centers(g)
    # ordering is by (z, y, x): the voxel with smaller z comes first
    assert pos[0][2] < pos[1][2]


def test_relabel_deterministic():
    target = upper_half_target(16)
    g0 = init_labels(target, BLANK, 16)
    wp = WorkpieceField(BLANK, (MachiningStep(1, Rotation(0.2, 0.1),
                                              DrillOp(0.0, 0.1, -0.2, 0.2)),))
    a = relabel(g0, wp, target)
    b = relabel(g0, wp, target)
    assert a.labels.tobytes() == b.labels.tobytes()


def test_monotone_cleanup_over_prefixes():
    # once a voxel is removed (labeled -1 as "already gone") it never
    # returns to +1 when more steps are appended
    rng = np.random.default_rng(0)
    target = upper_half_target(16)
    g = init_labels(target, BLANK, 16)
    steps = []
    removed = np.zeros_like(g.labels, dtype=bool)
    for i in range(4):
        steps.append(MachiningStep(i + 1, Rotation(*rng.uniform(-0.5, 0.5, 2)),
                                   DrillOp(*rng.uniform(-0.3, 0.3, 3),
                                           rng.uniform(0.05, 0.25))))
        gi = relabel(g, WorkpieceField(BLANK, tuple(steps)), target)
        newly_positive = (gi.labels == 1) & removed
        assert not newly_positive.any()
        removed |= (gi.labels == -1) & ~target.inside


def test_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    labels = rng.choice(np.array([-1, 1], dtype=np.int8), size=(16, 16, 16))
    if not (labels == 1).any():
        labels[0, 0, 0] = 1
    g = VoxelGrid(16, BOX, labels)
    path = tmp_path / "grid.cncv"
    dump_grid(g, path)
    raw = path.read_bytes()
    assert raw[:4] == b"CNCV"
    assert len(raw) == 16 + 16 ** 3
    g2 = load_grid(path)
    np.testing.assert_array_equal(g.labels, g2.labels)


def test_dump_is_z_major(tmp_path):
    labels = -np.ones((8, 8, 8), dtype=np.int8)
    labels[3, 2, 1] = 1  # ix=3, iy=2, iz=1
    g = VoxelGrid(8, BOX, labels)
    path = tmp_path / "g.cncv"
    dump_grid(g, path)
    body = path.read_bytes()[16:]
    flat_index = (1 * 8 + 2) * 8 + 3  # (iz * n + iy) * n + ix
    assert body[flat_index] == 1
    assert sum(1 for b in body if b == 1) == 1


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"XXXX" + b"\x00" * 12 + b"\x01" * 8)
    with pytest.raises(ValueError):
        load_grid(p)
