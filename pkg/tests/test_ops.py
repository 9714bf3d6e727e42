import math

import numpy as np
import pytest

from cncforge.fields import BoxField, CylinderField, Rotation, eval_cylinder
from cncforge.ops import (
    DrillOp,
    FrozenPath,
    GridPoints,
    MachiningStep,
    MillOp,
    MillPath,
    WorkpieceField,
    apply_step,
    eval_drill,
    eval_mill,
    eval_program,
    op_values_on_grid,
    sample_path,
    validate_step_order,
    workpiece_values_on_grid,
)
from cncforge.voxels import grid_points


def rand_points(rng, n, lo=-0.7, hi=0.7):
    return rng.uniform(lo, hi, size=(n, 3))


# -- path sampling -------------------------------------------------------------

def test_single_control_point_is_constant():
    path = MillPath.from_points([(0.1, 0.2)], depth=0.0)
    for t in (0.0, 0.25, 0.99):
        x, y, z = sample_path(path, t)
        assert (x, y, z) == (0.1, 0.2, 0.0)


def test_two_point_midpoint():
    path = MillPath.from_points([(0.0, 0.0), (1.0, 0.0)], depth=-0.3)
    x, y, z = sample_path(path, 0.5)
    assert (x, y, z) == pytest.approx((0.5, 0.0, -0.3))


def test_t_zero_is_first_control_point():
    path = MillPath.from_points([(0.12, -0.07), (0.5, 0.5), (-0.2, 0.1)], depth=0.0)
    x, y, _ = sample_path(path, 0.0)
    assert (x, y) == (0.12, -0.07)


def test_arc_length_uniform_spacing():
    # corner path with unequal segments: consecutive samples must be equal
    # arc-length apart along the polyline
    path = MillPath.from_points([(0.0, 0.0), (0.3, 0.0), (0.3, 0.9)],
                                depth=0.0, samples=60)
    xs, ys = path.placements()
    total = 1.2
    for j, (x, y) in enumerate(zip(xs, ys)):
        s = total * j / 60
        if s <= 0.3:
            assert (x, y) == pytest.approx((s, 0.0), abs=1e-12)
        else:
            assert (x, y) == pytest.approx((0.3, s - 0.3), abs=1e-12)


def test_empty_control_list_rejected():
    with pytest.raises(ValueError):
        MillPath.from_points(np.zeros((0, 2)), depth=0.0)


# -- mill / drill fields ---------------------------------------------------------

def test_mill_single_point_equals_cylinder():
    rng = np.random.default_rng(0)
    op = MillOp(MillPath.from_points([(0.1, -0.2)], depth=-0.1), 0.07)
    cyl = CylinderField(0.1, -0.2, -0.1, 0.07)
    for p in rand_points(rng, 50):
        assert eval_mill(op, tuple(p)) == eval_cylinder(tuple(p), cyl)


def test_mill_is_min_over_placements():
    rng = np.random.default_rng(1)
    path = MillPath.from_points([(-0.3, 0.0), (0.3, 0.2)], depth=-0.2, samples=25)
    op = MillOp(path, 0.05)
    xs, ys = path.placements()
    for p in rand_points(rng, 20):
        v = eval_mill(op, tuple(p))
        for cx, cy in zip(xs, ys):
            assert v <= eval_cylinder(tuple(p), CylinderField(cx, cy, -0.2, 0.05)) + 1e-15


def test_mill_matches_bruteforce_sweep_oracle():
    rng = np.random.default_rng(2)
    path = MillPath.from_points([(-0.25, -0.1), (0.35, 0.3)], depth=-0.15, samples=100)
    op = MillOp(path, 0.06)
    xs, ys = path.placements()
    for p in rand_points(rng, 10):
        x, y, z = p
        brute = min(
            max((x - cx) ** 2 + (y - cy) ** 2 - 0.06 ** 2, -0.15 - z)
            for cx, cy in zip(xs, ys)
        )
        assert eval_mill(op, tuple(p)) == brute


def test_drill_equals_cylinder_everywhere():
    rng = np.random.default_rng(3)
    op = DrillOp(0.05, -0.1, -0.3, 0.02)
    cyl = CylinderField(0.05, -0.1, -0.3, 0.02)
    for p in rand_points(rng, 100):
        assert eval_drill(op, tuple(p)) == eval_cylinder(tuple(p), cyl)


def test_drill_just_above_center_is_inside():
    op = DrillOp(0.0, 0.0, 0.0, 0.02)
    assert eval_drill(op, (0.0, 0.0, 1e-4)) < 0


def test_drill_boundary_nonnegative():
    op = DrillOp(0.0, 0.0, -0.5, 0.02)
    assert eval_drill(op, (0.02, 0.0, 0.3)) >= 0


def test_mill_degenerate_path_bit_identical_to_drill():
    rng = np.random.default_rng(4)
    mill = MillOp(MillPath.from_points([(0.07, 0.03)], depth=-0.22), 0.04)
    drill = DrillOp(0.07, 0.03, -0.22, 0.04)
    pts = rand_points(rng, 200)
    mv = mill.values(pts[:, 0], pts[:, 1], pts[:, 2])
    dv = drill.values(pts[:, 0], pts[:, 1], pts[:, 2])
    np.testing.assert_array_equal(mv, dv)


# -- carving --------------------------------------------------------------------

BLANK = BoxField(0.5, 0.5, 0.5)


def test_zero_steps_equals_blank():
    rng = np.random.default_rng(5)
    wp = WorkpieceField(BLANK)
    for p in rand_points(rng, 30):
        assert wp.values(*p) == BLANK.values(*p)
        assert eval_program(BLANK, [], tuple(p)) == BLANK.values(*p)


def test_op_above_blank_changes_no_voxel_signs():
    gp = grid_points((0.5, 0.5, 0.5), 64)
    step = MachiningStep(1, Rotation(), DrillOp(0.0, 0.0, 0.6, 0.1))
    before = workpiece_values_on_grid(WorkpieceField(BLANK), gp)
    after = workpiece_values_on_grid(WorkpieceField(BLANK, (step,)), gp)
    np.testing.assert_array_equal(np.sign(before), np.sign(after))


def test_giant_drill_removes_everything():
    gp = grid_points((0.5, 0.5, 0.5), 64)
    step = MachiningStep(1, Rotation(), DrillOp(0.0, 0.0, -0.7, 2.0))
    after = workpiece_values_on_grid(WorkpieceField(BLANK, (step,)), gp)
    assert np.all(after > 0)


def test_one_step_equals_apply_step():
    rng = np.random.default_rng(6)
    step = MachiningStep(1, Rotation(0.3, -0.2), DrillOp(0.1, 0.0, -0.2, 0.15))
    wp = apply_step(WorkpieceField(BLANK), step)
    for p in rand_points(rng, 30):
        assert eval_program(BLANK, [step], tuple(p)) == wp.values(*p)


def test_apply_step_matches_three_stage_oracle():
    # literal pipeline: rotate the field, subtract, rotate back; identical up
    # to the float round-trip of rotating a point forward then backward
    rng = np.random.default_rng(7)
    for _ in range(5):
        rot = Rotation(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
        op = DrillOp(*rng.uniform(-0.2, 0.2, size=3), rng.uniform(0.05, 0.3))
        step = MachiningStep(1, rot, op)
        wp = apply_step(WorkpieceField(BLANK), step)
        for p in rand_points(rng, 200):
            x, y, z = p
            # stage 1: rotated workpiece  G(q) = blank(inverse_rotate(q))
            # stage 2: F = max(G, -op)
            # stage 3: result(p) = F(rotate(p))
            qx, qy, qz = rot.rotate(x, y, z)
            gx, gy, gz = rot.inverse_rotate(qx, qy, qz)
            staged = max(BLANK.values(gx, gy, gz), -op.values(qx, qy, qz))
            assert abs(staged - wp.values(x, y, z)) <= 1e-12


def test_material_monotonicity():
    rng = np.random.default_rng(8)
    wp = WorkpieceField(BLANK)
    pts = rand_points(rng, 500)
    prev = wp.values(pts[:, 0], pts[:, 1], pts[:, 2])
    for i in range(4):
        op = DrillOp(*rng.uniform(-0.3, 0.3, size=3), rng.uniform(0.05, 0.2))
        wp = apply_step(wp, MachiningStep(i + 1, Rotation(*rng.uniform(-1, 1, 2)), op))
        cur = wp.values(pts[:, 0], pts[:, 1], pts[:, 2])
        assert np.all(cur >= prev)
        prev = cur


def test_zero_rotation_program_equals_flat_csg_chain():
    rng = np.random.default_rng(9)
    ops = [DrillOp(*rng.uniform(-0.3, 0.3, size=3), rng.uniform(0.05, 0.2))
           for _ in range(3)]
    steps = [MachiningStep(i + 1, Rotation(), op) for i, op in enumerate(ops)]
    pts = rand_points(rng, 300)
    via_fold = eval_program(BLANK, steps, (pts[:, 0], pts[:, 1], pts[:, 2]))
    flat = BLANK.values(pts[:, 0], pts[:, 1], pts[:, 2])
    for op in ops:
        flat = np.maximum(flat, -op.values(pts[:, 0], pts[:, 1], pts[:, 2]))
    np.testing.assert_array_equal(via_fold, flat)


def test_final_field_is_permutation_invariant():
    # each step rotates only its own query point and the fold is a flat max,
    # so the *final* field cannot depend on step order (losses can: they see
    # the intermediate states).  Guard that invariant explicitly.
    a = MachiningStep(1, Rotation(0.0, 0.0), DrillOp(0.0, 0.0, -0.1, 0.2))
    b = MachiningStep(2, Rotation(1.0, 0.5), DrillOp(0.0, 0.0, -0.1, 0.2))
    rng = np.random.default_rng(10)
    pts = rand_points(rng, 1000)
    ab = eval_program(BLANK, [a, b], (pts[:, 0], pts[:, 1], pts[:, 2]))
    ba = eval_program(BLANK, [MachiningStep(1, b.rotation, b.op),
                              MachiningStep(2, a.rotation, a.op)],
                      (pts[:, 0], pts[:, 1], pts[:, 2]))
    np.testing.assert_array_equal(ab, ba)


def test_validate_step_order():
    mill = MachiningStep(1, Rotation(), MillOp(MillPath.from_points([(0, 0)], 0.0), 0.05))
    drill = MachiningStep(2, Rotation(), DrillOp(0, 0, 0, 0.02))
    validate_step_order([mill, drill])
    with pytest.raises(ValueError):
        validate_step_order([MachiningStep(1, Rotation(), drill.op),
                             MachiningStep(2, Rotation(), mill.op)])
    with pytest.raises(ValueError):
        validate_step_order([mill, MachiningStep(1, Rotation(), drill.op)])


# -- grid fast paths ---------------------------------------------------------

def test_grid_evaluation_matches_pointwise():
    rng = np.random.default_rng(11)
    gp = grid_points((0.5, 0.4, 0.45), 16)
    mill = MachiningStep(1, Rotation(),
                         MillOp(MillPath.from_points([(-0.2, 0.0), (0.2, 0.1)],
                                                     depth=-0.1, samples=20), 0.08))
    rotated = MachiningStep(2, Rotation(0.4, -0.7),
                            MillOp(MillPath.from_points([(0.0, -0.2), (0.1, 0.3)],
                                                        depth=0.0, samples=20), 0.06))
    drill = MachiningStep(3, Rotation(0.2, 0.1), DrillOp(0.1, 0.1, -0.3, 0.05))
    wp = WorkpieceField(BoxField(0.5, 0.4, 0.45), (mill, rotated, drill))
    fast = workpiece_values_on_grid(wp, gp)
    slow = wp.values(gp.flat_x, gp.flat_y, gp.flat_z)
    np.testing.assert_array_equal(fast, slow)


def test_grid_op_values_match_scalar_loop():
    gp = grid_points((0.5, 0.5, 0.5), 8)
    op = MillOp(MillPath.from_points([(-0.1, 0.0), (0.2, 0.2)], depth=-0.2,
                                     samples=10), 0.1)
    rot = Rotation(0.3, 0.9)
    fast = op_values_on_grid(op, rot, gp)
    for i in np.random.default_rng(12).integers(0, gp.size, 40):
        p = (gp.flat_x[i], gp.flat_y[i], gp.flat_z[i])
        assert fast[i] == op.values(*rot.rotate(*p))


def test_frozen_path_replays_same_placements():
    path = MillPath.from_points([(0.0, 0.0), (0.3, 0.0), (0.3, 0.4)],
                                depth=-0.25, samples=40)
    xs, ys = path.placements()
    frozen = FrozenPath(np.asarray(xs), np.asarray(ys), -0.25)
    rng = np.random.default_rng(13)
    pts = rand_points(rng, 100)
    a = MillOp(path, 0.05).values(pts[:, 0], pts[:, 1], pts[:, 2])
    b = MillOp(frozen, 0.05).values(pts[:, 0], pts[:, 1], pts[:, 2])
    np.testing.assert_array_equal(a, b)
