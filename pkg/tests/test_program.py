import numpy as np
import pytest

from cncforge.program import (
    DRILL_RADII,
    MILL_RADII,
    MachiningProgram,
    ProgramError,
    ProgramStep,
    expected_gcode_lines,
    export_gcode,
    gcode_lines,
    load_program,
    replay,
    replay_occupancy,
    save_program,
    to_workpiece,
)

BOX = (0.5, 0.5, 0.5)


def mill_step(index, points, depth=-0.2, radius=0.05, rot=(0.0, 0.0)):
    return ProgramStep(index=index, kind="mill", theta_x=rot[0], theta_y=rot[1],
                       radius=radius, points=np.asarray(points, dtype=np.float64),
                       depth=depth)


def drill_step(index, center, radius=0.02, rot=(0.0, 0.0)):
    return ProgramStep(index=index, kind="drill", theta_x=rot[0], theta_y=rot[1],
                       radius=radius, center=np.asarray(center, dtype=np.float64))


def random_program(rng, n_mills=2, n_drills=2, samples=5):
    steps = []
    for i in range(n_mills):
        pts = rng.uniform(-0.5, 0.5, size=(samples, 2))
        steps.append(mill_step(i + 1, pts, depth=float(rng.uniform(-0.5, 0.3)),
                               radius=float(rng.choice(MILL_RADII)),
                               rot=tuple(rng.uniform(-np.pi, np.pi, 2))))
    for j in range(n_drills):
        steps.append(drill_step(n_mills + j + 1, rng.uniform(-0.4, 0.4, 3),
                                radius=float(rng.choice(DRILL_RADII)),
                                rot=tuple(rng.uniform(-np.pi, np.pi, 2))))
    return MachiningProgram(BOX, tuple(steps))


def programs_equal(a: MachiningProgram, b: MachiningProgram) -> bool:
    if a.blank != b.blank or len(a.steps) != len(b.steps):
        return False
    for s, t in zip(a.steps, b.steps):
        if (s.index, s.kind, s.theta_x, s.theta_y, s.radius) != \
                (t.index, t.kind, t.theta_x, t.theta_y, t.radius):
            return False
        if s.kind == "mill":
            if s.depth != t.depth or not np.array_equal(s.points, t.points):
                return False
        elif not np.array_equal(s.center, t.center):
            return False
    return True


# -- serialization ---------------------------------------------------------------


def test_empty_program_roundtrip(tmp_path):
    prog = MachiningProgram(BOX, ())
    p = tmp_path / "empty.json"
    save_program(prog, p)
    assert programs_equal(load_program(p), prog)


def test_mixed_program_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    prog = random_program(rng, 3, 2)
    p = tmp_path / "prog.json"
    save_program(prog, p)
    assert programs_equal(load_program(p), prog)


def test_roundtrip_100_random_programs(tmp_path):
    rng = np.random.default_rng(1)
    for i in range(100):
        prog = random_program(rng, int(rng.integers(0, 3)),
                              int(rng.integers(0, 3)) or 1)
        p = tmp_path / f"p{i}.json"
        save_program(prog, p)
        assert programs_equal(load_program(p), prog)


def test_rejects_radius_outside_set(tmp_path):
    prog = random_program(np.random.default_rng(2), 1, 1)
    p = tmp_path / "bad.json"
    save_program(prog, p)
    text = p.read_text().replace(f'"radius": {prog.steps[0].radius}',
                                 '"radius": 0.033')
    p.write_text(text)
    with pytest.raises(ProgramError, match="radius"):
        load_program(p)


def test_rejects_version_mismatch(tmp_path):
    prog = MachiningProgram(BOX, ())
    p = tmp_path / "v.json"
    save_program(prog, p)
    p.write_text(p.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(ProgramError, match="version"):
        load_program(p)


def test_rejects_malformed_json(tmp_path):
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    with pytest.raises(ProgramError):
        load_program(p)


def test_rejects_drill_before_mill():
    with pytest.raises(ProgramError, match="precede"):
        MachiningProgram(BOX, (drill_step(1, [0, 0, 0]),
                               mill_step(2, [[0, 0]])))


def test_rejects_noncontiguous_indices():
    with pytest.raises(ProgramError, match="contiguous"):
        MachiningProgram(BOX, (mill_step(2, [[0, 0]]),))


# -- replay -----------------------------------------------------------------------


def test_empty_program_replay_all_occupied():
    grid = replay(MachiningProgram(BOX, ()), 16)
    assert np.all(grid.labels == 1)


def test_replay_deterministic():
    prog = random_program(np.random.default_rng(3), 1, 1)
    a = replay(prog, 24)
    b = replay(prog, 24)
    assert a.labels.tobytes() == b.labels.tobytes()


def test_replay_multiresolution_consistency():
    # coarse cells vs their colocated fine cells agree almost everywhere for
    # the analytic slot program (one straight pass along the slot)
    pts = np.column_stack([np.zeros(50), np.linspace(-0.6, 0.6, 50)])
    prog = MachiningProgram(BOX, (mill_step(1, pts, depth=-0.1, radius=0.1),))
    occ32 = replay_occupancy(prog, 32)
    occ64 = replay_occupancy(prog, 64)
    coarse_from_fine = occ64[::2, ::2, ::2]
    agree = np.count_nonzero(coarse_from_fine == occ32) / occ32.size
    assert agree >= 0.97


def test_to_workpiece_matches_replay_values():
    prog = random_program(np.random.default_rng(4), 1, 1)
    wp = to_workpiece(prog)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.6, 0.6, (200, 3))
    vals = wp.values(pts[:, 0], pts[:, 1], pts[:, 2])
    occ = replay_occupancy(prog, 16)
    assert occ.shape == (16, 16, 16)
    assert np.isfinite(vals).all()


# -- G-code ------------------------------------------------------------------------


def test_gcode_single_drill():
    prog = MachiningProgram(BOX, (drill_step(1, [0.0, 0.0, -0.1], radius=0.02),))
    lines = gcode_lines(prog, scale=100.0)
    text = "\n".join(lines)
    assert "G1 Z-10.0000" in text
    assert "radius 2.0000 mm" in text
    assert len(lines) == expected_gcode_lines(prog) == 2 + 4


def test_gcode_rotation_line_degrees():
    prog = MachiningProgram(
        BOX, (drill_step(1, [0, 0, 0], rot=(np.pi / 2, 0.0)),))
    text = "\n".join(gcode_lines(prog))
    assert "A90.0000" in text


def test_gcode_empty_program():
    lines = gcode_lines(MachiningProgram(BOX, ()))
    assert len(lines) == 2
    assert lines[0].startswith("(")
    assert lines[1] == "M2"


def test_gcode_line_count_formula():
    rng = np.random.default_rng(6)
    prog = random_program(rng, 2, 3, samples=7)
    lines = gcode_lines(prog)
    want = 2 + 2 * (7 + 3) + 3 * 4
    assert len(lines) == want == expected_gcode_lines(prog)


def test_gcode_file_export(tmp_path):
    prog = random_program(np.random.default_rng(7), 1, 1, samples=4)
    out = tmp_path / "prog.nc"
    export_gcode(prog, out, scale=100.0)
    content = out.read_text().strip().split("\n")
    assert content[-1] == "M2"
    assert len(content) == expected_gcode_lines(prog)
