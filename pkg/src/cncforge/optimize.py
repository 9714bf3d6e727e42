"""Per-shape program synthesis: direct gradient optimization of step parameters.

The optimizer owns a flat unconstrained parameter vector (per mill step: 2k
path control coordinates, raw depth, 4 radius logits, 2 raw angles; per drill
step: 3 raw center coordinates, 4 radius logits, 2 raw angles).  A smooth
mapping squashes raw values into machine ranges: tanh into the blank extent
plus a 10% margin for coordinates and depth, pi*tanh for angles, and a softmax
convex combination over the discrete radius set for radii.

Fitting runs two phases: mill steps are optimized jointly against the
milling + shape + center losses, then frozen bit-exactly while drill steps
are optimized against the drilling + shape + center losses.  Voxel labels are
refreshed every `relabel_every` iterations and treated as constants in
between.  A phase stops early once the reconstruction IoU gains less than
`early_stop_min_gain` over a `early_stop_window`-iteration window.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .fields import BoxField, Rotation
from .losses import LossReport, nearest_sq
from .metrics import OccupancyPair, occupancy_metrics
from .ops import (
    DrillOp,
    GridPoints,
    MachiningStep,
    MillOp,
    MillPath,
    op_values_on_grid,
)
from .program import MachiningProgram, ProgramStep, replay_occupancy
from .voxels import (
    TargetOccupancy,
    VoxelGrid,
    grid_points,
    init_labels,
    positive_centers,
)

MARGIN = 1.1  # squash bound: blank extent + 10%
MAX_STEPS = 20


class FitAbort(RuntimeError):
    """Optimization hit a non-finite loss; carries the trajectory so far."""

    def __init__(self, component: str, trajectory):
        super().__init__(f"non-finite {component} loss during fit")
        self.component = component
        self.trajectory = trajectory


@dataclass
class FitConfig:
    """Synthesis settings; defaults follow the reference operating point."""

    mill_steps: int = 20
    drill_steps: int = 20
    iterations: int = 12000
    learning_rate: float = 1e-4
    w: float = 1000.0
    resolution: int = 64
    control_points: int = 8
    path_samples: int = 100
    mill_radii: tuple = (0.025, 0.05, 0.075, 0.1)
    drill_radii: tuple = (0.01, 0.02, 0.03, 0.04)
    rotation: bool = True
    losses: tuple = ("milling", "drilling", "shape", "center")
    loss_weights: dict = field(default_factory=dict)
    seed: int = 0
    relabel_every: int = 50
    exact_relabel: bool = False
    early_stop_window: int = 200
    early_stop_min_gain: float = 1e-3
    phase_iterations: tuple | None = None  # explicit (mill, drill) split
    greedy: bool = False
    threads: int = 1
    # the optimizer's center loss draws at most this many remaining voxels
    # per step (refreshed at every relabel, seeded); 0 = exact full sets.
    # the public loss functions are always exact.
    center_voxel_cap: int = 4096

    def validate(self) -> None:
        if not (0 <= self.mill_steps <= MAX_STEPS):
            raise ValueError(f"mill steps must be in [0, {MAX_STEPS}]")
        if not (0 <= self.drill_steps <= MAX_STEPS):
            raise ValueError(f"drill steps must be in [0, {MAX_STEPS}]")
        if self.mill_steps + self.drill_steps < 1:
            raise ValueError("need at least one step")
        for name, radii in (("mill", self.mill_radii), ("drill", self.drill_radii)):
            arr = np.asarray(radii)
            if len(arr) == 0 or np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
                raise ValueError(f"{name} radius set must be positive ascending")
        if self.iterations < 0 or self.control_points < 1 or self.path_samples < 1:
            raise ValueError("bad iteration/path settings")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        unknown = set(self.losses) - {"milling", "drilling", "shape", "center"}
        if unknown:
            raise ValueError(f"unknown losses: {sorted(unknown)}")


@dataclass(frozen=True)
class ParamLayout:
    """Index bookkeeping for the flat parameter vector (mills, then drills)."""

    mills: int
    drills: int
    k: int

    @property
    def per_mill(self) -> int:
        return 2 * self.k + 7

    PER_DRILL = 9

    @property
    def total(self) -> int:
        return self.mills * self.per_mill + self.drills * self.PER_DRILL

    def mill(self, i: int) -> dict:
        b = i * self.per_mill
        k = self.k
        return {"cx": np.arange(b, b + k), "cy": np.arange(b + k, b + 2 * k),
                "depth": b + 2 * k, "logits": np.arange(b + 2 * k + 1, b + 2 * k + 5),
                "angles": (b + 2 * k + 5, b + 2 * k + 6)}

    def drill(self, j: int) -> dict:
        b = self.mills * self.per_mill + j * self.PER_DRILL
        return {"cx": b, "cy": b + 1, "cz": b + 2,
                "logits": np.arange(b + 3, b + 7), "angles": (b + 7, b + 8)}

    def mill_span(self, i: int) -> np.ndarray:
        return np.arange(i * self.per_mill, (i + 1) * self.per_mill)

    def drill_span(self, j: int) -> np.ndarray:
        b = self.mills * self.per_mill + j * self.PER_DRILL
        return np.arange(b, b + self.PER_DRILL)

    def mill_mask(self) -> np.ndarray:
        m = np.zeros(self.total, dtype=bool)
        m[:self.mills * self.per_mill] = True
        return m

    def drill_mask(self) -> np.ndarray:
        return ~self.mill_mask()


def layout_for(cfg: FitConfig) -> ParamLayout:
    return ParamLayout(cfg.mill_steps, cfg.drill_steps, cfg.control_points)


# -- parameter mapping -----------------------------------------------------------


def _soft_radius(logits, radii):
    return ad.sum_(ad.softmax(logits) * np.asarray(radii, dtype=np.float64))


def _rotation_from(src, pair, enabled: bool) -> Rotation:
    if not enabled:
        return Rotation(0.0, 0.0)
    return Rotation(np.pi * ad.tanh(src[pair[0]]), np.pi * ad.tanh(src[pair[1]]))


def mapped_steps(mill_src, drill_src, cfg: FitConfig, box):
    """Constrained steps from raw vectors (taped iff the source is a Var)."""
    lay = layout_for(cfg)
    l, w, h = box
    mills, drills = [], []
    for i in range(cfg.mill_steps):
        idx = lay.mill(i)
        cx = (MARGIN * l) * ad.tanh(mill_src[idx["cx"]])
        cy = (MARGIN * w) * ad.tanh(mill_src[idx["cy"]])
        depth = (MARGIN * h) * ad.tanh(mill_src[idx["depth"]])
        radius = _soft_radius(mill_src[idx["logits"]], cfg.mill_radii)
        rot = _rotation_from(mill_src, idx["angles"], cfg.rotation)
        path = MillPath(cx, cy, depth, cfg.path_samples)
        mills.append(MachiningStep(i + 1, rot, MillOp(path, radius)))
    for j in range(cfg.drill_steps):
        idx = lay.drill(j)
        cx = (MARGIN * l) * ad.tanh(drill_src[idx["cx"]])
        cy = (MARGIN * w) * ad.tanh(drill_src[idx["cy"]])
        cz = (MARGIN * h) * ad.tanh(drill_src[idx["cz"]])
        radius = _soft_radius(drill_src[idx["logits"]], cfg.drill_radii)
        rot = _rotation_from(drill_src, idx["angles"], cfg.rotation)
        drills.append(MachiningStep(cfg.mill_steps + j + 1, rot,
                                    DrillOp(cx, cy, cz, radius)))
    return mills, drills


def map_params(raw, cfg: FitConfig, box=(0.5, 0.5, 0.5)):
    """All constrained steps for a raw vector (smooth in every entry)."""
    mills, drills = mapped_steps(raw, raw, cfg, box)
    return mills + drills


def init_params(v0: VoxelGrid, cfg: FitConfig, seed=None):
    """Deterministic start: tool tips over sampled remaining-material voxels.

    Returns None (the zero-step sentinel) when nothing needs removing.
    Jitter is a clipped normal so initial tips stay within 0.015 of their
    sampled voxel centers.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    pos = positive_centers(v0)
    if len(pos) == 0:
        return None
    lay = layout_for(cfg)
    l, w, h = v0.box
    bound_x, bound_y, bound_z = MARGIN * l, MARGIN * w, MARGIN * h
    params = np.zeros(lay.total)

    def inverse_xy(xy):
        x = np.clip(xy[:, 0], -0.999 * bound_x, 0.999 * bound_x)
        y = np.clip(xy[:, 1], -0.999 * bound_y, 0.999 * bound_y)
        return np.arctanh(x / bound_x), np.arctanh(y / bound_y)

    for i in range(cfg.mill_steps):
        idx = lay.mill(i)
        pick = pos[rng.integers(0, len(pos), size=cfg.control_points)][:, :2]
        jitter = np.clip(rng.normal(0.0, 0.01, size=pick.shape), -0.015, 0.015)
        rx, ry = inverse_xy(pick + jitter)
        params[idx["cx"]] = rx
        params[idx["cy"]] = ry
        params[idx["depth"]] = 0.0  # mid-height
        params[list(idx["angles"])] = rng.normal(0.0, 0.01, size=2)
    for j in range(cfg.drill_steps):
        idx = lay.drill(j)
        pick = pos[rng.integers(0, len(pos), size=1)][:, :2]
        jitter = np.clip(rng.normal(0.0, 0.01, size=pick.shape), -0.015, 0.015)
        rx, ry = inverse_xy(pick + jitter)
        params[idx["cx"]] = rx[0]
        params[idx["cy"]] = ry[0]
        params[idx["cz"]] = 0.0
        params[list(idx["angles"])] = rng.normal(0.0, 0.01, size=2)
    return params


# -- Adam ---------------------------------------------------------------------------


class Adam:
    """Standard Adam with a per-call activity mask (frozen entries never move)."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray,
             active: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        params[active] -= update[active]


# -- fitting ------------------------------------------------------------------------


@dataclass
class FitResult:
    program: MachiningProgram
    losses: LossReport
    iou: float
    f1: float
    trajectory: list  # (iteration, LossReport)
    wall_time: float
    iterations_run: int
    final_occupancy: np.ndarray  # (n, n, n) bool from the snapped program


def write_trajectory_csv(trajectory, path) -> None:
    with open(path, "w") as f:
        f.write(LossReport.CSV_HEADER + "\n")
        for it, rep in trajectory:
            f.write(rep.csv_row(it) + "\n")


@dataclass
class _State:
    blank: BoxField
    box: tuple
    gp: GridPoints
    blank_vals: np.ndarray       # (N,)
    labels: np.ndarray           # (N,) float +-1
    neg_mask: np.ndarray         # (N,) float, 1 inside target
    neg_count: int
    neg_xyz: np.ndarray          # (Q, 3)
    target_flat: np.ndarray      # (N,) bool
    center_cap: int = 0
    sample_rng: np.random.Generator | None = None
    prev_pos: list = field(default_factory=list)   # V+_{s-1} centers per step
    center_pos: list = field(default_factory=list)  # capped sets for the center loss
    final_vals: np.ndarray | None = None            # carved field at last relabel


def _make_state(target: TargetOccupancy, v0: VoxelGrid) -> _State:
    gp = v0.points()
    blank = BoxField(*v0.box)
    blank_vals = np.asarray(blank.values(gp.flat_x, gp.flat_y, gp.flat_z))
    labels = v0.flat_labels().astype(np.float64)
    target_flat = target.inside.ravel()
    neg_mask = (labels < 0).astype(np.float64)
    neg_idx = np.nonzero(labels < 0)[0]
    neg_xyz = np.column_stack([gp.flat_x[neg_idx], gp.flat_y[neg_idx],
                               gp.flat_z[neg_idx]])
    return _State(blank, v0.box, gp, blank_vals, labels, neg_mask,
                  len(neg_idx), neg_xyz, target_flat)


def _detached_steps(params, cfg, box):
    mills, drills = mapped_steps(params, params, cfg, box)
    return mills + drills


def _relabel_state(state: _State, steps) -> None:
    """Refresh every per-step remaining-voxel set from the current parameters."""
    acc = state.blank_vals
    prev_pos = []
    center_pos = []
    for step in steps:
        plus = (acc < 0) & ~state.target_flat
        idx = np.nonzero(plus)[0]
        pts = np.column_stack([state.gp.flat_x[idx], state.gp.flat_y[idx],
                               state.gp.flat_z[idx]])
        prev_pos.append(pts)
        if state.center_cap and len(pts) > state.center_cap:
            rows = state.sample_rng.choice(len(pts), state.center_cap,
                                           replace=False)
            center_pos.append(pts[np.sort(rows)])
        else:
            center_pos.append(pts)
        o = value_of(op_values_on_grid(step.op, step.rotation, state.gp))
        acc = np.maximum(acc, -o)
    state.prev_pos = prev_pos
    state.center_pos = center_pos
    state.final_vals = acc


def _iou_now(state: _State, steps) -> float:
    acc = state.blank_vals
    for step in steps:
        o = value_of(op_values_on_grid(step.op, step.rotation, state.gp))
        acc = np.maximum(acc, -o)
    pred = acc < 0
    inter = np.count_nonzero(pred & state.target_flat)
    union = np.count_nonzero(pred | state.target_flat)
    return 1.0 if union == 0 else inter / union


def _rotated_subset(step, pts):
    if len(pts) == 0:
        return pts[:, 0], pts[:, 1], pts[:, 2]
    if step.rotation.is_identity():
        return pts[:, 0], pts[:, 1], pts[:, 2]
    return step.rotation.rotate(pts[:, 0], pts[:, 1], pts[:, 2])


def _tips(step):
    if isinstance(step.op, MillOp):
        return step.op.path.placements()
    cx, cy = step.op.cx, step.op.cy
    one = (lambda v: v.reshape(1)) if ad.is_var(cx) else np.atleast_1d
    return one(cx), one(cy)


def _center_term(step, pos):
    if len(pos) == 0:
        return 0.0
    tx, ty = _tips(step)
    xr, yr, _ = _rotated_subset(step, pos)
    return ad.mean(nearest_sq(tx, ty, xr, yr)) + ad.mean(nearest_sq(xr, yr, tx, ty))


def _phase_losses(params, pv, state: _State, cfg: FitConfig, phase: int,
                  cache: dict):
    """Component dict (floats) + the taped objective for the active phase."""
    mill_src = pv if phase == 1 else params
    drill_src = pv if phase == 2 else params
    mills, drills = mapped_steps(mill_src, drill_src, cfg, state.box)
    steps = mills + drills
    w = cfg.w
    enabled = set(cfg.losses)
    weights = {k: cfg.loss_weights.get(k, 1.0) for k in
               ("milling", "drilling", "shape", "center")}
    inv_q = 1.0 / state.neg_count if state.neg_count else 0.0
    parts: dict[str, object] = {"milling": 0.0, "drilling": 0.0,
                                "shape": 0.0, "center": 0.0}

    # mill grid fields serve the milling fold and the mill shape terms
    if "milling" in enabled or "shape" in enabled:
        if phase == 1 or "mill_fields" not in cache:
            fields = [op_values_on_grid(s.op, s.rotation, state.gp)
                      for s in mills]
            if phase == 2:  # mills frozen: cache detached values
                cache["mill_fields"] = [value_of(f) for f in fields]
        if phase == 2:
            fields = cache["mill_fields"]
    if "milling" in enabled:
        if phase == 2 and "milling" in cache:
            parts["milling"] = cache["milling"]
        else:
            acc = state.blank_vals
            for f in fields:
                acc = ad.maximum(acc, -f)
            diff = ad.tanh(w * acc) - state.labels
            parts["milling"] = ad.mean(diff * diff)
            if phase == 2:
                cache["milling"] = float(value_of(parts["milling"]))
    if "shape" in enabled and state.neg_count:
        if phase == 2 and "shape_mills" in cache:
            acc_shape = cache["shape_mills"]
        else:
            acc_shape = 0.0
            for f in fields:
                t = ad.tanh(w * f) - 1.0
                acc_shape = acc_shape + ad.sum_(t * t * state.neg_mask) * inv_q
            if phase == 2:
                acc_shape = float(value_of(acc_shape))
                cache["shape_mills"] = acc_shape
        for s in drills:
            o = s.op.values(*_rotated_subset(s, state.neg_xyz))
            t = ad.tanh(w * o) - 1.0
            acc_shape = acc_shape + ad.mean(t * t)
        parts["shape"] = acc_shape
    if "drilling" in enabled and drills:
        acc_d = 0.0
        for s, pos in zip(drills, state.prev_pos[len(mills):]):
            if len(pos) == 0:
                continue
            o = s.op.values(*_rotated_subset(s, pos))
            t = ad.tanh(w * o) + 1.0
            acc_d = acc_d + ad.mean(t * t)
        parts["drilling"] = acc_d * (1.0 / len(drills))
    if "center" in enabled and steps:
        if phase == 1:
            frozen = cache.get("center_drills")
            if frozen is None:
                frozen = sum(float(value_of(_center_term(s, p)))
                             for s, p in zip(drills, state.prev_pos[len(mills):]))
                cache["center_drills"] = frozen
            acc_c = frozen
            for s, pos in zip(mills, state.prev_pos[:len(mills)]):
                acc_c = acc_c + _center_term(s, pos)
        else:
            frozen = cache.get("center_mills")
            if frozen is None:
                frozen = sum(float(value_of(_center_term(s, p)))
                             for s, p in zip(mills, state.prev_pos[:len(mills)]))
                cache["center_mills"] = frozen
            acc_c = frozen
            for s, pos in zip(drills, state.prev_pos[len(mills):]):
                acc_c = acc_c + _center_term(s, pos)
        parts["center"] = acc_c * (1.0 / len(steps))

    report_vals = {}
    for name, v in parts.items():
        val = float(value_of(v)) * weights[name]
        if not np.isfinite(val):
            raise FitAbort(name, [])
        report_vals[name] = val
    report = LossReport(total=sum(report_vals.values()), **report_vals)

    phase_set = {"milling", "shape", "center"} if phase == 1 \
        else {"drilling", "shape", "center"}
    objective = 0.0
    for name in phase_set & enabled:
        objective = objective + weights[name] * parts[name]
    return report, objective


def _phase_param_mask(lay: ParamLayout, cfg: FitConfig, phase: int) -> np.ndarray:
    mask = lay.mill_mask() if phase == 1 else lay.drill_mask()
    if not cfg.rotation:
        for i in range(lay.mills):
            mask[list(lay.mill(i)["angles"])] = False
        for j in range(lay.drills):
            mask[list(lay.drill(j)["angles"])] = False
    return mask


def _run_phase(phase: int, iters: int, params: np.ndarray, state: _State,
               cfg: FitConfig, trajectory: list, start_iter: int) -> int:
    lay = layout_for(cfg)
    base_mask = _phase_param_mask(lay, cfg, phase)
    if not base_mask.any() or iters <= 0:
        return start_iter
    adam = Adam(lay.total, cfg.learning_rate)
    cache: dict = {}
    window = cfg.early_stop_window
    last_window_iou = None
    greedy_spans = None
    if cfg.greedy and phase == 1 and cfg.mill_steps > 1:
        greedy_spans = [lay.mill_span(i) for i in range(cfg.mill_steps)]
    it = 0
    while it < iters:
        if cfg.exact_relabel or it % cfg.relabel_every == 0:
            _relabel_state(state, _detached_steps(params, cfg, state.box))
            cache.pop("center_drills", None)
            cache.pop("center_mills", None)
        pv = ad.Var(params)
        try:
            report, objective = _phase_losses(params, pv, state, cfg, phase, cache)
        except FitAbort as abort:
            raise FitAbort(abort.component, list(trajectory)) from None
        trajectory.append((start_iter + it + 1, report))
        if ad.is_var(objective):
            objective.backward()
            grad = pv.grad if pv.grad is not None else np.zeros_like(params)
        else:
            grad = np.zeros_like(params)
        mask = base_mask
        if greedy_spans is not None:
            active_step = min(it * cfg.mill_steps // iters, cfg.mill_steps - 1)
            mask = np.zeros_like(base_mask)
            mask[greedy_spans[active_step]] = base_mask[greedy_spans[active_step]]
        adam.step(params, grad, mask)
        it += 1
        if window and it % window == 0 and it < iters:
            iou = _iou_now(state, _detached_steps(params, cfg, state.box))
            if last_window_iou is not None and \
                    iou - last_window_iou < cfg.early_stop_min_gain:
                break
            last_window_iou = iou
    return start_iter + it


def _phase_split(cfg: FitConfig) -> tuple[int, int]:
    if cfg.phase_iterations is not None:
        return cfg.phase_iterations
    m, d = cfg.mill_steps, cfg.drill_steps
    if m + d == 0:
        return 0, 0
    p1 = round(cfg.iterations * m / (m + d))
    return p1, cfg.iterations - p1


def fit(target: TargetOccupancy, cfg: FitConfig) -> FitResult:
    """Synthesize a machining program reproducing `target` inside its blank."""
    cfg.validate()
    t0 = time.perf_counter()
    blank = BoxField(*target.box)
    v0 = init_labels(target, blank, cfg.resolution)
    params = init_params(v0, cfg)
    trajectory: list = []
    if params is None:  # nothing to remove: empty program
        prog = MachiningProgram(tuple(float(b) for b in target.box), ())
        occ = replay_occupancy(prog, cfg.resolution)
        iou, f1 = occupancy_metrics(OccupancyPair(occ, target.inside))
        return FitResult(prog, LossReport(0.0, 0.0, 0.0, 0.0, 0.0), iou, f1,
                         trajectory, time.perf_counter() - t0, 0, occ)
    state = _make_state(target, v0)
    p1, p2 = _phase_split(cfg)
    done = 0
    if cfg.mill_steps > 0:
        done = _run_phase(1, p1, params, state, cfg, trajectory, done)
    if cfg.drill_steps > 0:
        done = _run_phase(2, p2, params, state, cfg, trajectory, done)
    prog = snap_program(params, cfg, box=target.box)
    occ = replay_occupancy(prog, cfg.resolution)
    iou, f1 = occupancy_metrics(OccupancyPair(occ, target.inside))
    losses = trajectory[-1][1] if trajectory else LossReport(0, 0, 0, 0, 0)
    return FitResult(prog, losses, iou, f1, trajectory,
                     time.perf_counter() - t0, done, occ)


# -- snapping ------------------------------------------------------------------------


def snap_program(raw: np.ndarray, cfg: FitConfig, box=(0.5, 0.5, 0.5),
                 resolution: int | None = None) -> MachiningProgram:
    """Discretize: argmax radius (ties -> smaller), freeze geometry, drop no-ops."""
    lay = layout_for(cfg)
    n = resolution or cfg.resolution
    mills, drills = mapped_steps(raw, raw, cfg, box)
    gp = grid_points(box, n)
    blank = BoxField(*box)
    acc = np.asarray(blank.values(gp.flat_x, gp.flat_y, gp.flat_z))
    steps: list[ProgramStep] = []
    for pos, step in enumerate(mills + drills):
        is_mill = isinstance(step.op, MillOp)
        idx = lay.mill(pos) if is_mill else lay.drill(pos - len(mills))
        logits = raw[idx["logits"]]
        radii = cfg.mill_radii if is_mill else cfg.drill_radii
        radius = float(radii[int(np.argmax(logits))])
        theta_x = float(value_of(step.rotation.theta_x))
        theta_y = float(value_of(step.rotation.theta_y))
        if is_mill:
            px, py = step.op.path.placements()
            frozen = ProgramStep(index=0, kind="mill", theta_x=theta_x,
                                 theta_y=theta_y, radius=radius,
                                 points=np.column_stack([value_of(px),
                                                         value_of(py)]),
                                 depth=float(value_of(step.op.path.depth)))
            op = MillOp(_frozen_path(frozen), radius)
        else:
            center = np.array([float(value_of(step.op.cx)),
                               float(value_of(step.op.cy)),
                               float(value_of(step.op.cz))])
            frozen = ProgramStep(index=0, kind="drill", theta_x=theta_x,
                                 theta_y=theta_y, radius=radius, center=center)
            op = DrillOp(*center, radius)
        rot = Rotation(theta_x, theta_y)
        o = value_of(op_values_on_grid(op, rot, gp))
        removed = np.count_nonzero((acc < 0) & (np.maximum(acc, -o) >= 0))
        acc = np.maximum(acc, -o)
        if removed > 0:
            steps.append(replace(frozen, index=len(steps) + 1))
    return MachiningProgram(tuple(float(b) for b in box), tuple(steps))


def _frozen_path(step: ProgramStep):
    from .ops import FrozenPath
    return FrozenPath(step.points[:, 0].copy(), step.points[:, 1].copy(),
                      step.depth)
