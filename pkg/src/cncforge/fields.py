"""Implicit field primitives: box blank, cylindrical tool, rotation, CSG.

Every field maps R^3 -> R with negative values inside the solid, positive
outside, zero on the surface.  None of the fields is a calibrated distance;
only the sign (and smoothness in the parameters) matters.

Points are passed as an (x, y, z) triple where each component is a float or
an ndarray.  Components may also be :class:`~cncforge.autodiff.Var` nodes, in
which case evaluation is recorded on the gradient tape.  Field parameters can
be plain floats, ``ParamRef`` placeholders (resolved against a parameter
vector by :func:`eval_with_grad`) or ``Var`` slices.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

Point3 = tuple  # (x, y, z), components float or ndarray or Var


@dataclass(frozen=True)
class ParamRef:
    """Placeholder referencing entry ``index`` of a flat parameter vector."""

    index: int


def _is_symbolic(v) -> bool:
    return isinstance(v, (ParamRef, ad.Var))


def _check_positive(name: str, v) -> None:
    if not _is_symbolic(v) and not v > 0:
        raise ValueError(f"{name} must be > 0, got {v}")


def box_values(x, y, z, l, w, h):
    """max(|x/l|, |y/w|, |z/h|) - 1; the blank spans [-l,l]x[-w,w]x[-h,h]."""
    ax = ad.maximum(x / l, -(x / l))
    ay = ad.maximum(y / w, -(y / w))
    az = ad.maximum(z / h, -(z / h))
    return ad.maximum(ad.maximum(ax, ay), az) - 1.0


def cylinder_values(x, y, z, cx, cy, cz, r):
    """max(squared lateral distance - r^2, cz - z): infinite upward cylinder."""
    dx = x - cx
    dy = y - cy
    lateral = dx * dx + dy * dy - r * r
    return ad.maximum(lateral, cz - z)


@dataclass(frozen=True)
class BoxField:
    """Axis-aligned blank with half-extents (l, w, h)."""

    l: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("l", "w", "h"):
            _check_positive(name, getattr(self, name))

    def values(self, x, y, z):
        return box_values(x, y, z, self.l, self.w, self.h)


@dataclass(frozen=True)
class CylinderField:
    """Tool primitive: base center c, radius r, extending upward from c_z."""

    cx: float
    cy: float
    cz: float
    r: float

    def __post_init__(self):
        _check_positive("r", self.r)

    def values(self, x, y, z):
        return cylinder_values(x, y, z, self.cx, self.cy, self.cz, self.r)


@dataclass(frozen=True)
class Rotation:
    """Counterclockwise rotation about X by theta_x, then about Y by theta_y."""

    theta_x: float = 0.0
    theta_y: float = 0.0

    def is_identity(self) -> bool:
        return (not _is_symbolic(self.theta_x) and self.theta_x == 0.0
                and not _is_symbolic(self.theta_y) and self.theta_y == 0.0)

    def rotate(self, x, y, z):
        cx, sx = ad.cos(self.theta_x), ad.sin(self.theta_x)
        cy, sy = ad.cos(self.theta_y), ad.sin(self.theta_y)
        y1 = cx * y - sx * z
        z1 = sx * y + cx * z
        x2 = cy * x + sy * z1
        z2 = cy * z1 - sy * x
        return x2, y1, z2

    def inverse_rotate(self, x, y, z):
        cx, sx = ad.cos(self.theta_x), ad.sin(self.theta_x)
        cy, sy = ad.cos(self.theta_y), ad.sin(self.theta_y)
        x1 = cy * x - sy * z
        z1 = sy * x + cy * z
        y2 = cx * y + sx * z1
        z2 = cx * z1 - sx * y
        return x1, y2, z2


@dataclass(frozen=True)
class RotatedField:
    """Field evaluated at rotated query points: values(p) = inner(R p).

    As a field transform this is Rot^{-1}(inner): carving with it reproduces
    rotate / subtract / rotate-back without ever materialising the
    intermediate frames.
    """

    inner: object
    rotation: Rotation

    def values(self, x, y, z):
        xr, yr, zr = self.rotation.rotate(x, y, z)
        return self.inner.values(xr, yr, zr)


@dataclass(frozen=True)
class SubtractField:
    """CSG difference keep \\ cut, i.e. max(keep, -cut) on field values."""

    keep: object
    cut: object

    def values(self, x, y, z):
        return csg_subtract_values(self.keep.values(x, y, z),
                                   self.cut.values(x, y, z))


# -- spec-level operations ---------------------------------------------------


def eval_box(p: Point3, box: BoxField):
    return box.values(p[0], p[1], p[2])


def eval_cylinder(p: Point3, cyl: CylinderField):
    return cyl.values(p[0], p[1], p[2])


def rotate_point(p: Point3, rot: Rotation) -> Point3:
    return rot.rotate(p[0], p[1], p[2])


def inverse_rotate_point(p: Point3, rot: Rotation) -> Point3:
    return rot.inverse_rotate(p[0], p[1], p[2])


def smooth_sign(x, w):
    """tanh(w * x): odd, saturating surrogate for the sign of a field value."""
    if not _is_symbolic(w) and not w > 0:
        raise ValueError(f"smooth sign scale must be > 0, got {w}")
    return ad.tanh(w * x)


def csg_subtract_values(a, b):
    """max(a, -b): negative (kept) iff inside a and outside the removal b."""
    return ad.maximum(a, -b)


# -- differentiation contract -------------------------------------------------


def bind(obj, params: ad.Var):
    """Resolve every ParamRef inside a field expression against `params`."""
    if isinstance(obj, ParamRef):
        n = params.data.shape[0]
        if not 0 <= obj.index < n:
            raise IndexError(
                f"parameter index {obj.index} out of range for vector of length {n}")
        return params[obj.index]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {f.name: bind(getattr(obj, f.name), params)
                   for f in dataclasses.fields(obj)}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, (list, tuple)):
        return type(obj)(bind(v, params) for v in obj)
    return obj


def eval_with_grad(expr, p: Point3, params) -> tuple[float, np.ndarray]:
    """Evaluate a field expression at `p`, returning (value, d value/d params).

    The gradient has one entry per element of `params`; parameters the
    expression never references get exactly zero.  At min/max ties the
    subgradient of the first attaining argument is used.
    """
    params = np.asarray(params, dtype=np.float64)
    pv = ad.Var(params)
    out = bind(expr, pv).values(p[0], p[1], p[2])
    if not isinstance(out, ad.Var):  # expression references no parameter
        return float(out), np.zeros_like(params)
    out.backward()
    grad = pv.grad if pv.grad is not None else np.zeros_like(params)
    return float(out.data), grad
