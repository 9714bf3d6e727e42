"""cncforge: differentiable implicit-geometry CNC machining simulation.

Carves an axis-aligned blank with swept-cylinder mills, drills, and per-step
workpiece rotations, and gradient-optimizes those operations so the carved
field reproduces a target shape.  See README.md for the tour.
"""

__version__ = "0.1.0"
