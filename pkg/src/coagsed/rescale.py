"""Change of frame between the fast-transport model and the unscaled rain model.

With ``x = exp(t/eps) y``, ``tau = exp(t/eps) - 1`` and
``f = exp(-t/eps) H``, a fast-transport density ``H(y, v, t)`` becomes a
rain-model density ``f(x, v, tau)``.  The Jacobian ``dx = exp(t/eps) dy``
cancels the amplitude factor, so the mass is unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Field2D

__all__ = ["RainFrameField", "from_rain_frame", "to_rain_frame"]


@dataclass
class RainFrameField:
    """Density ``f`` on nodes ``x_i = exp(t/eps) y_i`` at rain-model time ``tau``."""

    x: np.ndarray
    v: np.ndarray
    f: np.ndarray
    tau: float
    wx: np.ndarray
    wv: np.ndarray

    def mass(self) -> float:
        return float(self.wx @ (self.f * self.v) @ self.wv)


def to_rain_frame(field: Field2D, epsilon: float) -> RainFrameField:
    g = field.grid
    E = math.exp(field.t / epsilon)
    return RainFrameField(x=E * g.y, v=g.v.copy(), f=field.values / E, tau=math.expm1(field.t / epsilon),
                          wx=E * g.wy, wv=g.wv.copy())


def from_rain_frame(rf: RainFrameField, epsilon: float, grid) -> Field2D:
    """Inverse transform onto ``grid`` (the nodes are mapped back exactly)."""
    t = epsilon * math.log1p(rf.tau)
    E = math.exp(t / epsilon)
    y = rf.x / E
    # undo round-off from the exp/log1p round trip so boundary nodes are not cut off
    tol = 1e-12 * max(1.0, float(np.ptp(grid.y)))
    if abs(y[0] - grid.y[0]) <= tol:
        y[0] = min(y[0], grid.y[0])
    if abs(y[-1] - grid.y[-1]) <= tol:
        y[-1] = max(y[-1], grid.y[-1])
    values = np.empty((grid.ny, grid.nv))
    for j in range(grid.nv):
        values[:, j] = np.interp(grid.y, y, rf.f[:, j] * E, left=0.0, right=0.0)
    return Field2D(values, grid, t)
