"""The one-dimensional coagulation equation with a diagonal kernel.

When ``H`` concentrates on ``y = v**alpha`` its ``y``-marginal ``G(v)``
formally obeys

    d_t G(v) = (2/alpha) [ (1/4) (v/2)**p G(v/2)**2 - v**p G(v)**2 ],
    p = gamma + 1 - alpha,

in which only equal-size particles merge.  On the geometric grid with ratio
``2**(1/q)`` the node ``v/2`` is the node ``q`` places below, so the
coupling is an exact index shift.

Masses use cell weights ``w_j = v_j (r**0.5 - r**-0.5)``, the widths of the
geometric cells around each node.  Because they are proportional to
``v_j``, the gain at ``v_j`` exactly balances the loss at ``v_j / 2`` in
``sum w_j v_j rate_j``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StabilityError
from .grid import Grid2D, geometric_nodes, y_marginal

__all__ = [
    "DiagonalTrajectory",
    "Profile1D",
    "VGrid",
    "diagonal_mass_flux",
    "diagonal_rhs",
    "evolve_diagonal",
    "marginal_compare",
    "mass_median",
    "spread_exponent",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VGrid:
    """Geometric volume grid ``v_j = v_min 2**(j/q)``, ``j = 0..n-1``."""

    v_min: float
    q: int
    n: int
    v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise DomainError("grid has no halving closure: q must be a positive integer")
        v = geometric_nodes(self.v_min, self.q, self.n)
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_grid2d(cls, grid: Grid2D) -> "VGrid":
        return cls(grid.v_min, grid.q, grid.nv)

    @property
    def weights(self) -> np.ndarray:
        r = 2.0 ** (1.0 / self.q)
        return self.v * (math.sqrt(r) - 1.0 / math.sqrt(r))


@dataclass
class Profile1D:
    values: np.ndarray
    grid: VGrid
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise DomainError("profile length does not match the grid")

    def mass(self) -> float:
        return float(np.sum(self.grid.weights * self.grid.v * self.values))

    def number(self) -> float:
        return float(np.sum(self.grid.weights * self.values))


def diagonal_rhs(G: Profile1D, alpha: float, gamma: float) -> np.ndarray:
    """Right-hand side at every node; the gain vanishes where ``v/2 < v_min``."""
    g = G.grid
    if not isinstance(g, VGrid):
        raise DomainError("diagonal_rhs needs a grid with halving closure")
    p = gamma + 1.0 - alpha
    v = g.v
    loss = v**p * G.values**2
    gain = np.zeros_like(loss)
    # v_j^p / 2^p with v_j / 2 = v_{j-q}; equal to loss[j - q] exactly
    gain[g.q:] = 0.25 * loss[: g.n - g.q]
    return (2.0 / alpha) * (gain - loss)


def diagonal_mass_flux(G: Profile1D, alpha: float, gamma: float) -> tuple[float, float]:
    """``(sum w v rate, outflow)``: the first equals minus the second exactly.

    ``outflow`` is the volume rate carried by products of the top ``q``
    nodes, whose doubled volume lies beyond ``v_max``.
    """
    g = G.grid
    p = gamma + 1.0 - alpha
    rate = diagonal_rhs(G, alpha, gamma)
    flux = float(np.sum(g.weights * g.v * rate))
    top = slice(g.n - g.q, g.n)
    # each lost pair of v's would have landed at 2v with gain weight 1/4 * w(2v) * 2v
    out = (2.0 / alpha) * float(np.sum(g.weights[top] * g.v[top] * g.v[top] ** p
                                       * G.values[top] ** 2))
    return flux, out


@dataclass
class DiagonalTrajectory:
    times: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    clamp_mass: float = 0.0
    outflow_mass: float = 0.0

    def at(self, t: float, atol: float = 1e-12) -> Profile1D:
        for tt, p in zip(self.times, self.profiles):
            if abs(tt - t) <= atol:
                return p
        raise DomainError(f"time {t} not stored in the diagonal trajectory")


def _max_rate(G: np.ndarray, v: np.ndarray, alpha: float, p: float) -> float:
    return float(np.max(2.0 * (2.0 / alpha) * v**p * np.abs(G), initial=0.0))


def evolve_diagonal(G0: Profile1D, T: float, dt: float | None, alpha: float, gamma: float,
                    *, save_times=None, cfl: float = 0.5, clamp_budget: float = 1e-12
                    ) -> DiagonalTrajectory:
    """Classical RK4 up to ``T``.

    Parameters
    ----------
    dt : float or None
        Fixed step; ``None`` picks ``cfl / max rate`` adaptively each step.
    save_times : sequence of float, optional
        Times to store (``T`` and ``t = G0.t`` are always stored); steps are
        shortened to hit them exactly.
    clamp_budget : float
        Largest relative mass that the positivity clamp may remove in a
        step before the step is refused.

    Raises
    ------
    StabilityError
        If ``dt * max rate > 2`` or the clamp budget is exceeded.
    """
    if gamma - alpha >= 1:
        log.warning("gamma - alpha = %g >= 1: outside the existence regime", gamma - alpha)
    if T < 0:
        raise DomainError("T must be nonnegative")
    g = G0.grid
    p = gamma + 1.0 - alpha
    t = G0.t
    t_end = G0.t + T
    stops = sorted({float(s) for s in (() if save_times is None else save_times) if G0.t < s < t_end} | {t_end})
    traj = DiagonalTrajectory([t], [Profile1D(G0.values.copy(), g, t)], [G0.mass()])
    G = G0.values.copy()

    def f(x):
        return diagonal_rhs(Profile1D(x, g), alpha, gamma)

    top = slice(g.n - g.q, g.n)
    w_out = (2.0 / alpha) * g.weights[top] * g.v[top] ** (p + 1.0)

    def out(x):
        return float(np.sum(w_out * x[top] ** 2))

    for stop in stops:
        while t < stop - 1e-14 * max(1.0, abs(stop)):
            lam = _max_rate(G, g.v, alpha, p)
            h = (cfl / lam if lam > 0 else stop - t) if dt is None else dt
            if dt is not None and h * lam > 2.0:
                raise StabilityError(f"dt={h:g} too large for the diagonal solver",
                                     required_dt=2.0 / lam)
            h = min(h, stop - t)
            k1 = f(G)
            k2 = f(G + 0.5 * h * k1)
            k3 = f(G + 0.5 * h * k2)
            k4 = f(G + h * k3)
            new = G + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            # the same RK4 weights applied to the outflow rate keep the budget exact
            traj.outflow_mass += h / 6.0 * (out(G) + 2 * out(G + 0.5 * h * k1)
                                            + 2 * out(G + 0.5 * h * k2) + out(G + h * k3))
            neg = np.minimum(new, 0.0)
            removed = -float(np.sum(g.weights * g.v * neg))
            m = float(np.sum(g.weights * g.v * np.abs(G)))
            if m > 0 and removed > clamp_budget * m:
                lam = max(lam, 1e-300)
                raise StabilityError("positivity clamp exceeded its budget",
                                     required_dt=0.5 * h)
            traj.clamp_mass += removed
            G = np.maximum(new, 0.0)
            t = stop if stop - (t + h) <= 1e-14 * max(1.0, abs(stop)) else t + h
        traj.times.append(t)
        traj.profiles.append(Profile1D(G.copy(), g, t))
        traj.masses.append(float(np.sum(g.weights * g.v * G)))
    return traj


def mass_median(profile: Profile1D) -> float:
    """Volume below which half the mass lies (log-linear interpolation)."""
    g = profile.grid
    c = np.cumsum(g.weights * g.v * profile.values)
    if c[-1] <= 0:
        raise DomainError("mass median of an empty profile")
    c = c / c[-1]
    return float(np.exp(np.interp(0.5, c, np.log(g.v))))


def spread_exponent(traj: DiagonalTrajectory, t_from: float, t_to: float) -> float:
    """Log-log slope of the mass-median volume between two stored times."""
    a, b = traj.at(t_from), traj.at(t_to)
    return math.log(mass_median(b) / mass_median(a)) / math.log(t_to / t_from)


def marginal_compare(traj2d, traj1d: DiagonalTrajectory, times) -> list[dict]:
    """L1(v dv) distance between ``int H dy`` and ``G`` at matched times.

    ``traj2d`` is a sequence of ``(t, Field2D)``; both trajectories must
    store every requested time and share the ``v`` nodes.
    """
    snaps = list(traj2d)
    out = []
    for t in times:
        match = [f for tt, f in snaps if abs(tt - t) <= 1e-9 * max(1.0, abs(t))]
        if not match:
            raise DomainError(f"time {t} missing from the 2D trajectory")
        f = match[0]
        prof = traj1d.at(t, atol=1e-9 * max(1.0, abs(t)))
        if prof.values.shape != (f.grid.nv,) or not np.array_equal(prof.grid.v, f.grid.v):
            raise DomainError("marginal and diagonal profiles live on different v grids")
        M = y_marginal(f)
        wv, v = f.grid.wv, f.grid.v
        err = float(np.sum(wv * v * np.abs(M - prof.values)))
        ref = float(np.sum(wv * v * np.abs(M)))
        out.append({"t": float(t), "L1_error": err,
                    "relative_L1_error": err / ref if ref > 0 else 0.0})
    return out
