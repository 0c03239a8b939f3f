"""Picard iteration on the mild (Duhamel) formulation.

Along the backward characteristic ``Y(s) = c + exp((t-s)/eps)(y - c)`` with
``c = v**alpha``, a mild solution satisfies

    H(t) = S(t)[H_init] D(0, t) + int_0^t D(s, t) S(t-s)[G(s)] ds,

where ``D(s, t) = exp(-int_s^t a[H](Y(tau), v, tau) dtau)`` is the damping
factor, ``a[H] = int K(v, w) H(w) dw`` the loss rate and ``G`` the gain.
The iteration feeds ``H_n`` into ``D`` and into the smaller collision
partner of the gain, and ``H_{n+1}`` into the larger one; marching the
time grid forward makes the ``H_{n+1}`` terms available.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .coagulation import coag_operator
from .errors import DomainError
from .grid import Field2D, Grid2D, Params, init_field, total_mass
from .kernels import KernelSpec, truncate
from .transport import transported_profile

__all__ = [
    "FieldHistory",
    "PicardState",
    "damping_D",
    "initial_iterate",
    "mild_residual",
    "picard_solve",
    "picard_step",
    "rate_a",
]


@dataclass
class FieldHistory:
    """Snapshots ``values[k]`` of ``H`` at ``times[k]``, linear in between."""

    times: np.ndarray
    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.grid.ny, self.grid.nv):
            raise DomainError("history values must have shape (n_times, ny, nv)")

    @classmethod
    def constant(cls, f: Field2D, times) -> "FieldHistory":
        times = np.asarray(times, dtype=float)
        return cls(times, np.broadcast_to(f.values, (times.size,) + f.values.shape).copy(),
                   f.grid)

    def at(self, t: float) -> np.ndarray:
        k = np.searchsorted(self.times, t, side="right") - 1
        k = int(np.clip(k, 0, self.times.size - 2)) if self.times.size > 1 else 0
        if self.times.size == 1:
            return self.values[0]
        t0, t1 = self.times[k], self.times[k + 1]
        lam = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return (1 - lam) * self.values[k] + lam * self.values[k + 1]

    def field(self, k: int) -> Field2D:
        return Field2D(self.values[k], self.grid, float(self.times[k]))


def _sample_columns(F: np.ndarray, pos: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Linear interpolation in ``y`` of ``F[l, :, j]`` at ``pos[l, i, j]``; zero outside."""
    s = (pos - grid.y_min) / grid.dy
    inside = (s >= 0) & (s <= grid.ny - 1)
    s = np.where(inside, s, 0.0)
    i0 = np.minimum(np.floor(s).astype(int), grid.ny - 2)
    lam = s - i0
    L = F.shape[0]
    li = np.arange(L)[:, None, None]
    jj = np.arange(grid.nv)[None, None, :]
    out = (1 - lam) * F[li, i0, jj] + lam * F[li, i0 + 1, jj]
    return np.where(inside, out, 0.0)


def rate_a(field: Field2D, y: float, v: float, kernel: KernelSpec) -> float:
    """``a[H](y, v) = int K(v, w) H(y, w) dw`` with ``H`` linearly interpolated in ``y``."""
    g = field.grid
    if not g.y_min <= y <= g.y_max:
        return 0.0
    row = np.array([np.interp(y, g.y, field.values[:, j]) for j in range(g.nv)])
    return float(np.sum(kernel(v, g.v) * g.wv * row))


def damping_D(history, y: float, v: float, s: float, t: float, params: Params,
              kernel: KernelSpec) -> float:
    """``exp(-int_s^t a[H](Y(tau), v, tau) dtau)`` along the characteristic through ``(y, v)``.

    ``history`` is a :class:`FieldHistory` or a time-independent
    :class:`Field2D`.  The integral is computed by adaptive quadrature.
    """
    if not 0 <= s <= t:
        raise DomainError("need 0 <= s <= t")
    if s == t:
        return 1.0
    if isinstance(history, Field2D):
        history = FieldHistory(np.array([0.0]), history.values[None], history.grid)
    g = history.grid
    c = v**params.alpha
    Kw = kernel(v, g.v) * g.wv

    def a_along(tau):
        Y = c + math.exp(min((t - tau) / params.epsilon, 700.0)) * (y - c)
        if not g.y_min <= Y <= g.y_max:
            return 0.0
        H = history.at(tau)
        i = min(int((Y - g.y_min) / g.dy), g.ny - 2)
        lam = (Y - g.y[i]) / g.dy
        row = (1 - lam) * H[i] + lam * H[i + 1]
        return float(Kw @ row)

    pts = history.times[(history.times > s) & (history.times < t)]
    val = integrate.quad(a_along, s, t, points=pts[:50] if pts.size else None,
                         limit=200, epsrel=1e-10)[0]
    return math.exp(-val)


def initial_iterate(grid: Grid2D, params: Params, t_grid) -> FieldHistory:
    """``H_0``: the initial profile carried by pure transport, in closed form."""
    t_grid = np.asarray(t_grid, dtype=float)
    Y, V = grid.mesh()
    vals = np.stack([transported_profile(Y, V, t, params) for t in t_grid])
    return FieldHistory(t_grid, vals, grid)


def _mild_map(prev: FieldHistory, H_init: Field2D, kernel: KernelSpec, params: Params,
              implicit: bool) -> FieldHistory:
    g = prev.grid
    tg = prev.times
    eps = params.epsilon
    op = coag_operator(g, kernel)
    c = (g.v**params.alpha)[None, None, :]
    yv = g.y[None, :, None]
    a_prev = np.stack([op.rate_a(prev.values[l]) for l in range(tg.size)])
    new = np.zeros_like(prev.values)
    gains = np.zeros_like(prev.values)
    for k in range(tg.size):
        lags = tg[k] - tg[: k + 1]
        stretch = np.exp(np.minimum(lags / eps, 700.0))[:, None, None]
        pos = c + stretch * (yv - c)
        A = _sample_columns(a_prev[: k + 1], pos, g)
        # D(t_l, t_k) by the trapezoid rule in tau along the characteristic
        seg = 0.5 * (A[:-1] + A[1:]) * np.diff(tg[: k + 1])[:, None, None]
        I = np.concatenate([np.cumsum(seg[::-1], axis=0)[::-1], np.zeros((1,) + A.shape[1:])])
        D = np.exp(-I)
        first = _sample_columns(H_init.values[None], pos[:1], g)[0] * stretch[0]
        val = first * D[0]
        if k > 0:
            # exact integral of exp((t_k - s)/eps) over each left-endpoint cell
            hi = np.exp(np.minimum(lags[:-1] / eps, 700.0))
            lo = np.exp(np.minimum(lags[1:] / eps, 700.0))
            w = (eps * (hi - lo))[:, None, None]
            Gs = _sample_columns(gains[:k], pos[:-1], g)
            val = val + np.sum(D[:-1] * Gs * w, axis=0)
        new[k] = val
        big = new[k] if implicit else prev.values[k]
        gains[k] = op.apply(big, prev.values[k]).gain
    return FieldHistory(tg.copy(), new, g)


def picard_step(prev: FieldHistory, current_initial: Field2D, t_grid, kernel: KernelSpec,
                params: Params) -> FieldHistory:
    """One iteration ``H_n -> H_{n+1}`` on ``t_grid``.

    ``prev`` must be stored on ``t_grid``.  The Duhamel integral uses the
    left-endpoint rule in ``s`` with the exponential transport factor
    integrated exactly over each cell.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise DomainError("t_grid must be strictly increasing")
    if not np.allclose(prev.times, t_grid, rtol=0, atol=1e-14):
        raise DomainError("previous iterate must be stored on t_grid")
    return _mild_map(prev, current_initial, kernel, params, implicit=True)


def mild_residual(history: FieldHistory, H_init: Field2D, kernel: KernelSpec,
                  params: Params) -> float:
    """``sup |Phi[H] - H|`` with ``H`` substituted in every slot of the mild map."""
    out = _mild_map(history, H_init, kernel, params, implicit=False)
    return float(np.max(np.abs(out.values - history.values)))


@dataclass
class PicardState:
    """Iterates and sup-norm residuals ``R_n = sup |H_{n+1} - H_n|``."""

    t_grid: np.ndarray
    iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"
    kernel: KernelSpec | None = None

    @property
    def ratios(self) -> list[float]:
        r = self.residuals
        return [r[i] / r[i - 1] if r[i - 1] > 0 else 0.0 for i in range(1, len(r))]

    @property
    def solution(self) -> FieldHistory:
        return self.iterates[-1]

    def contraction_constant(self) -> float:
        """``C`` with ``R_1 = (C T) R_0``, from the first two residuals."""
        if len(self.residuals) < 2 or self.residuals[0] == 0:
            return 0.0
        T = float(self.t_grid[-1] - self.t_grid[0])
        return self.residuals[1] / (self.residuals[0] * T)

    def residual_rows(self):
        """Rows ``(n, sup_residual, fitted_ratio)``; the ratio is NaN for ``n = 0``."""
        rows = []
        for n, r in enumerate(self.residuals):
            ratio = r / self.residuals[n - 1] if n and self.residuals[n - 1] > 0 else math.nan
            rows.append((n, r, ratio))
        return rows

    def mass_series(self) -> np.ndarray:
        H = self.solution
        return np.array([total_mass(H.field(k)) for k in range(H.times.size)])


def picard_solve(params: Params, grid: Grid2D, kernel: KernelSpec, T: float,
                 tol: float = 1e-12, max_iter: int = 30, n_t: int = 21,
                 truncate_kernel: bool = True, keep_iterates: bool = False) -> PicardState:
    """Iterate from ``H_0`` until ``R_n < tol`` or ``max_iter`` iterations.

    The kernel is truncated at ``v_max`` unless ``truncate_kernel`` is
    false.  Non-convergence is reported through ``status``, never raised.
    """
    if not T > 0:
        raise DomainError("horizon T must be positive")
    kern = truncate(kernel, grid.v_max) if truncate_kernel else kernel
    t_grid = np.linspace(0.0, T, n_t)
    H_init = init_field(grid, params)
    state = PicardState(t_grid=t_grid, kernel=kern)
    H = initial_iterate(grid, params, t_grid)
    state.iterates.append(H)
    for n in range(max_iter):
        H_next = picard_step(H, H_init, t_grid, kern, params)
        R = float(np.max(np.abs(H_next.values - H.values)))
        state.residuals.append(R)
        if keep_iterates:
            state.iterates.append(H_next)
        else:
            state.iterates[-1:] = [H_next]
        H = H_next
        if R < tol:
            state.converged = True
            state.status = "converged"
            return state
    state.status = "max_iter reached"
    return state
