"""Phase-space grid, density fields, model parameters and their derived constants.

The state is a density ``H(y, v)`` on a tensor grid: a uniform grid in the
spatial coordinate ``y`` and a geometric grid ``v_j = v_min * 2**(j/q)`` in
the particle volume.  The geometric ratio makes ``v_j / 2 == v_{j-q}`` hold
bit-for-bit, which the diagonal-limit solver relies on.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import chi_ramp

__all__ = [
    "Field2D",
    "Grid2D",
    "Params",
    "assemble_L",
    "derived_constants",
    "geometric_nodes",
    "init_field",
    "moment_k",
    "row_moments",
    "total_mass",
    "trapezoid_weights",
    "y_marginal",
]

log = logging.getLogger(__name__)

_ROUND_GUARD = 1e-12


_WARNED: set[str] = set()


def _dbar(alpha: float, gamma: float) -> int:
    x = 0.5 * (alpha / (alpha + 1.0 - gamma) - 1.0)
    return 2 * math.ceil(x - _ROUND_GUARD)


def _d_even(b: float, alpha: float) -> int:
    d = math.floor((b - 2.0) / alpha + _ROUND_GUARD)
    return d - 1 if d % 2 else d


@dataclass(frozen=True)
class Params:
    """Model parameters plus the constants derived from them.

    Parameters
    ----------
    epsilon : float
        Transport time scale, in ``(0, 1)``.
    alpha : float
        Exponent of the attracting curve ``y = v**alpha``, in ``(0, 1)``.
    gamma : float
        Kernel homogeneity, in ``(1, 1 + alpha)``.
    b, m : float
        Decay exponents in ``v`` and in ``|y - v**alpha|``.
    A : float
        Initial amplitude, ``A >= 1``.
    M1, M2 : float
        Envelope constants.
    L : float
        Drift amplitude of the characteristic system.
    theorem_mode : bool
        If true, the hypotheses of the existence theorem on ``b`` and ``m``
        are enforced; otherwise only ``m > 2`` is required and a failed
        hypothesis is logged as a warning.

    Attributes
    ----------
    C0, dbar, bbar, d
        Derived constants; ``C0**(m-1) == M1*A``, ``dbar`` and ``d`` are even.
    """

    epsilon: float
    alpha: float
    gamma: float
    b: float
    m: float
    A: float = 1.0
    M1: float = 16.0
    M2: float = 16.0
    L: float = 1.0
    theorem_mode: bool = False
    C0: float = field(init=False)
    dbar: int = field(init=False)
    bbar: float = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma >= 1.0 + self.alpha:
            raise DomainError(
                f"gamma={self.gamma} must be below 1 + alpha={1 + self.alpha}")
        if self.gamma <= 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if self.A < 1.0:
            raise ConfigError("amplitudes A < 1 are not supported; use A >= 1")
        if self.M1 <= 0 or self.M2 <= 0:
            raise DomainError("M1 and M2 must be positive")
        if self.m <= 2:
            raise DomainError(f"m must exceed 2, got {self.m}")

        object.__setattr__(self, "dbar", _dbar(self.alpha, self.gamma))
        object.__setattr__(self, "bbar", self.alpha * self.dbar + 2.0)
        object.__setattr__(self, "C0", (self.M1 * self.A) ** (1.0 / (self.m - 1.0)))
        object.__setattr__(self, "d", _d_even(self.b, self.alpha))

        problems = self.theorem_violations()
        if problems:
            msg = "; ".join(problems)
            if self.theorem_mode:
                raise DomainError(f"existence hypotheses fail: {msg}")
            if msg not in _WARNED:
                _WARNED.add(msg)
                log.warning("relaxed mode, existence hypotheses fail: %s", msg)

    def theorem_violations(self) -> list[str]:
        """Human-readable list of failed hypotheses on ``b`` and ``m``."""
        out = []
        b_req = max(self.bbar, 2.0 * self.gamma + 1.0)
        m_req = max(2.0 * (self.gamma + 1.0) / self.alpha, self.b / self.alpha + 1.0)
        if self.b < b_req:
            out.append(f"b={self.b} < {b_req:g}")
        if not self.m > m_req:
            out.append(f"m={self.m} <= {m_req:g}")
        return out

    @property
    def beta(self) -> float:
        """Spread exponent ``1 / (1 - (gamma - alpha))`` of the diagonal limit."""
        return 1.0 / (1.0 - (self.gamma - self.alpha))

    def delta_t(self, t) -> np.ndarray:
        """Width ``C0**-1 * eps**(-1/(m-1)) * exp(-t/eps)`` of the near-curve layer."""
        return (self.epsilon ** (-1.0 / (self.m - 1.0)) / self.C0) * np.exp(
            -np.asarray(t, dtype=float) / self.epsilon)

    def with_(self, **changes) -> "Params":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        keys = ("epsilon", "alpha", "gamma", "b", "m", "A", "M1", "M2", "L",
                "theorem_mode", "C0", "dbar", "bbar", "d")
        return {k: getattr(self, k) for k in keys}


def derived_constants(epsilon, alpha, gamma, b, m, A=1.0, M1=16.0, M2=16.0, **kw) -> Params:
    """Build :class:`Params`, computing ``C0``, ``dbar``, ``bbar`` and ``d``."""
    return Params(epsilon=epsilon, alpha=alpha, gamma=gamma, b=b, m=m, A=A,
                  M1=M1, M2=M2, **kw)


def assemble_L(C_gamma: float, K0: float, K1: float, K2: float, A: float) -> float:
    """Drift amplitude ``L = C_gamma * K0 * K1 * K2 * A**3``."""
    return C_gamma * K0 * K1 * K2 * A**3


def geometric_nodes(v_min: float, q: int, nv: int) -> np.ndarray:
    """Nodes ``v_min * 2**(j/q)`` built so that halving is exact by index."""
    if q < 1 or int(q) != q:
        raise DomainError(f"q must be a positive integer, got {q}")
    if not v_min > 0:
        raise DomainError("v_min must be positive")
    j = np.arange(nv)
    base = v_min * np.exp2(np.arange(q) / q)
    # power-of-two scaling is exact, so v[j] / 2 == v[j - q] bit-for-bit
    return np.ldexp(base[j % q], j // q)


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 1:
        return np.ones(1)
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid: uniform in ``y``, geometric with ratio ``2**(1/q)`` in ``v``."""

    y_min: float
    y_max: float
    ny: int
    v_min: float
    q: int
    nv: int
    y: np.ndarray = field(init=False, repr=False, compare=False)
    v: np.ndarray = field(init=False, repr=False, compare=False)
    wy: np.ndarray = field(init=False, repr=False, compare=False)
    wv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.ny < 2 or self.nv < 2:
            raise DomainError("grid needs at least two nodes per axis")
        if not self.y_max > self.y_min:
            raise DomainError("y_max must exceed y_min")
        y = np.linspace(self.y_min, self.y_max, self.ny)
        v = geometric_nodes(self.v_min, self.q, self.nv)
        for name, arr in (("y", y), ("v", v), ("wy", trapezoid_weights(y)),
                          ("wv", trapezoid_weights(v))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_box(cls, y_range, v_range, ny: int, q: int = 8) -> "Grid2D":
        """Grid on ``y_range x v_range``; ``v_max / v_min`` must be a power of two."""
        v_min, v_max = v_range
        octaves = math.log2(v_max / v_min)
        if abs(octaves - round(octaves)) > 1e-9:
            raise DomainError("v_max / v_min must be an integer power of two")
        return cls(float(y_range[0]), float(y_range[1]), int(ny), float(v_min), int(q),
                   int(round(octaves)) * int(q) + 1)

    @classmethod
    def default(cls, alpha: float, ny: int = 128, q: int = 8) -> "Grid2D":
        """Default box ``y in [-2 v_max**alpha, 2 v_max**alpha]``, ``v in [2**-6, 2**6]``."""
        ymax = 2.0 * 64.0**alpha
        return cls.from_box((-ymax, ymax), (2.0**-6, 2.0**6), ny, q)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def v_max(self) -> float:
        return float(self.v[-1])

    @property
    def ratio(self) -> float:
        return 2.0 ** (1.0 / self.q)

    def half_index(self, j):
        """Index of ``v_j / 2``, or ``-1`` where it falls below ``v_min``."""
        j = np.asarray(j)
        return np.where(j >= self.q, j - self.q, -1)

    def mesh(self):
        return np.meshgrid(self.y, self.v, indexing="ij")

    def spec(self) -> dict:
        return {"y_min": self.y_min, "y_max": self.y_max, "ny": self.ny,
                "v_min": self.v_min, "q": self.q, "nv": self.nv}

    def refined(self) -> "Grid2D":
        """Grid with halved spacing on both axes, covering the same box."""
        return Grid2D(self.y_min, self.y_max, 2 * self.ny - 1, self.v_min, 2 * self.q,
                      2 * self.nv - 1)


@dataclass
class Field2D:
    """Density values ``H[i, j]`` at ``(y_i, v_j)`` and time ``t``."""

    values: np.ndarray
    grid: Grid2D
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.ny, self.grid.nv):
            raise DomainError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.ny}, {self.grid.nv})")

    @classmethod
    def zeros(cls, grid: Grid2D, t: float = 0.0) -> "Field2D":
        return cls(np.zeros((grid.ny, grid.nv)), grid, t)

    def copy(self) -> "Field2D":
        return Field2D(self.values.copy(), self.grid, self.t)

    def with_values(self, values, t: float | None = None) -> "Field2D":
        return Field2D(values, self.grid, self.t if t is None else t)


def _profile(y, v, params: Params):
    return params.A / ((1.0 + v**params.b) * (1.0 + np.abs(y - v**params.alpha) ** params.m))


def init_field(grid: Grid2D, params: Params, window_N: float | None = None) -> Field2D:
    """Initial profile ``A / ((1 + v**b)(1 + |y - v**alpha|**m))``.

    ``window_N`` multiplies by the linear cutoff in ``v`` that vanishes beyond
    ``window_N``, giving compactly supported data.
    """
    Y, V = grid.mesh()
    H = _profile(Y, V, params)
    if window_N is not None:
        H = H * chi_ramp(V, window_N)
    return Field2D(H, grid, 0.0)


def total_mass(field: Field2D) -> float:
    """Trapezoid quadrature of ``v * H`` over the grid."""
    g = field.grid
    return float(g.wy @ (field.values * g.v) @ g.wv)


def row_moments(field: Field2D, k: float) -> np.ndarray:
    """``int w**k H(y_i, w) dw`` for every grid row."""
    g = field.grid
    return field.values @ (g.wv * g.v**k)


def y_marginal(field: Field2D) -> np.ndarray:
    """``int H(y, v_j) dy`` for every ``v`` column."""
    return field.grid.wy @ field.values


def moment_k(field: Field2D, k: float, y: float) -> float:
    """``int w**k H(y, w) dw`` at ``y``, linearly interpolating between rows."""
    g = field.grid
    if not g.y_min <= y <= g.y_max:
        raise DomainError(f"y={y} lies outside [{g.y_min}, {g.y_max}]")
    if k < -1:
        raise DomainError(f"moment order must be >= -1, got {k}")
    rows = row_moments(field, k)
    return float(np.interp(y, g.y, rows))
