"""Sectional coagulation operator on the geometric volume grid.

Densities are turned into per-node particle numbers ``n_j = wv_j H_j`` (``wv``
being the trapezoid weights in ``v``).  Every collision pair ``(j, k)`` with
``j >= k`` happens at rate ``K(v_j, v_k) n_j n_k`` (half that when ``j == k``)
and its product, of volume ``u = v_j + v_k``, is split between the two nodes
bracketing ``u`` so that both particle number and volume are conserved.
Products above ``v_max`` leave the grid and are reported as a boundary flux.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .errors import DomainError
from .grid import Field2D, Grid2D
from .kernels import KernelSpec

__all__ = [
    "CoagOperator",
    "CoagRate",
    "apply_bilinear",
    "apply_symmetric",
    "coag_operator",
    "rate_a_rows",
]


@dataclass
class CoagRate:
    """Gain and loss densities on the grid, plus what left through ``v_max``.

    Attributes
    ----------
    gain, loss : ndarray, shape (ny, nv)
        Rate densities; ``d_t H = gain - loss`` for pure coagulation.
    rate_a : ndarray, shape (ny, nv)
        ``int K(v, w) b(y, w) dw``, so that ``loss = a * rate_a``.
    boundary_mass_rate : ndarray, shape (ny,)
        Volume per unit time carried by products larger than ``v_max``.
    loss_tail : ndarray, shape (ny, nv)
        Estimate of the loss missed by truncating the ``w`` integral at
        ``v_max``, from a power-law extrapolation of the last two columns.
    """

    gain: np.ndarray
    loss: np.ndarray
    rate_a: np.ndarray
    boundary_mass_rate: np.ndarray
    loss_tail: np.ndarray

    @property
    def net(self) -> np.ndarray:
        return self.gain - self.loss


class CoagOperator:
    """Precomputed pair tables for one ``(grid, kernel)`` combination."""

    def __init__(self, grid: Grid2D, kernel: KernelSpec):
        self.grid = grid
        self.kernel = kernel
        v = grid.v
        nv = grid.nv
        self.K = kernel(v[:, None], v[None, :])
        j, k = np.tril_indices(nv)
        Kp = self.K[j, k]
        keep = Kp > 0
        j, k, Kp = j[keep], k[keep], Kp[keep]
        self.pair_j, self.pair_k = j, k
        self.pair_coef = np.where(j == k, 0.5, 1.0) * Kp
        u = v[j] + v[k]
        self.pair_u = u

        inside = u <= v[-1]
        lo = np.clip(np.searchsorted(v, u, side="right") - 1, 0, nv - 2)
        frac_hi = (u - v[lo]) / (v[lo + 1] - v[lo])
        rows = np.concatenate([lo[inside], lo[inside] + 1])
        cols = np.concatenate([np.flatnonzero(inside)] * 2)
        vals = np.concatenate([1.0 - frac_hi[inside], frac_hi[inside]])
        # content-to-density: divide node counts by wv
        vals = vals / grid.wv[rows]
        self.P = sparse.csr_matrix((vals, (rows, cols)), shape=(nv, j.size))
        self.lost_volume = np.where(inside, 0.0, u)

        # tail extension for the loss-integral truncation estimate
        self._tail_w = v[-1] * np.exp2(np.arange(1, 8 * grid.q + 1) / grid.q)
        self._tail_K = kernel(v[:, None], self._tail_w[None, :])
        self._tail_dw = np.gradient(self._tail_w)

    def pair_rates(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        wv = self.grid.wv
        na = a * wv
        nb = b * wv
        return self.pair_coef * na[:, self.pair_j] * nb[:, self.pair_k]

    def rate_a(self, b: np.ndarray) -> np.ndarray:
        return (b * self.grid.wv) @ self.K.T

    def loss_tail(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        v = self.grid.v
        b1, b2 = b[:, -2], b[:, -1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            slope = np.log(b2 / b1) / np.log(v[-1] / v[-2])
        slope = np.where(np.isfinite(slope), np.minimum(slope, 0.0), 0.0)
        ext = b2[:, None] * (self._tail_w[None, :] / v[-1]) ** slope[:, None]
        return a * ((ext * self._tail_dw) @ self._tail_K.T)

    def apply(self, a: np.ndarray, b: np.ndarray) -> CoagRate:
        r = self.pair_rates(a, b)
        gain = np.asarray(self.P @ r.T).T
        ra = self.rate_a(b)
        return CoagRate(
            gain=np.maximum(gain, 0.0),
            loss=a * ra,
            rate_a=ra,
            boundary_mass_rate=r @ self.lost_volume,
            loss_tail=self.loss_tail(a, b),
        )


@lru_cache(maxsize=16)
def coag_operator(grid: Grid2D, kernel: KernelSpec) -> CoagOperator:
    return CoagOperator(grid, kernel)


def apply_symmetric(field: Field2D, kernel: KernelSpec) -> CoagRate:
    """Coagulation rates of ``H`` with itself, row by row in ``y``.

    Number and volume are conserved pair by pair, so
    ``sum_j v_j wv_j (gain - loss)`` equals minus ``boundary_mass_rate``.
    """
    return coag_operator(field.grid, kernel).apply(field.values, field.values)


def apply_bilinear(a: Field2D, b: Field2D, kernel: KernelSpec) -> CoagRate:
    """Asymmetric rates: the larger collision partner from ``a``, the smaller from ``b``.

    ``gain(v) ~ int_0^{v/2} K(v-w, w) a(v-w) b(w) dw`` and
    ``loss(v) = a(v) int K(v, w) b(w) dw``.  Equal-size pairs get half
    weight, so ``apply_bilinear(H, H)`` coincides with ``apply_symmetric(H)``.
    """
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise DomainError("bilinear coagulation needs both fields on the same grid")
    return coag_operator(a.grid, kernel).apply(a.values, b.values)


def rate_a_rows(field: Field2D, kernel: KernelSpec) -> np.ndarray:
    """``a[H](y_i, v_j) = int K(v_j, w) H(y_i, w) dw`` on every node."""
    return coag_operator(field.grid, kernel).rate_a(field.values)
