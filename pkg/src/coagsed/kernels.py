"""Coagulation kernels and sampling checks of their structural assumptions.

Every kernel is an immutable dataclass that can be called on broadcastable
arrays of volumes.  The call does not validate its arguments; use
:func:`eval_kernel` for the checked entry point.

Two families are supported:

``SumKernel``
    ``K(v, w) = v**gamma + w**gamma``.
``RainKernel``
    ``K(v, w) = |v**alpha - w**alpha| * (v**(1/3) + w**(1/3))**2``, which
    vanishes on the diagonal ``v == w``.

``ScaledKernel`` and ``TruncatedKernel`` wrap another kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError

__all__ = [
    "ConstantKernel",
    "KernelSpec",
    "RainKernel",
    "ScaledKernel",
    "SumKernel",
    "TruncatedKernel",
    "check_structural_assumptions",
    "chi_ramp",
    "eval_kernel",
    "fit_upper_bound_constant",
    "truncate",
]


@dataclass(frozen=True)
class SumKernel:
    gamma: float
    K0: float = 1.0
    kind: str = field(default="sum", init=False)

    def __call__(self, v, w):
        return np.power(v, self.gamma) + np.power(w, self.gamma)

    @property
    def homogeneity(self) -> float:
        return self.gamma


@dataclass(frozen=True)
class RainKernel:
    """Differential-sedimentation kernel.

    ``gamma`` is the exponent used in the upper bound
    ``K <= K0 (v**gamma + w**gamma)``; it defaults to the homogeneity
    ``alpha + 2/3``.  ``K0`` is meant to be fitted with
    :func:`fit_upper_bound_constant`.
    """

    alpha: float
    K0: float = 2.0
    gamma: float | None = None
    kind: str = field(default="rain", init=False)

    def __call__(self, v, w):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.abs(v**self.alpha - w**self.alpha) * (np.cbrt(v) + np.cbrt(w)) ** 2

    @property
    def homogeneity(self) -> float:
        return self.alpha + 2.0 / 3.0 if self.gamma is None else self.gamma


@dataclass(frozen=True)
class ConstantKernel:
    """``K = c``; a test kernel with exactly known moment dynamics."""

    c: float = 1.0
    K0: float = 1.0
    kind: str = field(default="constant", init=False)

    def __call__(self, v, w):
        return np.full(np.broadcast(np.asarray(v), np.asarray(w)).shape, float(self.c))

    @property
    def homogeneity(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ScaledKernel:
    factor: float
    inner: "KernelSpec"
    kind: str = field(default="scaled", init=False)

    def __call__(self, v, w):
        return self.factor * self.inner(v, w)

    @property
    def homogeneity(self) -> float:
        return self.inner.homogeneity

    @property
    def K0(self) -> float:
        return self.factor * self.inner.K0


def chi_ramp(x, N):
    """Cutoff equal to 1 on ``[0, N/2]``, 0 on ``[N, inf)``, linear between."""
    x = np.asarray(x, dtype=float)
    return np.clip(2.0 - 2.0 * x / N, 0.0, 1.0)


@dataclass(frozen=True)
class TruncatedKernel:
    N: float
    inner: "KernelSpec"
    kind: str = field(default="truncated", init=False)

    def __call__(self, v, w):
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        return self.inner(v, w) * chi_ramp(v + w, self.N)

    @property
    def homogeneity(self) -> float:
        return self.inner.homogeneity

    @property
    def K0(self) -> float:
        return self.inner.K0


KernelSpec = Union[SumKernel, RainKernel, ConstantKernel, ScaledKernel, TruncatedKernel]


def eval_kernel(spec: KernelSpec, v, w):
    """Evaluate ``spec`` at positive volumes, raising on nonpositive input."""
    v_arr = np.asarray(v, dtype=float)
    w_arr = np.asarray(w, dtype=float)
    if np.any(~(v_arr > 0)) or np.any(~(w_arr > 0)):
        raise DomainError("kernel arguments must be strictly positive volumes")
    out = spec(v_arr, w_arr)
    return float(out) if np.ndim(out) == 0 else out


def truncate(spec: KernelSpec, N: float) -> TruncatedKernel:
    if not N > 0:
        raise DomainError(f"truncation volume must be positive, got {N!r}")
    return TruncatedKernel(N=float(N), inner=spec)


def _sample_volumes(rng, n, lo, hi):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=n))


def check_structural_assumptions(
    spec: KernelSpec,
    sample_count: int,
    seed: int = 0,
    *,
    gamma: float | None = None,
    K0: float | None = None,
    v_range: tuple[float, float] = (1e-3, 1e3),
) -> dict:
    """Sample the two kernel assumptions and return every violating pair.

    (i) ``K(v - w, w) <= K(v, w)`` for ``0 < w <= v/2``;
    (ii) ``K(v, w) <= K0 (v**gamma + w**gamma)``.

    ``gamma`` and ``K0`` default to the values declared on ``spec``.  Volumes
    are drawn log-uniformly from ``v_range``.
    """
    gamma = spec.homogeneity if gamma is None else gamma
    K0 = spec.K0 if K0 is None else K0
    report = {"sample_count": int(sample_count), "gamma": gamma, "K0": K0,
              "monotone_violations": [], "bound_violations": []}
    if sample_count < 1:
        return report | {"violations": []}
    rng = np.random.default_rng(seed)
    lo, hi = v_range

    v = _sample_volumes(rng, sample_count, lo, hi)
    w = v * rng.uniform(0.0, 0.5, size=sample_count)
    w = np.where(w > 0, w, v * 0.25)
    lhs = spec(v - w, w)
    rhs = spec(v, w)
    bad = lhs > rhs
    report["monotone_violations"] = [(float(a), float(b)) for a, b in zip(v[bad], w[bad])]

    v = _sample_volumes(rng, sample_count, lo, hi)
    w = _sample_volumes(rng, sample_count, lo, hi)
    bad = spec(v, w) > K0 * (v**gamma + w**gamma)
    report["bound_violations"] = [(float(a), float(b)) for a, b in zip(v[bad], w[bad])]

    report["violations"] = report["monotone_violations"] + report["bound_violations"]
    return report


def fit_upper_bound_constant(
    spec: KernelSpec,
    gamma: float | None = None,
    sample_count: int = 100_000,
    seed: int = 0,
    v_range: tuple[float, float] = (1e-3, 1e3),
) -> float:
    """Smallest ``K0`` with ``K(v, w) <= K0 (v**gamma + w**gamma)`` on a sample."""
    gamma = spec.homogeneity if gamma is None else gamma
    rng = np.random.default_rng(seed)
    v = _sample_volumes(rng, sample_count, *v_range)
    w = _sample_volumes(rng, sample_count, *v_range)
    return float(np.max(spec(v, w) / (v**gamma + w**gamma)))
