"""Characteristics of the supersolution transport equation and their bounds.

The system is

    Y' = (Y - V**alpha) / eps,        V' = -L V**gamma xi(V) / (1 + |Y|**d),

started from ``(y0, v0)``, together with its variational equations for
``dY/dv0`` and ``dV/dv0``.  ``Y`` grows like ``exp(t/eps)``, so the solver
works with ``Z = exp(-t/eps) Y`` and ``Q = exp(-t/eps) dY/dv0``; the
integrating factor is exact and the remaining system is not stiff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, StiffnessError

__all__ = [
    "CharParams",
    "CharPath",
    "check_prop44",
    "estimate_epsilon_1",
    "fit_K3",
    "integrate_char",
    "integrate_many",
    "supersolution_G",
    "sweep_prop44",
    "t3_domination",
    "xi",
    "xi_prime",
]


def xi(v):
    """Cubic smoothstep: 0 on ``[0, 1/2]``, 1 on ``[1, inf)``."""
    s = np.clip(2.0 * (np.asarray(v, dtype=float) - 0.5), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def xi_prime(v):
    s = np.clip(2.0 * (np.asarray(v, dtype=float) - 0.5), 0.0, 1.0)
    return 12.0 * s * (1.0 - s)


@dataclass(frozen=True)
class CharParams:
    epsilon: float
    alpha: float
    gamma: float
    L: float
    d: int

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise DomainError(f"d must be even and >= 2, got {self.d}")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")

    @classmethod
    def from_params(cls, params) -> "CharParams":
        return cls(params.epsilon, params.alpha, params.gamma, params.L, params.d)


@dataclass
class CharPath:
    """Trajectory in scaled form; ``Y`` and ``dvY`` are recovered on demand.

    Attributes
    ----------
    times : ndarray
    Z, Q : ndarray
        ``exp(-t/eps) Y`` and ``exp(-t/eps) dY/dv0``.
    V, dvV : ndarray
    """

    y0: float
    v0: float
    times: np.ndarray
    Z: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    dvV: np.ndarray
    epsilon: float

    @property
    def growth(self) -> np.ndarray:
        return np.exp(self.times / self.epsilon)

    @property
    def Y(self) -> np.ndarray:
        return self.growth * self.Z

    @property
    def dvY(self) -> np.ndarray:
        return self.growth * self.Q


def _rhs_factory(cp: CharParams):
    eps, a, gam, L, d = cp.epsilon, cp.alpha, cp.gamma, cp.L, cp.d

    def rhs(t, u):
        Z, V, Q, P = u.reshape(4, -1)
        V = np.maximum(V, 1e-300)
        decay = math.exp(-t / eps)
        r = t / eps
        with np.errstate(divide="ignore"):
            logZ = np.log(np.abs(Z))
            logQ = np.log(np.abs(Q))
        # g = 1 / (1 + Y**d), Y = e^{t/eps} Z
        log_g = -np.logaddexp(0.0, d * (r + logZ))
        g = np.exp(log_g)
        # d Y**(d-1) dY/dv0 g**2, assembled in logs to avoid overflow
        log_h = math.log(d) + d * r + (d - 1) * logZ + logQ + 2.0 * log_g
        h = np.sign(Z) * np.sign(Q) * np.exp(np.minimum(log_h, 700.0))
        h = np.where((Z == 0) | (Q == 0), 0.0, h)
        xv = xi(V)
        dZ = -decay * V**a / eps
        dV = -L * V**gam * xv * g
        dQ = -decay * a * V ** (a - 1.0) * P / eps
        dP = -L * (gam * V ** (gam - 1.0) * xv + V**gam * xi_prime(V)) * g * P \
            + L * V**gam * xv * h
        return np.concatenate([dZ, dV, dQ, dP])

    return rhs


def integrate_many(y0, v0, t_end: float, cp: CharParams, t_eval=None, rtol: float = 1e-11,
                   atol: float = 1e-14, method: str = "DOP853") -> list[CharPath]:
    """Integrate a batch of characteristics together (vectorized right-hand side)."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    y0, v0 = np.broadcast_arrays(y0, v0)
    if np.any(v0 <= 0):
        raise DomainError("initial volumes must be positive")
    n = y0.size
    u0 = np.concatenate([y0, v0, np.zeros(n), np.ones(n)])
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 101)
    sol = solve_ivp(_rhs_factory(cp), (0.0, t_end), u0, method=method, t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else 0.0
        raise StiffnessError(
            f"characteristic integration failed on [{t_fail:g}, {t_end:g}]: {sol.message}")
    Z, V, Q, P = sol.y.reshape(4, n, -1)
    return [CharPath(float(y0[i]), float(v0[i]), sol.t, Z[i], V[i], Q[i], P[i], cp.epsilon)
            for i in range(n)]


def integrate_char(y0: float, v0: float, t_end: float, cp: CharParams, t_eval=None,
                   rtol: float = 1e-12, atol: float = 1e-15) -> CharPath:
    """Integrate one characteristic with its variational derivatives.

    Raises
    ------
    StiffnessError
        If the adaptive step size underflows; the message names the
        unfinished time interval.
    """
    return integrate_many([y0], [v0], t_end, cp, t_eval, rtol, atol)[0]


def check_prop44(path: CharPath, cp: CharParams, tol: float = 1e-6) -> dict:
    """Check the confinement bounds and derivative sandwiches at every stored time.

    Bounds, with ``E = exp(t/eps)`` and ``(y0, v0)`` the start:

    * ``v_bounds``: ``0.9 v0 <= V <= v0``;
    * ``y_below``: ``Y <= (v0/3)**alpha``;
    * ``gap_lower`` / ``gap_upper``:
      ``E (y0 - v0**alpha) <= Y - V**alpha <= E (y0 - 0.9**alpha v0**alpha)``;
    * ``gap_combined``: ``Y - V**alpha <= (0.9**alpha - 3**-alpha) E (y0 - v0**alpha)``;
    * ``dvV``: ``1/2 <= dV/dv0 <= 1``;
    * ``dvY``: ``c_hi a v0**(a-1) (1 - E) <= dY/dv0 <= (a v0**(a-1) / 2)(1 - E)``;
    * ``mixed``: ``(a v0**(a-1)/2) E <= a V**(a-1) dV/dv0 - dY/dv0 <= c_hi a v0**(a-1) E``,

    where ``c_hi = (10/9)**(1-alpha)``.  Bounds growing with ``E`` are
    compared after division by ``E``; each violation amount is relative
    to the size of the bound (at least 1).
    """
    a = cp.alpha
    y0, v0 = path.y0, path.v0
    t = path.times
    Einv = np.exp(-t / cp.epsilon)
    Z, V, Q, P = path.Z, path.V, path.Q, path.dvV
    ca = v0**a
    c_hi = (10.0 / 9.0) ** (1.0 - a)
    s = a * v0 ** (a - 1.0)
    gap = Z - Einv * V**a                       # (Y - V^a) / E
    checks = {
        "v_bounds": [(0.9 * v0 - V, v0), (V - v0, v0)],
        "y_below": [(Z - Einv * (v0 / 3.0) ** a, np.maximum(Einv * (v0 / 3) ** a, Einv))],
        "gap_lower": [((y0 - ca) - gap, max(1.0, abs(y0 - ca)))],
        "gap_upper": [(gap - (y0 - 0.9**a * ca), max(1.0, abs(y0 - 0.9**a * ca)))],
        "gap_combined": [(gap - (0.9**a - 3.0**-a) * (y0 - ca), max(1.0, abs(y0 - ca)))],
        "dvV": [(0.5 - P, 1.0), (P - 1.0, 1.0)],
        "dvY": [(c_hi * s * (Einv - 1.0) - Q, max(1.0, c_hi * s)),
                (Q - 0.5 * s * (Einv - 1.0), max(1.0, c_hi * s))],
        "mixed": [(0.5 * s - (a * V ** (a - 1.0) * P * Einv - Q), max(1.0, c_hi * s)),
                  ((a * V ** (a - 1.0) * P * Einv - Q) - c_hi * s, max(1.0, c_hi * s))],
    }
    worst = {}
    viol = []
    for name, parts in checks.items():
        m = -np.inf
        for excess, scale in parts:
            rel = np.asarray(excess) / np.asarray(scale)
            m = max(m, float(np.max(rel)))
        worst[name] = m
        if m > tol:
            viol.append(name)
    return {"check": "prop44", "y0": y0, "v0": v0, "max_excess": worst, "violations": viol}


def sweep_prop44(n: int, cp: CharParams, seed: int = 0, v_range=(1.0, 10.0),
                 y_span: float = 5.0, t_end: float = 1.0, batch: int = 64,
                 tol: float = 1e-6, n_times: int = 101) -> dict:
    """Random starts with ``v0`` uniform in ``v_range`` and
    ``y0 = (v0/3)**alpha - y_span * U``, ``U`` uniform in ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    v0 = rng.uniform(*v_range, size=n)
    y0 = (v0 / 3.0) ** cp.alpha - y_span * rng.uniform(0.0, 1.0, size=n)
    t_eval = np.linspace(0.0, t_end, n_times)
    worst: dict[str, float] = {}
    rows = []
    for start in range(0, n, batch):
        paths = integrate_many(y0[start:start + batch], v0[start:start + batch], t_end, cp,
                               t_eval)
        for p in paths:
            rep = check_prop44(p, cp, tol)
            rows.append(rep)
            for k, val in rep["max_excess"].items():
                worst[k] = max(worst.get(k, -np.inf), val)
    failing = [r for r in rows if r["violations"]]
    return {"check": "prop44_sweep", "n": n, "epsilon": cp.epsilon, "L": cp.L,
            "worst_excess": worst, "violation_count": len(failing),
            "violations": [(r["y0"], r["v0"], r["violations"]) for r in failing[:50]],
            "rows": rows}


def estimate_epsilon_1(cp: CharParams, epsilons, n: int = 200, seed: int = 0, **kw) -> dict:
    """Largest ``eps`` in ``epsilons`` whose sweep shows no violations.

    Every candidate is swept with the same starts; ``None`` means no
    candidate was clean.
    """
    counts = {}
    for eps in sorted(epsilons):
        trial = CharParams(eps, cp.alpha, cp.gamma, cp.L, cp.d)
        counts[float(eps)] = sweep_prop44(n, trial, seed=seed, **kw)["violation_count"]
    clean = [e for e, c in counts.items() if c == 0]
    return {"epsilon_1": max(clean) if clean else None, "violation_counts": counts}


def supersolution_G(y: float, v: float, t: float, cp: CharParams, A: float, b: float,
                    m: float, K3: float) -> float:
    """``exp(K3 L t) A exp(t/eps) / ((1 + V**b)(1 + |Y - V**alpha|**m))`` along the path from ``(y, v)``."""
    if t == 0:
        return A / ((1.0 + v**b) * (1.0 + abs(y - v**cp.alpha) ** m))
    p = integrate_char(y, v, t, cp, t_eval=[0.0, t])
    r = t / cp.epsilon
    V = p.V[-1]
    gap = abs(p.Z[-1] - math.exp(-r) * V**cp.alpha)
    log_dev = r + math.log(gap) if gap > 0 else -np.inf
    log_val = K3 * cp.L * t + math.log(A) + r - math.log1p(V**b) - np.logaddexp(0.0, m * log_dev)
    return math.exp(log_val)


def t3_domination(samples, cp: CharParams, A: float, b: float, m: float, K3: float) -> float:
    """Largest ``G / (A E psi(E (y - v**alpha)) / (1 + v**b))`` over ``(y, v, t)`` samples.

    Samples with ``t > 1/(K3 L)`` are skipped: the bound is only claimed on
    that window.  The returned value is the smallest admissible ``M2``.
    """
    horizon = 1.0 / (K3 * cp.L) if K3 * cp.L > 0 else np.inf
    worst = 0.0
    for y, v, t in samples:
        if t > horizon:
            continue
        G = supersolution_G(y, v, t, cp, A, b, m, K3)
        r = t / cp.epsilon
        log_ref = math.log(A) + r - math.log1p(v**b)
        dev = abs(y - v**cp.alpha)
        log_ref -= np.logaddexp(0.0, m * (r + math.log(dev))) if dev > 0 else 0.0
        worst = max(worst, G / math.exp(log_ref))
    return worst


def fit_K3(samples, cp: CharParams, A: float, b: float, m: float, M2: float,
           candidates=(0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)) -> dict:
    """Smallest candidate ``K3`` for which ``G`` stays below ``M2`` times the far-below profile."""
    for K3 in sorted(candidates):
        need = t3_domination(samples, cp, A, b, m, K3)
        if need <= M2:
            return {"K3": K3, "required_M2": need, "passed": True}
    return {"K3": None, "required_M2": need, "passed": False}
