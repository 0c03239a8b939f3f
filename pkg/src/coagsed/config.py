"""Flat ``section.key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Every key must appear in
:data:`SCHEMA`; values are converted to the schema type and the model
parameters are validated by building :class:`~coagsed.grid.Params`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import CoagError, ConfigError
from .grid import Grid2D, Params
from .kernels import ConstantKernel, RainKernel, ScaledKernel, SumKernel, truncate

__all__ = ["SCHEMA", "ExperimentConfig", "load_config", "parse_config"]


def _floats(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return [float(s) for s in items]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


SCHEMA: dict[str, tuple] = {
    "model.epsilon": (float, 0.05),
    "model.alpha": (float, 0.5),
    "model.gamma": (float, 1.2),
    "model.b": (float, 6.0),
    "model.m": (float, 6.0),
    "model.A": (float, 1.0),
    "model.M1": (float, 1024.0),
    "model.M2": (float, 65536.0),
    "model.L": (float, 1.0),
    "model.theorem_mode": (_bool, False),
    "grid.y_min": (float, -2.0),
    "grid.y_max": (float, 6.0),
    "grid.ny": (int, 128),
    "grid.v_min": (float, 2.0**-4),
    "grid.v_max": (float, 2.0**4),
    "grid.q": (int, 16),
    "kernel.type": (str, "sum"),
    "kernel.gamma": (_opt_float, None),
    "kernel.alpha": (_opt_float, None),
    "kernel.K0": (_opt_float, None),
    "kernel.epsilon_scale": (_opt_float, None),
    "kernel.truncation_N": (_opt_float, None),
    "solver.kind": (str, "splitting"),
    "solver.T": (float, 0.1),
    "solver.dt": (float, 0.004),
    "solver.snapshot_every": (int, 5),
    "solver.scheme": (str, "strang"),
    "solver.coag_method": (str, "heun"),
    "picard.T": (float, 0.4),
    "picard.tol": (float, 1e-12),
    "picard.max_iter": (int, 30),
    "picard.n_t": (int, 41),
    "diagonal.T": (float, 1.0),
    "sweep.epsilons": (_floats, [0.2, 0.1, 0.05]),
    "sweep.t": (float, 0.5),
    "sweep.delta": (float, 0.25),
    "characteristics.n": (int, 1000),
    "characteristics.epsilon": (float, 0.01),
    "characteristics.L": (float, 1.0),
    "characteristics.t_end": (float, 1.0),
    "characteristics.v_lo": (float, 1.0),
    "characteristics.v_hi": (float, 10.0),
    "characteristics.epsilon_candidates": (_floats, [0.01, 0.02, 0.05, 0.1, 0.2]),
    "characteristics.candidate_n": (int, 100),
    "check.lemma_samples": (int, 100_000),
    "check.psi_epsilons": (_floats, [0.1, 0.05]),
    "check.psi_times": (_floats, [0.1, 0.5, 1.0]),
    "check.envelope_T": (float, 0.05),
    "check.corrupt_field": (_bool, False),
    "run.seed": (int, 0),
}


@dataclass
class ExperimentConfig:
    """Resolved configuration; ``values`` holds every schema key."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def resolved(self) -> dict:
        return dict(sorted(self.values.items()))

    def with_overrides(self, **kv) -> "ExperimentConfig":
        merged = dict(self.values)
        for k, v in kv.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = v
        cfg = ExperimentConfig(merged)
        cfg.validate()
        return cfg

    def params(self, **changes) -> Params:
        v = self.values
        kw = dict(epsilon=v["model.epsilon"], alpha=v["model.alpha"], gamma=v["model.gamma"],
                  b=v["model.b"], m=v["model.m"], A=v["model.A"], M1=v["model.M1"],
                  M2=v["model.M2"], L=v["model.L"], theorem_mode=v["model.theorem_mode"])
        kw.update(changes)
        return Params(**kw)

    def grid(self) -> Grid2D:
        v = self.values
        return Grid2D.from_box((v["grid.y_min"], v["grid.y_max"]),
                               (v["grid.v_min"], v["grid.v_max"]), v["grid.ny"], v["grid.q"])

    def kernel(self):
        v = self.values
        kind = v["kernel.type"]
        if kind == "sum":
            gamma = v["kernel.gamma"] if v["kernel.gamma"] is not None else v["model.gamma"]
            k = SumKernel(gamma, K0=v["kernel.K0"] or 1.0)
        elif kind == "rain":
            alpha = v["kernel.alpha"] if v["kernel.alpha"] is not None else v["model.alpha"]
            k = RainKernel(alpha, K0=v["kernel.K0"] or 2.0, gamma=v["kernel.gamma"])
        elif kind == "constant":
            k = ConstantKernel(1.0)
        else:
            raise ConfigError(f"kernel.type must be sum, rain or constant, got {kind!r}")
        if v["kernel.epsilon_scale"] is not None:
            k = ScaledKernel(v["kernel.epsilon_scale"], k)
        if v["kernel.truncation_N"] is not None:
            k = truncate(k, v["kernel.truncation_N"])
        return k

    def validate(self) -> None:
        v = self.values
        try:
            self.params()
            self.grid()
            self.kernel()
        except ConfigError:
            raise
        except (CoagError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if v["solver.kind"] not in ("splitting", "mild"):
            raise ConfigError("solver.kind must be splitting or mild")
        if v["solver.T"] < 0 or v["solver.dt"] <= 0:
            raise ConfigError("solver.T must be >= 0 and solver.dt > 0")
        if v["solver.scheme"] not in ("strang", "lie"):
            raise ConfigError("solver.scheme must be strang or lie")
        if v["solver.coag_method"] not in ("heun", "euler"):
            raise ConfigError("solver.coag_method must be heun or euler")
        if v["solver.snapshot_every"] < 1:
            raise ConfigError("solver.snapshot_every must be >= 1")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key {key!r}")
        conv = SCHEMA[key][0]
        try:
            values[key] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    cfg = ExperimentConfig(values)
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))
