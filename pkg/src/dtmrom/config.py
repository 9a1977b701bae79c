"""Run configuration (a single JSON document; unknown keys are rejected)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .problems import PROBLEM_IDS


@dataclass
class RunConfig:
    problem: str = "laplace-airfoil"
    mesh: dict | str | None = None  # generator keywords or a mesh file path
    geometry: dict | None = None
    tol_pod: float | None = None
    N: int | None = None
    J: int | None = None
    tol_eim: float = 1e-14
    tol_eq: float = 1e-10
    tol_es: float = 1e-4
    tol_eq_r: float = 1e-10
    signed_estimator_weights: bool = False
    n_train: int | None = None
    n_train_eq: int | None = None
    n_train_r: int | None = None
    n_test: int = 20
    seed: int = 0
    output_dir: str = "out"
    alpha_supg: float = 0.5

    def __post_init__(self):
        if self.problem not in PROBLEM_IDS:
            raise ConfigurationError(f"unknown problem '{self.problem}' (choose from {', '.join(PROBLEM_IDS)})")
        nonlinear = self.problem == "burgers-bump"
        if self.n_train is None:
            self.n_train = 40 if nonlinear else 50
        if self.n_train_eq is None:
            self.n_train_eq = 10 if nonlinear else 0
        if self.n_train_r is None:
            self.n_train_r = self.n_train
        if self.N is None and self.tol_pod is None:
            self.N = 6 if not nonlinear else 8
        for name in ("tol_eim", "tol_eq", "tol_es", "tol_eq_r"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 < v < 1.0):
                raise ConfigurationError(f"{name} must lie in (0, 1), got {v!r}")
        if self.tol_pod is not None and not (0.0 <= self.tol_pod < 1.0):
            raise ConfigurationError(f"tol_pod must lie in [0, 1), got {self.tol_pod!r}")
        for name in ("n_train", "n_train_r", "n_test"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v > 0):
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if not (isinstance(self.n_train_eq, int) and self.n_train_eq >= 0):
            raise ConfigurationError("n_train_eq must be a nonnegative integer")
        if self.n_train_r > self.n_train:
            raise ConfigurationError("n_train_r cannot exceed n_train")
        for name in ("N", "J"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, int) and v > 0):
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.mesh is not None and not isinstance(self.mesh, (dict, str)):
            raise ConfigurationError("mesh must be a generator block or a file path")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)
