"""Run configuration: one JSON document driving the whole pipeline.

Unknown keys are rejected; every tunable has a default that is materialized
on parse, so a parsed config serializes back to a complete document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dictionary import DictionarySpec
from .solvers import SolverConfig
from .subsystems import PeelLimits

AUTO = "auto"


@dataclass
class TransitionSettings:
    lambda_v: float = 0.05
    accuracy_floor: float = 0.95

    def to_dict(self):
        return {"lambda_v": self.lambda_v, "accuracy_floor": self.accuracy_floor}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"lambda_v", "accuracy_floor"}
        if unknown:
            raise ValueError(f"unknown transition keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MonitorSettings:
    miss_limit: int = 3
    warmup: int | None = None
    w_refit: int | None = None
    diff_tol: float | None = None

    def to_dict(self):
        return {
            "miss_limit": self.miss_limit,
            "warmup": self.warmup,
            "w_refit": self.w_refit,
            "diff_tol": self.diff_tol,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"miss_limit", "warmup", "w_refit", "diff_tol"}
        if unknown:
            raise ValueError(f"unknown monitor keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunConfig:
    """Everything the CLI needs for one run.

    lambda_grid entries are absolute lambda_w values for the sweep; the
    string "auto" picks a grid of fractions of the target norm at run time.
    """

    dictionary: DictionarySpec = field(default_factory=lambda: DictionarySpec(polynomial_order=2))
    psi_dictionary: DictionarySpec = field(default_factory=DictionarySpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    lambda_grid: list[float] | str = AUTO
    limits: PeelLimits = field(default_factory=PeelLimits)
    transition: TransitionSettings = field(default_factory=TransitionSettings)
    monitor: MonitorSettings = field(default_factory=MonitorSettings)
    tol_merge: float | None = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.lambda_grid, str):
            if self.lambda_grid != AUTO:
                raise ValueError('lambda_grid must be a list of reals or "auto"')
        else:
            self.lambda_grid = [float(v) for v in self.lambda_grid]
            if any(v < 0 for v in self.lambda_grid):
                raise ValueError("lambda_grid entries must be >= 0")

    def to_dict(self):
        return {
            "dictionary": self.dictionary.to_dict(),
            "psi_dictionary": self.psi_dictionary.to_dict(),
            "solver": self.solver.to_dict(),
            "lambda_grid": self.lambda_grid,
            "limits": self.limits.to_dict(),
            "transition": self.transition.to_dict(),
            "monitor": self.monitor.to_dict(),
            "tol_merge": self.tol_merge,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        known = {
            "dictionary", "psi_dictionary", "solver", "lambda_grid",
            "limits", "transition", "monitor", "tol_merge", "seed",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        if "dictionary" in d:
            kwargs["dictionary"] = DictionarySpec.from_dict(d["dictionary"])
        if "psi_dictionary" in d:
            kwargs["psi_dictionary"] = DictionarySpec.from_dict(d["psi_dictionary"])
        if "solver" in d:
            kwargs["solver"] = SolverConfig.from_dict(d["solver"])
        if "lambda_grid" in d:
            kwargs["lambda_grid"] = d["lambda_grid"]
        if "limits" in d:
            kwargs["limits"] = PeelLimits.from_dict(d["limits"])
        if "transition" in d:
            kwargs["transition"] = TransitionSettings.from_dict(d["transition"])
        if "monitor" in d:
            kwargs["monitor"] = MonitorSettings.from_dict(d["monitor"])
        if "tol_merge" in d:
            kwargs["tol_merge"] = d["tol_merge"]
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())
