"""Run configuration: one JSON file drives every CLI stage.

Flags override config keys; the config path itself can come from the
``SUNCAST_CONFIG`` environment variable.  The configuration matrix
(methods x feature sets x grids) expands into ModelConfigurations whose
ids name every downstream artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import ValidationError
from .harness import ModelConfiguration, ParamRange, WindowParams

DEFAULT_GRIDS = [
    {"label": "average", "mode": "average"},
    {"label": "k5", "mode": "clustered", "k": 5},
    {"label": "k12", "mode": "clustered", "k": 12},
]


@dataclass
class RunConfig:
    raw: dict
    path: Path | None = None

    # resolved fields
    seed: int = 7
    workers: int = 1
    out: Path = Path("artifacts")
    data: dict = field(default_factory=dict)
    grids: list = field(default_factory=lambda: list(DEFAULT_GRIDS))
    feature_sets: list = field(default_factory=lambda: ["a", "b"])
    methods: list = field(default_factory=lambda: ["LR", "RT", "RF", "XGBoost"])
    cluster_restarts: int = 8
    angle_time: str = "start"
    outlier_days: list = field(default_factory=list)
    windows: WindowParams = field(default_factory=WindowParams)
    n_candidates: int = 25
    range_overrides: dict = field(default_factory=dict)
    n_trees: int = 600
    lam: float = 1.0
    mcs: dict = field(default_factory=lambda: {"n_bootstrap": 1000, "block_length": 24, "levels": [0.99, 0.90]})
    shap_hours: tuple | None = (5, 21)
    synth: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}")
        return cls.from_dict(raw, path=path, overrides=overrides)

    @classmethod
    def from_dict(cls, raw: dict, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls(raw=raw, path=Path(path) if path else None)
        for key, value in (overrides or {}).items():
            if value is not None:
                raw = {**raw, key: value}
        cfg.raw = raw

        cfg.seed = int(raw.get("seed", cfg.seed))
        cfg.workers = int(raw.get("workers", cfg.workers))
        cfg.out = Path(raw.get("out", "artifacts"))
        cfg.data = dict(raw.get("data", {}))
        cfg.grids = list(raw.get("grids", DEFAULT_GRIDS))
        cfg.feature_sets = list(raw.get("feature_sets", ["a", "b"]))
        cfg.methods = list(raw.get("methods", ["LR", "RT", "RF", "XGBoost"]))
        cfg.cluster_restarts = int(raw.get("cluster_restarts", 8))
        cfg.angle_time = raw.get("angle_time", "start")
        cfg.outlier_days = [date.fromisoformat(d) for d in raw.get("outlier_days", [])]

        w = dict(raw.get("windows", {}))
        for key in ("validation_start", "test_start"):
            if w.get(key):
                w[key] = date.fromisoformat(w[key])
        cfg.windows = WindowParams(**w)

        tuning = dict(raw.get("tuning", {}))
        cfg.n_candidates = int(tuning.get("n_candidates", 25))
        cfg.range_overrides = {
            name: ParamRange(r["lo"], r["hi"], r.get("scale", "linear"))
            for name, r in tuning.get("ranges", {}).items()
        }

        ens = dict(raw.get("ensemble", {}))
        cfg.n_trees = int(ens.get("n_trees", 600))
        cfg.lam = float(ens.get("lam", 1.0))

        cfg.mcs = {**cfg.mcs, **raw.get("mcs", {})}
        sh = raw.get("shap_hours", [5, 21])
        cfg.shap_hours = tuple(sh) if sh else None
        cfg.synth = dict(raw.get("synth", {}))

        for g in cfg.grids:
            if g.get("mode") not in ("average", "clustered"):
                raise ValidationError(f"grid {g} has unknown mode")
            if g["mode"] == "clustered" and int(g.get("k", 0)) < 1:
                raise ValidationError(f"clustered grid {g} needs a positive k")
            g.setdefault("label", g["mode"] if g["mode"] == "average" else f"k{g['k']}")
        return cfg

    def configurations(self) -> list[ModelConfiguration]:
        return [
            ModelConfiguration(method=m, feature_set=fs, grid=g["label"])
            for g in self.grids
            for fs in self.feature_sets
            for m in self.methods
        ]

    def grid_spec(self, label: str) -> dict:
        for g in self.grids:
            if g["label"] == label:
                return g
        raise ValidationError(f"grid label {label!r} not in configuration")

    def require_data_paths(self, keys=("meteo", "asg", "capacity", "grid")):
        missing = [k for k in keys if k not in self.data]
        if missing:
            raise ValidationError(f"config data section lacks path(s): {', '.join(missing)}")
        for k in keys:
            if not Path(self.data[k]).exists():
                raise ValidationError(f"data file not found: {self.data[k]} (data.{k})")

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def ranges_for(self, method: str, n_features: int) -> dict[str, ParamRange]:
        from .harness import default_ranges

        ranges = default_ranges(method, n_features)
        for name, override in self.range_overrides.items():
            if name in ranges:
                ranges[name] = override
        return ranges
