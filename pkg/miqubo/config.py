import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from miqubo.bench import SplitConfig
from miqubo.data import DEFAULT_BINS, SyntheticProfile
from miqubo.exceptions import ConfigError
from miqubo.solve import BACKENDS, AnnealSchedule, HybridConfig, TabuParams
from miqubo.svr import SvrConfig
from miqubo.utils import canonical_json, derive_seed, file_digest, read_json

logger = logging.getLogger(__name__)

# roles mixed into the master seed for every stochastic component
SEED_ROLE_SPLITS = 1
SEED_ROLE_SOLVER = 2


def _build(cls, payload: Optional[Mapping], what: str):
    if payload is None:
        return cls()
    if isinstance(payload, cls):
        return payload
    try:
        return cls(**dict(payload))
    except TypeError as error:
        raise ConfigError(f"Invalid {what} settings: {error}") from error


def _hybrid(payload: Optional[Mapping]) -> HybridConfig:
    if payload is None or isinstance(payload, HybridConfig):
        return payload or HybridConfig()
    payload = dict(payload)
    base = HybridConfig()
    sa = _build(AnnealSchedule, {**vars(base.sa), **payload.pop("sa", {})}, "hybrid.sa")
    tabu = _build(TabuParams, payload.pop("tabu", None), "hybrid.tabu")
    return _build(HybridConfig, {**payload, "sa": sa, "tabu": tabu}, "hybrid")


def deep_update(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            current = merged.get(key)
            nested = deep_update(dict(current) if isinstance(current, Mapping) else {}, value)
            if nested or key in merged:
                merged[key] = nested
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, loadable from JSON.

    Exactly one of ``input`` and ``synthetic`` names the data source.
    """

    seed: Optional[int] = None
    input: Optional[str] = None
    synthetic: Optional[SyntheticProfile] = None
    target: str = "target"
    categorical: Tuple[str, ...] = ()
    bins: int = DEFAULT_BINS
    k_min: int = 1
    k_max: Optional[int] = None
    backend: str = "exhaustive"
    prefilter: Optional[int] = None
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    tabu: TabuParams = field(default_factory=TabuParams)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    svr: SvrConfig = field(default_factory=SvrConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    output: str = "runs/latest"
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.seed is None:
            raise ConfigError("A master seed is required (--seed or \"seed\" in the config file)")
        if (self.input is None) == (self.synthetic is None):
            raise ConfigError("Give exactly one of an input CSV or a synthetic profile")
        if int(self.bins) < 2:
            raise ConfigError(f"bins must be at least 2, got {self.bins}")
        if int(self.k_min) < 1:
            raise ConfigError(f"k_min must be at least 1, got {self.k_min}")
        if self.k_max is not None and int(self.k_max) < int(self.k_min):
            raise ConfigError(f"k_max {self.k_max} is below k_min {self.k_min}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"Unknown backend {self.backend!r}, expected one of {BACKENDS}")
        if self.prefilter is not None and int(self.prefilter) < 1:
            raise ConfigError(f"prefilter must be at least 1, got {self.prefilter}")
        object.__setattr__(self, "categorical", tuple(self.categorical))

    @classmethod
    def from_dict(cls, payload: Mapping):
        payload = dict(payload)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(payload) - allowed
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        synthetic = payload.get("synthetic")
        if synthetic is not None and not isinstance(synthetic, SyntheticProfile):
            synthetic = dict(synthetic)
            synthetic.setdefault("seed", payload.get("seed", 0))
            payload["synthetic"] = SyntheticProfile.from_dict(synthetic)
        payload["anneal"] = _build(AnnealSchedule, payload.get("anneal"), "anneal")
        payload["tabu"] = _build(TabuParams, payload.get("tabu"), "tabu")
        payload["hybrid"] = _hybrid(payload.get("hybrid"))
        svr = payload.get("svr")
        if not isinstance(svr, SvrConfig):
            payload["svr"] = SvrConfig.from_dict(svr or {})
        payload["split"] = _build(SplitConfig, payload.get("split"), "split")
        return cls(**payload)

    @classmethod
    def from_json(cls, path: Union[str, Path], overrides: Optional[Mapping] = None):
        try:
            payload = read_json(path)
        except FileNotFoundError as error:
            raise ConfigError(f"Config file not found: {path}") from error
        except ValueError as error:
            raise ConfigError(f"Config file {path} is not valid JSON: {error}") from error
        return cls.from_dict(deep_update(payload, overrides or {}))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "input": self.input,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "target": self.target,
            "categorical": list(self.categorical),
            "bins": self.bins,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "backend": self.backend,
            "prefilter": self.prefilter,
            "anneal": vars(self.anneal),
            "tabu": vars(self.tabu),
            "hybrid": {
                **{k: v for k, v in vars(self.hybrid).items() if k not in ("sa", "tabu")},
                "sa": vars(self.hybrid.sa),
                "tabu": vars(self.hybrid.tabu),
            },
            "svr": self.svr.to_dict(),
            "split": self.split.to_dict(),
            "output": self.output,
            "n_jobs": self.n_jobs,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()

    def dataset_hash(self) -> str:
        """Identity of the data source: settings that shape the encoded table."""
        source = {
            "input": self.input,
            "input_sha256": file_digest(self.input) if self.input and Path(self.input).exists() else None,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "target": self.target,
            "categorical": list(self.categorical),
            "bins": int(self.bins),
        }
        return hashlib.sha256(canonical_json(source).encode("utf-8")).hexdigest()

    def k_values(self, n: int) -> List[int]:
        upper = n if self.k_max is None else int(self.k_max)
        if not 1 <= int(self.k_min) <= upper <= n:
            raise ConfigError(f"k range [{self.k_min}, {upper}] does not fit {n} features")
        return list(range(int(self.k_min), upper + 1))

    def solver_config(self):
        """Settings for ``backend`` with a seed derived from the master seed."""
        seed = derive_seed(self.seed, SEED_ROLE_SOLVER)
        if self.backend == "sa":
            return replace(self.anneal, seed=seed)
        if self.backend == "tabu":
            return replace(self.tabu, seed=seed)
        if self.backend == "hybrid":
            return replace(self.hybrid, seed=seed)
        return None

    def split_config(self) -> SplitConfig:
        return replace(self.split, seed=derive_seed(self.seed, SEED_ROLE_SPLITS))

    def seeds(self) -> Dict[str, Optional[int]]:
        solver = self.solver_config()
        return {
            "master": self.seed,
            "synthetic": self.synthetic.seed if self.synthetic else None,
            "solver": getattr(solver, "seed", None),
            "splits": self.split_config().seed,
        }
