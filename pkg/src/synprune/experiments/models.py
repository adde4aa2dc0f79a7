"""
Experiment configuration and run manifests
"""

import json
import os
from importlib import resources
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..distill.config import DistillConfig
from ..exceptions import ConfigError, MissingArtifactError
from ..models.architecture import Architecture, LayerSpec, convnet3, linear, mlp
from ..training import TrainRecipe
from ..utils.helpers import atomic_write, content_hash

PathLike = Union[str, os.PathLike]

DEFAULTS_RESOURCE = "defaults.yaml"
RUN_MANIFEST_FILE = "run_manifest.json"


class TaskConfig(BaseModel):
    """
    Where the real data comes from

    kind "blobs" draws Gaussian clusters; kind "idx" reads IDX image/label files.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["blobs", "idx"] = "blobs"
    class_count: int = Field(2, ge=2)
    per_class: int = Field(500, ge=1)
    test_per_class: int = Field(200, ge=1)
    dim: int = Field(20, ge=1)
    spread: float = Field(1.0, ge=0)
    data_seed: int = Field(7, ge=0)
    validation_fraction: float = Field(0.2, ge=0, lt=1)
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    @model_validator(mode="after")
    def _idx_paths(self) -> "TaskConfig":
        if self.kind == "idx" and not (self.images and self.labels):
            raise ValueError("idx tasks need both images and labels paths")
        return self


class ArchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["mlp", "linear", "convnet3"] = "mlp"
    hidden: Tuple[int, ...] = (256,)
    width: int = Field(16, ge=1)
    depth: int = Field(3, ge=1)

    @field_validator("hidden")
    @classmethod
    def _positive(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(w < 1 for w in value):
            raise ValueError("hidden widths must be >= 1")
        return value

    def build(self, feature_shape: Tuple[int, ...], class_count: int) -> Architecture:
        """Architecture for inputs of feature_shape (per example)"""
        if self.kind == "convnet3":
            if len(feature_shape) != 3:
                raise ConfigError("convnet3 needs (channels, height, width) inputs", field="arch.kind")
            return convnet3(feature_shape, class_count, width=self.width, depth=self.depth)
        input_dim = 1
        for size in feature_shape:
            input_dim *= size
        if self.kind == "linear":
            arch = linear(input_dim, class_count)
        else:
            arch = mlp(input_dim, class_count, hidden=self.hidden)
        if len(feature_shape) == 1:
            return arch
        # Image inputs are flattened in front of the dense stack
        return Architecture(
            name=arch.name,
            input_shape=tuple(feature_shape),
            class_count=class_count,
            layers=(LayerSpec(kind="flatten"),) + arch.layers,
        )


class PruneConfig(BaseModel):
    """
    Pruning run settings

    Attributes:
        method: imp, distilled or combined
        iterations: IMP rounds (or distilled rounds for method distilled)
        syn_iters: distilled rounds before IMP when method is combined
        synthetic_path: directory of a synthetic set written by `synprune distill`
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal["imp", "distilled", "combined"] = "imp"
    fraction_per_iter: float = Field(0.2, gt=0, lt=1)
    iterations: int = Field(8, ge=0)
    rewind_epoch: int = Field(0, ge=0)
    syn_iters: int = Field(8, ge=1)
    scope: Literal["global", "layer"] = "global"
    synthetic_path: Optional[str] = None


class LmcConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha_steps: int = Field(21, ge=3)
    allow_equal_seeds: bool = False


class LandscapeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    grid_n: int = Field(100, ge=2)
    margin: float = Field(0.25, ge=0)


class HessianConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    estimator: Literal["exact-tiny", "hutchinson"] = "hutchinson"
    probe_count: int = Field(100, ge=1)


class AnalysisConfig(BaseModel):
    """
    Which analyses run, at which record iterations

    An empty iterations list analyzes every iteration of the record.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    analyses: Tuple[Literal["lmc", "landscape", "hessian"], ...] = ("lmc",)
    iterations: Tuple[int, ...] = ()
    batch_size: int = Field(256, ge=1)
    lmc: LmcConfig = LmcConfig()
    landscape: LandscapeConfig = LandscapeConfig()
    hessian: HessianConfig = HessianConfig()


class SeedConfig(BaseModel):
    """The three named seeds every random draw derives from"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    init: int = Field(0, ge=0)
    order: Tuple[int, int] = (1, 2)
    distill: int = Field(0, ge=0)

    @field_validator("order")
    @classmethod
    def _non_negative(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if any(seed < 0 for seed in value):
            raise ValueError("order seeds must be non-negative")
        return value


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    student_seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)


class ExperimentConfig(BaseModel):
    """Whole experiment, validated before any compute"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    defaults_version: int = Field(1, ge=1)
    task: TaskConfig = TaskConfig()
    arch: ArchConfig = ArchConfig()
    train: TrainRecipe = TrainRecipe()
    distill: DistillConfig = DistillConfig()
    prune: PruneConfig = PruneConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    seeds: SeedConfig = SeedConfig()
    eval: EvalConfig = EvalConfig()

    def config_hash(self) -> str:
        """Stable under key order; equal configs hash equal"""
        return content_hash(self.model_dump(mode="json"))

    def recipe(self) -> TrainRecipe:
        """Training recipe with the first order seed applied"""
        return self.train.model_copy(update={"order_seed": self.seeds.order[0]})

    def distill_config(self) -> DistillConfig:
        return self.distill.model_copy(update={"seed": self.seeds.distill})

    def with_seeds(self, init: int, order: Tuple[int, int]) -> "ExperimentConfig":
        seeds = self.seeds.model_copy(update={"init": init, "order": tuple(order)})
        return self.model_copy(update={"seeds": seeds})


# ========== Loading ==========

def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base; non-dict values replace"""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_defaults() -> Dict[str, Any]:
    text = resources.files(__package__).joinpath(DEFAULTS_RESOURCE).read_text(encoding="utf-8")
    return yaml.safe_load(text) or {}


def read_config_file(path: PathLike) -> Dict[str, Any]:
    """YAML or JSON mapping"""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", field="--config")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle) if path.endswith(".json") else yaml.safe_load(handle)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot parse {path}: {e}", field="--config") from e
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a mapping", field="--config")
    return payload


def validate_config(payload: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a merged mapping

    Raises:
        ConfigError: names the first offending dotted field
    """
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        raise ConfigError(f"invalid config: {error['msg']}", field=field) from e


def load_config(path: Optional[PathLike] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Packaged defaults, then the user file, then overrides; validated as a whole"""
    payload = load_defaults()
    if path is not None:
        payload = deep_merge(payload, read_config_file(path))
    if overrides:
        payload = deep_merge(payload, overrides)
    return validate_config(payload)


def apply_overrides(config: ExperimentConfig, section: str, values: Dict[str, Any]) -> ExperimentConfig:
    """Replace keys of one section (None values are ignored) and revalidate"""
    values = {key: value for key, value in values.items() if value is not None}
    if not values:
        return config
    return validate_config(deep_merge(config.model_dump(mode="json"), {section: values}))


# ========== Manifests ==========

class RunManifest(BaseModel):
    """
    What one subcommand invocation ran and produced

    run_id is a content hash of the subcommand, the config and the subcommand
    parameters; artifacts lists every produced file relative to the run directory.
    """
    model_config = ConfigDict(extra="forbid")

    run_id: str
    subcommand: str
    status: Literal["running", "complete", "failed"] = "running"
    config: Dict[str, Any]
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, Any] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    results: Dict[str, Any] = Field(default_factory=dict)
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    wall_seconds: Optional[float] = None
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    def save(self, run_dir: PathLike) -> str:
        path = os.path.join(os.fspath(run_dir), RUN_MANIFEST_FILE)
        atomic_write(path, self.model_dump_json(indent=2))
        return path

    @classmethod
    def load(cls, run_dir: PathLike) -> "RunManifest":
        path = os.path.join(os.fspath(run_dir), RUN_MANIFEST_FILE)
        if not os.path.exists(path):
            raise MissingArtifactError(f"no run manifest in {run_dir}")
        with open(path, "r", encoding="utf-8") as handle:
            return cls.model_validate_json(handle.read())

    @classmethod
    def find(cls, run_dir: PathLike) -> Optional["RunManifest"]:
        try:
            return cls.load(run_dir)
        except MissingArtifactError:
            return None


def run_id_for(subcommand: str, config: Optional[ExperimentConfig], parameters: Dict[str, Any]) -> str:
    """Content hash of what a subcommand computes from"""
    snapshot = config.model_dump(mode="json") if config is not None else None
    return content_hash({"subcommand": subcommand, "config": snapshot, "parameters": parameters})


def list_artifacts(run_dir: PathLike) -> List[str]:
    """Every file under run_dir except the manifest, relative and sorted"""
    run_dir = os.fspath(run_dir)
    found = []
    for root, _, files in os.walk(run_dir):
        for name in files:
            path = os.path.relpath(os.path.join(root, name), run_dir)
            if path != RUN_MANIFEST_FILE:
                found.append(path.replace(os.sep, "/"))
    return sorted(found)
