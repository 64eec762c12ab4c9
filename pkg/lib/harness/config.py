"""
Run Configuration

RunConfig is the single declarative document describing a pipeline run;
unknown keys are rejected at every level. Defaults follow the reference
CIFAR schedule (candidate ratio 0.2, K=5 teachers, 256/32 examples per class
for the search splits, SGD with momentum 0.9 and weight decay 5e-4).

Settings are process-level overrides read from the environment (prefix
EKG_) or a .env file.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())


class DatasetConfig(_Strict):
    """Dataset source."""

    name: Literal["synthetic", "cifar10", "cifar100"] = Field(
        default="synthetic", description="Dataset name"
    )
    root: str = Field(default="./data", description="Download/cache directory for CIFAR")
    download: bool = Field(default=False, description="Download CIFAR if missing")
    num_classes: int = Field(default=4, ge=2, description="Synthetic: number of classes")
    per_class_train: int = Field(default=96, ge=2, description="Synthetic: training examples per class")
    per_class_test: int = Field(default=32, ge=1, description="Synthetic: test examples per class")
    image_size: int = Field(default=16, ge=4, description="Synthetic: image side length")
    channels: int = Field(default=3, ge=1, description="Synthetic: image channels")
    noise: float = Field(default=0.15, ge=0.0, description="Synthetic: pixel noise std")
    seed: int = Field(default=0, description="Synthetic: generation seed")

    def synthetic_kwargs(self) -> Dict[str, Any]:
        return self.model_dump(
            include={
                "num_classes",
                "per_class_train",
                "per_class_test",
                "image_size",
                "channels",
                "noise",
                "seed",
            }
        )


class ModelConfig(_Strict):
    """Architecture and optional pre-trained checkpoint."""

    arch: Literal["toy-cnn", "resnet-cifar"] = Field(default="toy-cnn", description="Architecture")
    params: Dict[str, Any] = Field(
        default_factory=dict,
        description="Constructor arguments; num_classes, image_size and in_channels default to the dataset's",
    )
    pretrained: Optional[str] = Field(
        default=None, description="Checkpoint directory; trained from scratch when absent"
    )


class SplitConfig(_Strict):
    """D^subset / D^val sampling from D^train."""

    per_class_subset: int = Field(default=256, ge=1, description="Subset examples per class (reference: 256)")
    per_class_val: int = Field(default=32, ge=1, description="Validation examples per class (reference: 32)")
    seed: int = Field(default=0, description="Sampling seed")


class _Schedule(_Strict):
    epochs: int = Field(ge=0, description="Training epochs")
    batch_size: int = Field(ge=1, description="Batch size")
    lr: float = Field(gt=0, description="Initial learning rate")
    lr_decay: float = Field(default=0.2, gt=0, description="Factor applied at each milestone")
    milestones: List[int] = Field(default_factory=list, description="Epochs at which lr decays")
    momentum: float = Field(default=0.9, ge=0, description="SGD momentum")
    nesterov: bool = Field(default=True, description="Nesterov momentum")
    weight_decay: float = Field(default=5e-4, ge=0, description="L2 weight decay")

    @model_validator(mode="after")
    def _check_milestones(self):
        ms = self.milestones
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing")
        if ms and ms[-1] >= self.epochs:
            raise ValueError("milestones must be smaller than epochs")
        return self


class TrainScheduleConfig(_Schedule):
    """Plain training schedule (pre-training or warm-up)."""

    augmentation: Literal["search", "finetune-base", "finetune-extra"] = Field(
        default="finetune-base", description="Augmentation stage"
    )


def _pretrain_default() -> TrainScheduleConfig:
    return TrainScheduleConfig(
        epochs=200, batch_size=128, lr=0.1, milestones=[60, 120, 160], augmentation="finetune-base"
    )


def _warmup_default() -> TrainScheduleConfig:
    return TrainScheduleConfig(epochs=1, batch_size=256, lr=1e-3, augmentation="search")


class SearchConfig(_Strict):
    """Greedy search parameters."""

    ratio: float = Field(default=0.2, gt=0, lt=1, description="Candidate ratio r (reference: 0.2)")
    target_rate: float = Field(default=0.5, ge=0, lt=1, description="FLOPs reduction target τ")
    tolerance: float = Field(default=0.01, gt=0, description="Allowed |achieved - τ|")
    knowledge: Literal["none", "single", "ensemble"] = Field(
        default="ensemble", description="Knowledge used by the reward"
    )
    knowledge_weight: float = Field(default=1.0, ge=0, description="Weight of the knowledge term")
    temperature: float = Field(default=1.0, gt=0, description="Knowledge term softmax temperature")
    scorer: Literal["taylor", "gbn", "l1", "fpgm", "random"] = Field(
        default="taylor", description="Filter importance scorer"
    )
    reduction: Literal["sum-abs", "abs-sum"] = Field(
        default="sum-abs", description="Taylor score aggregation inside |.|"
    )
    batch_size: int = Field(default=256, ge=1, description="Evaluation batch size (reference: 256)")
    workers: int = Field(default=1, ge=1, description="Threads evaluating candidate layers")
    max_iterations: Optional[int] = Field(default=None, ge=1, description="Iteration cap")


class MemoryBankConfig(_Strict):
    """Teacher sampling and storage."""

    k: int = Field(default=5, ge=1, description="Number of teachers K (reference: 5)")
    teachers: Literal["none", "single", "ensemble"] = Field(
        default="ensemble", description="none: no bank; single: warmed-up network only; ensemble: K interim networks"
    )
    ema_decay: float = Field(default=0.99, gt=0, lt=1, description="Student loss moving-average decay")
    batch_size: int = Field(default=256, ge=1, description="Inference batch size")


class FinetuneConfig(_Schedule):
    """Fine-tuning of the pruned network (reference: 100 epochs, lr 1e-2 ×0.2 at 30/60/80)."""

    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=128, ge=1)
    lr: float = Field(default=1e-2, gt=0)
    milestones: List[int] = Field(default_factory=lambda: [30, 60, 80])
    kd_weight: float = Field(default=1.0, ge=0, description="Distillation weight")
    kd_temperature: float = Field(default=4.0, gt=0, description="Distillation temperature")
    kd_per_view: bool = Field(default=False, description="Distill each augmented view separately")
    augmentation: Literal["search", "finetune-base", "finetune-extra"] = Field(
        default="finetune-extra", description="Augmentation stage"
    )


class LandscapeConfig(_Strict):
    """Condition-number traversal, grid and correlation study."""

    enabled: bool = Field(default=False, description="Run the landscape phase in the pipeline")
    traversal_scale: float = Field(default=0.1, ge=0, description="Traversal bound as a multiple of the gradient")
    points: int = Field(default=21, ge=1, description="Traversal points")
    symmetric: bool = Field(default=True, description="Traverse t in [-1, 1] instead of [0, 1]")
    directional: bool = Field(default=False, description="Also record 1-D directional curvature")
    tol: float = Field(default=1e-3, gt=0, description="Eigen estimator relative tolerance")
    max_iter: int = Field(default=100, ge=1, description="Eigen estimator iteration cap")
    batches: int = Field(default=1, ge=1, description="D^val batches used for the loss")
    grid_extent: float = Field(default=1.0, ge=0, description="Grid half-width")
    grid_resolution: int = Field(default=10, ge=0, description="Grid cells per side of center")
    samples: int = Field(default=8, ge=2, description="Correlation study: random sub-networks")
    trials: int = Field(default=3, ge=1, description="Correlation study: draws per sub-network")
    finetune_epochs: int = Field(default=5, ge=0, description="Correlation study: plain fine-tune epochs")


class RunConfig(_Strict):
    """Complete pipeline configuration."""

    name: str = Field(default="run", description="Run label used in reports")
    seed: int = Field(default=0, description="Global seed")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    splits: SplitConfig = Field(default_factory=SplitConfig)
    pretrain: TrainScheduleConfig = Field(default_factory=_pretrain_default)
    warmup: TrainScheduleConfig = Field(default_factory=_warmup_default)
    search: SearchConfig = Field(default_factory=SearchConfig)
    membank: MemoryBankConfig = Field(default_factory=MemoryBankConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)
    run_dir: Optional[str] = Field(default=None, description="Output directory (overridable by EKG_RUN_DIR)")
    device: Optional[str] = Field(default=None, description="Device (overridable by EKG_DEVICE)")

    @field_validator("name")
    @classmethod
    def _name_not_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("name must not be empty")
        return value


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Parse and validate a JSON run config file.

    Preset files (title, description and a nested ``config``) are unwrapped.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "title" in data and "config" in data:
        data = data["config"]
    return RunConfig.model_validate(data)


def dump_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.model_dump_json(indent=2), encoding="utf-8")
    return path


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON, ignoring where and on what the run executes."""
    payload = config.model_dump(mode="json", exclude={"run_dir", "device"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# Config sections each phase reads, on top of every earlier phase's
PHASE_SECTIONS = {
    "pretrain": ("seed", "dataset", "model", "pretrain"),
    "warmup": ("splits", "warmup"),
    "search": ("search",),
    "membank": ("membank",),
    "finetune": ("finetune",),
    "evaluate": (),
    "landscape": ("landscape",),
}


def phase_hashes(config: RunConfig) -> Dict[str, str]:
    """Cumulative per-phase hashes: a phase's hash changes with any input upstream of it."""
    data = config.model_dump(mode="json")
    hashes, sections = {}, []
    for phase, own in PHASE_SECTIONS.items():
        sections.extend(own)
        canonical = json.dumps({key: data[key] for key in sections}, sort_keys=True, separators=(",", ":"))
        hashes[phase] = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return hashes


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """
    Return a copy with dotted-key overrides applied and re-validated.

    Example: {"search.target_rate": 0.3, "finetune.epochs": 5}
    """
    data = config.model_dump(mode="json")
    for dotted, value in overrides.items():
        node = data
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
    return RunConfig.model_validate(data)


class Settings(BaseSettings):
    """Process settings (env prefix EKG_, optional .env file)."""

    model_config = SettingsConfigDict(env_prefix="EKG_", env_file=".env", extra="ignore")

    run_root: str = Field(default="runs", description="Parent directory of run directories")
    run_dir: Optional[str] = Field(default=None, description="Run directory override")
    device: Optional[str] = Field(default=None, description="Device override")
    log_level: str = Field(default="INFO", description="Logging level")
    log_json: bool = Field(default=False, description="Emit JSON log lines")
    presets_dir: str = Field(default="presets", description="Directory of preset configs")
    max_jobs: int = Field(default=20, ge=1, description="API: retained jobs")


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get global settings instance"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings
