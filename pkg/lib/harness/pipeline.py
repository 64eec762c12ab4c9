"""
Pipeline Orchestration

Runs pretrain -> warm-up -> search -> memory bank -> fine-tune -> evaluate
-> landscape for one RunConfig, persisting every phase under the run
directory:

    run_dir/
      config.json  manifest.json  .lock
      splits/subset.txt  splits/val.txt
      pretrained/  warmed/           network checkpoints
      trace.jsonl  interim/{i}/      search trace and interim masks
      knowledge/  pruned/  search.json
      membank/                       teacher logits over D^train
      metrics.csv  finetuned/
      evaluation.json
      landscape/                     cn.csv  grid.csv  grid.png  summary.json

Completed phases are skipped on resume. A failing phase is recorded in the
manifest and re-raised as PhaseFailedError; artifacts written before the
failure stay on disk.
"""

import json
import logging
import shutil
import time
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd

from lib.data.datasets import LabeledData, load_dataset
from lib.data.splits import SplitSpec, load_ids, make_splits, save_ids
from lib.errors import PhaseFailedError, PruningError
from lib.finetune.evaluation import Evaluation, evaluate_network
from lib.finetune.trainer import run_finetune, train_plain, warm_up
from lib.harness.config import RunConfig, Settings, config_hash, dump_config, get_settings, phase_hashes
from lib.harness.manifest import PHASES, RunManifest, open_manifest, run_lock
from lib.landscape.grid import network_grid, plot_grid
from lib.landscape.traverse import traverse_cn
from lib.membank.bank import MemoryBank, build_bank, select_teachers
from lib.netcore.checkpoint import load_network, save_network
from lib.netcore.network import PrunableNetwork
from lib.netcore.zoo import ModelFactory
from lib.scoring.baselines import ScorerFactory
from lib.search.searcher import SearchState, run_search
from lib.search.trace import find_record, interim_losses, load_interim
from lib.utils.gpu import clear_gpu_cache, get_optimal_device, get_vram_info
from lib.utils.seed import seed_everything

logger = logging.getLogger(__name__)


def resolve_run_dir(
    config: RunConfig, run_dir: Optional[Union[str, Path]] = None, settings: Optional[Settings] = None
) -> Path:
    """Explicit argument, then EKG_RUN_DIR, then the config, then run_root/name."""
    settings = settings or get_settings()
    chosen = run_dir or settings.run_dir or config.run_dir
    return Path(chosen) if chosen else Path(settings.run_root) / config.name


class Pipeline:
    """
    One run directory driven by one RunConfig.

    Args:
        config: Validated run configuration
        run_dir: Output directory (see :func:`resolve_run_dir`)
        settings: Process settings; defaults to the environment
        allow_changes: Resume a directory created with a different config,
            recomputing only the phases whose inputs changed
    """

    def __init__(
        self,
        config: RunConfig,
        run_dir: Optional[Union[str, Path]] = None,
        settings: Optional[Settings] = None,
        allow_changes: bool = False,
    ):
        self.config = config
        self.settings = settings or get_settings()
        self.run_dir = resolve_run_dir(config, run_dir, self.settings)
        self.device = get_optimal_device(self.settings.device or config.device)
        self.allow_changes = allow_changes
        self.hashes = phase_hashes(config)
        self.manifest: Optional[RunManifest] = None

    # Paths

    def path(self, *parts: str) -> Path:
        return self.run_dir.joinpath(*parts)

    # Data

    @cached_property
    def datasets(self) -> Tuple[LabeledData, LabeledData]:
        ds = self.config.dataset
        return load_dataset(ds.name, ds.root, ds.download, **ds.synthetic_kwargs())

    @property
    def train(self) -> LabeledData:
        return self.datasets[0]

    @property
    def test(self) -> LabeledData:
        return self.datasets[1]

    @cached_property
    def splits(self) -> Tuple[LabeledData, LabeledData]:
        """(D^subset, D^val), read back from splits/ when already drawn."""
        subset_path, val_path = self.path("splits", "subset.txt"), self.path("splits", "val.txt")
        if subset_path.exists() and val_path.exists():
            return (
                self.train.select_ids(load_ids(subset_path)),
                self.train.select_ids(load_ids(val_path)),
            )
        sp = self.config.splits
        subset, val = make_splits(self.train, SplitSpec(sp.per_class_subset, sp.per_class_val, sp.seed))
        save_ids(subset_path, subset.ids.tolist())
        save_ids(val_path, val.ids.tolist())
        return subset, val

    def model_kwargs(self) -> Dict[str, Any]:
        channels, size, _ = self.train.image_shape
        kwargs = {"num_classes": self.train.num_classes, "image_size": size, "in_channels": channels}
        kwargs.update(self.config.model.params)
        return kwargs

    def load(self, name: str) -> PrunableNetwork:
        return load_network(self.path(name), self.device)

    # Phases

    def pretrain(self) -> Optional[str]:
        model = self.config.model
        if model.pretrained:
            network = load_network(model.pretrained, self.device)
            save_network(network, self.path("pretrained"))
            return f"loaded {model.pretrained}"

        schedule = self.config.pretrain
        seed_everything(self.config.seed)
        module = ModelFactory.create(model.arch, **self.model_kwargs())
        result = train_plain(
            PrunableNetwork(module),
            self.train,
            schedule.epochs,
            schedule.batch_size,
            schedule.lr,
            schedule.lr_decay,
            schedule.milestones,
            schedule.momentum,
            schedule.nesterov,
            schedule.weight_decay,
            schedule.augmentation,
            seed=self.config.seed,
            device=self.device,
            label="pretrain",
        )
        save_network(result.network, self.path("pretrained"))
        return f"trained from scratch for {schedule.epochs} epochs"

    def warmup(self) -> None:
        schedule = self.config.warmup
        subset, _ = self.splits
        warmed = warm_up(
            self.load("pretrained"),
            subset,
            schedule.epochs,
            schedule.batch_size,
            schedule.lr,
            schedule.momentum,
            schedule.nesterov,
            schedule.weight_decay,
            seed=self.config.seed,
            device=self.device,
        )
        save_network(warmed, self.path("warmed"))

    def _scorer(self):
        search = self.config.search
        if search.scorer == "taylor":
            return ScorerFactory.create("taylor", reduction=search.reduction)
        if search.scorer == "random":
            return ScorerFactory.create("random", seed=self.config.seed)
        return ScorerFactory.create(search.scorer)

    def search(self) -> str:
        search = self.config.search
        trace_path, interim_dir = self.path("trace.jsonl"), self.path("interim")
        # a partially persisted search restarts from iteration 0
        trace_path.unlink(missing_ok=True)
        shutil.rmtree(interim_dir, ignore_errors=True)

        persisted = {"iteration": -1}

        def persist(state: SearchState) -> None:
            if state.iteration == persisted["iteration"]:
                return
            state.interim[-1].save(interim_dir / str(state.iteration))
            if state.iteration > 0:
                state.trace.append_to(trace_path, state.trace.records[-1])
            persisted["iteration"] = state.iteration

        subset, val = self.splits
        result = run_search(
            self.load("warmed"),
            search.target_rate,
            val,
            subset=subset,
            ratio=search.ratio,
            knowledge_mode=search.knowledge,
            knowledge_weight=search.knowledge_weight,
            temperature=search.temperature,
            scorer=self._scorer(),
            batch_size=search.batch_size,
            tolerance=search.tolerance,
            workers=search.workers,
            seed=self.config.seed,
            max_iterations=search.max_iterations,
            device=self.device,
            on_step=persist,
        )
        trace_path.touch()
        save_network(result.network, self.path("pruned"))
        if result.knowledge is not None:
            result.knowledge.save(self.path("knowledge"))
        summary = {
            "target_rate": search.target_rate,
            "reduction_rate": result.reduction_rate,
            "iterations": len(result.trace),
            "chosen_layers": result.trace.chosen_layers,
        }
        self.path("search.json").write_text(json.dumps(summary, indent=2))
        return f"reduction {result.reduction_rate:.4f} after {len(result.trace)} iterations"

    def teachers(self) -> List[Tuple[int, PrunableNetwork]]:
        """(iteration, network) pairs for the configured teacher mode."""
        warmed = self.load("warmed")
        if self.config.membank.teachers == "single":
            return [(0, warmed)]
        records = load_interim(self.path("interim"))
        losses = interim_losses(records)
        loss_star, loss_0 = records[-1].subset_loss, records[0].subset_loss
        chosen = select_teachers(losses, loss_star, loss_0, self.config.membank.k)
        logger.info(
            "Selected teachers",
            extra={"metadata": {"iterations": chosen, "loss_star": loss_star, "loss_0": loss_0}},
        )
        return [(it, find_record(records, it).apply(warmed)) for it in chosen]

    def membank(self) -> Optional[str]:
        bank_cfg = self.config.membank
        bank = build_bank(self.teachers(), self.train, bank_cfg.batch_size, device=self.device)
        bank.save(self.path("membank"))
        return f"{bank.k} teachers from iterations {[e.iteration for e in bank.entries]}"

    def finetune(self) -> str:
        ft = self.config.finetune
        bank = None
        kd_weight = ft.kd_weight
        if self.config.membank.teachers == "none":
            kd_weight = 0.0
        else:
            bank = MemoryBank.load(self.path("membank"))
        _, val = self.splits
        result = run_finetune(
            self.load("pruned"),
            bank,
            self.train,
            epochs=ft.epochs,
            batch_size=ft.batch_size,
            lr=ft.lr,
            lr_decay=ft.lr_decay,
            milestones=ft.milestones,
            momentum=ft.momentum,
            nesterov=ft.nesterov,
            weight_decay=ft.weight_decay,
            kd_weight=kd_weight,
            kd_temperature=ft.kd_temperature,
            kd_per_view=ft.kd_per_view,
            ema_decay=self.config.membank.ema_decay,
            augmentation=ft.augmentation,
            seed=self.config.seed,
            device=self.device,
            val=val,
            test=self.test,
        )
        pd.DataFrame(result.history).to_csv(self.path("metrics.csv"), index=False)
        save_network(result.network, self.path("finetuned"))
        final = result.final
        return f"final test accuracy {final.get('test_acc', float('nan')):.4f}"

    def evaluate(self) -> str:
        reference = self.load("pretrained")
        evaluation = evaluate_network(
            self.load("finetuned"),
            self.test,
            reference_flops=reference.flops(),
            reference_params=reference.param_count(),
            device=self.device,
        )
        evaluation.save(self.path("evaluation.json"))
        return (
            f"accuracy {evaluation.test_accuracy:.4f}, "
            f"FLOPs -{evaluation.flops_reduction_pct:.2f}%, params -{evaluation.param_reduction_pct:.2f}%"
        )

    def landscape(self) -> str:
        cfg = self.config.landscape
        _, val = self.splits
        batches = list(val.batches(self.config.search.batch_size, device=self.device))[: cfg.batches]
        network = self.load("finetuned")
        report = traverse_cn(
            network,
            batches,
            cfg.traversal_scale,
            cfg.points,
            cfg.symmetric,
            cfg.directional,
            cfg.tol,
            cfg.max_iter,
            seed=self.config.seed,
        )
        out = self.path("landscape")
        report.to_csv(out / "cn.csv")
        grid = network_grid(network, batches, cfg.grid_extent, cfg.grid_resolution, seed=self.config.seed)
        grid.to_csv(out / "grid.csv")
        plot_grid(grid, out / "grid.png", title=f"{self.config.name} loss landscape")
        (out / "summary.json").write_text(json.dumps(report.summary(), indent=2, default=str))
        return f"CN mean {report.cn_mean:.6f}"

    # Driver

    def _skip_reason(self, phase: str) -> Optional[str]:
        if phase == "membank" and self.config.membank.teachers == "none":
            return "teachers disabled"
        if phase == "landscape" and not self.config.landscape.enabled:
            return "landscape disabled"
        return None

    def _run_phase(self, phase: str) -> None:
        manifest = self.manifest
        reason = self._skip_reason(phase)
        if reason:
            manifest.skip(phase, reason, self.hashes[phase])
            manifest.save(self.run_dir)
            logger.info(f"Skipping phase {phase}: {reason}")
            return

        handler: Callable[[], Optional[str]] = getattr(self, phase)
        manifest.start(phase)
        manifest.save(self.run_dir)
        logger.info(f"Starting phase {phase}", extra={"metadata": {"run_dir": str(self.run_dir)}})
        started = time.time()
        try:
            note = handler()
        except Exception as e:
            manifest.fail(phase, e)
            manifest.save(self.run_dir)
            logger.error(
                f"Phase {phase} failed: {e}",
                extra={"metadata": {"phase": phase, **getattr(e, "details", {})}},
            )
            raise PhaseFailedError(phase, e) from e
        finally:
            clear_gpu_cache()
        elapsed = time.time() - started
        manifest.finish(phase, elapsed, self.hashes[phase], note)
        manifest.save(self.run_dir)
        metadata = {"phase": phase, "wall_clock_s": round(elapsed, 3), "note": note}
        vram = get_vram_info(self.device)
        if vram:
            metadata["vram"] = vram
        logger.info(f"Finished phase {phase}", extra={"metadata": metadata})

    def run(self, until: Optional[str] = None, phases: Optional[Iterable[str]] = None) -> RunManifest:
        """
        Execute pending phases in order.

        Args:
            until: Stop after this phase
            phases: Phases to force-recompute even if complete

        Returns:
            The updated RunManifest
        """
        if until is not None and until not in PHASES:
            raise ValueError(f"Unknown phase: {until}")
        forced = set(phases or ())
        unknown = forced - set(PHASES)
        if unknown:
            raise ValueError(f"Unknown phases: {sorted(unknown)}")

        with run_lock(self.run_dir):
            self.manifest = open_manifest(
                self.run_dir, config_hash(self.config), self.config.name, self.allow_changes
            )
            stale = self.manifest.invalidate_stale(self.hashes)
            if stale:
                logger.warning("Recomputing phases with changed inputs", extra={"metadata": {"phases": stale}})
            dump_config(self.config, self.path("config.json"))

            for phase in PHASES:
                if phase in forced:
                    self.manifest.reset(phase)
                    # downstream phases consume this phase's artifacts
                    forced.update(PHASES[PHASES.index(phase) + 1 :])
                if self.manifest.is_done(phase):
                    logger.info(f"Phase {phase} already complete")
                else:
                    self._run_phase(phase)
                if phase == until:
                    break
            self.manifest.save(self.run_dir)
        return self.manifest


def run_pipeline(
    config: RunConfig,
    run_dir: Optional[Union[str, Path]] = None,
    settings: Optional[Settings] = None,
    until: Optional[str] = None,
) -> RunManifest:
    """Run (or resume) every phase of ``config``."""
    return Pipeline(config, run_dir, settings).run(until=until)


def load_run_config(run_dir: Union[str, Path]) -> RunConfig:
    """Config stored in an existing run directory."""
    path = Path(run_dir) / "config.json"
    if not path.exists():
        raise PruningError(f"No config.json in {run_dir}", {"run_dir": str(run_dir)})
    return RunConfig.model_validate_json(path.read_text(encoding="utf-8"))


def load_evaluation(run_dir: Union[str, Path]) -> Optional[Evaluation]:
    path = Path(run_dir) / "evaluation.json"
    return Evaluation.load(path) if path.exists() else None
