"""
Greedy Sub-network Search

Each iteration scores the alive filters, proposes the lowest-scoring
fraction r of every layer, evaluates the reward of removing each layer's
candidates, commits the best layer and folds the new sub-network's
validation outputs into the knowledge snapshot.

When committing the full candidate list would overshoot the FLOPs target
band, candidate lists are truncated (binary search on length) so that the
final reduction rate lands within ``tolerance`` of the target.
"""

import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import torch

from lib.data.datasets import LabeledData
from lib.errors import InfeasibleTargetError
from lib.netcore.inference import collect_logits, evaluate
from lib.netcore.network import PrunableNetwork
from lib.netcore.structure import FilterRef
from lib.scoring.baselines import FilterScorer, ScorerFactory
from lib.search.candidates import CandidateSet, build_candidates
from lib.search.knowledge import KnowledgeSnapshot
from lib.search.reward import RewardBreakdown, RewardEvaluator
from lib.search.trace import InterimRecord, SearchTrace, TraceRecord

logger = logging.getLogger(__name__)

KNOWLEDGE_MODES = ("none", "single", "ensemble")
LAYER_SELECTION = ("reward", "random")


@dataclass
class SearchState:
    network: PrunableNetwork
    knowledge: Optional[KnowledgeSnapshot]
    reference_flops: int
    iteration: int = 0
    trace: SearchTrace = field(default_factory=SearchTrace)
    interim: List[InterimRecord] = field(default_factory=list)
    done: bool = False

    @property
    def reduction_rate(self) -> float:
        return 1.0 - self.network.flops() / self.reference_flops


@dataclass
class SearchResult:
    network: PrunableNetwork
    trace: SearchTrace
    interim: List[InterimRecord]
    knowledge: Optional[KnowledgeSnapshot]
    reduction_rate: float


@dataclass(frozen=True)
class _Option:
    layer: int
    filters: Tuple[FilterRef, ...]
    rate: float


def max_reduction_rate(network: PrunableNetwork, reference_flops: int) -> float:
    """Reduction rate with every unit down to a single filter."""
    single = {unit: 1 for unit in network.structure.full_counts()}
    return 1.0 - network.structure.flops(single) / reference_flops


class GreedySearcher:
    """
    Ensemble-knowledge-guided greedy filter search.

    Args:
        evaluator: Reward evaluator over D^val
        scorer: Filter importance scorer
        ratio: Fraction r of each layer's alive filters proposed per step
        knowledge_mode: "ensemble" (running mean), "single" (warmed-up
            network only) or "none" (task loss only)
        subset: D^subset, used to record each interim network's loss
        tolerance: Allowed distance of the final reduction rate to target
        workers: Threads evaluating candidate layers concurrently
        layer_selection: "reward" (argmax) or "random" (seeded choice)
        seed: Seed for random layer selection
        max_iterations: Safety cap on iterations
    """

    def __init__(
        self,
        evaluator: RewardEvaluator,
        scorer: FilterScorer,
        ratio: float = 0.2,
        knowledge_mode: str = "ensemble",
        subset: Optional[LabeledData] = None,
        tolerance: float = 0.01,
        workers: int = 1,
        layer_selection: str = "reward",
        seed: int = 0,
        max_iterations: Optional[int] = None,
    ):
        if knowledge_mode not in KNOWLEDGE_MODES:
            raise ValueError(f"Unknown knowledge mode: {knowledge_mode}")
        if layer_selection not in LAYER_SELECTION:
            raise ValueError(f"Unknown layer selection: {layer_selection}")
        self.evaluator = evaluator
        self.scorer = scorer
        self.ratio = ratio
        self.knowledge_mode = knowledge_mode
        self.subset = subset
        self.tolerance = tolerance
        self.workers = workers
        self.layer_selection = layer_selection
        self.rng = random.Random(seed)
        self.max_iterations = max_iterations

    # State

    def _val_logits(self, network: PrunableNetwork) -> torch.Tensor:
        _, logits = collect_logits(
            network,
            self.evaluator.val,
            self.evaluator.batch_size,
            self.evaluator.batch_stats,
            self.evaluator.device,
        )
        return logits

    def _subset_loss(self, network: PrunableNetwork) -> float:
        if self.subset is None:
            return float("nan")
        return evaluate(
            network,
            self.subset,
            self.evaluator.batch_size,
            batch_stats=self.evaluator.batch_stats,
            device=self.evaluator.device,
        ).loss

    def _interim(self, network: PrunableNetwork, iteration: int) -> InterimRecord:
        dead = {unit: idx for unit, idx in network.dead_indices().items() if idx}
        return InterimRecord(iteration, dead, self._subset_loss(network), network.flops())

    def initial_state(
        self, network: PrunableNetwork, reference_flops: Optional[int] = None
    ) -> SearchState:
        """State at iteration 0; seeds the knowledge with ``network``'s outputs."""
        knowledge = None
        if self.knowledge_mode != "none":
            knowledge = KnowledgeSnapshot.from_logits(
                self.evaluator.val.ids, self._val_logits(network)
            )
        reference = reference_flops or network.structure.flops()
        state = SearchState(network, knowledge, reference)
        state.interim.append(self._interim(network, 0))
        return state

    # Step

    def _evaluate_options(
        self, network: PrunableNetwork, options: List[_Option], knowledge
    ) -> Dict[int, RewardBreakdown]:
        def run(option: _Option) -> RewardBreakdown:
            return self.evaluator.evaluate(network.mask(option.filters), knowledge)

        if self.workers > 1 and len(options) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run, options))
        else:
            results = [run(option) for option in options]
        return {option.layer: result for option, result in zip(options, results)}

    def _select(
        self, options: List[_Option], results: Dict[int, RewardBreakdown]
    ) -> _Option:
        if self.layer_selection == "random":
            return self.rng.choice(options)
        # argmax reward, ties toward the lower layer index
        return max(options, key=lambda o: (results[o.layer].reward, -o.layer))

    def _rate(self, network: PrunableNetwork, filters, reference: int) -> float:
        return 1.0 - (network.flops() - network.filter_flops(filters)) / reference

    def _truncate(
        self, network: PrunableNetwork, candidates: List[FilterRef], ceiling: float, reference: int
    ) -> int:
        """Largest prefix length whose rate stays at or below ``ceiling``."""
        low, high = 0, len(candidates)
        while low < high:
            mid = (low + high + 1) // 2
            if self._rate(network, candidates[:mid], reference) <= ceiling:
                low = mid
            else:
                high = mid - 1
        return low

    def _final_options(
        self, state: SearchState, candidates: CandidateSet, target: float
    ) -> Tuple[List[_Option], bool]:
        network, reference = state.network, state.reference_flops
        ceiling = target + self.tolerance
        options = []
        for layer in candidates.layers():
            length = self._truncate(network, candidates[layer], ceiling, reference)
            if length > 0:
                filters = tuple(candidates.truncated(layer, length))
                options.append(_Option(layer, filters, self._rate(network, filters, reference)))

        in_band = [o for o in options if o.rate >= target - self.tolerance]
        if in_band:
            return in_band, True
        if options:
            return options, False

        # every single-filter removal overshoots the band
        singles = [
            _Option(layer, (candidates[layer][0],), self._rate(network, candidates[layer][:1], reference))
            for layer in candidates.layers()
        ]
        closest = min(singles, key=lambda o: (abs(o.rate - target), o.layer))
        if abs(closest.rate - target) < abs(state.reduction_rate - target):
            logger.warning(
                "FLOPs target band unreachable at filter granularity",
                extra={"metadata": {"target": target, "achieved": closest.rate}},
            )
            return [closest], True
        logger.warning(
            "FLOPs target band unreachable; stopping below target",
            extra={"metadata": {"target": target, "achieved": state.reduction_rate}},
        )
        return [], True

    def search_step(self, state: SearchState, target_rate: Optional[float] = None) -> SearchState:
        """
        Run one search iteration and return the next state.

        Args:
            state: Current state
            target_rate: FLOPs reduction goal; enables the final-step
                truncation when full candidate lists would overshoot
        """
        started = time.time()
        network = state.network
        knowledge = state.knowledge

        table = self.scorer.score(
            network, self.evaluator.batches, self.evaluator.reward_fn(knowledge)
        )
        candidates = build_candidates(table, network, self.ratio)
        reference = state.reference_flops

        options = [
            _Option(layer, tuple(candidates[layer]), self._rate(network, candidates[layer], reference))
            for layer in candidates.layers()
        ]
        final_step = False
        if target_rate is not None:
            overshoot = target_rate + self.tolerance
            if any(o.rate > overshoot for o in options):
                options, final_step = self._final_options(state, candidates, target_rate)
                if not options:
                    state.done = True
                    return state

        results: Dict[int, RewardBreakdown] = {}
        if self.layer_selection == "reward":
            results = self._evaluate_options(network, options, knowledge)
        chosen = self._select(options, results)

        flops_before = network.flops()
        pruned = network.mask(chosen.filters)
        flops_after = pruned.flops()

        if self.knowledge_mode == "ensemble":
            knowledge = knowledge.update(self._val_logits(pruned))

        iteration = state.iteration + 1
        picked = results.get(chosen.layer)
        record = TraceRecord(
            iteration=iteration,
            chosen_layer=chosen.layer,
            removed=[ref.filter_index for ref in chosen.filters],
            rewards={layer: r.reward for layer, r in results.items()},
            val_loss=picked.val_loss if picked else float("nan"),
            knowledge_loss=picked.knowledge_loss if picked else float("nan"),
            flops_before=flops_before,
            flops_after=flops_after,
            reduction_rate=1.0 - flops_after / reference,
            alive=pruned.alive_counts(),
            final_step=final_step,
        )
        state.trace.append(record)
        state.interim.append(self._interim(pruned, iteration))

        logger.info(
            f"Search iteration {iteration}: layer {chosen.layer}",
            extra={
                "metadata": {
                    "iteration": iteration,
                    "layer": chosen.layer,
                    "removed": len(chosen.filters),
                    "reduction_rate": round(record.reduction_rate, 6),
                    "reward": picked.reward if picked else None,
                    "elapsed_s": round(time.time() - started, 3),
                }
            },
        )

        return SearchState(
            network=pruned,
            knowledge=knowledge,
            reference_flops=reference,
            iteration=iteration,
            trace=state.trace,
            interim=state.interim,
            done=final_step,
        )

    def run(
        self,
        network: PrunableNetwork,
        target_rate: float,
        on_step: Optional[Callable[[SearchState], None]] = None,
        reference_flops: Optional[int] = None,
    ) -> SearchResult:
        """
        Search until the FLOPs reduction target is reached.

        Args:
            network: Warmed-up network Θ_0
            target_rate: FLOPs reduction goal τ in [0, 1)
            on_step: Called with each new state (persistence hook)
            reference_flops: FLOPs the rate is measured against
                (defaults to the unpruned network)

        Raises:
            InfeasibleTargetError: If τ exceeds the reachable reduction
        """
        if not 0 <= target_rate < 1:
            raise ValueError(f"Target rate must be in [0, 1), got {target_rate}")
        reference = reference_flops or network.structure.flops()
        reachable = max_reduction_rate(network, reference)
        if target_rate > reachable:
            raise InfeasibleTargetError(target_rate, reachable)

        state = self.initial_state(network, reference)
        if on_step is not None:
            on_step(state)

        logger.info(
            "Starting search",
            extra={
                "metadata": {
                    "target_rate": target_rate,
                    "ratio": self.ratio,
                    "knowledge": self.knowledge_mode,
                    "scorer": self.scorer.name,
                    "flops": network.flops(),
                }
            },
        )

        while not state.done and state.reduction_rate < target_rate:
            if self.max_iterations is not None and state.iteration >= self.max_iterations:
                logger.warning(
                    "Search stopped at iteration cap",
                    extra={"metadata": {"iterations": state.iteration, "rate": state.reduction_rate}},
                )
                break
            state = self.search_step(state, target_rate)
            if on_step is not None:
                on_step(state)

        logger.info(
            "Search finished",
            extra={
                "metadata": {
                    "iterations": state.iteration,
                    "reduction_rate": round(state.reduction_rate, 6),
                    "flops": state.network.flops(),
                }
            },
        )
        return SearchResult(
            network=state.network,
            trace=state.trace,
            interim=state.interim,
            knowledge=state.knowledge,
            reduction_rate=state.reduction_rate,
        )


def search_step(
    state: SearchState, searcher: GreedySearcher, target_rate: Optional[float] = None
) -> SearchState:
    """One greedy iteration: score, build candidates, pick, commit, update knowledge."""
    return searcher.search_step(state, target_rate)


def run_search(
    pretrained: PrunableNetwork,
    target_rate: float,
    val: LabeledData,
    subset: Optional[LabeledData] = None,
    ratio: float = 0.2,
    knowledge_mode: str = "ensemble",
    knowledge_weight: float = 1.0,
    temperature: float = 1.0,
    scorer: Union[str, FilterScorer] = "taylor",
    batch_size: int = 256,
    batch_stats: bool = True,
    tolerance: float = 0.01,
    workers: int = 1,
    seed: int = 0,
    max_iterations: Optional[int] = None,
    device: Union[str, torch.device] = "cpu",
    on_step: Optional[Callable[[SearchState], None]] = None,
) -> SearchResult:
    """
    Search a pruned sub-network of a warmed-up network.

    Returns:
        SearchResult with Θ*, the trace, interim records and final knowledge
    """
    weight = 0.0 if knowledge_mode == "none" else knowledge_weight
    evaluator = RewardEvaluator(val, batch_size, weight, temperature, batch_stats, device)
    if isinstance(scorer, str):
        scorer = ScorerFactory.create(scorer, seed=seed) if scorer == "random" else ScorerFactory.create(scorer)
    searcher = GreedySearcher(
        evaluator,
        scorer,
        ratio=ratio,
        knowledge_mode=knowledge_mode,
        subset=subset,
        tolerance=tolerance,
        workers=workers,
        seed=seed,
        max_iterations=max_iterations,
    )
    return searcher.run(pretrained, target_rate, on_step=on_step)
