import datetime as dt
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple
import numpy as np
import pandas as pd
from tqdm import tqdm

from frprune.data.datasets import Dataset
from frprune.metrics.cost import count_flops, count_params
from frprune.metrics.effort import effort_factor
from frprune.model.layer_spec import ChannelRef
from frprune.model.model_graph import ModelGraph
from frprune.model.surgery import surgery_remove_channels
from frprune.scoring.accuracy import accuracy_from_counts, evaluate_counts
from frprune.scoring.criteria import Criterion, make_scorer
from frprune.scoring.feature_relevance import FeatureRelevanceScorer
from frprune.scoring.selection import RankingMode, describe, select_prune_set, selection_capacity
from frprune.tensor.kernels import softmax_xent
from frprune.tensor.optim import OptimState, sgd_step
from frprune.training.schedule import LrSchedule, PruneSchedule, should_prune
from frprune.util.checkpoint import CheckpointState, save_checkpoint
from frprune.util.errors import ClassWeightError, ConfigError, LayerAnnihilationError, SelectionError
from frprune.util.general import seed_streams
from frprune.util.output import pretty_time, write_csv

HISTORY_COLUMNS = ["epoch", "lr", "train_loss", "test_acc", "params", "flops", "event_flag", "epoch_seconds"]
EVENT_COLUMNS = ["epoch", "requested", "removed", "skipped", "params_after", "flops_after", "scoring_flops", "rho",
                 "victims", "reason", "search_seconds"]


def get_default_trainer_params() -> dict:
    return {
        "epochs": 200,  # N
        "prune_until": 150,  # N1, no prune event at or after this epoch
        "interval": 20,  # n, epochs between prune events
        "channels_per_event": 0,  # x, 0 trains without pruning
        "criterion": Criterion.feature_relevance,
        "ranking": RankingMode.raw,
        "lr": 0.1,
        "milestones": [100, 150],
        "lr_divisor": 10.0,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "batch_size": 256,
        "seed": 0,
    }


@dataclass
class PruneEvent:
    """ Outcome of one score-select-prune step """
    epoch: int
    requested: int
    victims: List[ChannelRef] = field(default_factory=list)
    skipped: bool = False
    reason: str = ""
    params_after: int = 0
    flops_after: int = 0
    scoring_flops: int = 0
    rho: float = float("nan")
    search_seconds: float = 0.0
    scores: Optional[pd.DataFrame] = None

    def to_row(self) -> list:
        victims = ";".join(f"{ref.layer_id}:{ref.channel}" for ref in self.victims)
        return [self.epoch, self.requested, len(self.victims), self.skipped, self.params_after, self.flops_after,
                self.scoring_flops, self.rho, victims, self.reason, self.search_seconds]


@dataclass
class TrainState:
    """ Everything that evolves during a run """
    epoch: int
    model: ModelGraph
    optim: OptimState
    seed: int
    streams: Dict[str, np.random.Generator]
    events: List[PruneEvent] = field(default_factory=list)

    def checkpoint_state(self, extra: Optional[dict] = None) -> CheckpointState:
        return CheckpointState(self.epoch, self.optim,
                               {name: rng.bit_generator.state for name, rng in self.streams.items()}, extra or {})


@dataclass
class TrainResult:
    model: ModelGraph
    state: TrainState
    history: pd.DataFrame
    events: pd.DataFrame


def evaluate(model: ModelGraph, dataset: Dataset, batch_size: int = 256) -> Tuple[float, np.ndarray]:
    """
    Accuracy of a model in eval mode.
    :return: overall accuracy and accuracy per class (every class must occur in the dataset)
    """
    correct, counts = evaluate_counts(model, dataset, batch_size)
    per_class = accuracy_from_counts(correct, counts)
    return float(correct.sum() / counts.sum()), per_class


class PruneTrainer:
    """
    Trains a model with SGD and, after every n-th epoch before N1, scores all prune-eligible channels, selects
    the x least important ones globally and removes them.  The epochs from N1 on only train, so the pruned
    architecture converges without a separate fine-tuning stage.
    """

    def __init__(self, params: dict = {}, scorer_params: Optional[dict] = None, output_dir: Optional[str] = None,
                 debug: bool = False, metadata: Optional[dict] = None):
        """
        :param params: schedule, optimiser and criterion settings (see get_default_trainer_params)
        :param scorer_params: parameters handed to the scorer (alpha, beta, weighting, scoring_subset, ...)
        :param output_dir: directory for CSV reports and checkpoints, nothing is written when None
        :param debug: print progress and show progress bars
        :param metadata: JSON-ready entries echoed into every checkpoint (dataset spec, ...)
        """
        self.name = self.__class__.__name__
        self.debug = debug

        # ----------------------------------------------------------------------------
        # Set default values for input params
        self.epochs: int = 200
        self.prune_until: int = 150
        self.interval: int = 20
        self.channels_per_event: int = 0
        self.criterion: str = Criterion.feature_relevance
        self.ranking: str = RankingMode.raw
        self.lr: float = 0.1
        self.milestones: List[int] = [100, 150]
        self.lr_divisor: float = 10.0
        self.momentum: float = 0.9
        self.weight_decay: float = 5e-4
        self.batch_size: int = 256
        self.seed: int = 0

        # ----------------------------------------------------------------------------
        # Update the above with input params, which also validates the params
        self.update_params(params)

        self.scorer_params: dict = dict(scorer_params or {})
        self.output_dir: Optional[Path] = Path(output_dir) if output_dir is not None else None
        self.metadata: dict = dict(metadata or {})

        self.schedule = PruneSchedule(self.epochs, self.prune_until, self.interval, self.channels_per_event)
        self.lr_schedule = LrSchedule(self.lr, [(int(m), self.lr_divisor) for m in self.milestones])

    def update_params(self, params: dict) -> None:
        """
        Update parameters -- overrides any defaults set in __init__
        :param params: dictionary of <parameter_name>, <parameter_value> pairs
        """
        protected_params = ["name", "debug"]
        for key, value in params.items():
            if key in protected_params or not hasattr(self, key):
                raise ConfigError(f"{self.__class__.__name__} does not have a parameter '{key}'", key=key)
            setattr(self, key, value)
        self.validate_params()

    def validate_params(self) -> None:
        if self.criterion not in Criterion.to_list():
            raise ConfigError(f"criterion must be one of {Criterion.to_list()}", key="criterion", section="prune")
        if self.ranking not in RankingMode.to_list():
            raise ConfigError(f"ranking must be one of {RankingMode.to_list()}", key="ranking", section="prune")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1", key="batch_size", section="optimizer")
        if self.lr_divisor <= 0:
            raise ConfigError("lr_divisor must be positive", key="lr_divisor", section="optimizer")

    # ----------------------------------------------------------------------------------------------------------------

    def run(self, model: ModelGraph, train_set: Dataset, test_set: Optional[Dataset] = None) -> TrainResult:
        """
        Execute the full schedule on a model (modified in place).
        :param model: freshly built model
        :param train_set: training split, augmented batches if it is marked for augmentation
        :param test_set: evaluation split for the per-epoch history, optional
        :return: the final model, state, per-epoch history and prune-event log
        """
        streams = seed_streams(self.seed)
        optim = OptimState({"lr": self.lr, "momentum": self.momentum, "weight_decay": self.weight_decay})
        state = TrainState(0, model, optim, self.seed, streams)
        scorer = make_scorer(self.criterion, dict(self.scorer_params, seed=self.seed), self.debug,
                             rng=streams["criterion"] if self.criterion == Criterion.random else streams["subset"])
        history = []
        run_start = dt.datetime.now().timestamp()
        self.debug_message(f"Training for {self.epochs} epochs, {self.schedule.num_events} prune event(s) of "
                           f"{self.channels_per_event} channel(s) with criterion {self.criterion}")

        for epoch in range(1, self.epochs + 1):
            epoch_start = dt.datetime.now().timestamp()
            state.epoch = epoch
            optim.lr = self.lr_schedule.rate(epoch)
            losses = self.train_epoch(state, train_set)

            event_flag = False
            if self.channels_per_event > 0 and should_prune(epoch, self.schedule):
                event = self.prune_step(state, scorer, train_set)
                state.events.append(event)
                event_flag = not event.skipped
                self._save_event(state, event, scorer)

            test_acc = float("nan")
            if test_set is not None:
                correct, counts = evaluate_counts(model, test_set, self.batch_size)
                test_acc = float(correct.sum() / counts.sum())
            history.append([epoch, optim.lr, float(np.mean(losses)), test_acc, count_params(model),
                            count_flops(model), event_flag, dt.datetime.now().timestamp() - epoch_start])
            self.debug_message(f"epoch {epoch:4d}  lr {optim.lr:.4g}  loss {history[-1][2]:.4f}  "
                               f"test acc {test_acc:.4f}  params {history[-1][4]}")

        self.debug_message("Total run time:", pretty_time(dt.datetime.now().timestamp() - run_start))
        result = TrainResult(model, state, pd.DataFrame(history, columns=HISTORY_COLUMNS),
                             pd.DataFrame([e.to_row() for e in state.events], columns=EVENT_COLUMNS))
        if self.output_dir is not None:
            write_csv(result.history, self.output_dir / "history.csv")
            write_csv(result.events, self.output_dir / "events.csv")
            save_checkpoint(model, state.checkpoint_state(self.checkpoint_extra(scorer)),
                            self.output_dir / "final.frsp")
        return result

    def train_epoch(self, state: TrainState, dataset: Dataset) -> List[float]:
        """
        One shuffled pass over the training set with SGD steps.
        :return: the loss of every batch
        """
        model, optim = state.model, state.optim
        losses = []
        num_batches = -(-len(dataset) // self.batch_size)
        batches = dataset.batches(self.batch_size, state.streams["shuffle"], state.streams["augment"])
        for images, labels in tqdm(batches, total=num_batches, disable=not self.debug, desc=f"epoch {state.epoch}",
                                   leave=False):
            logits, trace = model.forward(images, capture=True, training=True)
            loss, grad_logits = softmax_xent(logits, labels)
            grads = model.backward(trace, grad_logits)
            sgd_step(model.parameters(), grads, optim)
            losses.append(loss)
        return losses

    def prune_step(self, state: TrainState, scorer, dataset: Dataset) -> PruneEvent:
        """
        Score, select and remove channels.  A step that cannot be carried out (a layer would lose its last
        channel, or too few channels remain) is skipped with a warning and training continues.
        """
        model = state.model
        event = PruneEvent(state.epoch, self.channels_per_event)
        start = dt.datetime.now().timestamp()
        try:
            table = scorer.score(model, dataset)
        except ClassWeightError as e:
            event.skipped, event.reason = True, str(e)
            warnings.warn(f"Skipping prune event at epoch {state.epoch}: {e}")
            event.params_after, event.flops_after = count_params(model), count_flops(model)
            return event
        event.search_seconds = dt.datetime.now().timestamp() - start
        event.scores = table.to_frame()
        self.debug_message(f"Lowest scores at epoch {state.epoch} (up to {selection_capacity(table)} channel(s) "
                           f"removable):\n{describe(table)}")
        if isinstance(scorer, FeatureRelevanceScorer):
            report = effort_factor(scorer.meter.total(), count_flops(model), len(dataset), event.search_seconds)
            event.scoring_flops, event.rho = report.scoring_flops, report.rho

        try:
            victims = select_prune_set(table, self.channels_per_event, self.ranking)
            surgery_remove_channels(model, victims, state.optim)
            event.victims = victims
        except (SelectionError, LayerAnnihilationError) as e:
            event.skipped = True
            event.reason = str(e)
            warnings.warn(f"Skipping prune event at epoch {state.epoch}: {e}")

        event.params_after = count_params(model)
        event.flops_after = count_flops(model)
        self.debug_message(f"Prune event at epoch {state.epoch}: removed {len(event.victims)} channel(s) in "
                           f"{pretty_time(event.search_seconds)}, {event.params_after} parameters left")
        return event

    def checkpoint_extra(self, scorer) -> dict:
        """ Metadata stored with every checkpoint: the criterion, the relevance rule if any, run metadata """
        extra = dict(self.metadata, criterion=self.criterion)
        if isinstance(scorer, FeatureRelevanceScorer):
            extra["lrp"] = scorer.lrp_config.to_json()
        return extra

    def _save_event(self, state: TrainState, event: PruneEvent, scorer) -> None:
        if self.output_dir is None:
            return
        if event.scores is not None:
            write_csv(event.scores, self.output_dir / f"scores_epoch{event.epoch:04d}.csv")
        save_checkpoint(state.model, state.checkpoint_state(self.checkpoint_extra(scorer)),
                        self.output_dir / f"checkpoint_epoch{event.epoch:04d}.frsp")

    def debug_message(self, *message):
        if self.debug:
            print(*message)
