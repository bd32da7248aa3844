# Model graph
from frprune.model.builders import ArchitectureConfig, build_model, get_default_architecture_params
from frprune.model.layer_spec import ChannelRef, LayerKind, LayerSpec, MODEL_INPUT
from frprune.model.model_graph import ActivationTrace, ModelGraph, eligible_channels
from frprune.model.surgery import surgery_remove_channels

# Relevance propagation
from frprune.lrp.lrp_config import LrpConfig, get_default_lrp_params
from frprune.lrp.relevance_pass import RelevanceMap, full_relevance_pass

# Base scorer
from frprune.scoring.abstract_channel_scorer import AbstractChannelScorer

# Baseline scorers
from frprune.scoring.baseline.l1_norm import L1NormScorer
from frprune.scoring.baseline.l2_norm import L2NormScorer
from frprune.scoring.baseline.random_score import RandomScorer

# Feature-relevance scoring and selection
from frprune.scoring.feature_relevance import FeatureRelevanceScorer
from frprune.scoring.criteria import Criterion, make_scorer, score_model
from frprune.scoring.selection import GlobalScoreTable, select_prune_set

# Training
from frprune.training.schedule import LrSchedule, PruneSchedule, should_prune
from frprune.training.prune_trainer import PruneTrainer, get_default_trainer_params

# Data and metrics
from frprune.data.datasets import Dataset, DatasetSpec, load_dataset, synth_dataset
from frprune.metrics.cost import cost_report
from frprune.metrics.effort import analytic_effort_report, effort_factor

# Utility
from frprune.util import general, output
from frprune.util.checkpoint import load_checkpoint, save_checkpoint
