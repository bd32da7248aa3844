"""
Command line entry point.

    frprune train   CONFIG [--seed S] [--output-dir DIR]
    frprune score   CONFIG [--checkpoint FILE] [--criterion NAME] [--seed S] [--output-dir DIR]
    frprune eval    CONFIG --checkpoint FILE [--output-dir DIR]
    frprune report  CONFIG --checkpoints BASELINE PRUNED [--output-dir DIR]
    frprune compare CONFIG [--seed S] [--output-dir DIR]
    frprune sweep   CONFIG [--seed S] [--output-dir DIR]

Everything else comes from the config file.  All outputs go under the run's output directory.
"""
import argparse
import datetime as dt
import sys
from pathlib import Path
from typing import List, Optional, Tuple
import numpy as np
import pandas as pd

from frprune.cli.config import RunConfig, parse_config
from frprune.data.datasets import Dataset, load_dataset
from frprune.metrics.cost import cost_drop, cost_report
from frprune.metrics.effort import analytic_effort_report, effort_factor
from frprune.model.builders import ArchitectureConfig, build_model
from frprune.model.model_graph import ModelGraph
from frprune.scoring.criteria import Criterion, make_scorer
from frprune.scoring.feature_relevance import FeatureRelevanceScorer
from frprune.training.prune_trainer import PruneTrainer, TrainResult, evaluate
from frprune.util.checkpoint import load_checkpoint
from frprune.util.errors import CheckpointError, ConfigError, FrpruneError
from frprune.util.general import fix_decimal_issue, percent_drop, seed_streams
from frprune.util.output import pretty_time, write_csv

# Architecture settings a checkpoint must share with the config it is used with
ARCH_MATCH_KEYS = ("family", "input_shape", "num_classes")

COMPARE_COLUMNS = ["criterion", "seed", "final_acc", "baseline_acc", "acc_drop_points", "params", "flops",
                   "params_drop_percent", "flops_drop_percent", "run_seconds"]
SWEEP_COLUMNS = ["sweep_key", "value", "seed", "stages", "events", "planned_removals", "final_acc", "baseline_acc",
                 "acc_drop_points", "params", "flops", "params_drop_percent", "flops_drop_percent", "run_seconds"]
REPORT_COLUMNS = ["acc_drop_percent", "params_drop_percent", "flops_drop_percent", "pretrained",
                  "additional_epochs", "baseline_acc", "pruned_acc", "baseline_params", "pruned_params",
                  "baseline_flops", "pruned_flops", "analytic_rho"]


def init_seed(config: RunConfig) -> int:
    """ Initialisation seed of a run, derived from the architecture seed and the run seed together """
    return int(np.random.SeedSequence([int(config.architecture.get("seed", 0)), config.seed]).generate_state(1)[0])


def build_run_model(config: RunConfig) -> ModelGraph:
    return build_model(dict(config.architecture, seed=init_seed(config)))


def load_splits(config: RunConfig) -> Tuple[Dataset, Optional[Dataset]]:
    spec = config.dataset_spec()
    train_set = load_dataset(spec, train=True)
    has_test = spec.num_test > 0 if spec.format == "synthetic" else bool(spec.test_files)
    return train_set, load_dataset(spec, train=False) if has_test else None


def check_architecture(config: RunConfig, model: ModelGraph, path: str) -> None:
    """ Refuse a checkpoint that was not built from the configured architecture family and shapes """
    if not model.arch:
        return
    configured = config.arch_config().to_json()
    try:
        saved_arch = ArchitectureConfig.from_json(model.arch).to_json()
    except FrpruneError as e:
        raise CheckpointError(f"Checkpoint '{path}' stores an invalid architecture: {e}")
    for key in ARCH_MATCH_KEYS:
        saved = saved_arch[key]
        if list(np.atleast_1d(saved)) != list(np.atleast_1d(configured[key])):
            raise CheckpointError(f"Checkpoint '{path}' has architecture {key}={saved}, the config says "
                                  f"{configured[key]}")


def load_model(config: RunConfig, path: str) -> ModelGraph:
    model, _ = load_checkpoint(path)
    check_architecture(config, model, path)
    return model


def run_training(config: RunConfig, output_dir: Path, splits=None, **overrides) -> TrainResult:
    """ One PruneTrainer run of the config, with trainer params (criterion, interval, ...) replaced by overrides """
    params = dict(config.trainer_params(), **overrides)
    train_set, test_set = splits if splits is not None else load_splits(config)
    trainer = PruneTrainer(params, config.scorer_params(), str(output_dir), debug=config.debug,
                           metadata={"dataset": config.dataset_spec().to_json(), "seed": config.seed})
    return trainer.run(build_run_model(config), train_set, test_set)


# ----------------------------------------------------------------------------------------------------------------
# Subcommands

def command_train(config: RunConfig, args: argparse.Namespace) -> int:
    start = dt.datetime.now().timestamp()
    result = run_training(config, config.output_dir)
    final = result.history.iloc[-1]
    print(f"Finished {len(result.history)} epochs in {pretty_time(dt.datetime.now().timestamp() - start)}: "
          f"test accuracy {final['test_acc']:.4f}, {int(final['params'])} parameters, {int(final['flops'])} FLOPs, "
          f"{int((~result.events['skipped'].astype(bool)).sum()) if len(result.events) else 0} prune event(s)")
    return 0


def command_score(config: RunConfig, args: argparse.Namespace) -> int:
    criterion = args.criterion or config.prune["criterion"]
    model = load_model(config, args.checkpoint) if args.checkpoint else build_run_model(config)
    train_set, _ = load_splits(config)
    streams = seed_streams(config.seed)
    scorer = make_scorer(criterion, dict(config.scorer_params(), seed=config.seed), config.debug,
                         rng=streams["criterion"] if criterion == Criterion.random else streams["subset"])
    table = scorer.score(model, train_set)
    path = write_csv(table.to_frame(), config.output_dir / f"scores_{criterion}.csv")
    print(f"Scored {len(table)} channels with {criterion}, written to {path}")
    if isinstance(scorer, FeatureRelevanceScorer):
        measured = effort_factor(scorer.meter.total(), cost_report(model).total_flops, len(train_set),
                                 scorer.search_seconds)
        analytic = analytic_effort_report(model, scorer.num_scored, len(train_set), scorer.lrp_config)
        frame = pd.concat([measured.to_frame().assign(source="measured"),
                           analytic.to_frame().assign(source="analytic")], ignore_index=True)
        write_csv(frame, config.output_dir / "effort.csv")
        print(f"Effort factor {measured.rho:.4f} measured, {analytic.rho:.4f} analytic, search time "
              f"{pretty_time(measured.search_seconds)}")
    return 0


def command_eval(config: RunConfig, args: argparse.Namespace) -> int:
    model = load_model(config, args.checkpoint)
    _, test_set = load_splits(config)
    if test_set is None:
        raise CheckpointError("The config has no test split to evaluate on")
    overall, per_class = evaluate(model, test_set, int(config.optimizer["batch_size"]))
    frame = pd.DataFrame({"class": [str(c) for c in range(len(per_class))] + ["all"],
                          "accuracy": list(per_class) + [overall]})
    write_csv(frame, config.output_dir / "eval.csv")
    print(frame.to_string(index=False))
    return 0


def command_report(config: RunConfig, args: argparse.Namespace) -> int:
    baseline_path, pruned_path = args.checkpoints
    baseline, pruned = load_model(config, baseline_path), load_model(config, pruned_path)
    train_set, test_set = load_splits(config)
    baseline_cost, pruned_cost = cost_report(baseline), cost_report(pruned)
    drops = cost_drop(baseline_cost, pruned_cost)
    batch_size = int(config.optimizer["batch_size"])
    baseline_acc = evaluate(baseline, test_set, batch_size)[0] if test_set is not None else float("nan")
    pruned_acc = evaluate(pruned, test_set, batch_size)[0] if test_set is not None else float("nan")
    n_scoring = int(config.prune["scoring_subset"]) or len(train_set)
    effort = analytic_effort_report(pruned, min(n_scoring, len(train_set)), len(train_set), config.lrp_config())
    row = [fix_decimal_issue(100.0 * (baseline_acc - pruned_acc)), drops["params_drop_percent"],
           drops["flops_drop_percent"], "N", 0, baseline_acc, pruned_acc, baseline_cost.total_params,
           pruned_cost.total_params, baseline_cost.total_flops, pruned_cost.total_flops, effort.rho]
    frame = pd.DataFrame([row], columns=REPORT_COLUMNS)
    write_csv(frame, config.output_dir / "report.csv")
    write_csv(baseline_cost.layers, config.output_dir / "cost_baseline.csv")
    write_csv(pruned_cost.layers, config.output_dir / "cost_pruned.csv")
    print(frame[REPORT_COLUMNS[:5]].rename(columns={
        "acc_drop_percent": "% Acc. Drop", "params_drop_percent": "% Params Drop",
        "flops_drop_percent": "% FLOPs Reduction", "pretrained": "Pre-trained?",
        "additional_epochs": "Additional epochs"}).to_string(index=False))
    return 0


def command_compare(config: RunConfig, args: argparse.Namespace) -> int:
    seeds = [config.seed] if args.seed is not None else config.seeds
    rows = []
    for seed in seeds:
        seeded = config.with_overrides(seed=seed)
        splits = load_splits(seeded)
        start = dt.datetime.now().timestamp()
        baseline = run_training(seeded, config.output_dir / f"baseline_seed{seed}", channels_per_event=0,
                                splits=splits)
        baseline_final = baseline.history.iloc[-1]
        rows.append(_compare_row("baseline", seed, baseline, baseline_final,
                                 dt.datetime.now().timestamp() - start))
        for criterion in Criterion.to_list():
            start = dt.datetime.now().timestamp()
            result = run_training(seeded, config.output_dir / f"{criterion}_seed{seed}", criterion=criterion,
                                  splits=splits)
            rows.append(_compare_row(criterion, seed, result, baseline_final, dt.datetime.now().timestamp() - start))
    frame = pd.DataFrame(rows, columns=COMPARE_COLUMNS)
    write_csv(frame, config.output_dir / "compare.csv")
    summary = frame.drop(columns=["seed", "run_seconds"]).groupby("criterion", sort=False).mean().reset_index()
    write_csv(summary, config.output_dir / "compare_summary.csv")
    print(summary.to_string(index=False))
    return 0


def command_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    """ One run per value of [run] sweep_key at the configured schedule, against an unpruned baseline per seed """
    key, values = config.sweep
    if not values:
        raise ConfigError("sweep needs at least one value", key="sweep_values", section="run",
                          line=config.lines.get(("run", "sweep_values")), path=config.path)
    seeds = [config.seed] if args.seed is not None else config.seeds
    rows = []
    for seed in seeds:
        seeded = config.with_overrides(seed=seed)
        splits = load_splits(seeded)
        baseline = run_training(seeded, config.output_dir / f"baseline_seed{seed}", channels_per_event=0,
                                splits=splits)
        baseline_final = baseline.history.iloc[-1]
        for value in values:
            schedule = seeded.prune_schedule(**{key: value})
            start = dt.datetime.now().timestamp()
            result = run_training(seeded, config.output_dir / f"{key}{value}_seed{seed}", splits=splits,
                                  **{key: value})
            rows.append([key, value, seed, schedule.k, schedule.num_events, schedule.planned_removals(),
                         *_drop_columns(result, baseline_final), dt.datetime.now().timestamp() - start])
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    write_csv(frame, config.output_dir / "sweep.csv")
    summary = frame.drop(columns=["seed", "run_seconds"]).groupby(["sweep_key", "value"], sort=False).mean() \
        .reset_index()
    write_csv(summary, config.output_dir / "sweep_summary.csv")
    print(summary.to_string(index=False))
    return 0


def _compare_row(criterion: str, seed: int, result: TrainResult, baseline_final: pd.Series, seconds: float) -> list:
    return [criterion, seed, *_drop_columns(result, baseline_final), seconds]


def _drop_columns(result: TrainResult, baseline_final: pd.Series) -> list:
    """ final_acc .. flops_drop_percent of a run against the last epoch of its unpruned baseline """
    final = result.history.iloc[-1]
    return [final["test_acc"], baseline_final["test_acc"],
            fix_decimal_issue(100.0 * (baseline_final["test_acc"] - final["test_acc"])), int(final["params"]),
            int(final["flops"]), percent_drop(baseline_final["params"], final["params"]),
            percent_drop(baseline_final["flops"], final["flops"])]


COMMANDS = {
    "train": command_train,
    "score": command_score,
    "eval": command_eval,
    "report": command_report,
    "compare": command_compare,
    "sweep": command_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frprune",
                                     description="Gradual channel pruning during training with feature-relevance "
                                                 "scores")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("config", help="run configuration file")
        sub.add_argument("--output-dir", default=None, help="overrides [run] output_dir")
        return sub

    train = add("train", "train with periodic pruning")
    train.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    score = add("score", "dump the channel score table")
    score.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    score.add_argument("--checkpoint", default=None, help="model to score, a fresh model when omitted")
    score.add_argument("--criterion", choices=Criterion.to_list(), default=None,
                       help="overrides [prune] criterion")
    evaluation = add("eval", "accuracy of a checkpoint on the test split")
    evaluation.add_argument("--checkpoint", required=True)
    report = add("report", "cost and accuracy drops of a pruned checkpoint against a baseline")
    report.add_argument("--checkpoints", nargs=2, required=True, metavar=("BASELINE", "PRUNED"))
    compare = add("compare", "run every criterion and an unpruned baseline per seed")
    compare.add_argument("--seed", type=int, default=None, help="run this seed only")
    sweep = add("sweep", "one run per value of [run] sweep_key, against an unpruned baseline per seed")
    sweep.add_argument("--seed", type=int, default=None, help="run this seed only")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config).with_overrides(getattr(args, "seed", None), args.output_dir)
        return COMMANDS[args.command](config, args)
    except (FrpruneError, OSError) as e:
        print(f"frprune {args.command}: {e}", file=sys.stderr)
        return 1
