"""
Default settings of every config section.  `cifar10` is the CIFAR-10 ResNet-56 setting, `toy` a desk-scale
6-conv network on synthetic 10-class data that runs in minutes.
"""
from frprune.data.datasets import get_default_dataset_params
from frprune.lrp.lrp_config import get_default_lrp_params
from frprune.model.builders import get_default_architecture_params
from frprune.tensor.optim import get_default_sgd_params
from frprune.util.errors import ConfigError

SECTIONS = ("run", "architecture", "dataset", "optimizer", "prune")


def get_default_run_params() -> dict:
    return {
        "profile": "cifar10",
        "seed": 0,
        "seeds": [],  # seeds iterated by `compare` and `sweep`, the run seed alone when empty
        "sweep_key": "channels_per_event",  # schedule setting `sweep` varies: channels_per_event or interval
        "sweep_values": [],
        "output_dir": "runs",
        "debug": False,
    }


def get_default_optimizer_params() -> dict:
    return {
        "epochs": 200,  # N
        **get_default_sgd_params(),
        "milestones": [100, 150],
        "lr_divisor": 10.0,
        "batch_size": 256,
    }


def get_default_prune_params() -> dict:
    return {
        "prune_until": 150,  # N1
        "interval": 20,  # n
        "channels_per_event": 0,  # x
        "criterion": "feature_relevance",
        **get_default_lrp_params(),
        "weighting": "accuracy",
        "scoring_subset": 0,  # 0 scores on the full training set
        "scoring_batch_size": 32,
        "ranking": "raw",
    }


def cifar10_profile() -> dict:
    return {
        "run": get_default_run_params(),
        "architecture": get_default_architecture_params(),
        "dataset": get_default_dataset_params(),
        "optimizer": get_default_optimizer_params(),
        "prune": get_default_prune_params(),
    }


def toy_profile() -> dict:
    profile = cifar10_profile()
    profile["run"]["profile"] = "toy"
    profile["run"]["seeds"] = [0, 1, 2]
    profile["run"]["sweep_values"] = [5, 10, 15, 20]
    profile["architecture"] = {
        "family": "plain",
        "input_shape": [3, 16, 16],
        "num_classes": 10,
        "seed": 0,
        "channels": [16, 16, 32, 32, 64, 64],
        "pool_after": [2, 4],
        "batch_norm": True,
        "bias": False,
    }
    profile["dataset"] = {
        "format": "synthetic",
        "num_classes": 10,
        "num_train": 10000,
        "num_test": 2000,
        "image_shape": [3, 16, 16],
        "noise": 0.5,
        "seed": 0,
        "mean": [0.0, 0.0, 0.0],
        "std": [1.0, 1.0, 1.0],
        "random_crop": True,
        "crop_padding": 2,
        "horizontal_flip": False,
    }
    profile["optimizer"].update({"epochs": 30, "lr": 0.05, "milestones": [15, 25], "batch_size": 128})
    profile["prune"].update({"prune_until": 21, "interval": 3, "channels_per_event": 15, "scoring_subset": 1000})
    return profile


PROFILES = {"cifar10": cifar10_profile, "toy": toy_profile}


def get_profile(name: str) -> dict:
    if name not in PROFILES:
        raise ConfigError(f"Unknown profile '{name}', expected one of {sorted(PROFILES)}", key="profile",
                          section="run")
    return PROFILES[name]()
