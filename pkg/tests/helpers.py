import numpy as np

from frprune.data.datasets import DatasetSpec, synth_dataset
from frprune.model.builders import build_model


def tiny_arch(channels=(4, 6), pool_after=(1,), batch_norm=False, bias=False, input_shape=(3, 8, 8),
              num_classes=3, seed=0) -> dict:
    return {
        "family": "plain",
        "channels": list(channels),
        "pool_after": list(pool_after),
        "batch_norm": batch_norm,
        "bias": bias,
        "input_shape": list(input_shape),
        "num_classes": num_classes,
        "seed": seed,
    }


def tiny_model(**kwargs):
    return build_model(tiny_arch(**kwargs))


def tiny_spec(num_classes=3, num_train=120, num_test=60, image_shape=(3, 8, 8), noise=0.3, seed=0) -> DatasetSpec:
    return DatasetSpec({
        "format": "synthetic",
        "num_classes": num_classes,
        "num_train": num_train,
        "num_test": num_test,
        "image_shape": list(image_shape),
        "noise": noise,
        "seed": seed,
        "mean": [0.0] * image_shape[0],
        "std": [1.0] * image_shape[0],
        "random_crop": True,
        "horizontal_flip": False,
        "crop_padding": 1,
    })


def tiny_dataset(num_samples=60, **kwargs):
    spec = tiny_spec(**kwargs)
    return synth_dataset(spec.seed, spec, num_samples)


def signed_batch(shape, seed=0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32)


TINY_CONFIG = """
# desk-scale run used by the CLI tests
[run]
profile = toy
seed = 0
seeds = 0
sweep_key = channels_per_event
sweep_values = 1, 2
output_dir = {output_dir}

[architecture]
family = plain
channels = 4, 6
pool_after = 1
input_shape = 3, 8, 8
num_classes = 3
batch_norm = true
bias = false

[dataset]
format = synthetic
num_classes = 3
num_train = 90
num_test = 30
image_shape = 3, 8, 8
crop_padding = 1

[optimizer]
epochs = 3
lr = 0.05
milestones = 2
batch_size = 32

[prune]
prune_until = 3
interval = 1
channels_per_event = 2
scoring_subset = 45
scoring_batch_size = 16
"""


def write_tiny_config(tmp_path, **overrides) -> str:
    text = TINY_CONFIG.format(output_dir=tmp_path / "out")
    for key, value in overrides.items():
        text = text.replace(f"\n{key} = ", f"\n{key} = {value}  ; was ", 1) if f"\n{key} = " in text else text
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)
