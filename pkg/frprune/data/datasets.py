"""
Image-classification datasets: the idx and cifar-binary file formats, seeded synthetic Gaussian-blob images,
normalisation, training-time augmentation and batching.
"""
import os
import struct
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple
import numpy as np

from frprune.util.errors import ConfigError, DatasetFormatError, EmptyDatasetError, LabelRangeError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_IMAGE_SHAPE = (3, 32, 32)
CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32

CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)


class DatasetFormat:
    """ A class to help standardise the supported dataset sources """
    idx = "idx"
    cifar_binary = "cifar-binary"
    synthetic = "synthetic"

    @staticmethod
    def to_list():
        return [DatasetFormat.idx, DatasetFormat.cifar_binary, DatasetFormat.synthetic]


def get_default_dataset_params() -> dict:
    return {
        "format": DatasetFormat.cifar_binary,
        # cifar-binary: list of batch files; idx: [images file, labels file]
        "train_files": [f"data/cifar-10-batches-bin/data_batch_{i}.bin" for i in range(1, 6)],
        "test_files": ["data/cifar-10-batches-bin/test_batch.bin"],
        "num_classes": 10,
        "mean": list(CIFAR10_MEAN),
        "std": list(CIFAR10_STD),
        "random_crop": True,
        "horizontal_flip": True,
        "crop_padding": 4,
    }


class DatasetSpec:
    """
    Where a dataset comes from and how it is prepared.  Pixel data read from files is scaled to [0, 1] and then
    normalised per channel with `mean` / `std`.  Synthetic images are generated already centred, their
    normalisation constants default to 0 / 1.
    """

    def __init__(self, params: Optional[dict] = None) -> None:
        self.format: str = DatasetFormat.cifar_binary
        self.train_files: List[str] = []
        self.test_files: List[str] = []
        self.num_classes: int = 10
        self.mean: List[float] = list(CIFAR10_MEAN)
        self.std: List[float] = list(CIFAR10_STD)

        # Augmentation of training batches
        self.random_crop: bool = True
        self.horizontal_flip: bool = True
        self.crop_padding: int = 4

        # Keep only the first `train_limit` / `test_limit` samples (0 keeps everything)
        self.train_limit: int = 0
        self.test_limit: int = 0

        # Synthetic generator settings
        self.seed: int = 0
        self.num_train: int = 10000
        self.num_test: int = 2000
        self.image_shape: Tuple[int, ...] = (3, 32, 32)
        self.noise: float = 0.5

        self.update_params(params or {})

    def update_params(self, params: dict) -> None:
        for key, value in params.items():
            if not hasattr(self, key):
                raise ConfigError(f"DatasetSpec does not have an attribute '{key}'", key=key, section="dataset")
            setattr(self, key, value)
        self.train_files = [str(f) for f in self.train_files]
        self.test_files = [str(f) for f in self.test_files]
        self.mean = [float(m) for m in self.mean]
        self.std = [float(s) for s in self.std]
        self.image_shape = tuple(int(s) for s in self.image_shape)
        self.validate_params()

    def validate_params(self) -> None:
        if self.format not in DatasetFormat.to_list():
            raise ConfigError(f"format must be one of {DatasetFormat.to_list()}", key="format", section="dataset")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be at least 1", key="num_classes", section="dataset")
        if len(self.mean) != len(self.std) or len(self.mean) == 0:
            raise ConfigError("mean and std need one entry per image channel", key="std", section="dataset")
        if min(self.std) <= 0:
            raise ConfigError("std entries must be positive", key="std", section="dataset")
        if self.crop_padding < 0:
            raise ConfigError("crop_padding must be >= 0", key="crop_padding", section="dataset")
        if self.format == DatasetFormat.idx and self.train_files and len(self.train_files) != 2:
            raise ConfigError("idx datasets need [images file, labels file]", key="train_files", section="dataset")
        if self.format == DatasetFormat.synthetic:
            if len(self.image_shape) != 3 or min(self.image_shape) < 1:
                raise ConfigError("image_shape must be (C, H, W)", key="image_shape", section="dataset")
            if self.num_train < 1 or self.num_test < 0:
                raise ConfigError("num_train must be positive and num_test >= 0", key="num_train",
                                  section="dataset")

    def to_json(self) -> dict:
        return {key: (list(value) if isinstance(value, (list, tuple)) else value)
                for key, value in self.__dict__.items()}


@dataclass
class Dataset:
    """
    Normalised images (N, C, H, W) float32 with integer labels (N,).  `augment` marks a training split,
    whose batches are randomly cropped and flipped when an augmentation generator is supplied.
    """
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    augment: bool = False
    random_crop: bool = True
    horizontal_flip: bool = True
    crop_padding: int = 4

    def __post_init__(self) -> None:
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise DatasetFormatError(f"{self.images.shape[0]} images of shape {self.images.shape[1:]} "
                                     f"do not pair with {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelRangeError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes, self.augment,
                       self.random_crop, self.horizontal_flip, self.crop_padding)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def batches(self, batch_size: int, shuffle_rng: Optional[np.random.Generator] = None,
                augment_rng: Optional[np.random.Generator] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """
        Iterate over (images, labels) batches; the last one may be smaller.
        :param batch_size: samples per batch
        :param shuffle_rng: shuffle the order with this generator, keep dataset order when None
        :param augment_rng: crop/flip generator, only used on training splits
        """
        if len(self) == 0:
            raise EmptyDatasetError("Cannot iterate over an empty dataset")
        order = shuffle_rng.permutation(len(self)) if shuffle_rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start:start + batch_size]
            images = self.images[index]
            if self.augment and augment_rng is not None:
                images = augment_batch(images, augment_rng, self.random_crop, self.horizontal_flip,
                                       self.crop_padding)
            yield images, self.labels[index]


def augment_batch(images: np.ndarray, rng: np.random.Generator, random_crop: bool = True,
                  horizontal_flip: bool = True, padding: int = 4) -> np.ndarray:
    """
    Random crop of the zero-padded image back to its original size, then a horizontal flip with
    probability 1/2.  Draws are made for every sample even when an option is off, so switching one
    augmentation does not change the other's draws.
    """
    batch, _, height, width = images.shape
    offsets = rng.integers(0, 2 * padding + 1, size=(batch, 2))
    flips = rng.random(batch) < 0.5
    out = images
    if random_crop and padding > 0:
        padded = np.pad(images, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        out = np.empty_like(images)
        for i, (dy, dx) in enumerate(offsets):
            out[i] = padded[i, :, dy:dy + height, dx:dx + width]
    if horizontal_flip:
        out = np.where(flips[:, None, None, None], out[:, :, :, ::-1], out)
    return np.ascontiguousarray(out, dtype=np.float32)


def seeded_subset(dataset: Dataset, size: int, rng: np.random.Generator) -> Dataset:
    """ Random subset of `size` samples (all of them when size <= 0 or >= len), kept in dataset order """
    if size <= 0 or size >= len(dataset):
        return dataset
    indices = np.sort(rng.choice(len(dataset), size=size, replace=False))
    return dataset.subset(indices)


# ----------------------------------------------------------------------------------------------------------------
# File formats

def _read_bytes(path: str) -> bytes:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Dataset file '{path}' does not exist")
    with open(path, "rb") as f:
        return f.read()


def load_idx(path: str) -> np.ndarray:
    """
    Read an idx file of unsigned bytes: a big-endian magic (0x00000803 for images, 0x00000801 for labels),
    one big-endian u32 per dimension, then the payload.
    :return: uint8 array shaped by the header dimensions
    """
    data = _read_bytes(path)
    if len(data) < 4:
        raise DatasetFormatError(f"'{path}' is too short to hold an idx header")
    magic = struct.unpack_from(">I", data, 0)[0]
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise DatasetFormatError(f"'{path}' has idx magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x} or "
                                 f"{IDX_LABELS_MAGIC:#010x}")
    rank = magic & 0xFF
    header_size = 4 + 4 * rank
    if len(data) < header_size:
        raise DatasetFormatError(f"'{path}' is truncated inside its idx header")
    dims = struct.unpack_from(f">{rank}I", data, 4)
    expected = header_size + int(np.prod(dims))
    if len(data) != expected:
        raise DatasetFormatError(f"'{path}' holds {len(data)} bytes, its header {dims} implies {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=header_size).reshape(dims)


def load_cifar_binary(path: str, num_classes: int = 10) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read a cifar-binary batch file: records of 1 label byte followed by 3072 pixel bytes (R, G, B planes).
    :return: images (N, 3, 32, 32) uint8 and labels (N,) int64
    """
    data = _read_bytes(path)
    if len(data) % CIFAR_RECORD_BYTES != 0:
        raise DatasetFormatError(f"'{path}' holds {len(data)} bytes, not a multiple of the "
                                 f"{CIFAR_RECORD_BYTES}-byte record length")
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > num_classes - 1:
        raise LabelRangeError(f"'{path}' contains label {labels.max()} but only {num_classes} classes are "
                              f"configured")
    return records[:, 1:].reshape((-1,) + CIFAR_IMAGE_SHAPE), labels


def normalise(images: np.ndarray, mean: Sequence[float], std: Sequence[float], scale: float = 255.0) -> np.ndarray:
    """ (images / scale - mean) / std per channel, float32 """
    if images.shape[1] != len(mean):
        raise ConfigError(f"{len(mean)} normalisation constants for {images.shape[1]} image channel(s)",
                          key="mean", section="dataset")
    mean = np.asarray(mean, dtype=np.float32)[None, :, None, None]
    std = np.asarray(std, dtype=np.float32)[None, :, None, None]
    return ((images.astype(np.float32) / np.float32(scale) - mean) / std).astype(np.float32)


def synth_dataset(seed: int, spec: DatasetSpec, num_samples: Optional[int] = None,
                  stream: int = 0) -> Dataset:
    """
    Gaussian-blob images: every class has its own colour per channel and its own blob centre, samples are the
    class template plus Gaussian noise.  Class templates depend only on `seed`; `stream` selects independent
    sample draws (0 for training, 1 for test) from the same classes.
    """
    num_samples = spec.num_train if num_samples is None else num_samples
    channels, height, width = spec.image_shape
    template_rng = np.random.default_rng([seed, 0])
    colours = template_rng.uniform(-1.0, 1.0, size=(spec.num_classes, channels))
    centres = template_rng.uniform(0.25, 0.75, size=(spec.num_classes, 2)) * (height, width)
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    sigma = max(height, width) / 4.0
    bumps = np.exp(-((rows[None] - centres[:, 0, None, None]) ** 2 + (cols[None] - centres[:, 1, None, None]) ** 2)
                   / (2 * sigma ** 2))
    templates = colours[:, :, None, None] * bumps[:, None]

    sample_rng = np.random.default_rng([seed, 1 + stream])
    labels = np.arange(num_samples) % spec.num_classes
    labels = sample_rng.permutation(labels)
    images = templates[labels] + spec.noise * sample_rng.standard_normal((num_samples, channels, height, width))
    images = normalise(images, spec.mean[:channels] if len(spec.mean) >= channels else [0.0] * channels,
                       spec.std[:channels] if len(spec.std) >= channels else [1.0] * channels, scale=1.0)
    return Dataset(images, labels, spec.num_classes)


def _limit(images: np.ndarray, labels: np.ndarray, limit: int) -> Tuple[np.ndarray, np.ndarray]:
    return (images[:limit], labels[:limit]) if limit > 0 else (images, labels)


def _load_files(spec: DatasetSpec, files: List[str]) -> Tuple[np.ndarray, np.ndarray]:
    if spec.format == DatasetFormat.idx:
        if len(files) != 2:
            raise ConfigError("idx datasets need [images file, labels file]", section="dataset")
        images, labels = load_idx(files[0]), load_idx(files[1]).astype(np.int64)
        if images.ndim == 3:
            images = images[:, None]
        if labels.size and labels.max() > spec.num_classes - 1:
            raise LabelRangeError(f"'{files[1]}' contains label {labels.max()} but only {spec.num_classes} "
                                  f"classes are configured")
        return images, labels
    parts = [load_cifar_binary(path, spec.num_classes) for path in files]
    if not parts:
        raise EmptyDatasetError("No cifar-binary files configured")
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def load_dataset(spec: DatasetSpec, train: bool = True) -> Dataset:
    """
    Load the training or the test split described by a DatasetSpec.  Only the training split is marked for
    augmentation.
    """
    if spec.format == DatasetFormat.synthetic:
        size = spec.num_train if train else spec.num_test
        dataset = synth_dataset(spec.seed, spec, size, stream=0 if train else 1)
        images, labels = dataset.images, dataset.labels
    else:
        raw_images, labels = _load_files(spec, spec.train_files if train else spec.test_files)
        images = normalise(raw_images, spec.mean, spec.std)
    images, labels = _limit(images, labels, spec.train_limit if train else spec.test_limit)
    if len(labels) == 0:
        raise EmptyDatasetError(f"The {'training' if train else 'test'} split is empty")
    return Dataset(images, labels, spec.num_classes, augment=train, random_crop=spec.random_crop,
                   horizontal_flip=spec.horizontal_flip, crop_padding=spec.crop_padding)
