"""
Binary checkpoint container.

Layout (all integers little-endian):
    b"FRSP"                      magic
    u32                          format version
    u32                          number of entries
    per entry:
        u16 + utf-8              name ("param/<layer>/<name>", "buffer/<layer>/<name>", "momentum/<layer>/<name>")
        u8                       dtype code (1 = float32)
        u8                       rank
        rank x u32               dims
        payload                  little-endian float32 values, C order
    u32 + utf-8                  JSON metadata (layer specs, architecture echo, optimiser settings, epoch, RNG states)
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
import numpy as np

from frprune.model.layer_spec import LayerSpec
from frprune.model.model_graph import ModelGraph
from frprune.tensor.optim import OptimState
from frprune.util.errors import CheckpointError

MAGIC = b"FRSP"
FORMAT_VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4")}


@dataclass
class CheckpointState:
    """ Training state stored next to the model """
    epoch: int = 0
    optim: Optional[OptimState] = None
    rng_states: Dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _entries(model: ModelGraph, optim: Optional[OptimState]) -> Dict[str, np.ndarray]:
    entries = {}
    for layer_id in sorted(model.params):
        for name, tensor in sorted(model.params[layer_id].items()):
            entries[f"param/{layer_id}/{name}"] = tensor
    for layer_id in sorted(model.buffers):
        for name, tensor in sorted(model.buffers[layer_id].items()):
            entries[f"buffer/{layer_id}/{name}"] = tensor
    if optim is not None:
        for (layer_id, name), tensor in sorted(optim.buffers.items()):
            entries[f"momentum/{layer_id}/{name}"] = tensor
    return entries


def save_checkpoint(model: ModelGraph, state: Optional[CheckpointState], path: Union[str, Path]) -> Path:
    """
    Write a model (and optionally its training state) to a FRSP container.  Identical inputs produce
    byte-identical files.
    """
    state = state if state is not None else CheckpointState()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = _entries(model, state.optim)
    metadata = {
        "layers": [spec.to_json() for spec in model.layers],
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "arch": model.arch,
        "model_version": model.version,
        "epoch": state.epoch,
        "optim": None if state.optim is None else {"lr": state.optim.lr, "momentum": state.optim.momentum,
                                                   "weight_decay": state.optim.weight_decay},
        "rng_states": state.rng_states,
        "extra": state.extra,
    }
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(entries))]
    for name, tensor in entries.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack("<BB", 1, tensor.ndim) + struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype=DTYPE_CODES[1]).tobytes())
    encoded_metadata = json.dumps(metadata, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(encoded_metadata)) + encoded_metadata)
    with open(path, "wb") as f:
        f.write(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.offset = 0
        self.path = path

    def read(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"Checkpoint '{self.path}' is truncated")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_checkpoint(path: Union[str, Path]) -> Tuple[ModelGraph, CheckpointState]:
    """
    Read a FRSP container back into a model and its training state; pruned shapes come back as saved.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint '{path}' does not exist")
    reader = _Reader(path.read_bytes(), path)
    if reader.read(4) != MAGIC:
        raise CheckpointError(f"'{path}' is not a checkpoint (bad magic)")
    version, count = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint '{path}' has format version {version}, this build reads version "
                              f"{FORMAT_VERSION}")
    entries = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        name = reader.read(name_length).decode("utf-8")
        dtype_code, rank = reader.unpack("<BB")
        if dtype_code not in DTYPE_CODES:
            raise CheckpointError(f"Checkpoint entry '{name}' has unknown dtype code {dtype_code}")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) * DTYPE_CODES[dtype_code].itemsize
        entries[name] = np.frombuffer(reader.read(size), dtype=DTYPE_CODES[dtype_code]).reshape(dims) \
            .astype(np.float32)
    (metadata_length,) = reader.unpack("<I")
    try:
        metadata = json.loads(reader.read(metadata_length).decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"Checkpoint '{path}' has unreadable metadata: {e}")

    params: Dict[int, dict] = {}
    buffers: Dict[int, dict] = {}
    momentum = {}
    for name, tensor in entries.items():
        group, layer_id, tensor_name = name.split("/", 2)
        if group == "param":
            params.setdefault(int(layer_id), {})[tensor_name] = tensor
        elif group == "buffer":
            buffers.setdefault(int(layer_id), {})[tensor_name] = tensor
        elif group == "momentum":
            momentum[(int(layer_id), tensor_name)] = tensor
        else:
            raise CheckpointError(f"Checkpoint entry '{name}' has an unknown group")

    layers = [LayerSpec.from_json(spec) for spec in metadata["layers"]]
    model = ModelGraph(layers, tuple(metadata["input_shape"]), metadata["num_classes"], params, buffers,
                       metadata.get("arch"))
    model.version = int(metadata.get("model_version", 0))
    optim = None
    if metadata.get("optim") is not None:
        optim = OptimState(metadata["optim"])
        optim.buffers = momentum
    state = CheckpointState(int(metadata.get("epoch", 0)), optim, metadata.get("rng_states", {}),
                            metadata.get("extra", {}))
    return model, state
