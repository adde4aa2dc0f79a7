"""
ModelState: the flat parameter vector every pruning / interpolation step works on
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..autodiff.tensor import STORAGE_DTYPE
from ..exceptions import ArchitectureMismatchError, DatasetFormatError, InvalidParameterError
from ..utils.helpers import STREAM_INIT, content_hash, keyed_rng
from .architecture import Architecture


@dataclass(frozen=True, eq=False)
class ModelState:
    """
    Parameters of one network at one point in training

    Attributes:
        params: flat float32 vector, layout from arch.param_blocks()
        arch: architecture descriptor
        init_seed: seed the initialization was drawn from
        epoch_tag: k means "weights as of the end of epoch k" (0 = initialization)
    """
    params: np.ndarray
    arch: Architecture
    init_seed: int
    epoch_tag: int = 0
    _hash: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        params = np.array(self.params, dtype=STORAGE_DTYPE).reshape(-1)
        if params.size != self.arch.param_count:
            raise InvalidParameterError(
                f"params length {params.size} != architecture parameter count {self.arch.param_count}"
            )
        if self.epoch_tag < 0:
            raise InvalidParameterError(f"epoch_tag must be >= 0, got {self.epoch_tag}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelState):
            return NotImplemented
        return (
            self.arch == other.arch
            and self.init_seed == other.init_seed
            and self.epoch_tag == other.epoch_tag
            and np.array_equal(self.params, other.params)
        )

    def with_params(self, params: np.ndarray, epoch_tag: Optional[int] = None) -> "ModelState":
        return ModelState(
            params=params,
            arch=self.arch,
            init_seed=self.init_seed,
            epoch_tag=self.epoch_tag if epoch_tag is None else epoch_tag,
        )

    def state_hash(self) -> str:
        if self._hash is None:
            object.__setattr__(self, "_hash", content_hash(self.params.tobytes()))
        return self._hash

    def check_compatible(self, other: "ModelState") -> None:
        if self.arch != other.arch:
            raise ArchitectureMismatchError(
                f"architecture mismatch: {self.arch.name} ({self.arch.arch_hash()}) vs "
                f"{other.arch.name} ({other.arch.arch_hash()})"
            )


def init_state(arch: Architecture, seed: int) -> ModelState:
    """
    Seeded He-normal initialization; biases start at zero

    Equal (arch, seed) always yields bit-identical parameters.
    """
    rng = keyed_rng(seed, STREAM_INIT)
    params = np.zeros(arch.param_count, dtype=STORAGE_DTYPE)
    for block in arch.param_blocks():
        if not block.prunable:
            continue
        if len(block.shape) == 2:
            fan_in = block.shape[0]
        else:
            fan_in = block.shape[1] * block.shape[2] * block.shape[3]
        std = np.sqrt(2.0 / fan_in)
        params[block.offset:block.stop] = (rng.standard_normal(block.size) * std).astype(STORAGE_DTYPE)
    return ModelState(params=params, arch=arch, init_seed=seed, epoch_tag=0)


def save_state(state: ModelState, path: Union[str, os.PathLike]) -> None:
    """Persist as .npz with the architecture JSON embedded"""
    meta = {
        "arch": state.arch.model_dump(mode="json"),
        "init_seed": state.init_seed,
        "epoch_tag": state.epoch_tag,
    }
    tmp = os.fspath(path) + ".tmp.npz"
    np.savez(tmp, params=state.params, meta=np.array(json.dumps(meta)))
    os.replace(tmp, os.fspath(path))


def load_state(path: Union[str, os.PathLike]) -> ModelState:
    if not os.path.exists(path):
        raise DatasetFormatError(f"model state not found: {path}", field="path")
    with np.load(path, allow_pickle=False) as payload:
        params = payload["params"]
        meta = json.loads(str(payload["meta"]))
    return ModelState(
        params=params,
        arch=Architecture.model_validate(meta["arch"]),
        init_seed=int(meta["init_seed"]),
        epoch_tag=int(meta["epoch_tag"]),
    )
