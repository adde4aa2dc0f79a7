"""
Architecture descriptors

An Architecture is an ordered list of layer specs plus the input shape and
class count. The flat parameter layout (weight then bias, layer by layer)
is derived from it.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..utils.helpers import content_hash

LayerKind = Literal["dense", "conv2d", "relu", "avgpool", "flatten"]


class LayerSpec(BaseModel):
    """Single layer"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: LayerKind
    out_features: Optional[int] = Field(None, gt=0, description="dense output width")
    out_channels: Optional[int] = Field(None, gt=0, description="conv2d filter count")
    kernel_size: int = Field(3, gt=0)
    padding: Literal["same", "valid"] = "same"
    pool_size: int = Field(2, gt=0)

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "LayerSpec":
        if self.kind == "dense" and self.out_features is None:
            raise ValueError("dense layer needs out_features")
        if self.kind == "conv2d" and self.out_channels is None:
            raise ValueError("conv2d layer needs out_channels")
        return self


@dataclass(frozen=True)
class ParamBlock:
    """Contiguous slice of the flat parameter vector"""
    name: str
    layer_index: int
    offset: int
    shape: Tuple[int, ...]
    prunable: bool

    @property
    def size(self) -> int:
        count = 1
        for dim in self.shape:
            count *= dim
        return count

    @property
    def stop(self) -> int:
        return self.offset + self.size


class Architecture(BaseModel):
    """
    Network architecture

    Supported layers: dense, conv2d (stride 1, same/valid), relu, avgpool,
    flatten. Dense layers take 1-D features; images must be flattened first.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "custom"
    input_shape: Tuple[int, ...]
    class_count: int = Field(..., gt=1)
    layers: Tuple[LayerSpec, ...]

    @model_validator(mode="after")
    def _check_output(self) -> "Architecture":
        shapes = _trace_shapes(self.input_shape, self.layers)
        if shapes[-1] != (self.class_count,):
            raise ValueError(
                f"architecture output shape {shapes[-1]} does not match class_count {self.class_count}"
            )
        return self

    def param_blocks(self) -> List[ParamBlock]:
        return list(_layout(self))

    @property
    def param_count(self) -> int:
        blocks = _layout(self)
        return blocks[-1].stop if blocks else 0

    @property
    def layer_shapes(self) -> List[Tuple[int, ...]]:
        """Activation shape after every layer (index 0 is the input)"""
        return _trace_shapes(self.input_shape, self.layers)

    def arch_hash(self) -> str:
        return content_hash(self.model_dump(mode="json"))


def _trace_shapes(input_shape: Sequence[int], layers: Sequence[LayerSpec]) -> List[Tuple[int, ...]]:
    shape = tuple(input_shape)
    shapes = [shape]
    for index, layer in enumerate(layers):
        if layer.kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"layer {index}: dense needs flat input, got {shape}")
            shape = (layer.out_features,)
        elif layer.kind == "conv2d":
            if len(shape) != 3:
                raise ValueError(f"layer {index}: conv2d needs (C, H, W) input, got {shape}")
            _, h, w = shape
            if layer.padding == "valid":
                h, w = h - layer.kernel_size + 1, w - layer.kernel_size + 1
            elif layer.kernel_size % 2 != 1:
                raise ValueError(f"layer {index}: same padding needs an odd kernel")
            if h <= 0 or w <= 0:
                raise ValueError(f"layer {index}: kernel larger than input {shape}")
            shape = (layer.out_channels, h, w)
        elif layer.kind == "avgpool":
            if len(shape) != 3:
                raise ValueError(f"layer {index}: avgpool needs (C, H, W) input, got {shape}")
            c, h, w = shape
            if h < layer.pool_size or w < layer.pool_size:
                raise ValueError(f"layer {index}: pool larger than input {shape}")
            shape = (c, h // layer.pool_size, w // layer.pool_size)
        elif layer.kind == "flatten":
            size = 1
            for dim in shape:
                size *= dim
            shape = (size,)
        shapes.append(shape)
    return shapes


@lru_cache(maxsize=128)
def _layout(arch: Architecture) -> Tuple[ParamBlock, ...]:
    shapes = _trace_shapes(arch.input_shape, arch.layers)
    blocks = []
    offset = 0
    for index, layer in enumerate(arch.layers):
        before = shapes[index]
        if layer.kind == "dense":
            weight = (before[0], layer.out_features)
            bias = (layer.out_features,)
        elif layer.kind == "conv2d":
            weight = (layer.out_channels, before[0], layer.kernel_size, layer.kernel_size)
            bias = (layer.out_channels,)
        else:
            continue
        block = ParamBlock(f"layer{index}.{layer.kind}.weight", index, offset, weight, True)
        blocks.append(block)
        offset = block.stop
        block = ParamBlock(f"layer{index}.{layer.kind}.bias", index, offset, bias, False)
        blocks.append(block)
        offset = block.stop
    return tuple(blocks)


# ========== Builders ==========

def linear(input_dim: int, class_count: int) -> Architecture:
    """Softmax regression (convex in its parameters)"""
    return Architecture(
        name=f"linear-{input_dim}",
        input_shape=(input_dim,),
        class_count=class_count,
        layers=(LayerSpec(kind="dense", out_features=class_count),),
    )


def mlp(input_dim: int, class_count: int, hidden: Sequence[int] = (256,)) -> Architecture:
    """Fully connected ReLU network; hidden=(256,) is the 2-layer MLP"""
    layers: List[LayerSpec] = []
    for width in hidden:
        layers.append(LayerSpec(kind="dense", out_features=width))
        layers.append(LayerSpec(kind="relu"))
    layers.append(LayerSpec(kind="dense", out_features=class_count))
    return Architecture(
        name="mlp-" + "x".join(str(w) for w in hidden),
        input_shape=(input_dim,),
        class_count=class_count,
        layers=tuple(layers),
    )


def convnet3(
    input_shape: Sequence[int],
    class_count: int,
    width: int = 16,
    depth: int = 3,
) -> Architecture:
    """
    ConvNet-style stack: depth x (conv3x3 same -> relu -> avgpool2), then a dense head

    Pooling is skipped once the spatial size drops below 2.
    """
    c, h, w = input_shape
    layers: List[LayerSpec] = []
    for _ in range(depth):
        layers.append(LayerSpec(kind="conv2d", out_channels=width, kernel_size=3, padding="same"))
        layers.append(LayerSpec(kind="relu"))
        if h >= 2 and w >= 2:
            layers.append(LayerSpec(kind="avgpool", pool_size=2))
            h, w = h // 2, w // 2
    layers.append(LayerSpec(kind="flatten"))
    layers.append(LayerSpec(kind="dense", out_features=class_count))
    return Architecture(
        name=f"convnet{depth}-{width}",
        input_shape=tuple(input_shape),
        class_count=class_count,
        layers=tuple(layers),
    )
