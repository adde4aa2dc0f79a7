"""
Computation tape and the reverse-mode sweep
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import UsageError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class TapeOp:
    """One recorded primitive: its inputs, output and vector-Jacobian product"""
    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[Tensor], Sequence[Optional[Tensor]]]


class ComputationTape:
    """
    Ordered record of primitive ops

    Ops are appended in creation order, so every op's inputs precede it. A
    backward sweep walks the list once in reverse. Gradients computed with
    ``create_graph=True`` are themselves recorded on the same tape, which is
    what lets the distiller differentiate through unrolled SGD.
    """

    def __init__(self):
        self.ops: List[TapeOp] = []
        self.leaves: List[Tensor] = []
        self.recording = True
        self.consumed = False
        # Set by the network forward pass
        self.output: Optional[Tensor] = None
        self.params: Optional[Tensor] = None

    def watch(self, values, name: Optional[str] = None) -> Tensor:
        """Create a leaf tensor whose gradient can be requested"""
        if self.consumed:
            raise UsageError("cannot watch new leaves on a consumed tape")
        leaf = Tensor(values, tape=self, requires_grad=True, name=name)
        self.leaves.append(leaf)
        return leaf

    def record(self, op: TapeOp) -> None:
        self.ops.append(op)

    @contextmanager
    def paused(self) -> Iterator["ComputationTape"]:
        previous = self.recording
        self.recording = False
        try:
            yield self
        finally:
            self.recording = previous

    def __len__(self) -> int:
        return len(self.ops)


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    create_graph: bool = False,
    retain_tape: Optional[bool] = None,
) -> List[Tensor]:
    """
    Gradients of a scalar output with respect to tape tensors

    Args:
        output: scalar tensor produced on a tape
        inputs: tensors to differentiate against (leaves or intermediates)
        create_graph: record the backward ops so the result is differentiable
        retain_tape: keep the tape usable afterwards (defaults to create_graph)

    Returns:
        one gradient tensor per input, zeros for inputs the output ignores

    Raises:
        UsageError: tape already consumed, or output not a scalar
    """
    if output.size != 1:
        raise UsageError(f"grad needs a scalar output, got shape {output.shape}")
    tape = output.tape
    if tape is None:
        return [Tensor(np.zeros_like(x.values)) for x in inputs]
    if tape.consumed:
        raise UsageError("tape already consumed; run forward again")

    retain = create_graph if retain_tape is None else retain_tape
    wanted = {id(x) for x in inputs}
    snapshot = list(tape.ops)

    from .ops import add

    previous = tape.recording
    tape.recording = create_graph
    try:
        grads = {id(output): Tensor(np.ones_like(output.values))}
        for op in reversed(snapshot):
            key = id(op.output)
            upstream = grads.get(key) if key in wanted else grads.pop(key, None)
            if upstream is None:
                continue
            for node, contribution in zip(op.inputs, op.backward(upstream)):
                if contribution is None or not node.requires_grad:
                    continue
                node_key = id(node)
                if node_key in grads:
                    grads[node_key] = add(grads[node_key], contribution)
                else:
                    grads[node_key] = contribution
    finally:
        tape.recording = previous

    if not retain:
        tape.consumed = True

    result = []
    for x in inputs:
        g = grads.get(id(x))
        result.append(g if g is not None else Tensor(np.zeros_like(x.values)))
    return result


def backward(tape: ComputationTape) -> np.ndarray:
    """
    Gradient of the tape's recorded loss with respect to its parameter leaf

    Args:
        tape: tape produced by the network forward pass

    Returns:
        flat float64 gradient, same length as the parameter vector
    """
    if tape.consumed:
        raise UsageError("tape already consumed; run forward again")
    if tape.output is None or tape.params is None:
        raise UsageError("tape has no recorded loss / parameter leaf")
    (g,) = grad(tape.output, [tape.params])
    return g.values.reshape(-1).copy()
