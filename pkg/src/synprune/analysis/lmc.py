"""
Linear mode connectivity: interpolation curves and barrier heights
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..autodiff.tensor import COMPUTE_DTYPE, STORAGE_DTYPE
from ..core import DatasetObjective
from ..data.dataset import LabeledDataset
from ..exceptions import InvalidParameterError, MissingArtifactError, NumericFailureError
from ..models.state import ModelState
from ..pruning.mask import SparsityMask
from ..training import TrainRecipe, evaluate, train
from ..utils.helpers import atomic_write, worker_count

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_STEPS = 21
REQUIRED_ALPHAS = (0.0, 0.5, 1.0)


def interpolate(a: ModelState, b: ModelState, alpha: float) -> ModelState:
    """
    (1 - alpha) * a + alpha * b, computed in float64

    Raises:
        ArchitectureMismatchError: a and b differ in architecture
    """
    a.check_compatible(b)
    theta = interpolate_params(a.params, b.params, alpha)
    return ModelState(theta.astype(STORAGE_DTYPE), a.arch, a.init_seed, a.epoch_tag)


def interpolate_params(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    return (1.0 - alpha) * np.asarray(a, dtype=COMPUTE_DTYPE) + alpha * np.asarray(b, dtype=COMPUTE_DTYPE)


def alpha_grid(steps: int = DEFAULT_ALPHA_STEPS) -> np.ndarray:
    """steps evenly spaced points on [0, 1], plus 0.5 when steps is even"""
    if steps < 3:
        raise InvalidParameterError(f"alpha_steps must be >= 3, got {steps}")
    return np.union1d(np.linspace(0.0, 1.0, steps), [0.5])


def _loss_at(losses: np.ndarray, alphas: np.ndarray, alpha: float) -> float:
    hits = np.flatnonzero(np.isclose(alphas, alpha, rtol=0.0, atol=1e-12))
    if hits.size == 0:
        raise InvalidParameterError(f"alpha grid lacks the required point {alpha}")
    return float(losses[hits[0]])


def barrier_height(losses: Sequence[float], alphas: Sequence[float]) -> float:
    """
    loss(0.5) - mean(loss(0), loss(1)), floored at 0

    Examples:
        >>> barrier_height([0.1, 0.6, 0.1], [0.0, 0.5, 1.0])
        0.5
    """
    losses = np.asarray(losses, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    if losses.shape != alphas.shape:
        raise InvalidParameterError("losses and alphas differ in length")
    start, middle, end = (_loss_at(losses, alphas, a) for a in REQUIRED_ALPHAS)
    return max(0.0, middle - 0.5 * (start + end))


def max_barrier(losses: Sequence[float], alphas: Sequence[float]) -> float:
    """Largest excess of the curve over the straight line between its endpoint losses"""
    losses = np.asarray(losses, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    start, end = _loss_at(losses, alphas, 0.0), _loss_at(losses, alphas, 1.0)
    excess = losses - ((1.0 - alphas) * start + alphas * end)
    return max(0.0, float(excess.max()))


@dataclass
class InstabilityReport:
    """
    Linear-interpolation curve between two trained branches

    Attributes:
        alphas: strictly increasing grid containing 0, 0.5 and 1
        losses: full-train-set loss at each alpha
        endpoint_accs: test accuracies of the two branches
        barrier_height: midpoint barrier, floored at 0
        sparsity: prunable sparsity of the shared mask
        method_tag: "dense", "imp" or "synthetic"
        max_barrier: largest excess over the endpoint line
        order_seeds: data-order seeds of the two branches
        branches: the two trained states (not serialized)
    """
    alphas: np.ndarray
    losses: np.ndarray
    endpoint_accs: Tuple[float, float]
    barrier_height: float
    sparsity: float
    method_tag: str
    max_barrier: float = 0.0
    order_seeds: Tuple[int, int] = (0, 0)
    branches: Optional[Tuple[ModelState, ModelState]] = field(default=None, repr=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if np.any(np.diff(self.alphas) <= 0):
            raise InvalidParameterError("alphas must be strictly increasing")
        for alpha in REQUIRED_ALPHAS:
            _loss_at(self.losses, self.alphas, alpha)
        if not np.isfinite(self.losses).all():
            raise NumericFailureError("non-finite loss on the interpolation path")
        if self.method_tag not in ("dense", "imp", "synthetic"):
            raise InvalidParameterError(f"unknown method tag {self.method_tag!r}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"alpha": self.alphas, "loss": self.losses})

    def summary(self) -> Dict[str, object]:
        return {
            "method_tag": self.method_tag,
            "sparsity": self.sparsity,
            "barrier_height": self.barrier_height,
            "max_barrier": self.max_barrier,
            "endpoint_accs": list(self.endpoint_accs),
            "endpoint_losses": [float(self.losses[0]), float(self.losses[-1])],
            "order_seeds": list(self.order_seeds),
            "alpha_count": int(self.alphas.size),
        }

    def save(self, directory: Union[str, os.PathLike], stem: str) -> Tuple[str, str]:
        """Write <stem>.csv (alpha, loss) and <stem>.json (summary)"""
        directory = os.fspath(directory)
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        atomic_write(csv_path, self.to_frame().to_csv(index=False))
        atomic_write(json_path, json.dumps(self.summary(), indent=2, sort_keys=True))
        return csv_path, json_path

    @classmethod
    def load(cls, directory: Union[str, os.PathLike], stem: str) -> "InstabilityReport":
        """Rebuild a report written by save (branches are not restored)"""
        directory = os.fspath(directory)
        json_path = os.path.join(directory, f"{stem}.json")
        csv_path = os.path.join(directory, f"{stem}.csv")
        if not (os.path.exists(json_path) and os.path.exists(csv_path)):
            raise MissingArtifactError(f"no instability report {stem} in {directory}; run `synprune analyze` first")
        with open(json_path, "r", encoding="utf-8") as handle:
            summary = json.load(handle)
        curve = pd.read_csv(csv_path)
        return cls(
            alphas=curve["alpha"].to_numpy(),
            losses=curve["loss"].to_numpy(),
            endpoint_accs=tuple(summary["endpoint_accs"]),
            barrier_height=float(summary["barrier_height"]),
            sparsity=float(summary["sparsity"]),
            method_tag=summary["method_tag"],
            max_barrier=float(summary["max_barrier"]),
            order_seeds=tuple(summary["order_seeds"]),
        )


def path_losses(
    theta_a: np.ndarray,
    theta_b: np.ndarray,
    alphas: np.ndarray,
    loss_fn: Callable[[np.ndarray], float],
    workers: Optional[int] = None,
) -> np.ndarray:
    """Loss at every alpha; evaluated in parallel, returned in grid order"""
    workers = worker_count() if workers is None else max(1, workers)
    points = [interpolate_params(theta_a, theta_b, alpha) for alpha in alphas]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(loss_fn, points))
    else:
        values = [loss_fn(point) for point in points]
    return np.asarray(values, dtype=np.float64)


def train_branches(
    init: ModelState,
    mask: Optional[SparsityMask],
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    order_seed_1: int,
    order_seed_2: int,
    start_epoch: int = 0,
) -> Tuple[ModelState, ModelState]:
    """
    Two copies of init * mask trained on real data, differing only in data order

    start_epoch is the epoch init was taken at; each branch trains the
    remaining epochs, as the pruning pipeline does after rewinding to epoch k.
    """
    states = []
    for branch, seed in (("a", order_seed_1), ("b", order_seed_2)):
        try:
            states.append(train(init, mask, real_data, recipe, order_seed=seed, start_epoch=start_epoch).state)
        except NumericFailureError as e:
            raise e.with_context(branch=branch, seed=seed) from e
    return states[0], states[1]


def lmc_study(
    init: ModelState,
    mask: Optional[SparsityMask],
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    order_seed_1: int,
    order_seed_2: int,
    alpha_steps: int = DEFAULT_ALPHA_STEPS,
    test_data: Optional[LabeledDataset] = None,
    method_tag: str = "dense",
    allow_equal_seeds: bool = False,
    batch_size: int = 256,
    workers: Optional[int] = None,
    start_epoch: int = 0,
) -> InstabilityReport:
    """
    Instability of init * mask to SGD data order

    Trains two branches that differ only in order seed, evaluates the
    full-train-set loss along the straight line between them and reports the
    barrier height.

    Args:
        init: shared starting state (the rewind reference)
        mask: shared mask, None for dense
        real_data: training set; the loss is measured on it in fixed batch order
        recipe: training algorithm
        order_seed_1 / order_seed_2: data-order seeds of the branches
        alpha_steps: evenly spaced grid size (>= 3; 0.5 is always included)
        test_data: set for endpoint accuracies, defaults to real_data
        method_tag: "dense", "imp" or "synthetic"
        allow_equal_seeds: permit the equal-seed control run
        batch_size: evaluation batch size
        workers: parallel grid evaluation, defaults to SYNPRUNE_WORKERS
        start_epoch: epoch init was rewound to (branches train the remaining epochs)

    Raises:
        InvalidParameterError: equal order seeds without allow_equal_seeds
        NumericFailureError: a branch diverged (carries the branch tag)
    """
    if order_seed_1 == order_seed_2 and not allow_equal_seeds:
        raise InvalidParameterError("order seeds must differ (pass allow_equal_seeds for the control run)")
    alphas = alpha_grid(alpha_steps)
    branch_a, branch_b = train_branches(init, mask, real_data, recipe, order_seed_1, order_seed_2,
                                        start_epoch=start_epoch)

    objective = DatasetObjective(init.arch, real_data.features, real_data.labels, batch_size=batch_size)
    losses = path_losses(branch_a.params, branch_b.params, alphas, objective.loss, workers=workers)
    evaluation_set = test_data if test_data is not None else real_data
    accs = (evaluate(branch_a, evaluation_set).accuracy, evaluate(branch_b, evaluation_set).accuracy)

    report = InstabilityReport(
        alphas=alphas,
        losses=losses,
        endpoint_accs=accs,
        barrier_height=barrier_height(losses, alphas),
        sparsity=mask.sparsity if mask is not None else 0.0,
        method_tag=method_tag,
        max_barrier=max_barrier(losses, alphas),
        order_seeds=(order_seed_1, order_seed_2),
        branches=(branch_a, branch_b),
    )
    logger.info(f"LMC [{method_tag}] sparsity {report.sparsity:.4f}: barrier {report.barrier_height:.6f}, "
                f"endpoint accs {accs[0]:.4f} / {accs[1]:.4f}")
    return report
