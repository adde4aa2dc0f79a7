"""
Hessian-diagonal estimates summarized over surviving coordinates
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional

import numpy as np

from ..autodiff.hvp import hvp_at
from ..autodiff.tensor import COMPUTE_DTYPE
from ..core import DatasetObjective, Objective
from ..data.dataset import LabeledDataset
from ..exceptions import ConfigError, InvalidParameterError
from ..models.state import ModelState
from ..pruning.mask import SparsityMask
from ..utils.helpers import STREAM_PROBE, keyed_rng, worker_count

logger = logging.getLogger(__name__)

Estimator = Literal["exact-tiny", "hutchinson"]
EXACT_PARAM_LIMIT = 5000


@dataclass
class HessianSummary:
    """Statistics of the estimated Hessian diagonal over surviving coordinates"""
    min: float
    max: float
    mean: float
    std: float
    mean_abs: float
    estimator: str
    probe_count: int
    coordinates: int
    diagonal: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_diagonal(cls, diagonal: np.ndarray, estimator: str, probe_count: int) -> "HessianSummary":
        if diagonal.size == 0:
            raise InvalidParameterError("no surviving coordinates to summarize")
        return cls(
            min=float(diagonal.min()),
            max=float(diagonal.max()),
            mean=float(diagonal.mean()),
            std=float(diagonal.std()),
            mean_abs=float(np.abs(diagonal).mean()),
            estimator=estimator,
            probe_count=probe_count,
            coordinates=int(diagonal.size),
            diagonal=diagonal,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "std": self.std,
            "mean_abs": self.mean_abs,
            "estimator": self.estimator,
            "probe_count": self.probe_count,
            "coordinates": self.coordinates,
        }


def diagonal_estimate(
    objective: Objective,
    theta: np.ndarray,
    support: Optional[np.ndarray] = None,
    estimator: Estimator = "hutchinson",
    probe_count: int = 100,
    seed: int = 0,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Hessian diagonal at theta, restricted to support (returned over support only)

    exact-tiny pushes every surviving basis vector through an HVP. hutchinson
    averages v * Hv over Rademacher probes v that are zero off support.
    Probe results are reduced in probe order.
    """
    theta = np.asarray(theta, dtype=COMPUTE_DTYPE)
    size = theta.size
    support = np.ones(size, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    index = np.flatnonzero(support)
    workers = worker_count() if workers is None else max(1, workers)

    if estimator == "exact-tiny":
        if size > EXACT_PARAM_LIMIT:
            raise ConfigError(
                f"exact-tiny needs at most {EXACT_PARAM_LIMIT} parameters, model has {size}; "
                f"use estimator 'hutchinson'",
                field="analysis.hessian.estimator",
            )

        def column(i: int) -> float:
            basis = np.zeros(size)
            basis[i] = 1.0
            return float(hvp_at(objective, theta, basis)[i])

        def finish(values):
            return np.asarray(values, dtype=COMPUTE_DTYPE)

        tasks, fn = index, column
    elif estimator == "hutchinson":
        if probe_count < 1:
            raise ConfigError(f"probe_count must be >= 1, got {probe_count}", field="analysis.hessian.probe_count")

        def probe(p: int) -> np.ndarray:
            v = keyed_rng(seed, STREAM_PROBE, p).choice([-1.0, 1.0], size=size)
            v[~support] = 0.0
            return (v * hvp_at(objective, theta, v))[index]

        def finish(values):
            total = np.zeros(index.size, dtype=COMPUTE_DTYPE)
            for value in values:
                total += value
            return total / probe_count

        tasks, fn = range(probe_count), probe
    else:
        raise ConfigError(f"unknown estimator {estimator!r}", field="analysis.hessian.estimator")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(fn, tasks))
    else:
        values = [fn(task) for task in tasks]
    return finish(values)


def hessian_diag(
    state: ModelState,
    mask: Optional[SparsityMask],
    real_data: LabeledDataset,
    estimator: Estimator = "hutchinson",
    probe_count: int = 100,
    batch_size: int = 256,
    seed: int = 0,
    workers: Optional[int] = None,
) -> HessianSummary:
    """
    Summary of the train-loss Hessian diagonal over the surviving coordinates of mask

    The loss is the full real-data mean cross-entropy, accumulated over
    batches of batch_size in index order.

    Raises:
        ConfigError: exact-tiny on more than 5000 parameters
        NumericFailureError: an HVP produced NaN/Inf
    """
    support = mask.bits if mask is not None else None
    objective = DatasetObjective(state.arch, real_data.features, real_data.labels, batch_size=batch_size)
    diagonal = diagonal_estimate(objective, state.params, support, estimator, probe_count, seed, workers)
    probes = probe_count if estimator == "hutchinson" else int(diagonal.size)
    summary = HessianSummary.from_diagonal(diagonal, estimator, probes)
    logger.info(f"Hessian diagonal ({estimator}, {probes} probes): mean_abs {summary.mean_abs:.6g}, "
                f"range [{summary.min:.4g}, {summary.max:.4g}]")
    return summary
