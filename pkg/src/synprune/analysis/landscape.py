"""
Two-dimensional loss-landscape grids through two trained endpoints
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..autodiff.tensor import COMPUTE_DTYPE
from ..core import DatasetObjective, Objective
from ..data.dataset import LabeledDataset
from ..exceptions import DegeneratePairError, InvalidParameterError
from ..models.state import ModelState
from ..pruning.mask import SparsityMask
from ..utils.helpers import STREAM_DIRECTION, atomic_write, content_hash, keyed_rng, worker_count

logger = logging.getLogger(__name__)

MIN_DISTANCE = 1e-9


@dataclass
class LandscapeGrid:
    """
    Losses on the plane origin + a*u + b*v

    Attributes:
        origin: state at (0, 0), the first trained endpoint
        basis_u: unit vector towards the second endpoint
        basis_v: unit vector orthogonal to basis_u, zero off the mask support
        a_coords / b_coords: axis coordinates (grid_n each)
        losses: losses[i, j] at (a_coords[i], b_coords[j])
        endpoint_coords: grid coordinates of the two endpoints
        endpoint_losses: losses evaluated exactly at the two endpoints
        evaluations: number of grid loss evaluations
    """
    basis_u: np.ndarray
    basis_v: np.ndarray
    a_coords: np.ndarray
    b_coords: np.ndarray
    losses: np.ndarray
    endpoint_coords: Tuple[Tuple[float, float], Tuple[float, float]]
    endpoint_losses: Tuple[float, float]
    evaluations: int
    origin: Optional[ModelState] = field(default=None, repr=False)

    @property
    def grid_n(self) -> int:
        return int(self.a_coords.size)

    def segment_losses(self, alphas: np.ndarray) -> np.ndarray:
        """Bilinear read-out of the grid along the segment between the endpoints"""
        (a0, _), (a1, _) = self.endpoint_coords
        points_a = a0 + np.asarray(alphas) * (a1 - a0)
        return np.array([self._bilinear(a, 0.0) for a in points_a])

    def _bilinear(self, a: float, b: float) -> float:
        i = int(np.clip(np.searchsorted(self.a_coords, a) - 1, 0, self.grid_n - 2))
        j = int(np.clip(np.searchsorted(self.b_coords, b) - 1, 0, self.b_coords.size - 2))
        ta = (a - self.a_coords[i]) / (self.a_coords[i + 1] - self.a_coords[i])
        tb = (b - self.b_coords[j]) / (self.b_coords[j + 1] - self.b_coords[j])
        corner = self.losses[i:i + 2, j:j + 2]
        return float(
            corner[0, 0] * (1 - ta) * (1 - tb) + corner[1, 0] * ta * (1 - tb)
            + corner[0, 1] * (1 - ta) * tb + corner[1, 1] * ta * tb
        )

    def to_frame(self) -> pd.DataFrame:
        """Matrix CSV: one row per a coordinate, one column per b coordinate"""
        frame = pd.DataFrame(self.losses, columns=[f"{b:.8g}" for b in self.b_coords])
        frame.insert(0, "a", self.a_coords)
        return frame

    def header(self) -> Dict[str, object]:
        return {
            "grid_n": self.grid_n,
            "evaluations": self.evaluations,
            "basis_u_hash": content_hash(self.basis_u),
            "basis_v_hash": content_hash(self.basis_v),
            "endpoint_coords": [list(c) for c in self.endpoint_coords],
            "endpoint_losses": list(self.endpoint_losses),
            "a_range": [float(self.a_coords[0]), float(self.a_coords[-1])],
            "b_range": [float(self.b_coords[0]), float(self.b_coords[-1])],
        }

    def save(self, directory: Union[str, os.PathLike], stem: str) -> Tuple[str, str]:
        directory = os.fspath(directory)
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        atomic_write(csv_path, self.to_frame().to_csv(index=False))
        atomic_write(json_path, json.dumps(self.header(), indent=2, sort_keys=True))
        return csv_path, json_path


def plane_basis(
    theta_a: np.ndarray,
    theta_b: np.ndarray,
    support: np.ndarray,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    u along b - a; v a seeded random direction, zeroed off support, orthonormalized against u

    Returns:
        (u, v, ||b - a||)

    Raises:
        DegeneratePairError: endpoints closer than 1e-9, or no direction left for v
    """
    delta = np.asarray(theta_b, dtype=COMPUTE_DTYPE) - np.asarray(theta_a, dtype=COMPUTE_DTYPE)
    distance = float(np.linalg.norm(delta))
    if distance < MIN_DISTANCE:
        raise DegeneratePairError(f"endpoints are {distance:.3g} apart; need at least {MIN_DISTANCE}")
    u = delta / distance

    v = keyed_rng(seed, STREAM_DIRECTION).standard_normal(u.size)
    v[~support] = 0.0
    # Two Gram-Schmidt passes keep <u, v> at rounding level
    for _ in range(2):
        v -= (v @ u) * u
        norm = float(np.linalg.norm(v))
        if norm < MIN_DISTANCE:
            raise DegeneratePairError("support leaves no direction orthogonal to b - a")
        v /= norm
    return u, v, distance


def plane_grid(
    theta_a: np.ndarray,
    theta_b: np.ndarray,
    loss_fn: Callable[[np.ndarray], float],
    grid_n: int = 100,
    margin: float = 0.25,
    support: Optional[np.ndarray] = None,
    seed: int = 0,
    workers: Optional[int] = None,
) -> LandscapeGrid:
    """
    Loss grid on the plane through theta_a and theta_b

    The a axis spans [-margin, 1 + margin] * ||b - a|| (the endpoints sit at
    a = 0 and a = ||b - a||, b = 0); the b axis has half-width
    (0.5 + margin) * ||b - a|| and always holds b = 0 as a node, shifted by
    half a step towards +b when grid_n is even. Rows are evaluated in
    parallel and assembled in index order.
    """
    if grid_n < 2:
        raise InvalidParameterError(f"grid_n must be >= 2, got {grid_n}")
    if margin < 0:
        raise InvalidParameterError(f"margin must be >= 0, got {margin}")
    theta_a = np.asarray(theta_a, dtype=COMPUTE_DTYPE)
    theta_b = np.asarray(theta_b, dtype=COMPUTE_DTYPE)
    if support is None:
        support = (theta_a != 0) | (theta_b != 0)
    u, v, distance = plane_basis(theta_a, theta_b, np.asarray(support, dtype=bool), seed)

    a_coords = distance * np.linspace(-margin, 1.0 + margin, grid_n)
    half = distance * (0.5 + margin)
    # node (grid_n - 1) // 2 is exactly b = 0, the interpolation line
    b_coords = (np.arange(grid_n) - (grid_n - 1) // 2) * (2.0 * half / (grid_n - 1))

    def row(i: int) -> np.ndarray:
        base = theta_a + a_coords[i] * u
        return np.array([loss_fn(base + b * v) for b in b_coords])

    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(grid_n)))
    else:
        rows = [row(i) for i in range(grid_n)]
    losses = np.vstack(rows)
    evaluations = grid_n * grid_n
    logger.info(f"Landscape grid {grid_n}x{grid_n}: {evaluations} grid + 2 endpoint loss evaluations")

    return LandscapeGrid(
        basis_u=u,
        basis_v=v,
        a_coords=a_coords,
        b_coords=b_coords,
        losses=losses,
        endpoint_coords=((0.0, 0.0), (distance, 0.0)),
        endpoint_losses=(float(loss_fn(theta_a)), float(loss_fn(theta_b))),
        evaluations=evaluations,
    )


def landscape_grid(
    trained_a: ModelState,
    trained_b: ModelState,
    real_data: LabeledDataset,
    grid_n: int = 100,
    margin: float = 0.25,
    mask: Optional[SparsityMask] = None,
    seed: int = 0,
    objective: Optional[Objective] = None,
    batch_size: int = 256,
    workers: Optional[int] = None,
) -> LandscapeGrid:
    """
    Full-train-set loss landscape on the plane through two trained states

    Args:
        trained_a / trained_b: endpoints sharing an architecture and mask support
        real_data: training set the loss is evaluated on
        grid_n: points per axis (grid_n ** 2 evaluations)
        margin: extension beyond the endpoints, in units of ||b - a||
        mask: support for the second direction, defaults to the endpoints' nonzeros
        seed: direction seed
        objective: overrides the dataset loss
    """
    trained_a.check_compatible(trained_b)
    if objective is None:
        objective = DatasetObjective(trained_a.arch, real_data.features, real_data.labels, batch_size=batch_size)
    support = mask.bits if mask is not None else None
    grid = plane_grid(trained_a.params, trained_b.params, objective.loss, grid_n=grid_n, margin=margin,
                      support=support, seed=seed, workers=workers)
    grid.origin = trained_a
    return grid
