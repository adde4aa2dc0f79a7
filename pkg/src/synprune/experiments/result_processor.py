"""
Experiment Result Processor
"""

import os
from typing import Any, Dict, List, Union

import pandas as pd

from ..analysis.lmc import InstabilityReport
from ..pruning.record import PruneRunRecord
from ..utils.helpers import atomic_write

PathLike = Union[str, os.PathLike]


class ResultProcessor:
    """Turn run artifacts into plot-ready CSV tables"""

    @staticmethod
    def sparsity_curve(record: PruneRunRecord) -> pd.DataFrame:
        """Sparsity vs accuracy, one row per iteration"""
        frame = record.to_frame()
        return frame[["iteration", "phase", "sparsity", "test_acc", "train_loss", "data_points_used"]]

    @staticmethod
    def layer_density_table(record: PruneRunRecord) -> pd.DataFrame:
        """Per-layer density of every mask, long format"""
        rows: List[Dict[str, Any]] = []
        for entry in record.iterations:
            for layer, density in entry.mask.layer_densities().items():
                rows.append({"iteration": entry.iteration, "layer": layer, "density": density})
        return pd.DataFrame(rows, columns=["iteration", "layer", "density"])

    @staticmethod
    def instability_table(reports: Dict[int, InstabilityReport]) -> pd.DataFrame:
        """One summary row per analyzed iteration"""
        rows = []
        for iteration in sorted(reports):
            report = reports[iteration]
            rows.append({
                "iteration": iteration,
                "method_tag": report.method_tag,
                "sparsity": report.sparsity,
                "barrier_height": report.barrier_height,
                "max_barrier": report.max_barrier,
                "acc_a": report.endpoint_accs[0],
                "acc_b": report.endpoint_accs[1],
            })
        return pd.DataFrame(rows)

    @staticmethod
    def scatter_table(comparison: pd.DataFrame) -> pd.DataFrame:
        """Performance ratio vs stability ratio, marker size = compression"""
        return comparison[["sparsity", "performance_ratio", "stability_ratio", "marker_size", "degenerate"]]

    @staticmethod
    def write_csv(frame: pd.DataFrame, path: PathLike) -> str:
        path = os.fspath(path)
        atomic_write(path, frame.to_csv(index=False))
        return path

    @staticmethod
    def format_summary(values: Dict[str, Any]) -> List[str]:
        """Aligned "key: value" lines for the end-of-run log banner"""
        lines = []
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:.6g}"
            lines.append(f"   {key:20s}: {value}")
        return lines
