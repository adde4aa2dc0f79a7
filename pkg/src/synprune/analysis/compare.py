"""
Performance and stability ratios of synthetic vs IMP subnetworks
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import pandas as pd

from ..data.ordering import CompressionRatio
from ..exceptions import MissingCheckpointError
from ..pruning.record import SPARSITY_TOLERANCE, PruneRunRecord
from .lmc import InstabilityReport

# Barriers below this count as zero; ratios are reported against this floor
BARRIER_FLOOR = 1e-6
RATIO_CAP = 100.0

ReportsBySparsity = Mapping[float, InstabilityReport]


@dataclass(frozen=True)
class ComparisonPoint:
    """
    One (sparsity, compression) point of the performance/stability scatter

    Attributes:
        sparsity: shared checkpoint sparsity
        performance_ratio: synthetic accuracy / IMP accuracy
        stability_ratio: synthetic barrier / IMP barrier (1 when both are ~0)
        compression: compression ratio of the synthetic set, if known
        degenerate: True when the IMP barrier is ~0 and the ratio is the capped sentinel
    """
    sparsity: float
    performance_ratio: float
    stability_ratio: float
    syn_acc: float
    imp_acc: float
    syn_barrier: float
    imp_barrier: float
    compression: Optional[CompressionRatio] = None
    degenerate: bool = False

    def row(self) -> Dict[str, object]:
        ratio = self.compression
        return {
            "sparsity": self.sparsity,
            "performance_ratio": self.performance_ratio,
            "stability_ratio": self.stability_ratio,
            "syn_acc": self.syn_acc,
            "imp_acc": self.imp_acc,
            "syn_barrier": self.syn_barrier,
            "imp_barrier": self.imp_barrier,
            "degenerate": self.degenerate,
            "compression": float(ratio) if ratio is not None else None,
            # Marker size for scatter plots
            "marker_size": float(ratio) if ratio is not None else None,
        }


def stability_ratio(syn_barrier: float, imp_barrier: float):
    """(ratio, degenerate) with the division guard applied"""
    if syn_barrier < BARRIER_FLOOR and imp_barrier < BARRIER_FLOOR:
        return 1.0, False
    if imp_barrier < BARRIER_FLOOR:
        return RATIO_CAP, True
    ratio = max(syn_barrier, BARRIER_FLOOR) / imp_barrier
    return min(ratio, RATIO_CAP), ratio > RATIO_CAP


def _report_at(reports: ReportsBySparsity, sparsity: float, label: str) -> InstabilityReport:
    for key, report in reports.items():
        if abs(key - sparsity) <= SPARSITY_TOLERANCE:
            return report
    raise MissingCheckpointError(f"no {label} instability report at sparsity {sparsity:.4f}", sorted(reports))


def compare(
    syn_record: PruneRunRecord,
    imp_record: PruneRunRecord,
    syn_reports: ReportsBySparsity,
    imp_reports: ReportsBySparsity,
    sparsity: float,
    compression: Optional[CompressionRatio] = None,
) -> ComparisonPoint:
    """
    Ratios at one sparsity checkpoint

    Raises:
        MissingCheckpointError: a record or report lacks the checkpoint (lists the nearest ones)
    """
    syn_entry = syn_record.at_sparsity(sparsity)
    imp_entry = imp_record.at_sparsity(sparsity)
    syn_barrier = _report_at(syn_reports, sparsity, "synthetic").barrier_height
    imp_barrier = _report_at(imp_reports, sparsity, "IMP").barrier_height

    if imp_entry.test_acc > 0:
        performance = syn_entry.test_acc / imp_entry.test_acc
    else:
        performance = 1.0 if syn_entry.test_acc == 0 else RATIO_CAP
    stability, degenerate = stability_ratio(syn_barrier, imp_barrier)
    return ComparisonPoint(
        sparsity=imp_entry.sparsity,
        performance_ratio=performance,
        stability_ratio=stability,
        syn_acc=syn_entry.test_acc,
        imp_acc=imp_entry.test_acc,
        syn_barrier=syn_barrier,
        imp_barrier=imp_barrier,
        compression=compression,
        degenerate=degenerate,
    )


def shared_sparsities(a: List[float], b: List[float]) -> List[float]:
    return [s for s in a if any(abs(s - t) <= SPARSITY_TOLERANCE for t in b)]


def compare_records(
    syn_record: PruneRunRecord,
    imp_record: PruneRunRecord,
    syn_reports: ReportsBySparsity,
    imp_reports: ReportsBySparsity,
    compression: Optional[CompressionRatio] = None,
) -> pd.DataFrame:
    """
    One row per checkpoint analyzed in both runs

    Raises:
        MissingCheckpointError: no shared checkpoint (both sparsity lists are listed)
    """
    shared = shared_sparsities(sorted(syn_reports), sorted(imp_reports))
    if not shared:
        raise MissingCheckpointError(
            f"no shared analyzed checkpoints; synthetic run has "
            f"{[round(s, 4) for s in sorted(syn_reports)]}, IMP run has",
            sorted(imp_reports),
        )
    rows = [
        compare(syn_record, imp_record, syn_reports, imp_reports, s, compression).row()
        for s in shared
    ]
    return pd.DataFrame(rows)
