"""
Instability analysis: LMC curves, landscape grids, Hessian diagonals, ratios
"""

from .compare import ComparisonPoint, compare, compare_records, stability_ratio
from .hessian import HessianSummary, diagonal_estimate, hessian_diag
from .landscape import LandscapeGrid, landscape_grid, plane_basis, plane_grid
from .ledger import append_row, merge_ledgers, read_ledger
from .lmc import InstabilityReport, alpha_grid, barrier_height, interpolate, lmc_study, max_barrier

__all__ = [
    "ComparisonPoint",
    "HessianSummary",
    "InstabilityReport",
    "LandscapeGrid",
    "alpha_grid",
    "append_row",
    "barrier_height",
    "compare",
    "compare_records",
    "diagonal_estimate",
    "hessian_diag",
    "interpolate",
    "landscape_grid",
    "lmc_study",
    "max_barrier",
    "merge_ledgers",
    "plane_basis",
    "plane_grid",
    "read_ledger",
    "stability_ratio",
]
