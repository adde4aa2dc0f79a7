"""
Data pipeline: datasets, IDX ingestion, blob tasks, epoch orders, containers
"""

from .container import load_dataset, read_manifest, save_dataset
from .dataset import DatasetRole, LabeledDataset, sample_per_class, split_dataset
from .idx import load_idx, write_idx
from .ordering import CompressionRatio, EpochOrder, compression_ratio, epoch_order
from .synthetic import make_blobs

__all__ = [
    "CompressionRatio",
    "DatasetRole",
    "EpochOrder",
    "LabeledDataset",
    "compression_ratio",
    "epoch_order",
    "load_dataset",
    "load_idx",
    "make_blobs",
    "read_manifest",
    "sample_per_class",
    "save_dataset",
    "split_dataset",
    "write_idx",
]
