"""Cluster-tendency assessment (VAT, iVAT, sco-iVAT) and ride-hailing pickup analytics."""

from tendency.matrix import (
    MatrixFormatError,
    check_dissimilarity,
    check_performance,
    pairwise_dissimilarity,
    read_labels,
    read_matrix,
    write_labels,
    write_matrix,
)
from tendency.vat import (
    VatOrdering,
    cut_clusters,
    ivat_transform,
    minimax_oracle,
    suggest_k,
    vat_reorder,
)
from tendency.mmrs import MmrsSample, maximin_select, mmrs_sample
from tendency.coclust import CoClusterResult, extend_labels, extract_coclusters, sco_ivat

__version__ = "0.1.0"
