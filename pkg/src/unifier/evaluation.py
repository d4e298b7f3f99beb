"""Clustering-based assessment of selected features (ACC and NMI)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from ._random import substream
from .data import MultiViewDataset
from .errors import DataError, ParameterError


@dataclass(frozen=True)
class ClusteringOutcome:
    labels: np.ndarray
    acc: float
    nmi: float
    restarts: int

    def to_dict(self) -> dict:
        return {"acc": self.acc, "nmi": self.nmi, "restarts": self.restarts}


def kmeans(X, c: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Best-of-``restarts`` Lloyd k-means with k-means++ seeding."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 2 <= c <= n:
        raise ParameterError(f"cluster count must satisfy 2 <= c <= n = {n}, got {c}")
    if restarts < 1:
        raise ParameterError(f"restarts must be at least 1, got {restarts}")
    rs = int(substream(seed, "kmeans").integers(2**31 - 1))
    km = KMeans(n_clusters=c, init="k-means++", n_init=restarts, random_state=rs, tol=1e-10, max_iter=500)
    return km.fit_predict(X).astype(np.int64)


def _contingency(pred, truth) -> np.ndarray:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size != truth.size:
        raise ParameterError(f"label vectors differ in length ({pred.size} vs {truth.size})")
    if pred.size == 0:
        raise ParameterError("empty label vectors")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    C = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(C, (p, t), 1)
    return C


def accuracy(pred, truth) -> float:
    """Fraction of agreeing samples under the best one-to-one cluster/class matching."""
    C = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return float(C[rows, cols].sum() / C.sum())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information normalised by the geometric mean of the entropies."""
    C = _contingency(pred, truth).astype(float)
    N = C.sum()
    hp = _entropy(C.sum(axis=1))
    ht = _entropy(C.sum(axis=0))
    if hp == 0.0 or ht == 0.0:
        return 1.0 if hp == ht else 0.0
    Pij = C / N
    outer = np.outer(C.sum(axis=1), C.sum(axis=0)) / N**2
    nz = Pij > 0
    mi = float((Pij[nz] * np.log(Pij[nz] / outer[nz])).sum())
    return float(min(max(mi / math.sqrt(hp * ht), 0.0), 1.0))


def _zscore(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def selected_matrix(dataset: MultiViewDataset, result, fraction: Optional[float] = None) -> np.ndarray:
    """Concatenated selected columns of the completed views, z-scored per column."""
    from .solver import rank_features  # local: solver imports data only

    completed = result.completed_views(dataset)
    blocks = []
    for v, X in enumerate(completed):
        if fraction is None:
            cols = result.selected[v]
        else:
            cols = rank_features(result.W[v], fraction)
        blocks.append(X[:, cols])
    return _zscore(np.hstack(blocks))


def evaluate_selection(
    dataset: MultiViewDataset,
    result,
    c: Optional[int] = None,
    restarts: int = 30,
    seed: int = 0,
    fraction: Optional[float] = None,
) -> ClusteringOutcome:
    """Cluster the selected features of the completed data and score against labels.

    ``c`` defaults to the number of distinct labels; ``fraction`` overrides the
    run's own selection fraction.
    """
    if dataset.labels is None:
        raise DataError("evaluation needs class labels; add a 'labels' file to the manifest")
    c = int(np.unique(dataset.labels).size) if c is None else int(c)
    X = selected_matrix(dataset, result, fraction)
    pred = kmeans(X, c, restarts, seed)
    return ClusteringOutcome(pred, accuracy(pred, dataset.labels), nmi(pred, dataset.labels), restarts)
