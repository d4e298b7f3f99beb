"""Planted-cluster multi-view data for fixtures and experiments."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ._random import substream
from .data import MultiViewDataset
from .errors import ParameterError


def planted_clusters(
    n: int = 60,
    dims: Sequence[int] = (20, 15),
    informative: Optional[Sequence[int]] = None,
    clusters: int = 3,
    separation: float = 3.0,
    noise: float = 1.0,
    seed: int = 0,
) -> MultiViewDataset:
    """Views sharing one cluster label per sample.

    In each view the first ``informative[v]`` features are a cluster centroid
    plus Gaussian noise; the remaining features are pure noise independent of
    the labels. Samples are assigned to clusters round-robin, then shuffled.

    Returns a complete dataset with labels; the planted features of view ``v``
    are ``range(informative[v])``.
    """
    dims = [int(d) for d in dims]
    if informative is None:
        informative = [min(5, d) for d in dims]
    informative = [int(h) for h in informative]
    if len(informative) != len(dims):
        raise ParameterError("informative must give one count per view")
    rng = substream(seed, "synthetic")
    labels = np.arange(n) % clusters
    rng.shuffle(labels)
    views = []
    for d, h in zip(dims, informative):
        if not 0 <= h <= d:
            raise ParameterError(f"informative count {h} out of range for a {d}-feature view")
        X = noise * rng.standard_normal((n, d))
        centroids = separation * rng.standard_normal((clusters, h))
        X[:, :h] += centroids[labels]
        views.append(X)
    return MultiViewDataset.complete(views, labels=labels, names=[f"view{v}" for v in range(len(dims))])


def bundled_dataset() -> MultiViewDataset:
    """The small two-view fixture: n=60, d=(20, 15), 3 clusters, 5 planted features per view."""
    return planted_clusters(n=60, dims=(20, 15), informative=(5, 5), clusters=3, seed=0)
