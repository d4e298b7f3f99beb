"""Adaptive k-nearest-neighbour similarity graphs and their Laplacians.

Row ``i`` of a similarity matrix is the neighbour distribution of sample ``i``:
nonnegative, zero on the diagonal, summing to one, with ``k`` nonzeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SimilarityGraph:
    S: np.ndarray
    k: int
    xi: np.ndarray  # per-row regularisation weights

    @property
    def n(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class GraphLaplacian:
    L: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return np.diag(self.L).copy()


def half_sq_distances(Z: np.ndarray) -> np.ndarray:
    """``B[i, j] = 0.5 * ||z_i - z_j||^2``, clipped at zero, exact zero diagonal."""
    Z = np.asarray(Z, dtype=float)
    sq = np.einsum("ij,ij->i", Z, Z)
    B = 0.5 * (sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T)
    np.maximum(B, 0.0, out=B)
    np.fill_diagonal(B, 0.0)
    return B


def similarity_from_distances(B: np.ndarray, k: int) -> SimilarityGraph:
    """Closed-form k-sparse simplex rows for a matrix of half squared distances.

    For each row, with the off-diagonal distances sorted ascending as
    ``b_(1) <= ... <= b_(k+1)``::

        s_ij = (b_(k+1) - b_ij) / (k * b_(k+1) - sum_{t<=k} b_(t))
        xi_i = (k * b_(k+1) - sum_{t<=k} b_(t)) / 2

    on the ``k`` nearest, zero elsewhere. Ties go to the lower sample index.
    Rows with a zero denominator (or ``k = n - 1``, where no ``(k+1)``-th
    neighbour exists) get uniform weights ``1/k`` and ``xi_i = 0``.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    k = int(k)
    if not 1 <= k <= n - 1:
        raise ParameterError(f"neighbour count k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
    D = B.copy()
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    nearest = order[:, :k]
    b_near = D[rows, nearest]
    S = np.zeros((n, n))
    xi = np.zeros(n)
    if k < n - 1:
        b_next = D[np.arange(n), order[:, k]]
        denom = k * b_next - b_near.sum(axis=1)
        scale = np.maximum(np.abs(b_next), np.abs(b_near).max(axis=1))
        ok = denom > 1e-14 * np.maximum(scale, np.finfo(float).tiny) * k
        W = np.empty_like(b_near)
        W[ok] = (b_next[ok, None] - b_near[ok]) / denom[ok, None]
        W[~ok] = 1.0 / k
        xi[ok] = denom[ok] / 2.0
    else:
        W = np.full((n, k), 1.0 / k)
    S[rows, nearest] = W
    return SimilarityGraph(S, k, xi)


def initial_knn_graph(X: np.ndarray, k: int) -> SimilarityGraph:
    """Initial adaptive graph built from raw sample distances."""
    return similarity_from_distances(half_sq_distances(X), k)


def update_similarity(Xt: np.ndarray, W: np.ndarray, k: int) -> SimilarityGraph:
    """Re-learn the graph from distances between projected samples ``Xt @ W``."""
    return similarity_from_distances(half_sq_distances(np.asarray(Xt) @ np.asarray(W)), k)


def row_objective(B: np.ndarray, S: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Per-row ``sum_j b_ij s_ij + xi_i * ||s_i||^2``."""
    return np.einsum("ij,ij->i", B, S) + xi * np.einsum("ij,ij->i", S, S)


def laplacian(graph: SimilarityGraph) -> GraphLaplacian:
    """``L = G - (S + S^T)/2`` with ``G`` the degree matrix of the symmetrised graph."""
    S = np.asarray(graph.S if isinstance(graph, SimilarityGraph) else graph, dtype=float)
    Sb = 0.5 * (S + S.T)
    L = np.diag(Sb.sum(axis=1)) - Sb
    return GraphLaplacian(L)
