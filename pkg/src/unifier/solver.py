"""Alternating optimisation for joint view imputation and feature selection.

Per view ``v`` the solver minimises::

    alpha * sum_i (e_i * ||x_i - x_i W||^2 + gamma * (sqrt(e_i) - 1)^2)
    + 1/2 * sum_ij ||x_i W - x_j W||^2 * s_ij + sum_i xi_i * ||s_i||^2
    + lambda * ||W||_{2,1}

over the feature self-representation ``W``, the missing rows of the completed
view ``X``, the similarity graph ``S`` and the sample weights ``e``. One outer
iteration updates, in order: ``W``, the reweighting diagonal ``D``, the missing
rows, ``S`` and ``e``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from . import graph as _graph
from .data import MaskSpec, MultiViewDataset, assemble_view, mean_initialize_missing, standardize
from .errors import MonotonicityError, NumericalError, ParameterError
from .sylvester import SylvesterSystem, default_ridge, solve_cg

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_imputation", "no_sample_weights")
MONOTONE_SLACK = 1e-9
STEP_NAMES = {3: "W", 4: "D", 5: "missing-block", 6: "similarity", 7: "sample-weight"}


@dataclass(frozen=True)
class SylvesterConfig:
    tol: float = 1e-10
    max_iter: int = 1000
    ridge: Optional[float] = None  # None -> 1e-8 * ||F|| / (m * d)


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the objective and of the outer loop.

    ``alpha`` may be a scalar shared by all views or one value per view.
    ``smoothed_l21`` makes the reported objective use
    ``sum_i sqrt(||w_i||^2 + eps)``, the quantity the reweighted W-step
    provably decreases; with it off the plain row-norm sum is reported.
    """

    alpha: Union[float, Sequence[float]] = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    k: int = 5
    eps: float = 1e-8
    max_iter: int = 100
    tol: float = 1e-5
    select_fraction: float = 0.4
    ablation: str = "full"
    seed: int = 0
    standardize: bool = True
    view_scale: bool = True
    smoothed_l21: bool = True
    check_steps: bool = True
    sylvester: SylvesterConfig = field(default_factory=SylvesterConfig)

    def __post_init__(self):
        alphas = self.alpha if np.ndim(self.alpha) else [self.alpha]
        if any(not (a > 0) for a in alphas):
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        for name in ("lam", "gamma", "eps", "tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not 0 < self.select_fraction <= 1:
            raise ParameterError(f"select_fraction must lie in (0, 1], got {self.select_fraction}")
        if self.ablation not in ABLATIONS:
            raise ParameterError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if isinstance(self.sylvester, dict):
            object.__setattr__(self, "sylvester", SylvesterConfig(**self.sylvester))
        if np.ndim(self.alpha):
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))

    def alpha_for(self, v: int, n_views: int) -> float:
        if np.ndim(self.alpha) == 0:
            return float(self.alpha)
        if len(self.alpha) != n_views:
            raise ParameterError(f"{len(self.alpha)} alpha values for {n_views} views")
        return float(self.alpha[v])

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(d["alpha"], tuple):
            d["alpha"] = list(d["alpha"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "sylvester" in d and isinstance(d["sylvester"], dict):
            d["sylvester"] = SylvesterConfig(**d["sylvester"])
        return cls(**d)


@dataclass
class ViewState:
    """Mutable per-view variables of the alternating scheme."""

    mask: np.ndarray
    observed: np.ndarray
    missing: np.ndarray
    Xt: np.ndarray
    W: np.ndarray
    D: np.ndarray  # diagonal entries only
    e: np.ndarray
    graph: _graph.SimilarityGraph
    L: np.ndarray
    alpha: float

    @property
    def n_missing(self) -> int:
        return self.missing.shape[0]

    def reassemble(self) -> None:
        self.Xt = assemble_view(self.mask, self.observed, self.missing)


@dataclass
class SolverState:
    views: List[ViewState]
    trace: List[float] = field(default_factory=list)
    iteration: int = 0


@dataclass
class SelectionResult:
    """Outcome of a run.

    ``rankings[v]`` lists all features of view ``v`` by decreasing score and
    ``selected[v]`` is its leading ``ceil(select_fraction * d_v)`` part.
    ``imputed[v]`` holds the recovered missing rows in original units.
    """

    rankings: List[List[int]]
    scores: List[List[float]]
    selected: List[List[int]]
    W: List[np.ndarray]
    sample_weights: List[np.ndarray]
    imputed: List[np.ndarray]
    missing_rows: List[List[int]]
    trace: List[float]
    iterations: int
    converged: bool
    config: SolverConfig
    mask: Optional[MaskSpec] = None
    graphs: List[np.ndarray] = field(default_factory=list, repr=False)

    def completed_views(self, dataset: MultiViewDataset) -> List[np.ndarray]:
        """Observed data with the recovered rows put back, original units."""
        out = []
        for v in range(dataset.n_views):
            X = np.array(dataset.views[v], copy=True)
            X[self.missing_rows[v]] = self.imputed[v]
            out.append(X)
        return out

    def to_dict(self) -> dict:
        return {
            "rankings": [[int(i) for i in r] for r in self.rankings],
            "scores": [[float(s) for s in r] for r in self.scores],
            "selected": [[int(i) for i in r] for r in self.selected],
            "objective_trace": [float(f) for f in self.trace],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "sample_weights": [[float(x) for x in e] for e in self.sample_weights],
            "imputed": [
                {"rows": [int(i) for i in rows], "values": np.asarray(X, dtype=float).tolist()}
                for rows, X in zip(self.missing_rows, self.imputed)
            ],
            "W": [np.asarray(W, dtype=float).tolist() for W in self.W],
            "config": self.config.to_dict(),
            "mask": None if self.mask is None else self.mask.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        imputed, missing_rows = [], []
        for entry in d["imputed"]:
            rows = [int(i) for i in entry["rows"]]
            vals = np.asarray(entry["values"], dtype=float)
            if not rows:
                vals = vals.reshape(0, -1) if vals.size else np.zeros((0, 0))
            missing_rows.append(rows)
            imputed.append(vals)
        return cls(
            rankings=[list(map(int, r)) for r in d["rankings"]],
            scores=[list(map(float, r)) for r in d["scores"]],
            selected=[list(map(int, r)) for r in d["selected"]],
            W=[np.asarray(W, dtype=float) for W in d["W"]],
            sample_weights=[np.asarray(e, dtype=float) for e in d["sample_weights"]],
            imputed=imputed,
            missing_rows=missing_rows,
            trace=[float(f) for f in d["objective_trace"]],
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            config=SolverConfig.from_dict(d["config"]),
            mask=None if d.get("mask") is None else MaskSpec.from_dict(d["mask"]),
        )


# --------------------------------------------------------------------------
# sub-updates


def update_W(Xt, e, L, D, alpha, lam) -> np.ndarray:
    """Minimiser of the reweighted W-subproblem.

    Solves ``(C + lam * D) W = alpha * X^T H X`` with
    ``C = alpha * X^T H X + X^T L X`` and ``H = diag(e)``; ``D`` may be given
    as its diagonal. The system matrix is symmetric positive definite.
    """
    Xt = np.asarray(Xt, dtype=float)
    e = np.asarray(e, dtype=float)
    L = getattr(L, "L", L)
    Dd = np.diag(D) if np.ndim(D) == 2 else np.asarray(D, dtype=float)
    XHX = Xt.T @ (e[:, None] * Xt)
    rhs = alpha * XHX
    M = alpha * XHX + Xt.T @ L @ Xt + lam * np.diag(Dd)
    M = 0.5 * (M + M.T)
    d = M.shape[0]
    try:
        return scipy.linalg.solve(M, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    jitter = 1e-10 * np.trace(M) / d
    try:
        return scipy.linalg.solve(M + jitter * np.eye(d), rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        cond = np.linalg.cond(M)
        raise NumericalError(f"W-update system is singular (condition number {cond:.3e})") from None


def update_D(W, eps) -> np.ndarray:
    """Diagonal of the reweighting matrix, ``1 / (2 sqrt(||w_i||^2 + eps))``."""
    W = np.asarray(W, dtype=float)
    return 1.0 / (2.0 * np.sqrt(np.einsum("ij,ij->i", W, W) + eps))


def reconstruction_residuals(Xt, W) -> np.ndarray:
    R = np.asarray(Xt) - np.asarray(Xt) @ np.asarray(W)
    return np.einsum("ij,ij->i", R, R)


def update_sample_weights(Xt, W, gamma) -> np.ndarray:
    """Half-quadratic weights ``e_i = (gamma / (gamma + r_i))^2``.

    ``r_i`` is the squared self-representation residual of sample ``i``; each
    ``e_i`` minimises ``e * r_i + gamma * (sqrt(e) - 1)^2`` exactly.
    """
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    r = reconstruction_residuals(Xt, W)
    return (gamma / (gamma + r)) ** 2


def missing_block_system(vs: ViewState, ridge: Optional[float] = None) -> SylvesterSystem:
    """Stationarity system of the objective in the missing rows of one view.

    With ``K`` selecting missing rows and ``J`` observed rows, ``H = diag(e)``
    and ``Q = (I - W)(I - W)^T``::

        (K^T L K) X (W W^T) + alpha (K^T H K) X Q
            = -(alpha (K^T H J) X_obs Q + (K^T L J) X_obs W W^T)

    ``H`` is diagonal, so the first right-hand term vanishes whenever the two
    row sets are disjoint; it is kept for fidelity to the general form.
    """
    mis = ~vs.mask
    W = vs.W
    d = W.shape[0]
    WWt = W @ W.T
    IW = np.eye(d) - W
    Q = IW @ IW.T
    A = vs.L[np.ix_(mis, mis)]
    P = vs.alpha * np.diag(vs.e[mis])
    # K^T H J is identically zero for diagonal H
    R = np.zeros((int(mis.sum()), d))
    F = -(vs.alpha * R @ Q + vs.L[np.ix_(mis, vs.mask)] @ vs.observed @ WWt)
    sym = lambda M: 0.5 * (M + M.T)  # noqa: E731
    r = default_ridge(F) if ridge is None else ridge
    return SylvesterSystem(sym(A), sym(WWt), P, sym(Q), F, r)


def update_missing_block(vs: ViewState, config: SolverConfig, view: int = 0) -> np.ndarray:
    """New missing rows for one view, warm-started from the current ones."""
    if vs.n_missing == 0:
        return vs.missing
    sc = config.sylvester
    system = missing_block_system(vs, sc.ridge)
    try:
        rep = solve_cg(system, tol=sc.tol, max_iter=sc.max_iter, x0=vs.missing)
    except NumericalError as exc:
        raise NumericalError(f"view {view}: {exc}") from exc
    if not rep.converged:
        log.debug("view %d: Sylvester CG stopped at residual %.3e", view, rep.residual)
    return rep.X


def update_graph(vs: ViewState, k: int, guarded: bool) -> _graph.SimilarityGraph:
    """Closed-form graph refresh, rowwise guarded against objective increase.

    Refreshing ``xi`` together with ``S`` can raise a row's contribution to the
    objective. When ``guarded``, such rows keep their previous ``(s_i, xi_i)``.
    """
    B = _graph.half_sq_distances(vs.Xt @ vs.W)
    fresh = _graph.similarity_from_distances(B, k)
    if not guarded:
        return fresh
    new_val = _graph.row_objective(B, fresh.S, fresh.xi)
    old_val = _graph.row_objective(B, vs.graph.S, vs.graph.xi)
    keep = new_val > old_val
    if not keep.any():
        return fresh
    S = np.where(keep[:, None], vs.graph.S, fresh.S)
    xi = np.where(keep, vs.graph.xi, fresh.xi)
    return _graph.SimilarityGraph(S, k, xi)


# --------------------------------------------------------------------------
# objective


def view_objective_terms(vs: ViewState, config: SolverConfig) -> dict:
    """Named contributions of one view to the objective."""
    Xt, W, e = vs.Xt, vs.W, vs.e
    r = reconstruction_residuals(Xt, W)
    Z = Xt @ W
    row_sq = np.einsum("ij,ij->i", W, W)
    l21 = np.sqrt(row_sq + config.eps).sum() if config.smoothed_l21 else np.sqrt(row_sq).sum()
    S = vs.graph.S
    return {
        "reconstruction": vs.alpha * float(e @ r),
        "weight_penalty": vs.alpha * config.gamma * float(np.sum((np.sqrt(e) - 1.0) ** 2)),
        "graph": float(np.sum(_graph.half_sq_distances(Z) * S)),
        "graph_regulariser": float(vs.graph.xi @ np.einsum("ij,ij->i", S, S)),
        "sparsity": config.lam * float(l21),
    }


def objective_value(state: SolverState, config: SolverConfig) -> float:
    total = 0.0
    for v, vs in enumerate(state.views):
        for name, val in view_objective_terms(vs, config).items():
            if not math.isfinite(val):
                raise NumericalError(f"view {v}: objective term {name!r} is not finite ({val})")
            total += val
    return total


# --------------------------------------------------------------------------
# driver


def rank_features(W, fraction: float = 1.0) -> List[int]:
    """Features by decreasing row norm of ``W``, ties to the lower index."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    W = np.asarray(W, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    order = np.argsort(-norms, kind="stable")
    h = int(math.ceil(fraction * W.shape[0] - 1e-9))
    return [int(i) for i in order[:max(h, 1)]]


def initialize(dataset: MultiViewDataset, config: SolverConfig) -> SolverState:
    """Initial state: ``D = I``, ``e = 1/n``, mean-filled gaps, k-NN graphs."""
    n = dataset.n_samples
    if not 1 <= config.k <= n - 1:
        raise ParameterError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {config.k}")
    fills = mean_initialize_missing(dataset)
    views = []
    for v in range(dataset.n_views):
        mask = np.array(dataset.masks[v])
        observed = np.array(dataset.observed(v))
        Xt = assemble_view(mask, observed, fills[v])
        g = _graph.initial_knn_graph(Xt, config.k)
        d = Xt.shape[1]
        e = np.ones(n) if config.ablation == "no_sample_weights" else np.full(n, 1.0 / n)
        views.append(
            ViewState(
                mask=mask,
                observed=observed,
                missing=fills[v],
                Xt=Xt,
                W=np.zeros((d, d)),
                D=np.ones(d),
                e=e,
                graph=g,
                L=_graph.laplacian(g).L,
                alpha=config.alpha_for(v, dataset.n_views),
            )
        )
    return SolverState(views)


def _relative_increase(before: float, after: float) -> float:
    return (after - before) / max(abs(before), 1.0)


def iterate(state: SolverState, config: SolverConfig) -> float:
    """One outer iteration over all views; returns the new objective value.

    With ``config.check_steps`` the objective is evaluated around every step
    after the first iteration and ``MonotonicityError`` names any step that
    raises it beyond the slack.
    """
    it = state.iteration + 1
    check = config.check_steps and it > 1
    current = objective_value(state, config) if check else None

    def checkpoint(step: int) -> None:
        nonlocal current
        if not check:
            return
        after = objective_value(state, config)
        if _relative_increase(current, after) > MONOTONE_SLACK:
            raise MonotonicityError(
                f"iteration {it}: {STEP_NAMES[step]} step raised the objective "
                f"from {current!r} to {after!r}",
                iteration=it, step=STEP_NAMES[step], before=current, after=after,
            )
        current = after

    for vs in state.views:
        vs.W = update_W(vs.Xt, vs.e, vs.L, vs.D, vs.alpha, config.lam)
    checkpoint(3)
    for vs in state.views:
        vs.D = update_D(vs.W, config.eps)
    if config.ablation != "no_imputation":
        for v, vs in enumerate(state.views):
            if vs.n_missing:
                vs.missing = update_missing_block(vs, config, v)
                vs.reassemble()
        checkpoint(5)
    for vs in state.views:
        vs.graph = update_graph(vs, config.k, guarded=it > 1)
        vs.L = _graph.laplacian(vs.graph).L
    checkpoint(6)
    if config.ablation != "no_sample_weights":
        for vs in state.views:
            vs.e = update_sample_weights(vs.Xt, vs.W, config.gamma)
        checkpoint(7)
    state.iteration = it
    return objective_value(state, config) if current is None else current


def run(
    dataset: MultiViewDataset,
    config: SolverConfig = SolverConfig(),
    *,
    mask: Optional[MaskSpec] = None,
    callback=None,
) -> SelectionResult:
    """Run the alternating scheme until the objective settles.

    Stops when ``|f_t - f_{t-1}| / max(|f_{t-1}|, 1) < config.tol`` or after
    ``config.max_iter`` iterations. ``callback(iteration, state)`` is invoked
    after every iteration.
    """
    work, stats = standardize(dataset, config.view_scale) if config.standardize else (dataset, None)
    state = initialize(work, config)
    converged = False
    for _ in range(config.max_iter):
        try:
            f = iterate(state, config)
        except MonotonicityError:
            raise
        except NumericalError as exc:
            raise NumericalError(f"iteration {state.iteration + 1}: {exc}") from exc
        it = state.iteration
        if state.trace:
            prev = state.trace[-1]
            if _relative_increase(prev, f) > MONOTONE_SLACK:
                raise MonotonicityError(
                    f"iteration {it}: objective rose from {prev!r} to {f!r}",
                    iteration=it, step="iteration", before=prev, after=f,
                )
            state.trace.append(f)
            if abs(f - prev) / max(abs(prev), 1.0) < config.tol:
                converged = True
        else:
            state.trace.append(f)
        if callback is not None:
            callback(it, state)
        if converged:
            break
    return _result(dataset, state, config, stats, converged, mask)


def _result(dataset, state, config, stats, converged, mask) -> SelectionResult:
    rankings, scores, selected, imputed, missing_rows = [], [], [], [], []
    for v, vs in enumerate(state.views):
        norms = np.sqrt(np.einsum("ij,ij->i", vs.W, vs.W))
        order = rank_features(vs.W, 1.0)
        rankings.append(order)
        scores.append([float(norms[i]) for i in order])
        selected.append(rank_features(vs.W, config.select_fraction))
        block = vs.missing
        if stats is not None:
            mu, sd = stats[v]
            block = block * sd + mu
        imputed.append(np.array(block))
        missing_rows.append([int(i) for i in np.flatnonzero(~vs.mask)])
    return SelectionResult(
        rankings=rankings,
        scores=scores,
        selected=selected,
        W=[np.array(vs.W) for vs in state.views],
        sample_weights=[np.array(vs.e) for vs in state.views],
        imputed=imputed,
        missing_rows=missing_rows,
        trace=list(state.trace),
        iterations=state.iteration,
        converged=converged,
        config=config,
        mask=mask,
        graphs=[np.array(vs.graph.S) for vs in state.views],
    )
