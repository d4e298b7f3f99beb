"""Multi-view datasets, incomplete-view simulation and indicator matrices."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._random import substream
from .errors import DataError, MaskError, ParameterError

MAX_RATIO = 0.9
MASK_RETRIES = 1000


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """Row-aligned views of the same ``n`` samples.

    Attributes:
        views: one ``(n, d_v)`` float array per view. Rows of unobserved samples
            are NaN and must never be read as data.
        masks: one boolean vector of length ``n`` per view, True = observed.
        labels: optional integer class labels, used only for evaluation.
        names: optional per-view identifiers.
    """

    views: tuple
    masks: tuple
    labels: Optional[np.ndarray] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        if len(self.views) == 0:
            raise DataError("a dataset needs at least one view")
        views = []
        for v, X in enumerate(self.views):
            X = np.asarray(X, dtype=float)
            if X.ndim != 2 or X.shape[1] < 1:
                raise DataError(f"view {v}: expected an (n, d) matrix with d >= 1, got shape {X.shape}")
            views.append(X)
        n = views[0].shape[0]
        for v, X in enumerate(views):
            if X.shape[0] != n:
                raise DataError(f"view {v} has {X.shape[0]} rows, view 0 has {n}")
        if len(self.masks) != len(views):
            raise DataError(f"{len(self.masks)} masks for {len(views)} views")
        masks = []
        for v, (X, m) in enumerate(zip(views, self.masks)):
            m = np.asarray(m, dtype=bool)
            if m.shape != (n,):
                raise DataError(f"mask {v} has shape {m.shape}, expected ({n},)")
            if not m.any():
                raise DataError(f"view {v} has no observed samples")
            if not np.all(np.isfinite(X[m])):
                bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1) & m)[0])
                raise DataError(f"view {v}: observed sample {bad} has missing or non-finite values")
            masks.append(m)
        covered = np.any(np.stack(masks), axis=0)
        if not covered.all():
            raise DataError(
                f"sample {int(np.flatnonzero(~covered)[0])} is unobserved in every view"
            )
        views = [np.where(m[:, None], X, np.nan) for X, m in zip(views, masks)]
        object.__setattr__(self, "views", tuple(_frozen(X) for X in views))
        object.__setattr__(self, "masks", tuple(_frozen(m) for m in masks))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DataError(f"labels have shape {labels.shape}, expected ({n},)")
            if not np.issubdtype(labels.dtype, np.integer):
                if not np.all(np.equal(np.mod(labels, 1), 0)):
                    raise DataError("labels must be integers")
                labels = labels.astype(np.int64)
            object.__setattr__(self, "labels", _frozen(labels))
        if self.names is not None:
            if len(self.names) != len(views):
                raise DataError(f"{len(self.names)} view names for {len(views)} views")
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))

    @classmethod
    def complete(cls, views, labels=None, names=None) -> "MultiViewDataset":
        """Dataset with every sample observed in every view."""
        views = [np.asarray(X, dtype=float) for X in views]
        masks = [np.ones(X.shape[0], dtype=bool) for X in views]
        return cls(tuple(views), tuple(masks), labels, None if names is None else tuple(names))

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [X.shape[1] for X in self.views]

    def is_complete(self) -> bool:
        return all(m.all() for m in self.masks)

    def observed(self, v: int) -> np.ndarray:
        """Observed rows of view ``v`` in ascending sample order."""
        return self.views[v][self.masks[v]]

    def view_name(self, v: int) -> str:
        return self.names[v] if self.names is not None else f"view{v}"


@dataclass(frozen=True)
class IndicatorPair:
    """0/1 maps placing observed and missing rows back into an ``n``-row view."""

    observed_map: np.ndarray
    missing_map: np.ndarray
    observed_rows: np.ndarray
    missing_rows: np.ndarray

    def assemble(self, observed_block: np.ndarray, missing_block: np.ndarray) -> np.ndarray:
        return self.observed_map @ observed_block + self.missing_map @ missing_block


@dataclass(frozen=True)
class MaskSpec:
    ratio: float
    seed: int
    missing: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "missing": [[int(i) for i in rows] for rows in self.missing],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaskSpec":
        return cls(float(d["ratio"]), int(d["seed"]), tuple(tuple(int(i) for i in r) for r in d["missing"]))


def build_indicators(mask) -> IndicatorPair:
    """Indicator matrices for one view's observation mask.

    Observed and missing slots follow ascending sample index, so
    ``observed_map @ X[mask] + missing_map @ X_missing`` rebuilds the view.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 1:
        raise DataError(f"mask must be a vector, got shape {mask.shape}")
    if not mask.any():
        raise DataError("mask has no observed samples")
    n = mask.size
    obs = np.flatnonzero(mask)
    mis = np.flatnonzero(~mask)
    K_obs = np.zeros((n, obs.size))
    K_obs[obs, np.arange(obs.size)] = 1.0
    K_mis = np.zeros((n, mis.size))
    K_mis[mis, np.arange(mis.size)] = 1.0
    return IndicatorPair(K_obs, K_mis, obs, mis)


def assemble_view(mask, observed_block: np.ndarray, missing_block: np.ndarray) -> np.ndarray:
    """Index-based equivalent of ``IndicatorPair.assemble``.

    Observed rows are copied verbatim, never recomputed through a product.
    """
    mask = np.asarray(mask, dtype=bool)
    out = np.empty((mask.size, observed_block.shape[1]))
    out[mask] = observed_block
    out[~mask] = missing_block
    return out


def mean_initialize_missing(dataset: MultiViewDataset) -> list:
    """Fill each view's missing rows with the column means of its observed rows."""
    blocks = []
    for v in range(dataset.n_views):
        mu = dataset.observed(v).mean(axis=0)
        m = int((~dataset.masks[v]).sum())
        blocks.append(np.tile(mu, (m, 1)))
    return blocks


def standardize(dataset: MultiViewDataset, view_scale: bool = True):
    """Z-score every feature using observed rows only.

    Constant features are centred but not rescaled. With ``view_scale`` each
    view is further divided by ``sqrt(d_v)`` so that the average squared row
    norm is one whatever the view's width. Returns the transformed dataset and
    the per-view ``(mean, scale)`` pairs needed to map back.
    """
    views, stats = [], []
    for v in range(dataset.n_views):
        obs = dataset.observed(v)
        mu = obs.mean(axis=0)
        sd = obs.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        if view_scale:
            sd = sd * np.sqrt(obs.shape[1])
        views.append((dataset.views[v] - mu) / sd)
        stats.append((mu, sd))
    return MultiViewDataset(tuple(views), dataset.masks, dataset.labels, dataset.names), stats


def apply_mask(dataset: MultiViewDataset, ratio: float, seed: int):
    """Remove ``floor(n * ratio)`` random samples from every view.

    Each view is masked independently. Draws are repeated until every sample
    keeps at least one observed view; ``MaskError`` is raised when that fails
    ``MASK_RETRIES`` times. The draw depends only on ``(ratio, seed)`` and the
    dataset shape.
    """
    ratio = float(ratio)
    if not 0.0 <= ratio <= MAX_RATIO:
        raise ParameterError(f"missing ratio must lie in [0, {MAX_RATIO}], got {ratio}")
    if not dataset.is_complete():
        raise DataError("apply_mask expects a complete dataset")
    n, V = dataset.n_samples, dataset.n_views
    m = int(math.floor(n * ratio + 1e-9))
    if m == 0:
        return dataset, MaskSpec(ratio, int(seed), tuple(() for _ in range(V)))
    rng = substream(seed, "mask")
    for _ in range(MASK_RETRIES):
        missing = [np.sort(rng.choice(n, size=m, replace=False)) for _ in range(V)]
        count = np.zeros(n, dtype=int)
        for rows in missing:
            count[rows] += 1
        if count.max() < V:
            break
    else:
        raise MaskError(
            f"could not mask {m} of {n} samples in each of {V} views while keeping every "
            f"sample observed somewhere ({MASK_RETRIES} draws)"
        )
    masks = []
    for rows in missing:
        mk = np.ones(n, dtype=bool)
        mk[rows] = False
        masks.append(mk)
    masked = MultiViewDataset(dataset.views, tuple(masks), dataset.labels, dataset.names)
    spec = MaskSpec(ratio, int(seed), tuple(tuple(int(i) for i in rows) for rows in missing))
    return masked, spec


def with_missing(dataset: MultiViewDataset, missing: Sequence[Sequence[int]]) -> MultiViewDataset:
    """Return ``dataset`` with the listed samples marked missing per view."""
    masks = []
    for v, rows in enumerate(missing):
        mk = np.array(dataset.masks[v], copy=True)
        rows = np.asarray(rows, dtype=int)
        if rows.size and (rows.min() < 0 or rows.max() >= dataset.n_samples):
            raise DataError(f"view {v}: missing index out of range")
        mk[rows] = False
        masks.append(mk)
    return MultiViewDataset(dataset.views, tuple(masks), dataset.labels, dataset.names)


# --------------------------------------------------------------------------
# file formats


def read_matrix_csv(path) -> np.ndarray:
    """Read a header-less numeric CSV; empty rows (all cells blank) become NaN.

    Lines starting with ``#`` are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    rows, width = [], None
    with path.open(newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or cells[0].startswith("#"):
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(f"{path}, row {lineno}: {len(cells)} cells, expected {width}")
            blank = [c.strip() == "" for c in cells]
            if all(blank):
                rows.append([math.nan] * width)
                continue
            if any(blank):
                raise DataError(f"{path}, row {lineno}: partially empty row (a row must be empty or full)")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise DataError(f"{path}, row {lineno}: non-numeric cell {bad!r}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    return np.asarray(rows, dtype=float)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_matrix_csv(path, X: np.ndarray, header: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(X, dtype=float):
            if np.all(np.isnan(row)):
                w.writerow([""] * row.size)
            else:
                w.writerow([repr(float(x)) for x in row])


def read_labels_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    out = []
    with path.open(newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or cells[0].startswith("#") or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != 1:
                raise DataError(f"{path}, row {lineno}: expected a single label column")
            try:
                out.append(int(cells[0]))
            except ValueError:
                raise DataError(f"{path}, row {lineno}: non-integer label {cells[0]!r}") from None
    return np.asarray(out, dtype=np.int64)


def read_mask_csv(path, n_views: int, n: int) -> list:
    """Parse ``view_index,sample_index`` rows into per-view missing index lists."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    missing = [[] for _ in range(n_views)]
    with path.open(newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or cells[0].startswith("#") or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != 2:
                raise DataError(f"{path}, row {lineno}: expected view_index,sample_index")
            try:
                v, i = int(cells[0]), int(cells[1])
            except ValueError:
                raise DataError(f"{path}, row {lineno}: non-integer index") from None
            if not (0 <= v < n_views and 0 <= i < n):
                raise DataError(f"{path}, row {lineno}: index ({v}, {i}) out of range")
            missing[v].append(i)
    return missing


def write_mask_csv(path, missing: Sequence[Sequence[int]], header: Optional[str] = None) -> None:
    with Path(path).open("w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        for v, rows in enumerate(missing):
            for i in rows:
                w.writerow([v, int(i)])


def load_dataset(manifest_path) -> MultiViewDataset:
    """Load a dataset described by a JSON manifest.

    Paths inside the manifest are resolved relative to the manifest's folder.
    Missing samples may be given as empty CSV rows, through a mask file, or both.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"{manifest_path}: manifest not found")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("views"), list) or not doc["views"]:
        raise DataError(f"{manifest_path}: manifest needs a non-empty 'views' list")
    unknown = set(doc) - {"views", "labels", "mask"}
    if unknown:
        raise DataError(f"{manifest_path}: unknown manifest keys {sorted(unknown)}")
    base = manifest_path.parent
    views, names = [], []
    for v, entry in enumerate(doc["views"]):
        if not isinstance(entry, dict) or "path" not in entry:
            raise DataError(f"{manifest_path}: view entry {v} needs a 'path'")
        views.append(read_matrix_csv(base / entry["path"]))
        names.append(str(entry.get("name", f"view{v}")))
    n = views[0].shape[0]
    for v, X in enumerate(views):
        if X.shape[0] != n:
            raise DataError(
                f"{base / doc['views'][v]['path']}: {X.shape[0]} rows, but "
                f"{base / doc['views'][0]['path']} has {n}"
            )
    masks = [~np.all(np.isnan(X), axis=1) for X in views]
    if doc.get("mask"):
        for v, rows in enumerate(read_mask_csv(base / doc["mask"], len(views), n)):
            masks[v][rows] = False
    labels = None
    if doc.get("labels"):
        labels = read_labels_csv(base / doc["labels"])
        if labels.size != n:
            raise DataError(f"{base / doc['labels']}: {labels.size} labels for {n} samples")
    return MultiViewDataset(tuple(views), tuple(masks), labels, tuple(names))


def save_dataset(
    dataset: MultiViewDataset, directory, *, write_mask: bool = True, header: Optional[str] = None
) -> Path:
    """Write views, labels and mask next to a manifest; returns the manifest path.

    Missing rows are written as empty CSV rows as well as listed in the mask file.
    ``header`` becomes a leading ``#`` comment line of every CSV file.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in range(dataset.n_views):
        fname = f"view{v}.csv"
        write_matrix_csv(directory / fname, dataset.views[v], header=header)
        entries.append({"name": dataset.view_name(v), "path": fname})
    doc = {"views": entries, "labels": None, "mask": None}
    if dataset.labels is not None:
        with (directory / "labels.csv").open("w") as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.writelines(f"{int(y)}\n" for y in dataset.labels)
        doc["labels"] = "labels.csv"
    if write_mask and not dataset.is_complete():
        write_mask_csv(directory / "mask.csv", [np.flatnonzero(~m) for m in dataset.masks], header=header)
        doc["mask"] = "mask.csv"
    path = directory / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path
