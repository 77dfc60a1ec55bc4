"""Domain types and the graph algebra linking orderings, DAGs and initial graphs.

Adjacency matrices are plain ``d x d`` boolean numpy arrays where entry
``(i, j)`` means the directed edge ``i -> j``. Column indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DataFormatError, StructuralInconsistencyError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def as_adjacency(adj, d: Optional[int] = None) -> np.ndarray:
    """Validate and return a boolean adjacency with an empty diagonal."""
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if d is not None and a.shape[0] != d:
        raise ValueError(f"adjacency has dimension {a.shape[0]}, expected {d}")
    a = a.astype(bool)
    if np.any(np.diagonal(a)):
        raise ValueError("adjacency has self-loops on the diagonal")
    return a


def edges_of(adj: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(adj)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def adjacency_from_edges(d: int, edges) -> np.ndarray:
    adj = np.zeros((d, d), dtype=bool)
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop {i}->{j}")
        adj[i, j] = True
    return adj


@dataclass(frozen=True)
class Dataset:
    """Recipe-structured sample matrix.

    ``values`` holds NaN exactly where ``observed`` is False, so missingness is
    explicit in the mask and never inferred from the float payload.
    """

    values: np.ndarray
    observed: np.ndarray
    recipe_of: np.ndarray
    recipe_ids: tuple[str, ...]
    machine_of: np.ndarray
    sensor_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        observed = np.asarray(self.observed, dtype=bool)
        recipe_of = np.asarray(self.recipe_of, dtype=np.int64)
        machine_of = np.asarray(self.machine_of, dtype=np.int64)
        if values.ndim != 2:
            raise DataFormatError("values must be a 2-d matrix")
        n, d = values.shape
        if observed.shape != values.shape:
            raise DataFormatError("observed mask shape differs from values")
        if recipe_of.shape != (n,):
            raise DataFormatError("recipe_of must have one entry per row")
        if machine_of.shape != (d,):
            raise DataFormatError("machine_of must have one entry per column")
        if len(self.sensor_names) != d:
            raise DataFormatError("sensor_names must have one entry per column")
        if len(set(self.sensor_names)) != d:
            raise DataFormatError("sensor names must be unique")
        if len(set(self.recipe_ids)) != len(self.recipe_ids):
            raise DataFormatError("recipe ids must be unique")
        if not np.all(np.isfinite(values[observed])):
            raise DataFormatError("observed cells must be finite reals")
        if not np.all(np.isnan(values[~observed])):
            raise DataFormatError("missing cells must hold NaN")
        if n and (recipe_of.min() < 0 or recipe_of.max() >= len(self.recipe_ids)):
            raise DataFormatError("row references a recipe not in the recipe table")
        if d and machine_of.min() < 0:
            raise DataFormatError("machine ids must be non-negative")
        if np.any(np.diff(machine_of) < 0):
            raise DataFormatError("machine_of must be nondecreasing in column order")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "observed", _frozen(observed))
        object.__setattr__(self, "recipe_of", _frozen(recipe_of))
        object.__setattr__(self, "machine_of", _frozen(machine_of))
        object.__setattr__(self, "recipe_ids", tuple(str(r) for r in self.recipe_ids))
        object.__setattr__(self, "sensor_names", tuple(str(s) for s in self.sensor_names))

    @classmethod
    def from_matrix(cls, values, recipe_labels: Sequence, machine_of, sensor_names=None):
        """Build from a float matrix with NaN for missing cells and raw recipe labels."""
        values = np.asarray(values, dtype=np.float64)
        ids: list[str] = []
        index: dict[str, int] = {}
        recipe_of = np.empty(len(recipe_labels), dtype=np.int64)
        for row, label in enumerate(recipe_labels):
            key = str(label)
            if key not in index:
                index[key] = len(ids)
                ids.append(key)
            recipe_of[row] = index[key]
        if sensor_names is None:
            sensor_names = [f"x{j}" for j in range(values.shape[1])]
        return cls(values, ~np.isnan(values), recipe_of, tuple(ids), machine_of, tuple(sensor_names))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def n_machines(self) -> int:
        return int(np.unique(self.machine_of).size)

    def missing_rate(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(1.0 - self.observed.mean())


@dataclass(frozen=True)
class Recipe:
    id: str
    index: int
    observed: tuple[int, ...]
    missing: tuple[int, ...]
    row_indices: np.ndarray
    is_full: bool = False

    @property
    def n_rows(self) -> int:
        return int(self.row_indices.size)

    @property
    def observed_mask(self) -> np.ndarray:
        d = len(self.observed) + len(self.missing)
        mask = np.zeros(d, dtype=bool)
        mask[list(self.observed)] = True
        return mask


def partition_by_recipe(dataset: Dataset) -> list[Recipe]:
    """Split rows by recipe, deriving each recipe's observed/missing columns.

    Recipes are returned in recipe-table order; ids without rows are skipped.
    Raises StructuralInconsistencyError when rows of one recipe disagree on
    their missingness pattern, or when more than one recipe observes every column.
    """
    d = dataset.n_vars
    recipes = []
    for idx, rid in enumerate(dataset.recipe_ids):
        rows = np.flatnonzero(dataset.recipe_of == idx)
        if rows.size == 0:
            continue
        block = dataset.observed[rows]
        pattern = block[0]
        disagree = np.flatnonzero(np.any(block != pattern, axis=0))
        if disagree.size:
            names = [dataset.sensor_names[j] for j in disagree]
            raise StructuralInconsistencyError(
                f"recipe {rid!r} has rows with inconsistent missingness in columns {names}"
            )
        obs = tuple(int(j) for j in np.flatnonzero(pattern))
        miss = tuple(int(j) for j in np.flatnonzero(~pattern))
        rows.setflags(write=False)
        recipes.append(Recipe(rid, idx, obs, miss, rows, is_full=len(obs) == d))
    full = [r.id for r in recipes if r.is_full]
    if len(full) > 1:
        raise StructuralInconsistencyError(f"more than one fully observed recipe: {full}")
    return recipes


def full_recipe(recipes: Sequence[Recipe]) -> Optional[Recipe]:
    for r in recipes:
        if r.is_full:
            return r
    return None


@dataclass(frozen=True)
class Ordering:
    perm: tuple[int, ...]
    step_logprobs: tuple[float, ...] = ()
    step_logits: Optional[tuple[np.ndarray, ...]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"not a permutation: {perm}")
        object.__setattr__(self, "perm", perm)
        lp = tuple(float(v) for v in self.step_logprobs)
        if lp and len(lp) != len(perm):
            raise ValueError("need one log-probability per step")
        if any(v > 0.0 for v in lp):
            raise ValueError("log-probabilities must be <= 0")
        object.__setattr__(self, "step_logprobs", lp)

    @property
    def logprob(self) -> float:
        return float(sum(self.step_logprobs))


@dataclass(frozen=True)
class CandidateGraph:
    adjacency: np.ndarray
    reward: float
    bic: float
    penalty: float
    ordering: Ordering
    iteration: int = -1

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.adjacency))


def ordering_to_full_dag(ordering) -> np.ndarray:
    """Complete DAG with an edge from every earlier element to every later one."""
    perm = ordering.perm if isinstance(ordering, Ordering) else ordering
    return kernels.full_dag_from_perm(np.asarray(perm, dtype=np.int64))


def prune_with_initial(full: np.ndarray, g_k: np.ndarray) -> np.ndarray:
    full = np.asarray(full, dtype=bool)
    g_k = np.asarray(g_k, dtype=bool)
    if full.shape != g_k.shape:
        raise ValueError(f"dimension mismatch: {full.shape} vs {g_k.shape}")
    return full & g_k


def is_acyclic(adj: np.ndarray) -> bool:
    return bool(kernels.is_acyclic(np.asarray(adj, dtype=bool)))


def machine_monotone(adj: np.ndarray, machine_of) -> bool:
    """True when every edge i->j has machine_of[i] <= machine_of[j]."""
    m = np.asarray(machine_of)
    bad = np.asarray(adj, dtype=bool) & (m[:, None] > m[None, :])
    return not bool(bad.any())
