"""Initial candidate graph: chronological pruning, neighbour selection, expert edits."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Dataset, as_adjacency, full_recipe, partition_by_recipe
from .errors import ConfigError

CHRONOLOGY = "chronology"
PNS = "pns"
EXPERT = "expert"


@dataclass(frozen=True)
class ExpertKnowledge:
    required: frozenset = field(default_factory=frozenset)
    forbidden: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        req = frozenset((int(i), int(j)) for i, j in self.required)
        forb = frozenset((int(i), int(j)) for i, j in self.forbidden)
        clash = req & forb
        if clash:
            raise ConfigError(f"edges both required and forbidden: {sorted(clash)}")
        object.__setattr__(self, "required", req)
        object.__setattr__(self, "forbidden", forb)

    def check_range(self, d: int) -> None:
        for i, j in self.required | self.forbidden:
            if not (0 <= i < d and 0 <= j < d) or i == j:
                raise ConfigError(f"expert edge {i}->{j} out of range for {d} variables")

    def required_mask(self, d: int) -> np.ndarray:
        mask = np.zeros((d, d), dtype=bool)
        for i, j in self.required:
            mask[i, j] = True
        return mask

    def __bool__(self):
        return bool(self.required or self.forbidden)


@dataclass(frozen=True)
class InitialGraph:
    adjacency: np.ndarray
    provenance: dict = field(default_factory=dict)
    pns_scores: Optional[np.ndarray] = None

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.adjacency))


def chronological_prune(machine_of) -> np.ndarray:
    """Keep i->j iff machine_of[i] <= machine_of[j]."""
    m = np.asarray(machine_of)
    adj = m[:, None] <= m[None, :]
    np.fill_diagonal(adj, False)
    return adj


def complete_digraph(d: int) -> np.ndarray:
    adj = np.ones((d, d), dtype=bool)
    np.fill_diagonal(adj, False)
    return adj


def abs_correlation(rows: np.ndarray) -> np.ndarray:
    """|Pearson| between columns; constant columns score 0 against everything."""
    x = np.asarray(rows, dtype=np.float64)
    xc = x - x.mean(axis=0)
    sd = np.sqrt((xc * xc).sum(axis=0))
    ok = sd > 1e-12 * max(1.0, float(np.abs(x).max(initial=0.0)))
    z = np.zeros_like(xc)
    z[:, ok] = xc[:, ok] / sd[ok]
    corr = np.abs(z.T @ z)
    np.fill_diagonal(corr, 0.0)
    return corr


def pairwise_abs_correlation(values: np.ndarray, observed: np.ndarray, min_pairs: int = 3) -> np.ndarray:
    """|Pearson| per pair over rows where both columns are observed."""
    d = values.shape[1]
    out = np.zeros((d, d))
    x = np.where(observed, values, 0.0)
    for a in range(d):
        for b in range(a + 1, d):
            rows = observed[:, a] & observed[:, b]
            if rows.sum() < min_pairs:
                continue
            out[a, b] = out[b, a] = abs_correlation(x[np.ix_(rows, [a, b])])[0, 1]
    return out


def preliminary_neighbor_selection(
    adj: np.ndarray,
    complete_rows: Optional[np.ndarray],
    top_m: int,
    scorer: Callable[[np.ndarray], np.ndarray] = abs_correlation,
    scores: Optional[np.ndarray] = None,
):
    """Keep, for every target, only its ``top_m`` best-scoring current parents.

    Returns ``(adjacency, scores)``. Ties go to the lower column index. When no
    usable complete rows exist (and no precomputed ``scores``) the graph is
    returned unchanged with a warning.
    """
    adj = np.asarray(adj, dtype=bool)
    d = adj.shape[0]
    if top_m < 1:
        raise ConfigError("top_m must be >= 1")
    if scores is None:
        if complete_rows is None or len(complete_rows) < 2:
            warnings.warn("no complete rows available; preliminary neighbour selection skipped")
            return adj.copy(), None
        scores = scorer(np.asarray(complete_rows))
    out = np.zeros_like(adj)
    for j in range(d):
        cand = np.flatnonzero(adj[:, j])
        if cand.size <= top_m:
            out[cand, j] = True
            continue
        # stable sort on -score keeps lower indices first among ties
        order = np.argsort(-scores[cand, j], kind="stable")
        out[cand[order[:top_m]], j] = True
    return out, scores


def apply_expert_knowledge(adj: np.ndarray, ek: ExpertKnowledge, provenance=None) -> InitialGraph:
    adj = as_adjacency(adj).copy()
    ek.check_range(adj.shape[0])
    prov = dict(provenance or {})
    for i, j in sorted(ek.required):
        if not adj[i, j]:
            adj[i, j] = True
            prov[(i, j)] = EXPERT
    for i, j in sorted(ek.forbidden):
        if adj[i, j]:
            adj[i, j] = False
            prov[(i, j)] = EXPERT
    return InitialGraph(adj, prov)


def _record_removed(prov: dict, before: np.ndarray, after: np.ndarray, tag: str) -> None:
    for i, j in zip(*np.nonzero(before & ~after)):
        prov[(int(i), int(j))] = tag


def default_top_m(d: int) -> int:
    return max(1, min(20, d - 1))


def build_initial_graph(
    dataset: Dataset,
    ek: Optional[ExpertKnowledge] = None,
    top_m: Optional[int] = None,
    use_chronology: bool = True,
    use_pns: bool = True,
    pns_pairwise: bool = False,
    strict_expert: bool = False,
) -> InitialGraph:
    """Full pipeline producing the candidate-edge graph every ordering is pruned by."""
    d = dataset.n_vars
    ek = ek or ExpertKnowledge()
    ek.check_range(d)
    prov: dict = {}
    base = complete_digraph(d)
    adj = chronological_prune(dataset.machine_of) if use_chronology else base
    _record_removed(prov, base, adj, CHRONOLOGY)

    if strict_expert and use_chronology:
        bad = sorted(e for e in ek.required if not adj[e])
        if bad:
            raise ConfigError(f"required edges contradict chronological order: {bad}")

    scores = None
    if use_pns:
        m = default_top_m(d) if top_m is None else top_m
        if pns_pairwise:
            pre = pairwise_abs_correlation(dataset.values, dataset.observed)
            pruned, scores = preliminary_neighbor_selection(adj, None, m, scores=pre)
        else:
            r_full = full_recipe(partition_by_recipe(dataset))
            rows = None if r_full is None else dataset.values[r_full.row_indices]
            pruned, scores = preliminary_neighbor_selection(adj, rows, m)
        _record_removed(prov, adj, pruned, PNS)
        adj = pruned

    g = apply_expert_knowledge(adj, ek, prov)
    return InitialGraph(g.adjacency, g.provenance, scores)
