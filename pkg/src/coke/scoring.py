"""Graph reward: equal-variance BIC on complete rows minus an expert-edge penalty."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import Ordering, ordering_to_full_dag, prune_with_initial
from .initgraph import ExpertKnowledge

RSS_FLOOR = 1e-12
MAX_EXHAUSTIVE_VARS = 8


@dataclass(frozen=True)
class RewardConfig:
    penalty_weight: float = 1.0
    ridge: float = 1e-6

    def __post_init__(self):
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be >= 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    rss: float
    bic_term: float
    penalty: float
    reward: float
    edge_count: int


def fit_parent_regression(batch: np.ndarray, j: int, parents, ridge: float = 1e-6):
    """Least squares of column ``j`` on ``parents`` with an unpenalized intercept.

    Returns ``(coefficients, intercept, rss)``.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("regression needs at least 2 rows")
    parents = [int(p) for p in parents]
    y = x[:, j]
    ybar = y.mean()
    yc = y - ybar
    if not parents:
        return np.zeros(0), float(ybar), float(yc @ yc)
    xp = x[:, parents]
    xbar = xp.mean(axis=0)
    xc = xp - xbar
    a = xc.T @ xc + ridge * np.eye(len(parents))
    try:
        beta = np.linalg.solve(a, xc.T @ yc)
    except np.linalg.LinAlgError:
        beta = np.linalg.pinv(a) @ (xc.T @ yc)
    resid = yc - xc @ beta
    return beta, float(ybar - xbar @ beta), float(resid @ resid)


class GramBatch:
    """Centred cross-products of one complete batch, reused across graphs."""

    def __init__(self, batch: np.ndarray):
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("empty batch")
        self.x = x
        self.n, self.d = x.shape
        xc = x - x.mean(axis=0)
        self.cov = np.ascontiguousarray(xc.T @ xc)

    def per_variable_rss(self, adj: np.ndarray, ridge: float) -> np.ndarray:
        rss, failed = kernels.rss_from_gram(self.cov, np.ascontiguousarray(adj, dtype=bool), float(ridge))
        for j in np.flatnonzero(failed):
            rss[j] = fit_parent_regression(self.x, int(j), np.flatnonzero(adj[:, j]), ridge)[2]
        return rss


def expert_penalty(adj: np.ndarray, ek: Optional[ExpertKnowledge], weight: float) -> float:
    if ek is None or not ek.required or weight == 0.0:
        return 0.0
    missing = sum(1 for i, j in ek.required if not adj[i, j])
    return float(weight * missing)


def bic_reward(g, batch, ek: Optional[ExpertKnowledge] = None, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """reward = -(log(RSS/(n d)) + |E| log(n)/n) - penalty_weight * #missing required edges."""
    gram = batch if isinstance(batch, GramBatch) else GramBatch(batch)
    adj = np.asarray(g, dtype=bool)
    n, d = gram.n, gram.d
    rss = float(gram.per_variable_rss(adj, cfg.ridge).sum())
    edges = int(np.count_nonzero(adj))
    bic_term = math.log(max(rss, RSS_FLOOR) / (n * d)) + edges * math.log(n) / n
    penalty = expert_penalty(adj, ek, cfg.penalty_weight)
    return RewardBreakdown(rss, bic_term, penalty, -bic_term - penalty, edges)


def exhaustive_best_ordering(batch, g_k, ek=None, cfg: RewardConfig = RewardConfig()):
    """Best ordering by enumerating all d! permutations (lexicographic ties win)."""
    gram = batch if isinstance(batch, GramBatch) else GramBatch(batch)
    d = gram.d
    if d > MAX_EXHAUSTIVE_VARS:
        raise ValueError(f"exhaustive search limited to {MAX_EXHAUSTIVE_VARS} variables, got {d}")
    g_k = np.asarray(g_k, dtype=bool)
    best = None
    cache: dict[bytes, RewardBreakdown] = {}
    for perm in itertools.permutations(range(d)):
        adj = prune_with_initial(ordering_to_full_dag(perm), g_k)
        key = adj.tobytes()
        rb = cache.get(key)
        if rb is None:
            rb = cache[key] = bic_reward(adj, gram, ek, cfg)
        if best is None or rb.reward > best[1].reward:
            best = (perm, rb)
    return Ordering(best[0]), best[1]
