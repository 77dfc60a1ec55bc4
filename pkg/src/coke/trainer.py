"""Actor-critic search over variable orderings.

Each iteration resamples ``n`` rows per recipe, embeds the variables, samples
an ordering, prunes the ordering's complete DAG by the initial graph, scores
it, and takes one Adam step on the joint actor/critic loss.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import formats, nn
from .core import CandidateGraph, Dataset, Recipe, full_recipe, ordering_to_full_dag, partition_by_recipe, prune_with_initial
from .errors import ConfigError, DataFormatError, NumericalError
from .initgraph import ExpertKnowledge, InitialGraph, build_initial_graph
from .metrics import edge_confusion
from .scoring import GramBatch, RewardBreakdown, RewardConfig, bic_reward, expert_penalty

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    gamma: float = 0.95
    entropy_bonus: float = 0.0
    critic_weight: float = 0.5
    hidden: int = 64
    seed: int = 0
    use_chronology: bool = True
    use_expert: bool = True
    use_incomplete: bool = True
    top_m: Optional[int] = None
    pns_pairwise: bool = False
    strict_expert: bool = False
    miss_only: bool = False
    greedy_every: int = 0
    checkpoint_every: int = 0

    def validate(self) -> "TrainConfig":
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if self.top_m is not None and self.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        return self


@dataclass
class TraceRecord:
    iteration: int
    reward: float
    bic_term: float
    penalty: float
    edge_count: int
    theta_full: float
    theta_miss: float
    f1: Optional[float] = None


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    best_iteration: int = -1

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])

    def f1s(self) -> np.ndarray:
        return np.array([np.nan if r.f1 is None else r.f1 for r in self.records])


@dataclass(frozen=True)
class Batches:
    full: Optional[np.ndarray]
    miss: tuple
    score: Optional[np.ndarray] = None
    score_columns: Optional[np.ndarray] = None


def resample_batches(dataset: Dataset, recipes: Sequence[Recipe], n: int, rng, miss_only: bool = False) -> Batches:
    """Draw ``n`` rows without replacement from every recipe holding at least ``n``.

    Sampled rows are kept in dataset order so each input slot of the row projection
    sees a consistent position within its recipe. Recipes with fewer rows are
    skipped. The complete recipe is required unless
    ``miss_only`` is set, in which case the incomplete recipe observing the most
    columns supplies the scoring batch.
    """
    r_full = full_recipe(recipes)
    full = None
    if r_full is not None and r_full.n_rows >= n:
        rows = np.sort(rng.choice(r_full.row_indices, size=n, replace=False))
        full = dataset.values[rows]
    elif not miss_only:
        have = 0 if r_full is None else r_full.n_rows
        raise ConfigError(f"complete recipe has {have} rows but batch size is {n}")
    miss = []
    for r in recipes:
        if r.is_full or r.n_rows < n:
            continue
        rows = np.sort(rng.choice(r.row_indices, size=n, replace=False))
        miss.append(nn.RecipeBatch(dataset.values[rows], r.observed_mask, r.id))
    if full is not None:
        return Batches(full, tuple(miss))
    # miss-only fallback: score on the widest incomplete recipe's observed columns
    usable = [b for b in miss if b.observed.any()]
    if not usable:
        raise ConfigError("no recipe has enough rows to form a batch")
    widest = max(usable, key=lambda b: int(b.observed.sum()))
    cols = np.flatnonzero(widest.observed)
    return Batches(None, tuple(miss), widest.values[:, cols], cols)


class Adam:
    def __init__(self, params: nn.NetworkParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, grads: dict, frozen=()) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k in frozen:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            step = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            self.params.arrays[k] = self.params.arrays[k] - step


def update_baseline(b: float, reward: float, gamma: float) -> float:
    return gamma * b + (1.0 - gamma) * reward


@dataclass
class TrainResult:
    best: CandidateGraph
    trace: TrainTrace
    params: nn.NetworkParams
    initial_graph: InitialGraph
    greedy: list = field(default_factory=list)


class Trainer:
    """Holds everything one run mutates: parameters, optimizer, baseline, rng."""

    def __init__(
        self,
        dataset: Dataset,
        ek: Optional[ExpertKnowledge],
        cfg: TrainConfig,
        reward_cfg: RewardConfig = RewardConfig(),
        truth: Optional[np.ndarray] = None,
        initial_graph: Optional[InitialGraph] = None,
        checkpoint_path: Optional[Path] = None,
    ):
        self.cfg = cfg.validate()
        self.dataset = dataset
        self.recipes = partition_by_recipe(dataset)
        if full_recipe(self.recipes) is None and not cfg.miss_only:
            raise DataFormatError("dataset has no fully observed recipe; enable miss_only to run without it")
        ek = ek or ExpertKnowledge()
        self.ek = ek if cfg.use_expert else ExpertKnowledge()
        self.reward_cfg = reward_cfg if cfg.use_expert else replace(reward_cfg, penalty_weight=0.0)
        if initial_graph is None:
            initial_graph = build_initial_graph(
                dataset,
                self.ek,
                top_m=cfg.top_m,
                use_chronology=cfg.use_chronology,
                pns_pairwise=cfg.pns_pairwise,
                strict_expert=cfg.strict_expert,
            )
        self.initial_graph = initial_graph
        self.g_k = initial_graph.adjacency
        self.truth = None if truth is None else np.asarray(truth, dtype=bool)
        self.params = nn.NetworkParams.initialize(cfg.batch_size, cfg.hidden, cfg.seed)
        self.frozen: set[str] = set()
        if not cfg.use_incomplete:
            self.params.arrays["theta_miss"] = np.array(0.0)
            self.frozen.add("theta_miss")
        if cfg.miss_only:
            self.params.arrays["theta_full"] = np.array(0.0)
            self.frozen.add("theta_full")
        self.opt = Adam(self.params, cfg.learning_rate, cfg.beta1, cfg.beta2)
        self.rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 202])
        self.baseline = 0.0
        self.iteration = 0
        self.trace = TrainTrace()
        self.best: Optional[CandidateGraph] = None
        self.greedy: list[CandidateGraph] = []
        self.checkpoint_path = checkpoint_path

    # -- pieces of one step -----------------------------------------------------------
    def _score(self, adj: np.ndarray, batches: Batches, gram):
        if batches.full is not None:
            return bic_reward(adj, gram, self.ek, self.reward_cfg)
        cols = batches.score_columns
        sub = adj[np.ix_(cols, cols)]
        rb = bic_reward(sub, gram, None, self.reward_cfg)
        pen = expert_penalty(adj, self.ek, self.reward_cfg.penalty_weight)
        return RewardBreakdown(rb.rss, rb.bic_term, pen, -rb.bic_term - pen, rb.edge_count)

    def _candidate(self, ordering, batches, gram, iteration):
        adj = prune_with_initial(ordering_to_full_dag(ordering), self.g_k)
        rb = self._score(adj, batches, gram)
        return CandidateGraph(adj, rb.reward, rb.bic_term, rb.penalty, ordering, iteration), rb

    def _consider(self, cand: CandidateGraph) -> None:
        if self.best is None or cand.reward > self.best.reward:
            self.best = cand

    def step(self):
        """One actor-critic update. Returns ``(candidate, params, baseline)``."""
        cfg = self.cfg
        it = self.iteration
        batches = resample_batches(self.dataset, self.recipes, cfg.batch_size, self.rng, cfg.miss_only)
        gram = GramBatch(batches.full if batches.full is not None else batches.score)
        T = self.params.tensors()
        emb = nn.embed(batches.full, batches.miss, self.g_k, T, use_incomplete=cfg.use_incomplete)
        theta_full = float(self.params["theta_full"])
        theta_miss = float(self.params["theta_miss"])

        if not np.all(np.isfinite(emb.z.data)):
            self._abort("non-finite embeddings")
        try:
            ordering = nn.generate_ordering(emb.z.data, self.params.arrays, "sample", self.rng)
        except NumericalError as exc:
            self._abort(str(exc))
        cand, rb = self._candidate(ordering, batches, gram, it)

        if cfg.greedy_every and it % cfg.greedy_every == 0:
            g_ord = nn.generate_ordering(emb.z.data, self.params.arrays, "greedy")
            g_cand, _ = self._candidate(g_ord, batches, gram, it)
            self.greedy.append(g_cand)
            self._consider(g_cand)

        reward = rb.reward
        self.baseline = update_baseline(self.baseline, reward, cfg.gamma)
        value = nn.critic_value(emb.z, T)
        advantage = reward - self.baseline - float(value.data)
        if cfg.entropy_bonus:
            logp, ent = nn.ordering_log_prob(emb.z, ordering.perm, T, entropy=True)
        else:
            logp, ent = nn.ordering_log_prob(emb.z, ordering.perm, T), None
        td = (reward - self.baseline) - value
        loss = logp * (-advantage) + (td * td) * cfg.critic_weight
        if ent is not None:
            loss = loss - ent * cfg.entropy_bonus
        if not np.isfinite(loss.data).all():
            self._abort("non-finite loss", rb)
        grads = nn.gradients(loss, T)
        for k in self.frozen:
            grads[k] = np.zeros_like(grads[k])
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            self._abort("non-finite gradient", rb)
        self.opt.step(grads, frozen=self.frozen)
        if not self.params.all_finite():
            self._abort("non-finite parameters after update", rb)

        f1 = None if self.truth is None else edge_confusion(cand.adjacency, self.truth).f1
        self.trace.records.append(
            TraceRecord(it, reward, rb.bic_term, rb.penalty, rb.edge_count, theta_full, theta_miss, f1)
        )
        self._consider(cand)
        self.trace.best_iteration = self.best.iteration
        self.iteration += 1
        if cfg.checkpoint_every and self.checkpoint_path and self.iteration % cfg.checkpoint_every == 0:
            formats.save_params(self.checkpoint_path, self.params)
        return cand, self.params, self.baseline

    def _abort(self, what: str, rb: Optional[RewardBreakdown] = None) -> None:
        bad = [k for k, v in self.params.arrays.items() if not np.all(np.isfinite(v))]
        scores = "" if rb is None else f"reward={rb.reward!r} bic={rb.bic_term!r} penalty={rb.penalty!r} "
        raise NumericalError(
            f"{what} at iteration {self.iteration}: {scores}baseline={self.baseline!r} non-finite params={bad}"
        )

    def run(self, iterations: Optional[int] = None) -> TrainResult:
        total = self.cfg.iterations if iterations is None else iterations
        for _ in range(total):
            self.step()
            if self.iteration % 100 == 0:
                last = self.trace.records[-1]
                log.debug("iter %d reward %.4f best %.4f", last.iteration, last.reward, self.best.reward)
        return TrainResult(self.best, self.trace, self.params, self.initial_graph, self.greedy)


def train_step(trainer: Trainer):
    return trainer.step()


def train(
    dataset: Dataset,
    ek: Optional[ExpertKnowledge],
    cfg: TrainConfig,
    reward_cfg: RewardConfig = RewardConfig(),
    truth: Optional[np.ndarray] = None,
    checkpoint_path: Optional[Path] = None,
) -> TrainResult:
    return Trainer(dataset, ek, cfg, reward_cfg, truth, checkpoint_path=checkpoint_path).run()
