"""Synthetic manufacturing benchmarks.

Sensors are laid out machine by machine; a sensor can only influence sensors
on the same machine recorded after it, or sensors on later machines. Data are
linear-Gaussian with each non-root taking the average of its parents as its
mean. Missingness comes from recipes that bypass whole machines.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Dataset, edges_of
from .errors import ConfigError

FULL_RECIPE_ID = "r_full"


@dataclass(frozen=True)
class GenConfig:
    p: int = 20
    k: int = 8
    samples: int = 10_000
    edge_density: Optional[float] = None
    noise_sigma: float = 1.0
    target_missing_rate: float = 0.8
    recipe_count: int = 10
    full_fraction: float = 0.01
    expert_edge_count: int = 10
    seed: int = 0
    root_mean_range: float = 2.0
    recipe_size_skew: float = 0.0

    def validate(self) -> "GenConfig":
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if not 1 <= self.k <= self.p:
            raise ConfigError("need 1 <= k <= p")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.edge_density is not None and not 0.0 <= self.edge_density <= 1.0:
            raise ConfigError("edge_density must lie in [0, 1]")
        if not self.noise_sigma > 0:
            raise ConfigError("noise_sigma must be > 0")
        if not 0.0 <= self.target_missing_rate < 1.0:
            raise ConfigError("target_missing_rate must lie in [0, 1)")
        if not 0.0 < self.full_fraction <= 1.0:
            raise ConfigError("full_fraction must lie in (0, 1]")
        if self.recipe_count < 1:
            raise ConfigError("recipe_count must be >= 1")
        if self.target_missing_rate > 0 and self.recipe_count < 2:
            raise ConfigError("a positive missing rate needs at least 2 recipes")
        if self.target_missing_rate > 1.0 - self.full_fraction:
            raise ConfigError(
                f"target missing rate {self.target_missing_rate} is infeasible with "
                f"{self.full_fraction:.0%} complete rows"
            )
        if self.expert_edge_count < 0:
            raise ConfigError("expert_edge_count must be >= 0")
        if self.recipe_size_skew < 0:
            raise ConfigError("recipe_size_skew must be >= 0")
        return self

    def density(self) -> float:
        """Edge keep-probability; defaults to roughly 2p expected edges."""
        if self.edge_density is not None:
            return float(self.edge_density)
        n_cand = int(candidate_edges(machine_assignment(self.p, self.k)).sum())
        return 1.0 if n_cand == 0 else min(1.0, 2.0 * self.p / n_cand)


@dataclass(frozen=True)
class GroundTruth:
    dag: np.ndarray
    machine_of: np.ndarray
    expert_required: tuple[tuple[int, int], ...]
    root_means: dict[int, float] = field(default_factory=dict)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return edges_of(self.dag)


def machine_assignment(p: int, k: int) -> np.ndarray:
    """Contiguous machine blocks with sizes differing by at most one (larger first)."""
    sizes = np.full(k, p // k)
    sizes[: p % k] += 1
    return np.repeat(np.arange(k), sizes)


def candidate_edges(machine_of: np.ndarray) -> np.ndarray:
    m = np.asarray(machine_of)
    d = m.size
    idx = np.arange(d)
    later_machine = m[:, None] < m[None, :]
    same_machine_after = (m[:, None] == m[None, :]) & (idx[:, None] < idx[None, :])
    return later_machine | same_machine_after


def _rng(cfg: GenConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, stream])


def generate_ground_truth(cfg: GenConfig) -> GroundTruth:
    cfg.validate()
    rng = _rng(cfg, 0)
    machine_of = machine_assignment(cfg.p, cfg.k)
    cand = candidate_edges(machine_of)
    keep = rng.random(cand.shape) < cfg.density()
    dag = cand & keep
    edges = edges_of(dag)
    n_exp = min(cfg.expert_edge_count, len(edges))
    picks = rng.choice(len(edges), size=n_exp, replace=False) if n_exp else []
    expert = tuple(sorted(edges[i] for i in picks))
    roots = np.flatnonzero(~dag.any(axis=0))
    means = rng.uniform(-cfg.root_mean_range, cfg.root_mean_range, size=roots.size)
    root_means = {int(r): float(mu) for r, mu in zip(roots, means)}
    return GroundTruth(dag, machine_of, expert, root_means)


def _topological(dag: np.ndarray) -> list[int]:
    d = dag.shape[0]
    indeg = dag.sum(axis=0)
    ready = sorted(int(j) for j in np.flatnonzero(indeg == 0))
    order = []
    indeg = indeg.copy()
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in np.flatnonzero(dag[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
        ready.sort()
    if len(order) != d:
        raise ValueError("ground-truth graph has a cycle")
    return order


def sensor_names(p: int) -> tuple[str, ...]:
    width = len(str(p - 1))
    return tuple(f"s{j:0{width}d}" for j in range(p))


def sample_complete_data(gt: GroundTruth, cfg: GenConfig) -> Dataset:
    """Linear-Gaussian samples; every variable shares the noise variance sigma^2."""
    rng = _rng(cfg, 1)
    d = gt.dag.shape[0]
    n = cfg.samples
    x = np.empty((n, d))
    noise = rng.normal(0.0, cfg.noise_sigma, size=(n, d))
    for j in _topological(gt.dag):
        parents = np.flatnonzero(gt.dag[:, j])
        if parents.size == 0:
            x[:, j] = gt.root_means[j] + noise[:, j]
        else:
            x[:, j] = x[:, parents].mean(axis=1) + noise[:, j]
    return Dataset(
        values=x,
        observed=np.ones_like(x, dtype=bool),
        recipe_of=np.zeros(n, dtype=np.int64),
        recipe_ids=(FULL_RECIPE_ID,),
        machine_of=gt.machine_of,
        sensor_names=sensor_names(d),
    )


def _recipe_sizes(n_rows: int, count: int, skew: float, rng) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    if skew > 0:
        w = rng.dirichlet(np.full(count, 1.0 / skew))
    else:
        w = np.full(count, 1.0 / count)
    sizes = np.floor(w * n_rows).astype(np.int64)
    rem = n_rows - sizes.sum()
    order = np.argsort(-(w * n_rows - sizes), kind="stable")
    sizes[order[:rem]] += 1
    return sizes


def _bypass_matrix(u: np.ndarray, q: float) -> np.ndarray:
    """Machines bypassed per recipe; each recipe bypasses at least one machine."""
    byp = u < q
    none = ~byp.any(axis=1)
    byp[none, np.argmin(u[none], axis=1)] = True
    return byp


def _realized_rate(byp, machine_size, rows, n_total, d) -> float:
    missing_per_recipe = byp.astype(np.int64) @ machine_size
    return float((missing_per_recipe * rows).sum() / (n_total * d))


def _expected_rate(q, machine_size, rows, n_total, d) -> float:
    k = machine_size.size
    # each machine drawn with prob q; when none is drawn one is forced uniformly
    per = q * machine_size.sum() + (1.0 - q) ** k * machine_size.mean()
    return float(per * rows.sum() / (n_total * d))


def _bisect(fn, target: float, iters: int = 60) -> tuple[float, float]:
    """Bracket ``fn(q) = target`` for nondecreasing ``fn`` on [0, 1]."""
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo, hi


@dataclass(frozen=True)
class MissingnessReport:
    q: float
    realized_rate: float
    recipe_rows: tuple[int, ...]
    bypassed: np.ndarray


MISSING_RATE_TOLERANCE = 0.02


def apply_recipe_missingness(data: Dataset, gt: GroundTruth, cfg: GenConfig):
    """Assign rows to recipes and blank the sensors of bypassed machines.

    Returns ``(dataset, report)``. Recipe ``r_full`` keeps every sensor; the
    other recipes bypass each machine with probability ``q``, tuned so the
    realized cell-missing fraction is close to the target.
    """
    cfg.validate()
    if not np.all(data.observed):
        raise ConfigError("apply_recipe_missingness expects complete data")
    n, d = data.values.shape
    rng = _rng(cfg, 2)
    if cfg.target_missing_rate == 0.0:
        rows = (n,)
        report = MissingnessReport(0.0, 0.0, rows, np.zeros((0, cfg.k), dtype=bool))
        return replace(data, recipe_ids=(FULL_RECIPE_ID,)), report

    n_full = int(round(cfg.full_fraction * n))
    n_full = min(max(n_full, 0), n)
    n_miss_recipes = cfg.recipe_count - 1
    sizes = _recipe_sizes(n - n_full, n_miss_recipes, cfg.recipe_size_skew, rng)
    machine_size = np.bincount(gt.machine_of, minlength=cfg.k).astype(np.int64)
    u = rng.random((n_miss_recipes, cfg.k))

    target = cfg.target_missing_rate
    q = 0.5 * sum(_bisect(lambda q: _expected_rate(q, machine_size, sizes, n, d), target))
    byp = _bypass_matrix(u, q)
    rate = _realized_rate(byp, machine_size, sizes, n, d)
    if abs(rate - target) > MISSING_RATE_TOLERANCE:
        # few recipes: tune against the realized draw instead of its expectation
        realized = lambda q: _realized_rate(_bypass_matrix(u, q), machine_size, sizes, n, d)
        lo, hi = _bisect(realized, target)
        q = lo if abs(realized(lo) - target) <= abs(realized(hi) - target) else hi
        byp = _bypass_matrix(u, q)
        rate = _realized_rate(byp, machine_size, sizes, n, d)

    perm = rng.permutation(n)
    recipe_of = np.empty(n, dtype=np.int64)
    recipe_of[perm[:n_full]] = 0
    start = n_full
    for r, size in enumerate(sizes, start=1):
        recipe_of[perm[start : start + size]] = r
        start += size

    observed = np.ones((n, d), dtype=bool)
    for r in range(n_miss_recipes):
        cols = np.isin(gt.machine_of, np.flatnonzero(byp[r]))
        rows = recipe_of == r + 1
        observed[np.ix_(rows, cols)] = False
    values = np.where(observed, data.values, np.nan)
    width = len(str(max(n_miss_recipes, 1)))
    ids = (FULL_RECIPE_ID,) + tuple(f"r{r:0{width}d}" for r in range(1, n_miss_recipes + 1))
    out = Dataset(values, observed, recipe_of, ids, data.machine_of, data.sensor_names)
    report = MissingnessReport(float(q), out.missing_rate(), (n_full,) + tuple(int(s) for s in sizes), byp)
    return out, report


@dataclass(frozen=True)
class Benchmark:
    config: GenConfig
    truth: GroundTruth
    data: Dataset
    report: MissingnessReport

    @property
    def expert_knowledge(self):
        from .initgraph import ExpertKnowledge

        return ExpertKnowledge(required=frozenset(self.truth.expert_required))


def generate_benchmark(cfg: GenConfig) -> Benchmark:
    gt = generate_ground_truth(cfg)
    complete = sample_complete_data(gt, cfg)
    data, report = apply_recipe_missingness(complete, gt, cfg)
    return Benchmark(cfg, gt, data, report)


def write_benchmark(directory, bench: Benchmark) -> dict:
    from . import formats

    return formats.write_benchmark(directory, bench)
